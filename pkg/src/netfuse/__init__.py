"""netfuse: learn weights that fuse nested-proximity multiplex network
time series into one weighted network per step, and find statistically
persistent node relationships under a random-community null."""

from .graphs import (
    FusionWeights,
    MultiplexSeries,
    MultiplexSnapshot,
    NodeRegistry,
    WeightedGraph,
    active_nodes,
    coexist_restrict,
    cosine_similarity_matrix,
    fuse,
    load_series,
    normalized_degrees,
    save_series,
)
from .fusion import (
    FitConfig,
    FitResult,
    FreeParams,
    LossWeights,
    SplitSpec,
    baseline_fuse,
    baseline_weights,
    fit,
    init_grid,
    loss_deg,
    loss_reg,
    loss_sim,
    reparam_to_constrained,
    reparam_to_free,
    select_best,
    total_loss,
)
from .community import Partition, PartitionSeries, detect, modularity
from .simstats import (
    BernoulliSeq,
    PairTestResult,
    Pmf,
    bonferroni_select,
    compute_pair_tests,
    count_dist,
    longest_run_dist,
    maximal_cliques,
    p_value,
    pair_sequences,
    same_community_prob,
    similarity_graph,
)
from .synth import SynthConfig, generate
from .netstats import NetworkStats, network_stats
from .ingest import (
    DailyTypeCounts,
    ObservationRecord,
    aggregate_period,
    classify_pair_type,
    daily_counts,
    parse_observations,
)
from .errors import PipelineError, ValidationError

__version__ = "0.1.0"
