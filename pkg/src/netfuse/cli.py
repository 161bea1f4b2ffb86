"""Command-line interface and pipeline orchestration.

Subcommands: ingest, synth, fit, baseline, fuse, communities,
similarity, cliques, stats, pipeline. Exit codes: 0 success,
1 validation error, 2 runtime error.

All emitted numbers carry at most 12 significant digits; CSV files use
'.' as the decimal separator, UTF-8, and LF line endings, so repeated
runs with the same seeds produce byte-identical artifacts.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import community as community_mod
from . import fusion, ingest, netstats, simstats, synth
from .errors import PipelineError, ValidationError
from .graphs import (
    FusionWeights,
    MultiplexSeries,
    NodeRegistry,
    WeightedGraph,
    fuse as fuse_snapshot,
    load_series,
    save_series,
)


# --- formatting and small I/O helpers ---------------------------------------


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_round_floats(payload), fh, separators=(",", ":"))
        fh.write("\n")


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON in {path}: {exc}") from None


def _read_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"malformed TOML in {path}: {exc}") from None


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


# --- graph / weights / partition (de)serialization --------------------------


def _graphs_to_dict(labeled_graphs: list[tuple[object, WeightedGraph]]) -> dict:
    registry = labeled_graphs[0][1].registry
    return {
        "nodes": list(registry.labels),
        "graphs": [
            {
                "t": t,
                "edges": [
                    [registry.label_of(i), registry.label_of(j), w]
                    for i, j, w in g.edges()
                ],
            }
            for t, g in labeled_graphs
        ],
    }


def _graphs_from_dict(data: dict) -> list[tuple[object, WeightedGraph]]:
    try:
        registry = NodeRegistry.from_labels(data["nodes"])
        out = []
        for rec in data["graphs"]:
            g = WeightedGraph.from_label_edges(
                registry, [(str(u), str(v), float(w)) for u, v, w in rec["edges"]]
            )
            out.append((rec["t"], g))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed graphs document: {exc}") from exc
    return out


def _weights_to_dict(weights: FusionWeights) -> dict:
    return {
        "w": list(weights.w),
        "w_add": weights.w_add,
        "W": [float(x) for x in weights.cumulative()],
    }


def _weights_from_file(path) -> FusionWeights:
    data = _read_json(path)
    if "runs" in data:
        run = data["runs"][data["selected"]]
        return FusionWeights(tuple(run["w"]), float(run["w_add"]))
    try:
        return FusionWeights(tuple(data["w"]), float(data["w_add"]))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed weights document: {exc}") from exc


def _partitions_to_dict(
    labeled: list[tuple[object, community_mod.Partition, float]],
    registry: NodeRegistry,
) -> dict:
    out = []
    for t, part, q in labeled:
        communities = {
            registry.label_of(i): part.assignment[i] for i in sorted(part.assignment)
        }
        sizes = [part.sizes[c] for c in range(part.K)]
        out.append(
            {"t": t, "n_active": part.n, "K": part.K, "Q": q,
             "sizes": sizes, "communities": communities}
        )
    return {"partitions": out}


def _partitions_from_dict(data: dict):
    try:
        labels = sorted(
            {lab for rec in data["partitions"] for lab in rec["communities"]}
        )
        registry = NodeRegistry.from_labels(labels)
        entries = []
        for rec in data["partitions"]:
            assignment = {
                registry.id_of(lab): int(c) for lab, c in rec["communities"].items()
            }
            entries.append((rec["t"], community_mod.Partition.from_assignment(assignment)))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed partitions document: {exc}") from exc
    return community_mod.PartitionSeries(tuple(entries)), registry


def _fit_results_to_dict(results: list[fusion.FitResult], selected: int) -> dict:
    runs = []
    for r in results:
        runs.append(
            {
                "init_id": r.init_id,
                "seed": r.seed,
                "w": list(r.weights.w),
                "w_add": r.weights.w_add,
                "W": [float(x) for x in r.weights.cumulative()],
                "raw_w": list(r.raw_weights.w),
                "raw_w_add": r.raw_weights.w_add,
                "selected_epoch": r.selected_epoch,
                "epochs_run": len(r.train_losses),
                "train_loss": r.train_losses[r.selected_epoch] if not r.failed else None,
                "val_loss": r.val_loss if not r.failed else None,
                "test_loss": r.test_loss if not r.failed else None,
                "failed": r.failed,
            }
        )
    best = results[selected]
    return {"runs": runs, "selected": selected, "weights": _weights_to_dict(best.weights)}


# --- similarity results CSV --------------------------------------------------

_RESULT_COLUMNS = [
    "node_i", "node_j", "n_coexist", "count_stat", "count_p",
    "duration_stat", "duration_p", "count_sig", "duration_sig",
]


def _results_rows(results, alpha: float) -> list[list]:
    count_sig, duration_sig = simstats.bonferroni_select(results, alpha)
    rows = []
    for r in sorted(results, key=lambda r: r.pair):
        rows.append(
            [
                r.pair[0], r.pair[1], len(r.coexist_steps),
                r.count_stat, r.count_p, r.duration_stat, r.duration_p,
                int(r.pair in count_sig), int(r.pair in duration_sig),
            ]
        )
    return rows


def _similarity_graph_from_csv(path, statistic: str, mode: str) -> WeightedGraph:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != _RESULT_COLUMNS:
                raise ValidationError(
                    f"unexpected columns in {path}: {reader.fieldnames}"
                )
            rows = list(reader)
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    labels = sorted({r["node_i"] for r in rows} | {r["node_j"] for r in rows})
    registry = NodeRegistry.from_labels(labels)
    triples = []
    for r in rows:
        stat = int(r[f"{statistic}_stat"])
        if stat <= 0:
            continue
        if mode == "thresholded" and r[f"{statistic}_sig"] != "1":
            continue
        triples.append((r["node_i"], r["node_j"], float(stat)))
    return WeightedGraph.from_label_edges(registry, triples)


# --- config parsing ----------------------------------------------------------


def _fit_config_from_dict(data: dict, threads: int = 1) -> fusion.FitConfig:
    lw = fusion.LossWeights(
        alpha1=float(data.get("alpha1", 1.0)),
        alpha2=float(data.get("alpha2", 1.0)),
        alpha3=float(data.get("alpha3", 0.001)),
    )
    split = None
    if "split" in data:
        sd = data["split"]
        if {"train_steps", "val_steps", "test_steps"} <= set(sd):
            split = fusion.SplitSpec.from_step_counts(
                int(sd["train_steps"]), int(sd["val_steps"]), int(sd["test_steps"])
            )
        else:
            raise ValidationError(
                "split table must define train_steps, val_steps, test_steps"
            )
    return fusion.FitConfig(
        loss_weights=lw,
        learning_rate=float(data.get("learning_rate", 0.1)),
        max_epochs=int(data.get("max_epochs", 5000)),
        patience=int(data.get("patience", 3000)),
        tiny_weight_threshold=float(data.get("tiny_weight_threshold", 0.05)),
        seeds=tuple(int(s) for s in data.get("seeds", (0, 1, 2))),
        split=split,
        n_jobs=int(data.get("threads", threads)),
    )


# --- subcommand implementations ----------------------------------------------


def _resolve(path: str | None, out_dir: str | None) -> str | None:
    if path is None:
        return None
    p = Path(path)
    if out_dir is not None and not p.is_absolute():
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        return str(Path(out_dir) / p)
    return str(p)


def _cmd_ingest(args) -> int:
    series = ingest.ingest_file(args.input, bucket=args.bucket)
    save_series(series, _resolve(args.out, args.out_dir))
    print(f"ingested {series.T} time steps, {len(series.registry)} nodes")
    return 0


def _cmd_synth(args) -> int:
    data = _read_toml(args.config)
    if args.seed is not None:
        data["seed"] = args.seed
    config = synth.SynthConfig.from_dict(data)
    series, gt = synth.generate(config)
    save_series(series, _resolve(args.out, args.out_dir))
    if args.gt_out:
        _write_json(_resolve(args.gt_out, args.out_dir), _weights_to_dict(gt))
    print(f"generated T={series.T} H={series.H} n={len(series.registry)}")
    return 0


def _cmd_fit(args) -> int:
    series = load_series(args.series)
    data = _read_toml(args.config) if args.config else {}
    config = _fit_config_from_dict(data, threads=args.threads)
    results = fusion.fit(series, config)
    best = fusion.select_best(results)
    selected = results.index(best)
    _write_json(_resolve(args.out, args.out_dir), _fit_results_to_dict(results, selected))
    w_str = ", ".join(_fmt(x) for x in best.weights.w)
    print(
        f"best run init={best.init_id} seed={best.seed} "
        f"test_loss={_fmt(best.test_loss)} w=[{w_str}] w_add={_fmt(best.weights.w_add)}"
    )
    return 0


def _cmd_baseline(args) -> int:
    series = load_series(args.series)
    graphs = [
        (snap.t, fusion.baseline_fuse(snap, args.kind)) for snap in series.snapshots
    ]
    _write_json(_resolve(args.out, args.out_dir), _graphs_to_dict(graphs))
    print(f"baseline '{args.kind}' fused {len(graphs)} snapshots")
    return 0


def _cmd_fuse(args) -> int:
    series = load_series(args.series)
    weights = _weights_from_file(args.weights)
    graphs = [(snap.t, fuse_snapshot(snap, weights)) for snap in series.snapshots]
    _write_json(_resolve(args.out, args.out_dir), _graphs_to_dict(graphs))
    print(f"fused {len(graphs)} snapshots")
    return 0


def _cmd_communities(args) -> int:
    labeled_graphs = _graphs_from_dict(_read_json(args.graphs))
    registry = labeled_graphs[0][1].registry
    labeled = []
    for t, g in labeled_graphs:
        part = community_mod.detect(g, runs=args.runs, seed=args.seed or 0)
        q = community_mod.modularity(g, part)
        labeled.append((t, part, q))
    _write_json(
        _resolve(args.out, args.out_dir), _partitions_to_dict(labeled, registry)
    )
    print(f"detected communities for {len(labeled)} time steps")
    return 0


def _cmd_similarity(args) -> int:
    partitions, registry = _partitions_from_dict(_read_json(args.partitions))
    results = simstats.compute_pair_tests(partitions, registry)
    _write_csv(
        _resolve(args.out, args.out_dir),
        _RESULT_COLUMNS,
        _results_rows(results, args.alpha),
    )
    print(f"tested {len(results)} pairs")
    return 0


def _cmd_cliques(args) -> int:
    graph = _similarity_graph_from_csv(args.similarity, args.statistic, args.mode)
    payload = {
        "statistic": args.statistic,
        "mode": args.mode,
        "cliques": simstats.maximal_cliques(graph),
        "components": simstats.connected_components(graph),
    }
    _write_json(_resolve(args.out, args.out_dir), payload)
    print(f"{len(payload['cliques'])} maximal cliques")
    return 0


def _cmd_stats(args) -> int:
    labeled_graphs = _graphs_from_dict(_read_json(args.graphs))
    rows = []
    for t, g in labeled_graphs:
        s = netstats.network_stats(g)
        rows.append(
            [t, s.avg_weighted_degree, s.avg_local_clustering,
             s.avg_local_clustering_binary, s.avg_closeness, s.n_active]
        )
    _write_csv(
        _resolve(args.out, args.out_dir),
        ["t", "avg_weighted_degree", "avg_local_clustering",
         "avg_local_clustering_binary", "avg_closeness", "n_active"],
        rows,
    )
    print(f"stats for {len(rows)} time steps")
    return 0


# --- pipeline ----------------------------------------------------------------


def run_pipeline(config: dict, out_dir: str | None = None) -> dict:
    """Execute the full pipeline from a parsed config; returns the report."""
    pcfg = config.get("pipeline", {})
    out = Path(out_dir or pcfg.get("out_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    seed = int(pcfg.get("seed", 0))
    threads = int(pcfg.get("threads", 1))
    alpha = float(pcfg.get("alpha", 0.05))
    runs = int(pcfg.get("community_runs", 100))
    statistics = list(pcfg.get("statistics", ["count", "duration"]))
    weights_mode = pcfg.get("weights", "fit")
    source = pcfg.get("source")
    artifacts: dict[str, str] = {}
    report: dict = {"config": pcfg, "artifacts": artifacts}

    def stage(name):
        class _Stage:
            def __enter__(self):
                return None

            def __exit__(self, exc_type, exc, tb):
                if exc is not None and not isinstance(exc, PipelineError):
                    raise PipelineError(name, exc) from exc
                return False

        return _Stage()

    series_path = out / "series.json"
    with stage("series"):
        if source == "synth":
            sdata = dict(config.get("synth", {}))
            sdata.setdefault("seed", seed)
            series, gt = synth.generate(synth.SynthConfig.from_dict(sdata))
            save_series(series, series_path)
            _write_json(out / "gt_weights.json", _weights_to_dict(gt))
            artifacts["gt_weights"] = "gt_weights.json"
        elif source == "observations":
            icfg = config.get("ingest", {})
            series = ingest.ingest_file(
                icfg["input"], bucket=icfg.get("bucket", "year")
            )
            save_series(series, series_path)
        elif source == "series":
            series = load_series(config["series"]["path"])
            save_series(series, series_path)
        else:
            raise ValidationError(
                "pipeline.source must be 'synth', 'observations', or 'series'"
            )
        artifacts["series"] = "series.json"

    with stage("weights"):
        if weights_mode == "fit":
            fcfg = _fit_config_from_dict(config.get("fit", {}), threads=threads)
            results = fusion.fit(series, fcfg)
            best = fusion.select_best(results)
            _write_json(
                out / "fit_results.json",
                _fit_results_to_dict(results, results.index(best)),
            )
            artifacts["fit_results"] = "fit_results.json"
            weights = best.weights
            report["selected_weights"] = _weights_to_dict(weights)
            fused = [(snap.t, fuse_snapshot(snap, weights)) for snap in series.snapshots]
        elif weights_mode in ("unlearned", "binary"):
            weights = fusion.baseline_weights(weights_mode, series.H)
            report["selected_weights"] = _weights_to_dict(weights)
            fused = [
                (snap.t, fusion.baseline_fuse(snap, weights_mode))
                for snap in series.snapshots
            ]
        else:
            raise ValidationError(
                "pipeline.weights must be 'fit', 'unlearned', or 'binary'"
            )

    with stage("fuse"):
        _write_json(out / "fused_graphs.json", _graphs_to_dict(fused))
        artifacts["fused_graphs"] = "fused_graphs.json"

    with stage("communities"):
        labeled = []
        for t, g in fused:
            part = community_mod.detect(g, runs=runs, seed=seed)
            labeled.append((t, part, community_mod.modularity(g, part)))
        _write_json(
            out / "partitions.json",
            _partitions_to_dict(labeled, series.registry),
        )
        artifacts["partitions"] = "partitions.json"
        partitions = community_mod.PartitionSeries(
            tuple((t, part) for t, part, _ in labeled)
        )

    with stage("similarity"):
        results = simstats.compute_pair_tests(partitions, series.registry)
        _write_csv(out / "similarity.csv", _RESULT_COLUMNS, _results_rows(results, alpha))
        artifacts["similarity"] = "similarity.csv"
        for statistic in statistics:
            for mode in ("full", "thresholded"):
                g = simstats.similarity_graph(
                    results, series.registry, statistic=statistic, mode=mode, alpha=alpha
                )
                name = f"similarity_graph_{statistic}_{mode}.json"
                _write_json(out / name, _graphs_to_dict([(statistic, g)]))
                artifacts[f"similarity_graph_{statistic}_{mode}"] = name

    with stage("cliques"):
        for statistic in statistics:
            g = simstats.similarity_graph(
                results, series.registry, statistic=statistic, mode="thresholded",
                alpha=alpha,
            )
            payload = {
                "statistic": statistic,
                "mode": "thresholded",
                "cliques": simstats.maximal_cliques(g),
                "components": simstats.connected_components(g),
            }
            name = f"cliques_{statistic}.json"
            _write_json(out / name, payload)
            artifacts[f"cliques_{statistic}"] = name

    with stage("stats"):
        rows = []
        for t, g in fused:
            s = netstats.network_stats(g)
            rows.append(
                [t, s.avg_weighted_degree, s.avg_local_clustering,
                 s.avg_local_clustering_binary, s.avg_closeness, s.n_active]
            )
        _write_csv(
            out / "stats.csv",
            ["t", "avg_weighted_degree", "avg_local_clustering",
             "avg_local_clustering_binary", "avg_closeness", "n_active"],
            rows,
        )
        artifacts["stats"] = "stats.csv"

    with stage("report"):
        _write_json(out / "report.json", report)
        artifacts["report"] = "report.json"
    return report


def _cmd_pipeline(args) -> int:
    config = _read_toml(args.config)
    if args.seed is not None:
        config.setdefault("pipeline", {})["seed"] = args.seed
    if args.threads != 1:
        config.setdefault("pipeline", {})["threads"] = args.threads
    report = run_pipeline(config, out_dir=args.out_dir)
    print(f"pipeline complete; artifacts: {', '.join(sorted(report['artifacts']))}")
    return 0


# --- argument parsing ---------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="netfuse", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="global RNG seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    parser.add_argument("--out-dir", default=None, help="directory for outputs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="observations CSV -> multiplex series JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--bucket", choices=("year", "month"), default="year")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="generate the synthetic benchmark series")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gt-out", default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="learn fusion weights")
    p.add_argument("--series", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("baseline", help="fuse with a fixed baseline rule")
    p.add_argument("--series", required=True)
    p.add_argument("--kind", choices=("unlearned", "binary"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("fuse", help="fuse a series with given weights")
    p.add_argument("--series", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("communities", help="best-of-k community detection per step")
    p.add_argument("--graphs", required=True)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_communities)

    p = sub.add_parser("similarity", help="pairwise persistence tests")
    p.add_argument("--partitions", required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_similarity)

    p = sub.add_parser("cliques", help="maximal cliques of a similarity graph")
    p.add_argument("--similarity", required=True)
    p.add_argument("--statistic", choices=("count", "duration"), required=True)
    p.add_argument("--mode", choices=("full", "thresholded"), default="thresholded")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cliques)

    p = sub.add_parser("stats", help="per-step network summary statistics")
    p.add_argument("--graphs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("pipeline", help="run the full pipeline from a config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PipelineError as exc:
        code = 1 if isinstance(exc.cause, ValidationError) else 2
        print(f"error: {exc}", file=sys.stderr)
        return code
    except Exception as exc:  # noqa: BLE001 - uniform runtime exit code
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
