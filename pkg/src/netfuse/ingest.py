"""Observation-log ingestion: parse focal-follow records, classify each
pair of present individuals into one of the ten proximity types, count
occurrences per day, and aggregate into a raw/ancillary multiplex series.

Input CSV columns: date,focal,individual,relation[,occurrence]. The
relation is one of party/prox5/prox2/groom, describing the individual's
status relative to the focal. The optional occurrence column indexes
repeat scans within a session; when absent every row is one occurrence.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field

from .errors import ValidationError
from .graphs import (
    MultiplexSeries,
    MultiplexSnapshot,
    NodeRegistry,
    WeightedGraph,
)

N_TYPES = 10

RELATIONS = ("party", "prox5", "prox2", "groom")
FOCAL = "focal"

# Closeness rank used to resolve duplicate rows for one individual within
# a single occurrence (groom dominates prox2, prox2 dominates prox5, ...).
_RANK = {"party": 0, "prox5": 1, "prox2": 2, "groom": 3}

# Pair type for two non-focal statuses, with groom folded into prox2.
_NONFOCAL_TYPE = {
    frozenset(["party"]): 1,
    frozenset(["party", "prox5"]): 2,
    frozenset(["party", "prox2"]): 3,
    frozenset(["prox5"]): 5,
    frozenset(["prox5", "prox2"]): 6,
    frozenset(["prox2"]): 8,
}

# Pair type for (focal, status).
_FOCAL_TYPE = {"party": 4, "prox5": 7, "prox2": 9, "groom": 10}


@dataclass(frozen=True)
class ObservationRecord:
    date: dt.date
    focal: str
    individual: str
    relation: str
    occurrence: int | None = None

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValidationError(f"unknown relation {self.relation!r}")
        if self.individual == self.focal:
            raise ValidationError(
                f"individual {self.individual!r} cannot equal the focal"
            )


@dataclass(frozen=True)
class SessionStatusMap:
    """Statuses of the individuals seen around one focal in one occurrence."""

    date: dt.date
    focal: str
    status: dict[str, str]


@dataclass
class DailyTypeCounts:
    """Occurrence counts per (unordered pair, proximity type) for one day."""

    date: dt.date
    counts: dict[tuple[tuple[str, str], int], int] = field(default_factory=dict)

    def bump(self, a: str, b: str, pair_type: int) -> None:
        pair = (a, b) if a < b else (b, a)
        key = (pair, pair_type)
        self.counts[key] = self.counts.get(key, 0) + 1


def parse_observations(path) -> list[ObservationRecord]:
    """Read and validate an observations CSV; errors carry line numbers."""
    records: list[ObservationRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError("empty observations file") from None
        header = [h.strip().lower() for h in header]
        if header[:4] != ["date", "focal", "individual", "relation"]:
            raise ValidationError(
                "header must be date,focal,individual,relation[,occurrence]"
            )
        has_occurrence = len(header) > 4 and header[4] == "occurrence"
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 4:
                raise ValidationError(f"line {lineno}: expected at least 4 columns")
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise ValidationError(
                    f"line {lineno}: bad date {row[0]!r} (expected YYYY-MM-DD)"
                ) from None
            occurrence = None
            if has_occurrence and len(row) > 4 and row[4].strip():
                try:
                    occurrence = int(row[4])
                except ValueError:
                    raise ValidationError(
                        f"line {lineno}: bad occurrence index {row[4]!r}"
                    ) from None
            try:
                rec = ObservationRecord(
                    date=date,
                    focal=row[1].strip(),
                    individual=row[2].strip(),
                    relation=row[3].strip().lower(),
                    occurrence=occurrence,
                )
            except ValidationError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from None
            records.append(rec)
    return records


def classify_pair_type(s1: str, s2: str) -> int:
    """Proximity type (1..10) for two statuses relative to the same focal.

    Symmetric in its arguments. Grooming between two non-focal
    individuals counts as prox2; only a focal-groom pair is type 10.
    Two focals are impossible.
    """
    for s in (s1, s2):
        if s not in RELATIONS and s != FOCAL:
            raise ValidationError(f"unknown status {s!r}")
    if s1 == FOCAL and s2 == FOCAL:
        raise ValidationError("a pair cannot contain two focals")
    if s1 == FOCAL or s2 == FOCAL:
        other = s2 if s1 == FOCAL else s1
        return _FOCAL_TYPE[other]
    a = "prox2" if s1 == "groom" else s1
    b = "prox2" if s2 == "groom" else s2
    return _NONFOCAL_TYPE[frozenset([a, b])]


def build_sessions(records: list[ObservationRecord]) -> list[SessionStatusMap]:
    """Group records into occurrences and resolve one status per individual.

    Records sharing (date, focal, occurrence index) form one occurrence;
    rows without an index each stand alone. Duplicate statuses for the
    same individual resolve to the closest one (groom over prox2, ...).
    """
    groups: dict[tuple, dict[str, str]] = {}
    order: list[tuple] = []
    for row_idx, rec in enumerate(records):
        if rec.occurrence is None:
            key = (rec.date, rec.focal, "row", row_idx)
        else:
            key = (rec.date, rec.focal, "occ", rec.occurrence)
        if key not in groups:
            groups[key] = {}
            order.append(key)
        status = groups[key]
        prev = status.get(rec.individual)
        if prev is None or _RANK[rec.relation] > _RANK[prev]:
            status[rec.individual] = rec.relation
    return [
        SessionStatusMap(date=key[0], focal=key[1], status=groups[key])
        for key in order
    ]


def daily_counts(records: list[ObservationRecord]) -> list[DailyTypeCounts]:
    """Count, per day, each unordered pair's occurrences of each type.

    Every occurrence contributes one count for every unordered pair
    among the focal and the observed individuals.
    """
    days: dict[dt.date, DailyTypeCounts] = {}
    for session in build_sessions(records):
        day = days.get(session.date)
        if day is None:
            day = DailyTypeCounts(date=session.date)
            days[session.date] = day
        members = [(session.focal, FOCAL)] + sorted(session.status.items())
        for a_idx in range(len(members)):
            for b_idx in range(a_idx + 1, len(members)):
                name_a, status_a = members[a_idx]
                name_b, status_b = members[b_idx]
                day.bump(name_a, name_b, classify_pair_type(status_a, status_b))
    return [days[d] for d in sorted(days)]


def _bucket_label(date: dt.date, bucket: str):
    if bucket == "year":
        return date.year
    if bucket == "month":
        return f"{date.year:04d}-{date.month:02d}"
    raise ValidationError(f"unknown bucket rule {bucket!r} (use 'year' or 'month')")


def aggregate_period(
    daily: list[DailyTypeCounts], bucket: str = "year"
) -> MultiplexSeries:
    """Aggregate daily counts into a raw/ancillary multiplex series.

    Per bucket and type: the raw weight of a pair is the number of
    distinct days with at least one occurrence; the ancillary weight is
    the sum over days of (count - 1). Raw + ancillary therefore equals
    the total occurrence count exactly.
    """
    labels: set[str] = set()
    # bucket -> type -> pair -> [day count, extra occurrences]
    table: dict[object, dict[int, dict[tuple[str, str], list[int]]]] = {}
    for day in daily:
        b = _bucket_label(day.date, bucket)
        per_type = table.setdefault(b, {})
        for (pair, pair_type), count in day.counts.items():
            labels.update(pair)
            cell = per_type.setdefault(pair_type, {}).setdefault(pair, [0, 0])
            cell[0] += 1
            cell[1] += count - 1
    if len(table) < 2:
        raise ValidationError(
            f"aggregation produced {len(table)} time bucket(s); a series needs >= 2"
        )
    registry = NodeRegistry.from_labels(sorted(labels))
    snapshots = []
    for b in sorted(table):
        per_type = table[b]
        raw_layers = []
        add_layers = []
        for pair_type in range(1, N_TYPES + 1):
            cells = per_type.get(pair_type, {})
            raw_layers.append(
                WeightedGraph.from_label_edges(
                    registry, [(u, v, days) for (u, v), (days, _) in cells.items()]
                )
            )
            add_layers.append(
                WeightedGraph.from_label_edges(
                    registry,
                    [(u, v, extra) for (u, v), (_, extra) in cells.items() if extra],
                )
            )
        snapshots.append(
            MultiplexSnapshot(t=b, raw=tuple(raw_layers), add=tuple(add_layers))
        )
    return MultiplexSeries(tuple(snapshots))


def ingest_file(path, bucket: str = "year") -> MultiplexSeries:
    """Full ingestion: parse, count, aggregate."""
    return aggregate_period(daily_counts(parse_observations(path)), bucket=bucket)
