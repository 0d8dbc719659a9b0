"""Measurement-to-model math for contention characterization.

Covers the slowdown ratio between contended and isolated runs, per-region
access/attention maps and their normalizations, the attention/L2
correlation score and its penalty, the RMLSE regression loss, the combined
training loss, worst-case interference matrices, and code heatmaps.

Everything here is pure double-precision arithmetic over plain sequences
or numpy arrays; nothing keeps state between calls.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_LOSS_LAMBDA = 0.5

_AGGREGATORS: dict[str, Callable[[np.ndarray], float]] = {
    "max": lambda d: float(np.max(d)),
    "mean": lambda d: float(np.mean(d)),
    "p95": lambda d: float(np.percentile(d, 95)),
}


@dataclass(frozen=True)
class MeasurementRecord:
    """One timed run of ``subject`` while ``contender`` ran alongside it.

    ``contender`` is empty for isolation-only records.  Times may be in any
    unit as long as both use the same one.
    """

    subject: str
    contender: str
    repetition: int
    t_isolation: float
    t_interference: float

    def __post_init__(self) -> None:
        if self.t_isolation <= 0:
            raise ValueError(f"t_isolation must be > 0, got {self.t_isolation}")
        if self.t_interference < 0:
            raise ValueError(f"t_interference must be >= 0, got {self.t_interference}")

    @property
    def delta(self) -> float:
        return compute_delta(self.t_isolation, self.t_interference)


@dataclass(frozen=True)
class RegionMap:
    """Per-code-region non-negative values, optionally normalized."""

    values: tuple[float, ...]
    normalized: bool = False

    def __post_init__(self) -> None:
        if len(self.values) < 1:
            raise ValueError("a region map needs at least one region")
        if any(v < 0 for v in self.values):
            raise ValueError("region map values must be non-negative")
        if self.normalized and any(v > 1 for v in self.values):
            raise ValueError("normalized region map values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class AttentionMatrix:
    """Square non-negative matrix plus a position-to-region partition."""

    entries: tuple[tuple[float, ...], ...]
    partition: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.entries)
        if n == 0:
            raise ValueError("attention matrix must be non-empty")
        if any(len(row) != n for row in self.entries):
            raise ValueError("attention matrix must be square")
        if any(v < 0 for row in self.entries for v in row):
            raise ValueError("attention entries must be non-negative")
        if len(self.partition) != n:
            raise ValueError("partition must assign a region to every position")

    @property
    def size(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class InterferenceMatrix:
    """Symmetric worst-case pairwise slowdown factors with unit diagonal."""

    tasks: tuple[str, ...]
    entries: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.tasks)
        if len(set(self.tasks)) != n:
            raise ValueError("task ids must be unique")
        if len(self.entries) != n or any(len(row) != n for row in self.entries):
            raise ValueError("entries must be an n x n matrix over the task list")
        for i in range(n):
            if self.entries[i][i] != 1.0:
                raise ValueError(f"diagonal entry for {self.tasks[i]!r} must be 1")
            for j in range(n):
                if self.entries[i][j] < 0:
                    raise ValueError("interference factors must be non-negative")
                if self.entries[i][j] != self.entries[j][i]:
                    raise ValueError(
                        f"matrix not symmetric at ({self.tasks[i]!r}, {self.tasks[j]!r})"
                    )

    def index(self, task: str) -> int:
        try:
            return self.tasks.index(task)
        except ValueError:
            raise ValueError(f"unknown task id: {task!r}") from None

    def factor(self, a: str, b: str) -> float:
        return self.entries[self.index(a)][self.index(b)]


@dataclass(frozen=True)
class CodeHeatmap:
    """Contention-sensitivity weight in [0, 1] per code region."""

    regions: tuple[str, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.regions) != len(self.weights):
            raise ValueError("regions and weights must have the same length")
        if any(w < 0 or w > 1 for w in self.weights):
            raise ValueError("heatmap weights must lie in [0, 1]")
        if self.weights and max(self.weights) > 0 and max(self.weights) != 1.0:
            raise ValueError("a non-empty heatmap must peak at weight 1")

    def weight_of(self, region: str, default: float = 0.0) -> float:
        try:
            return self.weights[self.regions.index(region)]
        except ValueError:
            return default


# ---------------------------------------------------------------------------
# Scalar and vector operations


def compute_delta(t_isolation: float, t_interference: float) -> float:
    """Slowdown ratio: contended time divided by isolated time."""
    if t_isolation <= 0:
        raise ValueError(f"t_isolation must be > 0, got {t_isolation}")
    return t_interference / t_isolation


def reduce_attention(att: AttentionMatrix) -> RegionMap:
    """Collapse an attention matrix to per-region totals.

    Rows are summed first, then row totals are accumulated into the region
    each position belongs to.  The result is unnormalized.
    """
    n_regions = max(att.partition) + 1
    totals = [0.0] * n_regions
    for row, region in zip(att.entries, att.partition):
        totals[region] += sum(row)
    return RegionMap(values=tuple(totals), normalized=False)


def normalize_l2_map(counts: RegionMap) -> RegionMap:
    """Scale a count vector by its total so the result sums to 1."""
    total = sum(counts.values)
    if total <= 0:
        raise ValueError("cannot normalize an all-zero access map")
    return RegionMap(values=tuple(v / total for v in counts.values), normalized=True)


def normalize_attention_map(v: RegionMap) -> RegionMap:
    """Scale a vector by its maximum so the result peaks at 1."""
    peak = max(v.values)
    if peak <= 0:
        raise ValueError("cannot normalize an all-zero attention map")
    return RegionMap(values=tuple(x / peak for x in v.values), normalized=True)


def correlation_score(att_map: RegionMap, l2_map: RegionMap) -> float:
    """Dot product of the two normalized per-region maps."""
    if len(att_map) != len(l2_map):
        raise ValueError(
            f"map length mismatch: {len(att_map)} vs {len(l2_map)}"
        )
    if not (att_map.normalized and l2_map.normalized):
        raise ValueError("correlation_score expects normalized maps")
    return float(sum(a * b for a, b in zip(att_map.values, l2_map.values)))


def correlation_penalty(score: float, n_obs: int) -> float:
    """Distance of the correlation score from its ideal value ``n_obs``."""
    if n_obs < 1:
        raise ValueError("n_obs must be at least 1")
    return n_obs - score


def rmlse(predicted: Sequence[float], observed: Sequence[float]) -> float:
    """Root mean squared logarithmic error between two vectors.

    sqrt(mean((log(1 + predicted) - log(1 + observed))^2)); every element
    must exceed -1 for the logarithms to exist.
    """
    pred = np.asarray(predicted, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if pred.shape != obs.shape or pred.ndim != 1 or pred.size < 1:
        raise ValueError("predicted and observed must be equal-length vectors")
    if np.any(pred <= -1) or np.any(obs <= -1):
        raise ValueError("rmlse requires every element > -1")
    diff = np.log1p(pred) - np.log1p(obs)
    return float(np.sqrt(np.mean(diff * diff)))


def total_loss(
    predicted: Sequence[float],
    observed: Sequence[float],
    att_map: RegionMap,
    l2_map: RegionMap,
    loss_lambda: float = DEFAULT_LOSS_LAMBDA,
) -> float:
    """Regression loss plus the weighted attention-alignment penalty.

    rmlse(predicted, observed) + lambda * (n_obs - C), where C is the dot
    product of the normalized maps and n_obs their length.
    """
    score = correlation_score(att_map, l2_map)
    penalty = correlation_penalty(score, len(att_map))
    return rmlse(predicted, observed) + loss_lambda * penalty


# ---------------------------------------------------------------------------
# Matrix and heatmap construction


def build_interference_matrix(
    tasks: Sequence[str],
    records: Iterable[MeasurementRecord],
    aggregate: str = "max",
) -> InterferenceMatrix:
    """Aggregate pairwise slowdown records into a symmetric matrix.

    Each record contributes its delta to the unordered (subject, contender)
    pair; both orderings and all repetitions are pooled before aggregation.
    ``aggregate`` picks the pooling statistic: "max" (worst case, default),
    "mean" or "p95".  Every unordered task pair must be covered by at least
    one record.  The diagonal is fixed at 1.
    """
    if aggregate not in _AGGREGATORS:
        raise ValueError(f"unknown aggregation {aggregate!r}; pick one of {sorted(_AGGREGATORS)}")
    task_list = list(tasks)
    if len(set(task_list)) != len(task_list):
        raise ValueError("task ids must be unique")
    index = {t: i for i, t in enumerate(task_list)}

    pools: dict[tuple[int, int], list[float]] = {}
    for rec in records:
        if rec.subject not in index or rec.contender not in index:
            continue
        i, j = index[rec.subject], index[rec.contender]
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        pools.setdefault(key, []).append(rec.delta)

    n = len(task_list)
    entries = [[1.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            pool = pools.get((i, j))
            if not pool:
                raise ValueError(
                    f"no measurement covers pair ({task_list[i]!r}, {task_list[j]!r})"
                )
            value = _AGGREGATORS[aggregate](np.asarray(pool, dtype=float))
            entries[i][j] = entries[j][i] = value

    return InterferenceMatrix(
        tasks=tuple(task_list), entries=tuple(tuple(row) for row in entries)
    )


def heatmap_from_deltas(
    regions: Sequence[str], deltas: Sequence[float]
) -> CodeHeatmap:
    """Turn per-region slowdown ratios into [0, 1] sensitivity weights.

    The excess slowdown max(delta - 1, 0) is rescaled so the hottest region
    has weight 1; regions that never slow down keep weight 0.  An all-ones
    delta vector yields an all-zero heatmap.
    """
    if len(regions) != len(deltas):
        raise ValueError("regions and deltas must have the same length")
    if len(deltas) < 1:
        raise ValueError("need at least one region delta")
    excess = [max(float(d) - 1.0, 0.0) for d in deltas]
    peak = max(excess)
    if peak > 0:
        weights = tuple(e / peak for e in excess)
    else:
        weights = tuple(0.0 for _ in excess)
    return CodeHeatmap(regions=tuple(regions), weights=weights)


# ---------------------------------------------------------------------------
# File formats

MEASUREMENT_CSV_FIELDS = ("subject", "pair", "repetition", "t_isolation_ns", "t_interference_ns")


def read_measurements_csv(path: str | Path) -> list[MeasurementRecord]:
    """Read measurement records from the canonical CSV layout.

    Columns: subject, pair, repetition, t_isolation_ns, t_interference_ns.
    """
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MEASUREMENT_CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"measurement CSV missing columns: {sorted(missing)}")
        for row in reader:
            records.append(
                MeasurementRecord(
                    subject=row["subject"],
                    contender=row["pair"],
                    repetition=int(row["repetition"]),
                    t_isolation=float(row["t_isolation_ns"]),
                    t_interference=float(row["t_interference_ns"]),
                )
            )
    return records


def matrix_to_dict(matrix: InterferenceMatrix) -> dict:
    return {"tasks": list(matrix.tasks), "entries": [list(row) for row in matrix.entries]}


def matrix_from_dict(doc: dict) -> InterferenceMatrix:
    return InterferenceMatrix(
        tasks=tuple(doc["tasks"]),
        entries=tuple(tuple(float(v) for v in row) for row in doc["entries"]),
    )


def load_matrix(path: str | Path) -> InterferenceMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        return matrix_from_dict(json.load(fh))


def save_matrix(matrix: InterferenceMatrix, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(matrix_to_dict(matrix), fh, indent=2)
        fh.write("\n")


def heatmap_to_dict(heatmap: CodeHeatmap) -> dict:
    return {"regions": list(heatmap.regions), "weights": list(heatmap.weights)}


def heatmap_from_dict(doc: dict) -> CodeHeatmap:
    return CodeHeatmap(
        regions=tuple(str(r) for r in doc["regions"]),
        weights=tuple(float(w) for w in doc["weights"]),
    )


def load_heatmap(path: str | Path) -> CodeHeatmap:
    with open(path, "r", encoding="utf-8") as fh:
        return heatmap_from_dict(json.load(fh))


def save_heatmap(heatmap: CodeHeatmap, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(heatmap_to_dict(heatmap), fh, indent=2)
        fh.write("\n")
