"""Matrix-multiplication access traces and two-level LRU cache simulation.

The canonical kernel is the naive triple loop ``C[i][j] += A[i][k] * B[k][j]``
over row-major matrices.  Its data accesses are replayed through a private
L1 and a unified L2 cache, both set-associative with least-recently-used
replacement, write-allocate and write-back (writebacks are not counted as
extra traffic, so L2 accesses equal L1 misses exactly).

The dimension sweep fixes two matrix dimensions and grows the third,
recording L2 accesses per point; large inner dimensions (long dot products
over a column-strided operand) dominate L2 traffic.

Simulation is deterministic: identical traces and configurations produce
identical counts.  A numba-compiled kernel is used when available; the
pure-Python path computes exactly the same numbers.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

READ = 0
WRITE = 1

SWEEP_DIMS = ("N", "K", "M")

_PAGE = 4096


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class CacheConfig:
    """Geometry of one set-associative LRU cache level."""

    size: int
    line_size: int
    associativity: int
    replacement: str = "lru"

    def __post_init__(self) -> None:
        for label, value in (("size", self.size), ("line_size", self.line_size),
                             ("associativity", self.associativity)):
            if not _is_pow2(value):
                raise ValueError(f"cache {label} must be a positive power of two, got {value}")
        if self.size % (self.line_size * self.associativity) != 0:
            raise ValueError("cache size must be divisible by line_size * associativity")
        if self.replacement != "lru":
            raise ValueError(f"only LRU replacement is supported, got {self.replacement!r}")

    @property
    def sets(self) -> int:
        return self.size // (self.line_size * self.associativity)

    @property
    def line_shift(self) -> int:
        return self.line_size.bit_length() - 1


# Cortex-A72-style defaults: private 32 KB 2-way L1D, shared 1 MB 16-way L2,
# 64-byte lines throughout.
DEFAULT_L1 = CacheConfig(size=32 * 1024, line_size=64, associativity=2)
DEFAULT_L2 = CacheConfig(size=1024 * 1024, line_size=64, associativity=16)


@dataclass(frozen=True)
class MatMulSpec:
    """Dimensions and memory layout of one A(n x k) @ B(k x m) = C(n x m) run."""

    n: int
    k: int
    m: int
    element_size: int = 4
    base_a: int = 0
    base_b: int | None = None
    base_c: int | None = None

    def __post_init__(self) -> None:
        if min(self.n, self.k, self.m) < 1:
            raise ValueError("matrix dimensions must all be >= 1")
        if self.element_size not in (1, 2, 4, 8):
            raise ValueError(f"element_size must be 1, 2, 4 or 8, got {self.element_size}")
        if self.base_b is None:
            object.__setattr__(self, "base_b", _align(self.base_a + self.bytes_a, _PAGE))
        if self.base_c is None:
            object.__setattr__(self, "base_c", _align(self.base_b + self.bytes_b, _PAGE))
        ranges = sorted(
            [
                (self.base_a, self.base_a + self.bytes_a, "A"),
                (self.base_b, self.base_b + self.bytes_b, "B"),
                (self.base_c, self.base_c + self.bytes_c, "C"),
            ]
        )
        for (lo1, hi1, m1), (lo2, hi2, m2) in zip(ranges, ranges[1:]):
            if hi1 > lo2:
                raise ValueError(f"address ranges of {m1} and {m2} overlap")
        if self.base_c + self.bytes_c >= 2**62:
            raise ValueError("matrix layout overflows the simulated address space")

    @property
    def bytes_a(self) -> int:
        return self.n * self.k * self.element_size

    @property
    def bytes_b(self) -> int:
        return self.k * self.m * self.element_size

    @property
    def bytes_c(self) -> int:
        return self.n * self.m * self.element_size

    @property
    def iterations(self) -> int:
        return self.n * self.k * self.m

    def with_dims(self, n: int, k: int, m: int) -> "MatMulSpec":
        """Same element size, fresh auto-computed layout for new dimensions."""
        return MatMulSpec(n=n, k=k, m=m, element_size=self.element_size, base_a=self.base_a)


def _align(addr: int, boundary: int) -> int:
    return (addr + boundary - 1) // boundary * boundary


@dataclass(frozen=True)
class AccessTrace:
    """Flat sequence of byte-addressed accesses with region labels.

    Regions are contiguous integers starting at 0; each access carries the
    region active when it was issued.
    """

    addresses: np.ndarray
    kinds: np.ndarray
    regions: np.ndarray
    n_regions: int

    def __post_init__(self) -> None:
        if not (len(self.addresses) == len(self.kinds) == len(self.regions)):
            raise ValueError("trace arrays must have equal length")
        if len(self.regions) and (
            int(self.regions.min()) < 0 or int(self.regions.max()) >= self.n_regions
        ):
            raise ValueError("region ids must lie in [0, n_regions)")

    def __len__(self) -> int:
        return len(self.addresses)

    @classmethod
    def from_lists(
        cls,
        accesses: Sequence[tuple[int, int]],
        regions: Sequence[int] | None = None,
    ) -> "AccessTrace":
        """Build a trace from (address, kind) pairs, mainly for tests."""
        addrs = np.asarray([a for a, _ in accesses], dtype=np.int64)
        kinds = np.asarray([k for _, k in accesses], dtype=np.uint8)
        if regions is None:
            regs = np.zeros(len(addrs), dtype=np.int64)
        else:
            regs = np.asarray(regions, dtype=np.int64)
        n_regions = int(regs.max()) + 1 if len(regs) else 1
        return cls(addresses=addrs, kinds=kinds, regions=regs, n_regions=n_regions)


@dataclass(frozen=True)
class CacheStats:
    """Counters from one simulation run; L2 accesses equal L1 misses."""

    l1_accesses: int
    l1_misses: int
    l2_misses: int
    per_region_l2: np.ndarray

    def __post_init__(self) -> None:
        if not (self.l2_misses <= self.l1_misses <= self.l1_accesses):
            raise ValueError("miss counters violate l2 <= l1_misses <= l1_accesses")
        if int(self.per_region_l2.sum()) != self.l1_misses:
            raise ValueError("per-region L2 accesses must sum to the L1 miss count")

    @property
    def l2_accesses(self) -> int:
        return self.l1_misses


# ---------------------------------------------------------------------------
# Trace generation


def gen_matmul_trace(spec: MatMulSpec) -> AccessTrace:
    """Emit the data accesses of the naive i-j-k matrix multiplication.

    Per innermost iteration, in order: read A[i][k], read B[k][j], read
    C[i][j], write C[i][j].  The trace is segmented into one region per
    innermost-loop execution (one per (i, j) pair), mirroring observation
    points placed at loop-nest boundaries; region ids run row-major from 0.
    """
    n, k_dim, m, es = spec.n, spec.k, spec.m, spec.element_size
    total = spec.iterations
    idx = np.arange(total, dtype=np.int64)
    k = idx % k_dim
    j = (idx // k_dim) % m
    i = idx // (k_dim * m)

    a_addr = spec.base_a + (i * k_dim + k) * es
    b_addr = spec.base_b + (k * m + j) * es
    c_addr = spec.base_c + (i * m + j) * es

    addresses = np.empty(4 * total, dtype=np.int64)
    addresses[0::4] = a_addr
    addresses[1::4] = b_addr
    addresses[2::4] = c_addr
    addresses[3::4] = c_addr

    kinds = np.zeros(4 * total, dtype=np.uint8)
    kinds[3::4] = WRITE

    regions = np.repeat(i * m + j, 4)

    return AccessTrace(
        addresses=addresses, kinds=kinds, regions=regions, n_regions=n * m
    )


# ---------------------------------------------------------------------------
# Cache simulation

_jit_kernel = None
_jit_failed = False


def _get_jit_kernel():
    global _jit_kernel, _jit_failed
    if _jit_kernel is None and not _jit_failed:
        try:
            from numba import njit

            _jit_kernel = njit(cache=True)(_simulate_loop)
        except ImportError:  # pragma: no cover - numba is a declared dependency
            _jit_failed = True
    return _jit_kernel


def _simulate_loop(
    lines1, lines2, regions,
    l1_sets, l1_ways, l2_sets, l2_ways,
    per_region,
):
    """Two-level LRU simulation core, shared by the JIT and pure paths."""
    l1_tag = np.full((l1_sets, l1_ways), -1, dtype=np.int64)
    l1_ts = np.zeros((l1_sets, l1_ways), dtype=np.int64)
    l2_tag = np.full((l2_sets, l2_ways), -1, dtype=np.int64)
    l2_ts = np.zeros((l2_sets, l2_ways), dtype=np.int64)
    l1_misses = 0
    l2_misses = 0
    t = 0
    for idx in range(lines1.shape[0]):
        t += 1
        line = lines1[idx]
        s = line & (l1_sets - 1)
        hit = False
        for w in range(l1_ways):
            if l1_tag[s, w] == line:
                l1_ts[s, w] = t
                hit = True
                break
        if hit:
            continue
        l1_misses += 1
        per_region[regions[idx]] += 1
        victim = 0
        oldest = l1_ts[s, 0]
        for w in range(1, l1_ways):
            if l1_ts[s, w] < oldest:
                oldest = l1_ts[s, w]
                victim = w
        l1_tag[s, victim] = line
        l1_ts[s, victim] = t

        line2 = lines2[idx]
        s2 = line2 & (l2_sets - 1)
        hit2 = False
        for w in range(l2_ways):
            if l2_tag[s2, w] == line2:
                l2_ts[s2, w] = t
                hit2 = True
                break
        if hit2:
            continue
        l2_misses += 1
        victim = 0
        oldest = l2_ts[s2, 0]
        for w in range(1, l2_ways):
            if l2_ts[s2, w] < oldest:
                oldest = l2_ts[s2, w]
                victim = w
        l2_tag[s2, victim] = line2
        l2_ts[s2, victim] = t
    return l1_misses, l2_misses


def simulate_cache(
    trace: AccessTrace,
    l1: CacheConfig = DEFAULT_L1,
    l2: CacheConfig = DEFAULT_L2,
    use_jit: bool | None = None,
) -> CacheStats:
    """Replay a trace through the L1/L2 hierarchy and count misses.

    Every L1 miss issues exactly one L2 access (write-allocate on both
    levels, no writeback traffic), so ``l1_misses`` doubles as the L2
    access count and is attributed to the region of the missing access.
    """
    if l2.size < l1.size:
        raise ValueError("L2 must be at least as large as L1")
    lines1 = trace.addresses >> l1.line_shift
    lines2 = trace.addresses >> l2.line_shift
    regions = trace.regions
    per_region = np.zeros(trace.n_regions, dtype=np.int64)

    kernel = _get_jit_kernel() if use_jit in (None, True) else None
    if kernel is None:
        if use_jit is True:
            raise RuntimeError("JIT kernel requested but numba is unavailable")
        kernel = _simulate_loop

    l1_misses, l2_misses = kernel(
        lines1, lines2, regions,
        l1.sets, l1.associativity, l2.sets, l2.associativity,
        per_region,
    )
    return CacheStats(
        l1_accesses=len(trace),
        l1_misses=int(l1_misses),
        l2_misses=int(l2_misses),
        per_region_l2=per_region,
    )


def simulate_cache_reference(
    trace: AccessTrace,
    l1: CacheConfig = DEFAULT_L1,
    l2: CacheConfig = DEFAULT_L2,
) -> tuple[CacheStats, list[bool], list[bool]]:
    """Pure-Python reference simulation recording per-access outcomes.

    Returns the stats, the L1 hit flag per access, and the L2 hit flag per
    L1 miss (in miss order).  Used as the slow, transparent counterpart of
    :func:`simulate_cache` in equivalence tests.
    """
    if l2.size < l1.size:
        raise ValueError("L2 must be at least as large as L1")
    l1_state: list[dict[int, None]] = [dict() for _ in range(l1.sets)]
    l2_state: list[dict[int, None]] = [dict() for _ in range(l2.sets)]
    per_region = np.zeros(trace.n_regions, dtype=np.int64)
    l1_seq: list[bool] = []
    l2_seq: list[bool] = []
    l1_misses = 0
    l2_misses = 0

    for addr, region in zip(trace.addresses.tolist(), trace.regions.tolist()):
        line = addr >> l1.line_shift
        s = l1_state[line & (l1.sets - 1)]
        hit = line in s
        l1_seq.append(hit)
        if hit:
            s.pop(line)
            s[line] = None  # move to MRU position
            continue
        l1_misses += 1
        per_region[region] += 1
        if len(s) == l1.associativity:
            s.pop(next(iter(s)))
        s[line] = None

        line2 = addr >> l2.line_shift
        s2 = l2_state[line2 & (l2.sets - 1)]
        hit2 = line2 in s2
        l2_seq.append(hit2)
        if hit2:
            s2.pop(line2)
            s2[line2] = None
            continue
        l2_misses += 1
        if len(s2) == l2.associativity:
            s2.pop(next(iter(s2)))
        s2[line2] = None

    stats = CacheStats(
        l1_accesses=len(trace),
        l1_misses=l1_misses,
        l2_misses=l2_misses,
        per_region_l2=per_region,
    )
    return stats, l1_seq, l2_seq


def _matmul_cache_loop(
    n, k_dim, m, es, base_a, base_b, base_c,
    l1_sets, l1_ways, l1_shift, l2_sets, l2_ways, l2_shift,
):
    """Fused matmul-trace + cache loop for large sweeps.

    Generates the i-j-k access stream on the fly instead of materializing
    it; must stay behaviourally identical to gen_matmul_trace followed by
    _simulate_loop (equivalence is pinned by tests).
    """
    l1_tag = np.full((l1_sets, l1_ways), -1, dtype=np.int64)
    l1_ts = np.zeros((l1_sets, l1_ways), dtype=np.int64)
    l2_tag = np.full((l2_sets, l2_ways), -1, dtype=np.int64)
    l2_ts = np.zeros((l2_sets, l2_ways), dtype=np.int64)
    addrs = np.empty(4, dtype=np.int64)
    l1_misses = 0
    l2_misses = 0
    t = 0
    for i in range(n):
        for j in range(m):
            for k in range(k_dim):
                addrs[0] = base_a + (i * k_dim + k) * es
                addrs[1] = base_b + (k * m + j) * es
                addrs[2] = base_c + (i * m + j) * es
                addrs[3] = addrs[2]
                for a in range(4):
                    t += 1
                    line = addrs[a] >> l1_shift
                    s = line & (l1_sets - 1)
                    hit = False
                    for w in range(l1_ways):
                        if l1_tag[s, w] == line:
                            l1_ts[s, w] = t
                            hit = True
                            break
                    if hit:
                        continue
                    l1_misses += 1
                    victim = 0
                    oldest = l1_ts[s, 0]
                    for w in range(1, l1_ways):
                        if l1_ts[s, w] < oldest:
                            oldest = l1_ts[s, w]
                            victim = w
                    l1_tag[s, victim] = line
                    l1_ts[s, victim] = t

                    line2 = addrs[a] >> l2_shift
                    s2 = line2 & (l2_sets - 1)
                    hit2 = False
                    for w in range(l2_ways):
                        if l2_tag[s2, w] == line2:
                            l2_ts[s2, w] = t
                            hit2 = True
                            break
                    if hit2:
                        continue
                    l2_misses += 1
                    victim = 0
                    oldest = l2_ts[s2, 0]
                    for w in range(1, l2_ways):
                        if l2_ts[s2, w] < oldest:
                            oldest = l2_ts[s2, w]
                            victim = w
                    l2_tag[s2, victim] = line2
                    l2_ts[s2, victim] = t
    return l1_misses, l2_misses


_fused_kernel = None
_fused_failed = False


def _get_fused_kernel():
    global _fused_kernel, _fused_failed
    if _fused_kernel is None and not _fused_failed:
        try:
            from numba import njit

            _fused_kernel = njit(cache=True)(_matmul_cache_loop)
        except ImportError:  # pragma: no cover - numba is a declared dependency
            _fused_failed = True
    return _fused_kernel


def count_matmul_l2_accesses(
    spec: MatMulSpec,
    l1: CacheConfig = DEFAULT_L1,
    l2: CacheConfig = DEFAULT_L2,
    use_fused: bool | None = None,
) -> int:
    """L1 miss count (= L2 accesses) for one matmul run.

    Uses the fused streaming kernel when numba is available so large
    dimension sweeps avoid building multi-hundred-megabyte traces; falls
    back to the two-step trace-then-simulate path otherwise.
    """
    if l2.size < l1.size:
        raise ValueError("L2 must be at least as large as L1")
    kernel = _get_fused_kernel() if use_fused in (None, True) else None
    if kernel is None:
        if use_fused is True:
            raise RuntimeError("fused kernel requested but numba is unavailable")
        return simulate_cache(gen_matmul_trace(spec), l1, l2).l2_accesses
    l1_misses, _ = kernel(
        spec.n, spec.k, spec.m, spec.element_size,
        spec.base_a, spec.base_b, spec.base_c,
        l1.sets, l1.associativity, l1.line_shift,
        l2.sets, l2.associativity, l2.line_shift,
    )
    return int(l1_misses)


# ---------------------------------------------------------------------------
# Dimension sweep


def sweep_dimension(
    base: MatMulSpec,
    dim: str,
    l1: CacheConfig = DEFAULT_L1,
    l2: CacheConfig = DEFAULT_L2,
    *,
    start: int = 64,
    step: int = 128,
    limit: int = 4096,
    fixed_value: int = 32,
) -> list[tuple[int, int]]:
    """L2 accesses as one matrix dimension grows and the others stay fixed.

    ``dim`` is one of "N", "K", "M".  The swept value runs start,
    start+step, ... while it does not exceed ``limit``; the two other
    dimensions are pinned to ``fixed_value``.  Returns (value, l2_accesses)
    pairs in sweep order.
    """
    if dim not in SWEEP_DIMS:
        raise ValueError(f"dim must be one of {SWEEP_DIMS}, got {dim!r}")
    if start < 1 or step < 1 or limit < 1:
        raise ValueError("start, step and limit must be positive")

    curve: list[tuple[int, int]] = []
    value = start
    while value <= limit:
        dims = {"N": fixed_value, "K": fixed_value, "M": fixed_value}
        dims[dim] = value
        spec = base.with_dims(n=dims["N"], k=dims["K"], m=dims["M"])
        curve.append((value, count_matmul_l2_accesses(spec, l1, l2)))
        value += step
    return curve


def sweep_to_csv(curves: dict[str, list[tuple[int, int]]]) -> str:
    """Render sweep curves as ``dim,value,l2_accesses`` CSV text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dim", "value", "l2_accesses"])
    for dim in sorted(curves):
        for value, accesses in curves[dim]:
            writer.writerow([dim, value, accesses])
    return buf.getvalue()


def stats_to_dict(stats: CacheStats, include_regions: bool = True) -> dict:
    doc = {
        "l1_accesses": stats.l1_accesses,
        "l1_misses": stats.l1_misses,
        "l2_accesses": stats.l2_accesses,
        "l2_misses": stats.l2_misses,
    }
    if include_regions:
        doc["per_region_l2"] = stats.per_region_l2.tolist()
    return doc


def matmul_spec_from_dict(doc: dict) -> MatMulSpec:
    return MatMulSpec(
        n=int(doc["n"]),
        k=int(doc["k"]),
        m=int(doc["m"]),
        element_size=int(doc.get("element_size", 4)),
        base_a=int(doc.get("base_a", 0)),
        base_b=int(doc["base_b"]) if "base_b" in doc else None,
        base_c=int(doc["base_c"]) if "base_c" in doc else None,
    )


def load_matmul_spec(path: str | Path) -> MatMulSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return matmul_spec_from_dict(json.load(fh))
