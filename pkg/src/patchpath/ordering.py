"""Patch orderings: distances, the windowed randomized greedy path solver,
permutation application, and ordering file I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _solver
from .patches import PatchSet

EUCLIDEAN = "euclidean-mean"
MASKED = "masked-mean"

ORDERING_MAGIC = b"PORD-ORD"


class NoOverlapError(ValueError):
    """Masked distance is undefined: the patches share no visible pixel."""


@dataclass(frozen=True)
class SolverParams:
    """Window size B (in patches) and softmax temperature for the path solver."""

    window_side: int
    epsilon: float

    def __post_init__(self) -> None:
        if self.window_side < 1:
            raise ValueError("window side must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def before(self) -> int:
        return (self.window_side - 1) // 2

    @property
    def after(self) -> int:
        return self.window_side // 2


@dataclass
class SolverStats:
    window_evals: int
    fallback_evals: int
    global_fallbacks: int
    spatial_fallbacks: int
    steps: int

    @property
    def distance_evals(self) -> int:
        return self.window_evals + self.fallback_evals


@dataclass
class Ordering:
    """A Hamiltonian path over a patch set (or a subset of it).

    ``forward[k]`` is the (subset-local) patch index visited k-th;
    ``inverse`` undoes it. ``path_cost`` sums the patch distances actually
    chosen along the path; spatial-fallback steps are excluded from the sum
    and flagged in ``spatial_steps``.
    """

    forward: np.ndarray
    inverse: np.ndarray
    path_cost: float
    spatial_steps: np.ndarray | None = None
    stats: SolverStats | None = None

    @property
    def size(self) -> int:
        return self.forward.shape[0]


def empty_ordering() -> Ordering:
    z = np.empty(0, dtype=np.int64)
    return Ordering(forward=z, inverse=z.copy(), path_cost=0.0)


def patch_distance(
    a: np.ndarray,
    b: np.ndarray,
    kind: str = EUCLIDEAN,
    visible_a: np.ndarray | None = None,
    visible_b: np.ndarray | None = None,
) -> float:
    """Distance between two patch vectors.

    euclidean-mean: squared Euclidean distance divided by the patch dimension.
    masked-mean: mean squared difference over pixels visible in both patches;
    raises NoOverlapError when no pixel is shared.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("patch dimension mismatch")
    if kind == EUCLIDEAN:
        d = a - b
        return float(d @ d) / a.size
    if kind == MASKED:
        if visible_a is None or visible_b is None:
            raise ValueError("masked-mean distance requires visibility flags")
        both = np.asarray(visible_a, bool) & np.asarray(visible_b, bool)
        m = int(both.sum())
        if m == 0:
            raise NoOverlapError("patches share no visible pixel")
        d = a[both] - b[both]
        return float(d @ d) / m
    raise ValueError(f"unknown distance kind {kind!r}")


def build_ordering(
    patches: PatchSet,
    kind: str = EUCLIDEAN,
    params: SolverParams = SolverParams(window_side=111, epsilon=1e6),
    rng: np.random.Generator | int | None = None,
    subset: np.ndarray | None = None,
    start_index: int | None = None,
) -> Ordering:
    """Chain the patches (or the given subset) into an approximate shortest path.

    Start patch is drawn uniformly from the RNG unless ``start_index``
    (subset-local) forces it. The search for each successor is restricted to
    the B x B window of grid coordinates centered on the current patch; see
    the solver kernels for the fallback rules when the window is exhausted.
    Deterministic for a fixed seed.
    """
    if kind not in (EUCLIDEAN, MASKED):
        raise ValueError(f"unknown distance kind {kind!r}")
    if kind == MASKED and patches.visible is None:
        raise ValueError("masked-mean ordering requires patch visibility flags")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)

    total = patches.count
    if subset is not None:
        subset = np.asarray(subset, dtype=np.int64)
        count = subset.shape[0]
    else:
        count = total
    if count == 0:
        raise ValueError("empty patch set")

    if start_index is None:
        start_local = int(rng.integers(count))
    else:
        if not 0 <= start_index < count:
            raise ValueError("start index out of range")
        start_local = int(start_index)
    start_global = int(subset[start_local]) if subset is not None else start_local
    uniforms = rng.random(count)

    if subset is None:
        visited = np.zeros(total, dtype=np.uint8)
    else:
        visited = np.ones(total, dtype=np.uint8)
        visited[subset] = 0

    grid_h, grid_w = patches.grid_shape
    forward_global = np.empty(count, dtype=np.int64)
    counters = np.zeros(_solver.N_COUNTERS, dtype=np.int64)
    values32 = patches.values32
    unrestricted = params.before >= max(grid_h, grid_w) - 1 and params.after >= max(grid_h, grid_w) - 1

    if kind == EUCLIDEAN and unrestricted:
        member = subset if subset is not None else np.arange(count, dtype=np.int64)
        cost = _solver.solve_path_global_euclidean(
            values32,
            float(params.epsilon),
            start_global,
            uniforms,
            member,
            forward_global,
            counters,
        )
        spatial = None
    elif kind == EUCLIDEAN:
        cost = _solver.solve_path_euclidean(
            values32,
            grid_h,
            grid_w,
            params.before,
            params.after,
            float(params.epsilon),
            start_global,
            uniforms,
            visited,
            forward_global,
            counters,
        )
        spatial = None
    else:
        spatial_flag = np.zeros(count, dtype=np.uint8)
        cost = _solver.solve_path_masked(
            values32,
            patches.visible.view(np.uint8),
            grid_h,
            grid_w,
            params.before,
            params.after,
            float(params.epsilon),
            start_global,
            uniforms,
            visited,
            forward_global,
            spatial_flag,
            counters,
        )
        spatial = spatial_flag.astype(bool)

    if subset is None:
        forward = forward_global
    else:
        forward = np.searchsorted(subset, forward_global).astype(np.int64)
    inverse = np.empty(count, dtype=np.int64)
    inverse[forward] = np.arange(count, dtype=np.int64)
    stats = SolverStats(
        window_evals=int(counters[_solver.EVALS_WINDOW]),
        fallback_evals=int(counters[_solver.EVALS_FALLBACK]),
        global_fallbacks=int(counters[_solver.FALLBACKS_GLOBAL]),
        spatial_fallbacks=int(counters[_solver.FALLBACKS_SPATIAL]),
        steps=count - 1,
    )
    return Ordering(
        forward=forward, inverse=inverse, path_cost=float(cost), spatial_steps=spatial, stats=stats
    )


def recompute_path_cost(
    patches: PatchSet, ordering: Ordering, kind: str = EUCLIDEAN, subset: np.ndarray | None = None
) -> float:
    """Independent recomputation of the stored path cost (spatial steps excluded).

    Mirrors the solver arithmetic: float64 math on the float32 patch values.
    """
    fwd = ordering.forward if subset is None else np.asarray(subset)[ordering.forward]
    vals = patches.values32.astype(np.float64)
    a = vals[fwd[:-1]]
    b = vals[fwd[1:]]
    if kind == EUCLIDEAN:
        w = ((a - b) ** 2).sum(axis=1) / patches.dim
    else:
        both = patches.visible[fwd[:-1]] & patches.visible[fwd[1:]]
        m = both.sum(axis=1)
        sq = np.where(both, (a - b) ** 2, 0.0).sum(axis=1)
        w = np.divide(sq, m, out=np.zeros_like(sq), where=m > 0)
    if ordering.spatial_steps is not None:
        w = np.where(ordering.spatial_steps[1:], 0.0, w)
    return float(w.sum())


def permute(signal: np.ndarray, ordering: Ordering) -> np.ndarray:
    """Reorder a signal along the path: out[k] = signal[forward[k]]."""
    signal = np.asarray(signal)
    if signal.shape[0] != ordering.size:
        raise ValueError("signal length does not match the ordering")
    return signal[ordering.forward]


def unpermute(signal: np.ndarray, ordering: Ordering) -> np.ndarray:
    """Inverse of permute: out[forward[k]] = signal[k]."""
    signal = np.asarray(signal)
    if signal.shape[0] != ordering.size:
        raise ValueError("signal length does not match the ordering")
    out = np.empty_like(signal)
    out[ordering.forward] = signal
    return out


def save_ordering(path: str | Path, ordering: Ordering) -> None:
    """Binary ordering cache: magic, u64 count, count u64 forward, f64 cost."""
    with open(path, "wb") as fh:
        fh.write(ORDERING_MAGIC)
        fh.write(struct.pack("<Q", ordering.size))
        fh.write(ordering.forward.astype("<u8").tobytes())
        fh.write(struct.pack("<d", ordering.path_cost))


def load_ordering(path: str | Path) -> Ordering:
    buf = Path(path).read_bytes()
    if buf[:8] != ORDERING_MAGIC:
        raise ValueError("not an ordering file")
    (count,) = struct.unpack("<Q", buf[8:16])
    need = 16 + 8 * count + 8
    if len(buf) < need:
        raise ValueError("truncated ordering file")
    forward = np.frombuffer(buf[16 : 16 + 8 * count], dtype="<u8").astype(np.int64)
    (cost,) = struct.unpack("<d", buf[16 + 8 * count : need])
    inverse = np.empty(count, dtype=np.int64)
    inverse[forward] = np.arange(count, dtype=np.int64)
    return Ordering(forward=forward, inverse=inverse, path_cost=cost)
