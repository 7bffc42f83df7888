"""Denoising by dual patch orderings and learned 1D filters.

Patches are split into smooth and edge/texture classes by a noise-relative
std threshold; each class gets its own ordering and its own learned FIR
filter. The map from stacked filter taps h = [h_smooth; h_edge] to the
reconstructed image is linear, so the filters are trained in closed form
from clean/noisy image pairs via the normal equations.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .corruption import CorruptionSpec, corrupt
from .ordering import EUCLIDEAN, Ordering, SolverParams, build_ordering, empty_ordering
from .patches import (
    PatchSet,
    coverage_weights,
    extract_patches,
    offset_to_shift,
    stack_columns,
    unstack_columns,
)
from .pipeline import OrderingPlan, PlanGroup, run_plans
from concurrent.futures import ThreadPoolExecutor


@dataclass(frozen=True)
class DenoiseIterationParams:
    patch_side: int
    window_side: int
    threshold_factor: float  # smooth iff std(patch) < threshold_factor * sigma
    epsilon: float = 1e6
    k_orderings: int = 10
    filter_len: int = 25

    @property
    def solver(self) -> SolverParams:
        return SolverParams(window_side=self.window_side, epsilon=self.epsilon)


# Shipped two-iteration parameter schedules, keyed by noise std.
DEFAULT_SCHEDULES: dict[int, tuple[DenoiseIterationParams, ...]] = {
    10: (
        DenoiseIterationParams(patch_side=6, window_side=111, threshold_factor=1.6),
        DenoiseIterationParams(patch_side=4, window_side=441, threshold_factor=0.8),
    ),
    25: (
        DenoiseIterationParams(patch_side=8, window_side=111, threshold_factor=1.2),
        DenoiseIterationParams(patch_side=4, window_side=441, threshold_factor=0.4),
    ),
    50: (
        DenoiseIterationParams(patch_side=12, window_side=111, threshold_factor=1.1),
        DenoiseIterationParams(patch_side=5, window_side=441, threshold_factor=0.2),
    ),
}


def default_schedule(sigma: float) -> tuple[DenoiseIterationParams, ...]:
    """The shipped iteration parameters for the nearest supported noise level."""
    key = min(DEFAULT_SCHEDULES, key=lambda s: abs(s - sigma))
    return DEFAULT_SCHEDULES[key]


@dataclass
class PatchClassification:
    smooth: np.ndarray  # bool per patch, True = smooth
    threshold_factor: float
    sigma: float

    @property
    def smooth_indices(self) -> np.ndarray:
        return np.flatnonzero(self.smooth).astype(np.int64)

    @property
    def edge_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.smooth).astype(np.int64)


def classify_patches(patches: PatchSet, threshold_factor: float, sigma: float) -> PatchClassification:
    """Label patches smooth when their population std falls below C * sigma."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    std = patches.values.std(axis=1)
    return PatchClassification(
        smooth=std < threshold_factor * sigma, threshold_factor=threshold_factor, sigma=sigma
    )


def split_orderings(
    patches: PatchSet,
    cls: PatchClassification,
    params: SolverParams,
    rng: np.random.Generator | int | None = None,
    kind: str = EUCLIDEAN,
) -> tuple[Ordering, Ordering]:
    """Independent orderings over the smooth and edge patch subsets."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    out = []
    for idx in (cls.smooth_indices, cls.edge_indices):
        if idx.size == 0:
            out.append(empty_ordering())
        else:
            out.append(build_ordering(patches, kind=kind, params=params, rng=rng, subset=idx))
    return out[0], out[1]


@dataclass
class FilterBank:
    """The two learned filters, smooth-class taps and edge-class taps."""

    smooth: np.ndarray
    edge: np.ndarray
    sigma: float = 0.0
    iteration: int = 1

    def __post_init__(self) -> None:
        self.smooth = np.asarray(self.smooth, dtype=np.float64)
        self.edge = np.asarray(self.edge, dtype=np.float64)
        if self.smooth.shape != self.edge.shape or self.smooth.ndim != 1:
            raise ValueError("filters must be 1D and of equal length")
        if self.smooth.size % 2 == 0:
            raise ValueError("filter length must be odd")

    @property
    def length(self) -> int:
        return self.smooth.size

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.smooth, self.edge])


def impulse_bank(length: int = 25, sigma: float = 0.0, iteration: int = 1) -> FilterBank:
    taps = np.zeros(length)
    taps[(length - 1) // 2] = 1.0
    return FilterBank(smooth=taps, edge=taps.copy(), sigma=sigma, iteration=iteration)


def save_bank(path: str | Path, bank: FilterBank) -> None:
    """Text format: sigma, iteration, L header lines then 2L taps (smooth
    first), one per line with 17 significant digits (bit-exact round trip)."""
    lines = [f"sigma {bank.sigma:.17g}", f"iteration {bank.iteration}", f"L {bank.length}"]
    lines += [f"{t:.17g}" for t in bank.stacked]
    Path(path).write_text("\n".join(lines) + "\n")


def load_bank(path: str | Path) -> FilterBank:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        sigma = float(lines[0].split()[1])
        iteration = int(lines[1].split()[1])
        length = int(lines[2].split()[1])
        taps = np.array([float(v) for v in lines[3 : 3 + 2 * length]])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed filter bank file {path}") from exc
    if taps.size != 2 * length:
        raise ValueError(f"filter bank file {path} is missing taps")
    return FilterBank(smooth=taps[:length], edge=taps[length:], sigma=sigma, iteration=iteration)


def filter_signal(values: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Same-size correlation with a centered odd-length kernel; the signal is
    extended symmetrically (half-sample) at both ends, so constants pass
    through scaled by sum(taps)."""
    values = np.asarray(values, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    if taps.size % 2 == 0:
        raise ValueError("filter length must be odd")
    if values.size == 0:
        return values.copy()
    half = (taps.size - 1) // 2
    if half == 0:
        return values * taps[0]
    padded = np.pad(values, half, mode="symmetric")
    return np.convolve(padded, taps[::-1], mode="valid")


@dataclass
class FirFilter:
    taps: np.ndarray

    def apply(self, values: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
        return filter_signal(values, self.taps)


def build_split_plans(
    source_img: np.ndarray,
    sigma: float,
    params: DenoiseIterationParams,
    seed_seq: np.random.SeedSequence,
    bank: FilterBank | None = None,
    threads: int = 1,
) -> tuple[list[OrderingPlan], PatchClassification]:
    """Classify the source image's patches and build K smooth/edge plan pairs."""
    patches = extract_patches(source_img, params.patch_side)
    cls = classify_patches(patches, params.threshold_factor, sigma)
    smooth_idx = cls.smooth_indices
    edge_idx = cls.edge_indices
    op_s = FirFilter(bank.smooth) if bank is not None else None
    op_e = FirFilter(bank.edge) if bank is not None else None
    seeds = seed_seq.spawn(params.k_orderings)

    def one(k: int) -> OrderingPlan:
        rng = np.random.default_rng(seeds[k])
        ord_s, ord_e = split_orderings(patches, cls, params.solver, rng=rng)
        return OrderingPlan(
            groups=[
                PlanGroup(indices=smooth_idx, ordering=ord_s, operator=op_s),
                PlanGroup(indices=edge_idx, ordering=ord_e, operator=op_e),
            ]
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            plans = list(pool.map(one, range(params.k_orderings)))
    else:
        plans = [one(k) for k in range(params.k_orderings)]
    return plans, cls


def response_matrix(
    z: np.ndarray, patch_side: int, plans: list[OrderingPlan], filter_len: int
) -> np.ndarray:
    """The dense N x 2L linear map from stacked filter taps to the
    reconstructed (column-stacked) image, for frozen orderings.

    Column blocks follow the plan group order: the first L columns respond to
    smooth-class taps, the last L to edge-class taps. Equivalent, by
    linearity, to probing the full pipeline with unit-impulse banks.
    """
    z = np.asarray(z, dtype=np.float64)
    h, w = z.shape
    grid_h, grid_w = h - patch_side + 1, w - patch_side + 1
    count = grid_h * grid_w
    half = (filter_len - 1) // 2
    n_groups = len(plans[0].groups)
    q = np.zeros((h * w, n_groups * filter_len), dtype=np.float64)

    rows_grid = np.arange(grid_h, dtype=np.int64)
    cols_grid = np.arange(grid_w, dtype=np.int64)
    for j in range(patch_side * patch_side):
        dr, dc = offset_to_shift(j, patch_side)
        sub = z[dr : dr + grid_h, dc : dc + grid_w].flatten(order="F")
        # canvas_idx[i] = column-stacked image position of subimage sample i
        canvas_idx = ((cols_grid + dc)[:, None] * h + (rows_grid + dr)[None, :]).ravel()
        for plan in plans:
            for g, group in enumerate(plan.groups):
                if group.positions.size == 0:
                    continue
                signal = sub[group.positions]
                padded = np.pad(signal, half, mode="symmetric") if half else signal
                windows = sliding_window_view(padded, filter_len)
                rows = canvas_idx[group.indices]
                q[rows, g * filter_len : (g + 1) * filter_len] += windows[group.ordering.inverse]
    weights = stack_columns(coverage_weights(z.shape, patch_side))
    q /= len(plans) * weights[:, None]
    return q


def solve_normal_equations(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, bool]:
    """Solve A h = b; on a singular matrix fall back to the SVD least-squares
    (min-norm) solution with a warning."""
    try:
        h = np.linalg.solve(a, b)
        if np.all(np.isfinite(h)):
            return h, False
    except np.linalg.LinAlgError:
        pass
    warnings.warn(
        "normal matrix is singular; falling back to an SVD least-squares solve",
        RuntimeWarning,
        stacklevel=2,
    )
    h, *_ = np.linalg.lstsq(a, b, rcond=None)
    return h, True


@dataclass
class TrainReport:
    residuals: list[float]  # sum over images of ||y - Q h||^2, per iteration
    singular: list[bool]
    wall_ms: list[float]


def train_filter_banks(
    pairs: list[tuple[np.ndarray, float]],
    schedule: tuple[DenoiseIterationParams, ...],
    seed: int | None = None,
    threads: int = 1,
) -> tuple[list[FilterBank], TrainReport]:
    """Learn one filter bank per iteration from (clean image, sigma) pairs.

    Noisy training inputs are synthesized internally. Iteration i > 1 builds
    its orderings and classification from iteration i-1's reconstruction of
    each training image while the filters keep acting on the original noisy
    samples, mirroring inference exactly.
    """
    if not pairs:
        raise ValueError("training set is empty")
    root = np.random.SeedSequence(seed)
    noise_seeds = root.spawn(len(pairs))
    iter_seqs = root.spawn(len(schedule))

    cleans = [np.asarray(y, dtype=np.float64) for y, _ in pairs]
    sigmas = [float(s) for _, s in pairs]
    noisy = [
        corrupt(y, CorruptionSpec("additive-gaussian", sigma=s, rng_seed=ns.generate_state(1)[0]))[0]
        for y, s, ns in zip(cleans, sigmas, noise_seeds)
    ]

    banks: list[FilterBank] = []
    report = TrainReport(residuals=[], singular=[], wall_ms=[])
    estimates = list(noisy)
    for it, params in enumerate(schedule):
        t0 = time.perf_counter()
        length = params.filter_len
        a = np.zeros((2 * length, 2 * length))
        b = np.zeros(2 * length)
        qs = []
        image_seqs = iter_seqs[it].spawn(len(pairs))
        for g, (y, z) in enumerate(zip(cleans, noisy)):
            plans, _ = build_split_plans(
                estimates[g], sigmas[g], params, image_seqs[g], threads=threads
            )
            q = response_matrix(z, params.patch_side, plans, length)
            yf = stack_columns(y)
            a += q.T @ q
            b += q.T @ yf
            qs.append(q)
        h, singular = solve_normal_equations(a, b)
        bank = FilterBank(
            smooth=h[:length], edge=h[length:], sigma=float(np.mean(sigmas)), iteration=it + 1
        )
        banks.append(bank)
        residual = 0.0
        for g, (y, q) in enumerate(zip(cleans, qs)):
            rec = q @ h
            residual += float(((stack_columns(y) - rec) ** 2).sum())
            estimates[g] = unstack_columns(rec, y.shape)
        report.residuals.append(residual)
        report.singular.append(singular)
        report.wall_ms.append((time.perf_counter() - t0) * 1e3)
    return banks, report


@dataclass
class DenoiseResult:
    estimates: list[np.ndarray]  # one per iteration
    distance_evals: list[int]
    wall_ms: list[float]

    @property
    def final(self) -> np.ndarray:
        return self.estimates[-1]


def denoise(
    z: np.ndarray,
    sigma: float,
    banks: list[FilterBank],
    schedule: tuple[DenoiseIterationParams, ...] | None = None,
    seed: int | None = None,
    threads: int = 1,
) -> DenoiseResult:
    """Run the full multi-iteration denoiser on a noisy image.

    Iteration 1 orders the noisy image's own patches; iteration 2 reorders
    using patches of the iteration-1 estimate (classification still uses the
    input noise std) while filtering the original noisy subimages.
    """
    z = np.asarray(z, dtype=np.float64)
    if schedule is None:
        schedule = default_schedule(sigma)
    if len(banks) < len(schedule):
        raise ValueError(f"need {len(schedule)} filter banks, got {len(banks)}")
    root = np.random.SeedSequence(seed)
    iter_seqs = root.spawn(len(schedule))
    result = DenoiseResult(estimates=[], distance_evals=[], wall_ms=[])
    source = z
    for it, params in enumerate(schedule):
        t0 = time.perf_counter()
        plans, _ = build_split_plans(
            source, sigma, params, iter_seqs[it], bank=banks[it], threads=threads
        )
        est = run_plans(z, None, params.patch_side, plans, threads=threads)
        result.estimates.append(est)
        result.distance_evals.append(sum(p.distance_evals for p in plans))
        result.wall_ms.append((time.perf_counter() - t0) * 1e3)
        source = est
    return result
