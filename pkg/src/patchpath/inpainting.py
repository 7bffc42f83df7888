"""Inpainting: masked-distance orderings plus 1D monotone cubic interpolation
of the missing samples along each permuted subimage."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .ordering import MASKED, SolverParams
from .pipeline import OrderingPlan, PipelineConfig, build_plans, run_plans


class InsufficientDataError(ValueError):
    """Fewer than two known samples: interpolation is undefined."""


def cubic_fill(values: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Fill missing samples by shape-preserving piecewise-cubic (PCHIP)
    interpolation over the known samples' index positions.

    Known samples pass through unchanged; missing samples beyond the first or
    last known one take the nearest known value (constant extrapolation).
    """
    values = np.asarray(values, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    if values.shape != valid.shape:
        raise ValueError("values and validity flags differ in length")
    known = np.flatnonzero(valid)
    if known.size < 2:
        raise InsufficientDataError(f"need >= 2 known samples, have {known.size}")
    out = values.copy()
    missing = np.flatnonzero(~valid)
    if missing.size == 0:
        return out
    interp = PchipInterpolator(known, values[known], extrapolate=False)
    # clipping query points to the known span realizes constant end extension
    out[missing] = interp(np.clip(missing, known[0], known[-1]))
    return out


class CubicGapFill:
    """Operator form of cubic_fill for the reconstruction engine."""

    def apply(self, values: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
        if valid is None or valid.all():
            return np.asarray(values, dtype=np.float64).copy()
        return cubic_fill(values, valid)


@dataclass(frozen=True)
class InpaintIterationParams:
    patch_side: int
    window_side: int
    epsilon: float
    k_orderings: int = 10

    @property
    def solver(self) -> SolverParams:
        return SolverParams(window_side=self.window_side, epsilon=self.epsilon)


# Shipped three-iteration schedule for heavy random erasure.
DEFAULT_SCHEDULE: tuple[InpaintIterationParams, ...] = (
    InpaintIterationParams(patch_side=16, window_side=9, epsilon=1e2),
    InpaintIterationParams(patch_side=8, window_side=43, epsilon=1e4),
    InpaintIterationParams(patch_side=5, window_side=55, epsilon=1e8),
)


@dataclass
class InpaintResult:
    estimates: list[np.ndarray]
    distance_evals: list[int]
    spatial_fallbacks: list[int]
    wall_ms: list[float]

    @property
    def final(self) -> np.ndarray:
        return self.estimates[-1]


def inpaint(
    z: np.ndarray,
    mask: np.ndarray,
    schedule: tuple[InpaintIterationParams, ...] = DEFAULT_SCHEDULE,
    seed: int | None = None,
    threads: int = 1,
    reset_known: bool = True,
) -> InpaintResult:
    """Recover missing pixels (mask False) of ``z``.

    Iteration 1 orders the corrupted patches under the masked distance; later
    iterations reorder using the full patches of the previous estimate but
    keep interpolating the original known samples at originally-missing
    positions. With ``reset_known`` the known pixels are copied back verbatim
    into each estimate.
    """
    z = np.asarray(z, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != z.shape:
        raise ValueError("mask dimensions must match the image")
    if mask.sum() < 2:
        raise InsufficientDataError("mask leaves fewer than two known pixels")
    root = np.random.SeedSequence(seed)
    iter_seqs = root.spawn(len(schedule))
    operator = CubicGapFill()
    result = InpaintResult(estimates=[], distance_evals=[], spatial_fallbacks=[], wall_ms=[])
    source = z
    source_mask: np.ndarray | None = mask
    for it, params in enumerate(schedule):
        t0 = time.perf_counter()
        cfg = PipelineConfig(
            operator=operator,
            k_orderings=params.k_orderings,
            patch_side=params.patch_side,
            solver=params.solver,
            distance=MASKED if it == 0 else "auto",
            seed=None,
            threads=threads,
        )
        plans = _build_with_seeds(source, source_mask, cfg, iter_seqs[it])
        est = run_plans(z, mask, params.patch_side, plans, threads=threads)
        if reset_known:
            est[mask] = z[mask]
        result.estimates.append(est)
        result.distance_evals.append(sum(p.distance_evals for p in plans))
        result.spatial_fallbacks.append(
            sum(
                g.ordering.stats.spatial_fallbacks
                for p in plans
                for g in p.groups
                if g.ordering.stats is not None
            )
        )
        result.wall_ms.append((time.perf_counter() - t0) * 1e3)
        source = est
        source_mask = None  # later iterations order reconstructed, full patches
    return result


def _build_with_seeds(
    source: np.ndarray,
    source_mask: np.ndarray | None,
    cfg: PipelineConfig,
    seq: np.random.SeedSequence,
) -> list[OrderingPlan]:
    # build_plans spawns from cfg.seed; rebuild the same structure from an
    # existing SeedSequence so iterations stay independent but reproducible
    child = seq.generate_state(1)[0]
    cfg = PipelineConfig(
        operator=cfg.operator,
        k_orderings=cfg.k_orderings,
        patch_side=cfg.patch_side,
        solver=cfg.solver,
        distance=cfg.distance,
        seed=int(child),
        threads=cfg.threads,
    )
    return build_plans(source, source_mask, cfg)
