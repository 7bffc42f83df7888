"""The generic reconstruction engine: apply K random patch orderings to all
n subimages, run a 1D operator on each permuted signal, put everything back
and average.

An ordering *plan* describes one of the K passes: a partition of the patch
indices into groups, each with its own ordering and 1D operator. Plain
restoration uses a single group covering every patch; the denoiser supplies
smooth/edge pairs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ordering import EUCLIDEAN, MASKED, Ordering, SolverParams, build_ordering
from .patches import PatchSet, coverage_weights, extract_patches, offset_to_shift


class IdentityOperator:
    """Length-preserving no-op, the algebraic oracle for the engine."""

    def apply(self, values: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
        return np.asarray(values, dtype=np.float64).copy()


@dataclass
class PlanGroup:
    indices: np.ndarray  # sorted global patch indices belonging to the group
    ordering: Ordering  # local ordering over those indices
    operator: object | None = None  # anything with .apply(values, valid)
    positions: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        # positions[k] = global sample index visited k-th; gathering a signal
        # by positions is permute(signal[indices]) in one step, and scattering
        # back through it is the matching unpermute.
        self.positions = np.asarray(self.indices, dtype=np.int64)[self.ordering.forward]


@dataclass
class OrderingPlan:
    groups: list[PlanGroup]

    def validate(self, count: int) -> None:
        sizes = sum(g.indices.shape[0] for g in self.groups)
        if sizes != count:
            raise ValueError(f"plan groups cover {sizes} of {count} patches")

    @property
    def distance_evals(self) -> int:
        return sum(
            g.ordering.stats.distance_evals for g in self.groups if g.ordering.stats is not None
        )


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one restoration pass needs (operator plus solver settings)."""

    operator: object
    k_orderings: int = 10
    patch_side: int = 8
    solver: SolverParams = SolverParams(window_side=111, epsilon=1e6)
    distance: str = "auto"  # euclidean-mean | masked-mean | auto (mask decides)
    seed: int | None = None
    threads: int = 1


def _resolve_distance(distance: str, mask: np.ndarray | None) -> str:
    if distance == "auto":
        return MASKED if mask is not None and not mask.all() else EUCLIDEAN
    if distance not in (EUCLIDEAN, MASKED):
        raise ValueError(f"unknown distance kind {distance!r}")
    return distance


def build_plans(
    ordering_img: np.ndarray,
    mask: np.ndarray | None,
    cfg: PipelineConfig,
    operator: object | None = None,
) -> list[OrderingPlan]:
    """Build the K single-group ordering plans from an image's patches."""
    if cfg.k_orderings < 1:
        raise ValueError("need at least one ordering")
    kind = _resolve_distance(cfg.distance, mask)
    patches = extract_patches(ordering_img, cfg.patch_side, mask if kind == MASKED else None)
    op = operator if operator is not None else cfg.operator
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.k_orderings)
    indices = np.arange(patches.count, dtype=np.int64)

    def one(k: int) -> OrderingPlan:
        rng = np.random.default_rng(seeds[k])
        ordering = build_ordering(patches, kind=kind, params=cfg.solver, rng=rng)
        return OrderingPlan(groups=[PlanGroup(indices=indices, ordering=ordering, operator=op)])

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(one, range(cfg.k_orderings)))
    return [one(k) for k in range(cfg.k_orderings)]


def run_plan_pass(
    data: np.ndarray, mask: np.ndarray | None, patch_side: int, plan: OrderingPlan
) -> np.ndarray:
    """One ordering pass over all subimages; returns the unnormalized canvas."""
    h, w = data.shape
    grid_h, grid_w = h - patch_side + 1, w - patch_side + 1
    count = grid_h * grid_w
    plan.validate(count)
    canvas = np.zeros((h, w), dtype=np.float64)
    for j in range(patch_side * patch_side):
        dr, dc = offset_to_shift(j, patch_side)
        sub = data[dr : dr + grid_h, dc : dc + grid_w].flatten(order="F")
        valid = None
        if mask is not None:
            valid = mask[dr : dr + grid_h, dc : dc + grid_w].flatten(order="F")
        out = np.empty(count, dtype=np.float64)
        for group in plan.groups:
            if group.positions.size == 0:
                continue
            signal = sub[group.positions]
            v = valid[group.positions] if valid is not None else None
            out[group.positions] = group.operator.apply(signal, v)
        canvas[dr : dr + grid_h, dc : dc + grid_w] += out.reshape((grid_h, grid_w), order="F")
    return canvas


def run_plans(
    data: np.ndarray,
    mask: np.ndarray | None,
    patch_side: int,
    plans: list[OrderingPlan],
    threads: int = 1,
) -> np.ndarray:
    """Average the K normalized pass results (fixed reduction order, so the
    output is identical for any thread count)."""
    weights = coverage_weights(data.shape, patch_side)

    def one(plan: OrderingPlan) -> np.ndarray:
        return run_plan_pass(data, mask, patch_side, plan) / weights

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, plans))
    else:
        results = [one(p) for p in plans]
    acc = np.zeros_like(data, dtype=np.float64)
    for res in results:
        acc += res
    return acc / len(plans)


def restore(corrupted: np.ndarray, mask: np.ndarray | None, cfg: PipelineConfig) -> np.ndarray:
    """Reconstruct an image: orderings from its own patches, operator applied
    to every permuted subimage, averaged over subimages and orderings."""
    corrupted = np.asarray(corrupted, dtype=np.float64)
    plans = build_plans(corrupted, mask, cfg)
    return run_plans(corrupted, mask, cfg.patch_side, plans, threads=cfg.threads)


def restore_iterated(
    corrupted: np.ndarray,
    mask: np.ndarray | None,
    cfgs: list[PipelineConfig],
    return_all: bool = False,
):
    """Iterated restoration: pass i > 1 rebuilds its orderings from the patches
    of pass i-1's output (full patches), while the operator keeps working on
    the original corrupted samples."""
    if not cfgs:
        raise ValueError("need at least one pipeline config")
    corrupted = np.asarray(corrupted, dtype=np.float64)
    estimates = []
    source = corrupted
    source_mask = mask
    for cfg in cfgs:
        plans = build_plans(source, source_mask, cfg)
        est = run_plans(corrupted, mask, cfg.patch_side, plans, threads=cfg.threads)
        estimates.append(est)
        source = est
        source_mask = None  # reconstructed patches are full
    return estimates if return_all else estimates[-1]
