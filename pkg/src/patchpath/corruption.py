"""Test-input corruption (additive gaussian noise, random pixel erasure) and PSNR."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PSNR_PEAK = 255.0


@dataclass(frozen=True)
class CorruptionSpec:
    """How to corrupt a clean image.

    kind: "additive-gaussian" (sigma = noise std, intensity units) or
    "random-erasure" (fraction of pixels zeroed and marked missing).
    """

    kind: str
    sigma: float = 0.0
    fraction: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("additive-gaussian", "random-erasure"):
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("erasure fraction must be in [0, 1]")


def corrupt(img: np.ndarray, spec: CorruptionSpec) -> tuple[np.ndarray, np.ndarray]:
    """Apply the corruption, returning (corrupted image, presence mask).

    Gaussian noise is NOT clipped to [0, 255]; clipping happens only at
    image export. Erased pixels are zeroed and flagged False in the mask;
    downstream logic relies on the mask, never on the zero sentinel.
    """
    img = np.asarray(img, dtype=np.float64)
    rng = np.random.default_rng(spec.rng_seed)
    mask = np.ones(img.shape, dtype=bool)
    if spec.kind == "additive-gaussian":
        if spec.sigma == 0.0:
            return img.copy(), mask
        return img + spec.sigma * rng.standard_normal(img.shape), mask

    n_missing = int(math.floor(spec.fraction * img.size))
    flat = mask.ravel()
    flat[rng.choice(img.size, size=n_missing, replace=False)] = False
    out = np.where(mask, img, 0.0)
    return out, mask


def psnr(reference: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against a 255 intensity peak.

    Returns math.inf when the two images agree exactly.
    """
    reference = np.asarray(reference, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if reference.shape != test.shape:
        raise ValueError(f"shape mismatch {reference.shape} vs {test.shape}")
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PSNR_PEAK * PSNR_PEAK / mse)
