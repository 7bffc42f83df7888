"""Overlapping patch extraction and subimage plumbing.

Conventions (used everywhere in the package):

* A patch is the ``side x side`` window whose top-left corner sits at grid
  cell (r, c), 0 <= r < H-side+1, 0 <= c < W-side+1.
* Patches are enumerated column by column starting from the top-left one:
  patch index i = c * grid_h + r.
* Within a patch, pixels are column-stacked the same way: in-patch offset
  j = dc * side + dr addresses image pixel (r + dr, c + dc).
* Subimage j is the (grid_h x grid_w) image collecting offset-j pixels of
  every patch; its column-stacked vector is exactly row j of the patch
  matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass
class PatchSet:
    """All overlapping patches of one image, as rows of a (count, n) matrix."""

    side: int
    grid_shape: tuple[int, int]  # (grid_h, grid_w) = image shape - side + 1
    values: np.ndarray  # (count, n) float64, row i = column-stacked patch i
    visible: np.ndarray | None = None  # (count, n) bool, True = pixel present
    _values32: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def values32(self) -> np.ndarray:
        """float32 copy used by the path solver (cached)."""
        if self._values32 is None:
            self._values32 = np.ascontiguousarray(self.values, dtype=np.float32)
        return self._values32

    def grid_coords(self, indices: np.ndarray | None = None) -> np.ndarray:
        """(k, 2) array of (row, col) grid coordinates for patch indices."""
        grid_h = self.grid_shape[0]
        idx = np.arange(self.count) if indices is None else np.asarray(indices)
        return np.stack([idx % grid_h, idx // grid_h], axis=1)

    def patch_matrix(self) -> np.ndarray:
        """The (n, count) matrix whose rows are column-stacked subimages."""
        return self.values.T


def offset_to_shift(offset_index: int, side: int) -> tuple[int, int]:
    """In-patch offset index -> (dr, dc) under the column-stacking convention."""
    n = side * side
    if not 0 <= offset_index < n:
        raise ValueError(f"offset index {offset_index} out of range for side {side}")
    return offset_index % side, offset_index // side


def extract_patches(img: np.ndarray, side: int, mask: np.ndarray | None = None) -> PatchSet:
    """Extract every overlapping side x side patch of ``img``.

    When ``mask`` is given, per-patch visibility flags are populated from it.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if side < 1 or side > min(h, w):
        raise ValueError(f"patch side {side} does not fit a {h}x{w} image")
    grid_h, grid_w = h - side + 1, w - side + 1

    # windows[r, c, dr, dc] = img[r+dr, c+dc]; reorder so that
    # values[c*grid_h + r, dc*side + dr] follows the column-stacked layout.
    windows = sliding_window_view(img, (side, side))
    values = np.ascontiguousarray(
        windows.transpose(1, 0, 3, 2).reshape(grid_h * grid_w, side * side)
    )

    visible = None
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != img.shape:
            raise ValueError("mask dimensions must match the image")
        mwin = sliding_window_view(mask, (side, side))
        visible = np.ascontiguousarray(
            mwin.transpose(1, 0, 3, 2).reshape(grid_h * grid_w, side * side)
        )
    return PatchSet(side=side, grid_shape=(grid_h, grid_w), values=values, visible=visible)


def extract_subimage(img: np.ndarray, offset_index: int, side: int) -> np.ndarray:
    """The (H-side+1, W-side+1) subimage collecting offset-j pixels of all patches."""
    img = np.asarray(img)
    h, w = img.shape
    if side > min(h, w):
        raise ValueError(f"patch side {side} does not fit a {h}x{w} image")
    dr, dc = offset_to_shift(offset_index, side)
    return img[dr : dr + h - side + 1, dc : dc + w - side + 1]


def accumulate_subimage(
    canvas: np.ndarray, weights: np.ndarray, sub: np.ndarray, offset_index: int, side: int
) -> None:
    """Add one reconstructed subimage back onto the canvas in place."""
    h, w = canvas.shape
    grid_h, grid_w = h - side + 1, w - side + 1
    if sub.shape != (grid_h, grid_w):
        raise ValueError(f"subimage shape {sub.shape} != {(grid_h, grid_w)}")
    dr, dc = offset_to_shift(offset_index, side)
    canvas[dr : dr + grid_h, dc : dc + grid_w] += sub
    weights[dr : dr + grid_h, dc : dc + grid_w] += 1.0


def coverage_weights(shape: tuple[int, int], side: int) -> np.ndarray:
    """Per-pixel count of patches covering it (n at interior pixels, 1 at corners)."""
    weights = np.zeros(shape, dtype=np.float64)
    grid_h, grid_w = shape[0] - side + 1, shape[1] - side + 1
    for j in range(side * side):
        dr, dc = offset_to_shift(j, side)
        weights[dr : dr + grid_h, dc : dc + grid_w] += 1.0
    return weights


def stack_columns(img2d: np.ndarray) -> np.ndarray:
    """Column-stack a 2D array into a vector (down each column, left to right)."""
    return np.asarray(img2d).flatten(order="F")


def unstack_columns(vec: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return np.asarray(vec).reshape(shape, order="F")
