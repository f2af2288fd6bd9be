"""Gridded seismic sections, vectorization and non-overlapping patch tiling."""
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SeismicSection:
    """A dense (n_channels, n_time) grid of finite samples.

    Rows are channels and columns are time samples, so the row-major
    flattening is channel-then-time. ``np.asarray(section)`` returns the grid.
    """

    samples: np.ndarray

    def __post_init__(self):
        a = np.array(self.samples, dtype=np.float64, copy=True)
        if a.ndim != 2:
            raise ValueError(f"section samples must be 2D, got shape {a.shape}")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"section dims must be positive, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("section samples must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_time(self):
        return self.samples.shape[1]

    @property
    def shape(self):
        return self.samples.shape

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.samples
        return self.samples.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, SeismicSection):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.samples, other.samples)

    __hash__ = None


def as_grid(x):
    """2D float array view of a section or array-like."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2D grid, got shape {a.shape}")
    return a


def to_vector(section):
    """Row-major (channel-then-time) vector of length n_channels * n_time."""
    return as_grid(section).reshape(-1).copy()


def from_vector(vector, n_channels, n_time):
    v = np.asarray(vector, dtype=np.float64)
    if v.ndim != 1 or v.size != n_channels * n_time:
        raise ValueError(
            f"vector of size {v.size} cannot form a {n_channels}x{n_time} section"
        )
    return SeismicSection(v.reshape(n_channels, n_time))


def rms(x):
    """Root-mean-square amplitude."""
    a = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(np.mean(a * a)))


@dataclass(frozen=True)
class PatchLayout:
    """Non-overlapping tiling of a grid; edge patches may be truncated."""

    grid_shape: tuple
    patch_h: int
    patch_w: int
    origins: list = field(default_factory=list)
    dims: list = field(default_factory=list)

    @property
    def n_rows(self):
        return -(-self.grid_shape[0] // self.patch_h)

    @property
    def n_cols(self):
        return -(-self.grid_shape[1] // self.patch_w)

    def __len__(self):
        return len(self.origins)


def patch_layout(grid_shape, patch_h, patch_w):
    if patch_h < 1 or patch_w < 1:
        raise ValueError(f"patch dims must be >= 1, got {patch_h}x{patch_w}")
    rows, cols = grid_shape
    origins, dims = [], []
    for r in range(0, rows, patch_h):
        for c in range(0, cols, patch_w):
            origins.append((r, c))
            dims.append((min(patch_h, rows - r), min(patch_w, cols - c)))
    return PatchLayout((rows, cols), patch_h, patch_w, origins, dims)


def partition_patches(section, patch_h, patch_w):
    """Split a grid into row-major ordered patches; returns ``(layout, patches)``."""
    grid = as_grid(section)
    layout = patch_layout(grid.shape, patch_h, patch_w)
    patches = [
        grid[r:r + h, c:c + w].copy() for (r, c), (h, w) in zip(layout.origins, layout.dims)
    ]
    return layout, patches


def assemble_patches(layout, patches):
    """Inverse of :func:`partition_patches`."""
    if len(patches) != len(layout.origins):
        raise ValueError(
            f"layout has {len(layout.origins)} patches but {len(patches)} were given"
        )
    out = np.empty(layout.grid_shape, dtype=np.float64)
    for k, ((r, c), (h, w), p) in enumerate(zip(layout.origins, layout.dims, patches)):
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (h, w):
            raise ValueError(f"patch {k} has shape {p.shape}, layout expects {(h, w)}")
        out[r:r + h, c:c + w] = p
    return SeismicSection(out)
