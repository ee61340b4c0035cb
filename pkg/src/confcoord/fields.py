"""Grid charts, sampled fields, finite-difference stencils, interpolation.

Shared plumbing for the elliptic and Lorentzian solvers and for chart
post-processing.  Grids are axis-aligned boxes (or half-boxes whose last
axis starts at 0) with one uniform spacing h for every axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError

FULL_BOX = "full-box"
HALF_SPACE = "half-space"


@dataclass(frozen=True)
class GridChart:
    """Axis-aligned sampled box with uniform spacing.

    bounds[i] = (lo_i, hi_i); resolution[i] nodes on axis i.  For the
    half-space kind the last axis is the designated boundary direction
    and must start at 0.
    """

    bounds: tuple
    resolution: tuple
    boundary_kind: str = FULL_BOX

    def __post_init__(self):
        if len(self.bounds) != len(self.resolution):
            raise ConfigError("bounds/resolution rank mismatch")
        if any(r < 9 for r in self.resolution):
            raise ConfigError("grid resolution must be >= 9 per axis")
        hs = [(hi - lo) / (r - 1) for (lo, hi), r in zip(self.bounds, self.resolution)]
        if any(h <= 0 for h in hs):
            raise ConfigError("grid bounds must be increasing")
        if max(hs) - min(hs) > 1e-12 * max(hs):
            raise ConfigError(f"grid spacing must be uniform across axes, got {hs}")
        if self.boundary_kind not in (FULL_BOX, HALF_SPACE):
            raise ConfigError(f"unknown boundary kind {self.boundary_kind!r}")
        if self.boundary_kind == HALF_SPACE and abs(self.bounds[-1][0]) > 1e-15:
            raise ConfigError("half-space charts must have lo = 0 on the last axis")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def spacing(self) -> float:
        lo, hi = self.bounds[0]
        return (hi - lo) / (self.resolution[0] - 1)

    @property
    def shape(self) -> tuple:
        return tuple(self.resolution)

    def axes(self):
        return [np.linspace(lo, hi, r) for (lo, hi), r in
                zip(self.bounds, self.resolution)]

    def nodes(self) -> np.ndarray:
        """All grid nodes, shape (prod(resolution), dim), C order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def node_mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def boundary_mask(self) -> np.ndarray:
        """True on nodes lying on any face of the box (the Dirichlet set)."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax, r in enumerate(self.resolution):
            sl = [slice(None)] * self.dim
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = r - 1
            mask[tuple(sl)] = True
        return mask

    def gamma_face_mask(self) -> np.ndarray:
        """The x^n = 0 face of a half-space chart."""
        if self.boundary_kind != HALF_SPACE:
            raise ConfigError("gamma face only exists on half-space charts")
        mask = np.zeros(self.shape, dtype=bool)
        sl = [slice(None)] * self.dim
        sl[-1] = 0
        mask[tuple(sl)] = True
        return mask

    def center_index(self) -> tuple:
        """Node index of the chart center: box center for full boxes, the
        center of the x^n = 0 face for half-space charts."""
        idx = [(r - 1) // 2 for r in self.resolution]
        for ax, r in enumerate(self.resolution[:-1] if self.boundary_kind == HALF_SPACE
                               else self.resolution):
            if r % 2 == 0:
                raise ConfigError("chart center requires odd resolution per axis")
        if self.boundary_kind == HALF_SPACE:
            idx[-1] = 0
        return tuple(idx)

    def center_point(self) -> np.ndarray:
        idx = self.center_index()
        return np.array([ax[i] for ax, i in zip(self.axes(), idx)])

    def interior_band(self, margin: int) -> tuple:
        """Slices selecting nodes at least `margin` nodes from every face."""
        if any(r <= 2 * margin for r in self.resolution):
            raise ConfigError(
                f"band margin {margin} leaves no interior nodes on {self.shape}")
        return tuple(slice(margin, r - margin) for r in self.resolution)


@dataclass
class ScalarField:
    """Scalar samples on a grid chart."""

    chart: GridChart
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape != self.chart.shape:
            raise ConfigError(
                f"sample shape {self.samples.shape} does not match grid "
                f"{self.chart.shape}")

    @classmethod
    def from_function(cls, chart: GridChart, fn) -> "ScalarField":
        pts = chart.nodes()
        vals = np.asarray(fn(pts), dtype=float).reshape(chart.shape)
        return cls(chart, vals)

    def value_at_center(self) -> float:
        return float(self.samples[self.chart.center_index()])

    def copy(self) -> "ScalarField":
        return ScalarField(self.chart, self.samples.copy())


# -- fourth-order stencils ---------------------------------------------------

_D1_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0          # offsets -2..2
_D1_FORWARD = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0      # offsets 0..4
_D2_INTERIOR = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0      # offsets -2..2


def _shift(f: np.ndarray, axis: int, offset: int) -> np.ndarray:
    """f shifted by `offset` nodes along axis (cyclic); callers overwrite
    the rows within |offset| of a face, where the wraparound is wrong."""
    return np.roll(f, -offset, axis=axis)


def derivative1(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order first derivative; central in the interior, one-sided
    (fourth-order, five-point) within two nodes of a face."""
    n = f.shape[axis]
    if n < 5:
        raise DimensionError("derivative stencils need >= 5 nodes per axis")
    out = np.zeros_like(f)
    for c, off in zip(_D1_INTERIOR, range(-2, 3)):
        if c != 0.0:
            out += c * _shift(f, axis, off)
    # one-sided rows at the two first and last indices
    idx = [slice(None)] * f.ndim

    def assign(rows, coeffs, direction):
        for r in rows:
            idx[axis] = r
            acc = np.zeros_like(np.take(f, r, axis=axis))
            for j, c in enumerate(coeffs):
                acc = acc + c * np.take(f, r + direction * j, axis=axis)
            out[tuple(idx)] = acc

    assign((0, 1), _D1_FORWARD, +1)
    assign((n - 2, n - 1), -_D1_FORWARD, -1)
    return out / h


def derivative2(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order pure second derivative along one axis (central);
    within two nodes of a face the values are filled by differentiating
    twice with the one-sided first-derivative stencil."""
    n = f.shape[axis]
    if n < 5:
        raise DimensionError("derivative stencils need >= 5 nodes per axis")
    out = np.zeros_like(f)
    for c, off in zip(_D2_INTERIOR, range(-2, 3)):
        out += c * _shift(f, axis, off)
    out /= h * h
    edge = derivative1(derivative1(f, axis, h), axis, h)
    idx = [slice(None)] * f.ndim
    for r in (0, 1, n - 2, n - 1):
        idx[axis] = r
        out[tuple(idx)] = np.take(edge, r, axis=axis)
    return out


def gradient_at(f: np.ndarray, index: tuple, h: float) -> np.ndarray:
    """Fourth-order gradient at one node (central where possible,
    one-sided near faces)."""
    fdim = f.ndim
    grad = np.empty(fdim)
    for ax in range(fdim):
        n = f.shape[ax]
        i = index[ax]
        line_idx = list(index)

        def take(j):
            line_idx[ax] = j
            return f[tuple(line_idx)]

        if 2 <= i <= n - 3:
            vals = [take(i + o) for o in range(-2, 3)]
            grad[ax] = np.dot(_D1_INTERIOR, vals)
        elif i < 2:
            vals = [take(i + o) for o in range(5)]
            grad[ax] = np.dot(_D1_FORWARD, vals)
        else:
            vals = [take(i - o) for o in range(5)]
            grad[ax] = -np.dot(_D1_FORWARD, vals)
    return grad / h


def field_gradients(fields, h: float) -> np.ndarray:
    """Stack of first derivatives for a list of sampled fields.

    Returns array with shape grid_shape + (len(fields), dim)."""
    f0 = fields[0]
    dim = f0.ndim
    out = np.empty(f0.shape + (len(fields), dim))
    for k, f in enumerate(fields):
        for ax in range(dim):
            out[..., k, ax] = derivative1(f, ax, h)
    return out


# -- tensor-product cubic spline interpolation --------------------------------

class FieldInterpolator:
    """Separable cubic B-spline interpolation of sampled fields.

    The interpolant is C^2 across cells (important where transported
    fields are differentiated twice) with O(h^4) accuracy.  `values` is a
    grid_shape + extra_shape array; the spline prefilter runs once at
    construction, queries are cheap afterwards.
    """

    def __init__(self, chart: GridChart, values: np.ndarray, order: int = 3):
        from scipy import ndimage

        self.chart = chart
        self.order = order
        dim = chart.dim
        values = np.asarray(values, dtype=float)
        self.extra = values.shape[dim:]
        flat = values.reshape(chart.shape + (-1,))
        coeffs = flat
        for ax in range(dim):
            coeffs = ndimage.spline_filter1d(coeffs, order=order, axis=ax,
                                             mode="mirror")
        self._coeffs = np.moveaxis(coeffs, -1, 0)   # channels first
        self._lo = np.array([b[0] for b in chart.bounds])
        self._res = np.array(chart.resolution)

    def __call__(self, points: np.ndarray):
        from scipy import ndimage

        points = np.atleast_2d(np.asarray(points, dtype=float))
        s = ((points - self._lo) / self.chart.spacing).T   # (dim, B)
        valid = np.all((s >= 1.0) & (s <= (self._res - 2)[:, None]), axis=0)
        out = np.stack([
            ndimage.map_coordinates(ch, s, order=self.order, prefilter=False,
                                    mode="mirror")
            for ch in self._coeffs], axis=-1)
        return out.reshape((points.shape[0],) + self.extra), valid


def interp_cubic(chart: GridChart, values: np.ndarray, points: np.ndarray):
    """One-shot convenience wrapper around FieldInterpolator."""
    return FieldInterpolator(chart, values)(points)
