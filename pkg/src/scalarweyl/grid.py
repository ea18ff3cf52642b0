"""Periodic structured charts and the discrete calculus on them.

A chart is a uniform grid on the n-torus: axis ``a`` has ``sizes[a]`` points
spanning ``[0, lengths[a])`` with periodic wraparound.  Fields store their
components in trailing axes (point-major layout, components contiguous per
point); symmetric 2-tensors are deduplicated to the ``n*(n+1)//2``
lexicographic (i <= j) component list.

Differentiation defaults to 4th-order centered stencils; second derivatives
are compositions of first-derivative stencils, so mixed partials commute to
roundoff.  A spectral scheme is available behind the chart's ``scheme``
switch.  Integration is the plain point sum times the cell volume, which is
spectrally accurate on periodic grids and makes the discrete divergence
theorem hold to roundoff (the stencil telescopes over each periodic axis).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "Chart",
    "ScalarField",
    "CovectorField",
    "Sym2Field",
    "MetricField",
    "make_chart",
    "differentiate",
    "deriv",
    "gradient",
    "integrate",
    "divergence_total",
    "sym2_pack_indices",
    "sym2_pack",
    "sym2_unpack",
    "ChartError",
    "FieldError",
]


class ChartError(ValueError):
    """Raised for invalid chart parameters."""


class FieldError(ValueError):
    """Raised for invalid field data (shape, symmetry, positivity)."""


_SCHEMES = ("fd4", "spectral")


@dataclass(frozen=True)
class Chart:
    """Uniform periodic grid on the n-torus."""

    n: int
    sizes: tuple[int, ...]
    lengths: tuple[float, ...]
    scheme: str = "fd4"

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(length / size for length, size in zip(self.lengths, self.sizes))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def npoints(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    def axes(self) -> list[np.ndarray]:
        """Coordinate values along each axis."""
        return [
            np.arange(size) * spacing
            for size, spacing in zip(self.sizes, self.spacings)
        ]

    def mesh(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays, one per axis."""
        return list(np.meshgrid(*self.axes(), indexing="ij", sparse=True))

    def min_image(self, coords: np.ndarray, center) -> np.ndarray:
        """Displacement coords - center wrapped to the nearest periodic image."""
        out = np.empty(np.broadcast_shapes(*(c.shape for c in coords)) + (self.n,))
        for a in range(self.n):
            d = coords[a] - center[a]
            length = self.lengths[a]
            out[..., a] = d - length * np.round(d / length)
        return out


def make_chart(n, sizes, lengths, scheme="fd4") -> Chart:
    """Validate parameters and build a Chart."""
    if not isinstance(n, (int, np.integer)) or not 3 <= n <= 6:
        raise ChartError(f"dimension n must be an integer in [3, 6], got {n!r}")
    sizes = tuple(int(s) for s in sizes)
    lengths = tuple(float(length) for length in lengths)
    if len(sizes) != n:
        raise ChartError(f"expected {n} sizes, got {len(sizes)}")
    if len(lengths) != n:
        raise ChartError(f"expected {n} lengths, got {len(lengths)}")
    for a, size in enumerate(sizes):
        if size < 8 or size % 2 != 0:
            raise ChartError(f"axis {a}: size must be even and >= 8, got {size}")
    for a, length in enumerate(lengths):
        if not np.isfinite(length) or length <= 0:
            raise ChartError(f"axis {a}: length must be positive, got {length}")
    if scheme not in _SCHEMES:
        raise ChartError(f"scheme must be one of {_SCHEMES}, got {scheme!r}")
    return Chart(n=int(n), sizes=sizes, lengths=lengths, scheme=scheme)


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------


def _deriv_fd4(arr: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    # 5-point centered stencil, periodic via roll.
    up1 = np.roll(arr, -1, axis=axis)
    dn1 = np.roll(arr, 1, axis=axis)
    up2 = np.roll(arr, -2, axis=axis)
    dn2 = np.roll(arr, 2, axis=axis)
    return (8.0 * (up1 - dn1) - (up2 - dn2)) / (12.0 * spacing)


def _deriv_spectral(arr: np.ndarray, axis: int, size: int, length: float) -> np.ndarray:
    k = np.fft.rfftfreq(size, d=length / size) * 2.0 * np.pi
    k[-1] = 0.0  # drop the odd Nyquist mode
    shape = [1] * arr.ndim
    shape[axis] = k.size
    spec = np.fft.rfft(arr, axis=axis)
    spec *= 1j * k.reshape(shape)
    return np.fft.irfft(spec, n=size, axis=axis)


def _grid_broadcast(chart: Chart, arr: np.ndarray) -> np.ndarray:
    """Expand degenerate leading axes (from sparse meshes) to full grid shape."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim < chart.n:
        raise FieldError(
            f"array with {arr.ndim} axes cannot cover a {chart.n}-axis grid"
        )
    lead = arr.shape[: chart.n]
    if lead == chart.sizes:
        return arr
    for a, (have, want) in enumerate(zip(lead, chart.sizes)):
        if have not in (1, want):
            raise FieldError(
                f"axis {a}: grid extent {have} incompatible with chart size {want}"
            )
    return np.broadcast_to(arr, chart.sizes + arr.shape[chart.n :])


def deriv(chart: Chart, arr: np.ndarray, axis: int) -> np.ndarray:
    """Partial derivative of a raw array along a chart axis.

    Component axes may trail the grid axes; ``axis`` always refers to the
    grid axis.  Degenerate leading axes broadcast to full grid shape first,
    so fields built from sparse meshes differentiate correctly.
    """
    if not 0 <= axis < chart.n:
        raise FieldError(f"axis must be in [0, {chart.n}), got {axis}")
    arr = _grid_broadcast(chart, arr)
    if chart.scheme == "spectral":
        return _deriv_spectral(arr, axis, chart.sizes[axis], chart.lengths[axis])
    return _deriv_fd4(arr, axis, chart.spacings[axis])


def gradient(chart: Chart, arr: np.ndarray) -> np.ndarray:
    """Stack of partial derivatives, component axis last."""
    return np.stack([deriv(chart, arr, a) for a in range(chart.n)], axis=-1)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


def _check_grid_shape(chart: Chart, data: np.ndarray, extra: tuple[int, ...], kind: str):
    expected = chart.sizes + extra
    if data.shape != expected:
        raise FieldError(f"{kind}: expected shape {expected}, got {data.shape}")


def _coerce_grid_shape(chart: Chart, data, extra: tuple[int, ...], kind: str):
    """As _check_grid_shape, but degenerate leading axes broadcast up."""
    data = np.asarray(data, dtype=float)
    expected = chart.sizes + extra
    if data.shape == expected:
        return data
    if data.ndim == len(expected) and data.shape[chart.n :] == extra:
        try:
            return np.array(np.broadcast_to(data, expected))
        except ValueError:
            pass
    raise FieldError(f"{kind}: expected shape {expected}, got {data.shape}")


@dataclass
class ScalarField:
    chart: Chart
    data: np.ndarray

    def __post_init__(self):
        self.data = _coerce_grid_shape(self.chart, self.data, (), "ScalarField")


@dataclass
class CovectorField:
    chart: Chart
    data: np.ndarray  # (*sizes, n)

    def __post_init__(self):
        self.data = _coerce_grid_shape(
            self.chart, self.data, (self.chart.n,), "CovectorField"
        )


def sym2_pack_indices(n: int) -> list[tuple[int, int]]:
    """Lexicographic (i <= j) component order for symmetric 2-tensors."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def sym2_pack(dense: np.ndarray, n: int) -> np.ndarray:
    idx = sym2_pack_indices(n)
    return np.stack([dense[..., i, j] for i, j in idx], axis=-1)


def sym2_unpack(packed: np.ndarray, n: int) -> np.ndarray:
    out = np.empty(packed.shape[:-1] + (n, n), dtype=packed.dtype)
    for c, (i, j) in enumerate(sym2_pack_indices(n)):
        out[..., i, j] = packed[..., c]
        out[..., j, i] = packed[..., c]
    return out


# Index-map sanity check, run once at import: pack/unpack must round-trip.
def _validate_sym2_maps():
    rng = np.random.default_rng(0)
    for n in range(3, 7):
        a = rng.standard_normal((2, n, n))
        a = a + np.swapaxes(a, -1, -2)
        if not np.array_equal(sym2_unpack(sym2_pack(a, n), n), a):
            raise AssertionError(f"sym2 index map broken for n={n}")


_validate_sym2_maps()


@dataclass
class Sym2Field:
    """Symmetric 2-tensor field, stored deduplicated (i <= j components)."""

    chart: Chart
    packed: np.ndarray  # (*sizes, n*(n+1)//2)

    def __post_init__(self):
        n = self.chart.n
        self.packed = _coerce_grid_shape(
            self.chart, self.packed, (n * (n + 1) // 2,), "Sym2Field"
        )

    @classmethod
    def from_dense(cls, chart: Chart, dense: np.ndarray, check=True, tol=1e-12):
        dense = _coerce_grid_shape(
            chart, dense, (chart.n, chart.n), "Sym2Field dense input"
        )
        if check:
            skew = np.max(np.abs(dense - np.swapaxes(dense, -1, -2)))
            scale = max(np.max(np.abs(dense)), 1e-300)
            if skew > tol * scale:
                raise FieldError(
                    f"dense input is not symmetric: max skew {skew:.3e} vs scale {scale:.3e}"
                )
        return cls(chart, sym2_pack(dense, chart.n))

    @cached_property
    def dense(self) -> np.ndarray:
        return sym2_unpack(self.packed, self.chart.n)


class MetricField(Sym2Field):
    """SPD symmetric 2-tensor field with cached inverse and volume factors."""

    def __post_init__(self):
        super().__post_init__()
        self._check_spd()

    def _check_spd(self):
        g = self.dense
        try:
            np.linalg.cholesky(g)
            return
        except np.linalg.LinAlgError:
            pass
        # Locate the first offending point for the error message.
        eigmin = np.linalg.eigvalsh(g)[..., 0]
        bad = np.argwhere(eigmin <= 0)
        where = tuple(int(i) for i in bad[0]) if len(bad) else "unknown"
        raise FieldError(
            f"metric is not positive definite at grid point {where} "
            f"(min eigenvalue {float(np.min(eigmin)):.3e})"
        )

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.dense)

    @cached_property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.dense)

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        return np.sqrt(self.det)


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------


def _scalar_data(f) -> np.ndarray:
    return f.data if isinstance(f, ScalarField) else np.asarray(f, dtype=float)


def integrate(chart: Chart, f, density) -> float:
    """Point-sum quadrature of ``f`` against a positive density.

    The density is the discrete volume element (for a metric, its
    ``sqrt_det``); pass 1.0 for the coordinate measure.
    """
    fd = _scalar_data(f)
    dens = np.asarray(density, dtype=float)
    if dens.ndim == 0:
        if dens <= 0:
            raise FieldError(f"density must be positive, got {float(dens)}")
    else:
        if np.min(dens) <= 0:
            bad = np.argwhere(dens <= 0)[0]
            raise FieldError(
                f"density must be positive everywhere, first violation at "
                f"{tuple(int(i) for i in bad)}"
            )
    return float(np.sum(fd * dens) * chart.cell_volume)


def differentiate(f, axis: int):
    """Partial derivative of a field along a grid axis, same field type."""
    if isinstance(f, ScalarField):
        return ScalarField(f.chart, deriv(f.chart, f.data, axis))
    if isinstance(f, CovectorField):
        return CovectorField(f.chart, deriv(f.chart, f.data, axis))
    if isinstance(f, Sym2Field):
        return type(f)(f.chart, deriv(f.chart, f.packed, axis))
    raise FieldError(f"cannot differentiate object of type {type(f).__name__}")


def divergence_total(X: CovectorField, g: MetricField) -> float:
    """Integral of the metric divergence of the raised field.

    Computed in flux form, ``sum_a D_a(sqrt(det g) * g^{ab} X_b)`` summed over
    the grid; by periodic telescoping of the stencil the result is zero to
    roundoff for any field.  Returned so callers can assert it.
    """
    chart = X.chart
    vec = np.einsum("...ab,...b->...a", g.inverse, X.data)
    weighted = g.sqrt_det[..., None] * vec
    total = 0.0
    for a in range(chart.n):
        total += float(np.sum(deriv(chart, weighted[..., a], a)))
    return total * chart.cell_volume


def flux_laplacian(g: MetricField, u: np.ndarray) -> np.ndarray:
    """Laplace-Beltrami operator in flux form on raw scalar data."""
    chart = g.chart
    du = gradient(chart, u)
    flux = g.sqrt_det[..., None] * np.einsum("...ab,...b->...a", g.inverse, du)
    out = deriv(chart, flux[..., 0], 0)
    for a in range(1, chart.n):
        out += deriv(chart, flux[..., a], a)
    return out / g.sqrt_det
