"""Reference fields: flat/band-limited/conformally-flat metrics, cutoffs.

Generators sample fixed low-frequency Fourier data from a seeded RNG, so two
charts with different resolutions (same seed, same lengths) sample the same
smooth field.  That makes Richardson refinement comparisons meaningful.

Perturbation amplitudes are normalized analytically (never by a max over
grid points) to keep the field resolution-independent; the default bound
keeps every metric safely SPD by Gershgorin.
"""

from __future__ import annotations

import numpy as np

from .grid import Chart, MetricField

__all__ = [
    "flat_metric",
    "fourier_scalar",
    "fourier_metric",
    "conformally_flat_metric",
    "smooth_bridge",
    "radial_cutoff",
    "ball_flat_metric",
]


def flat_metric(chart: Chart) -> MetricField:
    dense = np.broadcast_to(np.eye(chart.n), chart.shape + (chart.n, chart.n))
    return MetricField.from_dense(chart, dense)


def _mode_table(rng: np.random.Generator, n: int, terms: int, max_mode: int):
    # integer wavevectors with |m_a| <= max_mode, never all zero
    modes = np.zeros((terms, n), dtype=int)
    for r in range(terms):
        while not modes[r].any():
            modes[r] = rng.integers(-max_mode, max_mode + 1, size=n)
    coeffs = rng.standard_normal(terms)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=terms)
    return modes, coeffs, phases


def _sample_modes(chart: Chart, modes, coeffs, phases) -> np.ndarray:
    xs = chart.mesh()
    out = np.zeros(chart.shape)
    for mode, c, ph in zip(modes, coeffs, phases):
        arg = ph
        for a in range(chart.n):
            arg = arg + (2.0 * np.pi * mode[a] / chart.lengths[a]) * xs[a]
        out += c * np.sin(arg)
    return out


def fourier_scalar(
    chart: Chart,
    amplitude: float = 0.1,
    seed: int = 0,
    max_mode: int = 1,
    terms: int = 4,
    mean: float = 0.0,
) -> np.ndarray:
    """Band-limited random scalar with |field - mean| <= amplitude."""
    rng = np.random.default_rng(seed)
    modes, coeffs, phases = _mode_table(rng, chart.n, terms, max_mode)
    coeffs *= amplitude / np.sum(np.abs(coeffs))
    return mean + _sample_modes(chart, modes, coeffs, phases)


def fourier_metric(
    chart: Chart,
    amplitude: float = 0.25,
    seed: int = 0,
    max_mode: int = 1,
    terms: int = 3,
) -> MetricField:
    """Identity plus a band-limited symmetric perturbation, SPD by bound.

    Row sums of the perturbation stay below ``amplitude`` pointwise, so the
    eigenvalues stay within ``1 +/- amplitude``.
    """
    if not 0 <= amplitude < 1:
        raise ValueError(f"amplitude must be in [0, 1), got {amplitude}")
    n = chart.n
    rng = np.random.default_rng(seed)
    dense = np.tile(np.eye(n), chart.shape + (1, 1))
    per_entry = amplitude / n
    for i in range(n):
        for j in range(i, n):
            modes, coeffs, phases = _mode_table(rng, n, terms, max_mode)
            coeffs *= per_entry / np.sum(np.abs(coeffs))
            bump = _sample_modes(chart, modes, coeffs, phases)
            dense[..., i, j] += bump
            if j != i:
                dense[..., j, i] += bump
    return MetricField.from_dense(chart, dense)


def conformally_flat_metric(chart: Chart, phi: np.ndarray) -> MetricField:
    """Metric ``exp(2 phi) * identity``."""
    factor = np.exp(2.0 * np.asarray(phi, dtype=float))
    dense = factor[..., None, None] * np.eye(chart.n)
    return MetricField.from_dense(chart, dense)


def smooth_bridge(t: np.ndarray) -> np.ndarray:
    """C-infinity monotone step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        lo = np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        hi = np.where(t < 1.0, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return lo / (lo + hi)


def radial_cutoff(rho: np.ndarray, r_inner: float, r_outer: float) -> np.ndarray:
    """Smooth radial window: 1 for rho <= r_inner, 0 for rho >= r_outer."""
    if not 0.0 < r_inner < r_outer:
        raise ValueError(f"need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
    return 1.0 - smooth_bridge((np.asarray(rho) - r_inner) / (r_outer - r_inner))


def ball_flat_metric(
    chart: Chart,
    centers,
    r_flat: float,
    r_rise: float,
    amplitude: float = 0.2,
    seed: int = 0,
    max_mode: int = 1,
) -> MetricField:
    """Band-limited perturbed metric that is exactly flat inside given balls.

    The perturbation is multiplied by a smooth window vanishing identically
    for distance <= r_flat from every center and reaching 1 at
    r_flat + r_rise (periodic minimum-image distance).
    """
    pert = fourier_metric(chart, amplitude=amplitude, seed=seed, max_mode=max_mode)
    window = np.ones(chart.shape)
    mesh = chart.mesh()
    for center in np.atleast_2d(np.asarray(centers, dtype=float)):
        d = chart.min_image(mesh, center)
        rho = np.sqrt(np.sum(d * d, axis=-1))
        window = window * (1.0 - radial_cutoff(rho, r_flat, r_flat + r_rise))
    dense = pert.dense - np.eye(chart.n)
    dense = np.eye(chart.n) + window[..., None, None] * dense
    return MetricField.from_dense(chart, dense)
