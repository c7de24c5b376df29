"""Finite-difference stencils on the staggered polar grid.

Angular derivatives use 8th-order central differences on the uniform periodic
grid; radial derivatives use 2nd-order central differences.  Two ghost rules
close the radial stencils:

* pole: the ghost node at r = -h_r/2 carries the antipodal value
  u(r_{1/2}, Theta + pi), which is the smooth continuation of u through the
  origin.  For the flux-form Laplacian the ghost coefficient is exactly zero
  (the flux through r = 0 vanishes), so only the first-derivative stencil
  actually reads it.
* outer boundary: the ghost row at r = R + h_r/2 is identically zero
  (homogeneous Dirichlet data).

All functions act on raw (n_r, n_theta) complex arrays.
"""

from __future__ import annotations

import numpy as np

# 8th-order central coefficients for offsets 1..4 (first derivative,
# antisymmetric) and 0..4 (second derivative, symmetric).
D1_COEFFS = (4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0)
D2_CENTER = -205.0 / 72.0
D2_COEFFS = (8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0)


def dtheta(values: np.ndarray, h_theta: float) -> np.ndarray:
    """8th-order periodic d/dTheta along axis 1."""
    out = np.zeros_like(values)
    for k, a in enumerate(D1_COEFFS, start=1):
        out += a * (np.roll(values, -k, axis=1) - np.roll(values, k, axis=1))
    out /= h_theta
    return out


def dtheta2(values: np.ndarray, h_theta: float) -> np.ndarray:
    """8th-order periodic d^2/dTheta^2 along axis 1."""
    out = D2_CENTER * values.copy()
    for k, c in enumerate(D2_COEFFS, start=1):
        out += c * (np.roll(values, -k, axis=1) + np.roll(values, k, axis=1))
    out /= h_theta * h_theta
    return out


def d1_symbol(n_theta: int, h_theta: float) -> np.ndarray:
    """Fourier symbol of ``dtheta``: dtheta(e^{imT}) = i*omega(m)*e^{imT}.

    Returned in FFT mode order (length n_theta, real).
    """
    m = np.arange(n_theta)
    omega = np.zeros(n_theta)
    for k, a in enumerate(D1_COEFFS, start=1):
        omega += 2.0 * a * np.sin(2.0 * np.pi * k * m / n_theta)
    return omega / h_theta


def d2_symbol(n_theta: int, h_theta: float) -> np.ndarray:
    """Fourier symbol of ``dtheta2`` (real, non-positive), FFT mode order."""
    m = np.arange(n_theta)
    s = np.full(n_theta, D2_CENTER)
    for k, c in enumerate(D2_COEFFS, start=1):
        s += 2.0 * c * np.cos(2.0 * np.pi * k * m / n_theta)
    return s / (h_theta * h_theta)


def shift_up(values: np.ndarray) -> np.ndarray:
    """Row i of the result holds u_{i+1}; the Dirichlet ghost row is zero."""
    out = np.zeros_like(values)
    out[:-1] = values[1:]
    return out


def shift_down_zero(values: np.ndarray) -> np.ndarray:
    """Row i holds u_{i-1}; row 0 is zero (for stencils whose pole coefficient vanishes)."""
    out = np.zeros_like(values)
    out[1:] = values[:-1]
    return out


def shift_down_antipodal(values: np.ndarray) -> np.ndarray:
    """Row i holds u_{i-1}; row 0 holds the antipodal pole ghost u(r_{1/2}, Theta+pi)."""
    out = np.empty_like(values)
    out[1:] = values[:-1]
    out[0] = np.roll(values[0], values.shape[1] // 2)
    return out


def radial_d1(values: np.ndarray, h_r: float) -> np.ndarray:
    """2nd-order central d/dr with antipodal pole ghost and zero outer ghost."""
    return (shift_up(values) - shift_down_antipodal(values)) / (2.0 * h_r)


def radial_flux_coeffs(n_r: int, h_r: float) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (a_plus, a_minus) of u_{i+1}, u_{i-1} in the radial part
    d_rr + (1/r) d_r of the Laplacian, in flux form on staggered nodes:

        a_plus[i]  = (i+1) / ((i+1/2) h^2),   a_minus[i] = i / ((i+1/2) h^2).

    a_minus[0] = 0: the pole flux vanishes, so no antipodal coupling enters
    the Laplacian.  The diagonal is -(a_plus + a_minus).  This form is
    symmetric under the r-weighted inner product.
    """
    i = np.arange(n_r, dtype=float)
    a_plus = (i + 1.0) / ((i + 0.5) * h_r * h_r)
    a_minus = i / ((i + 0.5) * h_r * h_r)
    return a_plus.reshape(-1, 1), a_minus.reshape(-1, 1)


def laplacian(values: np.ndarray, a_plus: np.ndarray, a_minus: np.ndarray,
              inv_r2: np.ndarray, h_theta: float) -> np.ndarray:
    """Polar Laplacian d_rr + (1/r) d_r + (1/r^2) d_TT with the ghost closures above."""
    out = a_plus * shift_up(values) + a_minus * shift_down_zero(values)
    out -= (a_plus + a_minus) * values
    out += inv_r2 * dtheta2(values, h_theta)
    return out
