"""Staggered polar grid, complex fields, and the discrete L2 / H1 structure.

The grid samples the disk of radius R at r_{i+1/2} = (i+1/2) h_r,
Theta_j = j h_theta with h_r = R/n_r and h_theta = 2 pi / n_theta.  Radial
staggering keeps the coordinate singularity at r = 0 off the mesh and puts
the Dirichlet boundary half a cell beyond the last node row.  Quadrature is
the midpoint rule in r (exact for the area) and the periodic trapezoid in
Theta, giving weights w_ij = r_{i+1/2} h_r h_theta.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import stencils
from .errors import ConfigurationError, GridMismatchError

FIELD_MAGIC = b"GPRGFLD1"
_HEADER = struct.Struct("<8sqqd")  # magic, n_r, n_theta, radius -> 32 bytes


@dataclass(frozen=True, eq=False)
class PolarGrid:
    """Immutable staggered polar mesh; share freely across threads."""

    n_r: int
    n_theta: int
    radius: float
    h_r: float
    h_theta: float
    r_nodes: np.ndarray      # (n_r,)
    theta_nodes: np.ndarray  # (n_theta,)
    weights: np.ndarray      # (n_r, n_theta)

    def compatible(self, other: "PolarGrid") -> bool:
        return (self.n_r == other.n_r and self.n_theta == other.n_theta
                and self.radius == other.radius)

    @property
    def size(self) -> int:
        return self.n_r * self.n_theta


def build_polar_grid(n_r: int, n_theta: int, radius: float) -> PolarGrid:
    """Construct the staggered grid with midpoint quadrature weights.

    n_theta must be even and at least 16 (the 8th-order periodic stencil
    needs nine distinct points; an even count keeps the antipodal pole map
    an exact half-turn index shift).  n_r must be at least 4.
    """
    if not (isinstance(n_r, (int, np.integer)) and isinstance(n_theta, (int, np.integer))):
        raise ConfigurationError("grid counts n_r, n_theta must be integers")
    if radius <= 0 or not np.isfinite(radius):
        raise ConfigurationError(f"grid radius must be positive and finite, got {radius}")
    if n_r < 4:
        raise ConfigurationError(f"n_r must be >= 4, got {n_r}")
    if n_theta < 16 or n_theta % 2 != 0:
        raise ConfigurationError(f"n_theta must be even and >= 16, got {n_theta}")

    h_r = radius / n_r
    h_theta = 2.0 * np.pi / n_theta
    r_nodes = (np.arange(n_r) + 0.5) * h_r
    theta_nodes = np.arange(n_theta) * h_theta
    weights = np.broadcast_to((r_nodes * h_r * h_theta)[:, None],
                              (n_r, n_theta)).copy()
    for arr in (r_nodes, theta_nodes, weights):
        arr.setflags(write=False)
    return PolarGrid(int(n_r), int(n_theta), float(radius), h_r, h_theta,
                     r_nodes, theta_nodes, weights)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex-valued sample of a function on a PolarGrid.

    Treated as an immutable value: every operation allocates a fresh output.
    """

    grid: PolarGrid
    values: np.ndarray  # (n_r, n_theta) complex128

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.complex128)
        if vals.shape != (self.grid.n_r, self.grid.n_theta):
            raise GridMismatchError(
                f"field shape {vals.shape} does not match grid "
                f"({self.grid.n_r}, {self.grid.n_theta})")
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


def _check_same_grid(u: Field, v: Field) -> None:
    if u.grid is not v.grid and not u.grid.compatible(v.grid):
        raise GridMismatchError("fields live on different grids")


def inner_l2(u: Field, v: Field) -> float:
    """Real L2 inner product Re sum_ij w_ij u_ij conj(v_ij)."""
    _check_same_grid(u, v)
    return float(np.real(np.vdot(v.values, u.grid.weights * u.values)))


def norm_l2(u: Field) -> float:
    w = u.grid.weights
    return float(np.sqrt(np.sum(w * (u.values.real**2 + u.values.imag**2))))


def normalized(u: Field) -> Field:
    n = norm_l2(u)
    if n == 0.0:
        raise ValueError("cannot normalize the zero field")
    return Field(u.grid, u.values / n)


def norm_h1_discrete(u: Field) -> float:
    """Diagnostic discrete H1 norm sqrt(||u||_L2^2 + ||grad u||_L2^2).

    The gradient uses the same radial/angular stencils as the Laplacian:
    |grad u|^2 = |d_r u|^2 + (1/r^2)|d_Theta u|^2.
    """
    g = u.grid
    dr = stencils.radial_d1(u.values, g.h_r)
    dt = stencils.dtheta(u.values, g.h_theta)
    w = g.weights
    inv_r2 = (1.0 / g.r_nodes**2)[:, None]
    grad2 = np.sum(w * (dr.real**2 + dr.imag**2)) \
        + np.sum(w * inv_r2 * (dt.real**2 + dt.imag**2))
    return float(np.sqrt(norm_l2(u)**2 + grad2))


def rotate_by_index(u: Field, k: int) -> Field:
    """Rotate by the angle k*h_theta: output(i, j) = u(i, (j-k) mod n_theta).

    This is the exact discrete representative of a coordinate rotation, so
    it commutes bit-for-bit with every circulant stencil.
    """
    return Field(u.grid, np.roll(u.values, int(k) % u.grid.n_theta, axis=1))


# ----------------------------------------------------------------------
# serialization

def save_field(path, u: Field) -> None:
    """Write the flat binary format: 32-byte header + little-endian complex128."""
    header = _HEADER.pack(FIELD_MAGIC, u.grid.n_r, u.grid.n_theta, u.grid.radius)
    payload = np.ascontiguousarray(u.values, dtype="<c16").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_field(path, grid: PolarGrid | None = None) -> Field:
    """Read a field snapshot; builds (or checks against) its grid."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ConfigurationError(f"{path}: truncated field file")
    magic, n_r, n_theta, radius = _HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise ConfigurationError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 16 * n_r * n_theta
    if len(raw) != expected:
        raise ConfigurationError(
            f"{path}: payload size {len(raw)} does not match header (want {expected})")
    values = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(n_r, n_theta)
    if grid is None:
        grid = build_polar_grid(n_r, n_theta, radius)
    elif (grid.n_r, grid.n_theta, grid.radius) != (n_r, n_theta, radius):
        raise GridMismatchError(
            f"{path}: snapshot grid ({n_r}, {n_theta}, R={radius}) does not match "
            f"({grid.n_r}, {grid.n_theta}, R={grid.radius})")
    if not np.all(np.isfinite(values.view(np.float64))):
        raise ConfigurationError(f"{path}: snapshot contains non-finite values")
    return Field(grid, values.astype(np.complex128))


def export_field_csv(path, u: Field) -> None:
    """Lossy CSV export (r, theta, re, im, abs2) for plotting."""
    g = u.grid
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("r,theta,re,im,abs2\n")
        for i in range(g.n_r):
            r = g.r_nodes[i]
            row = u.values[i]
            for j in range(g.n_theta):
                z = row[j]
                fh.write(f"{r:.17g},{g.theta_nodes[j]:.17g},"
                         f"{z.real:.17g},{z.imag:.17g},{abs(z)**2:.17g}\n")
