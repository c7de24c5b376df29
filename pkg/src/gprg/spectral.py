"""Constrained spectral analysis at a converged state: tangent-space Hessian
eigenvalues, the Morse-Bott verdict, the spectral-equivalence bounds (mu, L)
of the Hessian/metric pencil on the symmetry-reduced subspace, and the
theoretical step sizes and linear rates they imply.

All eigenproblems are posed in "hat" coordinates x = sqrt(w) * (Re u, Im u):
the quadrature mass becomes the identity there, every operator form becomes a
plain symmetric matrix action, and Euclidean orthogonality coincides with the
weighted L2 inner product.  Extreme eigenpairs come from a blocked, deflated,
preconditioned LOBPCG iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from .errors import EigensolverError
from .grids import Field, inner_l2, norm_l2
from .operators import OperatorSet, apply_hessian, apply_lz, lambda_tilde
from .precond import PreconditionerHandle, PreconditionerSpec, assemble

_SYMMETRY_PARALLEL_TOL = 1e-8  # below this, iLz(phi) counts as parallel to i*phi


# ----------------------------------------------------------------------
# hat-space plumbing

class _HatSpace:
    def __init__(self, ops: OperatorSet):
        self.grid = ops.grid
        self.sqrtw = np.sqrt(ops.grid.weights)
        self.n = 2 * ops.grid.size
        self.shape = (ops.grid.n_r, ops.grid.n_theta)

    def hat(self, values: np.ndarray) -> np.ndarray:
        return np.concatenate(((self.sqrtw * values.real).ravel(),
                               (self.sqrtw * values.imag).ravel()))

    def unhat(self, x: np.ndarray) -> np.ndarray:
        half = self.n // 2
        re = x[:half].reshape(self.shape) / self.sqrtw
        im = x[half:].reshape(self.shape) / self.sqrtw
        return re + 1j * im

    def operator(self, field_op) -> LinearOperator:
        """Wrap a real-linear field action as a symmetric hat-space operator."""
        def matvec(x):
            return self.hat(field_op(self.unhat(np.asarray(x, dtype=float).ravel())))
        return LinearOperator((self.n, self.n), matvec=matvec, dtype=float)


def _symmetry_generators(ops: OperatorSet, state: Field):
    """Tangent generators of the invariance group at `state`: i*phi and
    i*Lz(phi).  Returns (list_of_fields, dim_s); dim_s = 1 when the rotation
    generator is (numerically) parallel to the phase generator, i.e. the
    state is rotationally symmetric up to winding."""
    g1 = Field(ops.grid, 1j * state.values)
    lz = apply_lz(ops, state)
    g2 = Field(ops.grid, 1j * lz.values)
    n2 = norm_l2(g2)
    if n2 <= _SYMMETRY_PARALLEL_TOL:
        return [g1], 1
    # component of g2 orthogonal to g1
    coef = inner_l2(g2, g1) / inner_l2(g1, g1)
    ortho = Field(ops.grid, g2.values - coef * g1.values)
    if norm_l2(ortho) <= _SYMMETRY_PARALLEL_TOL * n2:
        return [g1], 1
    return [g1, g2], 2


def _run_lobpcg(a_op, x0, *, b_op=None, prec=None, constraints=None,
                largest=False, tol=1e-9, maxiter=200):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # lobpcg warns on exhausted maxiter
        vals, vecs = lobpcg(a_op, x0, B=b_op, M=prec, Y=constraints,
                            tol=tol, maxiter=maxiter, largest=largest)
    order = np.argsort(vals)
    if largest:
        order = order[::-1]
    return vals[order], vecs[:, order]


# ----------------------------------------------------------------------
# tangent-space Hessian eigenvalues

def hessian_tangent_eigs(ops: OperatorSet, state: Field, k: int, *,
                         tol: float = 1e-9, maxiter: int = 500,
                         prec_sigma0: float = 1e-3, seed: int = 0,
                         inverse_tol: float = 1e-8):
    """k smallest eigenpairs of the energy Hessian restricted to the tangent
    space (mass-weighted, with the state direction deflated).

    Eigenvectors come back L2-orthonormal and tangent.  The block is seeded
    with the analytic symmetry generators, which are exact eigenvectors at a
    minimizer, and preconditioned with the shifted-Hessian inverse.
    """
    hs = _HatSpace(ops)
    lam_g = lambda_tilde(ops, state)
    a_op = hs.operator(lambda v: apply_hessian(ops, state,
                                               Field(ops.grid, v)).values)
    prec_handle = assemble(PreconditionerSpec(
        "P4", sigma0=prec_sigma0, inverse_tol=inverse_tol), ops, state)
    prec = hs.operator(lambda v: prec_handle.apply_inverse(
        Field(ops.grid, v)).values)
    constraints = hs.hat(state.values).reshape(-1, 1)

    rng = np.random.default_rng(seed)
    block = max(k + 2, 4)
    x0 = rng.standard_normal((hs.n, block))
    gens, _ = _symmetry_generators(ops, state)
    for j, g in enumerate(gens[:block]):
        x0[:, j] = hs.hat(g.values / norm_l2(g))

    scale = max(1.0, abs(lam_g))
    vals, vecs = _run_lobpcg(a_op, x0, prec=prec, constraints=constraints,
                             largest=False, tol=tol * scale, maxiter=maxiter)
    pairs = []
    resid = []
    for j in range(k):
        u = Field(ops.grid, hs.unhat(vecs[:, j]))
        u = Field(ops.grid, u.values / norm_l2(u))
        hu = apply_hessian(ops, state, u)
        lam = inner_l2(hu, u)
        resid.append(norm_l2(Field(ops.grid, hu.values - lam * u.values)) / scale)
        pairs.append((float(lam), u))
    worst = max(resid)
    if worst > 100.0 * tol:
        raise EigensolverError(
            f"tangent eigensolver did not converge: relative residuals "
            f"{['%.2e' % r for r in resid]} exceed tolerance {tol:.1e}")
    pairs.sort(key=lambda p: p[0])
    return pairs


# ----------------------------------------------------------------------
# Morse-Bott verdict

@dataclass(frozen=True)
class MorseBottVerdict:
    is_morse_bott: bool
    applicable: bool            # False for the dim-1 symmetry case
    dim_symmetry: int
    degenerate_ok: bool         # lowest dim_symmetry eigenvalues sit at lambda_g
    gap_ok: bool                # next eigenvalue separated by tol_gap
    alignment_ok: bool
    gap: float
    alignment_angles: tuple     # radians, one per symmetry direction


def principal_angles(vectors, generators) -> np.ndarray:
    """Principal angles (radians) between span(vectors) and span(generators)
    in the weighted L2 geometry."""
    def orthonormalize(fields):
        basis = []
        for f in fields:
            v = f.values.copy()
            for b in basis:
                v -= inner_l2(Field(f.grid, v), b) * b.values
            n = norm_l2(Field(f.grid, v))
            if n > 1e-14:
                basis.append(Field(f.grid, v / n))
        return basis

    a = orthonormalize(vectors)
    b = orthonormalize(generators)
    if not a or not b:
        return np.array([])
    gram = np.array([[inner_l2(x, y) for y in b] for x in a])
    sv = np.linalg.svd(gram, compute_uv=False)
    return np.arccos(np.clip(sv, -1.0, 1.0))


def morse_bott_check(lambda_g: float, eig_values, alignment_angles,
                     dim_symmetry: int, tol_degenerate: float = 1e-6,
                     tol_gap: float = 1e-6) -> MorseBottVerdict:
    """Decide whether the spectrum matches the Morse-Bott structure: the
    lowest `dim_symmetry` tangent eigenvalues equal lambda_g (relative
    tolerance `tol_degenerate`), the next eigenvalue is separated by at
    least `tol_gap`, and the degenerate eigenvectors align with the
    symmetry generators to within 1e-3 rad.

    The verdict is reported not-applicable when dim_symmetry < 2 (the
    rotationally symmetric case has a one-dimensional degeneracy)."""
    eig_values = list(eig_values)
    if len(eig_values) < dim_symmetry + 1:
        raise ValueError("need at least dim_symmetry + 1 tangent eigenvalues")
    scale = max(1.0, abs(lambda_g))
    degen = all(abs(eig_values[j] - lambda_g) <= tol_degenerate * scale
                for j in range(dim_symmetry))
    gap = eig_values[dim_symmetry] - lambda_g
    gap_ok = gap >= tol_gap
    angles = tuple(float(a) for a in alignment_angles)
    align_ok = all(a <= 1e-3 for a in angles) and len(angles) == dim_symmetry
    return MorseBottVerdict(
        is_morse_bott=bool(degen and gap_ok and align_ok and dim_symmetry == 2),
        applicable=dim_symmetry == 2,
        dim_symmetry=dim_symmetry,
        degenerate_ok=bool(degen),
        gap_ok=bool(gap_ok),
        alignment_ok=bool(align_ok),
        gap=float(gap),
        alignment_angles=angles)


# ----------------------------------------------------------------------
# pencil extremes (mu, L)

@dataclass(frozen=True)
class PencilExtremes:
    mu: float
    L: float
    L_converged: bool
    dim_symmetry: int
    L_estimates: tuple


def pencil_extremes(ops: OperatorSet, state: Field,
                    handle: PreconditionerHandle, k_each: int = 3, *,
                    lam_g: float | None = None, tol: float = 1e-8,
                    maxiter: int = 300, maxiter_largest: int = 40,
                    seed: int = 0, prec_sigma0: float = 1e-3,
                    inverse_tol: float = 1e-8) -> PencilExtremes:
    """Extreme generalized eigenvalues of (Hessian - lambda_g * mass, metric)
    on the symmetry-reduced subspace (state, i*state, i*Lz state deflated in
    the L2 inner product).

    The lower end `mu` is a genuine smallest eigenvalue.  The upper end can
    be an essential supremum approached by high modes, so `L` is reported as
    the largest Ritz value over an ascending sequence of block sizes together
    with a convergence flag (two consecutive estimates within 0.5%).
    """
    hs = _HatSpace(ops)
    if lam_g is None:
        lam_g = lambda_tilde(ops, state)

    def a_field(v):
        u = Field(ops.grid, v)
        return apply_hessian(ops, state, u).values - lam_g * v

    a_op = hs.operator(a_field)
    b_op = hs.operator(lambda v: handle._forward_raw(v))

    gens, dim_s = _symmetry_generators(ops, state)
    deflate = [state] + gens
    # deflation correctness rides on these solves: use the caller's strict
    # tolerance here, loose tolerances for preconditioning roles below
    constraints = np.column_stack(
        [hs.hat(handle.apply_inverse(g).values) for g in deflate])

    rng = np.random.default_rng(seed)

    # smallest: shift-inverted preconditioning through the coercive
    # shifted-Hessian metric
    prec_handle = assemble(PreconditionerSpec(
        "P4", sigma0=prec_sigma0, inverse_tol=inverse_tol), ops, state)
    prec_small = hs.operator(
        lambda v: prec_handle.apply_inverse(Field(ops.grid, v)).values)
    x0 = rng.standard_normal((hs.n, max(k_each + 2, 4)))
    vals_lo, vecs_lo = _run_lobpcg(a_op, x0, b_op=b_op, prec=prec_small,
                                   constraints=constraints, largest=False,
                                   tol=tol, maxiter=maxiter)
    mu = float(vals_lo[0])

    # largest: metric-inverse preconditioning; grow the block until the top
    # Ritz value stops moving.  The upper end can be an essential supremum
    # approached by high modes (a dense Ritz cluster), so the residual
    # tolerance is usually unreachable there -- convergence is judged by
    # agreement between the ascending estimates, and the iteration cap is
    # kept short.
    if handle.kind in ("P1", "P2"):
        loose = handle  # direct inverse, tolerance is moot
    else:
        loose = assemble(replace(handle.spec,
                                 inverse_tol=max(handle.spec.inverse_tol,
                                                 1e-5)),
                         ops, state)
    prec_big = hs.operator(
        lambda v: loose.apply_inverse(Field(ops.grid, v)).values)
    estimates = []
    for block in (k_each + 2, k_each + 5, k_each + 9):
        x0 = rng.standard_normal((hs.n, block))
        vals_hi, _ = _run_lobpcg(a_op, x0, b_op=b_op, prec=prec_big,
                                 constraints=constraints, largest=True,
                                 tol=tol, maxiter=maxiter_largest)
        estimates.append(float(vals_hi[0]))
        if len(estimates) >= 2 and abs(estimates[-1] - estimates[-2]) \
                <= 5e-3 * abs(estimates[-1]):
            break
    L = max(estimates)
    converged = len(estimates) >= 2 and abs(estimates[-1] - estimates[-2]) \
        <= 5e-3 * abs(estimates[-1])
    return PencilExtremes(mu=mu, L=L, L_converged=bool(converged),
                          dim_symmetry=dim_s, L_estimates=tuple(estimates))


def theoretical_rate(mu: float, L: float, kind: str) -> tuple[float, float]:
    """Optimal fixed step and local linear rate for a preconditioner kind.

    For the shifted-Hessian metric (P4) the classical strongly-convex pair
    applies: tau* = 2/(L+mu), rho = (L-mu)/(L+mu).  For the others the
    descent-lemma pair applies: tau* = 1/L, rho = sqrt(1 - mu/L).
    """
    if not (0 < mu <= L):
        raise ValueError(f"need 0 < mu <= L, got mu={mu}, L={L}")
    if kind == "P4":
        return 2.0 / (L + mu), (L - mu) / (L + mu)
    return 1.0 / L, float(np.sqrt(1.0 - mu / L))


# ----------------------------------------------------------------------
# report assembly

@dataclass(frozen=True)
class SpectrumReport:
    precond_kind: str
    lambda_g: float
    tangent_eigs: tuple          # eigenvalues only; fields are transient
    morse_bott: MorseBottVerdict
    mu: float
    L: float
    L_converged: bool
    tau_star: float
    rho: float
    sigma0: float | None = None

    def to_flat_dict(self) -> dict:
        out = {
            "precond_kind": self.precond_kind,
            "lambda_g": self.lambda_g,
            "gap": self.morse_bott.gap,
            "is_morse_bott": self.morse_bott.is_morse_bott,
            "mu": self.mu,
            "L": self.L,
            "tau_star": self.tau_star,
            "rho": self.rho,
            "flag_L_converged": self.L_converged,
            "flag_dim_symmetry": self.morse_bott.dim_symmetry,
            "flag_applicable": self.morse_bott.applicable,
        }
        if self.sigma0 is not None:
            out["sigma0"] = self.sigma0
        for j, lam in enumerate(self.tangent_eigs, start=1):
            out[f"eig_{j}"] = lam
        for j, ang in enumerate(self.morse_bott.alignment_angles, start=1):
            out[f"angle_{j}"] = ang
        return out


def compute_spectrum_report(ops: OperatorSet, state: Field,
                            spec: PreconditionerSpec, k: int = 5, *,
                            tangent_pairs=None, seed: int = 0,
                            tol_degenerate: float = 1e-6,
                            tol_gap: float = 1e-6) -> SpectrumReport:
    """Full analysis at a converged state for one preconditioner kind.

    `tangent_pairs` (from `hessian_tangent_eigs`) may be passed in to share
    the eigensolve across several preconditioner reports."""
    lam_g = lambda_tilde(ops, state)
    if tangent_pairs is None:
        tangent_pairs = hessian_tangent_eigs(ops, state, k, seed=seed)
    gens, dim_s = _symmetry_generators(ops, state)
    angles = principal_angles([p[1] for p in tangent_pairs[:dim_s]], gens)
    verdict = morse_bott_check(lam_g, [p[0] for p in tangent_pairs], angles,
                               dim_s, tol_degenerate=tol_degenerate,
                               tol_gap=tol_gap)
    handle = assemble(spec, ops, state)
    pencil = pencil_extremes(ops, state, handle, lam_g=lam_g, seed=seed)
    tau_star, rho = theoretical_rate(pencil.mu, pencil.L, spec.kind)
    return SpectrumReport(
        precond_kind=spec.kind, lambda_g=lam_g,
        tangent_eigs=tuple(p[0] for p in tangent_pairs),
        morse_bott=verdict, mu=pencil.mu, L=pencil.L,
        L_converged=pencil.L_converged, tau_star=tau_star, rho=rho,
        sigma0=spec.sigma0 if spec.kind == "P4" else None)
