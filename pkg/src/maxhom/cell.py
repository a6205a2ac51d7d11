"""Cell problems on the unit cell and the effective tensors they define.

Two correctors are computed here.  The scalar corrector Psi_kappa has
columns solving  conj(e) div A^{-1}(grad(e Psi e_j) + e e_j) = 0  weakly
against mu on the zero-mean frequency cube; averaging A^{-1}(grad + I)
over the cell gives the effective matrix A_hat.  The curl corrector
Ntilde solves  A^{1/2} curl Atilde curl A^{1/2} Ntilde = -A^{1/2} curl Atilde
at kappa = 0 under divergence and mean constraints, and averaging
Atilde (curl A^{1/2} Ntilde + I) gives the permeability-side tensor.

The symbol vector d couples the two tensors.  The two displayed formulas
for it in the underlying theory disagree in sign and regularization
between the unit-permeability and general branches; the default here
solves

    (A_hat + (i theta x) A_tilde_hom (i theta x)) d = -mean(G),

because that is the constant-mode equation the resolvent itself forces
(it reproduces the exact constant-coefficient fibre solution and makes
the weak-kernel orthogonality identity close to round-off).  Passing
``literal=True`` evaluates the displayed branch formulas verbatim
instead, with pseudo-inverses where they need them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import spectral as sp
from .errors import (ConfigError, ConstraintInfeasible, NotPositiveDefinite,
                     SingularProjection, SingularSymbol, SingularSystem)
from .fields import (MaterialField, MaterialFamily, QuasiField, curl, grad,
                     mean_value, multiply_material)
from .galerkin import (CurlFormFactory, DivConstraints, MomentProvider,
                       gram_matrix, pairing_rows, quotient_basis,
                       vector_rhs_plain, weighted_table)
from .helmholtz import solve_potential_multi
from .measure import MeasureSpec, check_gradient_mean_zero

__all__ = [
    "CellSolutionSet",
    "EffectiveTensors",
    "CellOperator",
    "solve_Psi",
    "effective_A",
    "effective_A_dual",
    "solve_Ntilde",
    "effective_Atilde",
    "solve_a_theta",
    "assemble_corrector",
    "matrix_apply",
    "solve_cell",
    "d_theta",
    "voigt_reiss",
]

_EYE = np.eye(3)


@dataclass
class CellSolutionSet:
    """Correctors for one (material, measure, kappa[, theta]) combination.

    ``Psi_kappa`` holds the three scalar potentials (zero-mean gauge),
    ``Ntilde`` the kappa = 0 curl corrector as a matrix field, ``a_theta``
    the constant matrix completing the corrector N of the general system,
    and ``sqrt_N`` the combined field A^{1/2} N whose columns the two-scale
    approximation multiplies by i theta x d.
    """

    kappa: np.ndarray
    cutoffs: sp.Cutoffs
    Psi_kappa: list[QuasiField]
    Ntilde: QuasiField | None = None
    a_theta: np.ndarray | None = None
    theta: np.ndarray | None = None
    N_full: QuasiField | None = None
    sqrt_N: QuasiField | None = None
    residual_norms: dict[str, float] = field(default_factory=dict)


@dataclass
class EffectiveTensors:
    """Constant matrices of the homogenised medium at one kappa."""

    kappa: np.ndarray
    A_hat_hom: np.ndarray
    A_tilde_hom: np.ndarray
    voigt_reiss: tuple[float, float]
    asymmetry: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kappa": [float(k) for k in self.kappa],
            "A_hat_hom_re": self.A_hat_hom.real.tolist(),
            "A_hat_hom_im": self.A_hat_hom.imag.tolist(),
            "A_tilde_hom_re": self.A_tilde_hom.real.tolist(),
            "A_tilde_hom_im": self.A_tilde_hom.imag.tolist(),
            "voigt_reiss": [float(self.voigt_reiss[0]), float(self.voigt_reiss[1])],
            "asymmetry": {k: float(v) for k, v in self.asymmetry.items()},
        }


def _add_constant(fld: QuasiField, vec: np.ndarray) -> QuasiField:
    c = fld.cutoffs
    fld.coeffs[:, c[0], c[1], c[2]] += vec
    return fld


def _column(fld: QuasiField, j: int) -> QuasiField:
    if fld.rank != "matrix":
        raise ConfigError("column extraction needs a matrix field")
    return QuasiField(kappa=fld.kappa, cutoffs=fld.cutoffs,
                      coeffs=np.array(fld.coeffs[:, j]), period=fld.period)


def _from_columns(cols: list[QuasiField]) -> QuasiField:
    cut = tuple(max(c.cutoffs[ax] for c in cols) for ax in range(3))
    cols = [c.pad_to(cut) for c in cols]
    coeffs = np.stack([c.coeffs for c in cols], axis=1)
    return QuasiField(kappa=cols[0].kappa, cutoffs=cut, coeffs=coeffs,
                      period=cols[0].period)


def _symmetrized(M: np.ndarray) -> tuple[np.ndarray, float]:
    asym = float(np.linalg.norm(M - M.conj().T, 2))
    return 0.5 * (M + M.conj().T), asym


def _cross_const(vec: np.ndarray, fld: QuasiField) -> QuasiField:
    """vec x fld for a constant vector and a vector field."""
    F = fld.coeffs
    out = np.empty_like(F)
    out[0] = vec[1] * F[2] - vec[2] * F[1]
    out[1] = vec[2] * F[0] - vec[0] * F[2]
    out[2] = vec[0] * F[1] - vec[1] * F[0]
    return QuasiField(kappa=fld.kappa, cutoffs=fld.cutoffs, coeffs=out,
                      period=fld.period)


def matrix_apply(fld: QuasiField, vec: np.ndarray) -> QuasiField:
    """Contract a matrix field with a constant vector: (M v)_a = M_ab v_b."""
    if fld.rank != "matrix":
        raise ConfigError("matrix_apply needs a matrix field")
    coeffs = np.einsum("ab...,b->a...", fld.coeffs, np.asarray(vec, complex))
    return QuasiField(kappa=fld.kappa, cutoffs=fld.cutoffs, coeffs=coeffs,
                      period=fld.period)


# ---------------------------------------------------------------------------
# scalar corrector and the A_hat tensor
# ---------------------------------------------------------------------------

class CellOperator:
    """Scalar cell solves for one (family, measure, cutoffs) across kappa.

    Everything kappa-independent is computed once: the moment convolution
    (mu * A^{-1}) powers the right-hand sides, the effective-tensor means
    and (on Lebesgue-like classes) the matrix-free solver kernel, so sweeps
    over many Bloch shifts pay assembly a single time.

    Measures with nonzero gradient means break the integration-by-parts
    identities behind the corrector theory; the check is advisory and can
    be overridden, in which case downstream quantities keep their weak
    (discrete) meaning only.
    """

    def __init__(self, family: MaterialFamily, measure: MeasureSpec, cutoffs,
                 period: int = 1, *, allow_singular_measure: bool = False,
                 _checked: bool = False):
        self.family = family
        self.measure = measure
        self.cutoffs = sp.as_cutoffs(cutoffs)
        self.period = period
        if not _checked:
            report = check_gradient_mean_zero(measure, max(1, max(self.cutoffs)))
            if not report.holds:
                if not allow_singular_measure:
                    raise ConfigError(
                        "measure has nonzero gradient means (worst "
                        f"{report.worst_violation:.3e} at mode "
                        f"{report.worst_index}); pass "
                        "allow_singular_measure=True to solve anyway")
                warnings.warn(
                    "gradient means do not vanish for this measure; corrector "
                    "identities hold only in their discrete weak form",
                    RuntimeWarning, stacklevel=2)
        prov = MomentProvider(measure, period)
        invA = family.invA
        # (mu * A^{-1})(k) on the solve cube: column j is the moment
        # convolution of the j-th corrector forcing, and contracting its
        # reversal against a field integrates A^{-1} times it against mu
        self._tab = weighted_table(prov, invA.coeffs, invA.cutoffs, self.cutoffs)
        self._tab_rev = self._tab[..., ::-1, ::-1, ::-1]
        self.workspace: dict = {"rhs_V": -np.swapaxes(self._tab, 0, 1)}

    def solve_Psi(self, kappa) -> list[QuasiField]:
        """Corrector triple in the zero-mean gauge at one Bloch shift."""
        fam = self.family
        Fs = [-fam.invA.coeffs[:, j] for j in range(3)]
        return solve_potential_multi(Fs, fam.invA.cutoffs, fam, self.measure,
                                     self.cutoffs, kappa, self.period,
                                     workspace=self.workspace)

    def mean_invA_product(self, fld: QuasiField) -> np.ndarray:
        """integral of A^{-1} fld dmu, via the cached moment convolution."""
        if fld.cutoffs != self.cutoffs:
            raise ConfigError("field cutoffs do not match this operator")
        return np.einsum("abxyz,bxyz->a", self._tab_rev, fld.coeffs)

    def effective_A(self, kappa, psis: list[QuasiField] | None = None
                    ) -> tuple[np.ndarray, float]:
        """Effective matrix at one kappa, plus the discarded asymmetry norm."""
        if psis is None:
            psis = self.solve_Psi(kappa)
        cols = []
        for j in range(3):
            v = grad(psis[j])
            _add_constant(v, _EYE[j])
            cols.append(self.mean_invA_product(v))
        return _symmetrized(np.stack(cols, axis=1))


def solve_Psi(kappa, family: MaterialFamily, measure: MeasureSpec, cutoffs,
              period: int = 1, *, allow_singular_measure: bool = False
              ) -> list[QuasiField]:
    """Scalar corrector triple; column j solves the cell problem for e_j.

    All columns live in the zero-mean gauge (zero mean against mu, with the
    constant test row ceded to that constraint at every kappa), which is the
    normalization the effective tensor and the two-scale approximation are
    defined with.  Sweeping many kappa at fixed data is cheaper through
    ``CellOperator``.
    """
    op = CellOperator(family, measure, cutoffs, period,
                      allow_singular_measure=allow_singular_measure)
    return op.solve_Psi(kappa)


def effective_A(kappa, family: MaterialFamily, measure: MeasureSpec,
                cutoffs=None, period: int = 1, *,
                psis: list[QuasiField] | None = None,
                allow_singular_measure: bool = False
                ) -> tuple[np.ndarray, float]:
    """Effective matrix at one kappa, plus the discarded asymmetry norm.

    Column j is the mu-average of A^{-1}(conj(e) grad(e Psi_j) + e_j); the
    result is Hermitian-symmetrized because truncation breaks symmetry at
    round-off scale and downstream solves need exactly Hermitian input.
    """
    if psis is None and cutoffs is None:
        raise ConfigError("effective_A needs cutoffs when psis are not given")
    if cutoffs is None:
        cutoffs = psis[0].cutoffs
    op = CellOperator(family, measure, cutoffs, period,
                      allow_singular_measure=allow_singular_measure,
                      _checked=psis is not None)
    return op.effective_A(kappa, psis)


def effective_A_dual(kappa, family: MaterialFamily, measure: MeasureSpec,
                     cutoffs, period: int = 1) -> tuple[np.ndarray, float]:
    """Dual tensor: the inverse effective matrix by constrained minimization.

    Entry (i, j) comes from minimizing the A-weighted energy of v + e_j over
    mean-zero fields that are orthogonal to every zero-mean shifted gradient;
    at matched cutoff this is the exact discrete dual of ``effective_A``, so
    inverting the result recovers the primal tensor up to round-off (for
    measures whose gradient means vanish).
    """
    cutoffs = sp.as_cutoffs(cutoffs)
    kappa = np.asarray(kappa, float)
    mom = MomentProvider(measure, period)
    A = family.nominal
    M = gram_matrix(mom, cutoffs, weight=A.coeffs, wcut=A.cutoffs)
    eye_cols = np.eye(3, dtype=complex).reshape(3, 3, 1, 1, 1)
    div_rows = DivConstraints(eye_cols, (0, 0, 0), mom, cutoffs,
                              period).matrix(kappa)
    mean_rows = pairing_rows(eye_cols, (0, 0, 0), mom, cutoffs)
    R = np.vstack([div_rows, mean_rows])
    G3 = np.kron(np.eye(3), gram_matrix(mom, cutoffs))
    qb = quotient_basis(0.5 * (G3 + G3.conj().T))
    V = qb.V
    Mq = V.conj().T @ M @ V
    Mq = 0.5 * (Mq + Mq.conj().T)
    Rq = R @ V
    B = np.stack([vector_rhs_plain(A.coeffs[:, j], A.cutoffs, mom, cutoffs)
                  for j in range(3)], axis=1)
    X = _constrained_minimum(Mq, Rq, -(V.conj().T @ B))
    grid = sp.grid_shape(cutoffs)
    cols = []
    for j in range(3):
        v = QuasiField(kappa=kappa, cutoffs=cutoffs,
                       coeffs=(V @ X[:, j]).reshape((3,) + grid), period=period)
        _add_constant(v, _EYE[j])
        w = multiply_material(A, v, extend=True)
        cols.append(np.asarray(mean_value(w, measure)))
    return _symmetrized(np.stack(cols, axis=1))


def _constrained_minimum(M: np.ndarray, R: np.ndarray, b: np.ndarray) -> np.ndarray:
    """argmin x^H M x - 2 Re(b^H x)  subject to  R x = 0  (M Hermitian PD)."""
    Z = scipy.linalg.null_space(R)
    if Z.shape[1] == 0:
        raise ConstraintInfeasible("constraints leave no admissible fields")
    ZMZ = Z.conj().T @ M @ Z
    ZMZ = 0.5 * (ZMZ + ZMZ.conj().T)
    try:
        f = scipy.linalg.cho_factor(ZMZ)
        T = scipy.linalg.cho_solve(f, Z.conj().T @ b)
    except scipy.linalg.LinAlgError as exc:
        w = scipy.linalg.eigvalsh(ZMZ)
        raise SingularSystem(
            "quadratic form is not positive definite on the constraint "
            f"space (smallest eigenvalue {w[0]:.3e})") from exc
    res = ZMZ @ T - Z.conj().T @ b
    scale = max(float(np.linalg.norm(Z.conj().T @ b)), 1e-300)
    if float(np.linalg.norm(res)) > 1e-8 * scale:
        raise SingularSystem(
            "constrained solve lost accuracy (relative residual "
            f"{float(np.linalg.norm(res)) / scale:.3e})")
    return Z @ T


# ---------------------------------------------------------------------------
# curl corrector and the A_tilde tensor
# ---------------------------------------------------------------------------

def solve_Ntilde(family: MaterialFamily, Atilde: MaterialField,
                 measure: MeasureSpec, cutoffs, period: int = 1
                 ) -> tuple[QuasiField, dict[str, float]]:
    """Curl corrector at kappa = 0, one column per coordinate direction.

    Weak form: the Atilde-weighted curl energy of A^{1/2} Ntilde_j tested
    against curl(A^{1/2} phi) balances -Atilde e_j, subject to weak
    divergence of A^{-1/2} Ntilde_j vanishing and the A^{1/2}-weighted mean
    being zero.  Both constraints are enforced exactly by restricting to
    their joint null space, which is the stable form of the saddle-point
    system; positive definiteness of the restricted stiffness is the
    discrete stand-in for the compact-embedding assumption and is verified
    rather than assumed.
    """
    cutoffs = sp.as_cutoffs(cutoffs)
    kz = np.zeros(3)
    mom = MomentProvider(measure, period)
    fact = CurlFormFactory(family.sqrt.coeffs, family.sqrt.cutoffs,
                           Atilde.coeffs, Atilde.cutoffs, mom, cutoffs, period)
    B = fact.matrix(kz)
    rhs = np.stack([-fact.rhs_curl(Atilde.coeffs[:, j], Atilde.cutoffs, mom, kz)
                    for j in range(3)], axis=1)
    div_rows = DivConstraints(family.invsqrt.coeffs, family.invsqrt.cutoffs,
                              mom, cutoffs, period).matrix(kz)
    mean_rows = pairing_rows(np.stack([family.sqrt.coeffs[:, i] for i in range(3)]),
                             family.sqrt.cutoffs, mom, cutoffs)
    R = np.vstack([div_rows, mean_rows])
    G3 = np.kron(np.eye(3), gram_matrix(mom, cutoffs))
    qb = quotient_basis(0.5 * (G3 + G3.conj().T))
    V = qb.V
    Bq = V.conj().T @ B @ V
    Bq = 0.5 * (Bq + Bq.conj().T)
    Rq = R @ V
    bq = V.conj().T @ rhs
    Z = scipy.linalg.null_space(Rq)
    if Z.shape[1] == 0:
        raise ConstraintInfeasible(
            "divergence and mean constraints leave no admissible fields")
    ZBZ = Z.conj().T @ Bq @ Z
    ZBZ = 0.5 * (ZBZ + ZBZ.conj().T)
    try:
        f = scipy.linalg.cho_factor(ZBZ)
    except scipy.linalg.LinAlgError as exc:
        w = scipy.linalg.eigvalsh(ZBZ)
        raise SingularSystem(
            "curl stiffness is not positive definite on the constraint space "
            f"(smallest eigenvalue {w[0]:.3e}); the compact-embedding "
            "surrogate fails at this cutoff") from exc
    T = scipy.linalg.cho_solve(f, Z.conj().T @ bq)
    X = V @ (Z @ T)
    grid = sp.grid_shape(cutoffs)
    coeffs = np.stack([X[:, j].reshape((3,) + grid) for j in range(3)], axis=1)
    nt = QuasiField(kappa=kz, cutoffs=cutoffs, coeffs=coeffs, period=period)
    scale = max(float(np.linalg.norm(bq)), 1e-300)
    weak = float(np.linalg.norm(Z.conj().T @ (Bq @ (Z @ T)) - Z.conj().T @ bq)) / scale
    cons = float(np.abs(R @ X).max()) if R.size else 0.0
    return nt, {"ntilde_weak": weak, "ntilde_constraints": cons}


def effective_Atilde(Atilde: MaterialField, family: MaterialFamily,
                     ntilde: QuasiField, measure: MeasureSpec
                     ) -> tuple[np.ndarray, float]:
    """mu-average of Atilde (curl A^{1/2} Ntilde + I), symmetrized."""
    cols = []
    for j in range(3):
        w = curl(multiply_material(family.sqrt, _column(ntilde, j), extend=True))
        _add_constant(w, _EYE[j])
        u = multiply_material(Atilde, w, extend=True)
        cols.append(np.asarray(mean_value(u, measure)))
    return _symmetrized(np.stack(cols, axis=1))


# ---------------------------------------------------------------------------
# the constant matrix a_theta and the assembled corrector N
# ---------------------------------------------------------------------------

def _frame(theta: np.ndarray) -> np.ndarray:
    """Real orthonormal pair spanning the plane orthogonal to theta, (3, 2)."""
    that = theta / np.linalg.norm(theta)
    pick = int(np.argmin(np.abs(that)))
    e = np.zeros(3)
    e[pick] = 1.0
    f1 = e - that * that[pick]
    f1 /= np.linalg.norm(f1)
    f2 = np.cross(that, f1)
    return np.stack([f1, f2], axis=1)


def solve_a_theta(theta, Atilde: MaterialField, ntilde: QuasiField,
                  Psi0: list[QuasiField], family: MaterialFamily,
                  measure: MeasureSpec) -> tuple[np.ndarray, float]:
    """Constant matrix a_theta with a_theta theta = 0 and range orthogonal
    to theta, making i theta x Atilde (i theta x A^{1/2} N eta) integrate to
    zero for every eta orthogonal to theta.

    The unknown couples back into the scalar corrector (the potential of
    a_theta eta enters the same average), so the potential superposition is
    moved to the left-hand side via linearity before solving the projected
    2 x 2 system in an orthonormal frame of the theta-orthogonal plane.
    Returns the matrix and the verification defect of the averaged identity.
    """
    theta = np.asarray(theta, float)
    if np.linalg.norm(theta) == 0.0:
        raise ConfigError("a_theta needs a nonzero direction")
    E = _frame(theta)
    sqN = multiply_material(family.sqrt, ntilde, extend=True)

    def tmean(fld: QuasiField) -> np.ndarray:
        w = _cross_const(1j * theta, fld)
        m = np.asarray(mean_value(multiply_material(Atilde, w, extend=True),
                                  measure))
        return np.cross(1j * theta, m)

    def element(cvec: np.ndarray) -> QuasiField:
        psi = Psi0[0] * cvec[0] + Psi0[1] * cvec[1] + Psi0[2] * cvec[2]
        v = grad(psi)
        return _add_constant(v, cvec)

    S = np.empty((2, 2), dtype=complex)
    b = np.empty((2, 2), dtype=complex)
    for l in range(2):
        y = tmean(element(E[:, l].astype(complex)))
        S[:, l] = E.T @ y
    for k in range(2):
        y = tmean(matrix_apply(sqN, E[:, k]))
        b[:, k] = -(E.T @ y)
    if np.linalg.cond(S) > 1e10:
        raise SingularProjection(
            "projected 2x2 system is numerically singular (condition "
            f"{np.linalg.cond(S):.3e}); the weighted form lost definiteness "
            "under discretization")
    C = np.linalg.solve(S, b)
    a = E @ C @ E.T
    defect = 0.0
    for k in range(2):
        eta = E[:, k]
        full = matrix_apply(sqN, eta) + element(a @ eta)
        defect = max(defect, float(np.linalg.norm(tmean(full))))
    return a, defect


def assemble_corrector(family: MaterialFamily, ntilde: QuasiField,
                       Psi0: list[QuasiField], a_theta: np.ndarray
                       ) -> tuple[QuasiField, QuasiField]:
    """Corrector N = Ntilde + A^{-1/2}(grad Psi[a_theta] + a_theta).

    Returns (N, A^{1/2} N) as matrix fields; the weighted form is the one
    the approximation and the flux channels consume, and building it first
    keeps the pair exactly consistent (N is its A^{-1/2} image).
    """
    sqN = multiply_material(family.sqrt, ntilde, extend=True)
    cols = []
    for j in range(3):
        psi = (Psi0[0] * a_theta[0, j] + Psi0[1] * a_theta[1, j]
               + Psi0[2] * a_theta[2, j])
        v = grad(psi)
        _add_constant(v, a_theta[:, j])
        cols.append(_column(sqN, j) + v)
    sq_full = _from_columns(cols)
    n_full = multiply_material(family.invsqrt, sq_full, extend=True)
    return n_full, sq_full


# ---------------------------------------------------------------------------
# symbol vector
# ---------------------------------------------------------------------------

def d_theta(theta, G_mean, A_hat: np.ndarray,
            A_tilde: np.ndarray | None = None, *,
            literal: bool = False) -> np.ndarray:
    """Constant leading-order amplitude d for mean forcing G_mean.

    Default: solve (A_hat + X A_tilde X) d = -G_mean with X = i theta x,
    the unit branch being A_tilde = Id.  A singular symbol is accepted when
    the system is consistent (minimum-norm solution) and rejected loudly
    otherwise.  ``literal=True`` switches to the displayed branch formulas:
    +A_hat^{-1}(X X A_hat^{-1} + I)^{-1} G_mean for the unit branch and
    -A_hat^{-1}(X A_tilde X A_hat^{-1})^+ G_mean for the general one, using
    pseudo-inverses for the singular factors they contain.
    """
    theta = np.asarray(theta, float)
    G = np.asarray(G_mean, complex)
    X = 1j * sp.cross_matrix(theta)
    if literal:
        Ainv = np.linalg.pinv(A_hat, hermitian=True)
        if A_tilde is None:
            M = X @ X @ Ainv + np.eye(3)
            return Ainv @ np.linalg.solve(M, G)
        M = X @ A_tilde @ X @ Ainv
        return -Ainv @ (np.linalg.pinv(M) @ G)
    At = np.eye(3) if A_tilde is None else np.asarray(A_tilde, complex)
    M = A_hat + X @ At @ X
    d, *_ = np.linalg.lstsq(M, -G, rcond=None)
    res = float(np.linalg.norm(M @ d + G))
    if res > 1e-10 * max(float(np.linalg.norm(G)), 1e-300):
        raise SingularSymbol(
            "symbol matrix is singular and the forcing mean is outside its "
            f"range (residual {res:.3e})")
    return d


# ---------------------------------------------------------------------------
# bounds and bundled solves
# ---------------------------------------------------------------------------

def voigt_reiss(material: MaterialField) -> tuple[float, float]:
    """Rigorous two-sided constants (C1, C2) sandwiching the effective matrix.

    C1 = 1/||A||_inf and C2 = ||A^{-1}||_inf are bounded through the Fourier
    triangle inequality (||A(y)|| <= sum of modewise spectral norms, and
    lambda_min(A(y)) >= lambda_min of the mean minus the same tail), so the
    returned interval always contains the exact essential-sup interval.
    """
    c = material.cutoffs
    mean = material.coeffs[:, :, c[0], c[1], c[2]]
    mean = 0.5 * (mean + mean.conj().T)
    blocks = np.moveaxis(material.coeffs.reshape(3, 3, -1), -1, 0)
    norms = np.linalg.svd(blocks, compute_uv=False)[:, 0]
    ctr = np.ravel_multi_index(c, sp.grid_shape(c))
    tail = float(norms.sum() - norms[ctr])
    top = float(np.linalg.eigvalsh(mean)[-1]) + tail
    bottom = float(np.linalg.eigvalsh(mean)[0]) - tail
    if bottom <= 0.0:
        raise NotPositiveDefinite(
            "coefficient oscillation swallows the mean's smallest eigenvalue; "
            "no positive lower ellipticity bound certifiable from the series")
    return 1.0 / top, 1.0 / bottom


def solve_cell(kappa, family: MaterialFamily, Atilde: MaterialField | None,
               measure: MeasureSpec, cutoffs, theta=None, period: int = 1, *,
               allow_singular_measure: bool = False
               ) -> tuple[CellSolutionSet, EffectiveTensors]:
    """One-stop cell solve: correctors plus effective tensors.

    ``Atilde=None`` means unit permeability: the curl corrector and a_theta
    vanish identically and only the scalar problem is solved.  ``theta`` is
    needed only for a_theta (any nonzero multiple of kappa works; a_theta
    depends on the direction alone).
    """
    cutoffs = sp.as_cutoffs(cutoffs)
    kappa = np.asarray(kappa, float)
    psis = solve_Psi(kappa, family, measure, cutoffs, period,
                     allow_singular_measure=allow_singular_measure)
    A_hat, asym_hat = effective_A(kappa, family, measure, period=period,
                                  psis=psis)
    sols = CellSolutionSet(kappa=kappa, cutoffs=cutoffs, Psi_kappa=psis)
    asym = {"A_hat": asym_hat}
    if Atilde is None or Atilde.is_identity:
        A_til = np.eye(3, dtype=complex)
        asym["A_tilde"] = 0.0
        if theta is not None and np.linalg.norm(np.asarray(theta, float)) > 0:
            # unit permeability: the curl corrector vanishes and the constant
            # completion solves a homogeneous projected system
            sols.a_theta = np.zeros((3, 3))
            sols.theta = np.asarray(theta, float)
            sols.residual_norms["a_theta_defect"] = 0.0
    else:
        nt, res = solve_Ntilde(family, Atilde, measure, cutoffs, period)
        A_til, asym_til = effective_Atilde(Atilde, family, nt, measure)
        asym["A_tilde"] = asym_til
        sols.Ntilde = nt
        sols.residual_norms.update(res)
        if theta is not None and np.linalg.norm(np.asarray(theta, float)) > 0:
            theta = np.asarray(theta, float)
            psi0 = (psis if np.abs(kappa).max() < 1e-14 else
                    solve_Psi(np.zeros(3), family, measure, cutoffs, period,
                              allow_singular_measure=allow_singular_measure))
            a, defect = solve_a_theta(theta, Atilde, nt, psi0, family, measure)
            sols.a_theta = a
            sols.theta = theta
            sols.residual_norms["a_theta_defect"] = defect
            sols.N_full, sols.sqrt_N = assemble_corrector(family, nt, psi0, a)
    tensors = EffectiveTensors(kappa=kappa, A_hat_hom=A_hat, A_tilde_hom=A_til,
                               voigt_reiss=voigt_reiss(family.nominal),
                               asymmetry=asym)
    return sols, tensors
