"""Measure-adapted Helmholtz splitting and Poincare-constant diagnostics.

A vector field w in L2(Q, dmu)^3 splits into three mutually Gram-orthogonal
pieces adapted to the twisted operators at Bloch shift kappa:

    w = w_tilde + A^{-1/2}(conj(e) grad(e psi_c) + c) + A^{-1/2} conj(e) grad(e Phi_w)

with e = e_kappa the Bloch phase.  The middle part spans the joint kernel K
(fields that are simultaneously weak-curl-free and solenoidal), the last part
is the irrotational A^{-1/2}-gradient piece, and w_tilde is solenoidal with
zero A^{1/2}-weighted mean.  Both scalar potentials solve A^{-1}-weighted
Laplace problems; the solves block-diagonalize over frequency classes exactly
like the curl systems, so singular measures cost no more than Lebesgue.

The constant triple c has two conventions that coincide for A = Id but not in
general: "mean" takes c = integral of A^{1/2} w dmu (the closed form used by
the effective-tensor theory), "orthogonal" takes the Gram projection onto K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import spectral as sp
from .errors import DegenerateSubspace, PropertyViolation, SingularSystem
from .fields import (MaterialFamily, MaterialField, QuasiField,
                     _values_on_grid, build_family, grad, inner_product,
                     mean_value, multiply_material, norm_mu)
from .galerkin import (CurlFormFactory, DivConstraints, MomentProvider,
                       ScalarGradForm, ToeplitzKernel, _center_index, _wvec,
                       active_axes, class_cutoffs, class_offsets,
                       fast_psd_solve, gather_class, gram_matrix,
                       pairing_rows, pcg_solve, psd_solve, quotient_basis,
                       scatter_class, weighted_table)
from .measure import MeasureSpec

__all__ = [
    "HelmholtzParts",
    "PoincareDiagnostics",
    "solve_potential",
    "solve_potential_multi",
    "solve_psi_c",
    "solve_Phi_w",
    "mean_constant",
    "k_space_basis",
    "decompose",
    "part_residuals",
    "estimate_poincare",
    "grad_A_ratio",
    "irrotational_report",
]


@dataclass
class HelmholtzParts:
    """The three pieces of the splitting plus the potentials behind them."""

    solenoidal: QuasiField
    k_potential: QuasiField
    k_constant: np.ndarray
    grad_potential: QuasiField
    k_field: QuasiField
    grad_field: QuasiField


@dataclass
class PoincareDiagnostics:
    """Discrete constants of the curl inequalities at one (kappa, cutoff)."""

    kappa: tuple[float, float, float]
    cutoffs: tuple[int, int, int]
    C_estimate: float
    C_P_curl: float
    grad_A_ratio: float

    def to_dict(self) -> dict:
        return {
            "kappa": list(self.kappa),
            "N": list(self.cutoffs),
            "C_estimate": self.C_estimate,
            "C_P_curl": self.C_P_curl,
            "grad_A_ratio": self.grad_A_ratio,
        }


def _is_zero_shift(kappa: np.ndarray) -> bool:
    return bool(np.abs(kappa).max() < 1e-14)


def _grad_rhs_cube(F: np.ndarray, fcut: sp.Cutoffs, prov: MomentProvider,
                   cutoffs: sp.Cutoffs, kappa: np.ndarray, period: int) -> np.ndarray:
    """b[q] = <F, grad(e phi_q)>_mu on the whole cube, cube-shaped."""
    return _grad_rhs_cube_multi(np.asarray(F, complex)[None], fcut, prov,
                                cutoffs, kappa, period)[0]


def _rhs_values_multi(Fs: np.ndarray, fcut: sp.Cutoffs, prov: MomentProvider,
                      cutoffs: sp.Cutoffs) -> np.ndarray:
    """V[i] = (mu * F_i) on the solve cube; Fs is (k, 3) + grid."""
    need = tuple(c + f for c, f in zip(cutoffs, fcut))
    mom = prov.array(need)
    conv = sp.convolve(mom, Fs)
    tot = tuple(n + f for n, f in zip(need, fcut))
    return sp.truncate_coeffs(conv, tot, cutoffs)  # (k, 3) + grid


def _grad_rhs_cube_multi(Fs: np.ndarray, fcut: sp.Cutoffs, prov: MomentProvider,
                         cutoffs: sp.Cutoffs, kappa: np.ndarray,
                         period: int) -> np.ndarray:
    """b_i[q] = <F_i, grad(e phi_q)>_mu on the whole cube, (k,) + grid."""
    V = _rhs_values_multi(Fs, fcut, prov, cutoffs)
    w = _wvec(cutoffs, kappa, period, (0, 0, 0))
    return -1j * (w[None] * V).sum(axis=1)


def _moments_center_only(prov: MomentProvider, subcut: sp.Cutoffs) -> bool:
    """True when the class measure is Lebesgue-like: mu_hat = delta_0 there."""
    mom = prov.array(subcut)
    flat = np.abs(mom).reshape(-1)
    ctr = _center_index(subcut)
    scale = max(float(flat.max()), 1e-300)
    if flat.size == 1:
        return True
    return float(np.delete(flat, ctr).max()) <= 1e-14 * scale


def _cg_grad_class(kern, T0: np.ndarray, B: np.ndarray, subcut: sp.Cutoffs,
                   kappa: np.ndarray, period: int, off: tuple[int, int, int],
                   mask_ctr: bool) -> np.ndarray:
    """Matrix-free solve of one Lebesgue-like class via preconditioned CG.

    The class system is a pure difference kernel K[q,p] = w(q).T(q-p).w(p)
    with real symbol w, so the matvec is two FFTs against the cached kernel
    spectrum; the preconditioner inverts the constant-coefficient symbol
    w(q).T(0).w(q) per mode, which bounds the iteration count by the material
    contrast alone.  ``mask_ctr`` solves on the subspace with the constant
    mode pinned to zero (the gauge / kappa = 0 cases).
    """
    gs = sp.grid_shape(subcut)
    n, k = B.shape
    w = _wvec(subcut, kappa, period, off)  # (3,) + gs, real
    wf = w.reshape(3, -1)
    diag = np.einsum("cq,cd,dq->q", wf, T0, wf).real
    guard = max(float(diag.max()), 1e-300)
    diag = np.where(diag > 1e-14 * guard, diag, guard)
    ctr = _center_index(subcut)
    Bc = B.astype(complex, copy=True)
    if mask_ctr:
        Bc[ctr] = 0.0

    def apply_A(P):
        y = w[None] * P.T.reshape(k, 1, *gs)          # (k, 3) + gs
        zf = np.einsum("cd...,kd...->kc...", kern.table_f, kern.fft(y))
        z = kern.ifft_center(zf)                       # (k, 3) + gs
        out = (w[None] * z).sum(axis=1).reshape(k, -1).T
        if mask_ctr:
            out[ctr] = 0.0
        return out

    def apply_M(R):
        return R / diag[:, None]

    X, _ = pcg_solve(apply_A, Bc, apply_M)
    return X


def _solve_gauged_class(K: np.ndarray, bs: np.ndarray, subcut: sp.Cutoffs,
                        prov: MomentProvider, gscale: float,
                        fscale: float) -> np.ndarray:
    """Zero-offset class solve against the constant-free test space, with the
    representative gauged to zero mean against mu.

    The test functions are the nonconstant modes, so the m = 0 row of the
    stiffness is dropped rather than enforced; the lost equation returns as
    solution freedom along the null space of the remaining rows.  That freedom
    is spent on the gauge <psi, 1>_mu = 0 whenever some null direction has a
    nonzero mean; on measures whose null directions are all mean-free the
    minimal-norm representative is kept (the mean is then pinned by the weak
    rows themselves and no gauge freedom exists).

    When the class moments are supported at m = 0 alone (Lebesgue-like) the
    gauge is psi_hat(0) = 0 and the reduced system stays Hermitian.
    """
    ctr = _center_index(subcut)
    n = bs.shape[0]
    if n == 1:
        return np.zeros_like(bs)
    if np.abs(K).max() <= 1e-13 * gscale:
        others = np.delete(bs, ctr, axis=0)
        if np.abs(others).max() > 1e-10 * max(fscale, 1.0):
            raise PropertyViolation("forcing acts on a measure-null class")
        return np.zeros_like(bs)
    mom = prov.array(subcut)
    r = mom[::-1, ::-1, ::-1].reshape(-1)
    rscale = max(float(np.abs(r).max()), 1e-300)
    if np.abs(np.delete(r, ctr)).max() <= 1e-14 * rscale:
        keep = np.ones(n, dtype=bool)
        keep[ctr] = False
        H = 0.5 * (K + K.conj().T)
        sol = fast_psd_solve(H[np.ix_(keep, keep)], bs[keep])
        xs = np.zeros_like(bs)
        xs[keep] = sol
        return xs
    rows = np.delete(np.arange(n), ctr)
    M = K[rows]
    rhs = bs[rows]
    xs, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    res = float(np.linalg.norm(M @ xs - rhs))
    if res > 1e-8 * max(float(np.linalg.norm(rhs)),
                        gscale * float(np.linalg.norm(xs)), 1e-300):
        raise SingularSystem(
            "potential system is inconsistent on the zero-offset class "
            f"(residual {res:.3e})")
    sv = np.linalg.svd(M, compute_uv=True)
    tol = max(sv[1][0], 0.0) * max(M.shape) * np.finfo(float).eps
    rank = int((sv[1] > tol).sum())
    null = sv[2][rank:].conj()          # rows span ker(M)
    if null.size:
        g = null @ r                     # mean of each null direction
        gn = float(np.linalg.norm(g))
        if gn > 1e-12 * rscale:
            means = r @ xs               # (k,) current means
            # minimal-norm null combination cancelling each column's mean
            coef = np.outer(g.conj() / gn ** 2, means)
            xs = xs - null.T @ coef
    return xs


def solve_potential(F: np.ndarray, fcut, family: MaterialFamily,
                    measure: MeasureSpec, cutoffs, kappa,
                    period: int = 1) -> QuasiField:
    """Galerkin solve of  <A^{-1} grad(e psi), grad(e phi)>_mu = <F, grad(e phi)>_mu
    over the nonconstant test modes, gauged to zero mean against mu.

    The test space excludes the constant: potentials are only ever used
    through their gradients, and testing against the constant mode couples
    the solve to a mean the decomposition never sees.  Dropping that row and
    fixing <psi, 1>_mu = 0 makes the split of a field into constant-plus-
    gradient unambiguous at every kappa, zero included.

    Block-diagonalizes over frequency classes; singular systems are solved on
    the retained eigenspace (the representative is the minimal-norm one).
    """
    return solve_potential_multi([np.asarray(F, complex)], fcut, family,
                                 measure, cutoffs, kappa, period)[0]


def solve_potential_multi(Fs, fcut, family: MaterialFamily,
                          measure: MeasureSpec, cutoffs, kappa,
                          period: int = 1,
                          dense_threshold: int = 1729,
                          workspace: dict | None = None) -> list[QuasiField]:
    """solve_potential for several forcings sharing one set of class systems.

    The class systems depend only on (material, measure, kappa, cutoffs);
    solving the forcings together amortizes assembly and factorization, which
    dominate sweeps that touch the same operator with many right-hand sides.

    Classes whose measure restriction is Lebesgue-like and whose mode count
    reaches ``dense_threshold`` are solved matrix-free (FFT matvecs inside
    preconditioned CG to relative residual 1e-12) instead of by dense
    factorization; below it, or on genuinely singular classes, the dense
    route is kept.

    ``workspace`` amortizes the kappa-independent pieces (moment convolution
    of the forcings, assembled kernels/forms) across calls.  Pass the same
    dict only with identical Fs, fcut, family, measure, cutoffs and period.
    """
    ws = {} if workspace is None else workspace
    cutoffs = sp.as_cutoffs(cutoffs)
    fcut = sp.as_cutoffs(fcut)
    kappa = np.asarray(kappa, float)
    prov = MomentProvider(measure, period)
    invA = family.invA
    act = active_axes(measure, invA.cutoffs)
    subcut = class_cutoffs(cutoffs, act)
    if "rhs_V" not in ws:
        ws["rhs_V"] = _rhs_values_multi(
            np.stack([np.asarray(F, complex) for F in Fs]), fcut, prov, cutoffs)
    V = ws["rhs_V"]
    w_full = _wvec(cutoffs, kappa, period, (0, 0, 0))
    b_all = -1j * (w_full[None] * V).sum(axis=1)
    fscale = max(float(np.abs(b_all).max()), 0.0)
    psis = [np.zeros(sp.grid_shape(cutoffs), dtype=complex) for _ in Fs]
    nclass = int(np.prod(sp.grid_shape(subcut)))
    use_cg = (nclass >= dense_threshold
              and _moments_center_only(prov, subcut))
    if use_cg:
        if "cg_kern" not in ws:
            out_cut = tuple(2 * c for c in subcut)
            tab = weighted_table(prov, invA.coeffs, invA.cutoffs, out_cut)
            tc = tuple((s - 1) // 2 for s in tab.shape[-3:])
            ws["cg_kern"] = ToeplitzKernel(tab, subcut)
            ws["cg_T0"] = tab[..., tc[0], tc[1], tc[2]]
        kern = ws["cg_kern"]
        T0 = ws["cg_T0"]
        for off in class_offsets(cutoffs, act):
            B = np.stack([gather_class(b, cutoffs, subcut, off).reshape(-1)
                          for b in b_all], axis=1)
            X = _cg_grad_class(kern, T0, B, subcut, kappa, period, off,
                               off == (0, 0, 0))
            for i, psi in enumerate(psis):
                scatter_class(psi, cutoffs,
                              X[:, i].reshape(sp.grid_shape(subcut)),
                              subcut, off)
    else:
        if "grad_form" not in ws:
            ws["grad_form"] = ScalarGradForm(invA.coeffs, invA.cutoffs, prov,
                                             subcut, period)
        form = ws["grad_form"]
        mats = [(off, form.matrix(kappa, off))
                for off in class_offsets(cutoffs, act)]
        # classes the measure cannot see assemble to pure roundoff; filter
        # them against the largest class so their junk eigenvalues are never
        # inverted
        gscale = max(max(float(np.abs(K).max()) for _, K in mats), 1e-300)
        for off, K in mats:
            B = np.stack([gather_class(b, cutoffs, subcut, off).reshape(-1)
                          for b in b_all], axis=1)
            if off == (0, 0, 0):
                X = _solve_gauged_class(K, B, subcut, prov, gscale, fscale)
            elif np.abs(K).max() <= 1e-13 * gscale:
                if np.abs(B).max() > 1e-10 * max(fscale, 1.0):
                    raise PropertyViolation("forcing acts on a measure-null class")
                X = np.zeros_like(B)
            else:
                X = fast_psd_solve(0.5 * (K + K.conj().T), B)
            for i, psi in enumerate(psis):
                scatter_class(psi, cutoffs,
                              X[:, i].reshape(sp.grid_shape(subcut)),
                              subcut, off)
    return [QuasiField(kappa=kappa, cutoffs=cutoffs, coeffs=psi, period=period)
            for psi in psis]


def solve_psi_c(c, kappa, family: MaterialFamily, measure: MeasureSpec,
                cutoffs, period: int = 1) -> QuasiField:
    """Potential of the K-space element attached to the constant triple c."""
    c = np.asarray(c, complex)
    F = -np.einsum("ab...,b->a...", family.invA.coeffs, c)
    return solve_potential(F, family.invA.cutoffs, family, measure,
                           cutoffs, kappa, period)


def solve_Phi_w(w: QuasiField, kappa, family: MaterialFamily,
                measure: MeasureSpec, cutoffs=None, period: int | None = None) -> QuasiField:
    """Potential whose A^{-1/2}-gradient is the irrotational part of w."""
    kappa = np.asarray(kappa, float)
    if not np.allclose(kappa, w.kappa, atol=1e-14):
        raise PropertyViolation("field and requested Bloch shift disagree")
    F = multiply_material(family.invsqrt, w, extend=True)
    return solve_potential(F.coeffs, F.cutoffs, family, measure,
                           w.cutoffs if cutoffs is None else cutoffs,
                           kappa, w.period if period is None else period)


def mean_constant(w: QuasiField, family: MaterialFamily,
                  measure: MeasureSpec) -> np.ndarray:
    """c = integral of A^{1/2} w dmu."""
    sqw = multiply_material(family.sqrt, w, extend=True)
    return np.asarray(mean_value(sqw, measure))


def _k_element(psi: QuasiField, c: np.ndarray, family: MaterialFamily) -> QuasiField:
    """A^{-1/2}(conj(e) grad(e psi) + c) as an exactly convolved field."""
    v = grad(psi)
    v.coeffs[:, psi.cutoffs[0], psi.cutoffs[1], psi.cutoffs[2]] += c
    return multiply_material(family.invsqrt, v, extend=True)


def k_space_basis(kappa, family: MaterialFamily, measure: MeasureSpec,
                  cutoffs, period: int = 1) -> tuple[list[QuasiField], list[QuasiField]]:
    """The three K-space generators u_i and their potentials psi_{e_i}."""
    us, psis = [], []
    for i in range(3):
        c = np.zeros(3, dtype=complex)
        c[i] = 1.0
        psi = solve_psi_c(c, kappa, family, measure, cutoffs, period)
        us.append(_k_element(psi, c, family))
        psis.append(psi)
    return us, psis


def decompose(w: QuasiField, kappa, family: MaterialFamily, measure: MeasureSpec,
              convention: str = "mean", cutoffs=None) -> HelmholtzParts:
    """Split w into solenoidal, K-space and gradient parts.

    ``convention`` picks the constant triple: "mean" uses the closed form
    c = integral of A^{1/2} w dmu; "orthogonal" uses the Gram projection onto
    K (the two agree for A = Id and for any A with gradient-mean-zero mu).
    ``cutoffs`` bounds the potential solves; fields whose band grew through a
    material product should pass the cube they were generated on, since the
    default w.cutoffs makes the scalar stiffness quadratically larger.
    """
    kappa = np.asarray(kappa, float)
    if not np.allclose(kappa, w.kappa, atol=1e-14):
        raise PropertyViolation("field and requested Bloch shift disagree")
    if cutoffs is None:
        cutoffs = w.cutoffs
    us, psis = k_space_basis(kappa, family, measure, cutoffs, w.period)
    if convention == "mean":
        c = mean_constant(w, family, measure)
    elif convention == "orthogonal":
        G = np.array([[inner_product(us[j], us[i], measure) for j in range(3)]
                      for i in range(3)])
        beta = np.array([inner_product(w, us[i], measure) for i in range(3)])
        c = np.linalg.lstsq(G, beta, rcond=1e-10)[0]
    else:
        raise ValueError(f"unknown convention {convention!r}")
    psi_c = psis[0] * c[0] + psis[1] * c[1] + psis[2] * c[2]
    k_field = us[0] * c[0] + us[1] * c[1] + us[2] * c[2]
    Phi = solve_Phi_w(w, kappa, family, measure, cutoffs=cutoffs)
    grad_field = multiply_material(family.invsqrt, grad(Phi), extend=True)
    solenoidal = w - k_field - grad_field
    return HelmholtzParts(solenoidal=solenoidal, k_potential=psi_c,
                          k_constant=c, grad_potential=Phi,
                          k_field=k_field, grad_field=grad_field)


def part_residuals(parts: HelmholtzParts, w: QuasiField,
                   family: MaterialFamily, measure: MeasureSpec) -> dict:
    """Numerical residuals of the splitting invariants (all should be tiny)."""
    recon = parts.solenoidal + parts.k_field + parts.grad_field - w
    scale = max(norm_mu(w, measure), 1e-30)
    sq_mean = mean_constant(parts.solenoidal, family, measure)
    pairs = {
        "ortho_k_grad": inner_product(parts.k_field, parts.grad_field, measure),
        "ortho_sol_k": inner_product(parts.solenoidal, parts.k_field, measure),
        "ortho_sol_grad": inner_product(parts.solenoidal, parts.grad_field, measure),
    }
    out = {k: abs(v) / scale ** 2 for k, v in pairs.items()}
    out["reconstruction"] = norm_mu(recon, measure) / scale
    out["sqrt_mean_solenoidal"] = float(np.abs(sq_mean).max())
    return out


# ---------------------------------------------------------------------------
# Poincare diagnostics
# ---------------------------------------------------------------------------

def grad_A_ratio(material: MaterialField, n: int = 4096) -> float:
    """max over Q of the 2-norm of (div A) A^{-1} on a collocation grid."""
    cut = material.cutoffs
    if cut == (0, 0, 0):
        return 0.0
    g1, g2, g3 = sp.freq_grids(cut)
    div_coeffs = 2j * np.pi * (
        g1 * material.coeffs[0] + g2 * material.coeffs[1] + g3 * material.coeffs[2])
    nact = sum(1 for c in cut if c)
    cap = max(int(round(2.5e7 ** (1.0 / nact))), 33)  # keep the grid in memory
    nax = min(n, cap)
    npts = tuple(max(nax, 4 * c + 1) if c else 1 for c in cut)
    dvals = _values_on_grid(div_coeffs, cut, npts)          # grid + (3,)
    avals = material.on_grid(npts)                          # grid + (3,3)
    sol = np.linalg.solve(avals, dvals[..., None])[..., 0]
    return float(np.sqrt((np.abs(sol) ** 2).sum(axis=-1)).max())


def _complement_constant(kappa, family: MaterialFamily, measure: MeasureSpec,
                         cutoffs, period: int) -> float:
    """1/sigma_min of curl(e A^{1/2} .) on the complement of K + gradients."""
    cutoffs = sp.as_cutoffs(cutoffs)
    kappa = np.asarray(kappa, float)
    prov = MomentProvider(measure, period)
    Gs = gram_matrix(prov, cutoffs)
    M = np.kron(np.eye(3), Gs)
    fac = CurlFormFactory(family.sqrt.coeffs, family.sqrt.cutoffs, None,
                          (0, 0, 0), prov, cutoffs, period)
    B = fac.matrix(kappa)
    us, _ = k_space_basis(kappa, family, measure, cutoffs, period)
    kcut = tuple(max(u.cutoffs[ax] for u in us) for ax in range(3))
    ks = np.stack([u.pad_to(kcut).coeffs for u in us])
    k_rows = pairing_rows(ks, kcut, prov, cutoffs)
    con = DivConstraints(family.invsqrt.coeffs, family.invsqrt.cutoffs,
                         prov, cutoffs, period)
    g_rows = con.matrix(kappa, drop_zero_row=_is_zero_shift(kappa))
    R = np.vstack([k_rows, g_rows])
    qb = quotient_basis(0.5 * (M + M.conj().T))
    Z0 = scipy.linalg.null_space(R @ qb.V)
    if Z0.shape[1] == 0:
        raise DegenerateSubspace("no complement of K + gradients in the cube")
    Z = qb.V @ Z0
    Br = Z.conj().T @ B @ Z
    Mr = Z.conj().T @ M @ Z
    lam = scipy.linalg.eigh(0.5 * (Br + Br.conj().T), 0.5 * (Mr + Mr.conj().T),
                            eigvals_only=True)
    smallest = float(lam[0])
    if smallest <= 0.0:
        raise DegenerateSubspace("curl operator degenerate on the complement")
    return 1.0 / float(np.sqrt(smallest))


def irrotational_report(kappa, family: MaterialFamily, measure: MeasureSpec,
                        cutoffs, period: int = 1) -> dict:
    """Check that discrete irrotational fields are exactly gradients + constants.

    Irrotational means mu-orthogonal to A^{1/2} conj(e) curl(e phi) over
    zero-mean vector test modes phi.  The representation assumption holds iff
    that null space has the same dimension as span{A^{-1/2} e grad(e phi_r)}
    + span{A^{-1/2} e_i}; arrangement measures have no a priori guarantee, so
    the result is reported rather than asserted.
    """
    cutoffs = sp.as_cutoffs(cutoffs)
    kappa = np.asarray(kappa, float)
    prov = MomentProvider(measure, period)
    Gs = gram_matrix(prov, cutoffs)
    M = np.kron(np.eye(3), Gs)
    qb = quotient_basis(0.5 * (M + M.conj().T))
    nq = Gs.shape[0]

    # rows of the irrotational condition: R[(a,q),(b,p)] = -i eps_{cda} w_d(q) U'_{bc}(q-p)
    # with U' the sqrt-material correlation table (same layout DivConstraints uses)
    corr = DivConstraints(family.sqrt.coeffs, family.sqrt.cutoffs,
                          prov, cutoffs, period)._gath
    w = _wvec(cutoffs, kappa, period, (0, 0, 0)).reshape(3, -1)
    eps = np.zeros((3, 3, 3))
    for (c, d, a), s in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1,
                         (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}.items():
        eps[c, d, a] = s
    R = -1j * np.einsum("cda,dq,bcqp->aqbp", eps, w, corr, optimize=True)
    R = R.reshape(3 * nq, 3 * nq)
    keep = np.ones(3 * nq, dtype=bool)
    center = int(np.ravel_multi_index(cutoffs, sp.grid_shape(cutoffs)))
    for a in range(3):  # zero-mean test space: drop the constant test modes
        keep[a * nq + center] = False
    R = R[keep]

    sv = scipy.linalg.svdvals(R @ qb.V)
    smax = sv[0] if sv.size else 0.0
    rank = int((sv > 1e-8 * max(smax, 1e-300)).sum())
    dim_irrotational = qb.V.shape[1] - rank

    # expected span: gradients of all cube modes plus the constant triple
    form = ScalarGradForm(family.invA.coeffs, family.invA.cutoffs, prov, cutoffs, period)
    K = form.matrix(kappa)
    B = np.empty((nq, 3), dtype=complex)
    for i in range(3):
        ei = np.zeros(3, dtype=complex)
        ei[i] = 1.0
        F = np.einsum("ab...,b->a...", family.invA.coeffs, ei)
        B[:, i] = _grad_rhs_cube(F, family.invA.cutoffs, prov, cutoffs,
                                 kappa, period).reshape(-1)
    need = tuple(max(c, 0) for c in family.invA.cutoffs)
    tabC = sp.convolve(prov.array(need), family.invA.coeffs)
    tot = tuple(n + i for n, i in zip(need, family.invA.cutoffs))
    C = sp.truncate_coeffs(tabC, tot, (0, 0, 0))[:, :, 0, 0, 0]
    span = np.block([[K, B], [B.conj().T, C]])
    ew = scipy.linalg.eigh(0.5 * (span + span.conj().T), eigvals_only=True)
    dim_expected = int((ew > 1e-8 * max(float(ew.max()), 1e-300)).sum())

    return {
        "dim_irrotational": dim_irrotational,
        "dim_expected": dim_expected,
        "dim_retained": qb.V.shape[1],
        "match": dim_irrotational == dim_expected,
    }


def estimate_poincare(kappa, family: MaterialFamily, measure: MeasureSpec,
                      cutoffs, period: int = 1) -> PoincareDiagnostics:
    """Discrete Poincare constants and the div-A assumption ratio.

    C_estimate bounds ||w||_mu by C ||curl(e A^{1/2} w)||_mu on the
    Gram-orthogonal complement of K and the gradients; C_P_curl is the same
    constant for the plain curl (A = Id).  Discrete constants approximate the
    continuum ones from below as the cutoff grows.
    """
    kappa = np.asarray(kappa, float)
    C = _complement_constant(kappa, family, measure, cutoffs, period)
    if family.is_identity:
        C_plain = C
    else:
        ident = build_family(MaterialField.identity())
        C_plain = _complement_constant(kappa, ident, measure, cutoffs, period)
    ratio = grad_A_ratio(family.nominal)
    return PoincareDiagnostics(kappa=tuple(float(k) for k in kappa),
                               cutoffs=sp.as_cutoffs(cutoffs),
                               C_estimate=C, C_P_curl=C_plain,
                               grad_A_ratio=ratio)
