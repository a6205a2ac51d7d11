"""Dense Galerkin assembly over measure moments, and linear solvers.

Every sesquilinear form used by the solvers pairs band-limited fields
through exact measure moments, so each assembled matrix entry is a finite
convolution of known coefficient tables.  Two structural facts keep the
dense path fast:

1. Symbol-affine assembly.  A curl column curl_kappa(e_kappa A^{1/2} phi_{p,b})
   has coefficients S(m) x [sqrtA_hat(m - p) e_b] with
   S(m) = i(2 pi m / period + kappa).  Writing S(m) = i 2 pi (m - p)/period
   + i w(p), w(p) = 2 pi (p + offset)/period + kappa, splits every column
   into four generator columns that depend only on the frequency difference
   m - p, with real scalar factors lambda(p) in front.  The form matrix then
   becomes a sum of sixteen Toeplitz gathers scaled by row/column factors,
   and the gathers are independent of kappa, epsilon and the class offset,
   so they are built once per (material, measure, cube) and reused across a
   whole parameter sweep.

2. Class decomposition.  If neither the materials nor the measure moments
   couple frequencies along some axis, the Galerkin system block-diagonalizes
   over the frequencies on that axis ("classes").  Each class is the same
   small sub-cube problem with the class frequency entering only through the
   offset in w(p).

Solvers: Cholesky for definite systems, eigenvalue-truncated pseudo-solves
on the retained Gram eigenspace for singular measures (where fields are
equivalence classes and the mass operator is only semidefinite), and a
Schur-complement or null-space method for constrained saddle systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.linalg

from . import spectral as sp
from .errors import (ConstraintInfeasible, DegenerateSubspace, SingularSystem,
                     SolverDiverged)
from .measure import MeasureSpec, moment_array

__all__ = [
    "MomentProvider",
    "difference_gather",
    "op_flatten",
    "vec_flatten",
    "vec_unflatten",
    "weighted_table",
    "gram_matrix",
    "CurlFormFactory",
    "ScalarGradForm",
    "DivConstraints",
    "active_axes",
    "class_offsets",
    "class_cutoffs",
    "scatter_class",
    "gather_class",
    "psd_solve",
    "fast_psd_solve",
    "ToeplitzKernel",
    "pcg_solve",
    "hermitian_solve",
    "saddle_solve",
    "quotient_basis",
]

_MAX_DENSE_ENTRIES = 80_000_000  # ~1.2 GiB of complex128 per assembled operator


# ---------------------------------------------------------------------------
# moments and gathers
# ---------------------------------------------------------------------------

class MomentProvider:
    """Caches centered moment arrays of one measure at several cutoffs."""

    def __init__(self, measure: MeasureSpec, period: int = 1):
        self.measure = measure
        self.period = period
        self._cache: dict[sp.Cutoffs, np.ndarray] = {}

    def array(self, cutoffs) -> np.ndarray:
        cutoffs = sp.as_cutoffs(cutoffs)
        if cutoffs not in self._cache:
            self._cache[cutoffs] = moment_array(self.measure, cutoffs, period=self.period)
        return self._cache[cutoffs]

    def lebesgue_like(self, cutoffs) -> bool:
        """True if in this band the Gram is the identity (only mu_hat(0) != 0)."""
        arr = self.array(cutoffs).copy()
        c = sp.as_cutoffs(cutoffs)
        center = arr[c[0], c[1], c[2]]
        arr[c[0], c[1], c[2]] = 0.0
        return abs(center - 1.0) < 1e-13 and np.abs(arr).max() < 1e-15


def difference_gather(table: np.ndarray, cut_out: sp.Cutoffs,
                      cut_in: sp.Cutoffs) -> np.ndarray:
    """Gather W[q, p] = table[q - p] from a centered difference table.

    ``table`` may carry leading axes; output shape is lead + qgrid + pgrid.
    """
    ct = tuple((s - 1) // 2 for s in table.shape[-3:])
    if any(co + ci > t for co, ci, t in zip(cut_out, cut_in, ct)):
        raise sp.CutoffTooSmall(f"table range {ct} < {cut_out} + {cut_in}")
    ix = []
    for ax in range(3):
        q = np.arange(-cut_out[ax], cut_out[ax] + 1)
        p = np.arange(-cut_in[ax], cut_in[ax] + 1)
        ix.append(q[:, None] - p[None, :] + ct[ax])
    I1 = ix[0][:, None, None, :, None, None]
    I2 = ix[1][None, :, None, None, :, None]
    I3 = ix[2][None, None, :, None, None, :]
    return table[..., I1, I2, I3]


def op_flatten(block: np.ndarray) -> np.ndarray:
    """(a, b, q1,q2,q3, p1,p2,p3) -> (a*Q, b*P), component-major rows/cols."""
    na, nb = block.shape[0], block.shape[1]
    qsh = block.shape[2:5]
    psh = block.shape[5:8]
    perm = block.transpose(0, 2, 3, 4, 1, 5, 6, 7)
    return np.ascontiguousarray(perm.reshape(na * int(np.prod(qsh)), nb * int(np.prod(psh))))


def op_flatten_scalar(block: np.ndarray) -> np.ndarray:
    """(q1,q2,q3, p1,p2,p3) -> (Q, P)."""
    qsh = block.shape[0:3]
    psh = block.shape[3:6]
    return block.reshape(int(np.prod(qsh)), int(np.prod(psh)))


def vec_flatten(coeffs: np.ndarray) -> np.ndarray:
    """Vector cube (3, n1, n2, n3) -> (3Q,), component-major."""
    return coeffs.reshape(-1)


def vec_unflatten(x: np.ndarray, cutoffs: sp.Cutoffs, rank: str = "vector") -> np.ndarray:
    lead = {"scalar": (), "vector": (3,)}[rank]
    return x.reshape(lead + sp.grid_shape(cutoffs))


def weighted_table(moments: MomentProvider, weight: np.ndarray | None,
                   wcut: sp.Cutoffs, out_cut: sp.Cutoffs) -> np.ndarray:
    """T(k) = (mu_hat * weight_hat)(k) on the centered cube out_cut.

    ``weight`` carries leading component axes (or is None for the plain
    moment table).  Exact: moments are evaluated far enough out that the
    convolution needs no padding assumptions.
    """
    if weight is None:
        return moments.array(out_cut)
    need = tuple(o + w for o, w in zip(out_cut, wcut))
    mom = moments.array(need)
    conv = sp.convolve(mom, weight)  # cutoffs need + wcut
    tot = tuple(n + w for n, w in zip(need, wcut))
    return sp.truncate_coeffs(conv, tot, out_cut)


def gram_matrix(moments: MomentProvider, cutoffs: sp.Cutoffs,
                weight: np.ndarray | None = None,
                wcut: sp.Cutoffs = (0, 0, 0)) -> np.ndarray:
    """Dense scalar Gram (Q, Q): W[q, p] = (mu * weight)(q - p)."""
    out_cut = tuple(2 * c for c in cutoffs)
    tab = weighted_table(moments, weight, wcut, out_cut)  # type: ignore[arg-type]
    W = difference_gather(tab, cutoffs, cutoffs)
    if weight is not None and W.ndim == 8:
        return op_flatten(W)
    return op_flatten_scalar(W)


# ---------------------------------------------------------------------------
# symbol-affine curl-curl factory
# ---------------------------------------------------------------------------

def _generator_stack(sqrt_coeffs: np.ndarray, scut: sp.Cutoffs, period: int) -> np.ndarray:
    """Stack the four generator column sets X_x, x = 0..3, shape (4,3,3,grid).

    X_0[:, b](u) = (i 2 pi u / period) x sqrtA[:, b](u)   (frozen curl part)
    X_r[:, b](u) = i e_r x sqrtA[:, b](u)                 (symbol-linear part)
    """
    g1, g2, g3 = sp.freq_grids(scut)
    out = np.empty((4, 3, 3) + g1.shape, dtype=complex)
    twopi = 2j * np.pi / period
    u = (twopi * g1, twopi * g2, twopi * g3)
    A = sqrt_coeffs
    out[0, 0] = u[1] * A[2] - u[2] * A[1]
    out[0, 1] = u[2] * A[0] - u[0] * A[2]
    out[0, 2] = u[0] * A[1] - u[1] * A[0]
    for r in range(3):
        e = np.zeros(3)
        e[r] = 1.0
        out[1 + r, 0] = 1j * (e[1] * A[2] - e[2] * A[1])
        out[1 + r, 1] = 1j * (e[2] * A[0] - e[0] * A[2])
        out[1 + r, 2] = 1j * (e[0] * A[1] - e[1] * A[0])
    return out


def _sandwich_table(X: np.ndarray, xcut: sp.Cutoffs, Tw: np.ndarray,
                    twcut: sp.Cutoffs, Y: np.ndarray, ycut: sp.Cutoffs,
                    out_cut: sp.Cutoffs) -> np.ndarray:
    """T_xy(k)_{ab} = sum_{u',u} conj(X_{sa}(u')) Tw_{st}(k+u'-u) Y_{tb}(u)."""
    # inner convolution over u: Z_{sb}(v) = sum_t (Tw_{st} * Y_{tb})(v)
    Z = sp.convolve(Tw[:, :, None], Y[None]).sum(axis=1)       # (s, b, grid)
    zcut = tuple(a + b for a, b in zip(twcut, ycut))
    # correlation over u': T(k) = sum_s (revconj(X)_{sa} * Z_{sb})(k)
    RX = sp.revconj(X)                                          # (s, a, grid)
    T = sp.convolve(RX[:, :, None], Z[:, None]).sum(axis=0)     # (a, b, grid)
    tcut = tuple(a + b for a, b in zip(xcut, zcut))
    return sp.truncate_coeffs(T, tcut, out_cut)                 # type: ignore[arg-type]


def _wvec(cutoffs: sp.Cutoffs, kappa: np.ndarray, period: int,
          offset: tuple[int, int, int]) -> np.ndarray:
    """Real symbol vector w(q) = 2 pi (q + offset)/period + kappa, (3,) + grid."""
    g = sp.freq_grids(cutoffs)
    out = np.empty((3,) + g[0].shape)
    for a in range(3):
        out[a] = 2.0 * np.pi * (g[a] + offset[a]) / period + kappa[a]
    return out


@dataclass
class _Bases:
    cut: sp.Cutoffs
    blocks: np.ndarray  # (4, 4, 3Q, 3Q)


class CurlFormFactory:
    """Weighted curl-curl form on a frequency cube, for any (kappa, offset).

    Assembles  B[(a,q),(b,p)] = <W curl(e A^{1/2} phi_pb), curl(e A^{1/2} phi_qa)>_mu
    where W is a material weight (identity or a tilde coefficient).  The
    sixteen gathered generator bases are built once; ``matrix`` combines them
    with real row/column factors for a concrete symbol shift.
    """

    def __init__(self, sqrt_coeffs: np.ndarray, scut: sp.Cutoffs,
                 weight: np.ndarray | None, wcut: sp.Cutoffs,
                 moments: MomentProvider, cutoffs: sp.Cutoffs, period: int = 1):
        self.cutoffs = sp.as_cutoffs(cutoffs)
        self.period = period
        q = int(np.prod(sp.grid_shape(self.cutoffs)))
        if 16 * (3 * q) ** 2 > 2 * _MAX_DENSE_ENTRIES:
            raise MemoryError(f"curl form bases too large for cube {self.cutoffs}")
        X = _generator_stack(np.asarray(sqrt_coeffs, complex), scut, period)
        self._X = X
        self._scut = sp.as_cutoffs(scut)
        out_cut = tuple(2 * c for c in self.cutoffs)
        tw_cut = tuple(o + 2 * s for o, s in zip(out_cut, scut))
        Tw = weighted_table(moments, weight, wcut, tw_cut)  # type: ignore[arg-type]
        if Tw.ndim == 3:  # scalar weight table never happens for materials; keep safe
            eye = np.eye(3, dtype=complex).reshape(3, 3, 1, 1, 1)
            Tw = Tw[None, None] * eye
        blocks = np.empty((4, 4, 3 * q, 3 * q), dtype=complex)
        for x in range(4):
            for y in range(4):
                tab = _sandwich_table(X[x], scut, Tw, tw_cut, X[y], scut, out_cut)  # type: ignore[arg-type]
                blocks[x, y] = op_flatten(difference_gather(tab, self.cutoffs, self.cutoffs))
        self._bases = _Bases(cut=self.cutoffs, blocks=blocks)

    def _factors(self, kappa: np.ndarray, offset: tuple[int, int, int]) -> np.ndarray:
        """lambda_x(q) stacked, shape (4, 3Q); lambda_0 = 1, lambda_r = w_r(q)."""
        w = _wvec(self.cutoffs, kappa, self.period, offset)
        q = int(np.prod(sp.grid_shape(self.cutoffs)))
        lam = np.empty((4, 3 * q))
        lam[0] = 1.0
        for r in range(3):
            lam[1 + r] = np.broadcast_to(w[r].reshape(-1), (3, q)).reshape(-1)
        return lam

    def matrix(self, kappa: np.ndarray, offset: tuple[int, int, int] = (0, 0, 0)) -> np.ndarray:
        lam = self._factors(np.asarray(kappa, float), offset)
        B = self._bases.blocks
        out = np.zeros_like(B[0, 0])
        for x in range(4):
            for y in range(4):
                out += (lam[x][:, None] * B[x, y]) * lam[y][None, :]
        return out

    def rhs_curl(self, F_coeffs: np.ndarray, fcut: sp.Cutoffs,
                 moments: MomentProvider, kappa: np.ndarray,
                 offset: tuple[int, int, int] = (0, 0, 0)) -> np.ndarray:
        """b[(a,q)] = <F, curl(e A^{1/2} phi_qa)>_mu for a vector field F."""
        need = tuple(c + s + f for c, s, f in zip(self.cutoffs, self._scut, fcut))
        mom = moments.array(need)
        H = sp.convolve(mom, F_coeffs)  # (3,) + grid, cutoffs need + fcut
        hcut = tuple(n + f for n, f in zip(need, fcut))
        lam = self._factors(np.asarray(kappa, float), offset)
        q = int(np.prod(sp.grid_shape(self.cutoffs)))
        out = np.zeros(3 * q, dtype=complex)
        for x in range(4):
            RX = sp.revconj(self._X[x])  # (s, a, grid)
            V = sp.convolve(RX, H[:, None]).sum(axis=0)  # (a, grid)
            vcut = tuple(s + h for s, h in zip(self._scut, hcut))
            V = sp.truncate_coeffs(V, vcut, self.cutoffs)  # type: ignore[arg-type]
            out += lam[x] * V.reshape(-1)
        return out


def vector_rhs_plain(F_coeffs: np.ndarray, fcut: sp.Cutoffs,
                     moments: MomentProvider, cutoffs: sp.Cutoffs) -> np.ndarray:
    """b[(a,q)] = <F, e phi_qa>_mu = (mu * F_a)(q), flattened component-major."""
    cutoffs = sp.as_cutoffs(cutoffs)
    need = tuple(c + f for c, f in zip(cutoffs, fcut))
    mom = moments.array(need)
    conv = sp.convolve(mom, F_coeffs)
    tot = tuple(n + f for n, f in zip(need, fcut))
    return sp.truncate_coeffs(conv, tot, cutoffs).reshape(-1)


def pairing_rows(k_coeffs: np.ndarray, kcut: sp.Cutoffs,
                 moments: MomentProvider, cutoffs: sp.Cutoffs) -> np.ndarray:
    """Rows r_i with r_i . u_flat = <u, k_i>_mu for vector fields k_i.

    ``k_coeffs`` has shape (nk, 3) + grid(kcut); the result is (nk, 3Q).
    """
    cutoffs = sp.as_cutoffs(cutoffs)
    need = tuple(c + k for c, k in zip(cutoffs, kcut))
    mom = moments.array(need)
    rev_mom = mom[::-1, ::-1, ::-1]
    H = sp.convolve(k_coeffs.conj(), rev_mom[None, None])
    tot = tuple(n + k for n, k in zip(need, kcut))
    H = sp.truncate_coeffs(H, tot, cutoffs)  # (nk, 3) + grid
    return H.reshape(H.shape[0], -1)


def projector_term(rows: np.ndarray, gram: np.ndarray,
                   rel_tol: float = 1e-12) -> np.ndarray:
    """Matrix T with v^H T u = <P u, P v>_mu for the Gram-orthogonal
    projection P onto span{k_i}, given pairing rows and the k-Gram."""
    w, v = scipy.linalg.eigh(0.5 * (gram + gram.conj().T))
    scale = max(float(np.abs(w).max()), 1e-300)
    keep = w > rel_tol * scale
    if not np.any(keep):
        raise DegenerateSubspace("projection target space is numerically empty")
    vr = v[:, keep]
    half = (vr / np.sqrt(w[keep])).conj().T @ rows  # (r, 3Q)
    return half.conj().T @ half


# ---------------------------------------------------------------------------
# scalar gradient form and divergence constraints
# ---------------------------------------------------------------------------

class ScalarGradForm:
    """K[q,p] = <P grad(e phi_p), grad(e phi_q)>_mu with a matrix weight P.

    With S = i w the entry is sum_{cd} w_c(q) T_{cd}(q-p) w_d(p), where
    T = mu * P_hat.  Used with P = A^{-1} for potential problems.
    """

    def __init__(self, weight: np.ndarray, wcut: sp.Cutoffs,
                 moments: MomentProvider, cutoffs: sp.Cutoffs, period: int = 1):
        self.cutoffs = sp.as_cutoffs(cutoffs)
        self.period = period
        out_cut = tuple(2 * c for c in self.cutoffs)
        tab = weighted_table(moments, weight, wcut, out_cut)  # type: ignore[arg-type]
        gath = difference_gather(tab, self.cutoffs, self.cutoffs)  # (3,3,q,p)
        q = int(np.prod(sp.grid_shape(self.cutoffs)))
        self._gath = gath.reshape(3, 3, q, q)

    def matrix(self, kappa: np.ndarray, offset: tuple[int, int, int] = (0, 0, 0)) -> np.ndarray:
        w = _wvec(self.cutoffs, np.asarray(kappa, float), self.period, offset)
        wf = w.reshape(3, -1)
        return np.einsum("cq,cdqp,dp->qp", wf, self._gath, wf, optimize=True)

    def rhs(self, F_coeffs: np.ndarray, fcut: sp.Cutoffs, moments: MomentProvider,
            kappa: np.ndarray, offset: tuple[int, int, int] = (0, 0, 0)) -> np.ndarray:
        """b[q] = <F, grad(e phi_q)>_mu = -i sum_c w_c(q) (mu * F_c)(q)."""
        need = tuple(c + f for c, f in zip(self.cutoffs, fcut))
        mom = moments.array(need)
        conv = sp.convolve(mom, F_coeffs)
        tot = tuple(n + f for n, f in zip(need, fcut))
        V = sp.truncate_coeffs(conv, tot, self.cutoffs)  # (3,) + grid
        w = _wvec(self.cutoffs, np.asarray(kappa, float), self.period, offset)
        return (-1j * (w * V).sum(axis=0)).reshape(-1)


class DivConstraints:
    """Rows  c_r . u = <u, A^{-1/2} grad(e phi_r)>_mu  over scalar modes r.

    Entry: C[r, (b,p)] = -i sum_c w_c(r) U_{bc}(r - p), with the correlation
    table U_{bc}(k) = sum_u conj(invsqrt_{bc}(u)) mu_hat(k + u).
    """

    def __init__(self, invsqrt: np.ndarray, icut: sp.Cutoffs,
                 moments: MomentProvider, cutoffs: sp.Cutoffs, period: int = 1):
        self.cutoffs = sp.as_cutoffs(cutoffs)
        self.period = period
        out_cut = tuple(2 * c for c in self.cutoffs)
        need = tuple(o + i for o, i in zip(out_cut, icut))
        mom = moments.array(need)
        U = sp.convolve(sp.revconj(invsqrt), mom)  # (b, c, grid)
        tot = tuple(n + i for n, i in zip(need, icut))
        U = sp.truncate_coeffs(U, tot, out_cut)  # type: ignore[arg-type]
        gath = difference_gather(U, self.cutoffs, self.cutoffs)  # (b,c,r...,p...)
        q = int(np.prod(sp.grid_shape(self.cutoffs)))
        self._gath = gath.reshape(3, 3, q, q)

    def matrix(self, kappa: np.ndarray, offset: tuple[int, int, int] = (0, 0, 0),
               *, drop_zero_row: bool = True) -> np.ndarray:
        """(R, 3Q) constraint matrix; optionally drops the r = 0 mode row."""
        w = _wvec(self.cutoffs, np.asarray(kappa, float), self.period, offset)
        wf = w.reshape(3, -1)
        q = self._gath.shape[2]
        # C[r, b, p] = -i sum_c w_c(r) U_{bc}(r-p)
        C = -1j * np.einsum("cr,bcrp->rbp", wf, self._gath, optimize=True)
        C = C.reshape(q, 3 * q)
        if drop_zero_row and offset == (0, 0, 0):
            center = (np.arange(q) == _center_index(self.cutoffs))
            C = C[~center]
        return C


def _center_index(cutoffs: sp.Cutoffs) -> int:
    sh = sp.grid_shape(cutoffs)
    return int(np.ravel_multi_index(tuple(c for c in cutoffs), sh))


# ---------------------------------------------------------------------------
# class decomposition
# ---------------------------------------------------------------------------

def active_axes(measure: MeasureSpec, *bandwidths: sp.Cutoffs) -> tuple[int, ...]:
    """Axes along which frequencies couple (materials or measure moments)."""
    act = set(measure.active_axes)
    for bw in bandwidths:
        for ax in range(3):
            if bw[ax] > 0:
                act.add(ax)
    return tuple(sorted(act))


def class_cutoffs(cutoffs: sp.Cutoffs, active: tuple[int, ...]) -> sp.Cutoffs:
    return tuple(c if ax in active else 0 for ax, c in enumerate(cutoffs))  # type: ignore[return-value]


def class_offsets(cutoffs: sp.Cutoffs, active: tuple[int, ...]) -> list[tuple[int, int, int]]:
    """Enumerate class offsets over the frozen (inactive) axes."""
    ranges = [range(-c, c + 1) if ax not in active else range(0, 1)
              for ax, c in enumerate(cutoffs)]
    return [(i, j, k) for i in ranges[0] for j in ranges[1] for k in ranges[2]]


def scatter_class(full: np.ndarray, cutoffs: sp.Cutoffs, sub: np.ndarray,
                  subcut: sp.Cutoffs, offset: tuple[int, int, int]) -> None:
    """Write a class sub-cube into the full coefficient cube (in place)."""
    sl = tuple(slice(c + o - s, c + o + s + 1)
               for c, o, s in zip(cutoffs, offset, subcut))
    full[(Ellipsis,) + sl] = sub


def gather_class(full: np.ndarray, cutoffs: sp.Cutoffs, subcut: sp.Cutoffs,
                 offset: tuple[int, int, int]) -> np.ndarray:
    """Read a class sub-cube out of the full coefficient cube."""
    sl = tuple(slice(c + o - s, c + o + s + 1)
               for c, o, s in zip(cutoffs, offset, subcut))
    return full[(Ellipsis,) + sl]


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

@dataclass
class QuotientBasis:
    """Retained eigenspace of a semidefinite Gram: columns of V span it."""

    V: np.ndarray
    eigenvalues: np.ndarray
    dropped: int

    @property
    def rank(self) -> int:
        return self.V.shape[1]


def quotient_basis(G: np.ndarray, rel_tol: float = 1e-10) -> QuotientBasis:
    """Eigen-split a Hermitian PSD Gram into retained space / null space."""
    w, v = scipy.linalg.eigh(G)
    scale = max(float(w[-1]), 0.0)
    if scale <= 0.0:
        raise DegenerateSubspace("Gram matrix is identically zero")
    keep = w > rel_tol * scale
    if not np.any(keep):
        raise DegenerateSubspace("no retained Gram eigenspace")
    return QuotientBasis(V=v[:, keep], eigenvalues=w[keep], dropped=int((~keep).sum()))


def hermitian_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Definite Hermitian solve; raises SingularSystem when factorization fails."""
    try:
        c, low = scipy.linalg.cho_factor(M, check_finite=False)
        return scipy.linalg.cho_solve((c, low), rhs, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystem(f"Cholesky failed: {exc}") from exc


class ToeplitzKernel:
    """FFT application of a centered difference kernel to coefficient cubes.

    ``table`` holds T(k) on a centered cube (leading component axes allowed);
    ``apply-style`` use goes through :meth:`fft` / :meth:`ifft_center`, which
    share one zero-padded transform size so the kernel spectrum is computed
    once.  The central-block extraction keeps exactly the modes of a cube
    with the given cutoffs, so  ifft_center(table_f * fft(y))  equals the
    dense  gather(T)[q, p] y[p]  product without ever forming the (Q, Q)
    matrix.
    """

    def __init__(self, table: np.ndarray, cutoffs: sp.Cutoffs):
        self.cutoffs = sp.as_cutoffs(cutoffs)
        gs = sp.grid_shape(self.cutoffs)
        tsh = table.shape[-3:]
        full = tuple(t + g - 1 for t, g in zip(tsh, gs))
        self.fshape = tuple(scipy.fft.next_fast_len(n) for n in full)
        self.table_f = scipy.fft.fftn(table, s=self.fshape, axes=(-3, -2, -1))
        self._lo = tuple((t - 1) // 2 for t in tsh)
        self._gs = gs

    def fft(self, y: np.ndarray) -> np.ndarray:
        return scipy.fft.fftn(y, s=self.fshape, axes=(-3, -2, -1))

    def ifft_center(self, zf: np.ndarray) -> np.ndarray:
        out = scipy.fft.ifftn(zf, axes=(-3, -2, -1))
        sl = tuple(slice(lo, lo + g) for lo, g in zip(self._lo, self._gs))
        return out[(Ellipsis,) + sl]


def pcg_solve(apply_A, B: np.ndarray, apply_M, *, rel_tol: float = 1e-12,
              maxit: int = 600) -> tuple[np.ndarray, int]:
    """Batched preconditioned conjugate gradients for Hermitian PD systems.

    ``B`` is (n, k): the columns share the operator and are iterated
    together.  Returns (X, iterations); raises SolverDiverged when the worst
    column misses rel_tol * ||b|| within maxit.
    """
    bn = np.linalg.norm(B, axis=0)
    scale = np.where(bn > 0, bn, 1.0)
    X = np.zeros_like(B)
    R = B.astype(complex, copy=True)
    Z = apply_M(R)
    P = Z.copy()
    rz = np.einsum("nk,nk->k", R.conj(), Z)
    worst = 1.0
    for it in range(maxit):
        worst = float((np.linalg.norm(R, axis=0) / scale).max())
        if worst <= rel_tol:
            return X, it
        Q = apply_A(P)
        pq = np.einsum("nk,nk->k", P.conj(), Q)
        safe_pq = np.where(pq == 0, 1.0, pq)
        alpha = np.where(pq == 0, 0.0, rz / safe_pq)
        X += alpha * P
        R -= alpha * Q
        Z = apply_M(R)
        rz_new = np.einsum("nk,nk->k", R.conj(), Z)
        safe_rz = np.where(rz == 0, 1.0, rz)
        beta = np.where(rz == 0, 0.0, rz_new / safe_rz)
        rz = rz_new
        P = Z + beta * P
    raise SolverDiverged(
        f"pcg stalled at relative residual {worst:.3e} after {maxit} iterations")


def fast_psd_solve(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """psd_solve with a Cholesky first attempt.

    Definite systems (the common case) skip the eigendecomposition entirely;
    a failed factorization or a bad residual falls back to the pseudo-solve.
    """
    try:
        c = scipy.linalg.cho_factor(M, check_finite=False)
    except scipy.linalg.LinAlgError:
        return psd_solve(M, rhs)
    piv = np.abs(np.diagonal(c[0]))
    # a tiny pivot means the factorization slipped past a (near-)singular
    # direction; solutions then carry huge null components whose residual
    # still looks fine when the rhs is consistent, so gate on the pivots
    if piv.size and float(piv.min()) <= 1e-7 * float(piv.max()):
        return psd_solve(M, rhs)
    xs = scipy.linalg.cho_solve(c, rhs, check_finite=False)
    res = float(np.linalg.norm(M @ xs - rhs))
    if res > 1e-10 * max(float(np.linalg.norm(rhs)), 1e-300):
        return psd_solve(M, rhs)
    return xs


def psd_solve(M: np.ndarray, rhs: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """Pseudo-solve of a Hermitian PSD system on its retained eigenspace."""
    w, v = scipy.linalg.eigh(M)
    scale = max(float(np.abs(w).max()), 0.0)
    if scale == 0.0:
        raise SingularSystem("system matrix is zero")
    keep = w > rel_tol * scale
    if not np.any(keep):
        raise SingularSystem("no retained eigenvalues in pseudo-solve")
    vr = v[:, keep]
    return vr @ ((vr.conj().T @ rhs).T / w[keep]).T


def saddle_solve(M: np.ndarray, C: np.ndarray | None, rhs: np.ndarray,
                 g: np.ndarray | None = None, *, definite: bool = True,
                 feas_tol: float = 1e-8) -> np.ndarray:
    """Solve M x = rhs subject to C x = g (Hermitian M, PD on ker C).

    ``definite=True`` uses the Schur-complement route (requires M PD);
    otherwise a null-space method handles semidefinite M.  Dependent
    constraint rows are tolerated (pseudo-inverse of the Schur complement).
    """
    if C is None or C.shape[0] == 0:
        return hermitian_solve(M, rhs) if definite else psd_solve(M, rhs)
    rhs1 = np.atleast_2d(rhs.T).T  # (n, k)
    if definite:
        cf = scipy.linalg.cho_factor(M, check_finite=False)
        X0 = scipy.linalg.cho_solve(cf, rhs1, check_finite=False)
        Y = scipy.linalg.cho_solve(cf, C.conj().T, check_finite=False)
        S = C @ Y
        target = C @ X0 - (0 if g is None else np.atleast_2d(g.T).T)
        lam = psd_solve(0.5 * (S + S.conj().T), target)
        X = X0 - Y @ lam
    else:
        Z = scipy.linalg.null_space(C)
        if Z.shape[1] == 0:
            raise DegenerateSubspace("constraints remove every degree of freedom")
        if g is not None and np.linalg.norm(g) > 0:
            x0, *_ = np.linalg.lstsq(C, np.atleast_2d(g.T).T, rcond=None)
        else:
            x0 = np.zeros((M.shape[0], rhs1.shape[1]), dtype=complex)
        red = Z.conj().T @ M @ Z
        rr = Z.conj().T @ (rhs1 - M @ x0)
        X = x0 + Z @ psd_solve(0.5 * (red + red.conj().T), rr)
    resid = C @ X - (0 if g is None else np.atleast_2d(g.T).T)
    gn = 0.0 if g is None else float(np.linalg.norm(g))
    scale = max(gn, np.linalg.norm(C) * np.linalg.norm(X), 1e-30)
    if np.linalg.norm(resid) > feas_tol * scale:
        raise ConstraintInfeasible(
            f"constraint residual {np.linalg.norm(resid):.3e} after saddle solve")
    return X.reshape(rhs.shape)
