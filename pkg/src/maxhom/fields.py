"""Quasiperiodic trigonometric fields and material coefficients.

A ``QuasiField`` stores the band-limited amplitude u of a quasiperiodic
function e^{i kappa . y} u(y), u(y) = sum_m u_hat(m) exp(2 pi i m . y / period),
on a centered frequency cube.  Differential operators act through the
shifted symbol S(m) = i(2 pi m / period + kappa):

    grad -> S u_hat,   curl -> S x u_hat,   div -> S . u_hat,

so curl(grad) vanishes identically at the level of coefficients.

A ``MaterialField`` is a 1-periodic, Hermitian, uniformly positive definite
3x3 coefficient; products with fields are exact convolutions.  Materials come
with a coherent square-root family: the square root and inverse square root
are fitted once by collocation to a tight tail tolerance, and the family then
*defines* A := sqrt * sqrt and A^{-1} := invsqrt * invsqrt, so that algebraic
identities used by the solvers (for example A^{1/2} A^{-1/2} = Id up to the
fit tail) hold to near machine precision instead of inheriting an O(fit)
error in random places.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import spectral as sp
from .errors import NotPositiveDefinite, PropertyViolation, RankMismatch
from .measure import MeasureSpec, MomentTable, moment_array

__all__ = [
    "QuasiField",
    "MaterialField",
    "MaterialFamily",
    "GramOperator",
    "apply_shifted_operator",
    "grad",
    "curl",
    "div",
    "multiply_material",
    "material_convolve",
    "inner_product",
    "mean_value",
    "norm_mu",
    "square_root_material",
    "build_family",
]

_RANK_NDIM = {"scalar": 3, "vector": 4, "matrix": 5}


# ---------------------------------------------------------------------------
# field type
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QuasiField:
    """Band-limited amplitude of a quasiperiodic field.

    coeffs shape: scalar (n1,n2,n3), vector (3,n1,n2,n3), matrix (3,3,n1,n2,n3)
    with n_j = 2*cutoffs[j] + 1.  ``period`` is the integer cell period (1 for
    the unit cell, M for an M-supercell).
    """

    kappa: np.ndarray
    cutoffs: sp.Cutoffs
    coeffs: np.ndarray = field(repr=False)
    period: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kappa", np.asarray(self.kappa, dtype=float))
        object.__setattr__(self, "cutoffs", sp.as_cutoffs(self.cutoffs))
        if self.kappa.shape != (3,):
            raise RankMismatch(f"kappa must be a 3-vector, got {self.kappa.shape}")
        if self.coeffs.shape[-3:] != sp.grid_shape(self.cutoffs):
            raise RankMismatch(
                f"coeff grid {self.coeffs.shape[-3:]} does not match cutoffs {self.cutoffs}")
        if self.rank == "vector" and self.coeffs.shape[0] != 3:
            raise RankMismatch("vector field needs a leading component axis of size 3")
        if self.rank == "matrix" and self.coeffs.shape[:2] != (3, 3):
            raise RankMismatch("matrix field needs leading axes (3, 3)")

    @property
    def rank(self) -> str:
        nd = self.coeffs.ndim
        for r, n in _RANK_NDIM.items():
            if nd == n:
                return r
        raise RankMismatch(f"coefficients with ndim {nd} have no field rank")

    @property
    def cutoff(self) -> int:
        return max(self.cutoffs)

    def symbol(self) -> np.ndarray:
        return sp.symbol_grid(self.cutoffs, self.kappa, period=self.period)

    def coeff(self, m: tuple[int, int, int]) -> np.ndarray | complex:
        idx = tuple(mi + c for mi, c in zip(m, self.cutoffs))
        v = self.coeffs[(Ellipsis,) + idx]
        return complex(v) if np.isscalar(v) or v.ndim == 0 else np.array(v)

    def pad_to(self, cutoffs) -> "QuasiField":
        cutoffs = sp.as_cutoffs(cutoffs)
        return replace(self, cutoffs=cutoffs,
                       coeffs=sp.pad_coeffs(self.coeffs, self.cutoffs, cutoffs))

    def truncate_to(self, cutoffs) -> "QuasiField":
        cutoffs = sp.as_cutoffs(cutoffs)
        return replace(self, cutoffs=cutoffs,
                       coeffs=sp.truncate_coeffs(self.coeffs, self.cutoffs, cutoffs))

    def _aligned(self, other: "QuasiField") -> tuple[np.ndarray, np.ndarray, sp.Cutoffs]:
        if not np.allclose(self.kappa, other.kappa, atol=1e-14):
            raise PropertyViolation("cannot combine fields with different kappa")
        if self.period != other.period:
            raise PropertyViolation("cannot combine fields with different periods")
        cut = tuple(max(a, b) for a, b in zip(self.cutoffs, other.cutoffs))
        a = sp.pad_coeffs(self.coeffs, self.cutoffs, cut)
        b = sp.pad_coeffs(other.coeffs, other.cutoffs, cut)
        return a, b, cut  # type: ignore[return-value]

    def __add__(self, other: "QuasiField") -> "QuasiField":
        a, b, cut = self._aligned(other)
        return replace(self, cutoffs=cut, coeffs=a + b)

    def __sub__(self, other: "QuasiField") -> "QuasiField":
        a, b, cut = self._aligned(other)
        return replace(self, cutoffs=cut, coeffs=a - b)

    def __mul__(self, scalar) -> "QuasiField":
        return replace(self, coeffs=self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "QuasiField":
        return replace(self, coeffs=-self.coeffs)

    @staticmethod
    def zeros(rank: str, kappa, cutoffs, period: int = 1) -> "QuasiField":
        cutoffs = sp.as_cutoffs(cutoffs)
        lead = {"scalar": (), "vector": (3,), "matrix": (3, 3)}[rank]
        return QuasiField(kappa=np.asarray(kappa, float), cutoffs=cutoffs,
                          coeffs=np.zeros(lead + sp.grid_shape(cutoffs), complex),
                          period=period)

    @staticmethod
    def constant(value, kappa, cutoffs, period: int = 1) -> "QuasiField":
        value = np.asarray(value, dtype=complex)
        rank = {0: "scalar", 1: "vector", 2: "matrix"}[value.ndim]
        out = QuasiField.zeros(rank, kappa, cutoffs, period)
        c = out.cutoffs
        out.coeffs[(Ellipsis, c[0], c[1], c[2])] = value
        return out


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

def apply_shifted_operator(fld: QuasiField, op: str) -> QuasiField:
    """Apply a kappa-shifted differential operator through its symbol.

    op in {'grad', 'curl', 'div'}: grad maps scalars to vectors, curl maps
    vectors to vectors and div maps vectors to scalars.  The result lives on
    the same frequency cube (symbols do not widen the band).
    """
    s = fld.symbol()
    if op == "grad":
        if fld.rank != "scalar":
            raise RankMismatch("grad expects a scalar field")
        return replace(fld, coeffs=s * fld.coeffs[None])
    if op == "curl":
        if fld.rank != "vector":
            raise RankMismatch("curl expects a vector field")
        out = np.empty_like(fld.coeffs)
        out[0] = s[1] * fld.coeffs[2] - s[2] * fld.coeffs[1]
        out[1] = s[2] * fld.coeffs[0] - s[0] * fld.coeffs[2]
        out[2] = s[0] * fld.coeffs[1] - s[1] * fld.coeffs[0]
        return replace(fld, coeffs=out)
    if op == "div":
        if fld.rank != "vector":
            raise RankMismatch("div expects a vector field")
        return replace(fld, coeffs=(s * fld.coeffs).sum(axis=0))
    raise ValueError(f"unknown operator {op!r}")


def grad(fld: QuasiField) -> QuasiField:
    return apply_shifted_operator(fld, "grad")


def curl(fld: QuasiField) -> QuasiField:
    return apply_shifted_operator(fld, "curl")


def div(fld: QuasiField) -> QuasiField:
    return apply_shifted_operator(fld, "div")


# ---------------------------------------------------------------------------
# materials
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MaterialField:
    """Periodic Hermitian 3x3 coefficient as a trigonometric polynomial.

    coeffs has shape (3, 3, n1, n2, n3).  Entries are Fourier coefficients of
    the cell-periodic matrix function; Hermitian pointwise values correspond
    to coeffs[a, b, m] == conj(coeffs[b, a, -m]), which is validated on
    construction.
    """

    cutoffs: sp.Cutoffs
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "cutoffs", sp.as_cutoffs(self.cutoffs))
        if self.coeffs.shape != (3, 3) + sp.grid_shape(self.cutoffs):
            raise RankMismatch(
                f"material coeffs shape {self.coeffs.shape} does not match cutoffs {self.cutoffs}")
        herm = np.transpose(sp.revconj(self.coeffs), (1, 0, 2, 3, 4))
        scale = max(1.0, float(np.abs(self.coeffs).max()))
        if np.abs(self.coeffs - herm).max() > 1e-12 * scale:
            raise NotPositiveDefinite("material is not Hermitian-valued")

    @property
    def bandwidth(self) -> sp.Cutoffs:
        return self.cutoffs

    @property
    def active_axes(self) -> tuple[int, ...]:
        return tuple(ax for ax in range(3) if self.cutoffs[ax] > 0)

    @property
    def scalar_flag(self) -> bool:
        """True when the coefficient is a scalar function times the identity."""
        off = np.abs(self.coeffs).max() * 1e-14
        for a in range(3):
            for b in range(3):
                if a != b and np.abs(self.coeffs[a, b]).max() > off:
                    return False
        d = self.coeffs[0, 0]
        return (np.abs(self.coeffs[1, 1] - d).max() <= off
                and np.abs(self.coeffs[2, 2] - d).max() <= off)

    def ellipticity_bounds(self, n: int = 0) -> tuple[float, float]:
        """(nu, M): extreme eigenvalues over a sampling grid (spot check)."""
        npts = tuple(max(n, 4 * c + 1) if c else 1 for c in self.cutoffs)
        vals = self.on_grid(npts)
        vals = 0.5 * (vals + np.conj(np.swapaxes(vals, -1, -2)))
        w = np.linalg.eigvalsh(vals)
        return float(w.min()), float(w.max())

    @property
    def is_identity(self) -> bool:
        return (self.cutoffs == (0, 0, 0)
                and np.allclose(self.coeffs[:, :, 0, 0, 0], np.eye(3), atol=1e-15))

    @staticmethod
    def identity() -> "MaterialField":
        return MaterialField(cutoffs=(0, 0, 0),
                             coeffs=np.eye(3, dtype=complex).reshape(3, 3, 1, 1, 1))

    @staticmethod
    def constant(mat: np.ndarray) -> "MaterialField":
        mat = np.asarray(mat, dtype=complex)
        return MaterialField(cutoffs=(0, 0, 0), coeffs=mat.reshape(3, 3, 1, 1, 1))

    @staticmethod
    def from_scalar(coeffs: np.ndarray, cutoffs) -> "MaterialField":
        """Scalar trig polynomial a(y) times the identity matrix."""
        cutoffs = sp.as_cutoffs(cutoffs)
        coeffs = np.asarray(coeffs, dtype=complex)
        out = np.zeros((3, 3) + sp.grid_shape(cutoffs), dtype=complex)
        for a in range(3):
            out[a, a] = coeffs
        return MaterialField(cutoffs=cutoffs, coeffs=out)

    def on_grid(self, npts: tuple[int, int, int]) -> np.ndarray:
        """Pointwise values on a uniform grid, shape npts + (3, 3)."""
        return _values_on_grid(self.coeffs, self.cutoffs, npts)

    def mean(self) -> np.ndarray:
        """Lebesgue average of the coefficient (the m = 0 Fourier entry)."""
        c = self.cutoffs
        return np.array(self.coeffs[:, :, c[0], c[1], c[2]])

    def stride_embed(self, period: int) -> "MaterialField":
        """Re-index unit-cell coefficients as supercell coefficients.

        The function a(y) on an M-supercell has coefficients only at
        frequencies divisible by M; entry n = M*m holds the unit-cell entry m.
        """
        if period == 1:
            return self
        cut = tuple(c * period for c in self.cutoffs)
        out = np.zeros((3, 3) + sp.grid_shape(cut), dtype=complex)
        sl = tuple(slice(None, None, period) for _ in range(3))
        out[(Ellipsis,) + sl] = self.coeffs
        return MaterialField(cutoffs=cut, coeffs=out)


def _values_on_grid(coeffs: np.ndarray, cutoffs: sp.Cutoffs,
                    npts: tuple[int, int, int]) -> np.ndarray:
    """Evaluate a centered coefficient cube at y_l = l / npts (per axis).

    Returns values with the grid axes first and any leading component axes
    moved to the end, e.g. (3,3)+grid coefficients give grid+(3,3) values.
    """
    for n, c in zip(npts, cutoffs):
        if n < 2 * c + 1:
            raise PropertyViolation(f"grid {npts} under-resolves bandwidth {cutoffs}")
    lead = coeffs.shape[:-3]
    spec = np.zeros(lead + tuple(npts), dtype=complex)
    i1 = np.arange(-cutoffs[0], cutoffs[0] + 1) % npts[0]
    i2 = np.arange(-cutoffs[1], cutoffs[1] + 1) % npts[1]
    i3 = np.arange(-cutoffs[2], cutoffs[2] + 1) % npts[2]
    spec[(Ellipsis, i1[:, None, None], i2[None, :, None], i3[None, None, :])] = coeffs
    vals = np.fft.ifftn(spec, axes=(-3, -2, -1)) * np.prod(npts)
    if lead:
        vals = np.moveaxis(vals, tuple(range(len(lead))),
                           tuple(range(-len(lead), 0)))
    return vals


def multiply_material(mat: MaterialField, fld: QuasiField, *,
                      extend: bool = False) -> QuasiField:
    """Pointwise product (matrix times field) as an exact convolution.

    By default the result is truncated back to the input field's cube, which
    is the band-projected product used at public interfaces.  ``extend=True``
    keeps the full convolution (cutoffs add); the solvers use the extended
    form internally so that chained identities stay exact.
    """
    if mat.is_identity and fld.rank in ("vector", "matrix"):
        return fld
    if fld.rank == "vector":
        prod = sp.convolve(mat.coeffs, fld.coeffs[None])  # (3,3) conv (1,3) -> (3,3)
        out = prod.sum(axis=1)
    elif fld.rank == "matrix":
        prod = sp.convolve(mat.coeffs[:, :, None], fld.coeffs[None])
        out = prod.sum(axis=1)
    else:
        raise RankMismatch("materials multiply vector or matrix fields")
    cut = tuple(a + b for a, b in zip(mat.cutoffs, fld.cutoffs))
    res = QuasiField(kappa=fld.kappa, cutoffs=cut, coeffs=out, period=fld.period)
    return res if extend else res.truncate_to(fld.cutoffs)


def material_convolve(left: MaterialField, right: MaterialField) -> MaterialField:
    """Exact product of two materials (matrix-matrix convolution)."""
    prod = sp.convolve(left.coeffs[:, :, None], right.coeffs[None]).sum(axis=1)
    cut = tuple(a + b for a, b in zip(left.cutoffs, right.cutoffs))
    return MaterialField(cutoffs=cut, coeffs=prod)


# ---------------------------------------------------------------------------
# inner products and means
# ---------------------------------------------------------------------------

def _moments_for(measure: MeasureSpec, cutoffs: sp.Cutoffs, period: int) -> np.ndarray:
    return moment_array(measure, cutoffs, period=period)


def inner_product(u: QuasiField, v: QuasiField,
                  mu: "MeasureSpec | MomentTable | np.ndarray") -> complex:
    """<u, v>_mu = integral of u . conj(v) dmu, exact through moments.

    ``mu`` may be a measure spec (moments are computed as needed), a
    precomputed MomentTable, or a raw centered moment array.  A table that
    does not cover the frequency differences raises CutoffTooSmall.
    """
    if u.rank != v.rank:
        raise RankMismatch(f"rank mismatch: {u.rank} vs {v.rank}")
    if u.period != v.period:
        raise PropertyViolation("fields live on different cells")
    if not np.allclose(u.kappa, v.kappa, atol=1e-14):
        raise PropertyViolation("fields have different Bloch shifts")
    if isinstance(mu, MeasureSpec):
        cut = tuple(a + b for a, b in zip(u.cutoffs, v.cutoffs))
        mom = _moments_for(mu, cut, u.period)  # type: ignore[arg-type]
    elif isinstance(mu, MomentTable):
        mom = mu.entries
    else:
        mom = np.asarray(mu)
    return sp.pair_coeffs(u.coeffs, v.coeffs, mom)


def mean_value(fld: QuasiField, measure: MeasureSpec) -> np.ndarray | complex:
    """integral of u dmu (componentwise for vector/matrix fields)."""
    mom = _moments_for(measure, fld.cutoffs, fld.period)
    out = sp.moment_contract(fld.coeffs, mom)
    return complex(out) if np.ndim(out) == 0 else out


def norm_mu(fld: QuasiField, measure: MeasureSpec) -> float:
    val = inner_product(fld, fld, measure)
    return float(np.sqrt(max(val.real, 0.0)))


# ---------------------------------------------------------------------------
# square-root family
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MaterialFamily:
    """A material together with its coherent square-root algebra.

    ``A`` is *defined* as sqrt * sqrt and ``invA`` as invsqrt * invsqrt, so
    the family is internally consistent by construction; ``nominal`` keeps
    the coefficient the family was fitted from (it agrees with A up to the
    fit tolerance).
    """

    nominal: MaterialField
    sqrt: MaterialField
    invsqrt: MaterialField
    A: MaterialField
    invA: MaterialField
    fit_residual: float

    @property
    def is_identity(self) -> bool:
        return self.nominal.is_identity


def _fit_sqrt(mat: MaterialField, grow: tuple[int, ...] = (8, 16, 24, 32, 48, 64),
              tail_tol: float = 1e-13) -> tuple[MaterialField, MaterialField, float]:
    """Collocation fit of matrix sqrt and inverse sqrt, grown until the
    outermost coefficient shell is negligible."""
    active = mat.active_axes
    if not active:
        vals = mat.coeffs[:, :, 0, 0, 0]
        vals = 0.5 * (vals + vals.conj().T)
        w, v = np.linalg.eigh(vals)
        if w.min() <= 0:
            raise NotPositiveDefinite(f"constant material has eigenvalue {w.min():.3e}")
        s = (v * np.sqrt(w)) @ v.conj().T
        si = (v / np.sqrt(w)) @ v.conj().T
        return (MaterialField.constant(s), MaterialField.constant(si), 0.0)

    last_err = np.inf
    for K in grow:
        cut = tuple(K if ax in active else 0 for ax in range(3))
        npts = tuple(4 * c + 1 for c in cut)  # oversampled to keep aliasing below the tail
        vals = _values_on_grid(mat.coeffs, mat.cutoffs, npts)  # npts + (3,3)
        vals = 0.5 * (vals + np.conj(np.swapaxes(vals, -1, -2)))
        w, v = np.linalg.eigh(vals)
        if w.min() <= 0:
            raise NotPositiveDefinite(
                f"material has eigenvalue {w.min():.3e} <= 0 on the sample grid")
        sq = np.einsum("...ab,...b,...cb->...ac", v, np.sqrt(w), v.conj())
        isq = np.einsum("...ab,...b,...cb->...ac", v, 1.0 / np.sqrt(w), v.conj())
        sq_c = _fit_coeffs(sq, cut, npts)
        isq_c = _fit_coeffs(isq, cut, npts)
        err = max(_shell_tail(sq_c, cut, active), _shell_tail(isq_c, cut, active))
        last_err = err
        if err < tail_tol:
            sqm = MaterialField(cutoffs=cut, coeffs=_hermitize(sq_c))
            isqm = MaterialField(cutoffs=cut, coeffs=_hermitize(isq_c))
            return _trim(sqm), _trim(isqm), float(err)
    raise PropertyViolation(
        f"square-root fit did not reach tail {tail_tol:g} (last shell {last_err:.3e}); "
        "material is too rough for the coherent family")


def _fit_coeffs(vals: np.ndarray, cut: sp.Cutoffs, npts: tuple[int, ...]) -> np.ndarray:
    """Forward DFT of grid samples, recentered and truncated to ``cut``."""
    vals = np.moveaxis(vals, (-2, -1), (0, 1))  # (3,3) + grid
    spec = np.fft.fftn(vals, axes=(-3, -2, -1)) / np.prod(npts)
    out = np.empty((3, 3) + sp.grid_shape(cut), dtype=complex)
    idx = [np.arange(-c, c + 1) % n for c, n in zip(cut, npts)]
    out[:] = spec[:, :, idx[0][:, None, None], idx[1][None, :, None], idx[2][None, None, :]]
    return out

def _shell_tail(coeffs: np.ndarray, cut: sp.Cutoffs, active: tuple[int, ...]) -> float:
    scale = float(np.abs(coeffs).max())
    if scale == 0.0:
        return 0.0
    worst = 0.0
    for ax in active:
        sl = [slice(None)] * 3
        for edge in (0, -1):
            sl[ax] = edge
            worst = max(worst, float(np.abs(coeffs[(Ellipsis,) + tuple(sl)]).max()))
    return worst / scale


def _hermitize(coeffs: np.ndarray) -> np.ndarray:
    herm = np.transpose(sp.revconj(coeffs), (1, 0, 2, 3, 4))
    return 0.5 * (coeffs + herm)


def _trim(mat: MaterialField, drop_tol: float = 1e-14) -> MaterialField:
    """Shrink the cube to the smallest band holding all non-negligible entries."""
    scale = float(np.abs(mat.coeffs).max())
    cut = list(mat.cutoffs)
    coeffs = mat.coeffs
    for ax in range(3):
        while cut[ax] > 0:
            sl = [slice(None)] * 3
            keep = True
            for edge in (0, -1):
                sl[ax] = edge
                if np.abs(coeffs[(Ellipsis,) + tuple(sl)]).max() > drop_tol * scale:
                    keep = False
                    break
            if keep:
                newcut = list(cut)
                newcut[ax] -= 1
                coeffs = sp.truncate_coeffs(coeffs, tuple(cut), tuple(newcut))  # type: ignore[arg-type]
                cut = newcut
            else:
                break
    return MaterialField(cutoffs=tuple(cut), coeffs=coeffs)  # type: ignore[arg-type]


def square_root_material(mat: MaterialField) -> MaterialField:
    """Pointwise positive square root of a material, as a band-limited fit."""
    sqrt, _, _ = _fit_sqrt(mat)
    return sqrt


def build_family(mat: MaterialField) -> MaterialFamily:
    """Fit the square-root pair and close the family algebraically."""
    if mat.is_identity:
        ident = MaterialField.identity()
        return MaterialFamily(nominal=mat, sqrt=ident, invsqrt=ident,
                              A=ident, invA=ident, fit_residual=0.0)
    sqrt, invsqrt, err = _fit_sqrt(mat)
    A = _trim(material_convolve(sqrt, sqrt))
    invA = _trim(material_convolve(invsqrt, invsqrt))
    return MaterialFamily(nominal=mat, sqrt=sqrt, invsqrt=invsqrt,
                          A=A, invA=invA, fit_residual=err)


# ---------------------------------------------------------------------------
# Gram operator
# ---------------------------------------------------------------------------

class GramOperator:
    """Dense Gram of the scalar Fourier basis in L2(Q, dmu) on one cube.

    For singular measures the matrix is rank deficient: coefficient vectors
    agreeing mu-almost-everywhere are identified.  Eigenvalues at or below
    threshold * lambda_max count as null directions; solves downstream pose
    themselves on the retained eigenspace.
    """

    def __init__(self, measure: MeasureSpec, cutoffs, period: int = 1,
                 threshold: float = 1e-10):
        from .galerkin import MomentProvider, gram_matrix
        self.cutoffs = sp.as_cutoffs(cutoffs)
        self.period = period
        self.threshold = threshold
        self.matrix = gram_matrix(MomentProvider(measure, period), self.cutoffs)
        w, v = np.linalg.eigh(self.matrix)
        self.eigenvalues = w
        self.eigenvectors = v
        keep = w > threshold * max(w.max(), 0.0)
        if not np.any(keep):
            raise PropertyViolation("Gram operator has no retained eigenspace")
        self._keep = keep

    @property
    def rank_retained(self) -> int:
        return int(self._keep.sum())

    @property
    def retained_basis(self) -> np.ndarray:
        return self.eigenvectors[:, self._keep]

    def project(self, flat: np.ndarray) -> np.ndarray:
        """Orthogonal projection (coefficient 2-norm) onto the retained space."""
        V = self.retained_basis
        return V @ (V.conj().T @ flat)
