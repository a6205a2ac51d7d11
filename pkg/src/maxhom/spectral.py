"""Truncated Fourier algebra on the torus: grids, symbols, convolutions.

Every field in the package is a finite trigonometric polynomial stored on a
centered frequency cube prod_j [-c_j, c_j] in C order, optionally with
leading component axes (3 for vectors, 3x3 for matrices).  The scalar basis
function for frequency m is exp(2 pi i m . y / period), shifted by a Bloch
phase exp(i kappa . y) where relevant; differential operators then act as
multiplication by the symbol

    S(m) = i (2 pi (m + offset) / period + kappa),

where ``offset`` shifts the whole cube by an integer frequency vector (used
when a problem is decomposed into classes over frozen axes).

Products of trigonometric polynomials are exact linear convolutions: the
cutoffs add and no coefficient is ever discarded silently.  Truncation back
to a smaller cube is always an explicit call.
"""

from __future__ import annotations

import numpy as np
import scipy.fft

from .errors import CutoffTooSmall, RankMismatch

Cutoffs = tuple[int, int, int]

__all__ = [
    "as_cutoffs",
    "grid_shape",
    "freqs",
    "freq_grids",
    "symbol_grid",
    "pad_coeffs",
    "truncate_coeffs",
    "convolve",
    "revconj",
    "moment_slice",
    "moment_contract",
    "pair_coeffs",
    "cross_matrix",
]


def as_cutoffs(c: int | tuple[int, int, int]) -> Cutoffs:
    """Accept a scalar cutoff or a per-axis triple; return the triple."""
    if isinstance(c, (int, np.integer)):
        if c < 0:
            raise CutoffTooSmall(f"cutoff {c} is negative")
        return (int(c), int(c), int(c))
    t = tuple(int(x) for x in c)
    if len(t) != 3 or any(x < 0 for x in t):
        raise CutoffTooSmall(f"bad cutoffs {c!r}")
    return t  # type: ignore[return-value]


def grid_shape(cutoffs: Cutoffs) -> tuple[int, int, int]:
    return tuple(2 * c + 1 for c in cutoffs)  # type: ignore[return-value]


def freqs(c: int) -> np.ndarray:
    return np.arange(-c, c + 1)


def freq_grids(cutoffs: Cutoffs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integer frequency meshes of shape grid_shape(cutoffs)."""
    return tuple(np.meshgrid(*(freqs(c) for c in cutoffs), indexing="ij"))  # type: ignore[return-value]


def symbol_grid(cutoffs: Cutoffs, kappa: np.ndarray, *, period: int = 1,
                offset: tuple[int, int, int] = (0, 0, 0)) -> np.ndarray:
    """Symbol S(m) = i(2 pi (m + offset)/period + kappa), shape (3,) + grid."""
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (3,):
        raise RankMismatch(f"kappa must be a 3-vector, got shape {kappa.shape}")
    m1, m2, m3 = freq_grids(cutoffs)
    out = np.empty((3,) + m1.shape, dtype=complex)
    for a, m in enumerate((m1, m2, m3)):
        out[a] = 1j * (2.0 * np.pi * (m + offset[a]) / period + kappa[a])
    return out


def pad_coeffs(arr: np.ndarray, cutoffs: Cutoffs, new_cutoffs: Cutoffs) -> np.ndarray:
    """Zero-embed a centered coefficient cube into a larger one."""
    if any(n < c for n, c in zip(new_cutoffs, cutoffs)):
        raise CutoffTooSmall(f"cannot pad {cutoffs} into smaller {new_cutoffs}")
    lead = arr.shape[:-3]
    out = np.zeros(lead + grid_shape(new_cutoffs), dtype=arr.dtype)
    sl = tuple(slice(n - c, n + c + 1) for n, c in zip(new_cutoffs, cutoffs))
    out[(Ellipsis,) + sl] = arr
    return out


def truncate_coeffs(arr: np.ndarray, cutoffs: Cutoffs, new_cutoffs: Cutoffs) -> np.ndarray:
    """Central slice of a coefficient cube (drops high frequencies)."""
    if any(n > c for n, c in zip(new_cutoffs, cutoffs)):
        raise CutoffTooSmall(f"cannot truncate {cutoffs} to larger {new_cutoffs}")
    sl = tuple(slice(c - n, c + n + 1) for c, n in zip(cutoffs, new_cutoffs))
    return arr[(Ellipsis,) + sl]


def convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full linear convolution along the last three axes.

    Leading axes broadcast, so one call handles scalar*scalar as well as
    batched matrix-vector contractions prepared by the caller.  Output
    cutoffs are the sums of the input cutoffs.
    """
    sa, sb = a.shape[-3:], b.shape[-3:]
    full = tuple(x + y - 1 for x, y in zip(sa, sb))
    # padding past the full linear size only adds zeros; composite grid
    # lengths dodge the slow large-prime FFT paths
    fast = tuple(scipy.fft.next_fast_len(n) for n in full)
    fa = scipy.fft.fftn(a, s=fast, axes=(-3, -2, -1))
    fb = scipy.fft.fftn(b, s=fast, axes=(-3, -2, -1))
    out = scipy.fft.ifftn(fa * fb, axes=(-3, -2, -1))
    out = out[..., :full[0], :full[1], :full[2]]
    if not (np.iscomplexobj(a) or np.iscomplexobj(b)):
        return out.real
    return out


def revconj(arr: np.ndarray) -> np.ndarray:
    """Coefficients of the complex conjugate field: flip and conjugate."""
    return arr[..., ::-1, ::-1, ::-1].conj()


def moment_slice(moments: np.ndarray, cutoffs: Cutoffs) -> np.ndarray:
    """Central block of a (possibly larger) centered moment array."""
    mc = tuple((s - 1) // 2 for s in moments.shape[-3:])
    return truncate_coeffs(moments, mc, cutoffs)  # type: ignore[arg-type]


def moment_contract(arr: np.ndarray, moments: np.ndarray) -> np.ndarray:
    """Integrate a coefficient cube against the measure.

    integral of f dmu = sum_k f_hat(k) mu_hat(-k).  ``moments`` must cover the
    cutoffs of ``arr``; leading component axes are preserved.
    """
    cut = tuple((s - 1) // 2 for s in arr.shape[-3:])
    mom = moment_slice(moments, cut)  # type: ignore[arg-type]
    return np.einsum("...ijk,ijk->...", arr, mom[::-1, ::-1, ::-1])


def pair_coeffs(u: np.ndarray, v: np.ndarray, moments: np.ndarray) -> complex:
    """Sesquilinear pairing <u, v>_mu of coefficient cubes of equal rank.

    Component axes (if any) are contracted; the frequency pairing is
    sum_{m,n} u(n) conj(v(m)) mu_hat(m - n), evaluated exactly as a linear
    convolution against the moment table.
    """
    if u.shape[:-3] != v.shape[:-3]:
        raise RankMismatch(f"rank mismatch {u.shape} vs {v.shape}")
    w = convolve(u, revconj(v))
    if w.ndim > 3:
        w = w.reshape((-1,) + w.shape[-3:]).sum(axis=0)
    return complex(moment_contract(w, moments))


def cross_matrix(s: np.ndarray) -> np.ndarray:
    """Matrix of the map v -> s x v for a 3-vector s."""
    s1, s2, s3 = s
    z = np.zeros_like(s1)
    return np.array([[z, -s3, s2], [s3, z, -s1], [-s2, s1, z]])
