"""Field algebra: shifted operators, products vs collocation, square roots."""

from __future__ import annotations

import numpy as np
import pytest

import maxhom.spectral as sp
from maxhom.errors import CutoffTooSmall, NotPositiveDefinite, RankMismatch
from maxhom.fields import (
    GramOperator,
    MaterialField,
    QuasiField,
    apply_shifted_operator,
    build_family,
    curl,
    div,
    grad,
    inner_product,
    material_convolve,
    mean_value,
    multiply_material,
    square_root_material,
)
from maxhom.measure import (
    check_gradient_mean_zero,
    fourier_moments,
    lebesgue,
    normalize,
    plane_arrangement,
)


def laminate_material(lo: float = 2.0, amp: float = 1.0) -> MaterialField:
    """a(y) = lo + amp*cos(2 pi y1) times the identity."""
    coeffs = np.zeros((3, 1, 1), dtype=complex)
    coeffs[0, 0, 0] = 0.5 * amp
    coeffs[1, 0, 0] = lo
    coeffs[2, 0, 0] = 0.5 * amp
    return MaterialField.from_scalar(coeffs, (1, 0, 0))


def random_field(rng, rank: str, kappa, cutoffs) -> QuasiField:
    lead = {"scalar": (), "vector": (3,)}[rank]
    shape = lead + sp.grid_shape(sp.as_cutoffs(cutoffs))
    coeffs = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return QuasiField(kappa=np.asarray(kappa, float), cutoffs=cutoffs, coeffs=coeffs)


def random_spd_material(rng, bandwidth: int = 1, base: float = 4.0) -> MaterialField:
    """base*Id plus a small random Hermitian trigonometric perturbation."""
    cut = (bandwidth, bandwidth, bandwidth)
    shape = (3, 3) + sp.grid_shape(cut)
    raw = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    herm = np.transpose(sp.revconj(raw), (1, 0, 2, 3, 4))
    coeffs = 0.03 * (raw + herm)
    coeffs[:, :, bandwidth, bandwidth, bandwidth] += base * np.eye(3)
    return MaterialField(cutoffs=cut, coeffs=coeffs)


# ---------------------------------------------------------------------------
# shifted operators
# ---------------------------------------------------------------------------

def test_curl_of_constant_is_ikappa_cross():
    kappa = np.array([0.3, -1.1, 2.0])
    c = np.array([1.0, 2.0, -0.5])
    fld = QuasiField.constant(c, kappa, (2, 2, 2))
    out = curl(fld)
    expected = 1j * np.cross(kappa, c)
    got = out.coeff((0, 0, 0))
    assert np.abs(np.asarray(got) - expected).max() < 1e-15
    mask = np.ones(sp.grid_shape((2, 2, 2)), bool)
    mask[2, 2, 2] = False
    assert np.abs(out.coeffs[:, mask]).max() == 0.0


def test_grad_of_single_mode():
    m = (2, -1, 0)
    fld = QuasiField.zeros("scalar", np.zeros(3), (3, 3, 3))
    fld.coeffs[m[0] + 3, m[1] + 3, m[2] + 3] = 1.0
    out = grad(fld)
    got = np.asarray(out.coeff(m))
    assert np.abs(got - 2j * np.pi * np.array(m)).max() < 1e-15


def test_div_curl_vanishes():
    rng = np.random.default_rng(0)
    for _ in range(10):
        kappa = rng.uniform(-np.pi, np.pi, size=3)
        v = random_field(rng, "vector", kappa, (2, 2, 2))
        resid = div(curl(v))
        assert np.abs(resid.coeffs).max() < 1e-13 * max(1.0, np.abs(v.coeffs).max())


def test_curl_grad_vanishes():
    rng = np.random.default_rng(1)
    kappa = rng.uniform(-np.pi, np.pi, size=3)
    f = random_field(rng, "scalar", kappa, (2, 2, 2))
    resid = curl(grad(f))
    assert np.abs(resid.coeffs).max() < 1e-13 * np.abs(f.coeffs).max()


def test_phase_shift_consistency():
    # curl at kappa == curl at 0 plus i kappa x (coefficientwise)
    rng = np.random.default_rng(2)
    kappa = np.array([1.0, -0.7, 0.2])
    v = random_field(rng, "vector", kappa, (2, 2, 2))
    v0 = QuasiField(kappa=np.zeros(3), cutoffs=v.cutoffs, coeffs=v.coeffs)
    base = apply_shifted_operator(v0, "curl").coeffs
    cross = np.empty_like(v.coeffs)
    cross[0] = 1j * (kappa[1] * v.coeffs[2] - kappa[2] * v.coeffs[1])
    cross[1] = 1j * (kappa[2] * v.coeffs[0] - kappa[0] * v.coeffs[2])
    cross[2] = 1j * (kappa[0] * v.coeffs[1] - kappa[1] * v.coeffs[0])
    got = apply_shifted_operator(v, "curl").coeffs
    assert np.abs(got - (base + cross)).max() < 1e-13


def test_operator_rank_checks():
    rng = np.random.default_rng(3)
    s = random_field(rng, "scalar", np.zeros(3), (1, 1, 1))
    v = random_field(rng, "vector", np.zeros(3), (1, 1, 1))
    with pytest.raises(RankMismatch):
        apply_shifted_operator(v, "grad")
    with pytest.raises(RankMismatch):
        apply_shifted_operator(s, "curl")
    with pytest.raises(RankMismatch):
        apply_shifted_operator(s, "div")


# ---------------------------------------------------------------------------
# material products
# ---------------------------------------------------------------------------

def test_identity_material_leaves_field_unchanged():
    rng = np.random.default_rng(4)
    u = random_field(rng, "vector", np.array([0.1, 0.2, 0.3]), (2, 1, 0))
    out = multiply_material(MaterialField.identity(), u)
    assert np.array_equal(out.coeffs, u.coeffs)


def test_laminate_on_constant_field_coefficients():
    u = QuasiField.constant(np.array([1.0, 0.0, 0.0]), np.zeros(3), (2, 0, 0))
    out = multiply_material(laminate_material(), u)
    assert abs(out.coeff((0, 0, 0))[0] - 2.0) < 1e-15
    assert abs(out.coeff((1, 0, 0))[0] - 0.5) < 1e-15
    assert abs(out.coeff((-1, 0, 0))[0] - 0.5) < 1e-15
    assert np.abs(out.coeffs[1:]).max() == 0.0


def test_product_matches_collocation_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        mat = random_spd_material(rng)
        u = random_field(rng, "vector", rng.uniform(-1, 1, 3), (2, 2, 2))
        prod = multiply_material(mat, u, extend=True)
        npts = (16, 16, 16)
        mat_vals = mat.on_grid(npts)                      # grid + (3,3)
        u_vals = sp_field_on_grid(u, npts)                # grid + (3,)
        prod_vals = sp_field_on_grid(prod, npts)
        oracle = np.einsum("xyzab,xyzb->xyza", mat_vals, u_vals)
        assert np.abs(prod_vals - oracle).max() < 1e-11 * np.abs(oracle).max()
        # public truncation is the central slice of the exact product
        trunc = multiply_material(mat, u)
        assert np.array_equal(
            trunc.coeffs, sp.truncate_coeffs(prod.coeffs, prod.cutoffs, u.cutoffs))


def sp_field_on_grid(fld: QuasiField, npts) -> np.ndarray:
    from maxhom.fields import _values_on_grid
    return _values_on_grid(fld.coeffs, fld.cutoffs, npts)


# ---------------------------------------------------------------------------
# inner products
# ---------------------------------------------------------------------------

def test_inner_product_of_ones_is_one():
    one = QuasiField.constant(1.0, np.zeros(3), (2, 2, 2))
    for spec in (lebesgue(),
                 normalize(plane_arrangement([({0: 0.0}, 1.0)])),
                 normalize(plane_arrangement([({2: 0.0}, 1.0), ({2: 0.5}, 1.0)]))):
        assert abs(inner_product(one, one, spec) - 1.0) < 1e-14


def test_lebesgue_orthonormality():
    e1 = QuasiField.zeros("scalar", np.zeros(3), (2, 2, 2))
    e1.coeffs[3, 2, 2] = 1.0  # e^{2 pi i y1}
    e2 = QuasiField.zeros("scalar", np.zeros(3), (2, 2, 2))
    e2.coeffs[2, 3, 2] = 1.0  # e^{2 pi i y2}
    assert abs(inner_product(e1, e1, lebesgue()) - 1.0) < 1e-14
    assert abs(inner_product(e1, e2, lebesgue())) < 1e-14


def test_plane_measure_sees_transverse_mode_as_constant():
    # on {y1=0} the function e^{2 pi i y1} is identically 1
    spec = normalize(plane_arrangement([({0: 0.0}, 1.0)]))
    mode = QuasiField.zeros("scalar", np.zeros(3), (1, 1, 1))
    mode.coeffs[2, 1, 1] = 1.0
    one = QuasiField.constant(1.0, np.zeros(3), (1, 1, 1))
    got = inner_product(mode, one, spec)
    assert abs(got - 1.0) < 1e-14
    # quadrature oracle on the plane
    n = 64
    t = np.arange(n) / n
    y2, y3 = np.meshgrid(t, t, indexing="ij")
    oracle = np.exp(2j * np.pi * 0.0 * np.ones_like(y2)).mean()
    assert abs(got - oracle) < 1e-12


def test_inner_product_accepts_moment_table_and_checks_range():
    spec = lebesgue()
    table = fourier_moments(spec, cutoff=2)
    u = QuasiField.constant(1.0, np.zeros(3), (2, 2, 2))
    assert abs(inner_product(u, u, table) - 1.0) < 1e-14
    big = QuasiField.constant(1.0, np.zeros(3), (3, 3, 3))
    with pytest.raises(CutoffTooSmall):
        inner_product(big, big, table)


def test_mean_value_reads_moments():
    spec = normalize(plane_arrangement([({2: 0.25}, 1.0)]))
    fld = QuasiField.zeros("scalar", np.zeros(3), (1, 1, 1))
    fld.coeffs[1, 1, 2] = 1.0  # e^{2 pi i y3} integrates to mu_hat(-(0,0,1)) = i
    assert abs(mean_value(fld, spec) - 1j) < 1e-14


# ---------------------------------------------------------------------------
# square roots and the coherent family
# ---------------------------------------------------------------------------

def test_sqrt_identity_is_identity():
    fam = build_family(MaterialField.identity())
    assert fam.sqrt.is_identity and fam.invsqrt.is_identity
    assert fam.A.is_identity and fam.invA.is_identity


def test_sqrt_scalar_matches_pointwise():
    mat = laminate_material()
    root = square_root_material(mat)
    npts = (129, 1, 1)
    vals = root.on_grid(npts)
    t = np.arange(npts[0]) / npts[0]
    a = 2.0 + np.cos(2 * np.pi * t)
    oracle = np.sqrt(a)
    got = vals[:, 0, 0, 0, 0]
    assert np.abs(got - oracle).max() < 1e-12
    assert np.abs(vals[:, 0, 0, 0, 1]).max() < 1e-12  # stays scalar


def test_sqrt_square_matches_material_on_grid():
    rng = np.random.default_rng(6)
    for _ in range(3):
        mat = random_spd_material(rng)
        root = square_root_material(mat)
        sq = material_convolve(root, root)
        npts = tuple(2 * c + 1 for c in sq.cutoffs)
        err = np.abs(sq.on_grid(npts) - mat.on_grid(npts)).max()
        assert err < 1e-10


def test_family_coherence():
    fam = build_family(laminate_material())
    ident = material_convolve(fam.sqrt, fam.invsqrt)
    c = ident.cutoffs
    delta = np.zeros_like(ident.coeffs)
    delta[:, :, c[0], c[1], c[2]] = np.eye(3)
    assert np.abs(ident.coeffs - delta).max() < 1e-12
    # the family's A agrees with the nominal coefficient to the fit tolerance
    diff = fam.A.coeffs[:, :, fam.A.cutoffs[0] - 1:fam.A.cutoffs[0] + 2,
                        fam.A.cutoffs[1], fam.A.cutoffs[2]]
    nom = fam.nominal.coeffs[:, :, :, 0, 0]
    assert np.abs(diff - nom).max() < 1e-12


def test_sqrt_rejects_indefinite_material():
    coeffs = np.zeros((3, 1, 1), dtype=complex)
    coeffs[1, 0, 0] = 1.0
    coeffs[0, 0, 0] = coeffs[2, 0, 0] = 0.75  # 1 + 1.5 cos dips below zero
    mat = MaterialField.from_scalar(coeffs, (1, 0, 0))
    with pytest.raises(NotPositiveDefinite):
        square_root_material(mat)


def test_material_metadata():
    mat = laminate_material()
    assert mat.scalar_flag
    lo, hi = mat.ellipticity_bounds(4096)  # even grid hits the cosine minimum
    assert abs(lo - 1.0) < 1e-10 and abs(hi - 3.0) < 1e-10
    rng = np.random.default_rng(7)
    assert not random_spd_material(rng).scalar_flag
    with pytest.raises(NotPositiveDefinite):
        bad = np.zeros((3, 3, 1, 1, 1), dtype=complex)
        bad[0, 1, 0, 0, 0] = 1.0  # not Hermitian
        MaterialField(cutoffs=(0, 0, 0), coeffs=bad)


def test_stride_embedding_preserves_values():
    mat = laminate_material()
    emb = mat.stride_embed(3)
    # supercell coefficients evaluate to a(3*y) at supercell coordinate y
    vals = emb.on_grid((27, 1, 1))[:, 0, 0, 0, 0]
    t = np.arange(27) / 27
    oracle = 2.0 + np.cos(2 * np.pi * (3 * t))
    assert np.abs(vals - oracle).max() < 1e-12


# ---------------------------------------------------------------------------
# adjointness and the Gram operator
# ---------------------------------------------------------------------------

def weak_matrices(spec, kappa, cut):
    """Explicit weak matrices of grad and -div on a small cube."""
    modes = [(i, j, k) for i in range(-cut, cut + 1)
             for j in range(-cut, cut + 1) for k in range(-cut, cut + 1)]
    Q = len(modes)
    cutoffs = (cut, cut, cut)
    Mgrad = np.zeros((3 * Q, Q), dtype=complex)
    Mdiv = np.zeros((Q, 3 * Q), dtype=complex)
    for p, mp in enumerate(modes):
        phi = QuasiField.zeros("scalar", kappa, cutoffs)
        phi.coeffs[mp[0] + cut, mp[1] + cut, mp[2] + cut] = 1.0
        g = grad(phi)
        for a in range(3):
            for q, mq in enumerate(modes):
                test = QuasiField.zeros("vector", kappa, cutoffs)
                test.coeffs[a, mq[0] + cut, mq[1] + cut, mq[2] + cut] = 1.0
                Mgrad[a * Q + q, p] = inner_product(g, test, spec)
    for p, mp in enumerate(modes):
        for b in range(3):
            e = QuasiField.zeros("vector", kappa, cutoffs)
            e.coeffs[b, mp[0] + cut, mp[1] + cut, mp[2] + cut] = 1.0
            d = div(e)
            for q, mq in enumerate(modes):
                test = QuasiField.zeros("scalar", kappa, cutoffs)
                test.coeffs[mq[0] + cut, mq[1] + cut, mq[2] + cut] = 1.0
                Mdiv[q, b * Q + p] = -inner_product(d, test, spec)
    return Mgrad, Mdiv


def test_grad_div_adjointness_exact_for_lebesgue():
    kappa = np.array([0.4, -0.9, 1.3])
    Mgrad, Mdiv = weak_matrices(lebesgue(), kappa, 1)
    assert np.abs(Mdiv - Mgrad.conj().T).max() < 1e-14


def test_grad_div_adjointness_defect_equals_gradient_mean_violation():
    # for a singular measure the defect is exactly the grad-mean obstruction
    spec = normalize(plane_arrangement([({2: 0.3}, 1.0)]))
    Mgrad, Mdiv = weak_matrices(spec, np.zeros(3), 1)
    defect = np.abs(Mdiv - Mgrad.conj().T).max()
    rep = check_gradient_mean_zero(spec, cutoff=2)  # differences reach 2*cutoff
    assert defect > 1e-3
    assert abs(defect - rep.worst_violation) < 1e-10


def test_gram_operator_lebesgue_is_identity():
    g = GramOperator(lebesgue(), (1, 1, 1))
    assert np.abs(g.matrix - np.eye(27)).max() < 1e-14
    assert g.rank_retained == 27


def test_gram_operator_plane_pair_rank():
    spec = normalize(plane_arrangement([({2: 0.0}, 1.0), ({2: 0.5}, 1.0)]))
    g = GramOperator(spec, (1, 1, 1))
    assert g.eigenvalues.min() > -1e-12
    assert g.rank_retained == 18  # {even difference} blocks collapse odd/even pairs
    u = np.ones(27, dtype=complex)
    pu = g.project(u)
    assert np.abs(g.project(pu) - pu).max() < 1e-12
