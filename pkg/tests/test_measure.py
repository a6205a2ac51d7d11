"""Measure layer: exact moments vs a grid-quadrature oracle, validation rules."""

from __future__ import annotations

import numpy as np
import pytest

from maxhom.errors import ConfigError, PropertyViolation
from maxhom.measure import (
    MeasureSpec,
    check_gradient_mean_zero,
    fourier_moments,
    lebesgue,
    measure_from_config,
    measure_to_config,
    mixture,
    moment_array,
    normalize,
    plane_arrangement,
)


def quad_moment(spec: MeasureSpec, m, n: int = 64) -> complex:
    """Quadrature oracle: average exp(-2 pi i m.y) over each component support.

    Uniform grids on the free axes integrate exp(-2 pi i m_j y_j) exactly for
    |m_j| < n, so this reproduces the moments without touching the closed
    form used by the implementation.
    """
    total = 0.0 + 0.0j
    t = np.arange(n) / n
    for comp in spec.components:
        frozen = comp.offsets
        axes = [np.array([frozen[ax]]) if ax in frozen else t for ax in range(3)]
        y1, y2, y3 = np.meshgrid(*axes, indexing="ij")
        vals = np.exp(-2j * np.pi * (m[0] * y1 + m[1] * y2 + m[2] * y3))
        total += comp.weight * vals.mean()
    return complex(total)


def pair_z() -> MeasureSpec:
    return normalize(plane_arrangement([({2: 0.0}, 1.0), ({2: 0.5}, 1.0)]))


# ---------------------------------------------------------------------------
# normalize
# ---------------------------------------------------------------------------

def test_normalize_lebesgue_identity():
    spec = normalize(lebesgue())
    assert spec.kind == "lebesgue"
    assert spec.total_mass == 1.0
    assert spec.components[0].weight == 1.0


def test_normalize_two_planes_half_weights():
    spec = pair_z()
    assert [c.weight for c in spec.components] == [0.5, 0.5]
    assert spec.total_mass == 1.0


def test_normalize_mixture_three_to_one():
    spec = normalize(mixture([(None, 3.0), ({0: 0.0}, 1.0)]))
    assert [c.weight for c in spec.components] == [0.75, 0.25]


def test_normalize_preserves_weight_ratios():
    rng = np.random.default_rng(7)
    for _ in range(20):
        w = rng.uniform(0.1, 5.0, size=3)
        spec = normalize(plane_arrangement([
            ({0: 0.1}, w[0]), ({1: 0.3}, w[1]), ({2: 0.7}, w[2])]))
        got = np.array([c.weight for c in spec.components])
        assert np.allclose(got / got[0], w / w[0], rtol=1e-14)
        assert abs(sum(got) - 1.0) < 1e-14


# ---------------------------------------------------------------------------
# fourier moments
# ---------------------------------------------------------------------------

def test_lebesgue_moments_are_kronecker():
    table = fourier_moments(lebesgue(), cutoff=3)
    assert table.moment((0, 0, 0)) == 1.0
    for m in [(1, 0, 0), (0, -2, 0), (3, 1, -6), (6, 6, 6)]:
        assert table.moment(m) == 0.0


def test_plane_quarter_offset_moment_is_minus_i():
    spec = normalize(plane_arrangement([({2: 0.25}, 1.0)]))
    table = fourier_moments(spec, cutoff=2)
    got = table.moment((0, 0, 1))
    assert abs(got - (-1j)) < 1e-14
    assert abs(got - quad_moment(spec, (0, 0, 1))) < 1e-12


def test_two_plane_grid_moment_is_half():
    spec = normalize(plane_arrangement([({0: 0.0}, 1.0), ({1: 0.0}, 1.0)]))
    table = fourier_moments(spec, cutoff=2)
    got = table.moment((1, 0, 0))
    assert abs(got - 0.5) < 1e-14
    assert abs(got - quad_moment(spec, (1, 0, 0))) < 1e-12


@pytest.mark.parametrize("builder", [
    lambda: lebesgue(),
    pair_z,
    lambda: normalize(mixture([(None, 1.0), ({0: 0.25}, 1.0), ({1: 0.5, 2: 0.75}, 2.0)])),
])
def test_moment_table_invariants(builder):
    spec = builder()
    table = fourier_moments(spec, cutoff=3)
    assert abs(table.moment((0, 0, 0)) - 1.0) < 1e-14
    rng = np.random.default_rng(11)
    for _ in range(40):
        m = tuple(int(v) for v in rng.integers(-6, 7, size=3))
        neg = tuple(-v for v in m)
        assert abs(table.moment(m) - np.conj(table.moment(neg))) < 1e-14
        assert abs(table.moment(m)) <= 1.0 + 1e-12


def test_moments_match_quadrature_oracle():
    specs = [
        lebesgue(),
        pair_z(),
        normalize(plane_arrangement([({0: 0.37}, 1.0), ({1: 0.2, 2: 0.9}, 0.5)])),
        normalize(mixture([(None, 2.0), ({2: 0.125}, 1.0)])),
    ]
    rng = np.random.default_rng(3)
    for spec in specs:
        tol = 1e-10 if spec.is_lebesgue else 1e-8
        table = fourier_moments(spec, cutoff=3)
        for _ in range(25):
            m = tuple(int(v) for v in rng.integers(-6, 7, size=3))
            assert abs(table.moment(m) - quad_moment(spec, m)) < tol


def test_random_trig_polynomial_integration_matches_quadrature():
    # scaling-consistency property: moment sums == dense quadrature
    rng = np.random.default_rng(5)
    specs = [lebesgue(), pair_z(),
             normalize(mixture([(None, 1.0), ({0: 0.3}, 2.0)]))]
    for spec in specs:
        tol = 1e-10 if spec.is_lebesgue else 1e-8
        arr = moment_array(spec, (3, 3, 3))
        for _ in range(5):
            coeffs = rng.normal(size=(7, 7, 7)) + 1j * rng.normal(size=(7, 7, 7))
            # \int p dmu = sum_k p_hat(k) mu_hat(-k)
            val = (coeffs * arr[::-1, ::-1, ::-1]).sum()
            n = 64
            t = np.arange(n) / n
            oracle = 0.0
            for comp in spec.components:
                frozen = comp.offsets
                axes = [np.array([frozen[ax]]) if ax in frozen else t for ax in range(3)]
                y1, y2, y3 = np.meshgrid(*axes, indexing="ij")
                p = np.zeros_like(y1, dtype=complex)
                for i, mi in enumerate(range(-3, 4)):
                    for j, mj in enumerate(range(-3, 4)):
                        for k, mk in enumerate(range(-3, 4)):
                            p += coeffs[i, j, k] * np.exp(
                                2j * np.pi * (mi * y1 + mj * y2 + mk * y3))
                oracle += comp.weight * p.mean()
            assert abs(val - oracle) < tol * max(1.0, abs(val))


def test_mixture_table_is_exact_weighted_sum():
    parts = [(None, 0.5), ({0: 0.25}, 0.3), ({2: 0.6}, 0.2)]
    spec = mixture(parts)
    whole = moment_array(spec, (4, 4, 4))
    acc = np.zeros_like(whole)
    for frozen, w in parts:
        single = normalize(mixture([(frozen, 1.0)]))
        acc += w * moment_array(single, (4, 4, 4))
    assert np.array_equal(whole, acc)


def test_supercell_moment_embedding():
    spec = pair_z()
    M = 3
    emb = moment_array(spec, (7, 7, 7), period=M)
    base = moment_array(spec, (2, 2, 2))
    for n1 in range(-7, 8):
        for n3 in range(-7, 8):
            val = emb[n1 + 7, 0 + 7, n3 + 7]
            if n1 % M == 0 and n3 % M == 0:
                assert val == base[n1 // M + 2, 2, n3 // M + 2]
            else:
                assert val == 0.0


# ---------------------------------------------------------------------------
# gradient mean check
# ---------------------------------------------------------------------------

def test_gradient_mean_holds_for_lebesgue():
    rep = check_gradient_mean_zero(lebesgue(), cutoff=4)
    assert rep.holds
    assert rep.worst_violation <= 1e-12


def test_gradient_mean_fails_for_single_plane():
    # nonzero moments at m = (0,0,m3) give violations 2 pi |m3| |mu_hat|
    spec = normalize(plane_arrangement([({2: 0.3}, 1.0)]))
    rep = check_gradient_mean_zero(spec, cutoff=3)
    assert not rep.holds
    assert rep.worst_axis == 2
    assert abs(rep.worst_violation - 2.0 * np.pi * 3) < 1e-10


def test_gradient_mean_fails_for_period_spanning_pair():
    # the even moments of the 0/half pair survive, so the check still fails
    rep = check_gradient_mean_zero(pair_z(), cutoff=4)
    assert not rep.holds
    assert abs(rep.worst_violation - 2.0 * np.pi * 4) < 1e-10


# ---------------------------------------------------------------------------
# validation and configuration
# ---------------------------------------------------------------------------

def test_contained_subspace_rejected():
    with pytest.raises(PropertyViolation):
        plane_arrangement([({0: 0.0}, 1.0), ({0: 0.0, 1: 0.5}, 1.0)])


def test_duplicate_plane_rejected():
    with pytest.raises(PropertyViolation):
        plane_arrangement([({2: 0.25}, 1.0), ({2: 0.25}, 2.0)])


def test_lebesgue_plus_plane_mixture_is_legal():
    spec = normalize(mixture([(None, 1.0), ({2: 0.0}, 1.0)]))
    assert spec.kind == "mixture"


def test_config_round_trip():
    doc = {"kind": "mixture", "components": [
        {"weight": 3.0},
        {"frozen_axes": [1], "offsets": [0.0], "weight": 1.0},
    ]}
    spec = measure_from_config(doc)
    assert [c.weight for c in spec.components] == [0.75, 0.25]
    back = measure_to_config(spec)
    spec2 = measure_from_config(back)
    assert spec2 == spec


@pytest.mark.parametrize("doc", [
    {"kind": "lebesgue", "extra": 1},
    {"kind": "plane"},
    {"kind": "arrangement"},
    {"kind": "arrangement", "components": []},
    {"kind": "arrangement", "components": [{"weight": 1.0, "normal": [1, 1, 0]}]},
    {"kind": "arrangement", "components": [{"frozen_axes": [1, 2], "offsets": [0.1], "weight": 1.0}]},
    {"kind": "arrangement", "components": [{"frozen_axes": [0], "offsets": [0.1], "weight": 1.0}]},
    {"kind": "arrangement", "components": [{"frozen_axes": [4], "offsets": [0.1], "weight": 1.0}]},
    {"kind": "arrangement", "components": [{"frozen_axes": [2, 2], "offsets": [0.1, 0.2], "weight": 1.0}]},
    {"kind": "lebesgue", "components": [{"weight": 1.0}]},
    {"kind": "arrangement", "components": [{"weight": 1.0}]},
])
def test_bad_configs_rejected(doc):
    with pytest.raises(ConfigError):
        measure_from_config(doc)


def test_tilted_plane_is_inexpressible():
    # the schema has no way to write a non-axis-parallel support; the nearest
    # attempt (a "normal" key) dies in validation
    with pytest.raises(ConfigError):
        measure_from_config({"kind": "arrangement", "components": [
            {"frozen_axes": [1], "offsets": [0.5], "weight": 1.0, "normal": [1, 1, 0]}]})


def test_moment_table_export_and_range():
    table = fourier_moments(pair_z(), cutoff=2)
    doc = table.to_dict()
    assert doc["cutoff"] == 2 and doc["moment_cutoff"] == 4
    assert doc["nonzero"]["0,0,0"] == [1.0, 0.0]
    assert "0,0,1" not in doc["nonzero"]  # odd moments cancel for the 0/half pair
    with pytest.raises(KeyError):
        table.moment((5, 0, 0))
