import math

import numpy as np
import pytest
import sympy as sym
from hypothesis import given, strategies as st

from wfseedbank.model import (DiffusionState, ModelParams, MonomialCombo, SeedBank, binom2,
                              diffusion_amplitude, drift, drift_k, dump_params, generator_on_monomial,
                              load_params, params_from_mapping, params_to_mapping, validate_params)

rate = st.floats(0.0, 3.0, allow_nan=False)
pos = st.floats(0.05, 3.0, allow_nan=False)
unit = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def params(draw):
    return ModelParams(u1=draw(rate), u2=draw(rate), u1p=draw(rate), u2p=draw(rate), c=draw(pos),
                       cp=draw(pos), alpha=draw(rate), alphap=draw(rate))


def test_valid_seed_bank_accepted():
    p = ModelParams(u1=0, u2=0, u1p=0, u2p=0, c=1, cp=1, alpha=1, alphap=0)
    assert validate_params(p) is p


@pytest.mark.parametrize("field", ["c", "cp"])
def test_zero_migration_rejected(field):
    with pytest.raises(ValueError, match="migration rate must be positive"):
        ModelParams(**{field: 0.0})


@pytest.mark.parametrize("bad", [{"u1": -0.1}, {"alpha": float("nan")}, {"u2p": float("inf")}, {"c": -1.0}])
def test_invalid_rates_rejected(bad):
    with pytest.raises(ValueError):
        ModelParams(**bad)


def test_seed_bank_constructor_mapping():
    p = ModelParams.seed_bank(u1=0.1, u2=0.2, u1p=0.3, u2p=0.4, c=0.7, K=3.0)
    assert (p.alpha, p.alphap) == (1.0, 0.0)
    assert p.cp == 0.7 * 3.0
    with pytest.raises(ValueError):
        ModelParams.seed_bank(K=0.0)


def test_binomial_convention():
    assert [binom2(n) for n in range(5)] == [0, 0, 1, 3, 6]


def test_diffusion_state_range():
    DiffusionState(0.0, 1.0)
    with pytest.raises(ValueError):
        DiffusionState(1.2, 0.5)


def test_drift_examples():
    p = ModelParams(c=1, cp=1)
    assert drift(p, (0.5, 0.5)) == (0.0, 0.0)
    assert drift(p, (0.0, 1.0)) == (1.0, -1.0)
    q = ModelParams(u1=0.1, u2=0.3, c=2.0)
    assert drift(q, (1.0, 0.0))[0] == pytest.approx(-2.1, abs=1e-15)


def test_amplitude_examples():
    assert diffusion_amplitude(ModelParams(alpha=1.0), (0.0, 0.5))[0] == 0.0
    assert diffusion_amplitude(ModelParams(alpha=2.0), (0.5, 0.3))[0] == 1.0
    seed = ModelParams.seed_bank(c=1.0, K=1.0)
    assert all(diffusion_amplitude(seed, (x, y))[1] == 0.0 for x in (0, 0.3, 1) for y in (0, 0.5, 1))


def test_amplitude_clamps_roundoff():
    p = ModelParams(alpha=1.0, alphap=1.0)
    assert diffusion_amplitude(p, (1.0 + 1e-17, -1e-17)) == (0.0, 0.0)


@given(params(), unit, unit, unit, unit, unit)
def test_drift_is_affine(p, x1, y1, x2, y2, lam):
    mid = drift(p, (lam * x1 + (1 - lam) * x2, lam * y1 + (1 - lam) * y2))
    a, b = drift(p, (x1, y1)), drift(p, (x2, y2))
    for k in range(2):
        assert mid[k] == pytest.approx(lam * a[k] + (1 - lam) * b[k], abs=1e-12)


@given(params(), unit)
def test_amplitude_vanishes_on_faces(p, s):
    assert diffusion_amplitude(p, (0.0, s))[0] == 0.0
    assert diffusion_amplitude(p, (1.0, s))[0] == 0.0
    assert diffusion_amplitude(p, (s, 0.0))[1] == 0.0
    assert diffusion_amplitude(p, (s, 1.0))[1] == 0.0


def test_drift_k_examples():
    banks = (SeedBank(c=1.0, K=1.0), SeedBank(c=2.0, K=1.0))
    p = ModelParams.multi_seed_bank(banks)
    assert drift_k(p, (1.0, 0.0, 0.0)) == pytest.approx((-3.0, 1.0, 2.0))
    assert drift_k(p, (0.4, 0.4, 0.4)) == pytest.approx((0.0, 0.0, 0.0))


@given(rate, rate, rate, rate, pos, pos, unit, unit)
def test_drift_k_reduces_to_pair(u1, u2, u1p, u2p, c, K, x, y):
    p = ModelParams.seed_bank(u1=u1, u2=u2, u1p=u1p, u2p=u2p, c=c, K=K)
    k1 = ModelParams.multi_seed_bank([SeedBank(c=c, K=K, u1=u1p, u2=u2p)], u1=u1, u2=u2)
    assert drift_k(k1, (x, y)) == pytest.approx(drift(p, (x, y)), rel=1e-14, abs=1e-14)
    assert drift_k(p, (x, y)) == pytest.approx(drift(p, (x, y)), rel=1e-14, abs=1e-14)


def test_generator_examples():
    p = ModelParams(u1=0.2, u2=0.3, c=0.7, cp=1.1)
    assert len(generator_on_monomial(p, 0, 0)) == 0
    g = generator_on_monomial(p, 1, 0)
    assert g.terms == pytest.approx({(0, 0): 0.3, (1, 0): -0.2 - 0.3 - 0.7, (0, 1): 0.7})


@given(params(), st.integers(0, 5), st.integers(0, 5))
def test_generator_preserves_degree(p, n, m):
    assert all(i + j <= n + m for (i, j), _ in generator_on_monomial(p, n, m).items())


def _symbolic_generator(p, n, m):
    x, y = sym.symbols("x y")
    f = x**n * y**m
    bx = -p.u1 * x + p.u2 * (1 - x) + p.c * (y - x)
    by = -p.u1p * y + p.u2p * (1 - y) + p.cp * (x - y)
    Af = (bx * sym.diff(f, x) + by * sym.diff(f, y) + sym.Rational(1, 2) * p.alpha**2 * x * (1 - x) * sym.diff(f, x, 2)
          + sym.Rational(1, 2) * p.alphap**2 * y * (1 - y) * sym.diff(f, y, 2))
    return sym.lambdify((x, y), Af, "numpy")


def test_generator_matches_differential_operator(rng):
    g = np.linspace(0.1, 0.9, 5)
    X, Y = np.meshgrid(g, g)
    for _ in range(6):
        p = ModelParams(*rng.uniform(0, 1.5, 4), c=rng.uniform(0.2, 2), cp=rng.uniform(0.2, 2),
                        alpha=rng.uniform(0.3, 1.5), alphap=rng.uniform(0, 1.5))
        for n in range(4):
            for m in range(4):
                want = np.broadcast_to(_symbolic_generator(p, n, m)(X, Y), X.shape)
                got = generator_on_monomial(p, n, m)(X, Y)
                scale = np.maximum(1.0, np.abs(want))
                assert np.max(np.abs(got - want) / scale) < 1e-12


def test_monomial_combo_canonical_order():
    a = MonomialCombo({(0, 2): 1.0, (1, 0): 2.0, (0, 0): 3.0, (2, 0): 0.0})
    assert list(a.terms) == [(0, 0), (1, 0), (0, 2)]
    assert (a + a.scale(-1)) == MonomialCombo()
    assert a.expectation({(0, 0): 1.0, (1, 0): 0.5, (0, 2): 0.25}) == pytest.approx(4.25)


def test_param_file_round_trip(tmp_path):
    p = ModelParams.multi_seed_bank([SeedBank(c=1.0, K=2.0, u2=0.1), SeedBank(c=0.5, K=1.0)], u1=0.3)
    f = tmp_path / "p.toml"
    f.write_text(dump_params(p))
    assert load_params(f) == p
    assert params_from_mapping(params_to_mapping(p)) == p


def test_param_file_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        params_from_mapping({"u1": 0.1, "mu": 2})
    with pytest.raises(ValueError):
        params_from_mapping({"seedbank": [{"c": 1.0}]})


def test_swapped_is_involution():
    p = ModelParams(u1=0.1, u2=0.2, u1p=0.3, u2p=0.4, c=0.5, cp=0.6, alpha=0.7, alphap=0.8)
    assert p.swapped().swapped() == p
    assert math.isclose(p.swapped().cp, p.c)
