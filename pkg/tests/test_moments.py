import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wfseedbank.dual import absorption_probability
from wfseedbank.model import ModelParams
from wfseedbank.moments import (MutationFreeError, boundary_atom_estimate, finite_time_moments,
                                reversibility_defect, stationarity_residual, stationary_moments,
                                stationary_moments_oracle, stationary_proxy_time)

from conftest import random_params

SB = ModelParams.seed_bank(u1=0.5, u2=0.5, u1p=0.5, u2p=0.5, c=1.0, K=1.0)


@st.composite
def mutating(draw):
    u = [draw(st.sampled_from([0.0, 0.0, 0.1, 0.7, 2.0])) for _ in range(4)]
    if sum(u) == 0:
        u[draw(st.integers(0, 3))] = draw(st.floats(0.01, 2.0))
    return ModelParams(*u, c=draw(st.floats(0.1, 3.0)), cp=draw(st.floats(0.1, 3.0)),
                       alpha=draw(st.floats(0.0, 2.0)), alphap=draw(st.floats(0.0, 2.0)))


def test_unit_mass():
    assert stationary_moments(SB, 3)[(0, 0)] == 1.0
    assert stationary_moments_oracle(SB, 3)[(0, 0)] == 1.0


@pytest.mark.parametrize("u", [0.1, 0.5, 2.0])
def test_symmetric_mutation_gives_half(u):
    p = ModelParams(u, u, u, u, c=0.7, cp=1.9, alpha=1.0, alphap=0.3)
    M = stationary_moments(p, 1)
    assert M[(1, 0)] == pytest.approx(0.5, abs=1e-14)
    assert M[(0, 1)] == pytest.approx(0.5, abs=1e-14)


def test_single_mutation_direction():
    up = ModelParams(u2=0.8, c=1.0, cp=0.6)
    down = ModelParams(u1=0.8, c=1.0, cp=0.6)
    for solver in (stationary_moments, stationary_moments_oracle):
        assert all(v == pytest.approx(1.0, abs=1e-12) for v in solver(up, 5).values.values())
        table = solver(down, 5).values
        assert all(v == pytest.approx(0.0, abs=1e-12) for k, v in table.items() if k != (0, 0))


def test_recursion_agrees_with_dual_solve(rng):
    for _ in range(20):
        p = random_params(rng)
        fast = stationary_moments(p, 8)
        slow = stationary_moments_oracle(p, 8)
        assert fast.sup_distance(slow) < 1e-10
    assert slow[(2, 3)] == absorption_probability(p, (2, 3))


@settings(max_examples=40)
@given(mutating())
def test_table_invariants(p):
    M = stationary_moments(p, 6)
    assert M.violations(1e-12) == []
    assert np.min(np.linalg.eigvalsh(M.moment_matrix())) >= -1e-10


def test_needs_mutation():
    with pytest.raises(MutationFreeError):
        stationary_moments(ModelParams(), 3)


def test_finite_time_at_zero_is_monomials():
    M = finite_time_moments(SB, 0.3, 0.8, 4, 0.0)
    for (n, m), v in M.values.items():
        assert v == 0.3**n * 0.8**m


def test_finite_time_approaches_stationary():
    p = ModelParams(0.4, 0.2, 0.7, 0.3, c=1.0, cp=0.5, alpha=1.0, alphap=0.5)
    stat = stationary_moments(p, 4)
    dist = [finite_time_moments(p, 0.1, 0.9, 4, t).sup_distance(stat) for t in (0.5, 1, 2, 4, 8, 16)]
    assert all(b < a for a, b in zip(dist, dist[1:]))
    t_far = 50 / 0.2
    assert finite_time_moments(p, 0.1, 0.9, 4, t_far).sup_distance(stat) <= 1e-6


def test_no_mutation_limit():
    p = ModelParams(c=1.0, cp=2.0, alpha=1.0, alphap=1.0)
    M = finite_time_moments(p, 0.2, 0.9, 3, 50.0)
    for key, v in M.values.items():
        if key != (0, 0):
            assert v == pytest.approx((0.9 * 1.0 + 0.2 * 2.0) / 3.0, abs=1e-4)


def test_symmetric_two_island_is_reversible():
    p = ModelParams.two_island(u1=0.3, u2=0.6, u1p=0.3, u2p=0.6, c=0.8, cp=0.8, alpha=1.2, alphap=1.2)
    assert abs(reversibility_defect(p)) < 1e-10


def test_seed_bank_is_not_reversible():
    assert abs(reversibility_defect(SB)) > 1e-8


@settings(max_examples=40)
@given(mutating())
def test_stationarity_identity(p):
    r = stationarity_residual(p)
    assert abs(r["sum"]) < 1e-10
    assert abs(r["generator_xy"]) < 1e-10
    assert reversibility_defect(p) == pytest.approx(2 * r["f_Ag"], abs=1e-10)


def test_proxy_time():
    assert stationary_proxy_time(ModelParams(u1=0.25, u2=0.5, c=2.0, cp=1.0)) == 200.0


def test_atom_estimate_whole_interval():
    res = boundary_atom_estimate(SB, t=1.0, dt=1e-2, n_paths=500, epsilons=(1.0,), seed=0)
    assert res["fraction"] == [1.0] and res["x_fraction"] == [1.0]


def test_atom_estimate_decreases_with_mutation():
    res = boundary_atom_estimate(SB, t=5.0, dt=1e-3, n_paths=5000, epsilons=(1e-1, 1e-2, 1e-3), seed=3)
    f = res["fraction"]
    assert f[0] > f[1] >= f[2]
    assert f[2] < 0.01


def test_atom_estimate_accessible_face_keeps_mass():
    p = ModelParams.seed_bank(u1=0.5, u2=0.0, u1p=0.5, u2p=0.5, c=1.0, K=1.0)
    res = boundary_atom_estimate(p, t=10.0, dt=1e-3, n_paths=5000, epsilons=(1e-3,), seed=1)
    assert res["x_fraction"][0] > 5 * res["x_std_error"][0]
