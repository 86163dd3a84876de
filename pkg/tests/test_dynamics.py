import cmath
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gicar_dpp.dynamics import (
    birth_death_kernel,
    configuration_space,
    eigen_check,
    f_function,
    f_general,
    frobenius_energy,
    generator_residual,
    km_monte_carlo,
    m_lambda,
    spectral_tail_bound,
    spectral_transition_matrix,
    transition_matrix,
    unitary_phase,
)
from gicar_dpp.ensembles import AskeyLesky, Charlier, Meixner, build_weight, log_normalization, orthonormal_system
from gicar_dpp.errors import DomainError, PrecisionError, StatisticsError, TruncationError, ValidationError
from gicar_dpp.lattice_partitions import Partition, Window, partitions_up_to
from gicar_dpp.operators import build_hypergeometric_D

from oracles import cofactor_det, exact_m, taylor_expm

CHARLIER = Charlier(1.0)
W40 = Window.half_line(40)


@pytest.fixture(scope="module")
def charlier_setup():
    op = build_hypergeometric_D(CHARLIER, W40)
    sys = orthonormal_system(CHARLIER, W40)
    space = configuration_space(CHARLIER, W40, 2)
    return op, sys, space


# ---- eigenfunctions --------------------------------------------------------

def test_empty_function_is_one(charlier_setup):
    _, sys, space = charlier_setup
    f = f_function(sys, (), space)
    assert np.max(np.abs(f.values - 1.0)) <= 1e-9
    for fam, w in [(Meixner(1.5, 0.3), Window.half_line(45)), (AskeyLesky(20.3, 20.6, 20.2, 20.7), Window(-35, 35))]:
        s3 = configuration_space(fam, w, 3)
        f = f_function(orthonormal_system(fam, w), (), s3)
        assert np.max(np.abs(f.values - 1.0)[s3.core]) <= 1e-8


def test_isometry(charlier_setup):
    _, sys, space = charlier_setup
    lams = [lam for lam in partitions_up_to(3) if len(lam) <= 2]
    fs = [f_function(sys, lam, space) for lam in lams]
    gram = np.array([[a.inner(b) for b in fs] for a in fs])
    assert np.max(np.abs(gram - np.eye(len(fs)))) <= 1e-9


def test_isometry_three_points():
    w = Window.half_line(24)
    sys = orthonormal_system(CHARLIER, w)
    space = configuration_space(CHARLIER, w, 3)
    lams = [lam for lam in partitions_up_to(3) if len(lam) <= 3]
    fs = [f_function(sys, lam, space) for lam in lams]
    gram = np.array([[a.inner(b) for b in fs] for a in fs])
    assert np.max(np.abs(gram - np.eye(len(fs)))) <= 1e-9


def test_general_inner_product_is_gram_determinant():
    # small window: direct summation over all configurations
    rng = np.random.default_rng(0)
    fam = Charlier(1.5)
    w = Window.half_line(9)
    space = configuration_space(fam, w, 2, support_cutoff=1e-300, core_cutoff=1e-300)
    assert space.size == math.comb(9, 2)
    for _ in range(5):
        h = rng.normal(size=(2, 9))
        k = rng.normal(size=(2, 9))
        lhs = f_general(h, space).inner(f_general(k, space))
        rhs = cofactor_det([[float(h[i] @ k[j]) for j in range(2)] for i in range(2)])
        assert abs(lhs - rhs) <= 1e-9 * max(1.0, abs(rhs))


def test_f_function_errors(charlier_setup):
    _, sys, space = charlier_setup
    with pytest.raises(DomainError):
        f_function(sys, (1, 1, 1), space)
    with pytest.raises(PrecisionError):
        f_function(sys, (sys.count,), space)


def test_f_symmetric_in_configuration(charlier_setup):
    # F_lambda depends only on the set of points: evaluate directly in every order
    _, sys, space = charlier_setup
    f = f_function(sys, (2, 1), space)
    lw = build_weight(CHARLIER, W40)
    Z = math.exp(0.5 * log_normalization(CHARLIER, W40, 2))
    for row in (5, 40, 200):
        x = space.positions[row]
        for order in itertools.permutations(x):
            pts = W40.points[list(order)]
            p = [sys.values[3][i] * math.exp(-0.5 * lw[i]) for i in order], [sys.values[1][i] * math.exp(-0.5 * lw[i]) for i in order]
            det = p[0][0] * p[1][1] - p[0][1] * p[1][0]
            v = pts[0] - pts[1]
            assert Z * det / v == pytest.approx(f.values[row], rel=1e-9, abs=1e-12)


# ---- energies and phases ---------------------------------------------------

def test_phase_examples():
    assert unitary_phase(CHARLIER, (), 3, 1.7) == 1
    assert abs(unitary_phase(CHARLIER, (1,), 2, 0.9) - cmath.exp(-0.9j)) <= 1e-15
    assert m_lambda(CHARLIER, (1,), 2) - m_lambda(CHARLIER, (), 2) == -1


@given(st.lists(st.integers(1, 9), max_size=5), st.integers(0, 4))
def test_frobenius_identity_exact(parts, extra):
    lam = Partition(sorted(parts, reverse=True))
    N = len(lam) + extra
    for fam, name, params in [
        (Charlier(1.0), "charlier", (1,)),
        (Meixner(1.5, 0.25), "meixner", (Fraction(3, 2), Fraction(1, 4))),
        (AskeyLesky(30.5, 30.75, 30.25, 30.875), None, None),
    ]:
        if isinstance(fam, AskeyLesky) and 2 * N + 1 >= fam.total:
            continue
        lhs = m_lambda(fam, lam, N, exact=True) - m_lambda(fam, (), N, exact=True)
        assert isinstance(lhs, Fraction)
        assert lhs == frobenius_energy(fam, lam, N)
        if name:
            ref = sum(exact_m(name, params, lam.part(i) + N - i) - exact_m(name, params, N - i) for i in range(1, N + 1))
            assert lhs == ref


# ---- birth-death kernel and P_t -------------------------------------------

def test_birth_death_kernel(charlier_setup):
    op, _, _ = charlier_setup
    g = birth_death_kernel(op, 0.5)
    assert np.max(np.abs(g - taylor_expm(0.5 * op.generator()))) <= 1e-12
    assert g.min() >= 0 and np.max(g.sum(axis=1)) <= 1 + 1e-12
    spectral = birth_death_kernel(op, 0.5, method="spectral")
    lw = build_weight(CHARLIER, W40)
    ok = np.abs(lw[None, :] - lw[:, None]) < 20
    assert np.max(np.abs(g - spectral)[ok]) <= 1e-9
    with pytest.raises(DomainError):
        birth_death_kernel(op, -0.1)
    with pytest.raises(ValidationError):
        birth_death_kernel(op, 0.1, method="pade")


def test_identity_at_zero(charlier_setup):
    op, _, space = charlier_setup
    p = transition_matrix(op, 2, 0.0, space)
    assert np.array_equal(p.entries, np.eye(space.size))


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_markov_property(charlier_setup, t):
    op, _, space = charlier_setup
    p = transition_matrix(op, 2, t, space)
    assert p.min_entry() >= -1e-12
    assert p.row_sum_deviation() <= 1e-8
    assert p.invariance_residual() <= 1e-8
    assert p.detailed_balance_residual() <= 1e-8


def test_semigroup(charlier_setup):
    op, _, space = charlier_setup
    a = transition_matrix(op, 2, 0.1, space).entries
    b = transition_matrix(op, 2, 0.2, space).entries
    c = transition_matrix(op, 2, 0.3, space).entries
    core = space.core
    assert np.max(np.abs((a @ b - c)[core])) <= 1e-8


@pytest.mark.parametrize(
    "fam,w,N",
    [
        (Meixner(1.5, 0.3), Window.half_line(80), 2),
        (Charlier(1.0), Window.half_line(30), 3),
        (AskeyLesky(20.3, 20.6, 20.2, 20.7), Window(-22, 22), 2),
        (AskeyLesky(45.3, 45.6, 45.2, 45.7), Window(-40, 39), 2),
    ],
    ids=["meixner", "charlier-N3", "askey-lesky", "askey-lesky-wide"],
)
def test_markov_property_other_families(fam, w, N):
    op = build_hypergeometric_D(fam, w)
    space = configuration_space(fam, w, N)
    for t in (0.1, 0.7):
        p = transition_matrix(op, N, t, space)
        assert p.min_entry() >= -1e-12
        assert p.row_sum_deviation() <= 1e-8
        assert p.invariance_residual() <= 1e-8
        assert p.detailed_balance_residual() <= 1e-8


@pytest.mark.parametrize("t", [0.0, 0.1, 1.0])
def test_exterior_route_agrees(charlier_setup, t):
    op, _, space = charlier_setup
    a = transition_matrix(op, 2, t, space, method="uniformization").entries
    b = transition_matrix(op, 2, t, space, method="exterior").entries
    assert np.max(np.abs(a - b)[space.core]) <= 1e-9


def test_truncation_error():
    w = Window.half_line(8)
    op = build_hypergeometric_D(Charlier(3.0), w)
    with pytest.raises(TruncationError):
        transition_matrix(op, 2, 1.0)
    with pytest.raises(DomainError):
        transition_matrix(op, 2, -1.0)


def test_eigen_relation(charlier_setup):
    op, sys, space = charlier_setup
    p = transition_matrix(op, 2, 0.5, space)
    assert eigen_check(p, f_function(sys, (), space), CHARLIER) <= 1e-8
    assert eigen_check(p, f_function(sys, (1,), space), CHARLIER) <= 1e-7
    for lam in [(2,), (1, 1), (3,), (2, 1)]:
        assert eigen_check(p, f_function(sys, lam, space), CHARLIER) <= 1e-7


def test_spectral_consistency():
    w = W40
    op = build_hypergeometric_D(CHARLIER, w)
    sys = orthonormal_system(CHARLIER, w)
    space = configuration_space(CHARLIER, w, 2)
    t = 1.0
    L = 17
    bound = spectral_tail_bound(CHARLIER, 2, t, L)
    assert bound < 1e-6
    p = transition_matrix(op, 2, t, space).entries
    q = spectral_transition_matrix(sys, space, t, L)
    core = space.core
    # |F_lambda(x) F_lambda(y) M(y)| <= sqrt(M(y) / M(x)) on the core rows
    ratio = np.sqrt(space.mass[None, :] / space.mass[:, None])
    assert np.max((np.abs(p - q) / np.maximum(ratio, 1.0))[np.ix_(core, core)]) <= bound + 1e-9


def test_generator_agreement(charlier_setup):
    op, sys, space = charlier_setup
    for lam in [(), (1,), (2,), (1, 1)]:
        assert generator_residual(op, f_function(sys, lam, space)) <= 1e-5


# ---- Monte Carlo -----------------------------------------------------------

def _compare(res, p_row, space):
    idx = [space.index_of(y) for y in res.targets]
    expected = p_row[idx]
    z = np.abs(res.estimate - expected) / np.where(res.stderr > 0, res.stderr, np.inf)
    expected_counts = expected / res.factor * res.trials
    return z, expected_counts


def test_mc_single_particle():
    w = Window.half_line(30)
    op = build_hypergeometric_D(CHARLIER, w)
    g = birth_death_kernel(op, 0.6)
    res = km_monte_carlo(op, (2,), 0.6, 50_000, seed=3)
    assert res.survivors == res.trials or res.survivors > 0.999 * res.trials
    z = np.abs(res.estimate - g[2, [t[0] for t in res.targets]]) / res.stderr
    assert z.max() <= 4.0


def test_mc_two_particles():
    op = build_hypergeometric_D(CHARLIER, W40)
    space = configuration_space(CHARLIER, W40, 2)
    p = transition_matrix(op, 2, 0.3, space)
    res = km_monte_carlo(op, (0, 1), 0.3, 100_000, seed=5)
    z, n_exp = _compare(res, p.entries[space.index_of((0, 1))], space)
    keep = n_exp >= 10
    assert keep.sum() >= 5
    assert z[keep].max() <= 4.0


def test_mc_determinism_and_workers():
    op = build_hypergeometric_D(CHARLIER, Window.half_line(20))
    a = km_monte_carlo(op, (0, 2), 0.2, 3000, seed=1, block=1000)
    b = km_monte_carlo(op, (0, 2), 0.2, 3000, seed=1, block=1000, workers=3)
    assert a.targets == b.targets and np.array_equal(a.counts, b.counts)
    c = km_monte_carlo(op, (0, 2), 0.2, 3000, seed=2, block=1000)
    assert not (a.targets == c.targets and np.array_equal(a.counts, c.counts))
    js = a.to_json()
    assert js["trials"] == 3000 and js["entries"][0].keys() == {"entry", "estimate", "stderr"}


def test_mc_errors():
    op = build_hypergeometric_D(CHARLIER, Window.half_line(6))
    with pytest.raises(DomainError):
        km_monte_carlo(op, (1, 1), 0.2, 10, seed=0)
    with pytest.raises(StatisticsError):
        km_monte_carlo(op, (4, 5), 50.0, 20, seed=0)
