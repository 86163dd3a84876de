"""Acceptance criteria 1-12, one test each.

Every test prints a single ``PASS``/``FAIL criterion N`` line; the same
lines are repeated in the terminal summary.  Runtime limits are part of
the criteria and are checked alongside the numerical bounds.
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from gicar_dpp.car_fock import (
    DoubledGNS,
    FockSpace,
    QuasiFreeState,
    cp_map,
    cp_map_sum,
    cyclic_subspace,
    expectation,
    gicar_spanning_words,
    hamiltonian,
    normal_word,
    predicted_spectrum,
)
from gicar_dpp.dynamics import (
    configuration_space,
    eigen_check,
    f_function,
    frobenius_energy,
    generator_residual,
    km_monte_carlo,
    m_lambda,
    transition_matrix,
)
from gicar_dpp.ensembles import AskeyLesky, Charlier, Meixner, build_weight, cd_kernel, correlation, orthonormal_system
from gicar_dpp.lattice_partitions import Partition, Window, partitions_up_to
from gicar_dpp.operators import (
    build_bessel_operator,
    build_hypergeometric_D,
    build_zmeasure_operator,
    hypergeometric_spectrum,
    zmeasure_spectrum,
)
from gicar_dpp.zmeasure import (
    ZParams,
    kernel_diagonal_by_enumeration,
    m_function,
    m_value,
    q_apply,
    q_row,
    sample_partitions,
    simulate_jump_chain,
    tail_mass,
    z_mass,
    zmeasure_kernel,
)

import acceptance_log
from oracles import (
    brute_force_masses,
    cofactor_det,
    exact_m,
    inclusion_probability,
    leading_eigenvalue_from_rates,
)


ROUNDING_FLOOR = 1e-13


class Checks:
    def __init__(self):
        self.items = []

    def le(self, name, value, bound):
        self.items.append((name, float(value), float(bound), float(value) <= float(bound)))

    def ge(self, name, value, bound):
        self.items.append((name, float(value), float(bound), float(value) >= float(bound)))

    def true(self, name, ok):
        self.items.append((name, 1.0 if ok else 0.0, 1.0, bool(ok)))

    @property
    def passed(self):
        return all(ok for *_, ok in self.items)

    def summary(self):
        bad = [f"{n}={v:.3g} (bound {b:.3g})" for n, v, b, ok in self.items if not ok]
        if bad:
            return "; ".join(bad)
        worst = {n: v for n, v, _, _ in self.items}
        return ", ".join(f"{n}={v:.3g}" for n, v in worst.items())


def criterion(number, limit_seconds):
    def wrap(fn):
        def run():
            start = time.perf_counter()
            checks = Checks()
            try:
                fn(checks)
            except Exception as exc:
                acceptance_log.record(number, False, f"raised {type(exc).__name__}: {exc}")
                raise
            elapsed = time.perf_counter() - start
            checks.le("runtime_s", elapsed, limit_seconds)
            acceptance_log.record(number, checks.passed, checks.summary())
            assert checks.passed, checks.summary()

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


def cvec(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


def unitary(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


# ---- 1 ---------------------------------------------------------------------

@criterion(1, 5)
def test_criterion_01_car_relations(checks):
    rng = np.random.default_rng(101)
    worst = 0.0
    for n in range(1, 7):
        f = FockSpace(n)
        eye = np.eye(f.dim)
        for _ in range(100):
            h, k = cvec(rng, n), cvec(rng, n)
            ch, ck = f.creation(h).toarray(), f.creation(k).toarray()
            ah, ak = f.annihilation(h).toarray(), f.annihilation(k).toarray()
            inner = np.sum(h * np.conj(k))
            worst = max(
                worst,
                np.abs(ch @ ak + ak @ ch - inner * eye).max(),
                np.abs(ah @ ak + ak @ ah).max(),
                np.abs(ch @ ck + ck @ ch).max(),
            )
    checks.le("max_anticommutator", worst, 1e-13)


# ---- 2 ---------------------------------------------------------------------

@criterion(2, 30)
def test_criterion_02_quasi_free_determinant(checks):
    rng = np.random.default_rng(202)
    worst, zero_branch = 0.0, 0
    for i in range(200):
        n = int(rng.integers(1, 5))
        u = unitary(rng, n)
        K = (u * rng.uniform(0, 1, n)) @ u.conj().T
        if i % 4 == 0:
            occ = rng.integers(0, 2, n).astype(float)
            K = (u * occ) @ u.conj().T
        gns = DoubledGNS(QuasiFreeState(K))
        m = int(rng.integers(0, 4))
        l = m if rng.random() < 0.7 else int(rng.integers(0, 4))
        hs = [cvec(rng, n) for _ in range(m)]
        ks = [cvec(rng, n) for _ in range(l)]
        got = gns.vacuum_expectation(normal_word(hs[::-1], ks))
        if m != l:
            want = 0.0
            zero_branch += 1
        else:
            want = cofactor_det([[np.sum((K @ h) * np.conj(k)) for k in ks] for h in hs]) if m else 1.0
        worst = max(worst, abs(got - want))
    checks.le("max_error", worst, 1e-11)
    checks.ge("zero_branch_words", zero_branch, 1)


# ---- 3 ---------------------------------------------------------------------

def _commuting(rng, n):
    u = unitary(rng, n)
    K = (u * rng.uniform(0, 1, n)) @ u.conj().T
    T = (u * (rng.uniform(0, 1, n) * np.exp(1j * rng.uniform(0, 2 * np.pi, n)))) @ u.conj().T
    return u, K, T


@criterion(3, 60)
def test_criterion_03_cp_map_invariance(checks):
    rng = np.random.default_rng(303)
    inv = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 5))
        _, K, T = _commuting(rng, n)
        state = QuasiFreeState(K)
        for _ in range(3):
            m, l = (int(x) for x in rng.integers(0, 3, size=2))
            word = normal_word([cvec(rng, n) for _ in range(m)], [cvec(rng, n) for _ in range(l)])
            inv = max(inv, abs(expectation(state, cp_map(state, T, word)) - expectation(state, [(1, word)])))
    checks.le("invariance", inv, 1e-11)

    semi = 0.0
    for trial in range(5):
        n = 3 + trial % 2
        u = unitary(rng, n)
        b = -rng.uniform(0.1, 2.0, n) + 1j * rng.uniform(-1, 1, n)
        Tt = lambda t: (u * np.exp(t * b)) @ u.conj().T  # noqa: E731
        state = QuasiFreeState((u * rng.uniform(0, 1, n)) @ u.conj().T)
        f = FockSpace(n)
        s, t = rng.uniform(0.05, 1.0, 2)
        for word in gicar_spanning_words(n, 2)[:15]:
            two = f.matrix(cp_map_sum(state, Tt(s), cp_map(state, Tt(t), word))).toarray()
            one = f.matrix(cp_map(state, Tt(s + t), word)).toarray()
            semi = max(semi, np.abs(two - one).max())
    checks.le("semigroup", semi, 1e-10)


# ---- 4 ---------------------------------------------------------------------

@criterion(4, 30)
def test_criterion_04_hamiltonian_spectrum(checks):
    rng = np.random.default_rng(404)
    n = 4
    worst = 0.0
    for m in (np.array([0.0, -1.0, -2.0, -3.0]), np.sort(-rng.uniform(0, 5, n))[::-1]):
        u = unitary(rng, n)
        occupied = [0, 1]
        gns = DoubledGNS(QuasiFreeState(u[:, occupied] @ u[:, occupied].conj().T))
        A = hamiltonian(gns, u, occupied, m).toarray()
        q = cyclic_subspace(gns)
        want = np.sort(predicted_spectrum(m, occupied))
        got = np.sort(np.linalg.eigvalsh(q.conj().T @ A @ q))
        checks.true("multiset_size", len(got) == len(want))
        if len(got) == len(want):
            worst = max(worst, np.abs(got - want).max())
    checks.le("max_eigenvalue_error", worst, 1e-9)


# ---- 5 ---------------------------------------------------------------------

@criterion(5, 60)
def test_criterion_05_correlations_vs_enumeration(checks):
    worst = 0.0
    for fam in (Charlier(1.0), Charlier(3.5), Meixner(1.5, 0.3), Meixner(2.0, 0.6)):
        w = Window.half_line(12)
        weights = list(np.exp(build_weight(fam, w)))
        for N in (1, 2, 3):
            kernel = cd_kernel(orthonormal_system(fam, w, N), N)
            configs, masses = brute_force_masses(list(w.points), weights, N)
            for order in range(1, 4):
                for pts in itertools.combinations(range(12), order):
                    ref = inclusion_probability(configs, masses, pts)
                    got = correlation(kernel, [float(p) for p in pts])
                    worst = max(worst, abs(got - ref))
    checks.le("max_error", worst, 1e-10)


# ---- 6 ---------------------------------------------------------------------

@pytest.mark.parametrize(
    "family,window",
    [
        (Charlier(1.0), Window.half_line(200)),
        (Meixner(1.5, 0.1), Window.half_line(200)),
        (AskeyLesky(45.3, 45.6, 45.2, 45.7), Window(-100, 99)),
    ],
    ids=["charlier", "meixner", "askey-lesky"],
)
def test_criterion_06_operator_spectra(family, window):
    start = time.perf_counter()
    checks = Checks()
    op = build_hypergeometric_D(family, window)
    count = window.size // 3
    matches = hypergeometric_spectrum(op, count)
    checks.true("all_levels_matched", len(matches) == count)
    checks.le("max_residual", max(m.residual for m in matches), 1e-8)
    checks.le("top_eigenvalue", op.eigen.eigenvalues[0], 1e-10)
    checks.le("runtime_s", time.perf_counter() - start, 10)
    _CRIT6[family.name] = checks
    if len(_CRIT6) == 3:
        ok = all(c.passed for c in _CRIT6.values())
        acceptance_log.record(6, ok, "; ".join(f"{k}: {c.summary()}" for k, c in _CRIT6.items()))
    assert checks.passed, checks.summary()


_CRIT6: dict = {}


# ---- 7 ---------------------------------------------------------------------

@criterion(7, 120)
def test_criterion_07_markov_semigroup(checks):
    fam = Charlier(1.0)
    w = Window.half_line(40)
    op = build_hypergeometric_D(fam, w)
    space = configuration_space(fam, w, 2)
    sys = orthonormal_system(fam, w)
    times = (0.1, 0.5, 1.0)
    P = {t: transition_matrix(op, 2, t, space) for t in times}
    core = space.core
    lams = [lam for lam in partitions_up_to(3) if len(lam) <= 2]
    fs = [f_function(sys, lam, space) for lam in lams]
    for t in times:
        p = P[t]
        checks.ge(f"min_entry_t{t}", p.min_entry(), -1e-12)
        checks.le(f"row_sum_t{t}", p.row_sum_deviation(), 1e-8)
        checks.le(f"invariance_t{t}", p.invariance_residual(), 1e-8)
        checks.le(f"eigen_t{t}", max(eigen_check(p, f, fam) for f in fs), 1e-7)
    semi = 0.0
    for s, t in itertools.combinations_with_replacement(times, 2):
        prod = P[s].entries @ P[t].entries
        semi = max(semi, np.abs(prod - transition_matrix(op, 2, s + t, space).entries)[core].max())
    checks.le("semigroup", semi, 1e-8)


# ---- 8 ---------------------------------------------------------------------

@criterion(8, 300)
def test_criterion_08_karlin_mcgregor(checks):
    fam = Charlier(3.0)
    w = Window.half_line(40)
    op = build_hypergeometric_D(fam, w)
    space = configuration_space(fam, w, 2)
    t, trials = 0.5, 100_000
    p = transition_matrix(op, 2, t, space)
    res = km_monte_carlo(op, (1, 5), t, trials, seed=11)
    row = p.entries[space.index_of((1, 5))]
    exact = np.array([row[space.index_of(y)] for y in res.targets])
    expected_counts = exact / res.factor * trials
    keep = expected_counts >= 10
    z = np.abs(res.estimate - exact)[keep] / res.stderr[keep]
    checks.ge("compared_entries", int(keep.sum()), 30)
    checks.le("max_abs_z", z.max(), 4.0)


# ---- 9 ---------------------------------------------------------------------

def _askey_lesky_rates(u, up, w, wp):
    u, up, w, wp = (Fraction(v) for v in (u, up, w, wp))
    return (lambda x: (x - u) * (x - up)), (lambda x: (x + w) * (x + wp))


@criterion(9, 5)
def test_criterion_09_frobenius_identity(checks):
    rng = np.random.default_rng(909)
    al_params = (30.5, 30.75, 30.25, 30.875)
    birth, death = _askey_lesky_rates(*al_params)
    families = [
        (Charlier(1.0), lambda n: exact_m("charlier", (1,), n)),
        (Meixner(1.5, 0.25), lambda n: exact_m("meixner", (Fraction(3, 2), Fraction(1, 4)), n)),
        (AskeyLesky(*al_params), lambda n: leading_eigenvalue_from_rates(birth, death, n)),
    ]
    mismatches = 0
    tested = 0
    for i in range(200):
        length = int(rng.integers(0, 6))
        lam = Partition(sorted(rng.integers(1, 12, size=length).tolist(), reverse=True))
        fam, ref_m = families[i % 3]
        N = len(lam) + int(rng.integers(0, 4))
        lhs = m_lambda(fam, lam, N, exact=True) - m_lambda(fam, (), N, exact=True)
        ref = sum(ref_m(lam.part(j) + N - j) - ref_m(N - j) for j in range(1, N + 1))
        tested += 1
        if not (isinstance(lhs, Fraction) and lhs == frobenius_energy(fam, lam, N) == ref):
            mismatches += 1
    checks.true("all_exact", mismatches == 0)
    checks.ge("partitions_tested", tested, 200)


# ---- 10 --------------------------------------------------------------------

@criterion(10, 600)
def test_criterion_10_zmeasure_suite(checks):
    exact = ZParams(2, 3, Fraction(1, 10))
    floats = ZParams(2.0, 3.0, 0.1)
    partial = math.fsum(z_mass(floats, lam) for lam in partitions_up_to(20))
    checks.ge("partial_mass", partial, 1 - 1e-6)

    w = Window.half_integer(-40.5, 40.5)
    kdiag = zmeasure_kernel(floats, w).diagonal()
    for level in (8, 12, 20):
        # partial sums approach K(x, x) from below; the tail bound is attained at some x
        gap = kdiag - kernel_diagonal_by_enumeration(floats, w, level)
        checks.ge(f"kernel_minus_enumeration_min_L{level}", gap.min(), -ROUNDING_FLOOR)
        checks.le(f"kernel_minus_enumeration_max_L{level}", gap.max(), tail_mass(floats, level) + ROUNDING_FLOOR)

    rows = max(abs(sum(q_row(floats, lam).values())) for lam in partitions_up_to(8))
    checks.le("q_row_sum", rows, 1e-12)
    checks.true("q_row_sum_exact", all(sum(q_row(exact, lam).values()) == 0 for lam in partitions_up_to(8)))

    eig = 0.0
    for mu in partitions_up_to(3):
        f = m_function(floats, mu, 6)
        for lam in partitions_up_to(5):
            eig = max(eig, abs(q_apply(floats, f, lam) + mu.size * f(lam)))
    checks.le("q_eigen", eig, 1e-8)

    n = 100_000
    starts = sample_partitions(floats, 20, n, seed=1001)
    stats = simulate_jump_chain(floats, starts, 0.5, n, seed=1002)
    emp = stats.empirical()
    norm = 1 - tail_mass(floats, 20)
    zmax = 0.0
    for lam in partitions_up_to(4):
        p = z_mass(floats, lam) / norm
        se = math.sqrt(p * (1 - p) / n)
        if se > 0:
            zmax = max(zmax, abs(emp.get(lam, 0.0) - p) / se)
        elif emp.get(lam, 0.0) != 0:
            zmax = math.inf
    checks.le("stationarity_max_z", zmax, 4.0)

    obs = lambda nu: float(m_value(floats, (1,), nu))  # noqa: E731
    start, t = Partition((2, 1)), 0.5
    mean, se = simulate_jump_chain(floats, start, t, n, seed=1003).mean(obs)
    checks.le("decay_z", abs(mean - math.exp(-t) * obs(start)) / se, 4.0)


# ---- 11 --------------------------------------------------------------------

@criterion(11, 10)
def test_criterion_11_zmeasure_operator(checks):
    xi = 0.02
    w = Window.half_integer(-40.5, 40.5)
    worst = 0.0
    for z, zp in [(2, 3), (2 + 0.5j, 2 - 0.5j), (1.3, 1.8)]:
        op = build_zmeasure_operator(z, zp, xi, w)
        matches = zmeasure_spectrum(op, xi, 20.5)
        checks.ge(f"levels_{z}", len(matches), 42)
        worst = max(worst, max(m.residual for m in matches))
    checks.le("max_residual", worst, 1e-6)

    bw = Window.half_integer(-8.5, 8.5)
    bessel = build_bessel_operator(1.0, bw)
    s = 1e4
    zop = build_zmeasure_operator(s, s, 1.0 / s**2, bw)
    err = max(
        np.abs(zop.matrix.diag - bessel.matrix.diag).max(),
        np.abs(zop.matrix.offdiag - bessel.matrix.offdiag).max(),
    )
    checks.le("bessel_entry_error", err, 1e-3)


# ---- 12 --------------------------------------------------------------------

@criterion(12, 60)
def test_criterion_12_generator_agreement(checks):
    for fam, w in [(Charlier(1.0), Window.half_line(40)), (Meixner(1.5, 0.3), Window.half_line(60))]:
        op = build_hypergeometric_D(fam, w)
        space = configuration_space(fam, w, 2)
        sys = orthonormal_system(fam, w)
        worst = max(generator_residual(op, f_function(sys, lam, space)) for lam in partitions_up_to(2))
        checks.le(f"{fam.name}_residual", worst, 1e-5)
