"""Unitary and Markov dynamics on N-point orthogonal polynomial ensembles.

The eigenfunctions are F_lambda = Z^{1/2} det[P_{lambda_i+N-i}(x_j)] / V(x),
P_n being the orthonormal polynomials.  The Markov semigroup is the
Doob h-transform, by the Vandermonde, of N independent birth-death chains
killed on collision:

    P_t(x, y) = e^{-t m_0} V(y) / V(x) det[G_t(x_i, y_j)].
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .ensembles import (
    OrthonormalSystem,
    WeightFamily,
    configuration_positions,
    eigenvalue_m,
    log_normalization,
    log_vandermonde_sq,
)
from .errors import DomainError, PrecisionError, StatisticsError, TruncationError, ValidationError
from .lattice_partitions import Partition, Window, frobenius_coordinates, partitions
from .operators import DifferenceOperator

__all__ = [
    "ConfigurationSpace",
    "configuration_space",
    "EnsembleFunction",
    "f_function",
    "f_general",
    "m_lambda",
    "frobenius_energy",
    "unitary_phase",
    "birth_death_kernel",
    "TransitionMatrix",
    "transition_matrix",
    "eigen_check",
    "spectral_transition_matrix",
    "spectral_tail_bound",
    "generator_residual",
    "KMResult",
    "km_monte_carlo",
]

CORE_CUTOFF = 1e-14
SUPPORT_CUTOFF = 1e-30
ROW_SUM_FAIL = 1e-6
AUTO_EXTERIOR = 1e-6


@dataclass(frozen=True, eq=False)
class ConfigurationSpace:
    """N-point configurations of a window, ordered lexicographically.

    ``core`` flags configurations with mass at least 1e-14 of the largest;
    all checks are reported on these.  The space itself keeps everything
    down to 1e-30 so that transitions out of the core are not lost.
    """

    family: WeightFamily
    window: Window
    N: int
    positions: np.ndarray  # (C, N) window positions, rows increasing
    log_mass: np.ndarray  # normalized over the whole window
    core: np.ndarray  # bool mask

    @property
    def size(self) -> int:
        return len(self.positions)

    @cached_property
    def points(self) -> np.ndarray:
        return self.window.points[self.positions]

    @cached_property
    def mass(self) -> np.ndarray:
        return np.exp(self.log_mass)

    @cached_property
    def log_vandermonde(self) -> np.ndarray:
        """0.5 * log V(x)^2."""
        return 0.5 * log_vandermonde_sq(self.points)

    def index_of(self, config) -> int:
        """Row of a configuration given as window indices."""
        pos = tuple(sorted(self.window.position(int(i)) for i in config))
        hit = np.nonzero((self.positions == np.array(pos)).all(axis=1))[0]
        if not len(hit):
            raise DomainError(f"configuration {tuple(config)} is not in the space")
        return int(hit[0])

    def labels(self) -> list[list[int]]:
        return [[int(self.window.lo + p) for p in row] for row in self.positions]


def configuration_space(
    family: WeightFamily, window: Window, N: int, core_cutoff: float = CORE_CUTOFF, support_cutoff: float = SUPPORT_CUTOFF
) -> ConfigurationSpace:
    family.check_rank(N)
    pos = configuration_positions(window.size, N)
    logw = family.log_weight(window.points)
    lm = log_vandermonde_sq(window.points[pos]) + logw[pos].sum(axis=1) - log_normalization(family, window, N)
    top = lm.max()
    keep = lm >= top + math.log(support_cutoff)
    core = lm[keep] >= top + math.log(core_cutoff)
    return ConfigurationSpace(family, window, N, pos[keep], lm[keep], core)


@dataclass(frozen=True, eq=False)
class EnsembleFunction:
    space: ConfigurationSpace
    values: np.ndarray
    label: Partition | None = None

    def inner(self, other: "EnsembleFunction") -> float:
        """<f, g> in L^2(M) over the space."""
        return float(np.sum(self.values * other.values * self.space.mass))

    def norm(self) -> float:
        return math.sqrt(self.inner(self))


def _sign_vandermonde(N: int) -> float:
    # V = prod_{i<j}(x_i - x_j) over increasing points
    return -1.0 if (N * (N - 1) // 2) % 2 else 1.0


def _det_over_vandermonde(rows: np.ndarray, space: ConfigurationSpace) -> np.ndarray:
    """det[rows[i, x_j]] / V(x) for every configuration; rows has shape (N, window)."""
    N = space.N
    mats = rows[:, space.positions]  # (N, C, N)
    mats = np.transpose(mats, (1, 0, 2))
    dets = np.linalg.det(mats) if N else np.ones(space.size)
    return dets * _sign_vandermonde(N) * np.exp(-space.log_vandermonde)


def f_general(hs: np.ndarray, space: ConfigurationSpace) -> EnsembleFunction:
    """F_{h_1..h_N}(x) = Z^{1/2} det[h_i(x_j)] / (prod sqrt(w(x_j)) V(x))."""
    hs = np.asarray(hs, dtype=float)
    if hs.shape != (space.N, space.window.size):
        raise ValidationError(f"need {space.N} functions on {space.window.size} points")
    logw = space.family.log_weight(space.window.points)
    scaled = hs * np.exp(-0.5 * logw)
    vals = math.exp(0.5 * log_normalization(space.family, space.window, space.N)) * _det_over_vandermonde(scaled, space)
    return EnsembleFunction(space, vals)


def f_function(sys: OrthonormalSystem, lam, space: ConfigurationSpace) -> EnsembleFunction:
    """F_lambda built from p_{lambda_i + N - i}, evaluated through the polynomials."""
    lam = Partition(lam)
    N = space.N
    if len(lam) > N:
        raise DomainError(f"partition {list(lam)} has more than N={N} rows")
    idx = [lam.part(i) + N - i for i in range(1, N + 1)]
    if idx and idx[0] >= sys.count:
        raise PrecisionError(f"index {idx[0]} exceeds the reliable count {sys.count}")
    polys = sys.polynomials(space.window.points, idx[0] + 1 if idx else 0)
    rows = polys[idx] if idx else np.zeros((0, space.window.size))
    vals = math.exp(0.5 * log_normalization(space.family, space.window, N)) * _det_over_vandermonde(rows, space)
    return EnsembleFunction(space, vals, lam)


def m_lambda(family: WeightFamily, lam, N: int, exact: bool = False):
    """sum_i m_{lambda_i + N - i}."""
    lam = Partition(lam)
    if len(lam) > N:
        raise DomainError("partition longer than N")
    return sum((eigenvalue_m(family, lam.part(i) + N - i, exact) for i in range(1, N + 1)), Fraction(0) if exact else 0.0)


def frobenius_energy(family: WeightFamily, lam, N: int):
    """sum_i (m_{alpha_i + N} - m_{N - 1 - beta_i}), exact."""
    c = frobenius_coordinates(lam)
    total = Fraction(0)
    for a, b in zip(c.arms, c.legs):
        if N - 1 - b < 0:
            raise DomainError("leg longer than N - 1")
        total += eigenvalue_m(family, a + N, True) - eigenvalue_m(family, N - 1 - b, True)
    return total


def unitary_phase(family: WeightFamily, lam, N: int, t: float) -> complex:
    e = float(m_lambda(family, lam, N, True) - m_lambda(family, (), N, True))
    return cmath.exp(1j * t * e)


def birth_death_kernel(op: DifferenceOperator, t: float, method: str = "uniformization") -> np.ndarray:
    """G_t(x, y) of the (killed) birth-death chain on the window.

    ``uniformization`` sums a nonnegative series and keeps relative accuracy
    in tiny entries; ``spectral`` uses sqrt(w(y)/w(x)) e^{tD}(x, y) from the
    eigendecomposition, whose absolute rounding error the gauge factor can
    blow up by many orders of magnitude.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    if method == "uniformization":
        return op.markov_semigroup(t)
    if method == "spectral":
        lw = op.log_weight
        return np.exp(0.5 * (lw[None, :] - lw[:, None])) * op.semigroup(t)
    raise ValidationError(f"unknown method {method!r}")


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    space: ConfigurationSpace
    time: float
    entries: np.ndarray

    def row_sum_deviation(self) -> float:
        core = self.space.core
        return float(np.max(np.abs(self.entries[core].sum(axis=1) - 1.0)))

    def min_entry(self) -> float:
        return float(self.entries[self.space.core].min())

    def invariance_residual(self) -> float:
        """max over core targets of |sum_x M(x) P(x, y) - M(y)|."""
        m = self.space.mass
        return float(np.max(np.abs(m @ self.entries - m)[self.space.core]))

    def detailed_balance_residual(self) -> float:
        m = self.space.mass
        flux = m[:, None] * self.entries
        c = self.space.core
        return float(np.max(np.abs(flux - flux.T)[np.ix_(c, c)]))

    def apply(self, f: EnsembleFunction) -> np.ndarray:
        return self.entries @ f.values

    def to_csv(self) -> str:
        labels = self.space.labels()
        core = np.nonzero(self.space.core)[0]
        lines = ["source,target,value"]
        for a in core:
            src = " ".join(map(str, labels[a]))
            for b in range(self.space.size):
                lines.append(f"{src},{' '.join(map(str, labels[b]))},{self.entries[a, b]:.17g}")
        return "\n".join(lines) + "\n"


def _km_determinants(g: np.ndarray, src: np.ndarray, dst: np.ndarray, block: int = 256) -> np.ndarray:
    """det[g(x_i, y_j)] for every (source row, target row)."""
    N = src.shape[1]
    out = np.empty((len(src), len(dst)))
    if N == 1:
        return g[np.ix_(src[:, 0], dst[:, 0])]
    if N == 2:
        a = g[np.ix_(src[:, 0], dst[:, 0])] * g[np.ix_(src[:, 1], dst[:, 1])]
        b = g[np.ix_(src[:, 0], dst[:, 1])] * g[np.ix_(src[:, 1], dst[:, 0])]
        return a - b
    for s in range(0, len(src), block):
        xs = src[s : s + block]
        mats = g[xs[:, None, :, None], dst[None, :, None, :]]
        out[s : s + block] = np.linalg.det(mats)
    return out


def _exterior_modes(eigenvalues: np.ndarray, N: int, t: float, floor: float) -> tuple[list[tuple], np.ndarray]:
    """N-subsets L of the spectrum with e^{t(m_L - m_top)} >= floor, m_L the eigenvalue sum."""
    ev = np.asarray(eigenvalues)  # descending
    top = float(ev[:N].sum())
    budget = math.log(floor) / t if t > 0 else -math.inf
    out: list[tuple] = []
    vals: list[float] = []

    def rec(start: int, acc: list[int], total: float):
        k = len(acc)
        if k == N:
            out.append(tuple(acc))
            vals.append(total - top)
            return
        for j in range(start, len(ev) - (N - k) + 1):
            # best completion uses the next N - k eigenvalues
            best = total + float(ev[j : j + N - k].sum())
            if best - top < budget:
                break
            rec(j + 1, acc + [j], total + float(ev[j]))

    rec(0, [], 0.0)
    return out, np.array(vals)


def _exterior_entries(op: DifferenceOperator, space: ConfigurationSpace, t: float, floor: float = 1e-30) -> np.ndarray:
    """Cauchy-Binet form of the h-transform.

    det[e^{tD}(x_i, y_j)] = sum_L e^{t m_L} det[phi_L(x)] det[phi_L(y)], with
    phi the orthonormal eigenvectors of the symmetric D.  Every term carries
    e^{t(m_L - m_top)} <= 1, so no cancellation against e^{-t m_top} occurs.
    """
    eig = op.eigen
    modes, gaps = _exterior_modes(eig.eigenvalues, space.N, t, floor)
    vecs = eig.eigenvectors
    pos = space.positions
    N = space.N
    phi = np.empty((space.size, len(modes)))
    cols = np.array(modes)
    for s in range(0, len(modes), 512):
        c = cols[s : s + 512]
        mats = vecs[pos[:, :, None, None], c[None, None, :, :]]  # (C, N, B, N)
        phi[:, s : s + 512] = np.linalg.det(np.moveaxis(mats, 2, 1)) if N > 1 else mats[:, 0, :, 0]
    sym = (phi * np.exp(t * gaps)) @ phi.T
    lm = space.log_mass
    return np.exp(0.5 * (lm[None, :] - lm[:, None])) * sym


def transition_matrix(
    op: DifferenceOperator, N: int, t: float, space: ConfigurationSpace | None = None, method: str = "auto"
) -> TransitionMatrix:
    """P_t on the configuration space.

    ``uniformization`` and ``spectral`` take the determinant of G_t from
    :func:`birth_death_kernel`; ``exterior`` sums over N-subsets of the
    spectrum instead.  The determinant route cancels down to e^{t m_0}, so
    ``auto`` switches to ``exterior`` once that factor drops below 1e-6.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    if op.family is None or op.birth is None:
        raise ValidationError("transition matrices need a birth-death operator")
    if space is None:
        space = configuration_space(op.family, op.window, N)
    elif space.window != op.window or space.N != N:
        raise ValidationError("configuration space does not match the operator")
    m_empty = float(m_lambda(op.family, (), N, True))
    if method == "auto":
        method = "exterior" if t * m_empty < math.log(AUTO_EXTERIOR) else "uniformization"
    if method == "exterior":
        entries = _exterior_entries(op, space, t) if t > 0 else np.eye(space.size)
    else:
        g = birth_death_kernel(op, t, method)
        dets = _km_determinants(g, space.positions, space.positions)
        lv = space.log_vandermonde
        entries = math.exp(-t * m_empty) * np.exp(lv[None, :] - lv[:, None]) * dets
    pt = TransitionMatrix(space, float(t), entries)
    dev = np.abs(entries[space.core].sum(axis=1) - 1.0)
    if dev.size and dev.max() > ROW_SUM_FAIL:
        worst = np.nonzero(space.core)[0][int(np.argmax(dev))]
        raise TruncationError(
            f"row {space.labels()[worst]} sums to 1 - {dev.max():.3e}; enlarge the window"
        )
    return pt


def eigen_check(p: TransitionMatrix, f: EnsembleFunction, family: WeightFamily) -> float:
    """|| P_t F - e^{t(m_lambda - m_0)} F || / || F || in L^2(M) over core rows."""
    if f.label is None:
        raise ValidationError("eigen_check needs a labelled F_lambda")
    N = p.space.N
    e = float(m_lambda(family, f.label, N, True) - m_lambda(family, (), N, True))
    core = p.space.core
    m = p.space.mass[core]
    r = (p.apply(f) - math.exp(p.time * e) * f.values)[core]
    return math.sqrt(float(np.sum(m * r * r)) / float(np.sum(m * f.values[core] ** 2)))


def _partitions_bounded(n: int, N: int):
    return partitions(n, N)


def spectral_tail_bound(family: WeightFamily, N: int, t: float, L: int, max_size: int = 400) -> float:
    """sum over |lambda| > L, length <= N, of e^{t (m_lambda - m_0)}."""
    m0 = float(m_lambda(family, (), N, True))
    total = 0.0
    for n in range(L + 1, max_size + 1):
        level = sum(math.exp(t * (float(m_lambda(family, lam, N, True)) - m0)) for lam in _partitions_bounded(n, N))
        total += level
        if level < 1e-18 * max(total, 1e-300) and n > L + 5:
            break
    return total


def spectral_transition_matrix(sys: OrthonormalSystem, space: ConfigurationSpace, t: float, L: int) -> np.ndarray:
    """sum over |lambda| <= L of e^{t(m_lambda - m_0)} F_lambda(x) F_lambda(y) M(y)."""
    fam = space.family
    N = space.N
    m0 = float(m_lambda(fam, (), N, True))
    out = np.zeros((space.size, space.size))
    for n in range(L + 1):
        for lam in _partitions_bounded(n, N):
            f = f_function(sys, lam, space).values
            e = float(m_lambda(fam, lam, N, True)) - m0
            out += math.exp(t * e) * np.outer(f, f * space.mass)
    return out


def generator_residual(
    op: DifferenceOperator, f: EnsembleFunction, h0: float = 0.04, levels: int = 4, space: ConfigurationSpace | None = None
) -> float:
    """Richardson-extrapolated (P_h F - F)/h against (m_lambda - m_0) F, relative L^2(M) on the core."""
    space = f.space if space is None else space
    N = space.N
    fam = op.family
    e = float(m_lambda(fam, f.label, N, True) - m_lambda(fam, (), N, True))
    table = []
    for k in range(levels):
        h = h0 / 2**k
        p = transition_matrix(op, N, h, space)
        table.append((p.apply(f) - f.values) / h)
    # first-order error expansion in h, halving steps
    for j in range(1, levels):
        table = [(2**j * table[i + 1] - table[i]) / (2**j - 1) for i in range(len(table) - 1)]
    est = table[0]
    core = space.core
    m = space.mass[core]
    r = (est - e * f.values)[core]
    return math.sqrt(float(np.sum(m * r * r)) / float(np.sum(m * f.values[core] ** 2)))


@dataclass(frozen=True, eq=False)
class KMResult:
    start: tuple[int, ...]
    time: float
    trials: int
    survivors: int
    targets: list[tuple[int, ...]]  # window indices
    counts: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    factor: np.ndarray  # e^{-t m_0} V(y)/V(x)

    def to_json(self) -> dict:
        return {
            "start": list(self.start),
            "t": self.time,
            "trials": self.trials,
            "survivors": self.survivors,
            "entries": [
                {"entry": list(y), "estimate": float(e), "stderr": float(s)}
                for y, e, s in zip(self.targets, self.estimate, self.stderr)
            ],
        }


def _simulate_block(birth, death, start_pos, t, trials, rng):
    """Vectorized Gillespie for independent particles; returns final positions and survival flags."""
    size = len(birth)
    N = len(start_pos)
    pos = np.tile(np.asarray(start_pos, dtype=int), (trials, 1))
    clock = np.zeros(trials)
    alive = np.ones(trials, dtype=bool)
    active = np.ones(trials, dtype=bool)
    while active.any():
        idx = np.nonzero(active)[0]
        p = pos[idx]
        rates = np.concatenate([birth[p], death[p]], axis=1)  # (k, 2N): births then deaths
        total = rates.sum(axis=1)
        stuck = total <= 0
        dt = rng.exponential(size=len(idx)) / np.where(stuck, 1.0, total)
        new_clock = clock[idx] + dt
        finished = stuck | (new_clock > t)
        active[idx[finished]] = False
        go = idx[~finished]
        if not len(go):
            continue
        clock[go] = new_clock[~finished]
        r = rates[~finished]
        cum = np.cumsum(r, axis=1)
        u = rng.random(len(go)) * cum[:, -1]
        ev = (cum > u[:, None]).argmax(axis=1)
        particle = ev % N
        step = np.where(ev < N, 1, -1)
        newp = pos[go, particle] + step
        pos[go, particle] = newp
        out = (newp < 0) | (newp >= size)  # left the window: killed
        pos[go[out], particle[out]] = np.clip(newp[out], 0, size - 1)
        coll = np.zeros(len(go), dtype=bool)
        pg = pos[go]
        for i in range(N):
            for j in range(i + 1, N):
                coll |= pg[:, i] == pg[:, j]
        dead = out | coll
        alive[go[dead]] = False
        active[go[dead]] = False
    return pos, alive


def km_monte_carlo(
    op: DifferenceOperator, start, t: float, trials: int, seed: int, block: int = 50_000, workers: int = 1
) -> KMResult:
    """Monte Carlo estimate of one row of P_t from non-colliding birth-death chains.

    Each surviving trajectory ending at y contributes e^{-t m_0} V(y)/V(x)
    divided by the number of trials.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    if op.family is None or op.birth is None:
        raise ValidationError("Monte Carlo needs a birth-death operator")
    w = op.window
    start = tuple(sorted(int(i) for i in start))
    if len(set(start)) != len(start):
        raise DomainError("start configuration has repeated points")
    start_pos = [w.position(i) for i in start]
    N = len(start)
    birth = np.asarray(op.birth, dtype=float)
    death = np.asarray(op.death, dtype=float)
    if trials <= 0:
        raise ValidationError("trials must be positive")

    def run(b: int) -> np.ndarray:
        n = min(block, trials - b * block)
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), b]))
        pos, alive = _simulate_block(birth, death, start_pos, t, n, rng)
        return np.sort(pos[alive], axis=1)

    nblocks = -(-trials // block)
    # each block owns its seed stream, so the result does not depend on the worker count
    if workers > 1 and nblocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            finals = list(pool.map(run, range(nblocks)))
    else:
        finals = [run(b) for b in range(nblocks)]
    survivors = sum(len(f) for f in finals)
    if survivors == 0:
        raise StatisticsError("no trajectory survived; use a smaller t or more trials")
    allpos = np.concatenate(finals)
    uniq, counts = np.unique(allpos, axis=0, return_counts=True)
    x = w.points[start_pos]
    y = w.points[uniq]
    lv_x = 0.5 * float(log_vandermonde_sq(x))
    lv_y = 0.5 * log_vandermonde_sq(y)
    m_empty = float(m_lambda(op.family, (), N, True))
    factor = np.exp(lv_y - lv_x - t * m_empty)
    frac = counts / trials
    est = factor * frac
    se = factor * np.sqrt(frac * (1 - frac) / trials)
    targets = [tuple(int(w.lo + p) for p in row) for row in uniq]
    return KMResult(start, float(t), int(trials), survivors, targets, counts, est, se, factor)
