"""z-measures on Young diagrams and the Markov jump dynamics preserving them.

M(lambda) = (1 - xi)^{z z'} xi^{|lambda|} (z)_lambda (z')_lambda (dim lambda / |lambda|!)^2.

The functions MM_lambda are eigenfunctions of the jump generator Q with
eigenvalue -|lambda|.  Rational parameters are evaluated in exact
arithmetic; complex parameters fall back to floating point.
"""

from __future__ import annotations

import decimal
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Rational

import numpy as np

from .ensembles import ProjectionKernel, zmeasure_pair_ok
from .errors import DomainError, ParameterError, StatisticsError, ValidationError
from .lattice_partitions import Partition, Window, embed_partition, partitions_up_to
from .operators import build_zmeasure_operator, spectral_projection

__all__ = [
    "ZParams",
    "DiagramFunction",
    "dim_partition",
    "skew_dim",
    "pochhammer_lambda",
    "box_factor",
    "z_mass",
    "z_mass_exact",
    "log_z_mass",
    "mass_table",
    "size_marginal",
    "tail_mass",
    "zmeasure_kernel",
    "kernel_diagonal_by_enumeration",
    "fs_function",
    "m_function",
    "m_value",
    "truncated_inner",
    "q_generator",
    "q_row",
    "q_apply",
    "sample_partitions",
    "simulate_jump_chain",
    "JumpStatistics",
]


def _exact(x):
    """Keep ints and Fractions exact; everything else becomes float or complex."""
    if isinstance(x, (bool, np.bool_)):
        raise ValidationError("boolean parameter")
    if isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, (complex, np.complexfloating)):
        c = complex(x)
        return c.real if c.imag == 0 else c
    return float(x)


@dataclass(frozen=True)
class ZParams:
    z: object
    zp: object
    xi: object

    def __post_init__(self):
        object.__setattr__(self, "z", _exact(self.z))
        object.__setattr__(self, "zp", _exact(self.zp))
        object.__setattr__(self, "xi", _exact(self.xi))
        if isinstance(self.xi, complex) or not 0 < self.xi < 1:
            raise ParameterError(f"xi must lie in (0, 1), got {self.xi}")
        if not zmeasure_pair_ok(complex(self.z), complex(self.zp)):
            raise ParameterError(f"(z, z') = ({self.z}, {self.zp}) gives negative masses")

    @property
    def exact(self) -> bool:
        return all(isinstance(v, Fraction) for v in (self.z, self.zp, self.xi))

    @property
    def zzp(self):
        """z z' as a real number."""
        v = self.z * self.zp
        return v.real if isinstance(v, complex) else v

    def to_json(self) -> dict:
        def enc(v):
            if isinstance(v, complex):
                return [v.real, v.imag]
            return float(v)

        return {"z": enc(self.z), "zp": enc(self.zp), "xi": float(self.xi)}


@dataclass(frozen=True, eq=False)
class DiagramFunction:
    """Values on every partition of size at most ``cutoff``."""

    values: dict
    cutoff: int

    def __call__(self, lam):
        lam = Partition(lam)
        if lam.size > self.cutoff:
            raise DomainError(f"|lambda| = {lam.size} beyond the cutoff {self.cutoff}")
        return self.values[lam]


@lru_cache(maxsize=None)
def _dim(lam: Partition) -> int:
    n = lam.size
    conj = lam.conjugate()
    hooks = 1
    for i, j in lam.boxes():
        hooks *= lam[i - 1] - j + conj[j - 1] - i + 1
    return math.factorial(n) // hooks


def dim_partition(lam) -> int:
    """Number of standard tableaux, by the hook length formula."""
    return _dim(Partition(lam))


@lru_cache(maxsize=None)
def _skew(lam: Partition, mu: Partition) -> int:
    if lam == mu:
        return 1
    if lam.size <= mu.size:
        return 0
    total = 0
    for r in lam.removable_rows():
        smaller = lam.remove_box(r)
        if smaller.contains(mu):
            total += _skew(smaller, mu)
    return total


def skew_dim(lam, mu) -> int:
    """Standard tableaux of shape lam/mu by corner removal; 0 unless mu is inside lam."""
    lam, mu = Partition(lam), Partition(mu)
    if not lam.contains(mu):
        return 0
    if not mu:
        return _dim(lam)
    return _skew(lam, mu)


def box_factor(p: ZParams, content: int):
    """(z + c)(z' + c), real for admissible pairs."""
    v = (p.z + content) * (p.zp + content)
    return v.real if isinstance(v, complex) else v


def pochhammer_lambda(z, lam, mu=()) -> tuple[float, int]:
    """(z)_{lam/mu} = prod over boxes of lam/mu of (z + content), as (log|.|, sign).

    Complex z returns (log value as complex, 1).
    """
    lam, mu = Partition(lam), Partition(mu)
    if not lam.contains(mu):
        raise DomainError("mu is not contained in lam")
    zc = complex(z)
    if zc.imag != 0:
        total = 0j
        for i in range(1, len(lam) + 1):
            for j in range(mu.part(i) + 1, lam.part(i) + 1):
                total += np.log(zc + j - i)
        return complex(total), 1
    logabs, sign = 0.0, 1
    for i in range(1, len(lam) + 1):
        for j in range(mu.part(i) + 1, lam.part(i) + 1):
            f = zc.real + j - i
            if f == 0:
                return -math.inf, 0
            logabs += math.log(abs(f))
            sign = -sign if f < 0 else sign
    return logabs, sign


def _pair_pochhammer(p: ZParams, lam: Partition, mu: Partition = Partition()):
    """(z)_{lam/mu} (z')_{lam/mu} in the parameters' own arithmetic."""
    out = Fraction(1) if p.exact else 1.0
    for i in range(1, len(lam) + 1):
        for j in range(mu.part(i) + 1, lam.part(i) + 1):
            out *= box_factor(p, j - i)
    return out


def log_z_mass(p: ZParams, lam) -> float:
    """log M(lambda); -inf where a box factor vanishes."""
    lam = Partition(lam)
    n = lam.size
    total = float(p.zzp) * math.log1p(-float(p.xi)) + n * math.log(float(p.xi))
    for i, j in lam.boxes():
        f = float(box_factor(p, j - i))
        if f <= 0:
            if f < 0:
                raise ParameterError("negative box factor")
            return -math.inf
        total += math.log(f)
    total += 2 * (math.log(_dim(lam)) - math.lgamma(n + 1))
    return total


def z_mass(p: ZParams, lam) -> float:
    return math.exp(log_z_mass(p, lam))


def z_mass_exact(p: ZParams, lam) -> Fraction | None:
    """M(lambda) as a Fraction when the parameters are rational and zz' is a nonnegative integer."""
    if not p.exact or p.zzp.denominator != 1 or p.zzp < 0:
        return None
    lam = Partition(lam)
    n = lam.size
    return (1 - p.xi) ** int(p.zzp) * p.xi**n * _pair_pochhammer(p, lam) * Fraction(_dim(lam), math.factorial(n)) ** 2


def mass_table(p: ZParams, cutoff: int) -> dict:
    return {lam: z_mass(p, lam) for lam in partitions_up_to(cutoff)}


def size_marginal(p: ZParams, n: int) -> float:
    """P(|lambda| = n) = (1 - xi)^{zz'} (zz')_n xi^n / n!, a negative binomial law."""
    a = float(p.zzp)
    if a == 0:
        return 1.0 if n == 0 else 0.0
    logv = a * math.log1p(-float(p.xi)) + n * math.log(float(p.xi)) - math.lgamma(n + 1)
    logv += math.lgamma(a + n) - math.lgamma(a)
    return math.exp(logv)


def tail_mass(p: ZParams, cutoff: int) -> float:
    """P(|lambda| > cutoff), summed from the marginal with a geometric remainder bound."""
    total = 0.0
    n = cutoff + 1
    a, xi = float(p.zzp), float(p.xi)
    while True:
        term = size_marginal(p, n)
        total += term
        ratio = xi * (a + n) / (n + 1)  # successive term ratio, decreasing in n once below 1
        if ratio < 0.5 and term < 1e-30 * max(total, 1e-300):
            return total + term * ratio / (1 - ratio)
        n += 1
        if n > cutoff + 100_000:
            raise StatisticsError("marginal tail did not converge")


def zmeasure_kernel(p: ZParams, window: Window) -> ProjectionKernel:
    """Spectral projection of the z-measure operator onto its positive eigenvalues."""
    op = build_zmeasure_operator(p.z, p.zp, float(p.xi), window)
    return spectral_projection(op, 0.0)


def kernel_diagonal_by_enumeration(p: ZParams, window: Window, cutoff: int) -> np.ndarray:
    """sum over |lambda| <= cutoff of M(lambda) [x in {lambda_i - i + 1/2}] for every window point."""
    out = np.zeros(window.size)
    for lam in partitions_up_to(cutoff):
        m = z_mass(p, lam)
        if m == 0:
            continue
        idx = np.asarray(embed_partition(lam, window).indices) - window.lo
        out[idx] += m
    return out


def _falling(n: int, k: int) -> int:
    out = 1
    for i in range(k):
        out *= n - i
    return out


@lru_cache(maxsize=None)
def _fs_value(mu: Partition, lam: Partition) -> Fraction:
    if not lam.contains(mu):
        return Fraction(0)
    return Fraction(_falling(lam.size, mu.size) * skew_dim(lam, mu), _dim(lam))


def fs_function(mu, cutoff: int) -> DiagramFunction:
    """FS_mu(lambda) = |lambda|^{falling |mu|} dim(lambda/mu) / dim(lambda), exact."""
    mu = Partition(mu)
    return DiagramFunction({lam: _fs_value(mu, lam) for lam in partitions_up_to(cutoff)}, cutoff)


def _m_coefficients(p: ZParams, lam: Partition) -> list:
    """(mu, coefficient of FS_mu) for every mu inside lambda."""
    ratio = -p.xi / (1 - p.xi)
    out = []
    for mu in lam.subpartitions():
        k = lam.size - mu.size
        c = ratio**k * Fraction(skew_dim(lam, mu), math.factorial(k))
        c = c * _pair_pochhammer(p, lam, mu)
        out.append((mu, c))
    return out


def m_value(p: ZParams, lam, nu):
    """MM_lam(nu) = sum over mu in lam of (-xi/(1-xi))^{|lam/mu|} dim(lam/mu)/|lam/mu|! (z)(z')_{lam/mu} FS_mu(nu)."""
    lam, nu = Partition(lam), Partition(nu)
    return sum((c * _fs_value(mu, nu) for mu, c in _m_coefficients(p, lam)), Fraction(0) if p.exact else 0.0)


def m_function(p: ZParams, lam, cutoff: int) -> DiagramFunction:
    lam = Partition(lam)
    if cutoff < lam.size:
        raise DomainError("cutoff below |lambda|")
    coeffs = _m_coefficients(p, lam)
    zero = Fraction(0) if p.exact else 0.0
    vals = {nu: sum((c * _fs_value(mu, nu) for mu, c in coeffs), zero) for nu in partitions_up_to(cutoff)}
    return DiagramFunction(vals, cutoff)


def _m_growth_bound(p: ZParams, lam: Partition, n: int) -> float:
    """Upper bound for |MM_lam| on partitions of size n, using FS_mu <= n^{falling |mu|}."""
    return sum(abs(float(c)) * _falling(n, mu.size) for mu, c in _m_coefficients(p, lam))


INNER_DIGITS = 60


def _dec(x: Fraction) -> decimal.Decimal:
    return decimal.Decimal(x.numerator) / decimal.Decimal(x.denominator)


@lru_cache(maxsize=None)
def _decimal_masses(p: ZParams, cutoff: int) -> dict:
    with decimal.localcontext() as ctx:
        ctx.prec = INNER_DIGITS
        return {k: _dec(z_mass_exact(p, k)) for k in partitions_up_to(cutoff)}


def truncated_inner(p: ZParams, f: DiagramFunction, g: DiagramFunction, lam=None, nu=None) -> tuple[float, float]:
    """Sum of f g M over |kappa| <= cutoff, and a bound on the omitted part.

    With rational masses the sum runs in 60-digit decimal arithmetic, so
    rounding sits far below any tail bound.

    The bound needs the labels of MM functions (``lam``/``nu``); without them
    it is reported as nan.
    """
    cutoff = min(f.cutoff, g.cutoff)
    shapes = partitions_up_to(cutoff)
    if z_mass_exact(p, ()) is not None and all(isinstance(h.values[Partition()], Fraction) for h in (f, g)):
        with decimal.localcontext() as ctx:
            ctx.prec = INNER_DIGITS
            masses = _decimal_masses(p, cutoff)
            total = float(sum(_dec(f.values[k]) * _dec(g.values[k]) * masses[k] for k in shapes))
    else:
        total = math.fsum(float(f.values[k]) * float(g.values[k]) * z_mass(p, k) for k in shapes)
    if lam is None or nu is None:
        return total, math.nan
    lam, nu = Partition(lam), Partition(nu)
    tail = 0.0
    n = cutoff + 1
    while True:
        term = size_marginal(p, n) * _m_growth_bound(p, lam, n) * _m_growth_bound(p, nu, n)
        tail += term
        if term < 1e-30 * max(tail, 1e-300) or (term == 0 and n > cutoff + 10):
            break
        n += 1
        if n > cutoff + 5000:
            raise StatisticsError("tail bound did not converge")
    return total, tail


def _up_rate(p: ZParams, lam: Partition, nu: Partition, row: int):
    """xi (z)_{nu/lam} (z')_{nu/lam} dim nu / ((|lam| + 1) dim lam) / (1 - xi)."""
    content = nu.part(row) - row
    one = Fraction(1) if p.exact else 1.0
    return p.xi * box_factor(p, content) * one * _dim(nu) / ((lam.size + 1) * _dim(lam)) / (1 - p.xi)


def _down_rate(p: ZParams, lam: Partition, nu: Partition):
    # the displayed formula has dim(nu)/dim(nu); dim(nu)/dim(lam) is what makes Q conservative
    one = Fraction(1) if p.exact else 1.0
    return one * lam.size * _dim(nu) / _dim(lam) / (1 - p.xi)


@lru_cache(maxsize=None)
def _row(p: ZParams, lam: Partition) -> tuple:
    out = []
    for r in lam.addable_rows():
        nu = lam.add_box(r)
        out.append((nu, _up_rate(p, lam, nu, r)))
    for r in lam.removable_rows():
        nu = lam.remove_box(r)
        out.append((nu, _down_rate(p, lam, nu)))
    # diagonal: minus the off-diagonal total, which equals ((1 + xi)|lam| + xi z z') / (1 - xi)
    diag = -sum((v for _, v in out), Fraction(0) if p.exact else 0.0)
    return tuple(out) + ((lam, diag),)


def q_row(p: ZParams, lam) -> dict:
    """Nonzero entries Q(lam, .) as a dict."""
    return dict(_row(p, Partition(lam)))


def q_generator(p: ZParams, lam, nu):
    lam, nu = Partition(lam), Partition(nu)
    return q_row(p, lam).get(nu, Fraction(0) if p.exact else 0.0)


def q_apply(p: ZParams, f, lam):
    """(Q f)(lam) for f a DiagramFunction or a callable on partitions."""
    return sum((rate * f(nu) for nu, rate in _row(p, Partition(lam))), Fraction(0) if p.exact else 0.0)


def sample_partitions(p: ZParams, cutoff: int, count: int, seed: int, stream: int = 0) -> list[Partition]:
    """Draws from M restricted to |lambda| <= cutoff and renormalized."""
    table = [(lam, z_mass(p, lam)) for lam in partitions_up_to(cutoff)]
    labels = [lam for lam, _ in table]
    w = np.array([m for _, m in table])
    cdf = np.cumsum(w / w.sum())
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))
    picks = np.searchsorted(cdf, rng.random(count), side="right")
    picks = np.minimum(picks, len(labels) - 1)
    return [labels[i] for i in picks]


@dataclass(frozen=True, eq=False)
class JumpStatistics:
    time: float
    trials: int
    finals: list  # Partition per trial

    def empirical(self) -> dict:
        out: dict = {}
        for lam in self.finals:
            out[lam] = out.get(lam, 0) + 1
        return {lam: c / self.trials for lam, c in out.items()}

    def mean(self, f) -> tuple[float, float]:
        """Sample mean of f(final state) and its standard error."""
        vals = np.array([float(f(lam)) for lam in self.finals])
        se = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else math.nan
        return float(vals.mean()), float(se)


@lru_cache(maxsize=None)
def _jump_table(p: ZParams, lam: Partition):
    moves = [(nu, float(r)) for nu, r in _row(p, lam) if nu != lam and r > 0]
    total = math.fsum(r for _, r in moves)
    cum = np.cumsum([r for _, r in moves]) if moves else np.zeros(0)
    return [nu for nu, _ in moves], cum, total


def simulate_jump_chain(p: ZParams, start, t: float, trials: int, seed: int, stream: int = 0) -> JumpStatistics:
    """Exponential-clock jump chain with rates Q; ``start`` is one partition or a list of them."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    if trials <= 0:
        raise ValidationError("trials must be positive")
    if isinstance(start, list):
        if len(start) != trials:
            raise ValidationError("one start state per trial")
        starts = [Partition(s) for s in start]
    else:
        starts = [Partition(start)] * trials
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(stream), 1]))
    finals = []
    for lam in starts:
        clock = 0.0
        while True:
            targets, cum, total = _jump_table(p, lam)
            if total <= 0:
                break
            clock += rng.exponential(1.0 / total)
            if clock > t:
                break
            k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            lam = targets[min(k, len(targets) - 1)]
        finals.append(lam)
    return JumpStatistics(float(t), trials, finals)
