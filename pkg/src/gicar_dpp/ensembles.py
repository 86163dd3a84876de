"""Orthogonal polynomial ensembles of hypergeometric type on a lattice window.

A weight family supplies (sigma, tau) with Delta[sigma w] = tau w.  From it
we build orthonormal functions p_n = p~_n sqrt(w) / ||p~_n||, the rank-N
Christoffel-Darboux projection kernel, ensemble probabilities and an exact
sampler.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, gammasgn, logsumexp, loggamma

from .errors import DomainError, ParameterError, PrecisionError, ValidationError
from .lattice_partitions import Configuration, LatticeKind, Window

__all__ = [
    "PairType",
    "validate_pair",
    "zmeasure_pair_ok",
    "WeightFamily",
    "Meixner",
    "Charlier",
    "AskeyLesky",
    "family_from_config",
    "build_weight",
    "pearson_residual",
    "eigenvalue_m",
    "tail_certificate",
    "auto_window",
    "OrthonormalSystem",
    "orthonormal_system",
    "reliable_count",
    "ProjectionKernel",
    "cd_kernel",
    "configuration_positions",
    "log_vandermonde_sq",
    "ensemble_log_masses",
    "log_normalization",
    "normalization",
    "ensemble_mass",
    "correlation",
    "sample",
    "sample_many",
    "kernel_csv",
]

GRAM_TOL = 1e-8
TAIL_TOL = 1e-14
BOUNDARY_TOL = 1e-12


class PairType(str, Enum):
    PRINCIPAL = "principal"
    COMPLEMENTARY = "complementary"
    INVALID = "invalid"


def validate_pair(z, zp) -> PairType:
    """Classify (z, z') so that (z+k)(z'+k) > 0 for all integers k iff valid."""
    z, zp = complex(z), complex(zp)
    if z.imag != 0.0 or zp.imag != 0.0:
        if z.imag != 0.0 and zp.imag != 0.0 and zp == z.conjugate():
            return PairType.PRINCIPAL
        return PairType.INVALID
    a, b = z.real, zp.real
    k = math.floor(a)
    if a != k and b != math.floor(b) and math.floor(b) == k:
        return PairType.COMPLEMENTARY
    return PairType.INVALID


def zmeasure_pair_ok(z, zp) -> bool:
    """Principal, complementary, or degenerate: real with (z+k)(z'+k) >= 0 for all integers k.

    Degenerate pairs (for instance z = 2, z' = 3) still give a probability
    measure on partitions; some weights simply vanish.
    """
    if validate_pair(z, zp) is not PairType.INVALID:
        return True
    z, zp = complex(z), complex(zp)
    if z.imag != 0.0 or zp.imag != 0.0:
        return False
    a, b = sorted((z.real, zp.real))
    # the sign of (a+k)(b+k) can only change for -b <= k <= -a
    ks = range(math.floor(-b) - 1, math.ceil(-a) + 2)
    return all((a + k) * (b + k) >= 0 for k in ks)


def _pair_product(z, zp, x):
    """(z + x)(z' + x) as a real array; imaginary part vanishes for valid pairs."""
    return np.real((complex(z) + x) * (complex(zp) + x))


class WeightFamily:
    """Common interface; subclasses define sigma, tau and the log weight."""

    name: str = ""
    kind: LatticeKind = LatticeKind.HALF
    offset: float = 0.0

    def sigma(self, x):
        raise NotImplementedError

    def tau(self, x):
        raise NotImplementedError

    def log_weight(self, x):
        raise NotImplementedError

    # exact polynomial coefficients as Fractions
    def sigma2(self) -> Fraction:
        raise NotImplementedError

    def tau1(self) -> Fraction:
        raise NotImplementedError

    def check_rank(self, N: int) -> None:
        """Raise if rank N is not admissible for these parameters."""

    def birth(self, x):
        return self.sigma(x) + self.tau(x)

    def death(self, x):
        return self.sigma(x)

    def params(self) -> dict:
        raise NotImplementedError

    def to_config(self) -> dict:
        out = {}
        for k, v in self.params().items():
            v = complex(v)
            out[k] = v.real if v.imag == 0 else [v.real, v.imag]
        return {"family": self.name, "params": out}


@dataclass(frozen=True)
class Meixner(WeightFamily):
    beta: float
    xi: float
    name = "meixner"
    kind = LatticeKind.HALF

    def __post_init__(self):
        if not (self.beta > 0):
            raise ParameterError(f"Meixner needs beta > 0, got {self.beta}")
        if not (0 < self.xi < 1):
            raise ParameterError(f"Meixner needs xi in (0, 1), got {self.xi}")

    def sigma(self, x):
        return np.asarray(x, dtype=float)

    def tau(self, x):
        return -(1 - self.xi) * np.asarray(x, dtype=float) + self.beta * self.xi

    def birth(self, x):
        return self.xi * (np.asarray(x, dtype=float) + self.beta)

    def log_weight(self, x):
        x = np.asarray(x, dtype=float)
        return gammaln(self.beta + x) - gammaln(self.beta) + x * math.log(self.xi) - gammaln(x + 1)

    def sigma2(self):
        return Fraction(0)

    def tau1(self):
        return -(1 - Fraction(self.xi))

    def params(self):
        return {"beta": self.beta, "xi": self.xi}


@dataclass(frozen=True)
class Charlier(WeightFamily):
    mu: float
    name = "charlier"
    kind = LatticeKind.HALF

    def __post_init__(self):
        if not (self.mu > 0):
            raise ParameterError(f"Charlier needs mu > 0, got {self.mu}")

    def sigma(self, x):
        return np.asarray(x, dtype=float)

    def tau(self, x):
        return self.mu - np.asarray(x, dtype=float)

    def birth(self, x):
        return np.full(np.shape(x), float(self.mu))

    def log_weight(self, x):
        x = np.asarray(x, dtype=float)
        return -self.mu + x * math.log(self.mu) - gammaln(x + 1)

    def sigma2(self):
        return Fraction(0)

    def tau1(self):
        return Fraction(-1)

    def params(self):
        return {"mu": self.mu}


@dataclass(frozen=True)
class AskeyLesky(WeightFamily):
    u: complex
    up: complex
    w: complex
    wp: complex
    name = "askey-lesky"
    kind = LatticeKind.FULL

    def __post_init__(self):
        for a, b, label in ((self.u, self.up, "(u, u')"), (self.w, self.wp, "(w, w')")):
            if validate_pair(a, b) is PairType.INVALID:
                raise ParameterError(f"{label} = ({a}, {b}) is neither principal nor complementary")
        for f in ("u", "up", "w", "wp"):
            v = complex(getattr(self, f))
            object.__setattr__(self, f, v.real if v.imag == 0 else v)

    @property
    def total(self) -> float:
        """u + u' + w + w' (real for admissible pairs)."""
        return float(np.real(complex(self.u) + complex(self.up) + complex(self.w) + complex(self.wp)))

    def check_rank(self, N: int) -> None:
        if not self.total > 2 * N + 1:
            raise ParameterError(f"u+u'+w+w' = {self.total} must exceed 2N+1 = {2 * N + 1}")

    def sigma(self, x):
        return _pair_product(self.w, self.wp, np.asarray(x, dtype=float))

    def tau(self, x):
        x = np.asarray(x, dtype=float)
        c = complex(self.u) * complex(self.up) - complex(self.w) * complex(self.wp)
        return -self.total * x + c.real

    def birth(self, x):
        return _pair_product(-complex(self.u), -complex(self.up), np.asarray(x, dtype=float))

    @staticmethod
    def _log_gamma_pair(a, b, y):
        """log(Gamma(a+y) Gamma(b+y)) for a valid pair; the product is positive."""
        a, b = complex(a), complex(b)
        if a.imag != 0:
            return 2.0 * np.real(loggamma(a + y))
        s = gammasgn(a.real + y) * gammasgn(b.real + y)
        if np.any(s <= 0):
            raise ParameterError("gamma product is not positive on the window")
        return gammaln(a.real + y) + gammaln(b.real + y)

    def log_weight(self, x):
        x = np.asarray(x, dtype=float)
        return -(self._log_gamma_pair(self.u, self.up, 1 - x) + self._log_gamma_pair(self.w, self.wp, 1 + x))

    def sigma2(self):
        return Fraction(2)

    def tau1(self):
        s = sum(Fraction(complex(v).real) for v in (self.u, self.up, self.w, self.wp))
        return -s

    def params(self):
        return {"u": self.u, "u'": self.up, "w": self.w, "w'": self.wp}


def _parse_number(v):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ValidationError(f"complex numbers are [re, im], got {v}")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        try:
            c = complex(v.replace(" ", ""))
        except ValueError as exc:
            raise ValidationError(f"cannot parse number {v!r}") from exc
        return c.real if c.imag == 0 else c
    if isinstance(v, bool) or not isinstance(v, (int, float, complex)):
        raise ValidationError(f"not a number: {v!r}")
    return v


def family_from_config(name: str, params: dict) -> WeightFamily:
    name = str(name).lower().replace("_", "-")
    p = {k: _parse_number(v) for k, v in dict(params).items()}
    try:
        if name == "meixner":
            return Meixner(float(p["beta"]), float(p["xi"]))
        if name == "charlier":
            return Charlier(float(p["mu"]))
        if name in ("askey-lesky", "askeylesky"):
            return AskeyLesky(p["u"], p.get("u'", p.get("up")), p["w"], p.get("w'", p.get("wp")))
    except KeyError as exc:
        raise ValidationError(f"missing parameter {exc} for family {name}") from exc
    except TypeError as exc:
        raise ValidationError(f"bad parameter for family {name}: {exc}") from exc
    raise ValidationError(f"unknown family {name!r}")


def _check_window(family: WeightFamily, window: Window) -> None:
    if window.kind != family.kind or window.offset != family.offset:
        raise ValidationError(f"{family.name} lives on a {family.kind.value} lattice with offset {family.offset}")


def build_weight(family: WeightFamily, window: Window) -> np.ndarray:
    """log w(x) at every window point."""
    _check_window(family, window)
    return family.log_weight(window.points)


def pearson_residual(family: WeightFamily, window: Window) -> float:
    """max relative |Delta[sigma w] - tau w| / w over interior points."""
    x = window.points
    logw = family.log_weight(x)
    x0 = x[:-1]
    ratio = np.exp(logw[1:] - logw[:-1])
    lhs = family.sigma(x0 + 1) * ratio - family.sigma(x0)
    rhs = family.tau(x0)
    scale = np.maximum.reduce([np.abs(family.sigma(x0)), np.abs(rhs), np.ones_like(x0)])
    return float(np.max(np.abs(lhs - rhs) / scale)) if len(x0) else 0.0


def eigenvalue_m(family: WeightFamily, n: int, exact: bool = False):
    """m_n = tau' n + sigma'' n (n - 1) / 2."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    m = family.tau1() * n + family.sigma2() * n * (n - 1) / 2
    return m if exact else float(m)


def tail_certificate(family: WeightFamily, window: Window, N: int) -> tuple[float, float]:
    """(outside mass / inside mass, largest boundary term |x^n sigma w| / inside mass).

    The outside mass is summed over a long extension of the window; for the
    power-law Askey-Lesky tails an integral bound covers the remainder.
    """
    _check_window(family, window)
    logw = family.log_weight(window.points)
    log_inside = logsumexp(logw)
    ext = max(2000, 4 * window.size)
    sides = [np.arange(window.hi + 1, window.hi + 1 + ext, dtype=float) + window.offset]
    if family.kind == LatticeKind.FULL:
        sides.append(np.arange(window.lo - ext, window.lo, dtype=float) + window.offset)
    parts = []
    for pts in sides:
        lw = family.log_weight(pts)
        parts.append(logsumexp(lw))
        if isinstance(family, AskeyLesky):
            far = pts[-1] if pts[-1] > window.hi else pts[0]
            far_lw = lw[-1] if pts[-1] > window.hi else lw[0]
            s = family.total
            parts.append(far_lw + math.log(abs(far) + 1.0) - math.log(max(s - 1.0, 1e-300)))
    outside = float(np.exp(logsumexp(parts) - log_inside))

    edges = [window.points[-1]] if family.kind == LatticeKind.HALF else [window.points[0], window.points[-1]]
    worst = 0.0
    for xe in edges:
        sig = abs(float(family.sigma(np.array([xe]))[0]))
        if sig == 0.0:
            continue
        lw = float(family.log_weight(np.array([xe]))[0])
        for n in range(2 * N):
            term = (abs(xe) ** n if xe != 0 else (1.0 if n == 0 else 0.0)) * sig
            if term > 0:
                worst = max(worst, math.exp(math.log(term) + lw - log_inside))
    return outside, worst


def auto_window(family: WeightFamily, N: int, start: int = 16, max_size: int = 100_000) -> Window:
    """Smallest grown window whose tail and boundary terms meet the certificate."""
    family.check_rank(N)
    if family.kind == LatticeKind.HALF:
        size = start
        while size <= max_size:
            w = Window.half_line(size, family.offset)
            out, bnd = tail_certificate(family, w, N)
            if out < TAIL_TOL and bnd < BOUNDARY_TOL:
                return w
            size = int(size * 1.25) + 1
    else:
        probe = np.arange(-2000, 2001, dtype=float) + family.offset
        centre = int(probe[int(np.argmax(family.log_weight(probe)))] - family.offset)
        half = start // 2
        while 2 * half + 1 <= max_size:
            w = Window(centre - half, centre + half, family.offset, LatticeKind.FULL)
            out, bnd = tail_certificate(family, w, N)
            if out < TAIL_TOL and bnd < BOUNDARY_TOL:
                return w
            half = int(half * 1.25) + 1
    raise PrecisionError("no window up to the size limit satisfies the tail certificate")


@dataclass(frozen=True, eq=False)
class OrthonormalSystem:
    family: WeightFamily
    window: Window
    values: np.ndarray  # values[n, i] = p_n(point i)
    log_norms: np.ndarray  # log ||p~_n|| in L^2(w)
    alpha: np.ndarray  # recurrence: x P_n = beta_{n+1} P_{n+1} + alpha_n P_n + beta_n P_{n-1}
    beta: np.ndarray
    gram_residual: float
    eigen_residuals: np.ndarray

    @property
    def count(self) -> int:
        return self.values.shape[0]

    @property
    def norms(self) -> np.ndarray:
        return np.exp(self.log_norms)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([eigenvalue_m(self.family, n) for n in range(self.count)])

    def polynomials(self, x, upto: int | None = None) -> np.ndarray:
        """p~_n(x) / ||p~_n|| at arbitrary points, rows n = 0..upto-1."""
        upto = self.count if upto is None else upto
        if upto > self.count:
            raise DomainError(f"only {self.count} polynomials available")
        x = np.asarray(x, dtype=float)
        out = np.zeros((upto,) + x.shape)
        if upto == 0:
            return out
        out[0] = math.exp(-self.log_norms[0])
        for n in range(upto - 1):
            nxt = (x - self.alpha[n]) * out[n]
            if n > 0:
                nxt -= self.beta[n] * out[n - 1]
            out[n + 1] = nxt / self.beta[n + 1]
        return out


def _d_action(family: WeightFamily, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Symmetric difference operator with Dirichlet truncation, applied to rows of v."""
    lam = family.birth(x)
    mu = family.death(x)
    off = np.sqrt(np.clip(mu[1:] * lam[:-1], 0.0, None))
    out = -(lam + mu) * v
    out[..., :-1] += off * v[..., 1:]
    out[..., 1:] += off * v[..., :-1]
    return out


def _stieltjes(family: WeightFamily, window: Window, count: int):
    x = window.points
    logw = family.log_weight(x)
    log_mass = logsumexp(logw)
    M = len(x)
    q = np.zeros((count, M))
    alpha = np.zeros(count)
    beta = np.zeros(count)
    log_norms = np.zeros(count)
    q[0] = np.exp(0.5 * (logw - log_mass))
    log_norms[0] = 0.5 * log_mass
    for n in range(count - 1):
        v = x * q[n]
        alpha[n] = q[n] @ v
        v -= alpha[n] * q[n]
        if n > 0:
            v -= beta[n] * q[n - 1]
        v -= q[: n + 1].T @ (q[: n + 1] @ v)
        b = float(np.linalg.norm(v))
        if not b > 0:
            raise PrecisionError(f"recurrence broke down at index {n + 1}")
        q[n + 1] = v / b
        beta[n + 1] = b
        log_norms[n + 1] = log_norms[n] + math.log(b)
    if count:
        alpha[count - 1] = q[count - 1] @ (x * q[count - 1])
    return q, alpha, beta, log_norms


def _recurrence_values(family: WeightFamily, window: Window, alpha, beta, log_norms) -> np.ndarray:
    """p_n on the window regenerated from the three-term recurrence alone."""
    x = window.points
    count = len(alpha)
    poly = np.zeros((count, len(x)))
    if count == 0:
        return poly
    poly[0] = math.exp(-log_norms[0])
    for n in range(count - 1):
        nxt = (x - alpha[n]) * poly[n]
        if n > 0:
            nxt -= beta[n] * poly[n - 1]
        poly[n + 1] = nxt / beta[n + 1]
    return poly * np.exp(0.5 * family.log_weight(x))


def _moment_cap(family: WeightFamily) -> int | None:
    """Askey-Lesky weights decay like |x|^{-s}; p_n exists only while 2n < s - 1."""
    if isinstance(family, AskeyLesky):
        return max(0, math.ceil((family.total - 1) / 2))
    return None


def _reliability(family, window, values) -> tuple[int, float, np.ndarray]:
    count = values.shape[0]
    gram = np.abs(values @ values.T - np.eye(count))
    lead = np.array([gram[: n + 1, : n + 1].max() for n in range(count)])
    bad = np.nonzero(lead > GRAM_TOL)[0]
    first = int(bad[0]) if len(bad) else count
    cap = _moment_cap(family)
    if cap is not None:
        first = min(first, cap)
    m = np.array([eigenvalue_m(family, n) for n in range(count)])
    eig = np.abs(_d_action(family, window.points, values) - m[:, None] * values).max(axis=1) if count else np.zeros(0)
    return first, float(lead[first - 1]) if first else 0.0, eig


def reliable_count(family: WeightFamily, window: Window, limit: int | None = None) -> int:
    """Largest n such that p_0..p_{n-1} have Gram residual at most 1e-8."""
    _check_window(family, window)
    limit = window.size if limit is None else min(limit, window.size)
    _, alpha, beta, log_norms = _stieltjes(family, window, limit)
    values = _recurrence_values(family, window, alpha, beta, log_norms)
    return _reliability(family, window, values)[0]


def orthonormal_system(family: WeightFamily, window: Window, count: int | None = None) -> OrthonormalSystem:
    """p_0..p_{count-1} on the window via the Stieltjes procedure.

    Recurrence coefficients come from a Lanczos sweep over the discrete
    measure with one re-orthogonalization pass; the functions are then
    regenerated from the recurrence.  Index n is reliable while the Gram
    residual of p_0..p_n stays at most 1e-8 (and, for Askey-Lesky, while
    the weight has the moments p_n needs).  ``count=None`` returns every
    reliable function; an explicit count beyond that raises.
    """
    _check_window(family, window)
    limit = window.size if count is None else count
    if limit > window.size:
        raise PrecisionError(f"index {window.size} exceeds the window size; cannot build {count} functions")
    _, alpha, beta, log_norms = _stieltjes(family, window, limit)
    values = _recurrence_values(family, window, alpha, beta, log_norms)
    first, gram_res, eig = _reliability(family, window, values)
    if count is not None and first < count:
        raise PrecisionError(
            f"orthonormal function {first} is unreliable on window [{window.lo}, {window.hi}] "
            f"(only {first} of {count} pass)"
        )
    n = first
    values = values[:n].copy()
    values.flags.writeable = False
    return OrthonormalSystem(family, window, values, log_norms[:n], alpha[:n], beta[:n], gram_res, eig[:n])


@dataclass(frozen=True, eq=False)
class ProjectionKernel:
    matrix: np.ndarray
    rank: int
    window: Window

    def diagonal(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def projector_residual(self) -> float:
        k = self.matrix
        return float(np.max(np.abs(k @ k - k))) if k.size else 0.0

    def value(self, x: float, y: float) -> float:
        i = self.window.position(self.window.index_of(x))
        j = self.window.position(self.window.index_of(y))
        return float(self.matrix[i, j])


def cd_kernel(sys: OrthonormalSystem, N: int) -> ProjectionKernel:
    if N > sys.count:
        raise PrecisionError(f"rank {N} exceeds the reliable count {sys.count}")
    sys.family.check_rank(N)
    p = sys.values[:N]
    k = p.T @ p
    return ProjectionKernel(0.5 * (k + k.T), N, sys.window)


def configuration_positions(size: int, N: int, limit: int = 5_000_000) -> np.ndarray:
    """All N-subsets of range(size) as rows, lexicographic."""
    total = math.comb(size, N)
    if total > limit:
        raise DomainError(f"{total} configurations exceed the enumeration limit {limit}")
    if N == 0:
        return np.zeros((1, 0), dtype=int)
    flat = np.fromiter(itertools.chain.from_iterable(itertools.combinations(range(size), N)), dtype=int, count=total * N)
    return flat.reshape(total, N)


def log_vandermonde_sq(points: np.ndarray) -> np.ndarray:
    """sum_{i<j} 2 log|x_i - x_j| along the last axis (-inf on coincidences)."""
    points = np.asarray(points, dtype=float)
    n = points.shape[-1]
    out = np.zeros(points.shape[:-1])
    with np.errstate(divide="ignore"):
        for i in range(n):
            for j in range(i + 1, n):
                out = out + 2.0 * np.log(np.abs(points[..., i] - points[..., j]))
    return out


def _unnormalized(family, window, N):
    family.check_rank(N)
    logw = build_weight(family, window)
    pos = configuration_positions(window.size, N)
    pts = window.points[pos]
    return pos, log_vandermonde_sq(pts) + logw[pos].sum(axis=1)


@lru_cache(maxsize=64)
def log_normalization(family: WeightFamily, window: Window, N: int) -> float:
    """log Z = log sum_omega V^2(omega) prod w(x), by enumeration."""
    _, lm = _unnormalized(family, window, N)
    return float(logsumexp(lm))


def normalization(family: WeightFamily, window: Window, N: int) -> float:
    return math.exp(log_normalization(family, window, N))


def ensemble_log_masses(family: WeightFamily, window: Window, N: int) -> tuple[np.ndarray, np.ndarray]:
    """(positions of every N-configuration, log probability of each)."""
    pos, lm = _unnormalized(family, window, N)
    return pos, lm - log_normalization(family, window, N)


def ensemble_mass(family: WeightFamily, window: Window, N: int, omega) -> float:
    if isinstance(omega, Configuration):
        pts = omega.points
    else:
        pts = np.sort(np.asarray(omega, dtype=float))
    if len(pts) != N:
        raise DomainError(f"configuration has {len(pts)} points, expected {N}")
    for p in pts:
        window.position(window.index_of(p))
    logw = family.log_weight(pts)
    lm = float(log_vandermonde_sq(pts)) + float(np.sum(logw)) - log_normalization(family, window, N)
    return math.exp(lm)


def correlation(kernel: ProjectionKernel, points) -> float:
    """det[K(x_i, x_j)], zero when a point repeats."""
    pts = [float(p) for p in points]
    if len(set(pts)) < len(pts):
        return 0.0
    w = kernel.window
    pos = [w.position(w.index_of(p)) for p in pts]
    if not pos:
        return 1.0
    sub = kernel.matrix[np.ix_(pos, pos)]
    sign, logdet = np.linalg.slogdet(sub)
    return float(sign * math.exp(logdet)) if sign != 0 else 0.0


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))


def _sample_positions(k: np.ndarray, n: int, rng: np.random.Generator) -> list[int]:
    chosen = []
    for remaining in range(n, 0, -1):
        p = np.clip(np.diag(k), 0.0, None)
        cdf = np.cumsum(p)
        u = rng.random() * cdf[-1]
        i = int(np.searchsorted(cdf, u, side="right"))
        i = min(i, len(p) - 1)
        while p[i] == 0.0 and i > 0:  # never land on an impossible point
            i -= 1
        chosen.append(i)
        if remaining > 1:
            col = k[:, i].copy()
            k = k - np.outer(col, col) / col[i]
    return sorted(chosen)


def _check_projection(kernel: ProjectionKernel, tol: float = 1e-8) -> None:
    res = kernel.projector_residual()
    tr = float(np.trace(kernel.matrix))
    if res > tol or abs(tr - kernel.rank) > tol:
        raise ValidationError(f"kernel is not a rank-{kernel.rank} projection (residual {res:.2e}, trace {tr})")


def sample(kernel: ProjectionKernel, seed: int, stream: int = 0) -> Configuration:
    """One configuration of the projection DPP, chain rule with Schur complements."""
    _check_projection(kernel)
    rng = _rng(seed, stream)
    pos = _sample_positions(np.array(kernel.matrix, dtype=float), kernel.rank, rng)
    w = kernel.window
    return Configuration(tuple(w.lo + p for p in pos), w)


def sample_many(kernel: ProjectionKernel, count: int, seed: int, stream: int = 0) -> np.ndarray:
    """count samples from one stream, as rows of window positions."""
    _check_projection(kernel)
    rng = _rng(seed, stream)
    k0 = np.array(kernel.matrix, dtype=float)
    out = np.empty((count, kernel.rank), dtype=int)
    for s in range(count):
        out[s] = _sample_positions(k0, kernel.rank, rng)
    return out


def kernel_csv(kernel: ProjectionKernel) -> str:
    pts = kernel.window.points
    lines = ["x,y,K"]
    for i, x in enumerate(pts):
        for j, y in enumerate(pts):
            lines.append(f"{x:.17g},{y:.17g},{kernel.matrix[i, j]:.17g}")
    return "\n".join(lines) + "\n"
