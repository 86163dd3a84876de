"""Dense numerical kernels: tridiagonal eigensystems, determinants, exponentials.

LAPACK (through scipy) does the heavy lifting; this module fixes the
ordering and sign conventions that the rest of the package relies on.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ValidationError

__all__ = [
    "SymTridiag",
    "EigenDecomposition",
    "sym_tridiag_eigen",
    "determinant",
    "exp_action",
    "markov_exp",
    "log_pochhammer",
    "SIGN_THRESHOLD",
]

# eigenvector sign is fixed by its last entry above this magnitude
SIGN_THRESHOLD = 1e-8


@dataclass(frozen=True, eq=False)
class SymTridiag:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float).copy()
        e = np.asarray(self.offdiag, dtype=float).copy()
        if d.ndim != 1 or e.ndim != 1 or len(d) < 1 or len(e) != len(d) - 1:
            raise ValidationError("need n >= 1 diagonal and n - 1 off-diagonal entries")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
            raise ValidationError("tridiagonal entries must be finite")
        d.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def n(self) -> int:
        return len(self.diag)

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def norm(self) -> float:
        """Infinity norm (equal to the 1-norm by symmetry)."""
        a = np.abs(self.diag).copy()
        a[:-1] += np.abs(self.offdiag)
        a[1:] += np.abs(self.offdiag)
        return float(a.max())

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # column j pairs with eigenvalues[j]

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


def _fix_signs(v: np.ndarray) -> np.ndarray:
    big = np.abs(v) > SIGN_THRESHOLD
    # last row index with a large entry, per column
    last = v.shape[0] - 1 - np.argmax(big[::-1, :], axis=0)
    signs = np.sign(v[last, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def sym_tridiag_eigen(t: SymTridiag) -> EigenDecomposition:
    """Full eigensystem, eigenvalues descending.

    Each eigenvector is oriented so that its entry at the largest lattice
    position with magnitude above ``SIGN_THRESHOLD`` is positive.  Exactly
    equal eigenvalues are ordered by the lexicographic order of their
    eigenvectors.
    """
    if t.n == 1:
        return EigenDecomposition(t.diag.copy(), np.ones((1, 1)))
    w, v = eigh_tridiagonal(t.diag, t.offdiag)
    v = _fix_signs(v)
    # primary key: -eigenvalue; then eigenvector entries in order
    keys = [v[i, :] for i in range(v.shape[0] - 1, -1, -1)] + [-w]
    order = np.lexsort(keys)
    return EigenDecomposition(w[order], np.ascontiguousarray(v[:, order]))


def determinant(m) -> float:
    """Determinant by partial-pivoted LU (LAPACK getrf); 0 for singular input."""
    a = np.asarray(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("determinant needs a square matrix")
    if a.shape[0] == 0:
        return 1.0
    sign, logdet = np.linalg.slogdet(a)
    if sign == 0:
        return 0.0 * sign
    return sign * np.exp(logdet)


def exp_action(t: SymTridiag, time: float, via: EigenDecomposition | None = None) -> np.ndarray:
    """Dense e^{time T} from the eigendecomposition of T."""
    if via is None:
        via = sym_tridiag_eigen(t)
    if via.n != t.n:
        raise ValidationError(f"decomposition of size {via.n} does not match operator of size {t.n}")
    v = via.eigenvectors
    out = (v * np.exp(time * via.eigenvalues)) @ v.T
    return 0.5 * (out + out.T)


def markov_exp(generator: np.ndarray, time: float, tol: float = 1e-18) -> np.ndarray:
    """e^{time Q} for a (sub-)Markov generator Q with nonnegative off-diagonal.

    Uniformization: Q = q (P - I) with P >= 0, so every series term is
    nonnegative and small entries keep full relative accuracy.  Long times
    are reduced by repeated squaring, which also preserves nonnegativity.
    """
    q_mat = np.asarray(generator, dtype=float)
    if q_mat.ndim != 2 or q_mat.shape[0] != q_mat.shape[1]:
        raise ValidationError("generator must be square")
    if time < 0:
        raise ValidationError("time must be nonnegative")
    n = q_mat.shape[0]
    if time == 0:
        return np.eye(n)
    rate = float(np.max(-np.diag(q_mat)))
    if rate <= 0:
        return np.eye(n)
    squarings = max(0, math.ceil(math.log2(rate * time / 8.0))) if rate * time > 8.0 else 0
    h = time / 2**squarings
    p = np.eye(n) + q_mat / rate
    p[p < 0] = 0.0  # only diagonal rounding can go negative
    lam = rate * h
    term = np.eye(n)
    weight = math.exp(-lam)
    acc = weight * term
    k = 0
    cum = weight
    while 1.0 - cum > tol and k < 10_000:
        k += 1
        term = term @ p
        weight *= lam / k
        cum += weight
        acc += weight * term
        if weight < tol * 1e-3 and k > lam:
            break
    for _ in range(squarings):
        acc = acc @ acc
    return acc


def log_pochhammer(z, k: int):
    """log of (z)_k = z (z+1) ... (z+k-1).

    Real z gives ``(log|(z)_k|, sign)`` with sign 0 (and log -inf) when a
    factor vanishes.  Complex z gives the sum of principal logarithms.
    """
    if k < 0:
        raise ValidationError("k must be nonnegative")
    if isinstance(z, complex) or np.iscomplexobj(z):
        z = complex(z)
        if z.imag == 0.0:
            z = z.real
        else:
            return sum((cmath.log(z + j) for j in range(k)), 0j)
    z = float(z)
    factors = z + np.arange(k, dtype=float)
    if np.any(factors == 0.0):
        return -math.inf, 0
    sign = -1 if np.count_nonzero(factors < 0) % 2 else 1
    return float(np.sum(np.log(np.abs(factors)))), sign
