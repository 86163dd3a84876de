"""Self-adjoint difference operators and their spectral projections.

Covers the birth-death operators of hypergeometric type, the z-measure
operator on Z + 1/2, its Bessel limit, and the signed generators built from
an operator and a commuting projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ensembles import ProjectionKernel, WeightFamily, _check_window, eigenvalue_m, zmeasure_pair_ok
from .errors import ParameterError, SpectralGapError, ValidationError
from .lattice_partitions import LatticeKind, Window
from .numerics import EigenDecomposition, SymTridiag, exp_action, markov_exp, sym_tridiag_eigen

__all__ = [
    "DifferenceOperator",
    "build_hypergeometric_D",
    "build_zmeasure_operator",
    "build_bessel_operator",
    "spectral_projection",
    "SpectrumMatch",
    "match_spectrum",
    "hypergeometric_spectrum",
    "zmeasure_spectrum",
    "SignedGenerator",
    "build_B",
    "build_zmeasure_B",
    "operator_csv",
    "spectrum_csv",
]

GAP_TOL = 1e-8
MATCH_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class DifferenceOperator:
    """Symmetric tridiagonal operator on a window.

    For birth-death operators ``birth``/``death`` hold the rates and
    ``log_weight`` the gauge w, so that the Markov generator is
    w^{-1/2} D w^{1/2}.  These are None for the z-measure and Bessel
    operators.
    """

    matrix: SymTridiag
    window: Window
    birth: np.ndarray | None = None
    death: np.ndarray | None = None
    log_weight: np.ndarray | None = None
    family: WeightFamily | None = None
    label: str = ""

    @cached_property
    def eigen(self) -> EigenDecomposition:
        return sym_tridiag_eigen(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.to_dense()

    def generator(self) -> np.ndarray:
        """Markov generator w^{-1/2} D w^{1/2}: rates off the diagonal, killing at the cut."""
        if self.birth is None:
            raise ValidationError("operator has no birth-death gauge")
        n = self.matrix.n
        g = np.diag(self.matrix.diag.copy())
        g[np.arange(n - 1), np.arange(1, n)] = self.birth[:-1]
        g[np.arange(1, n), np.arange(n - 1)] = self.death[1:]
        return g

    def semigroup(self, t: float) -> np.ndarray:
        """Symmetric-gauge e^{tD} through the eigendecomposition."""
        return exp_action(self.matrix, t, self.eigen)

    def markov_semigroup(self, t: float) -> np.ndarray:
        """e^{t G} for the Markov generator G, computed entrywise-accurately."""
        return markov_exp(self.generator(), t)


def build_hypergeometric_D(family: WeightFamily, window: Window) -> DifferenceOperator:
    """Off-diagonal sqrt(mu_{x+1} lambda_x), diagonal -(mu_x + lambda_x)."""
    _check_window(family, window)
    x = window.points
    lam = np.asarray(family.birth(x), dtype=float)
    mu = np.asarray(family.death(x), dtype=float)
    interior = slice(1, None) if family.kind == LatticeKind.HALF else slice(None)
    if np.any(mu[interior] <= 0) or np.any(lam <= 0):
        raise ParameterError(f"sigma or sigma + tau is not positive on the window for {family}")
    off = np.sqrt(mu[1:] * lam[:-1])
    mat = SymTridiag(-(mu + lam), off)
    return DifferenceOperator(mat, window, lam, mu, family.log_weight(x), family, family.name)


def _check_zparams(z, zp, xi) -> None:
    if not zmeasure_pair_ok(z, zp):
        raise ParameterError(f"(z, z') = ({z}, {zp}) gives negative weights")
    if not (0 < xi < 1):
        raise ParameterError(f"xi must lie in (0, 1), got {xi}")


def _check_half_integer(window: Window) -> None:
    if window.kind != LatticeKind.FULL or (window.offset - 0.5) % 1.0 != 0.0:
        raise ValidationError("operator lives on a full-line Z + 1/2 window")


def build_zmeasure_operator(z, zp, xi: float, window: Window) -> DifferenceOperator:
    """Couplings sqrt(xi (z+x+1/2)(z'+x+1/2)), diagonal -(x + xi (z + z' + x))."""
    _check_zparams(z, zp, xi)
    _check_half_integer(window)
    x = window.points
    prod = np.real((complex(z) + x[:-1] + 0.5) * (complex(zp) + x[:-1] + 0.5))
    off = np.sqrt(xi * np.clip(prod, 0.0, None))
    zsum = float(np.real(complex(z) + complex(zp)))
    diag = -(x + xi * (zsum + x))
    return DifferenceOperator(SymTridiag(diag, off), window, label="zmeasure")


def build_bessel_operator(theta: float, window: Window) -> DifferenceOperator:
    """Couplings sqrt(theta), diagonal -x."""
    if not theta > 0:
        raise ParameterError("theta must be positive")
    _check_half_integer(window)
    x = window.points
    return DifferenceOperator(SymTridiag(-x, np.full(len(x) - 1, math.sqrt(theta))), window, label="bessel")


def spectral_projection(op: DifferenceOperator, threshold: float, gap: float = GAP_TOL) -> ProjectionKernel:
    """Projection onto eigenvectors with eigenvalue above the threshold."""
    ev = op.eigen.eigenvalues
    close = np.abs(ev - threshold) <= gap
    if np.any(close):
        raise SpectralGapError(f"eigenvalue {ev[close][0]!r} lies within {gap} of threshold {threshold}")
    sel = ev > threshold
    v = op.eigen.eigenvectors[:, sel]
    k = v @ v.T
    return ProjectionKernel(0.5 * (k + k.T), int(sel.sum()), op.window)


@dataclass(frozen=True)
class SpectrumMatch:
    index: int  # position in the descending spectrum
    eigenvalue: float
    target: float
    label: float  # n for m_n, a for (1 - xi) a
    residual: float

    @property
    def reliable(self) -> bool:
        return self.residual <= MATCH_TOL


def match_spectrum(eigenvalues, targets, labels=None) -> list[SpectrumMatch]:
    """Greedy nearest-distance assignment of targets (in order) to unused eigenvalues."""
    ev = np.asarray(eigenvalues, dtype=float)
    labels = list(range(len(targets))) if labels is None else list(labels)
    used = np.zeros(len(ev), dtype=bool)
    out = []
    for t, lab in zip(targets, labels):
        d = np.where(used, np.inf, np.abs(ev - t))
        j = int(np.argmin(d))
        if not np.isfinite(d[j]):
            break
        used[j] = True
        out.append(SpectrumMatch(j, float(ev[j]), float(t), lab, float(d[j])))
    return out


def hypergeometric_spectrum(op: DifferenceOperator, count: int) -> list[SpectrumMatch]:
    if op.family is None:
        raise ValidationError("operator has no weight family")
    targets = [eigenvalue_m(op.family, n) for n in range(count)]
    return match_spectrum(op.eigen.eigenvalues, targets)


def zmeasure_spectrum(op: DifferenceOperator, xi: float, amax: float) -> list[SpectrumMatch]:
    """Match eigenvalues to (1 - xi) a for half-integers |a| <= amax."""
    k = int(math.floor(amax - 0.5))
    labels = [s * (j + 0.5) for j in range(k + 1) for s in (1, -1)]
    targets = [(1 - xi) * a for a in labels]
    return match_spectrum(op.eigen.eigenvalues, targets, labels)


@dataclass(frozen=True, eq=False)
class SignedGenerator:
    matrix: np.ndarray
    shift: float
    rank: int

    def top_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T)).max())


def _commutator(op_dense: np.ndarray, k: np.ndarray) -> float:
    return float(np.max(np.abs(op_dense @ k - k @ op_dense)))


def build_B(op: DifferenceOperator, kernel: ProjectionKernel, shift: float, tol: float = 1e-10) -> SignedGenerator:
    """(1 - K)(D + shift) - K(D + shift).

    With eigenvalues m_0 > m_1 > ... the result is negative semidefinite
    exactly when -m_{N-1} < shift < -m_N, N being the rank of K.
    """
    d = op.dense()
    k = kernel.matrix
    if _commutator(d, k) > tol * max(1.0, op.matrix.norm()):
        raise ValidationError("kernel does not commute with the operator")
    ev = op.eigen.eigenvalues
    N = kernel.rank
    if N >= len(ev):
        raise ParameterError("kernel rank leaves no room for a spectral gap")
    upper = -ev[N]
    lower = -ev[N - 1] if N > 0 else -np.inf
    if not lower < shift < upper:
        raise ParameterError(f"shift {shift} outside the gap ({lower}, {upper})")
    a = d + shift * np.eye(len(d))
    b = a - 2.0 * k @ a
    return SignedGenerator(0.5 * (b + b.T), float(shift), N)


def build_zmeasure_B(op: DifferenceOperator, kernel: ProjectionKernel, xi: float, tol: float = 1e-10) -> SignedGenerator:
    """(1 - xi)^{-1} (D (1 - K) - D K)."""
    d = op.dense()
    k = kernel.matrix
    if _commutator(d, k) > tol * max(1.0, op.matrix.norm()):
        raise ValidationError("kernel does not commute with the operator")
    b = (d - 2.0 * d @ k) / (1.0 - xi)
    return SignedGenerator(0.5 * (b + b.T), 0.0, kernel.rank)


def operator_csv(op: DifferenceOperator) -> str:
    lines = ["row,col,value"]
    t = op.matrix
    for i in range(t.n):
        if i > 0:
            lines.append(f"{i},{i - 1},{t.offdiag[i - 1]:.17g}")
        lines.append(f"{i},{i},{t.diag[i]:.17g}")
        if i < t.n - 1:
            lines.append(f"{i},{i + 1},{t.offdiag[i]:.17g}")
    return "\n".join(lines) + "\n"


def spectrum_csv(matches: list[SpectrumMatch]) -> str:
    lines = ["index,eigenvalue,matched_m_n,residual"]
    for m in matches:
        lines.append(f"{m.index},{m.eigenvalue:.17g},{m.target:.17g},{m.residual:.17g}")
    return "\n".join(lines) + "\n"
