"""Finite-mode CAR algebra on the antisymmetric Fock space.

Modes are the coordinates of C^n.  The occupation basis is indexed by
subsets of {0..n-1} sorted by (size, bitmask value), so the vacuum is basis
vector 0.  a*(h) = sum_j h_j a_j^* is linear in h and a(h) = sum_j conj(h_j) a_j
is antilinear, so {a*(h), a(k)} = <h, k> with <h, k> = sum_j h_j conj(k_j).

Words are tuples of :class:`Letter`; linear combinations of words are lists
of ``(coefficient, word)`` pairs.  A normal word reads
a*(c_1) ... a*(c_m) a(d_1) ... a(d_n).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError, ValidationError

__all__ = [
    "MAX_MODES",
    "MAX_DOUBLED_MODES",
    "FockSpace",
    "Letter",
    "cr",
    "an",
    "normal_word",
    "split_normal",
    "QuasiFreeState",
    "DoubledGNS",
    "quasi_free_moment",
    "expectation",
    "wick_product",
    "cp_map",
    "cp_map_sum",
    "hamiltonian",
    "cyclic_subspace",
    "predicted_spectrum",
    "gicar_projector_word",
    "gicar_spanning_words",
]

MAX_MODES = 14
MAX_DOUBLED_MODES = 7
PSD_TOL = 1e-12
CYCLIC_TOL = 1e-10
ZERO_EIGEN = 1e-13


def _vec(h, n: int) -> np.ndarray:
    v = np.asarray(h, dtype=complex).reshape(-1)
    if v.shape != (n,):
        raise ValidationError(f"mode vector of length {v.size} on {n} modes")
    return v


class FockSpace:
    """Fock space over C^n with Jordan-Wigner mode operators."""

    def __init__(self, modes: int):
        if not isinstance(modes, (int, np.integer)) or modes < 0:
            raise ValidationError("mode count must be a nonnegative integer")
        if modes > MAX_MODES:
            raise ValidationError(f"{modes} modes exceeds the ceiling of {MAX_MODES}")
        self.modes = int(modes)
        self.dim = 2**self.modes
        masks = sorted(range(self.dim), key=lambda b: (bin(b).count("1"), b))
        self.masks = np.array(masks, dtype=np.int64)
        self.position = np.empty(self.dim, dtype=np.int64)
        self.position[self.masks] = np.arange(self.dim)

    def __repr__(self) -> str:
        return f"FockSpace({self.modes})"

    @cached_property
    def occupation(self) -> np.ndarray:
        return np.array([bin(int(b)).count("1") for b in self.masks])

    @cached_property
    def _lowering(self) -> list[sp.csr_matrix]:
        ops = []
        for j in range(self.modes):
            bit = 1 << j
            src = np.nonzero(self.masks & bit)[0]
            below = self.masks[src] & (bit - 1)
            signs = np.array([(-1.0) ** bin(int(b)).count("1") for b in below])
            dst = self.position[self.masks[src] ^ bit]
            ops.append(sp.csr_matrix((signs.astype(complex), (dst, src)), shape=(self.dim, self.dim)))
        return ops

    def mode_annihilator(self, j: int) -> sp.csr_matrix:
        return self._lowering[j]

    def annihilation(self, h) -> sp.csr_matrix:
        v = _vec(h, self.modes)
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for j in np.nonzero(v)[0]:
            out = out + np.conj(v[j]) * self._lowering[j]
        return out.tocsr()

    def creation(self, h) -> sp.csr_matrix:
        return self.annihilation(h).conj().T.tocsr()

    def parity(self) -> sp.csr_matrix:
        return self.gauge(-1.0)

    def gauge(self, lam: complex) -> sp.csr_matrix:
        """Gamma_lambda: lambda^{|subset|} on each basis vector."""
        lam = complex(lam)
        if abs(abs(lam) - 1.0) > 1e-12:
            raise ValidationError("gauge parameter must have modulus 1")
        return sp.diags(lam ** self.occupation.astype(float)).tocsr()

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    def letter(self, letter: "Letter") -> sp.csr_matrix:
        return self.creation(letter.vec) if letter.kind == "cr" else self.annihilation(letter.vec)

    def word(self, word) -> sp.csr_matrix:
        return _product([self.letter(x) for x in word], self.dim)

    def matrix(self, terms) -> sp.csr_matrix:
        return _combine(terms, self.word, self.dim)


def _product(mats, dim) -> sp.csr_matrix:
    out = sp.identity(dim, dtype=complex, format="csr")
    for m in mats:
        out = out @ m
    return out.tocsr()


def _combine(terms, word_matrix, dim) -> sp.csr_matrix:
    out = sp.csr_matrix((dim, dim), dtype=complex)
    for c, w in terms:
        if c != 0:
            out = out + c * word_matrix(w)
    return out.tocsr()


@dataclass(frozen=True)
class Letter:
    kind: str  # "cr" or "an"
    vec: tuple

    def __post_init__(self):
        if self.kind not in ("cr", "an"):
            raise ValidationError(f"letter kind must be 'cr' or 'an', got {self.kind!r}")
        object.__setattr__(self, "vec", tuple(complex(x) for x in np.asarray(self.vec).reshape(-1)))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.vec, dtype=complex)

    def adjoint(self) -> "Letter":
        return Letter("an" if self.kind == "cr" else "cr", self.vec)

    def mapped(self, op: np.ndarray) -> "Letter":
        return Letter(self.kind, tuple(op @ self.array))


def cr(h) -> Letter:
    return Letter("cr", tuple(np.asarray(h, dtype=complex)))


def an(h) -> Letter:
    return Letter("an", tuple(np.asarray(h, dtype=complex)))


def normal_word(creators, annihilators) -> tuple:
    """a*(c_1) ... a*(c_m) a(d_1) ... a(d_n) in reading order."""
    return tuple(cr(c) for c in creators) + tuple(an(d) for d in annihilators)


def split_normal(word) -> tuple[list[np.ndarray], list[np.ndarray]]:
    kinds = [x.kind for x in word]
    m = kinds.count("cr")
    if kinds != ["cr"] * m + ["an"] * (len(kinds) - m):
        raise ValidationError("word must list all creators before all annihilators")
    return [x.array for x in word[:m]], [x.array for x in word[m:]]


def _psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    # rounding-level eigenvalues would otherwise become 1e-8 after the root
    w = np.where(w < ZERO_EIGEN, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


@dataclass(frozen=True, eq=False)
class QuasiFreeState:
    """phi_K with S = (1 - K)^{1/2}, T = K^{1/2}."""

    K: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.K, dtype=complex)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise ValidationError("K must be square")
        if np.max(np.abs(k - k.conj().T), initial=0.0) > PSD_TOL:
            raise ValidationError("K must be Hermitian")
        k = 0.5 * (k + k.conj().T)
        ev = np.linalg.eigvalsh(k) if len(k) else np.zeros(0)
        if len(ev) and (ev.min() < -PSD_TOL or ev.max() > 1 + PSD_TOL):
            raise ValidationError(f"K must satisfy 0 <= K <= 1, spectrum in [{ev.min()}, {ev.max()}]")
        k.flags.writeable = False
        object.__setattr__(self, "K", k)

    @property
    def modes(self) -> int:
        return len(self.K)

    @cached_property
    def S(self) -> np.ndarray:
        return _psd_sqrt(np.eye(self.modes) - self.K)

    @cached_property
    def T(self) -> np.ndarray:
        return _psd_sqrt(self.K)

    def two_point(self, h, k) -> complex:
        """<K h, k> = phi_K(a*(h) a(k))."""
        return complex(np.vdot(k, self.K @ h))

    def is_projection(self, tol: float = 1e-10) -> bool:
        return bool(np.max(np.abs(self.K @ self.K - self.K), initial=0.0) <= tol)


class DoubledGNS:
    """rho_K on F(C^n) (x) F(conj C^n); the vacuum Omega (x) conj Omega is basis vector 0.

    rho_K(a(h)) = a(S h) (x) Gamma + 1 (x) a*(conj(T h)).
    """

    def __init__(self, state: QuasiFreeState):
        if state.modes > MAX_DOUBLED_MODES:
            raise ValidationError(f"{state.modes} modes exceeds the doubled-space ceiling of {MAX_DOUBLED_MODES}")
        self.state = state
        self.fock = FockSpace(state.modes)
        self.dim = self.fock.dim**2
        self._eye = sp.identity(self.fock.dim, dtype=complex, format="csr")
        self._parity = self.fock.parity()

    def annihilation(self, h) -> sp.csr_matrix:
        v = _vec(h, self.state.modes)
        left = sp.kron(self.fock.annihilation(self.state.S @ v), self._parity)
        right = sp.kron(self._eye, self.fock.creation(np.conj(self.state.T @ v)))
        return (left + right).tocsr()

    def creation(self, h) -> sp.csr_matrix:
        return self.annihilation(h).conj().T.tocsr()

    def letter(self, letter: Letter) -> sp.csr_matrix:
        return self.creation(letter.vec) if letter.kind == "cr" else self.annihilation(letter.vec)

    def word(self, word) -> sp.csr_matrix:
        return _product([self.letter(x) for x in word], self.dim)

    def matrix(self, terms) -> sp.csr_matrix:
        return _combine(terms, self.word, self.dim)

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v

    def apply_word(self, word, vec: np.ndarray | None = None) -> np.ndarray:
        out = self.vacuum() if vec is None else np.asarray(vec, dtype=complex)
        for x in reversed(word):
            out = self.letter(x) @ out
        return out

    def vacuum_expectation(self, word) -> complex:
        return complex(self.apply_word(word)[0])


def quasi_free_moment(state: QuasiFreeState, creators, annihilators) -> complex:
    """phi_K(a*(h_n) ... a*(h_1) a(k_1) ... a(k_m)) = delta_{nm} det[<K h_i, k_j>].

    ``creators`` is h_1..h_n, so the word reads them in reverse.
    """
    hs = [_vec(h, state.modes) for h in creators]
    ks = [_vec(k, state.modes) for k in annihilators]
    if len(hs) != len(ks):
        return 0j
    if not hs:
        return 1 + 0j
    gram = np.array([[np.vdot(k, state.K @ h) for k in ks] for h in hs])
    return complex(np.linalg.det(gram))


def expectation(state: QuasiFreeState, terms) -> complex:
    """phi_K of a combination of normal words."""
    total = 0j
    for c, w in terms:
        cs, ds = split_normal(w)
        total += c * quasi_free_moment(state, cs[::-1], ds)
    return total


def _subset_sign(subset, n: int) -> int:
    """Sign of the permutation listing ``subset`` (0-based, increasing) first, then the rest."""
    return -1 if sum(i - a for a, i in enumerate(subset)) % 2 else 1


def _complement(subset, n: int) -> list[int]:
    s = set(subset)
    return [i for i in range(n) if i not in s]


def wick_product(state: QuasiFreeState, word) -> list:
    """:a*(h_1) ... a*(h_m) a(k_n) ... a(k_1):_K for a normal word.

    Sum over I in [m], J in [n] with |I| = |J| = p of
    eps(I, J) det[<K h_{i_a}, k_{j_b}>] a*(h_{I'}) a(k_{J'} reversed), where
    eps carries (-1)^{(m-p)(n-p)} and the two subset-first permutation signs.
    """
    cs, ds = split_normal(word)
    hs = cs
    ks = ds[::-1]
    m, n = len(hs), len(ks)
    for v in hs + ks:
        _vec(v, state.modes)
    out = []
    for p in range(min(m, n) + 1):
        for I in itertools.combinations(range(m), p):
            for J in itertools.combinations(range(n), p):
                eps = (-1) ** ((m - p) * (n - p)) * _subset_sign(I, m) * _subset_sign(J, n)
                coef = eps * quasi_free_moment(state, [hs[i] for i in I], [ks[j] for j in J])
                if coef == 0:
                    continue
                Ic, Jc = _complement(I, m), _complement(J, n)
                rest = tuple(cr(hs[i]) for i in Ic) + tuple(an(ks[j]) for j in reversed(Jc))
                out.append((coef, rest))
    return out


def _contraction_defect(t: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(t, 2) if t.size else 0.0
    if norm > 1 + 1e-12:
        raise ParameterError(f"T is not a contraction: ||T|| = {norm}")
    return _psd_sqrt(np.eye(len(t)) - t.conj().T @ t)


def cp_map(state: QuasiFreeState, T, word) -> list:
    """Quasi-free completely positive map a_K(T) on a normal word.

    For the word a*(h_m) ... a*(h_1) a(k_1) ... a(k_n) and S = (1 - T*T)^{1/2}:
    sum over I in [m], J in [n], |I| = |J| = p, of
    eps_I eps_J det[<K S h_{i_a}, S k_{j_b}>] a*(T h_{I'} reversed) a(T k_{J'}).
    """
    t = np.asarray(T, dtype=complex)
    if t.shape != (state.modes, state.modes):
        raise ValidationError("T must act on the mode space")
    s = _contraction_defect(t)
    cs, ds = split_normal(word)
    hs = cs[::-1]
    ks = ds
    m, n = len(hs), len(ks)
    out = []
    for p in range(min(m, n) + 1):
        for I in itertools.combinations(range(m), p):
            for J in itertools.combinations(range(n), p):
                coef = _subset_sign(I, m) * _subset_sign(J, n) * quasi_free_moment(
                    state, [s @ hs[i] for i in I], [s @ ks[j] for j in J]
                )
                if coef == 0:
                    continue
                Ic, Jc = _complement(I, m), _complement(J, n)
                rest = tuple(cr(t @ hs[i]) for i in reversed(Ic)) + tuple(an(t @ ks[j]) for j in Jc)
                out.append((coef, rest))
    return out


def cp_map_sum(state: QuasiFreeState, T, terms) -> list:
    """a_K(T) extended linearly to a combination of normal words."""
    out = []
    for c, w in terms:
        out.extend((c * c2, w2) for c2, w2 in cp_map(state, T, w))
    return out


def gicar_spanning_words(modes: int, max_degree: int | None = None) -> list[tuple]:
    """Normal basis words a*(e_I) a(e_J) with |I| = |J|; they span the GICAR algebra."""
    top = modes if max_degree is None else min(modes, max_degree)
    eye = np.eye(modes)
    words = []
    for p in range(top + 1):
        for I in itertools.combinations(range(modes), p):
            for J in itertools.combinations(range(modes), p):
                words.append(normal_word([eye[i] for i in I], [eye[j] for j in J]))
    return words


def gicar_projector_word(modes: int, points) -> tuple:
    """q_x = a*_{x_1} a_{x_1} ... a*_{x_k} a_{x_k}."""
    pts = [int(x) for x in points]
    if len(set(pts)) != len(pts):
        raise ValidationError(f"repeated mode in {pts}")
    if any(not 0 <= x < modes for x in pts):
        raise ValidationError("mode index out of range")
    eye = np.eye(modes)
    word = ()
    for x in pts:
        word += (cr(eye[x]), an(eye[x]))
    return word


def hamiltonian(gns: DoubledGNS, basis, occupied, m) -> sp.csr_matrix:
    """sum_{a not occupied} m_a rho(a*(v_a) a(v_a)) - sum_{a occupied} m_a rho(a(v_a) a*(v_a)).

    ``basis`` holds v_a as columns and K must be the projection onto the
    occupied columns.
    """
    v = np.asarray(basis, dtype=complex)
    n = gns.state.modes
    if v.shape != (n, n) or np.max(np.abs(v.conj().T @ v - np.eye(n))) > 1e-10:
        raise ValidationError("basis must be an orthonormal basis of the mode space")
    occ = sorted(set(int(a) for a in occupied))
    proj = v[:, occ] @ v[:, occ].conj().T
    if not gns.state.is_projection() or np.max(np.abs(proj - gns.state.K)) > 1e-10:
        raise ValidationError("K is not the projection onto the occupied basis vectors")
    m = np.asarray(m, dtype=float)
    if m.shape != (n,):
        raise ValidationError("need one eigenvalue per basis vector")
    out = sp.csr_matrix((gns.dim, gns.dim), dtype=complex)
    for a in range(n):
        if a in occ:
            out = out - m[a] * (gns.annihilation(v[:, a]) @ gns.creation(v[:, a]))
        else:
            out = out + m[a] * (gns.creation(v[:, a]) @ gns.annihilation(v[:, a]))
    return out.tocsr()


def cyclic_subspace(gns: DoubledGNS, words=None, tol: float = CYCLIC_TOL) -> np.ndarray:
    """Orthonormal basis (columns) of span rho_K(GICAR words) vacuum."""
    if words is None:
        words = gicar_spanning_words(gns.state.modes)
    vecs = np.column_stack([gns.apply_word(w) for w in words])
    u, s, _ = np.linalg.svd(vecs, full_matrices=False)
    if not len(s) or s[0] == 0:
        return np.zeros((gns.dim, 0), dtype=complex)
    return u[:, s > tol * s[0]]


def predicted_spectrum(m, occupied) -> list[float]:
    """All sums sum(m_a) - sum(m_b), a unoccupied, b occupied, equal counts; sorted."""
    m = list(m)
    occ = sorted(set(int(a) for a in occupied))
    free = [a for a in range(len(m)) if a not in occ]
    out = []
    for p in range(min(len(occ), len(free)) + 1):
        for A in itertools.combinations(free, p):
            for B in itertools.combinations(occ, p):
                out.append(math.fsum([m[a] for a in A] + [-m[b] for b in B]))
    return sorted(out)
