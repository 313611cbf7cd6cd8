"""Orthonormal operator basis ordered by spin-statistics order.

Each basis operator ``lambda_{n,i}`` is traceless, Hermitian, normalised to
``Tr(lambda_a lambda_b) = 2 delta_ab`` and has non-zero matrix elements on a
single pair of diagonals ``m' - m = +-c`` (its *coherence*) in the ``Lz``
basis.  The order ``n`` is the lowest power of a spin component whose
statistics see the operator; it coincides with the rank of the operator as a
spherical tensor.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import BasisConstructionError, DimensionMismatch, OrderOutOfRange
from .spin import DensityMatrix, SpinLength, _frozen, build_spin_operators, raising_operator

_DEGENERATE_NORM = 1e-12


class BasisLabel(NamedTuple):
    n: int
    i: int
    coherence: int

    @property
    def key(self) -> str:
        return f"{self.n},{self.i}"


def extremal_pair(l: SpinLength, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Hermitian and anti-Hermitian parts of ``(L+)**n``, normalised.

    Returns ``(lambda_{n,1}, lambda_{n,2})``, the two operators of order ``n``
    carrying coherence ``n``.
    """
    if not 1 <= n <= l.two_l:
        raise OrderOutOfRange(f"order n={n} outside 1..{l.two_l} for spin {l}")
    lp = np.linalg.matrix_power(raising_operator(l), n)
    lm = lp.conj().T
    norm = math.sqrt(np.trace(lp @ lm).real)
    return (lp + lm) / norm, -1j * (lp - lm) / norm


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    l: SpinLength
    labels: tuple[BasisLabel, ...]
    operators: np.ndarray  # shape (4l(l+1), N, N)

    def __post_init__(self):
        object.__setattr__(self, "_index", {(b.n, b.i): k for k, b in enumerate(self.labels)})

    def __len__(self):
        return len(self.labels)

    def __iter__(self) -> Iterator[tuple[BasisLabel, np.ndarray]]:
        return iter(zip(self.labels, self.operators))

    @property
    def dim(self) -> int:
        return self.l.dimension()

    def index(self, n: int, i: int) -> int:
        return self._index[(n, i)]

    def __getitem__(self, key: tuple[int, int]) -> np.ndarray:
        return self.operators[self.index(*key)]

    def orders(self) -> np.ndarray:
        return np.array([b.n for b in self.labels])

    def order_slice(self, n: int) -> slice:
        """Positions of the ``2n+1`` operators of order ``n``."""
        start = n * n - 1
        return slice(start, start + 2 * n + 1)


def _chain(seed: np.ndarray, nodes: np.ndarray, length: int, norm2: float, against=()) -> list[np.ndarray]:
    """Orthonormal chain of diagonal vectors ``seed * p_k(nodes)`` with deg p_k = k.

    A coherence-``c`` operator is fixed by its ``c``-th superdiagonal, and the
    symmetrised product ``{A, Lz}/2`` multiplies that diagonal elementwise by
    ``(m + m')/2``.  The candidates ``{seed, Lz**k}/2`` thus reduce to
    polynomials in these node values.  Each candidate is built from the
    previous member (same nested spans, no overflow for large spins),
    orthogonalised twice and scaled to squared norm ``norm2``.
    """
    out: list[np.ndarray] = []
    prev = seed
    for step in range(length):
        cand = prev.copy() if step == 0 else prev * nodes
        for _ in range(2):
            for q in list(against) + out:
                cand = cand - q * (np.dot(q, cand) / np.dot(q, q))
        nrm = math.sqrt(np.dot(cand, cand))
        if nrm < _DEGENERATE_NORM:
            raise BasisConstructionError("degenerate candidate while completing the basis")
        q = cand * (math.sqrt(norm2) / nrm)
        out.append(q)
        prev = q
    return out


def _from_diagonal(vec: np.ndarray, c: int, phase: complex = 1.0) -> np.ndarray:
    """Hermitian matrix with ``phase * vec`` on superdiagonal ``c``."""
    if c == 0:
        return np.diag(vec).astype(complex)
    upper = np.diag(phase * vec, k=c)
    return upper + upper.conj().T


@functools.lru_cache(maxsize=None)
def complete_basis(l: SpinLength) -> OperatorBasis:
    """The full ``4l(l+1)``-element basis for spin ``l``.

    Order ``n`` lists its operators by coherence descending, the Hermitian
    part of ``(L+)**c`` before the anti-Hermitian part, and the diagonal
    (coherence 0) operator last.  For spin 1 the two coherence-1 operators of
    order 2 are swapped so that the set reads ``S_xy, Q_xy, Q_yz, Q_zx, G_z``.
    """
    two_l = l.two_l
    ms = l.ms
    by_order: dict[int, dict[int, list[np.ndarray]]] = {n: {} for n in range(1, two_l + 1)}

    # coherence 0: polynomials in Lz orthogonal to the identity, Tr(op**2) = 2
    diag = _chain(ms.copy(), ms, two_l, 2.0, [np.ones(l.dimension())])
    for n, vec in enumerate(diag, start=1):
        by_order[n][0] = [_from_diagonal(vec, 0)]

    for c in range(1, two_l + 1):
        re_seed, _ = extremal_pair(l, c)
        seed = np.diagonal(re_seed, offset=c).real
        nodes = (ms[:-c] + ms[c:]) / 2
        # the two mirrored diagonals each carry half of Tr(op**2) = 2
        for k, vec in enumerate(_chain(seed, nodes, two_l - c + 1, 1.0)):
            by_order[c + k][c] = [_from_diagonal(vec, c), _from_diagonal(vec, c, -1j)]

    labels: list[BasisLabel] = []
    ops: list[np.ndarray] = []
    for n in range(1, two_l + 1):
        i = 1
        for c in range(n, -1, -1):
            members = by_order[n][c]
            if two_l == 2 and n == 2 and c == 1:
                members = members[::-1]
            for op in members:
                labels.append(BasisLabel(n, i, c))
                ops.append(op)
                i += 1
    return OperatorBasis(l=l, labels=tuple(labels), operators=_frozen(np.array(ops)))


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    """Expansion coefficients ``<lambda_{n,i}>`` aligned with a basis."""

    l: SpinLength
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.l.n_coefficients,):
            raise DimensionMismatch(
                f"expected {self.l.n_coefficients} coefficients for spin {self.l}, got {v.shape}"
            )
        object.__setattr__(self, "values", _frozen(v))

    def __getitem__(self, key: tuple[int, int]) -> float:
        n, i = key
        return float(self.values[n * n - 1 + i - 1])

    def order(self, n: int) -> np.ndarray:
        return self.values[n * n - 1 : n * n + 2 * n]

    def items(self):
        labels = complete_basis(self.l).labels
        return [(b.key, float(v)) for b, v in zip(labels, self.values)]

    @classmethod
    def zeros(cls, l: SpinLength) -> "CoefficientVector":
        return cls(l, np.zeros(l.n_coefficients))


def _as_matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)


def decompose(rho, basis: OperatorBasis) -> CoefficientVector:
    """Coefficients ``Tr(rho lambda_{n,i})``."""
    m = _as_matrix(rho)
    if m.shape != (basis.dim, basis.dim):
        raise DimensionMismatch(f"state of size {m.shape} vs basis dimension {basis.dim}")
    vals = np.einsum("kij,ji->k", basis.operators, m)
    if np.max(np.abs(vals.imag), initial=0.0) > 1e-10:
        raise ValueError("state is not Hermitian: coefficients have imaginary parts")
    return CoefficientVector(basis.l, vals.real)


def reconstruct_from_coefficients(coeffs: CoefficientVector, basis: OperatorBasis) -> DensityMatrix:
    """``I/(2l+1) + 1/2 sum <lambda> lambda``, flagged raw."""
    if coeffs.l != basis.l:
        raise DimensionMismatch(f"coefficients for spin {coeffs.l}, basis for spin {basis.l}")
    dim = basis.dim
    rho = np.eye(dim) / dim + 0.5 * np.einsum("k,kij->ij", coeffs.values, basis.operators)
    return DensityMatrix(rho, raw=True)


def spin1_named_operators() -> dict[str, np.ndarray]:
    """The quadratic spin-1 operators ``S_xy, Q_xy, Q_yz, Q_zx, G_z``."""
    lx, ly, lz = build_spin_operators(SpinLength(2))

    def q(a, b):
        return a @ b + b @ a

    return {
        "S_xy": lx @ lx - ly @ ly,
        "Q_xy": q(lx, ly),
        "Q_yz": q(ly, lz),
        "Q_zx": q(lz, lx),
        "G_z": -(lx @ lx + ly @ ly - 2 * lz @ lz) / math.sqrt(3),
    }
