"""Spin operators, measurement directions and spectral projectors.

All matrices are written in the eigenbasis of ``Lz`` with the magnetic
quantum number in *descending* order, i.e. row/column 0 is ``m = +l`` and
the last row/column is ``m = -l``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DimensionMismatch, EigenvalueMismatch, InvalidSpin, NonPhysicalState

MAX_TWO_L = 64
HERMITIAN_TOL = 1e-12
SNAP_TOL = 1e-6


def _frozen(a) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, order=True)
class SpinLength:
    """Spin quantum number ``l`` stored as the integer ``2l``."""

    two_l: int

    def __post_init__(self):
        if isinstance(self.two_l, bool) or int(self.two_l) != self.two_l:
            raise InvalidSpin(f"two_l must be an integer, got {self.two_l!r}")
        object.__setattr__(self, "two_l", int(self.two_l))
        if not 1 <= self.two_l <= MAX_TWO_L:
            raise InvalidSpin(f"two_l must lie in [1, {MAX_TWO_L}], got {self.two_l}")

    @classmethod
    def from_l(cls, l) -> "SpinLength":
        two_l = Fraction(l) * 2
        if two_l.denominator != 1:
            raise InvalidSpin(f"l={l} is not a multiple of 1/2")
        return cls(int(two_l))

    @property
    def l(self) -> float:
        return self.two_l / 2

    @property
    def exact(self) -> Fraction:
        return Fraction(self.two_l, 2)

    def dimension(self) -> int:
        return self.two_l + 1

    @property
    def two_ms(self) -> np.ndarray:
        """The values ``2m`` in basis order (``+2l`` down to ``-2l``)."""
        return np.arange(self.two_l, -self.two_l - 1, -2)

    @property
    def ms(self) -> np.ndarray:
        return self.two_ms / 2

    @property
    def n_coefficients(self) -> int:
        """Number of traceless basis operators, ``4l(l+1) = N**2 - 1``."""
        return self.dimension() ** 2 - 1

    def __str__(self):
        return str(self.exact)


@dataclass(frozen=True)
class Direction:
    """A measurement axis given by polar angle ``theta`` and azimuth ``phi``."""

    theta: float
    phi: float

    def __post_init__(self):
        theta, phi = float(self.theta), float(self.phi)
        if not (0.0 <= theta <= math.pi) or not math.isfinite(phi):
            raise ValueError(f"invalid direction angles theta={theta}, phi={phi}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi % (2 * math.pi))

    @classmethod
    def from_vector(cls, v) -> "Direction":
        x, y, z = np.asarray(v, dtype=float) / np.linalg.norm(v)
        theta = math.acos(max(-1.0, min(1.0, z)))
        phi = math.atan2(y, x) if (x or y) else 0.0
        return cls(theta, phi)

    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array(
            [st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)]
        )

    def angle_to(self, other: "Direction") -> float:
        # atan2 stays accurate for nearly parallel directions, unlike acos
        u, v = self.unit_vector(), other.unit_vector()
        return math.atan2(float(np.linalg.norm(np.cross(u, v))), float(np.dot(u, v)))


X_AXIS = Direction(math.pi / 2, 0.0)
Y_AXIS = Direction(math.pi / 2, math.pi / 2)
Z_AXIS = Direction(0.0, 0.0)


def check_hermitian(op: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {op.shape}")
    dev = np.max(np.abs(op - op.conj().T)) if op.size else 0.0
    if dev > tol:
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3g})")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A Hermitian, unit-trace matrix.

    States with ``raw=False`` are additionally required to be positive
    semidefinite (smallest eigenvalue >= -1e-10).  Linear reconstructions are
    carried with ``raw=True`` because nothing forces them to be positive.
    """

    matrix: np.ndarray
    raw: bool = False
    dims: tuple[int, ...] | None = field(default=None)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        check_hermitian(m, tol=1e-10)
        m = (m + m.conj().T) / 2
        tr = np.trace(m).real
        if abs(tr - 1.0) > 1e-10:
            raise ValueError(f"density matrix trace is {tr}, expected 1")
        if not self.raw and np.linalg.eigvalsh(m)[0] < -1e-10:
            raise NonPhysicalState("density matrix has negative eigenvalues; pass raw=True")
        dims = self.dims if self.dims is not None else (m.shape[0],)
        if math.prod(dims) != m.shape[0]:
            raise DimensionMismatch(f"subsystem dims {dims} do not match size {m.shape[0]}")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "dims", tuple(int(d) for d in dims))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def is_physical(self, tol: float = 1e-10) -> bool:
        return self.min_eigenvalue() >= -tol

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def basis_state(cls, l: SpinLength, two_m: int) -> "DensityMatrix":
        """The projector onto the ``Lz`` eigenstate with eigenvalue ``two_m / 2``."""
        idx = (l.two_l - two_m) // 2
        if (l.two_l - two_m) % 2 or not 0 <= idx <= l.two_l:
            raise ValueError(f"2m={two_m} is not admissible for two_l={l.two_l}")
        psi = np.zeros(l.dimension())
        psi[idx] = 1.0
        return cls.pure(psi)


@dataclass(frozen=True, eq=False)
class ProjectorFamily:
    """Spectral projectors of one spin component, ordered by ``m`` descending."""

    direction: Direction | None
    l: SpinLength
    two_ms: tuple[int, ...]
    projectors: np.ndarray  # shape (2l+1, N, N)
    eigenvectors: np.ndarray  # column k spans the eigenspace of two_ms[k]

    @property
    def ms(self) -> np.ndarray:
        return np.asarray(self.two_ms) / 2

    def outcomes(self):
        return list(zip(self.ms, self.projectors))


@functools.lru_cache(maxsize=None)
def build_spin_operators(l: SpinLength) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(Lx, Ly, Lz)`` for spin ``l``.

    ``L+`` is assembled from ``L+|m> = sqrt((l-m)(l+m+1)) |m+1>``; with the
    descending ordering it sits on the first superdiagonal.
    """
    two_ms = l.two_ms
    # L+ maps column k (m) to row k-1 (m+1); factor written with 2m to stay integer.
    two_m_lower = two_ms[1:]
    amp = np.sqrt((l.two_l - two_m_lower) * (l.two_l + two_m_lower + 2)) / 2
    lplus = np.diag(amp, k=1).astype(complex)
    lminus = lplus.conj().T
    lx = (lplus + lminus) / 2
    ly = (lplus - lminus) / 2j
    lz = np.diag(two_ms / 2).astype(complex)
    return _frozen(lx), _frozen(ly), _frozen(lz)


def raising_operator(l: SpinLength) -> np.ndarray:
    lx, ly, _ = build_spin_operators(l)
    return lx + 1j * ly


def spin_component(l: SpinLength, d: Direction) -> np.ndarray:
    """``sin(theta)cos(phi) Lx + sin(theta)sin(phi) Ly + cos(theta) Lz``."""
    lx, ly, lz = build_spin_operators(l)
    nx, ny, nz = d.unit_vector()
    return nx * lx + ny * ly + nz * lz


def projector_family(op: np.ndarray, l: SpinLength, direction: Direction | None = None) -> ProjectorFamily:
    """Spectral decomposition of a spin component into its ``2l+1`` projectors.

    Raises EigenvalueMismatch when the spectrum is not ``{-l, ..., l}``.
    """
    op = np.asarray(op)
    if op.shape != (l.dimension(), l.dimension()):
        raise DimensionMismatch(f"operator shape {op.shape} does not match two_l={l.two_l}")
    check_hermitian(op, tol=1e-10)
    evals, evecs = np.linalg.eigh(op)
    two_m = np.rint(2 * evals).astype(int)
    if np.any(np.abs(evals - two_m / 2) > SNAP_TOL):
        raise EigenvalueMismatch(f"eigenvalues {evals} are not half-integers")
    if sorted(two_m.tolist()) != sorted(l.two_ms.tolist()):
        raise EigenvalueMismatch(
            f"eigenvalues {evals} do not match the spin-{l} spectrum"
        )
    order = np.argsort(-two_m)
    vecs = evecs[:, order]
    projectors = np.einsum("ik,jk->kij", vecs, vecs.conj())
    return ProjectorFamily(
        direction=direction,
        l=l,
        two_ms=tuple(int(t) for t in two_m[order]),
        projectors=_frozen(projectors),
        eigenvectors=_frozen(vecs),
    )


@functools.lru_cache(maxsize=4096)
def direction_projectors(l: SpinLength, d: Direction) -> ProjectorFamily:
    """Cached ``projector_family(spin_component(l, d), l)``."""
    return projector_family(spin_component(l, d), l, direction=d)


def random_state(l_or_dim, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random density matrix (Ginibre ensemble); ``rank=1`` gives a pure state."""
    dim = l_or_dim.dimension() if isinstance(l_or_dim, SpinLength) else int(l_or_dim)
    k = dim if rank is None else rank
    g = rng.normal(size=(dim, k)) + 1j * rng.normal(size=(dim, k))
    rho = g @ g.conj().T
    return DensityMatrix(rho / np.trace(rho).real)
