"""Measurement statistics of spin components.

Outcome probabilities, moments and count arrays are always aligned with
``SpinLength.two_ms``, i.e. ordered from ``m = +l`` down to ``m = -l``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .basis import CoefficientVector, complete_basis, reconstruct_from_coefficients
from .errors import DimensionMismatch, IncompleteRecord, NonPhysicalState, OrderOutOfRange
from .spin import DensityMatrix, Direction, SpinLength, _frozen, direction_projectors, spin_component

PHYSICAL_TOL = 1e-8
DISTINCT_ANGLE = 1e-9


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    direction: Direction
    l: SpinLength
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (self.l.dimension(),):
            raise DimensionMismatch(f"expected {self.l.dimension()} probabilities, got {p.shape}")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError(f"probabilities out of range: {p}")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {p.sum()}")
        object.__setattr__(self, "probabilities", _frozen(p))

    def as_dict(self) -> dict[int, float]:
        """Probabilities keyed by ``2m``, clipped to [0, 1]."""
        clipped = np.clip(self.probabilities, 0.0, 1.0)
        return {int(t): float(p) for t, p in zip(self.l.two_ms, clipped)}


@dataclass(frozen=True, eq=False)
class MomentVector:
    direction: Direction
    moments: np.ndarray  # <L^n> for n = 1..2l

    def __getitem__(self, n: int) -> float:
        if n == 0:
            return 1.0
        return float(self.moments[n - 1])


def born_probabilities(matrix: np.ndarray, l: SpinLength, d: Direction) -> np.ndarray:
    """``Re Tr(rho P_d(m))`` without any positivity check."""
    vecs = direction_projectors(l, d).eigenvectors
    return np.einsum("ik,ij,jk->k", vecs.conj(), matrix, vecs).real


def power_sums(probabilities: np.ndarray, l: SpinLength, orders) -> np.ndarray:
    ms = l.ms
    return np.array([np.dot(ms**k, probabilities) for k in orders])


def outcome_distribution(rho: DensityMatrix, d: Direction) -> OutcomeDistribution:
    """Born-rule distribution of the spin component along ``d``."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    dim = m.shape[0]
    l = SpinLength(dim - 1)
    if np.linalg.eigvalsh(m)[0] < -PHYSICAL_TOL:
        raise NonPhysicalState("state has negative eigenvalues; project it first")
    return OutcomeDistribution(d, l, born_probabilities(m, l, d))


def moments(dist: OutcomeDistribution) -> MomentVector:
    orders = range(1, dist.l.two_l + 1)
    return MomentVector(dist.direction, _frozen(power_sums(dist.probabilities, dist.l, orders)))


def distribution_from_moments(moment_values, l: SpinLength) -> np.ndarray:
    """Invert ``<L^n>, n = 1..2l`` back to ``p(m)`` by a Vandermonde solve."""
    ms = l.ms
    vander = np.vander(ms, l.dimension(), increasing=True).T
    rhs = np.concatenate([[1.0], np.asarray(moment_values, dtype=float)])
    return np.linalg.solve(vander, rhs)


def _predict_spin1(c: CoefficientVector, d: Direction, n: int) -> float:
    st, ct = math.sin(d.theta), math.cos(d.theta)
    sp, cp = math.sin(d.phi), math.cos(d.phi)
    if n == 1:
        return st * cp * c[1, 1] + st * sp * c[1, 2] + ct * c[1, 3]
    return (
        2 / 3
        + 0.5 * st**2 * math.cos(2 * d.phi) * c[2, 1]
        + st**2 * sp * cp * c[2, 2]
        + st * ct * sp * c[2, 3]
        + st * ct * cp * c[2, 4]
        + (1 - 1.5 * st**2) * c[2, 5] / math.sqrt(3)
    )


def predict_moment(coeffs: CoefficientVector, d: Direction, n: int, generic: bool = False) -> float:
    """Predicted ``<L(theta, phi)^n>`` for the state with these coefficients.

    Spin 1 uses the closed angular formulas; other spins (or
    ``generic=True``) go through the density matrix and Born rule.
    """
    l = coeffs.l
    if not 1 <= n <= l.two_l:
        raise OrderOutOfRange(f"moment order {n} outside 1..{l.two_l}")
    if l.two_l == 2 and not generic:
        return _predict_spin1(coeffs, d, n)
    rho = reconstruct_from_coefficients(coeffs, complete_basis(l))
    p = born_probabilities(rho.matrix, l, d)
    return float(power_sums(p, l, [n])[0])


def operator_moment(rho, l: SpinLength, d: Direction, n: int) -> float:
    """``Tr(rho L_d^n)`` computed from operator powers."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return float(np.trace(m @ np.linalg.matrix_power(spin_component(l, d), n)).real)


@dataclass(frozen=True, eq=False)
class RecordEntry:
    """Outcome data for one direction: exact probabilities or integer counts."""

    direction: Direction
    probabilities: np.ndarray | None = None
    counts: np.ndarray | None = None

    def __post_init__(self):
        if (self.probabilities is None) == (self.counts is None):
            raise IncompleteRecord("an entry needs exactly one of probabilities or counts")
        if self.counts is not None:
            c = np.asarray(self.counts)
            if c.ndim == 0 or np.any(c < 0) or np.any(c != np.round(c)):
                raise ValueError("counts must be non-negative integers")
            if c.sum() == 0:
                raise IncompleteRecord("entry has zero total counts")
            object.__setattr__(self, "counts", _frozen(c.astype(np.int64)))
        else:
            object.__setattr__(self, "probabilities", _frozen(np.asarray(self.probabilities, dtype=float)))

    @property
    def shots(self) -> int | None:
        return None if self.counts is None else int(self.counts.sum())

    @property
    def size(self) -> int:
        return len(self.counts if self.counts is not None else self.probabilities)

    def empirical_probabilities(self) -> np.ndarray:
        if self.counts is not None:
            return self.counts / self.counts.sum()
        return self.probabilities


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    l: SpinLength
    entries: tuple[RecordEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        for e in entries:
            if e.size != self.l.dimension():
                raise IncompleteRecord(
                    f"entry at {e.direction} has {e.size} outcomes, expected {self.l.dimension()}"
                )
        for a in range(len(entries)):
            for b in range(a):
                if entries[a].direction.angle_to(entries[b].direction) <= DISTINCT_ANGLE:
                    raise ValueError(f"duplicate direction {entries[a].direction}")
        object.__setattr__(self, "entries", entries)

    @property
    def directions(self) -> list[Direction]:
        return [e.direction for e in self.entries]

    def __len__(self):
        return len(self.entries)


def simulate_record(rho: DensityMatrix, directions) -> MeasurementRecord:
    """Exact probability record of ``rho`` along each direction."""
    l = SpinLength(rho.dim - 1)
    entries = [RecordEntry(d, probabilities=outcome_distribution(rho, d).probabilities) for d in directions]
    return MeasurementRecord(l, tuple(entries))


def _generator(seed: int, index: int) -> np.random.Generator:
    # Philox is counter based; the (seed, index) key makes each direction's
    # stream independent of evaluation order.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def sample_counts(dist: OutcomeDistribution | RecordEntry, shots: int, seed: int, index: int = 0) -> RecordEntry:
    """Multinomial counts for ``shots`` repetitions, reproducible per ``(seed, index)``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p = dist.probabilities if isinstance(dist, OutcomeDistribution) else dist.empirical_probabilities()
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    counts = _generator(seed, index).multinomial(int(shots), p)
    return RecordEntry(dist.direction, counts=counts)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("SPINTOMO_THREADS", "1")))
    except ValueError:
        return 1


def sample_record(record: MeasurementRecord, shots: int, seed: int) -> MeasurementRecord:
    """Replace every entry of an exact record by sampled counts."""
    jobs = list(enumerate(record.entries))
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        entries = list(pool.map(lambda job: sample_counts(job[1], shots, seed, job[0]), jobs))
    return MeasurementRecord(record.l, tuple(entries))
