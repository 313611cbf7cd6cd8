"""Two spin systems measured jointly.

The state is expanded in products of the single-system bases extended by
the identity, ``E_0 = 1`` and ``E_a = lambda_a``::

    rho_AB = sum_ab w_ab <E_a x E_b> E_a x E_b

with ``w_00 = 1/(N_A N_B)``, ``w_a0 = 1/(2 N_B)``, ``w_0b = 1/(2 N_A)`` and
``w_ab = 1/4``.  Subsystem A is the left tensor factor, so the joint basis
index is ``index_A * N_B + index_B``.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .basis import complete_basis
from .errors import DimensionMismatch, IllConditioned, IncompleteRecord, InsufficientSettings, OrderOutOfRange, NonPhysicalState
from .measurement import (
    DISTINCT_ANGLE,
    PHYSICAL_TOL,
    MeasurementRecord,
    RecordEntry,
    _generator,
    worker_count,
)
from .spin import DensityMatrix, Direction, SpinLength, _frozen, direction_projectors
from .tomography import CONDITION_LIMIT, ReconstructionReport, extended_moment_rows, lstsq_svd, psd_project


class ProductLabel(NamedTuple):
    n_a: int
    i: int
    n_b: int
    j: int

    @property
    def key(self) -> str:
        return f"{self.n_a},{self.i},{self.n_b},{self.j}"


def _extended_labels(l: SpinLength) -> list[tuple[int, int]]:
    return [(0, 1)] + [(b.n, b.i) for b in complete_basis(l).labels]


def _extended_operators(l: SpinLength) -> np.ndarray:
    ops = complete_basis(l).operators
    return np.concatenate([np.eye(l.dimension(), dtype=complex)[None], ops])


def expansion_weights(l_a: SpinLength, l_b: SpinLength) -> np.ndarray:
    na, nb = l_a.dimension(), l_b.dimension()
    w = np.full((na * na, nb * nb), 0.25)
    w[0, :] = 1 / (2 * na)
    w[:, 0] = 1 / (2 * nb)
    w[0, 0] = 1 / (na * nb)
    return w


@dataclass(frozen=True, eq=False)
class ProductBasis:
    """All products ``E_a x E_b``; ``n = 0`` marks the identity factor."""

    l_a: SpinLength
    l_b: SpinLength

    @property
    def labels(self) -> list[ProductLabel]:
        return [ProductLabel(na, i, nb, j)
                for (na, i), (nb, j) in itertools.product(_extended_labels(self.l_a), _extended_labels(self.l_b))]

    def operators(self) -> np.ndarray:
        ea, eb = _extended_operators(self.l_a), _extended_operators(self.l_b)
        return np.array([np.kron(a, b) for a, b in itertools.product(ea, eb)])

    def __len__(self):
        return (self.l_a.dimension() * self.l_b.dimension()) ** 2

    def correlation_count(self) -> int:
        """Members with neither factor equal to the identity."""
        return self.l_a.n_coefficients * self.l_b.n_coefficients


@dataclass(frozen=True, eq=False)
class ProductCoefficients:
    """``<E_a x E_b>`` as a table of shape ``(N_A**2, N_B**2)``; entry [0, 0] is 1."""

    l_a: SpinLength
    l_b: SpinLength
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        shape = (self.l_a.dimension() ** 2, self.l_b.dimension() ** 2)
        if t.shape != shape:
            raise DimensionMismatch(f"coefficient table shape {t.shape}, expected {shape}")
        object.__setattr__(self, "table", _frozen(t))

    @property
    def local_a(self) -> np.ndarray:
        return self.table[1:, 0]

    @property
    def local_b(self) -> np.ndarray:
        return self.table[0, 1:]

    @property
    def correlations(self) -> np.ndarray:
        return self.table[1:, 1:]

    @property
    def values(self) -> np.ndarray:
        return self.table.ravel()[1:]

    def items(self):
        labels = ProductBasis(self.l_a, self.l_b).labels
        return [(lab.key, float(v)) for lab, v in zip(labels, self.table.ravel())]


def _as_matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)


def decompose_bipartite(rho, l_a: SpinLength, l_b: SpinLength) -> ProductCoefficients:
    na, nb = l_a.dimension(), l_b.dimension()
    m = _as_matrix(rho)
    if m.shape != (na * nb, na * nb):
        raise DimensionMismatch(f"state of shape {m.shape} for dims ({na}, {nb})")
    t = m.reshape(na, nb, na, nb)
    ea, eb = _extended_operators(l_a), _extended_operators(l_b)
    table = np.einsum("aij,bkl,jlik->ab", ea, eb, t)
    if np.max(np.abs(table.imag)) > 1e-10:
        raise ValueError("state is not Hermitian")
    return ProductCoefficients(l_a, l_b, table.real)


def reconstruct_bipartite_from_coefficients(coeffs: ProductCoefficients) -> DensityMatrix:
    l_a, l_b = coeffs.l_a, coeffs.l_b
    na, nb = l_a.dimension(), l_b.dimension()
    w = expansion_weights(l_a, l_b) * coeffs.table
    ea, eb = _extended_operators(l_a), _extended_operators(l_b)
    rho = np.einsum("ab,aij,bkl->ikjl", w, ea, eb).reshape(na * nb, na * nb)
    return DensityMatrix(rho, raw=True, dims=(na, nb))


def partial_trace(rho, dims: tuple[int, int], keep: str = "A") -> np.ndarray:
    na, nb = dims
    t = _as_matrix(rho).reshape(na, nb, na, nb)
    return np.einsum("ikjk->ij", t) if keep.upper() == "A" else np.einsum("kikj->ij", t)


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """``p(m_A, m_B)``, rows ordered by ``m_A`` and columns by ``m_B`` (descending)."""

    l_a: SpinLength
    l_b: SpinLength
    direction_a: Direction
    direction_b: Direction
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (self.l_a.dimension(), self.l_b.dimension()):
            raise DimensionMismatch(f"joint table shape {p.shape}")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"joint probabilities sum to {p.sum()}")
        object.__setattr__(self, "probabilities", _frozen(p))

    def marginal_a(self) -> np.ndarray:
        return self.probabilities.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        return self.probabilities.sum(axis=0)


def _joint_probabilities(m: np.ndarray, l_a, l_b, d_a, d_b) -> np.ndarray:
    va = direction_projectors(l_a, d_a).eigenvectors
    vb = direction_projectors(l_b, d_b).eigenvectors
    na, nb = l_a.dimension(), l_b.dimension()
    t = m.reshape(na, nb, na, nb)
    return np.einsum("ia,kb,ikjl,ja,lb->ab", va.conj(), vb.conj(), t, va, vb).real


def joint_distribution(rho_ab: DensityMatrix, l_a: SpinLength, l_b: SpinLength,
                       d_a: Direction, d_b: Direction) -> JointDistribution:
    m = _as_matrix(rho_ab)
    if m.shape[0] != l_a.dimension() * l_b.dimension():
        raise DimensionMismatch(f"state dimension {m.shape[0]} does not match spins {l_a}, {l_b}")
    if np.linalg.eigvalsh(m)[0] < -PHYSICAL_TOL:
        raise NonPhysicalState("joint state has negative eigenvalues")
    return JointDistribution(l_a, l_b, d_a, d_b, _joint_probabilities(m, l_a, l_b, d_a, d_b))


def correlated_moment(joint: JointDistribution, n_a: int, n_b: int) -> float:
    """``sum m_A**n_a m_B**n_b p(m_A, m_B)``; order 0 selects the marginal."""
    if not (0 <= n_a <= joint.l_a.two_l and 0 <= n_b <= joint.l_b.two_l):
        raise OrderOutOfRange(f"orders ({n_a}, {n_b}) outside the admissible range")
    ma, mb = joint.l_a.ms**n_a, joint.l_b.ms**n_b
    return float(ma @ joint.probabilities @ mb)


@dataclass(frozen=True, eq=False)
class JointEntry:
    direction_a: Direction
    direction_b: Direction
    probabilities: np.ndarray | None = None
    counts: np.ndarray | None = None

    def __post_init__(self):
        if (self.probabilities is None) == (self.counts is None):
            raise IncompleteRecord("a joint entry needs exactly one of probabilities or counts")
        if self.counts is not None:
            c = np.asarray(self.counts)
            if c.ndim != 2 or np.any(c < 0) or np.any(c != np.round(c)) or c.sum() == 0:
                raise ValueError("counts must be a non-empty 2-d table of non-negative integers")
            object.__setattr__(self, "counts", _frozen(c.astype(np.int64)))
        else:
            p = np.asarray(self.probabilities, dtype=float)
            if p.ndim != 2 or abs(p.sum() - 1.0) > 1e-10:
                raise ValueError("joint probabilities must be a 2-d table summing to 1")
            object.__setattr__(self, "probabilities", _frozen(p))

    @property
    def shots(self) -> int | None:
        return None if self.counts is None else int(self.counts.sum())

    @property
    def shape(self) -> tuple[int, int]:
        return (self.counts if self.counts is not None else self.probabilities).shape

    def empirical_probabilities(self) -> np.ndarray:
        if self.counts is not None:
            return self.counts / self.counts.sum()
        return self.probabilities


@dataclass(frozen=True, eq=False)
class JointRecord:
    l_a: SpinLength
    l_b: SpinLength
    entries: tuple[JointEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        shape = (self.l_a.dimension(), self.l_b.dimension())
        for e in entries:
            if e.shape != shape:
                raise IncompleteRecord(f"joint entry has shape {e.shape}, expected {shape}")
        for a in range(len(entries)):
            for b in range(a):
                ea, eb = entries[a], entries[b]
                if (ea.direction_a.angle_to(eb.direction_a) <= DISTINCT_ANGLE
                        and ea.direction_b.angle_to(eb.direction_b) <= DISTINCT_ANGLE):
                    raise ValueError("duplicate measurement setting in joint record")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    @property
    def probability_count(self) -> int:
        return sum(e.shape[0] * e.shape[1] for e in self.entries)


def product_settings(dirs_a, dirs_b) -> list[tuple[Direction, Direction]]:
    return list(itertools.product(dirs_a, dirs_b))


def simulate_joint_record(rho_ab: DensityMatrix, l_a: SpinLength, l_b: SpinLength, settings) -> JointRecord:
    entries = [
        JointEntry(da, db, probabilities=joint_distribution(rho_ab, l_a, l_b, da, db).probabilities)
        for da, db in settings
    ]
    return JointRecord(l_a, l_b, tuple(entries))


def sample_joint_record(record: JointRecord, shots: int, seed: int) -> JointRecord:
    """Multinomial counts per setting, keyed by ``(seed, setting index)``."""
    if shots < 1:
        raise ValueError("shots must be >= 1")

    def draw(job):
        index, e = job
        p = np.clip(e.empirical_probabilities(), 0.0, None).ravel()
        counts = _generator(seed, index).multinomial(int(shots), p / p.sum())
        return JointEntry(e.direction_a, e.direction_b, counts=counts.reshape(e.shape))

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        entries = list(pool.map(draw, enumerate(record.entries)))
    return JointRecord(record.l_a, record.l_b, tuple(entries))


def marginal_record(record: JointRecord, side: str = "A") -> MeasurementRecord:
    """Single-system record of one side, averaging marginals that share a direction."""
    side = side.upper()
    l = record.l_a if side == "A" else record.l_b
    groups: list[tuple[Direction, list[np.ndarray]]] = []
    for e in record.entries:
        d = e.direction_a if side == "A" else e.direction_b
        p = e.empirical_probabilities()
        marg = p.sum(axis=1) if side == "A" else p.sum(axis=0)
        for gd, members in groups:
            if gd.angle_to(d) <= DISTINCT_ANGLE:
                members.append(marg)
                break
        else:
            groups.append((d, [marg]))
    entries = [RecordEntry(d, probabilities=np.mean(ms, axis=0)) for d, ms in groups]
    return MeasurementRecord(l, tuple(entries))


def build_joint_design(l_a: SpinLength, l_b: SpinLength, settings) -> tuple[np.ndarray, np.ndarray]:
    """Rows for every setting and every ``(k_A, k_B) != (0, 0)``.

    Each row is the Kronecker product of the two single-system moment rows;
    returns ``(rows, offsets)`` with the constant column split off.
    """
    rows = []
    cache: dict = {}

    def local(l, d):
        key = (l, d)
        if key not in cache:
            cache[key] = extended_moment_rows(l, d)
        return cache[key]

    for d_a, d_b in settings:
        ua, ub = local(l_a, d_a), local(l_b, d_b)
        for ka in range(l_a.two_l + 1):
            for kb in range(l_b.two_l + 1):
                if ka or kb:
                    rows.append(np.kron(ua[ka], ub[kb]))
    rows = np.array(rows)
    return rows[:, 1:], rows[:, 0]


def joint_observations(record: JointRecord) -> np.ndarray:
    ma = [record.l_a.ms**k for k in range(record.l_a.two_l + 1)]
    mb = [record.l_b.ms**k for k in range(record.l_b.two_l + 1)]
    obs = []
    for e in record.entries:
        p = e.empirical_probabilities()
        for ka in range(record.l_a.two_l + 1):
            for kb in range(record.l_b.two_l + 1):
                if ka or kb:
                    obs.append(ma[ka] @ p @ mb[kb])
    return np.array(obs)


def required_settings(l_a: SpinLength, l_b: SpinLength) -> int:
    return (2 * l_a.two_l + 1) * (2 * l_b.two_l + 1)


def reconstruct_bipartite(record: JointRecord, l_a: SpinLength | None = None,
                          l_b: SpinLength | None = None) -> ReconstructionReport:
    """Least-squares reconstruction of a two-spin state from joint statistics."""
    l_a = record.l_a if l_a is None else l_a
    l_b = record.l_b if l_b is None else l_b
    if (l_a, l_b) != (record.l_a, record.l_b):
        raise DimensionMismatch("record spins do not match the requested spins")
    needed = required_settings(l_a, l_b)
    if len(record) < needed:
        raise InsufficientSettings(f"need at least {needed} joint settings, got {len(record)}")
    settings = [(e.direction_a, e.direction_b) for e in record.entries]
    rows, offsets = build_joint_design(l_a, l_b, settings)
    observed = joint_observations(record)
    x, cond, rank = lstsq_svd(rows, observed - offsets)
    if rank < rows.shape[1] or cond >= CONDITION_LIMIT:
        raise IllConditioned(f"joint design matrix rank {rank}/{rows.shape[1]}, condition {cond:.3g}")
    table = np.concatenate([[1.0], x]).reshape(l_a.dimension() ** 2, l_b.dimension() ** 2)
    coeffs = ProductCoefficients(l_a, l_b, table)
    rho_raw = reconstruct_bipartite_from_coefficients(coeffs)
    residual = observed - offsets - rows @ x
    return ReconstructionReport(
        coefficients=coeffs,
        rho_raw=rho_raw,
        rho_physical=psd_project(rho_raw),
        residual_norm=float(np.sqrt(np.mean(residual**2))),
        consistency_residuals=(),
        condition_number=cond,
        rank=rank,
    )
