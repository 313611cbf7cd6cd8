"""Density-matrix reconstruction from spin-component statistics.

Every direction ``d`` contributes the moments ``<L_d^k>, k = 1..2l``.  With
``rho = I/N + 1/2 sum_j c_j lambda_j`` each moment is affine in the
coefficients::

    <L_d^k> = Tr(L_d^k)/N + sum_j (1/2) Tr(lambda_j L_d^k) c_j

The stacked rows form the design matrix; the coefficients follow by
least squares.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import CoefficientVector, OperatorBasis, complete_basis, reconstruct_from_coefficients
from .errors import (
    DimensionMismatch,
    IllConditioned,
    IncompleteRecord,
    InsufficientDirections,
    WrongDirections,
)
from .measurement import MeasurementRecord, power_sums
from .spin import DensityMatrix, Direction, SpinLength, spin_component

CONDITION_LIMIT = 1e6
SVD_CUTOFF = 1e-12
WEIGHT_EPS = 1e-6
MATCH_ANGLE = 1e-9

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)

#: L1 = Lx, L2 = Ly, L3 = (Lx+Ly)/sqrt2, L4 = (Ly+Lz)/sqrt2, L5 = (Lz+Lx)/sqrt2
PAPER_SPIN1_FIVE = (
    Direction(math.pi / 2, 0.0),
    Direction(math.pi / 2, math.pi / 2),
    Direction(math.pi / 2, math.pi / 4),
    Direction(math.pi / 4, math.pi / 2),
    Direction(math.pi / 4, 0.0),
)


def fibonacci_hemisphere(count: int) -> list[Direction]:
    """``count`` well spread directions on the upper hemisphere.

    Opposite directions carry the same information (``L_{-d} = -L_d``), so
    only one hemisphere is used.
    """
    golden = math.pi * (3.0 - math.sqrt(5.0))
    out = []
    for k in range(count):
        z = 1.0 - (k + 0.5) / count
        out.append(Direction(math.acos(z), (k * golden) % (2 * math.pi)))
    return out


def jittered_directions(l: SpinLength, rng: np.random.Generator, count: int | None = None,
                        jitter: float = 0.15) -> list[Direction]:
    """A hemisphere-spread set of ``count`` (default ``4l+1``) directions with random tilts."""
    count = 2 * l.two_l + 1 if count is None else count
    out = []
    for d in fibonacci_hemisphere(count):
        v = d.unit_vector() + jitter * rng.normal(size=3)
        if v[2] < 0:
            v = -v
        out.append(Direction.from_vector(v))
    return out


@dataclass(frozen=True, eq=False)
class DirectionSet:
    l: SpinLength
    directions: tuple[Direction, ...]

    def __post_init__(self):
        object.__setattr__(self, "directions", tuple(self.directions))

    def __len__(self):
        return len(self.directions)

    def __iter__(self):
        return iter(self.directions)

    @property
    def minimum_size(self) -> int:
        return 2 * self.l.two_l + 1

    def is_complete(self) -> bool:
        return len(self) >= self.minimum_size

    def condition_number(self) -> float:
        return build_design_matrix(self.l, self).condition_number()

    def informationally_complete(self) -> bool:
        return self.condition_number() < CONDITION_LIMIT

    @classmethod
    def paper_spin1_five(cls) -> "DirectionSet":
        return cls(SpinLength(2), PAPER_SPIN1_FIVE)


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Affine map from coefficients to predicted moments, one row per (direction, k)."""

    l: SpinLength
    directions: tuple[Direction, ...]
    orders: np.ndarray
    rows: np.ndarray
    offsets: np.ndarray

    def predict(self, coeffs: CoefficientVector | np.ndarray) -> np.ndarray:
        values = coeffs.values if isinstance(coeffs, CoefficientVector) else np.asarray(coeffs)
        return self.offsets + self.rows @ values

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.rows, compute_uv=False)

    def rank(self) -> int:
        s = self.singular_values()
        return int(np.sum(s > SVD_CUTOFF * s[0])) if s.size else 0

    def condition_number(self) -> float:
        s = self.singular_values()
        if self.rank() < self.rows.shape[1]:
            return math.inf
        return float(s[0] / s[-1])


def extended_moment_rows(l: SpinLength, d: Direction, basis: OperatorBasis | None = None) -> np.ndarray:
    """Rows ``[Tr(L_d^k)/N, 1/2 Tr(lambda_j L_d^k) ...]`` for ``k = 0..2l``.

    Row ``k`` dotted with ``[1, c_1, c_2, ...]`` gives ``<L_d^k>``.
    """
    basis = complete_basis(l) if basis is None else basis
    dim = l.dimension()
    ld = spin_component(l, d)
    power = np.eye(dim, dtype=complex)
    out = np.empty((l.two_l + 1, len(basis) + 1))
    for k in range(l.two_l + 1):
        if k:
            power = power @ ld
        out[k, 0] = np.trace(power).real / dim
        out[k, 1:] = 0.5 * np.einsum("jab,ba->j", basis.operators, power).real
    return out


def build_design_matrix(l: SpinLength, dirs, basis: OperatorBasis | None = None) -> DesignMatrix:
    basis = complete_basis(l) if basis is None else basis
    if basis.l != l:
        raise DimensionMismatch(f"basis for spin {basis.l}, expected {l}")
    directions = tuple(dirs)
    blocks = [extended_moment_rows(l, d, basis)[1:] for d in directions]
    stacked = np.concatenate(blocks) if blocks else np.empty((0, len(basis) + 1))
    return DesignMatrix(
        l=l,
        directions=directions,
        orders=np.tile(np.arange(1, l.two_l + 1), len(directions)),
        rows=stacked[:, 1:],
        offsets=stacked[:, 0],
    )


def lstsq_svd(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, float, int]:
    """Least squares by SVD with relative cutoff; returns (x, condition, rank)."""
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > SVD_CUTOFF * s[0]
    rank = int(keep.sum())
    x = vt[keep].T @ ((u[:, keep].T @ b) / s[keep])
    cond = float(s[0] / s[keep][-1]) if rank == a.shape[1] else math.inf
    return x, cond, rank


def left_null_space(a: np.ndarray) -> np.ndarray:
    """Orthonormal columns spanning the combinations of rows that vanish."""
    u, s, _ = np.linalg.svd(a, full_matrices=True)
    rank = int(np.sum(s > SVD_CUTOFF * s[0])) if s.size else 0
    return u[:, rank:]


@dataclass(frozen=True, eq=False)
class ReconstructionReport:
    coefficients: CoefficientVector
    rho_raw: DensityMatrix
    rho_physical: DensityMatrix
    residual_norm: float
    consistency_residuals: tuple[float, ...]
    condition_number: float
    rank: int = field(default=0)


def psd_project(rho_raw: DensityMatrix | np.ndarray) -> DensityMatrix:
    """Nearest unit-trace PSD matrix in Frobenius norm.

    The eigenvalues are projected onto the probability simplex while the
    eigenvectors are kept.
    """
    m = rho_raw.matrix if isinstance(rho_raw, DensityMatrix) else np.asarray(rho_raw, dtype=complex)
    evals, evecs = np.linalg.eigh(m)
    if evals[0] >= 0:
        return DensityMatrix(m, dims=getattr(rho_raw, "dims", None))
    projected = project_to_simplex(evals)
    out = (evecs * projected) @ evecs.conj().T
    return DensityMatrix(out, dims=getattr(rho_raw, "dims", None))


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{w >= 0, sum w = 1}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, len(u) + 1)
    k = np.nonzero(u - (css - 1.0) / j > 0)[0][-1]
    theta = (css[k] - 1.0) / (k + 1)
    return np.maximum(v - theta, 0.0)


def observed_moments(record: MeasurementRecord) -> np.ndarray:
    orders = range(1, record.l.two_l + 1)
    return np.concatenate([power_sums(e.empirical_probabilities(), record.l, orders) for e in record.entries])


def _row_weights(record: MeasurementRecord) -> np.ndarray:
    # shots / Var(m^k): for spin 1 and k = 2 this is shots / (p0 (1 - p0))
    l = record.l
    weights = []
    for e in record.entries:
        p = e.empirical_probabilities()
        shots = e.shots or 1
        for k in range(1, l.two_l + 1):
            var = np.dot(l.ms ** (2 * k), p) - np.dot(l.ms**k, p) ** 2
            weights.append(shots / (max(var, 0.0) + WEIGHT_EPS))
    return np.array(weights)


def _check_record(record: MeasurementRecord, l: SpinLength | None) -> SpinLength:
    if l is not None and l != record.l:
        raise DimensionMismatch(f"record is for spin {record.l}, expected {l}")
    for e in record.entries:
        if e.size != record.l.dimension():
            raise IncompleteRecord(f"direction {e.direction} lacks outcome data")
    return record.l


def reconstruct_linear(record: MeasurementRecord, l: SpinLength | None = None,
                       basis: OperatorBasis | None = None, weighted: bool = False) -> ReconstructionReport:
    """Least-squares linear inversion of a record along at least ``4l+1`` directions."""
    l = _check_record(record, l)
    basis = complete_basis(l) if basis is None else basis
    needed = 2 * l.two_l + 1
    if len(record) < needed:
        raise InsufficientDirections(f"spin {l} needs at least {needed} directions, got {len(record)}")
    design = build_design_matrix(l, record.directions, basis)
    observed = observed_moments(record)
    target = observed - design.offsets
    if weighted:
        w = np.sqrt(_row_weights(record))
        x, cond, rank = lstsq_svd(design.rows * w[:, None], target * w)
    else:
        x, cond, rank = lstsq_svd(design.rows, target)
    if rank < design.rows.shape[1] or cond >= CONDITION_LIMIT:
        raise IllConditioned(
            f"design matrix rank {rank}/{design.rows.shape[1]}, condition number {cond:.3g}"
        )
    coeffs = CoefficientVector(l, x)
    rho_raw = reconstruct_from_coefficients(coeffs, basis)
    residual = observed - design.predict(x)
    if l.two_l == 2 and match_five_directions(record) is not None:
        consistency = consistency_residuals(record)
    else:
        consistency = tuple(float(r) for r in left_null_space(design.rows).T @ target)
    return ReconstructionReport(
        coefficients=coeffs,
        rho_raw=rho_raw,
        rho_physical=psd_project(rho_raw),
        residual_norm=float(np.sqrt(np.mean(residual**2))),
        consistency_residuals=consistency,
        condition_number=cond,
        rank=rank,
    )


# --- explicit spin-1 protocol -------------------------------------------------

def match_five_directions(record: MeasurementRecord) -> list[int] | None:
    """Entry index for each of the five preset directions, or None."""
    if record.l.two_l != 2 or len(record) != 5:
        return None
    index = []
    for target in PAPER_SPIN1_FIVE:
        hits = [k for k, e in enumerate(record.entries) if e.direction.angle_to(target) <= MATCH_ANGLE]
        if len(hits) != 1:
            return None
        index.append(hits[0])
    return index


def five_direction_statistics(record: MeasurementRecord) -> tuple[np.ndarray, np.ndarray]:
    """``(p_i(0), p_i(+1) - p_i(-1))`` for the five preset directions, in preset order."""
    index = match_five_directions(record)
    if index is None:
        raise WrongDirections("record does not consist of exactly the five preset spin-1 directions")
    probs = np.array([record.entries[k].empirical_probabilities() for k in index])
    return probs[:, 1], probs[:, 0] - probs[:, 2]


def _spin1_quadratic(p0: np.ndarray) -> np.ndarray:
    p1, p2, p3, p4, p5 = p0
    return np.array([
        -(p1 - p2),
        p1 + p2 - 2 * p3,
        1 - p1 - 2 * p4,
        1 - p2 - 2 * p5,
        SQRT3 * (p1 + p2 - 2 / 3),
    ])


# Least-squares inverse of the linear rows (Lx, Ly, (Lx+Ly)/sqrt2, (Ly+Lz)/sqrt2, (Lz+Lx)/sqrt2).
_SPIN1_LINEAR_PINV = np.array([
    [7 / 12, -1 / 12, SQRT2 / 4, -SQRT2 / 6, SQRT2 / 6],
    [-1 / 12, 7 / 12, SQRT2 / 4, SQRT2 / 6, -SQRT2 / 6],
    [-1 / 4, -1 / 4, -SQRT2 / 4, SQRT2 / 2, SQRT2 / 2],
])

#: Inversion formulas derived from the design matrix, as functions of
#: ``p0[i] = p_i(0)`` and ``D[i] = p_i(+1) - p_i(-1)`` (0-based direction index).
DERIVED_SPIN1_FORMULAS = {
    "S_xy": lambda p0, D: -(p0[0] - p0[1]),
    "Q_xy": lambda p0, D: p0[0] + p0[1] - 2 * p0[2],
    "Q_yz": lambda p0, D: 1 - p0[0] - 2 * p0[3],
    "Q_zx": lambda p0, D: 1 - p0[1] - 2 * p0[4],
    "G_z": lambda p0, D: SQRT3 * (p0[0] + p0[1] - 2 / 3),
    "L_x": lambda p0, D: D[0],
    "L_y": lambda p0, D: D[1],
    "L_z": lambda p0, D: (D[3] + D[4] - D[2]) / SQRT2,
}

#: The same relations as printed in the original five-direction protocol.
PUBLISHED_SPIN1_FORMULAS = {
    "S_xy": lambda p0, D: -(p0[0] - p0[1]),
    "Q_xy": lambda p0, D: p0[0] + p0[1] - 2 * p0[2],
    "Q_yz": lambda p0, D: p0[0] - 2 * p0[3] + 1,
    "Q_zx": lambda p0, D: p0[1] - 2 * p0[4] + 1,
    "G_z": lambda p0, D: SQRT3 * (p0[0] + p0[1] - 2 / 3),
    "L_x": lambda p0, D: D[0],
    "L_y": lambda p0, D: D[1],
    "L_z": lambda p0, D: -SQRT2 * (D[2] - D[3] - D[4]),
}

#: basis label of each named spin-1 coefficient
SPIN1_LABELS = {
    "L_x": (1, 1), "L_y": (1, 2), "L_z": (1, 3),
    "S_xy": (2, 1), "Q_xy": (2, 2), "Q_yz": (2, 3), "Q_zx": (2, 4), "G_z": (2, 5),
}


def consistency_residuals(record: MeasurementRecord) -> tuple[float, float]:
    """Left minus right side of the two relations predicting ``L_1``, ``L_2`` from ``L_3..L_5``.

    Both combinations annihilate the linear design rows, so they vanish for
    exact statistics of any state.
    """
    _, D = five_direction_statistics(record)
    r1 = D[0] - (D[2] - D[3] + D[4]) / SQRT2
    r2 = D[1] - (D[2] + D[3] - D[4]) / SQRT2
    return float(r1), float(r2)


def reconstruct_spin1_explicit(record: MeasurementRecord) -> ReconstructionReport:
    """Closed-form reconstruction from the five preset spin-1 directions.

    The quadratic coefficients follow exactly from the five ``p_i(0)``; the
    linear ones use the least-squares combination of the five
    ``p_i(+1) - p_i(-1)``, which makes the result identical to
    :func:`reconstruct_linear` on any record.
    """
    p0, D = five_direction_statistics(record)
    l = SpinLength(2)
    basis = complete_basis(l)
    coeffs = CoefficientVector(l, np.concatenate([_SPIN1_LINEAR_PINV @ D, _spin1_quadratic(p0)]))
    rho_raw = reconstruct_from_coefficients(coeffs, basis)
    design = build_design_matrix(l, PAPER_SPIN1_FIVE, basis)
    index = match_five_directions(record)
    ordered = MeasurementRecord(l, tuple(record.entries[k] for k in index))
    residual = observed_moments(ordered) - design.predict(coeffs)
    return ReconstructionReport(
        coefficients=coeffs,
        rho_raw=rho_raw,
        rho_physical=psd_project(rho_raw),
        residual_norm=float(np.sqrt(np.mean(residual**2))),
        consistency_residuals=consistency_residuals(record),
        condition_number=design.condition_number(),
        rank=design.rank(),
    )
