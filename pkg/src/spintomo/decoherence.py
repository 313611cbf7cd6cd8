"""Isotropic spin diffusion.

The Lindblad generator ``-Gamma sum_i (Li^2 rho/2 + rho Li^2/2 - Li rho Li)``
equals ``-Gamma/2 sum_i [Li, [Li, rho]]``; a rank-``n`` operator is an
eigen-operator of the double commutator with eigenvalue ``n(n+1)``.  Every
order-``n`` expansion coefficient therefore decays as
``exp(-Gamma t n(n+1)/2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import CoefficientVector, complete_basis, decompose, reconstruct_from_coefficients
from .errors import DimensionMismatch, StepTooLarge
from .spin import DensityMatrix, SpinLength, build_spin_operators

STABILITY_LIMIT = 0.1


@dataclass(frozen=True)
class DecoherenceParams:
    gamma: float | None = None
    t: float | None = None
    gamma_t: float | None = None

    def __post_init__(self):
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.t is not None and self.t < 0:
            raise ValueError("t must be >= 0")
        if self.gamma is not None and self.t is not None:
            product = self.gamma * self.t
            if self.gamma_t is not None and abs(self.gamma_t - product) > 1e-15:
                raise ValueError("gamma_t disagrees with gamma * t")
            object.__setattr__(self, "gamma_t", product)
        if self.gamma_t is None or self.gamma_t < 0:
            raise ValueError("need a non-negative gamma_t (or gamma and t)")

    @classmethod
    def from_misalignment(cls, delta_theta: float) -> "DecoherenceParams":
        """Angular spread ``delta_theta`` corresponds to ``Gamma t = delta_theta**2 / 2``."""
        return cls(gamma_t=delta_theta**2 / 2)


def _spin_of(m: np.ndarray, l: SpinLength | None) -> SpinLength:
    spin = SpinLength(m.shape[0] - 1)
    if l is not None and l != spin:
        raise DimensionMismatch(f"state of dimension {m.shape[0]} is not spin {l}")
    return spin


def lindblad_rhs(rho, gamma: float, l: SpinLength | None = None) -> np.ndarray:
    """``d rho / dt`` under isotropic spin diffusion at rate ``gamma``."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    spin = _spin_of(m, l)
    out = np.zeros_like(m, dtype=complex)
    for li in build_spin_operators(spin):
        l2 = li @ li
        out += 0.5 * (l2 @ m + m @ l2) - li @ m @ li
    return -gamma * out


def damping_factor(n: int, gamma_t: float) -> float:
    return math.exp(-gamma_t * n * (n + 1) / 2)


def evolve_closed_form(coeffs: CoefficientVector, gamma_t: float) -> CoefficientVector:
    """Scale every order-``n`` coefficient by ``exp(-gamma_t n(n+1)/2)``."""
    if gamma_t < 0:
        raise ValueError("gamma_t must be >= 0")
    orders = complete_basis(coeffs.l).orders()
    return CoefficientVector(coeffs.l, coeffs.values * np.exp(-gamma_t * orders * (orders + 1) / 2))


def evolve_state(rho: DensityMatrix, gamma_t: float) -> DensityMatrix:
    """Closed-form evolution of a density matrix."""
    basis = complete_basis(SpinLength(rho.dim - 1))
    evolved = reconstruct_from_coefficients(evolve_closed_form(decompose(rho, basis), gamma_t), basis)
    return DensityMatrix(evolved.matrix, raw=rho.raw)


def stable_step(gamma: float, l: SpinLength, fraction: float = 1.0) -> float:
    """Largest step accepted by :func:`evolve_numeric`, times ``fraction``."""
    return fraction * STABILITY_LIMIT / (gamma * l.l**2) if gamma > 0 else math.inf


def evolve_numeric(rho0: DensityMatrix, gamma: float, t: float, dt: float) -> DensityMatrix:
    """Classical fourth-order Runge-Kutta integration of :func:`lindblad_rhs`.

    The step is shrunk to ``t / ceil(t / dt)`` so the integration ends
    exactly at ``t`` (a single step when ``dt >= t``).  Raises StepTooLarge when ``dt * gamma * l**2 > 0.1``
    or when a physical initial state loses positivity along the way.
    """
    if dt <= 0 or t < 0:
        raise ValueError("need dt > 0 and t >= 0")
    l = SpinLength(rho0.dim - 1)
    if dt * gamma * l.l**2 > STABILITY_LIMIT:
        raise StepTooLarge(f"dt * gamma * l^2 = {dt * gamma * l.l ** 2:.3g} exceeds {STABILITY_LIMIT}")
    rho = np.array(rho0.matrix, dtype=complex)
    if t == 0:
        return rho0
    monitor = not rho0.raw and rho0.is_physical()
    steps = math.ceil(t / dt - 1e-12)
    h = t / steps
    for _ in range(steps):
        k1 = lindblad_rhs(rho, gamma, l)
        k2 = lindblad_rhs(rho + 0.5 * h * k1, gamma, l)
        k3 = lindblad_rhs(rho + 0.5 * h * k2, gamma, l)
        k4 = lindblad_rhs(rho + h * k3, gamma, l)
        rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if monitor and np.linalg.eigvalsh(rho)[0] < -1e-8:
            raise StepTooLarge("integration left the set of positive states; reduce dt")
    return DensityMatrix(rho, raw=rho0.raw)


def misalignment_factor(n: int, delta_theta: float) -> float:
    """Reduction ``exp(-delta_theta**2 n(n+1)/4)`` of order-``n`` statistics."""
    if n < 1 or delta_theta < 0:
        raise ValueError("need n >= 1 and delta_theta >= 0")
    return math.exp(-(delta_theta**2) * n * (n + 1) / 4)


def raising_moment(rho, l: SpinLength, n: int) -> complex:
    """``Tr((L+)^n rho)``."""
    lx, ly, _ = build_spin_operators(l)
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return complex(np.trace(np.linalg.matrix_power(lx + 1j * ly, n) @ m))
