import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spintomo import (
    CoefficientVector,
    DensityMatrix,
    Direction,
    MeasurementRecord,
    RecordEntry,
    SpinLength,
    complete_basis,
    decompose,
    moments,
    outcome_distribution,
    predict_moment,
    sample_counts,
)
from spintomo.errors import DimensionMismatch, NonPhysicalState, OrderOutOfRange
from spintomo.measurement import (
    OutcomeDistribution,
    distribution_from_moments,
    operator_moment,
    sample_record,
    simulate_record,
)
from spintomo.spin import X_AXIS, Z_AXIS, random_state
from spintomo.tomography import PAPER_SPIN1_FIVE

L1 = SpinLength(2)


def uniform(l=L1, d=Z_AXIS):
    n = l.dimension()
    return OutcomeDistribution(d, l, np.full(n, 1 / n))


def test_up_state_along_z():
    p = outcome_distribution(DensityMatrix.basis_state(L1, 2), Z_AXIS)
    assert np.allclose(p.probabilities, [1, 0, 0])


def test_mixed_state_isotropic(rng):
    rho = DensityMatrix.maximally_mixed(3)
    for _ in range(10):
        d = Direction(rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
        assert np.allclose(outcome_distribution(rho, d).probabilities, 1 / 3)


def test_m0_state_along_x():
    p = outcome_distribution(DensityMatrix.basis_state(L1, 0), X_AXIS).as_dict()
    assert p[0] == pytest.approx(0, abs=1e-15)
    assert p[2] == pytest.approx(0.5) and p[-2] == pytest.approx(0.5)


def test_moments_examples():
    m = moments(uniform())
    assert m[0] == 1 and m[1] == pytest.approx(0) and m[2] == pytest.approx(2 / 3)
    up = moments(OutcomeDistribution(Z_AXIS, L1, np.array([1.0, 0, 0])))
    assert (up[1], up[2]) == (1, 1)
    ends = moments(OutcomeDistribution(Z_AXIS, L1, np.array([0.5, 0, 0.5])))
    assert (ends[1], ends[2]) == (0, 1)


@given(two_l=st.integers(1, 8), seed=st.integers(0, 2**32 - 1),
       theta=st.floats(0, math.pi), phi=st.floats(0, 2 * math.pi))
@settings(max_examples=50, deadline=None)
def test_born_rule_matches_operator_powers(two_l, seed, theta, phi):
    l = SpinLength(two_l)
    rho = random_state(l, np.random.default_rng(seed))
    d = Direction(theta, phi)
    mv = moments(outcome_distribution(rho, d))
    for n in range(1, two_l + 1):
        assert mv[n] == pytest.approx(operator_moment(rho, l, d, n), abs=1e-10 * max(1, l.l**n))


@pytest.mark.parametrize("two_l", range(1, 9))
def test_vandermonde_inversion(two_l, rng):
    l = SpinLength(two_l)
    p = rng.dirichlet(np.ones(l.dimension()))
    dist = OutcomeDistribution(Z_AXIS, l, p)
    assert np.allclose(distribution_from_moments(moments(dist).moments, l), p, atol=1e-8)


def test_closed_forms_agree_with_generic(rng):
    for _ in range(100):
        rho = random_state(L1, rng)
        c = decompose(rho, complete_basis(L1))
        d = Direction(rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
        for n in (1, 2):
            assert predict_moment(c, d, n) == pytest.approx(predict_moment(c, d, n, generic=True), abs=1e-10)
            assert predict_moment(c, d, n) == pytest.approx(operator_moment(rho, L1, d, n), abs=1e-10)


def test_quadratic_offset_at_zero_coefficients():
    c = CoefficientVector.zeros(L1)
    for d in PAPER_SPIN1_FIVE:
        assert predict_moment(c, d, 1) == 0
        assert predict_moment(c, d, 2) == pytest.approx(2 / 3)


def test_predict_spin_three_halves(rng):
    l = SpinLength(3)
    rho = random_state(l, rng)
    c = decompose(rho, complete_basis(l))
    d = Direction(0.7, 1.1)
    assert predict_moment(c, d, 3) == pytest.approx(operator_moment(rho, l, d, 3), abs=1e-10)
    with pytest.raises(OrderOutOfRange):
        predict_moment(c, d, 4)


def test_unphysical_state_rejected():
    raw = DensityMatrix(np.diag([1.2, 0.0, -0.2]), raw=True)
    with pytest.raises(NonPhysicalState):
        outcome_distribution(raw, Z_AXIS)


def test_distribution_validation():
    with pytest.raises(ValueError):
        OutcomeDistribution(Z_AXIS, L1, np.array([0.5, 0.5, 0.5]))
    with pytest.raises(ValueError):
        OutcomeDistribution(Z_AXIS, L1, np.array([0.5, 0.5]))


def test_deterministic_distribution_sampling():
    e = sample_counts(OutcomeDistribution(Z_AXIS, L1, np.array([1.0, 0, 0])), 1000, seed=1)
    assert list(e.counts) == [1000, 0, 0]


def test_uniform_sampling_five_sigma():
    e = sample_counts(uniform(), 3_000_000, seed=7)
    assert np.max(np.abs(e.empirical_probabilities() - 1 / 3)) < 3e-3
    sigma = math.sqrt((1 / 3) * (2 / 3) / 3_000_000)
    assert np.max(np.abs(e.empirical_probabilities() - 1 / 3)) < 5 * sigma


def test_sampling_is_deterministic(monkeypatch, rng):
    rec = simulate_record(random_state(L1, rng), PAPER_SPIN1_FIVE)
    a = sample_record(rec, 500, seed=11)
    monkeypatch.setenv("SPINTOMO_THREADS", "4")
    b = sample_record(rec, 500, seed=11)
    for x, y in zip(a.entries, b.entries):
        assert np.array_equal(x.counts, y.counts)
    c = sample_record(rec, 500, seed=12)
    assert any(not np.array_equal(x.counts, y.counts) for x, y in zip(a.entries, c.entries))


def test_sampling_independent_of_direction_order(rng):
    rec = simulate_record(random_state(L1, rng), PAPER_SPIN1_FIVE)
    e = rec.entries[3]
    assert np.array_equal(sample_counts(e, 999, seed=5, index=3).counts,
                          sample_record(rec, 999, seed=5).entries[3].counts)


def test_moment_error_scales_as_inverse_sqrt_shots(rng):
    l = SpinLength(3)
    rho = random_state(l, rng)
    dist = outcome_distribution(rho, Direction(1.0, 0.4))
    exact = moments(dist).moments
    errors = []
    shot_list = [10**3, 10**5, 10**7]
    for shots in shot_list:
        errs = [np.linalg.norm(moments(OutcomeDistribution(dist.direction, l, sample_counts(dist, shots, s)
                                                           .empirical_probabilities())).moments - exact)
                for s in range(40)]
        errors.append(np.sqrt(np.mean(np.square(errs))))
    slope = np.polyfit(np.log10(shot_list), np.log10(errors), 1)[0]
    assert -0.6 < slope < -0.4


def test_record_validation(rng):
    rho = random_state(L1, rng)
    with pytest.raises(ValueError):
        simulate_record(rho, [Z_AXIS, Direction(0.0, 1.0)])
    e = RecordEntry(Z_AXIS, counts=np.array([3, 4, 5]))
    assert e.shots == 12
    assert np.allclose(e.empirical_probabilities(), [0.25, 1 / 3, 5 / 12])
    with pytest.raises((DimensionMismatch, ValueError)):
        MeasurementRecord(SpinLength(3), (e,))
