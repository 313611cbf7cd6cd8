import math

import numpy as np
import pytest

from spintomo import DensityMatrix, SpinLength, correlated_moment, joint_distribution, reconstruct_bipartite
from spintomo.basis import complete_basis, decompose
from spintomo.bipartite import (
    ProductBasis,
    build_joint_design,
    decompose_bipartite,
    expansion_weights,
    marginal_record,
    partial_trace,
    product_settings,
    reconstruct_bipartite_from_coefficients,
    required_settings,
    sample_joint_record,
    simulate_joint_record,
)
from spintomo.errors import InsufficientSettings
from spintomo.measurement import outcome_distribution
from spintomo.spin import Direction, Z_AXIS, random_state, spin_component
from spintomo.tomography import fibonacci_hemisphere, jittered_directions, reconstruct_linear

from conftest import frob

L1 = SpinLength(2)


def product(a, b):
    return DensityMatrix(np.kron(a.matrix, b.matrix), dims=(a.dim, b.dim))


def entangled_qutrits():
    psi = np.zeros(9)
    psi[[0, 4, 8]] = 1 / math.sqrt(3)
    return DensityMatrix.pure(psi)


def test_product_state_factorizes(rng):
    a, b = random_state(L1, rng), random_state(SpinLength(1), rng)
    da, db = Direction(0.3, 1.0), Direction(2.0, 4.0)
    joint = joint_distribution(product(a, b), L1, SpinLength(1), da, db)
    expected = np.outer(outcome_distribution(a, da).probabilities, outcome_distribution(b, db).probabilities)
    assert np.allclose(joint.probabilities, expected, atol=1e-14)
    assert correlated_moment(joint, 1, 1) == pytest.approx(
        correlated_moment(joint, 1, 0) * correlated_moment(joint, 0, 1), abs=1e-12)


def test_entangled_state_along_z():
    joint = joint_distribution(entangled_qutrits(), L1, L1, Z_AXIS, Z_AXIS)
    assert np.allclose(joint.probabilities, np.eye(3) / 3, atol=1e-14)
    assert np.allclose(joint.marginal_a(), 1 / 3) and np.allclose(joint.marginal_b(), 1 / 3)


def test_mixed_state_uniform():
    joint = joint_distribution(DensityMatrix.maximally_mixed(9), L1, L1, Direction(1, 2), Direction(2, 1))
    assert np.allclose(joint.probabilities, 1 / 9)
    assert correlated_moment(joint, 0, 0) == pytest.approx(1)


def test_correlated_moment_operator_oracle(rng):
    rho = entangled_qutrits()
    for _ in range(10):
        d = Direction(rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
        ld = spin_component(L1, d)
        oracle = np.trace(rho.matrix @ np.kron(ld, ld)).real
        assert correlated_moment(joint_distribution(rho, L1, L1, d, d), 1, 1) == pytest.approx(oracle, abs=1e-12)
        d2 = Direction(rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi))
        lb = spin_component(L1, d2)
        oracle = np.trace(rho.matrix @ np.kron(ld @ ld, lb)).real
        assert correlated_moment(joint_distribution(rho, L1, L1, d, d2), 2, 1) == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("two_l_a,two_l_b", [(1, 1), (2, 2), (1, 2), (2, 3), (3, 1)])
def test_expansion_round_trip(two_l_a, two_l_b, rng):
    la, lb = SpinLength(two_l_a), SpinLength(two_l_b)
    rho = random_state(la.dimension() * lb.dimension(), rng)
    back = reconstruct_bipartite_from_coefficients(decompose_bipartite(rho, la, lb))
    assert frob(back, rho) < 1e-12


def test_weights_are_dual_normalisation():
    la, lb = SpinLength(1), SpinLength(4)
    basis = ProductBasis(la, lb)
    ops = basis.operators()
    norms = np.einsum("aij,aji->a", ops, ops).real.reshape(la.dimension() ** 2, lb.dimension() ** 2)
    assert np.allclose(expansion_weights(la, lb), 1 / norms)
    w = expansion_weights(la, lb)
    assert w[0, 0] == pytest.approx(1 / 10)
    assert w[1, 0] == pytest.approx(1 / (2 * 5)) and w[0, 1] == pytest.approx(1 / (2 * 2))
    assert w[1, 1] == 0.25


def test_product_basis_counts():
    basis = ProductBasis(L1, L1)
    assert len(basis) == 81 and len(basis.labels) == 81
    assert basis.correlation_count() == 64
    ops = basis.operators()
    gram = np.einsum("aij,bji->ab", ops, ops).real
    assert np.allclose(gram, np.diag(np.diag(gram)))


def test_setting_and_probability_counts(rng):
    dirs = fibonacci_hemisphere(5)
    record = simulate_joint_record(random_state(9, rng), L1, L1, product_settings(dirs, dirs))
    assert len(record) == required_settings(L1, L1) == 25
    assert record.probability_count == 225


def test_round_trip_jittered_settings(rng):
    rho = random_state(9, rng, rank=1)
    da, db = jittered_directions(L1, rng), jittered_directions(L1, rng)
    report = reconstruct_bipartite(simulate_joint_record(rho, L1, L1, product_settings(da, db)))
    assert frob(report.rho_raw, rho) < 1e-8
    assert report.residual_norm < 1e-10


def test_unequal_spins_round_trip(rng):
    la, lb = SpinLength(1), SpinLength(3)
    rho = random_state(8, rng)
    settings = product_settings(jittered_directions(la, rng), jittered_directions(lb, rng))
    report = reconstruct_bipartite(simulate_joint_record(rho, la, lb, settings))
    assert frob(report.rho_raw, rho) < 1e-8


def test_product_state_correlations_factorize(rng):
    a, b = random_state(L1, rng), random_state(L1, rng)
    dirs = fibonacci_hemisphere(5)
    report = reconstruct_bipartite(simulate_joint_record(product(a, b), L1, L1, product_settings(dirs, dirs)))
    c = report.coefficients
    ca = decompose(a, complete_basis(L1)).values
    cb = decompose(b, complete_basis(L1)).values
    assert np.allclose(c.correlations, np.outer(ca, cb), atol=1e-9)
    assert np.allclose(c.local_a, ca, atol=1e-9) and np.allclose(c.local_b, cb, atol=1e-9)


def test_partial_trace_matches_marginal_reconstruction(rng):
    rho = random_state(9, rng)
    dirs = fibonacci_hemisphere(5)
    record = simulate_joint_record(rho, L1, L1, product_settings(dirs, dirs))
    report = reconstruct_bipartite(record)
    for side in "AB":
        single = reconstruct_linear(marginal_record(record, side))
        assert frob(partial_trace(report.rho_raw, (3, 3), side), single.rho_raw) < 1e-8
        assert frob(partial_trace(rho, (3, 3), side), single.rho_raw) < 1e-8


def test_fewer_settings_rank_deficient(rng):
    settings = [(d1, d2) for d1, d2 in zip(jittered_directions(L1, rng, count=24), jittered_directions(L1, rng, count=24))]
    rows, _ = build_joint_design(L1, L1, settings)
    assert np.linalg.matrix_rank(rows) < 80
    full = product_settings(fibonacci_hemisphere(5), fibonacci_hemisphere(5))
    rows, _ = build_joint_design(L1, L1, full)
    assert np.linalg.matrix_rank(rows) == 80
    record = simulate_joint_record(random_state(9, rng), L1, L1, full[:24])
    with pytest.raises(InsufficientSettings):
        reconstruct_bipartite(record)


def test_sampling_deterministic(rng, monkeypatch):
    dirs = fibonacci_hemisphere(5)
    record = simulate_joint_record(random_state(9, rng), L1, L1, product_settings(dirs, dirs))
    a = sample_joint_record(record, 1000, seed=4)
    monkeypatch.setenv("SPINTOMO_THREADS", "3")
    b = sample_joint_record(record, 1000, seed=4)
    assert all(np.array_equal(x.counts, y.counts) for x, y in zip(a.entries, b.entries))
    assert all(x.shots == 1000 for x in a.entries)
