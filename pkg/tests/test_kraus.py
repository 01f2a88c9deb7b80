import numpy as np
import pytest

from densecode import (
    CompletenessViolation,
    KrausMessage,
    KrausMessageSet,
    LinearDependence,
    SolverConfig,
    cross_orthogonality_residual,
    effective_unitary,
    find_kraus_messages,
    find_messages,
    make_kraus_message,
    make_spectrum,
    mes,
    message_density,
    message_purities,
    operator_bound_check,
    purity,
    shift_set,
    unitary_message,
)
from densecode.expmap import expm_antiherm, random_params, unpack
from densecode.kraus import cross_max_abs_overlap

FAST = SolverConfig(restarts=8, rng_seed=0, max_iterations=1500)


def random_unitaries(rng, d, n, scale=1.0):
    return expm_antiherm(unpack(random_params(rng, d, n, scale), d, n))


def haar_kraus_message(rng, d, kappa):
    g = rng.standard_normal((kappa * d, d)) + 1j * rng.standard_normal((kappa * d, d))
    q, _ = np.linalg.qr(g)
    return KrausMessage(q.reshape(kappa, d, d).copy())


def test_make_kraus_message_single_unitary():
    m = make_kraus_message([np.eye(3)])
    assert m.kraus_rank == 1
    assert m.completeness_defect() < 1e-15


def test_make_kraus_message_projective_channel():
    m = make_kraus_message([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    assert m.kraus_rank == 2


def test_make_kraus_message_rejects_incomplete():
    with pytest.raises(CompletenessViolation):
        make_kraus_message([np.eye(2), np.eye(2)])


def test_make_kraus_message_rejects_dependent():
    with pytest.raises(LinearDependence):
        make_kraus_message([np.eye(2) / np.sqrt(2), np.eye(2) / np.sqrt(2)])


def test_message_density_unitary_is_pure():
    rng = np.random.default_rng(0)
    (u,) = random_unitaries(rng, 3, 1)
    s = make_spectrum([0.5, 0.3, 0.2])
    rho = message_density(unitary_message(u), s)
    assert purity(rho) == pytest.approx(1.0, abs=1e-12)
    assert rho.probabilities.sum() == pytest.approx(1.0, abs=1e-12)


def test_message_density_projective_on_mes2_oracle():
    # independent oracle: assemble the two branch states in the 4-dim space
    s = mes(2)
    k1, k2 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    psi0 = np.zeros(4, dtype=complex)
    psi0[0] = psi0[3] = np.sqrt(0.5)
    expected = np.zeros((4, 4), dtype=complex)
    for k in (k1, k2):
        branch = np.kron(k, np.eye(2)) @ psi0
        expected += np.outer(branch, branch.conj())
    rho = message_density(make_kraus_message([k1, k2]), s)
    np.testing.assert_allclose(rho.matrix, expected, atol=1e-14)
    np.testing.assert_allclose(np.linalg.eigvalsh(rho.matrix)[-2:], [0.5, 0.5],
                               atol=1e-12)
    assert purity(rho) == pytest.approx(0.5, abs=1e-12)


def test_message_density_invariants_random():
    rng = np.random.default_rng(1)
    for _ in range(10):
        d = int(rng.integers(2, 5))
        kappa = int(rng.integers(1, 4))
        s = make_spectrum(np.sort(rng.dirichlet(np.ones(d)))[::-1])
        m = haar_kraus_message(rng, d, kappa)
        rho = message_density(m, s)
        assert abs(np.trace(rho.matrix) - 1.0) < 1e-10
        assert np.linalg.eigvalsh(rho.matrix).min() > -1e-10
        partial = np.einsum("abac->bc", rho.matrix.reshape(d, d, d, d))
        np.testing.assert_allclose(partial, np.diag(s.values), atol=1e-10)


def test_probabilities_on_product_state():
    rng = np.random.default_rng(2)
    d = 3
    s = make_spectrum([1.0, 0.0, 0.0])
    m = haar_kraus_message(rng, d, 2)
    rho = message_density(m, s)
    expected = [np.linalg.norm(k[:, 0]) ** 2 for k in m.operators]
    np.testing.assert_allclose(rho.probabilities, expected, atol=1e-12)


def test_purity_formula_two_level():
    rng = np.random.default_rng(3)
    s = mes(2)
    for mu in [0.5, 0.7, 0.9]:
        k1 = np.sqrt(mu) * np.eye(2)
        k2 = np.sqrt(1 - mu) * np.array([[0, 1], [1, 0]], dtype=complex)
        rho = message_density(make_kraus_message([k1, k2]), s)
        assert purity(rho) == pytest.approx(mu ** 2 + (1 - mu) ** 2, abs=1e-12)


def test_cross_residual_orthogonal_unitaries_zero():
    s = make_spectrum([0.6, 0.25, 0.15])
    shift = shift_set(3, 3)
    ms = KrausMessageSet(tuple(unitary_message(u) for u in shift.unitaries))
    assert cross_orthogonality_residual(ms, s) < 1e-28


def test_cross_residual_same_message_per_direction():
    s = mes(2)
    ms = KrausMessageSet((unitary_message(np.eye(2)), unitary_message(np.eye(2))))
    assert cross_orthogonality_residual(ms, s) == pytest.approx(2.0)


def test_cross_residual_matches_state_overlap_oracle():
    # brute-force oracle: overlaps of unnormalized branch states in the
    # doubled space
    rng = np.random.default_rng(4)
    d = 2
    s = make_spectrum([0.7, 0.3])
    messages = [haar_kraus_message(rng, d, 2) for _ in range(2)]
    ms = KrausMessageSet(tuple(messages))
    psi0 = np.zeros(d * d, dtype=complex)
    for n in range(d):
        psi0[n * d + n] = np.sqrt(s.values[n])
    total = 0.0
    for j, mj in enumerate(messages):
        for jp, mjp in enumerate(messages):
            if j == jp:
                continue
            for k in mj.operators:
                for kp in mjp.operators:
                    a = np.kron(k, np.eye(d)) @ psi0
                    b = np.kron(kp, np.eye(d)) @ psi0
                    total += abs(np.vdot(a, b)) ** 2
    assert cross_orthogonality_residual(ms, s) == pytest.approx(total, abs=1e-12)


def test_find_kraus_kappa1_matches_unitary_verdicts():
    rng = np.random.default_rng(5)
    agree = 0
    cases = 0
    for _ in range(20):
        d = 2
        lam0 = float(rng.uniform(0.5, 0.9))
        s = make_spectrum([lam0, 1 - lam0])
        n = int(rng.integers(2, 5))
        cfg = SolverConfig(restarts=6, rng_seed=int(rng.integers(1000)))
        r_unitary = find_messages(s, n, cfg)
        r_kraus = find_kraus_messages(s, n, 1, cfg)
        cases += 1
        agree += r_unitary.feasible == r_kraus.feasible
    assert agree == cases


def test_find_kraus_bound_screen():
    s = make_spectrum([0.9, 0.1])
    rep = find_kraus_messages(s, 3, 2, FAST)
    assert not rep.feasible
    assert rep.reason == "bound_screen"


def test_find_kraus_feasible_witness_valid():
    s = make_spectrum([0.6, 0.2, 0.2])
    rep = find_kraus_messages(s, 4, 2, FAST)
    assert rep.feasible
    witness = rep.witness
    assert witness.n_messages == 4
    for m in witness.messages:
        assert m.completeness_defect() <= 1e-10
    assert cross_max_abs_overlap(witness, s) <= FAST.feasibility_threshold


def test_qubit_alphabet_needs_maximal_entanglement_even_for_kraus():
    # partially entangled qubit pairs admit no third message with any
    # encoding; the floor is far above threshold
    s = make_spectrum([0.55, 0.45])
    rep = find_kraus_messages(s, 3, 2, FAST)
    assert not rep.feasible
    assert rep.max_abs_overlap > 1e-3


def test_operator_bound_check_orthogonal_unitaries():
    s = make_spectrum([0.5, 0.3, 0.2])
    shift = shift_set(3, 3)
    ms = KrausMessageSet(tuple(unitary_message(u) for u in shift.unitaries))
    report = operator_bound_check(ms, s)
    assert report.projector_ok
    assert report.bound_ok
    assert report.support_ranks == (1, 1, 1)


def test_operator_bound_full_basis_at_mes():
    # d^2 orthogonal unitaries at the maximally entangled point fill the
    # doubled space completely.
    d = 2
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    ms = KrausMessageSet(tuple(unitary_message(u)
                               for u in (np.eye(2, dtype=complex), x, y, z)))
    report = operator_bound_check(ms, mes(d))
    assert report.projector_ok
    assert abs(report.min_projector_gap) < 1e-9
    assert abs(report.bound_gap) < 1e-12


def test_effective_unitary_recovers_unitary():
    rng = np.random.default_rng(6)
    (u,) = random_unitaries(rng, 3, 1)
    s = make_spectrum([0.5, 0.3, 0.2])
    v = effective_unitary(unitary_message(u), s)
    assert v is not None
    phase = np.vdot(v.ravel(), u.ravel())
    phase /= abs(phase)
    np.testing.assert_allclose(v * phase, u, atol=1e-8)


def test_effective_unitary_completes_free_columns():
    # on a rank-one spectrum, the second column never acts; the completion
    # must still return an exact unitary agreeing on column 0
    s = make_spectrum([1.0, 0.0])
    m = make_kraus_message([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    v = effective_unitary(m, s)
    assert v is not None
    np.testing.assert_allclose(np.conj(v.T) @ v, np.eye(2), atol=1e-10)
    np.testing.assert_allclose(np.abs(v[:, 0]), [1.0, 0.0], atol=1e-8)


def test_effective_unitary_mixed_returns_none():
    s = mes(2)
    m = make_kraus_message([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    assert effective_unitary(m, s) is None


def test_kraus_set_json_round_trip():
    rng = np.random.default_rng(7)
    ms = KrausMessageSet(tuple(haar_kraus_message(rng, 2, 2) for _ in range(2)))
    rebuilt = KrausMessageSet.from_json(ms.to_json())
    for a, b in zip(rebuilt.messages, ms.messages):
        np.testing.assert_allclose(a.operators, b.operators, atol=1e-15)
