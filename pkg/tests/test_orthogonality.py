import numpy as np
import pytest

from densecode import (
    MessageSetError,
    UnitaryMessageSet,
    gram,
    lambda_inner,
    lambda_matrix,
    make_spectrum,
    mes,
    residual,
    shift_set,
)
from densecode.expmap import expm_antiherm, random_params, unpack


def random_unitaries(rng, d, n, scale=1.0):
    return expm_antiherm(unpack(random_params(rng, d, n, scale), d, n))


def test_lambda_inner_identity():
    lam = lambda_matrix(make_spectrum([0.7, 0.3]))
    eye = np.eye(2)
    assert lambda_inner(eye, eye, lam) == pytest.approx(1.0)


def test_lambda_inner_shift_zero_diagonal():
    lam = lambda_matrix(make_spectrum([0.7, 0.2, 0.1]))
    x = shift_set(3, 2).unitaries[1]
    assert abs(lambda_inner(np.eye(3), x, lam)) < 1e-15


def test_lambda_inner_diagonal_phase():
    lam = lambda_matrix(make_spectrum([0.7, 0.3]))
    z = np.diag([1.0, -1.0]).astype(complex)
    assert lambda_inner(np.eye(2), z, lam) == pytest.approx(0.4)


def test_lambda_inner_orientation():
    # entries follow Tr(U_j L U_i^dagger): the second argument is the
    # un-conjugated one.
    rng = np.random.default_rng(0)
    u_i, u_j = random_unitaries(rng, 3, 2)
    s = make_spectrum([0.6, 0.3, 0.1])
    lam = np.diag(s.values)
    expected = np.trace(u_j @ lam @ np.conj(u_i.T))
    assert lambda_inner(u_i, u_j, s) == pytest.approx(expected)


def test_residual_shift_set_zero_everywhere():
    rng = np.random.default_rng(1)
    for _ in range(10):
        d = int(rng.integers(2, 6))
        s = make_spectrum(np.sort(rng.dirichlet(np.ones(d)))[::-1])
        assert residual(shift_set(d, d), s) == 0.0


def test_residual_two_identities():
    s = mes(2)
    ms = UnitaryMessageSet(np.array([np.eye(2), np.eye(2)], dtype=complex))
    assert residual(ms, s) == pytest.approx(1.0)


def test_residual_pauli_at_mes():
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    ms = UnitaryMessageSet(np.array([np.eye(2, dtype=complex), x, 1j * y, z]))
    assert residual(ms, mes(2)) < 1e-30


def test_gram_shift_identity():
    g = gram(shift_set(2, 2), mes(2))
    np.testing.assert_allclose(g.entries, np.eye(2), atol=1e-15)


def test_gram_explicit_two_by_two():
    s = make_spectrum([0.7, 0.3])
    ms = UnitaryMessageSet(np.array([np.eye(2), np.diag([1.0, -1.0])], dtype=complex))
    np.testing.assert_allclose(g_ent := gram(ms, s).entries,
                               [[1.0, 0.4], [0.4, 1.0]], atol=1e-15)
    assert np.abs(g_ent - np.conj(g_ent.T)).max() < 1e-15


def test_gram_hermitian_and_residual_consistency():
    rng = np.random.default_rng(2)
    for _ in range(10):
        d = int(rng.integers(2, 5))
        n = int(rng.integers(2, d * d + 1))
        s = make_spectrum(np.sort(rng.dirichlet(np.ones(d)))[::-1])
        ms = UnitaryMessageSet(random_unitaries(rng, d, n))
        g = gram(ms, s)
        assert g.hermiticity_defect() <= 1e-12
        off = g.entries - np.diag(np.diagonal(g.entries))
        assert residual(ms, s) == pytest.approx(np.sum(np.abs(off) ** 2) / 2,
                                                abs=1e-12)


def test_left_gauge_invariance():
    rng = np.random.default_rng(3)
    d = 3
    s = make_spectrum([0.5, 0.3, 0.2])
    ms = UnitaryMessageSet(random_unitaries(rng, d, 4))
    (v,) = random_unitaries(rng, d, 1)
    w = np.diag(np.exp(1j * rng.standard_normal(d)))  # diagonal commutes with L
    transformed = UnitaryMessageSet(np.array([v @ u @ w for u in ms.unitaries]))
    assert residual(transformed, s) == pytest.approx(residual(ms, s), abs=1e-10)


def test_shift_set_errors():
    with pytest.raises(MessageSetError):
        shift_set(3, 4)


def test_shift_set_d4_permutations():
    ms = shift_set(4, 4)
    assert ms.n_messages == 4
    for u in ms.unitaries:
        assert np.array_equal(np.abs(u) > 0.5, np.abs(u) > 0.5)
        np.testing.assert_allclose(np.abs(u).sum(axis=0), 1.0)
        np.testing.assert_allclose(np.abs(u).sum(axis=1), 1.0)


def test_message_set_rejects_nonunitary():
    bad = np.array([np.eye(2), np.diag([1.0, 2.0])], dtype=complex)
    with pytest.raises(MessageSetError):
        UnitaryMessageSet(bad)


def test_message_set_rejects_too_many():
    stack = np.array([np.eye(2)] * 5, dtype=complex)
    with pytest.raises(MessageSetError):
        UnitaryMessageSet(stack)


def test_message_set_json_round_trip():
    ms = shift_set(3, 3)
    rebuilt = UnitaryMessageSet.from_json(ms.to_json())
    np.testing.assert_allclose(rebuilt.unitaries, ms.unitaries, atol=1e-15)
