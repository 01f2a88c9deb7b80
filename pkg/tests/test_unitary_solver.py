import json

import numpy as np
import pytest

from densecode import (
    AlphabetError,
    SolverConfig,
    UnitaryMessageSet,
    cost_and_gradient,
    find_messages,
    make_spectrum,
    max_abs_overlap,
    mes,
    polish,
    residual,
    shift_set,
)
from densecode.expmap import expm_antiherm, pack, random_params, unpack

FAST = SolverConfig(restarts=10, rng_seed=0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(restarts=0)
    with pytest.raises(ValueError):
        SolverConfig(feasibility_threshold=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(polish_threshold=1e-6, feasibility_threshold=1e-8)


def test_cost_all_identity():
    for n, d in [(3, 3), (5, 2), (4, 4)]:
        c, g = cost_and_gradient(np.zeros((n - 1) * d * d), mes(d), n)
        assert c == pytest.approx(n * (n - 1) / 2, rel=1e-12)
        assert np.all(np.isfinite(g))


def test_cost_at_exact_witness():
    s = mes(2)
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    from densecode.expmap import params_from_unitaries

    params = params_from_unitaries(np.array([x, 1j * y, z]))
    c, g = cost_and_gradient(params, s, 4)
    assert c <= 1e-20
    assert np.linalg.norm(g) <= 1e-9


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    h = 1e-5
    for _ in range(6):
        d = int(rng.integers(2, 5))
        n = int(rng.integers(2, min(10, d * d) + 1))
        s = make_spectrum(np.sort(rng.dirichlet(np.ones(d)))[::-1])
        x = rng.standard_normal((n - 1) * d * d)
        _, g = cost_and_gradient(x, s, n)
        fd = np.zeros_like(x)
        for i in range(len(x)):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd[i] = (cost_and_gradient(xp, s, n)[0]
                     - cost_and_gradient(xm, s, n)[0]) / (2 * h)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-30)
        assert rel <= 1e-6


def test_pack_unpack_round_trip():
    rng = np.random.default_rng(0)
    x = random_params(rng, 4, 3, 1.0)
    a = unpack(x, 4, 3)
    # anti-Hermitian by construction
    assert np.abs(a + np.conj(a.transpose(0, 2, 1))).max() < 1e-15
    np.testing.assert_allclose(pack(a), x, atol=1e-15)


def test_expm_unitarity():
    rng = np.random.default_rng(1)
    a = unpack(random_params(rng, 5, 4, 2.0), 5, 4)
    u = expm_antiherm(a)
    eye = np.eye(5)
    assert np.abs(np.conj(u.transpose(0, 2, 1)) @ u - eye).max() < 1e-13


def test_find_messages_mes2_full_alphabet():
    rep = find_messages(mes(2), 4, FAST)
    assert rep.feasible
    assert rep.max_abs_overlap <= FAST.feasibility_threshold
    assert rep.witness is not None
    np.testing.assert_allclose(rep.witness.unitaries[0], np.eye(2), atol=1e-12)


def test_find_messages_product_state_screened():
    rep = find_messages(make_spectrum([1.0, 0.0]), 3, FAST)
    assert not rep.feasible
    assert rep.reason == "bound_screen"
    assert rep.restarts_used == 0


def test_find_messages_shift_shortcut():
    s = make_spectrum([0.9, 0.1])
    rep = find_messages(s, 2, FAST)
    assert rep.feasible
    assert rep.best_residual == 0.0
    assert rep.restarts_used == 0


def test_find_messages_invalid_n():
    with pytest.raises(AlphabetError):
        find_messages(mes(2), 5, FAST)
    with pytest.raises(AlphabetError):
        find_messages(mes(2), 0, FAST)


def test_feasible_witness_properties():
    rep = find_messages(make_spectrum([0.4, 0.35, 0.25]), 6, FAST)
    assert rep.feasible
    w = rep.witness
    eye = np.eye(3)
    assert np.abs(np.conj(w.unitaries.transpose(0, 2, 1)) @ w.unitaries
                  - eye).max() <= 1e-10
    assert max_abs_overlap(w, rep.spectrum) <= FAST.feasibility_threshold
    # paper-level invariant: feasibility implies lambda0 <= d/N
    assert rep.spectrum.lambda0 <= rep.d / rep.n_messages + 1e-9


def test_determinism_bit_for_bit():
    cfg = SolverConfig(restarts=5, rng_seed=123)
    r1 = find_messages(make_spectrum([0.5, 0.3, 0.2]), 5, cfg)
    r2 = find_messages(make_spectrum([0.5, 0.3, 0.2]), 5, cfg)
    assert r1.to_json() == r2.to_json()
    assert json.loads(r1.to_json())["config"]["rng_seed"] == 123


def test_infeasible_records_floor():
    rep = find_messages(make_spectrum([0.55, 0.45]), 3,
                        SolverConfig(restarts=6, rng_seed=0))
    assert not rep.feasible
    assert rep.best_residual is not None and rep.best_residual > 0
    assert rep.max_abs_overlap is not None
    assert rep.best_candidate is not None


def test_polish_exact_witness_unchanged():
    ms = shift_set(3, 3)
    s = make_spectrum([0.5, 0.3, 0.2])
    result = polish(ms, s)
    assert result.converged
    assert result.message_set is ms


def test_polish_perturbation_round_trip():
    rng = np.random.default_rng(7)
    s = make_spectrum([0.45, 0.35, 0.2])
    rep = find_messages(s, 5, FAST)
    assert rep.feasible
    witness = rep.witness.unitaries
    noise = unpack(1e-5 * rng.standard_normal((len(witness) - 1) * 9), 3,
                   len(witness) - 1)
    bumped = witness.copy()
    bumped[1:] = bumped[1:] @ expm_antiherm(noise)
    bumped_set = UnitaryMessageSet(bumped)
    assert residual(bumped_set, s) > 1e-12
    result = polish(bumped_set, s)
    assert result.converged
    assert residual(result.message_set, s) <= 1e-12
    np.testing.assert_allclose(result.message_set.unitaries[0], np.eye(3),
                               atol=1e-12)


def test_polish_far_set_not_converged():
    ms = UnitaryMessageSet(np.array([np.eye(2), np.eye(2)], dtype=complex))
    result = polish(ms, mes(2))
    assert not result.converged
    assert result.message_set is ms
    assert result.residual_after == pytest.approx(1.0)
