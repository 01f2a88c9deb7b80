"""Feasibility search for orthogonal unitary message sets.

Deciding whether N messages fit a given spectrum is a nonconvex feasibility
problem over N-1 copies of the unitary group (the first message is pinned
to the identity, which removes the left-multiplication gauge).  The search
minimizes the summed squared pairwise overlap with L-BFGS from random
generator starts, then hands near-solutions to a Gauss-Newton polish.  A
verdict of feasible is certified by the witness itself; a verdict of
infeasible is heuristic, so the report keeps the residual floor seen across
restarts, letting callers distinguish a hard floor from a marginal miss.

Two shortcuts are certified rather than searched: N <= d is always feasible
through the cyclic-shift construction, and spectra with lambda_0 > d/N are
infeasible for any encoding, unitary or not.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import expmap
from .orthogonality import (
    UnitaryMessageSet,
    _diagonal_of,
    max_abs_overlap,
    residual,
    shift_set,
)
from .refine import refine_charts
from .serialize import dumps
from .spectra import SchmidtSpectrum

BOUND_SCREEN_SLACK = 1e-12


class AlphabetError(ValueError):
    """Requested message count outside 1..d^2."""


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the restart search; defaults suit desk-scale runs."""

    restarts: int = 50
    max_iterations: int = 2000
    feasibility_threshold: float = 1e-8
    polish_threshold: float = 1e-12
    polish_trigger: float = 1e-4
    gradient_tol: float = 1e-11
    init_scale: float = 1.0
    escalation_factor: int = 4
    escalation_band: float = 2.0
    use_bound_screen: bool = True
    rng_seed: int = 0
    parallelism: int = 1

    def __post_init__(self):
        if self.restarts < 1 or self.max_iterations < 1 or self.parallelism < 1:
            raise ValueError("restarts, max_iterations, parallelism must be >= 1")
        if self.feasibility_threshold <= 0 or self.polish_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.polish_threshold > self.feasibility_threshold:
            raise ValueError("polish_threshold must not exceed feasibility_threshold")

    def to_json_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of one feasibility question: can N messages fit this spectrum?"""

    d: int
    n_messages: int
    spectrum: SchmidtSpectrum
    feasible: bool
    best_residual: Optional[float]
    max_abs_overlap: Optional[float]
    witness: Optional[object]
    restarts_used: int
    reason: Optional[str]
    config: SolverConfig
    kappa: Optional[int] = None
    best_candidate: Optional[object] = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        witness = None
        if self.witness is not None:
            kind = "kraus" if self.kappa not in (None, 1) else "unitary"
            witness = {"kind": kind, "data": self.witness.to_json()}
        return {
            "kind": "feasibility_report",
            "d": self.d,
            "N": self.n_messages,
            "kappa": self.kappa,
            "spectrum": [float(v) for v in self.spectrum.values],
            "feasible": self.feasible,
            "best_residual": self.best_residual,
            "max_abs_overlap": self.max_abs_overlap,
            "restarts_used": self.restarts_used,
            "reason": self.reason,
            "config": self.config.to_json_dict(),
            "witness": witness,
        }

    def to_json(self) -> str:
        return dumps(self.to_json_dict())


@dataclass(frozen=True)
class PolishResult:
    message_set: UnitaryMessageSet
    converged: bool
    residual_before: float
    residual_after: float


def cost_and_gradient(params: np.ndarray, lam, n_messages: int):
    """Summed squared overlap over pairs and its gradient in the generators.

    params packs N-1 anti-Hermitian generators (message 0 is the identity);
    the gradient flows through the matrix exponential via the eigenbasis
    divided-difference formula, exact up to floating point.
    """
    diag = _diagonal_of(lam)
    d = len(diag)
    count = n_messages - 1
    a = expmap.unpack(params, d, count)
    theta, v = expmap.eig_antiherm(a)
    u = expmap.exp_from_eig(theta, v)
    u_all = np.concatenate([np.eye(d, dtype=complex)[None], u])
    phi = (u_all * np.sqrt(diag)[None, None, :]).reshape(n_messages, -1)
    t_mat = np.conj(phi) @ phi.T
    t_off = t_mat - np.diag(np.diagonal(t_mat))
    cost = 0.5 * float(np.sum(np.abs(t_off) ** 2))
    y = t_off.T @ phi
    g = y.reshape(n_messages, d, d) * np.sqrt(diag)[None, None, :]
    m = expmap.dexp_adjoint(theta, v, g[1:])
    return cost, expmap.grad_to_params(m)


def _unitaries_from_params(params: np.ndarray, d: int, n_messages: int) -> np.ndarray:
    u = expmap.expm_antiherm(expmap.unpack(params, d, n_messages - 1))
    return np.concatenate([np.eye(d, dtype=complex)[None], u])


def _params_from_set(message_set: UnitaryMessageSet) -> np.ndarray:
    # Re-anchor the gauge so message 0 is exactly the identity.
    u = message_set.unitaries
    anchored = np.conj(u[0].T)[None, :, :] @ u
    return expmap.params_from_unitaries(anchored[1:])


def _polish_unitaries(diag: np.ndarray, unitaries: np.ndarray):
    bases = unitaries.astype(complex)
    free = np.ones(len(bases), dtype=bool)
    free[0] = False
    new_bases, info = refine_charts(diag, bases, kappa=1, free_mask=free)
    return new_bases, info


def polish(message_set: UnitaryMessageSet, lam, cfg: SolverConfig | None = None) -> PolishResult:
    """Locally refine a near-orthogonal set to the polish threshold.

    Sets already below the threshold come back untouched; sets above the
    coarse trigger are returned unchanged with converged=False since the
    quadratic refinement has no basin to work in.
    """
    cfg = cfg or SolverConfig()
    diag = _diagonal_of(lam)
    before = residual(message_set, diag)
    if before <= cfg.polish_threshold:
        return PolishResult(message_set, True, before, before)
    if before > cfg.polish_trigger:
        return PolishResult(message_set, False, before, before)
    new_bases, _ = _polish_unitaries(diag, message_set.unitaries)
    refined = UnitaryMessageSet(new_bases)
    after = residual(refined, diag)
    if after <= cfg.polish_threshold:
        return PolishResult(refined, True, before, after)
    return PolishResult(message_set, False, before, before)


def _attempt(diag: np.ndarray, n_messages: int, cfg: SolverConfig, x0: np.ndarray):
    """One local search: L-BFGS, then Gauss-Newton when close.

    The L-BFGS stage stops as soon as the cost crosses the polish trigger,
    where the quadratic refinement takes over.  Returns (cost, max_abs,
    unitaries) for the best point reached.
    """
    d = len(diag)

    def stop_at_trigger(intermediate_result):
        if intermediate_result.fun < 0.5 * cfg.polish_trigger:
            raise StopIteration

    result = minimize(
        cost_and_gradient, x0, args=(diag, n_messages), jac=True,
        method="L-BFGS-B", callback=stop_at_trigger,
        options={"maxiter": cfg.max_iterations, "ftol": 1e-16,
                 "gtol": cfg.gradient_tol, "maxcor": 12},
    )
    cost = float(result.fun)
    unitaries = _unitaries_from_params(result.x, d, n_messages)
    if cost < cfg.polish_trigger:
        new_bases, info = _polish_unitaries(diag, unitaries)
        if info["residual"] < cost:
            unitaries = new_bases
            cost = info["residual"]
    gmax = _max_abs(unitaries, diag)
    return cost, gmax, unitaries


def _max_abs(unitaries: np.ndarray, diag: np.ndarray) -> float:
    phi = (unitaries * np.sqrt(diag)[None, None, :]).reshape(len(unitaries), -1)
    t = np.conj(phi) @ phi.T
    off = t - np.diag(np.diagonal(t))
    return float(np.abs(off).max()) if len(unitaries) > 1 else 0.0


def _start_params(diag, n_messages, cfg, index, warm_params):
    if index < len(warm_params):
        return warm_params[index]
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, index]))
    return expmap.random_params(rng, len(diag), n_messages - 1, cfg.init_scale)


def _attempt_indexed(args):
    diag, n_messages, cfg, index, warm_params = args
    x0 = _start_params(diag, n_messages, cfg, index, warm_params)
    cost, gmax, unitaries = _attempt(diag, n_messages, cfg, x0)
    return index, cost, gmax, unitaries


def find_messages(
    spectrum: SchmidtSpectrum,
    n_messages: int,
    cfg: SolverConfig | None = None,
    warm_starts: tuple = (),
) -> FeasibilityReport:
    """Search for N mutually orthogonal unitary messages at a spectrum.

    warm_starts is an optional sequence of UnitaryMessageSet candidates
    tried before the random restarts (boundary tracking hands the witness
    from a nearby spectrum down the ray).  Verdicts are deterministic in
    (spectrum, N, cfg, warm_starts) regardless of parallelism.
    """
    cfg = cfg or SolverConfig()
    d = spectrum.d
    if not 1 <= n_messages <= d * d:
        raise AlphabetError(f"N must lie in 1..{d * d}, got {n_messages}")
    diag = spectrum.values

    def report(**kw):
        base = dict(d=d, n_messages=n_messages, spectrum=spectrum, feasible=False,
                    best_residual=None, max_abs_overlap=None, witness=None,
                    restarts_used=0, reason=None, config=cfg, best_candidate=None)
        base.update(kw)
        return FeasibilityReport(**base)

    if cfg.use_bound_screen and spectrum.lambda0 > d / n_messages + BOUND_SCREEN_SLACK:
        return report(reason="bound_screen")

    if n_messages <= d:
        witness = shift_set(d, n_messages)
        return report(feasible=True, best_residual=0.0, max_abs_overlap=0.0,
                      witness=witness, best_candidate=witness, reason=None)

    warm_params = [_params_from_set(s) for s in warm_starts]

    best = None  # (cost, gmax, unitaries)
    feasible_hit = None
    attempts_run = 0

    def run_indices(indices):
        nonlocal best, feasible_hit, attempts_run
        jobs = [(diag, n_messages, cfg, i, warm_params) for i in indices]
        if cfg.parallelism > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
                outcomes = list(pool.map(_attempt_indexed, jobs))
        else:
            outcomes = []
            for job in jobs:
                outcomes.append(_attempt_indexed(job))
                attempts_run += 1
                _, cost, gmax, unitaries = outcomes[-1]
                if best is None or cost < best[0]:
                    best = (cost, gmax, unitaries)
                if gmax <= cfg.feasibility_threshold:
                    feasible_hit = (cost, gmax, unitaries)
                    return
        if cfg.parallelism > 1 and len(jobs) > 1:
            attempts_run += len(outcomes)
            for index, cost, gmax, unitaries in sorted(outcomes):
                if best is None or cost < best[0]:
                    best = (cost, gmax, unitaries)
            for index, cost, gmax, unitaries in sorted(outcomes):
                if gmax <= cfg.feasibility_threshold:
                    feasible_hit = (cost, gmax, unitaries)
                    return

    total = len(warm_params) + cfg.restarts
    chunk = max(1, cfg.parallelism)
    i = 0
    while i < total and feasible_hit is None:
        run_indices(range(i, min(i + chunk, total)))
        i += chunk
    if feasible_hit is None and best is not None and (
            best[1] <= cfg.escalation_band * cfg.feasibility_threshold):
        extra = (cfg.escalation_factor - 1) * cfg.restarts
        j = total
        while j < total + extra and feasible_hit is None:
            run_indices(range(j, min(j + chunk, total + extra)))
            j += chunk

    if feasible_hit is not None:
        cost, gmax, unitaries = feasible_hit
        witness = UnitaryMessageSet(unitaries)
        return report(feasible=True, best_residual=cost, max_abs_overlap=gmax,
                      witness=witness, best_candidate=witness,
                      restarts_used=attempts_run)
    cost, gmax, unitaries = best
    return report(feasible=False, best_residual=cost, max_abs_overlap=gmax,
                  best_candidate=UnitaryMessageSet(unitaries),
                  restarts_used=attempts_run, reason="search_exhausted")


def _extend_witness(witness: UnitaryMessageSet, seed: int, scale: float) -> UnitaryMessageSet:
    """Previous witness plus one fresh random unitary, as a warm start."""
    d = witness.d
    rng = np.random.default_rng(np.random.SeedSequence([seed, witness.n_messages + 1]))
    extra = expmap.expm_antiherm(
        expmap.unpack(expmap.random_params(rng, d, 1, scale), d, 1))
    return UnitaryMessageSet(np.concatenate([witness.unitaries, extra]))


def max_alphabet(spectrum: SchmidtSpectrum, cfg: SolverConfig | None = None):
    """Largest feasible N, scanning upward from the guaranteed N = d.

    Monotonicity justifies the early stop: any N-message set contains an
    (N-1)-message subset, so the first infeasible N ends the scan.  Each
    step warm-starts from the previous witness extended by one random
    unitary, followed by the usual cold restarts.
    """
    cfg = cfg or SolverConfig()
    d = spectrum.d
    reports = []
    best_n = 0
    witness = None
    for n in range(d, d * d + 1):
        warm = ()
        if witness is not None:
            warm = (_extend_witness(witness, cfg.rng_seed, cfg.init_scale),)
        rep = find_messages(spectrum, n, cfg, warm_starts=warm)
        reports.append(rep)
        if not rep.feasible:
            break
        best_n = n
        witness = rep.witness
    return best_n, reports
