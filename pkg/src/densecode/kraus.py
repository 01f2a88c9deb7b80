"""General quantum-operation encodings and the purity structure at the bound.

A message sent with a non-unitary operation is a list of Kraus operators
K_j1..K_jk summing to the identity under K^dagger K (trace preservation of
the local channel).  Acting on the shared state, each operator produces an
unnormalized branch vec(K sqrt(L)); the message density operator collects
the branches, always has reduced state L on the untouched side, and is pure
exactly when the operation acts as a unitary on the shared state.  Message
sets are decodable when every branch of one message is orthogonal to every
branch of all others; the search optimizes stacked isometries (one per
message) so the completeness constraint holds exactly throughout, using
projected gradient steps with a polar-decomposition retraction followed by
a Gauss-Newton polish in exponential charts.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import expmap
from .orthogonality import _diagonal_of
from .refine import refine_charts
from .serialize import matrices_from_json, matrices_to_json
from .spectra import SchmidtSpectrum, make_spectrum
from .unitary_solver import (
    BOUND_SCREEN_SLACK,
    AlphabetError,
    FeasibilityReport,
    SolverConfig,
)

COMPLETENESS_TOL = 1e-10
INDEPENDENCE_TOL = 1e-10
RANK_CUTOFF = 1e-10


class KrausError(ValueError):
    """Invalid Kraus message."""


class CompletenessViolation(KrausError):
    """Operators do not satisfy the completeness relation."""


class LinearDependence(KrausError):
    """Operators are linearly dependent."""


@dataclass(frozen=True, eq=False)
class KrausMessage:
    """One message: kappa operators of shape (kappa, d, d), complete."""

    operators: np.ndarray

    def __post_init__(self):
        self.operators.setflags(write=False)

    @property
    def kraus_rank(self) -> int:
        return self.operators.shape[0]

    @property
    def d(self) -> int:
        return self.operators.shape[1]

    def completeness_defect(self) -> float:
        ops = self.operators
        total = np.einsum("kba,kbc->ac", np.conj(ops), ops)
        return float(np.abs(total - np.eye(self.d)).max())

    def to_json(self) -> dict:
        return {"operators": matrices_to_json(self.operators)}

    @classmethod
    def from_json(cls, data: dict) -> "KrausMessage":
        return make_kraus_message(matrices_from_json(data["operators"]))


@dataclass(frozen=True, eq=False)
class KrausMessageSet:
    """N Kraus messages over a common dimension."""

    messages: tuple

    def __post_init__(self):
        d_values = {m.d for m in self.messages}
        if len(d_values) != 1:
            raise KrausError("messages must share one dimension")

    @property
    def n_messages(self) -> int:
        return len(self.messages)

    @property
    def d(self) -> int:
        return self.messages[0].d

    @property
    def kappas(self) -> tuple:
        return tuple(m.kraus_rank for m in self.messages)

    def to_json(self) -> list:
        return [m.to_json() for m in self.messages]

    @classmethod
    def from_json(cls, items: list) -> "KrausMessageSet":
        return cls(tuple(KrausMessage.from_json(item) for item in items))


@dataclass(frozen=True, eq=False)
class MessageDensity:
    """Density operator of one message on the doubled space, plus branch weights."""

    matrix: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        self.matrix.setflags(write=False)
        self.probabilities.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def make_kraus_message(ops, check_independence: bool = True) -> KrausMessage:
    """Validate a list of operators as one complete, independent message."""
    arr = np.array([np.asarray(op, dtype=complex) for op in ops])
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise KrausError("expected a non-empty list of square matrices of equal size")
    message = KrausMessage(arr)
    defect = message.completeness_defect()
    if defect > COMPLETENESS_TOL:
        raise CompletenessViolation(f"completeness defect {defect:.3e}")
    if check_independence and len(arr) > 1:
        flat = arr.reshape(len(arr), -1)
        sv = np.linalg.svd(flat, compute_uv=False)
        if sv[-1] <= INDEPENDENCE_TOL:
            raise LinearDependence(f"smallest stacked singular value {sv[-1]:.3e}")
    return message


def unitary_message(u: np.ndarray) -> KrausMessage:
    """Wrap a single unitary as a rank-one message."""
    return make_kraus_message([u])


def _branches(message: KrausMessage, diag: np.ndarray) -> np.ndarray:
    """Unnormalized branch vectors vec(K sqrt(L)), one row per operator."""
    scaled = message.operators * np.sqrt(diag)[None, None, :]
    return scaled.reshape(message.kraus_rank, -1)


def message_density(message: KrausMessage, s: SchmidtSpectrum) -> MessageDensity:
    """Assemble the message density operator from its branches."""
    diag = s.values
    if message.d != s.d:
        raise KrausError("dimension mismatch between message and spectrum")
    psi = _branches(message, diag)
    probs = np.real(np.einsum("kx,kx->k", np.conj(psi), psi))
    total = probs.sum()
    if abs(total - 1.0) > 1e-10:
        raise KrausError(f"branch probabilities sum to {total!r}")
    rho = np.einsum("kx,ky->xy", psi, np.conj(psi))
    return MessageDensity(rho, probs)


def purity(rho: MessageDensity) -> float:
    """Tr(rho^2) in (0, 1]; equals 1 iff the message is a single pure state."""
    return float(np.real(np.trace(rho.matrix @ rho.matrix)))


def message_purities(message_set: KrausMessageSet, s: SchmidtSpectrum) -> np.ndarray:
    """Purity of each message density, computed from branch Gram matrices."""
    diag = s.values
    out = []
    for m in message_set.messages:
        psi = _branches(m, diag)
        g = np.conj(psi) @ psi.T
        out.append(float(np.real(np.sum(np.abs(g) ** 2))))
    return np.array(out)


def _all_branches(message_set: KrausMessageSet, diag: np.ndarray):
    rows = []
    owner = []
    for j, m in enumerate(message_set.messages):
        rows.append(_branches(m, diag))
        owner.extend([j] * m.kraus_rank)
    return np.concatenate(rows, axis=0), np.array(owner)


def cross_orthogonality_residual(message_set: KrausMessageSet, s: SchmidtSpectrum) -> float:
    """Sum over ordered message pairs j != j' of squared branch overlaps.

    Zero exactly when every branch of every message is orthogonal to all
    branches of all other messages, i.e. when the receiver can decode with
    certainty.
    """
    psi, owner = _all_branches(message_set, _diagonal_of(s))
    t = np.conj(psi) @ psi.T
    mask = (owner[:, None] != owner[None, :]).astype(float)
    return float(np.sum(np.abs(t * mask) ** 2))


def cross_max_abs_overlap(message_set: KrausMessageSet, s: SchmidtSpectrum) -> float:
    psi, owner = _all_branches(message_set, _diagonal_of(s))
    t = np.conj(psi) @ psi.T
    mask = owner[:, None] != owner[None, :]
    return float(np.abs(t[mask]).max()) if mask.any() else 0.0


# ---------------------------------------------------------------------------
# Search over stacked isometries
# ---------------------------------------------------------------------------

def _haar_isometries(rng: np.random.Generator, n: int, rows: int, cols: int) -> np.ndarray:
    g = rng.standard_normal((n, rows, cols)) + 1j * rng.standard_normal((n, rows, cols))
    q, r = np.linalg.qr(g)
    diag = np.diagonal(r, axis1=1, axis2=2).copy()
    phases = diag / np.abs(diag)
    return q * np.conj(phases)[:, None, :]


def _polar_retract(y: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(y, full_matrices=False)
    return u @ vh


def _stack_cost_grad(stacks: np.ndarray, diag: np.ndarray, mask: np.ndarray):
    n, big, d = stacks.shape
    kappa = big // d
    k_ops = stacks.reshape(n * kappa, d, d)
    phi = (k_ops * np.sqrt(diag)[None, None, :]).reshape(n * kappa, -1)
    t = np.conj(phi) @ phi.T
    tm = t * mask
    cost = float(np.sum(np.abs(tm) ** 2))
    g_phi = 2.0 * (tm.T @ phi)
    g_k = g_phi.reshape(n * kappa, d, d) * np.sqrt(diag)[None, None, :]
    return cost, g_k.reshape(n, big, d)


def _pgd(stacks: np.ndarray, diag: np.ndarray, mask: np.ndarray,
         max_iter: int, stop_cost: float):
    """Projected gradient descent with Barzilai-Borwein steps.

    Steps move along the ambient gradient and retract back to the isometry
    manifold by polar decomposition, so completeness never drifts.
    """
    def inner(a, b):
        return float(np.real(np.sum(np.conj(a) * b)))

    s = stacks
    cost, g = _stack_cost_grad(s, diag, mask)
    gnorm2 = inner(g, g)
    eta = 0.1 / max(np.sqrt(gnorm2), 1.0)
    window = [cost]
    last_progress = cost
    since_progress = 0
    for _ in range(max_iter):
        if cost <= stop_cost:
            break
        accepted = False
        for _halving in range(40):
            s_new = _polar_retract(s - eta * g)
            cost_new, g_new = _stack_cost_grad(s_new, diag, mask)
            if cost_new <= max(window) - 1e-4 * eta * gnorm2:
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        ds = s_new - s
        dg = g_new - g
        denom = inner(ds, dg)
        if denom > 1e-300:
            eta = min(max(inner(ds, ds) / denom, 1e-8), 1e3)
        s, cost, g = s_new, cost_new, g_new
        gnorm2 = inner(g, g)
        window.append(cost)
        if len(window) > 5:
            window.pop(0)
        if cost < last_progress * (1 - 1e-10):
            last_progress = cost
            since_progress = 0
        else:
            since_progress += 1
            if since_progress > 60:
                break
    return s, cost


def _complete_to_unitaries(stacks: np.ndarray) -> np.ndarray:
    n, big, d = stacks.shape
    u, _, _ = np.linalg.svd(stacks, full_matrices=True)
    return np.concatenate([stacks, u[:, :, d:]], axis=2)


def _set_from_stacks(stacks: np.ndarray, kappa: int) -> KrausMessageSet:
    n, big, d = stacks.shape
    messages = []
    for j in range(n):
        ops = stacks[j].reshape(kappa, d, d)
        messages.append(KrausMessage(ops.copy()))
    return KrausMessageSet(tuple(messages))


def _purity_snap(stacks: np.ndarray, diag: np.ndarray):
    """Project each message onto its dominant pure direction.

    Returns (unitaries, weights) with message j snapped to operators
    c_jk * W_j, which is exactly complete for unit-norm weight vectors.
    Used as a second refinement stage: at spectra saturating the bound the
    solutions are pure, and the plain least-squares approach to that wall
    is quadratically degenerate.
    """
    n, big, d = stacks.shape
    kappa = big // d
    safe = np.sqrt(np.maximum(diag, 1e-300))
    ws = np.empty((n, d, d), dtype=complex)
    cs = np.empty((n, kappa), dtype=complex)
    for j in range(n):
        psi = (stacks[j].reshape(kappa, d, d) * safe[None, None, :]).reshape(kappa, -1)
        u, _, vh = np.linalg.svd(psi)
        m = vh[0].reshape(d, d) / safe[None, :]
        uu, _, vv = np.linalg.svd(m)
        ws[j] = uu @ vv
        cs[j] = u[:, 0]
    return ws, cs


def _stacks_from_pure(ws: np.ndarray, cs: np.ndarray) -> np.ndarray:
    n, d, _ = ws.shape
    kappa = cs.shape[1]
    return (cs[:, :, None, None] * ws[:, None, :, :]).reshape(n, kappa * d, d)


def _masked_gmax(stacks: np.ndarray, diag: np.ndarray, mask: np.ndarray):
    n, big, d = stacks.shape
    kappa = big // d
    k_ops = stacks.reshape(n * kappa, d, d)
    phi = (k_ops * np.sqrt(diag)[None, None, :]).reshape(len(k_ops), -1)
    t = np.conj(phi) @ phi.T
    cost = float(np.sum(np.abs(t * mask) ** 2))
    gmax = float(np.abs(t * mask).max()) if n > 1 else 0.0
    return cost, gmax


def _kraus_attempt(diag, n_messages, kappa, cfg, index):
    d = len(diag)
    big = kappa * d
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 104729, index]))
    stacks = _haar_isometries(rng, n_messages, big, d)
    owner = np.repeat(np.arange(n_messages), kappa)
    mask = (owner[:, None] != owner[None, :]).astype(float)
    # The ordered-pair cost double counts, so stop at twice the trigger.
    stacks, cost = _pgd(stacks, diag, mask, cfg.max_iterations,
                        stop_cost=min(cfg.polish_trigger, 1e-6))
    gmax = None
    if cost < 2.0 * cfg.polish_trigger:
        bases = _complete_to_unitaries(stacks)
        free = np.ones(n_messages, dtype=bool)
        new_bases, info = refine_charts(diag, bases, kappa=kappa, free_mask=free,
                                        max_iter=12)
        # refine reports the unordered sum; the ordered convention doubles it.
        if 2.0 * info["residual"] < cost:
            stacks = new_bases[:, :, :d]
            cost = 2.0 * info["residual"]
        cost, gmax = _masked_gmax(stacks, diag, mask)
        if gmax > cfg.feasibility_threshold:
            # Plateau near the purity wall: snap to the pure submanifold
            # and polish there; keep it only if it actually wins.
            ws, cs = _purity_snap(stacks, diag)
            ws_ref, _ = refine_charts(diag, ws, kappa=1,
                                      free_mask=np.ones(n_messages, dtype=bool))
            snapped = _stacks_from_pure(ws_ref, cs)
            cost_snap, gmax_snap = _masked_gmax(snapped, diag, mask)
            if cost_snap < cost:
                stacks, cost, gmax = snapped, cost_snap, gmax_snap
    if gmax is None:
        cost, gmax = _masked_gmax(stacks, diag, mask)
    return index, cost, gmax, stacks


def _kraus_attempt_args(args):
    return _kraus_attempt(*args)


def find_kraus_messages(
    s: SchmidtSpectrum,
    n_messages: int,
    kappa: int,
    cfg: SolverConfig | None = None,
) -> FeasibilityReport:
    """Search for N decodable messages, each built from kappa Kraus operators.

    Each message's operators are the row blocks of a kappa*d x d isometry,
    so completeness is structural.  kappa = 1 is the unitary special case
    and must agree with find_messages verdicts.
    """
    cfg = cfg or SolverConfig()
    d = s.d
    if not 1 <= n_messages <= d * d:
        raise AlphabetError(f"N must lie in 1..{d * d}, got {n_messages}")
    if kappa < 1:
        raise AlphabetError(f"kappa must be >= 1, got {kappa}")
    diag = s.values

    def report(**kw):
        base = dict(d=d, n_messages=n_messages, spectrum=s, feasible=False,
                    best_residual=None, max_abs_overlap=None, witness=None,
                    restarts_used=0, reason=None, config=cfg, kappa=kappa,
                    best_candidate=None)
        base.update(kw)
        return FeasibilityReport(**base)

    if cfg.use_bound_screen and s.lambda0 > d / n_messages + BOUND_SCREEN_SLACK:
        return report(reason="bound_screen")

    best = None
    feasible_hit = None
    attempts_run = 0
    chunk = max(1, cfg.parallelism)

    def run_indices(indices):
        nonlocal best, feasible_hit, attempts_run
        jobs = [(diag, n_messages, kappa, cfg, i) for i in indices]
        if cfg.parallelism > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
                outcomes = list(pool.map(_kraus_attempt_args, jobs))
            attempts_run += len(outcomes)
            for index, cost, gmax, stacks in sorted(outcomes, key=lambda o: o[0]):
                if best is None or cost < best[0]:
                    best = (cost, gmax, stacks)
            for index, cost, gmax, stacks in sorted(outcomes, key=lambda o: o[0]):
                if gmax <= cfg.feasibility_threshold:
                    feasible_hit = (cost, gmax, stacks)
                    return
        else:
            for job in jobs:
                _, cost, gmax, stacks = _kraus_attempt(*job)
                attempts_run += 1
                if best is None or cost < best[0]:
                    best = (cost, gmax, stacks)
                if gmax <= cfg.feasibility_threshold:
                    feasible_hit = (cost, gmax, stacks)
                    return

    i = 0
    while i < cfg.restarts and feasible_hit is None:
        run_indices(range(i, min(i + chunk, cfg.restarts)))
        i += chunk
    if feasible_hit is None and best is not None and (
            best[1] <= cfg.escalation_band * cfg.feasibility_threshold):
        extra = (cfg.escalation_factor - 1) * cfg.restarts
        j = cfg.restarts
        while j < cfg.restarts + extra and feasible_hit is None:
            run_indices(range(j, min(j + chunk, cfg.restarts + extra)))
            j += chunk

    if feasible_hit is not None:
        cost, gmax, stacks = feasible_hit
        witness = _set_from_stacks(stacks, kappa)
        return report(feasible=True, best_residual=cost, max_abs_overlap=gmax,
                      witness=witness, best_candidate=witness,
                      restarts_used=attempts_run)
    cost, gmax, stacks = best
    return report(feasible=False, best_residual=cost, max_abs_overlap=gmax,
                  best_candidate=_set_from_stacks(stacks, kappa),
                  restarts_used=attempts_run, reason="search_exhausted")


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorBoundReport:
    """Numerical check of the operator inequality behind the alphabet bound."""

    min_projector_gap: float    # smallest eigenvalue of I - sum of supports
    projector_ok: bool
    bound_gap: float            # d - N*lambda_0
    bound_ok: bool
    cross_max_abs: float
    support_ranks: tuple

    def to_json_dict(self) -> dict:
        return {
            "kind": "operator_bound_report",
            "min_projector_gap": self.min_projector_gap,
            "projector_ok": self.projector_ok,
            "bound_gap": self.bound_gap,
            "bound_ok": self.bound_ok,
            "cross_max_abs": self.cross_max_abs,
            "support_ranks": list(self.support_ranks),
        }


def operator_bound_check(message_set: KrausMessageSet, s: SchmidtSpectrum,
                         rank_cutoff: float = RANK_CUTOFF) -> OperatorBoundReport:
    """Verify that the message supports fit inside the doubled space.

    The supports of orthogonal message densities stack below the identity,
    which after tracing out the sender forces N*lambda_n <= d for every
    coefficient.  Support projectors use the declared eigenvalue cutoff
    since numerical densities are never exactly rank deficient.
    """
    d = s.d
    n = message_set.n_messages
    total = np.zeros((d * d, d * d), dtype=complex)
    ranks = []
    for m in message_set.messages:
        rho = message_density(m, s).matrix
        vals, vecs = np.linalg.eigh(rho)
        keep = vals > rank_cutoff
        ranks.append(int(np.sum(keep)))
        total += vecs[:, keep] @ np.conj(vecs[:, keep].T)
    gap = float(np.linalg.eigvalsh(np.eye(d * d) - total).min())
    bound_gap = float(d - n * s.lambda0)
    return OperatorBoundReport(
        min_projector_gap=gap,
        projector_ok=gap >= -1e-8,
        bound_gap=bound_gap,
        bound_ok=bound_gap >= -1e-9,
        cross_max_abs=cross_max_abs_overlap(message_set, s),
        support_ranks=tuple(ranks),
    )


def effective_unitary(message: KrausMessage, s: SchmidtSpectrum,
                      purity_tol: float = 1e-8,
                      rank_cutoff: float = RANK_CUTOFF) -> Optional[np.ndarray]:
    """Unitary matching the message's action on the shared state, if pure.

    Columns multiplying vanishing Schmidt coefficients never touch the
    state, so they are completed freely to an orthonormal basis; returns
    None when the message density is genuinely mixed.
    """
    diag = s.values
    d = s.d
    psi = _branches(message, diag)
    sv = np.linalg.svd(psi, compute_uv=False)
    weights = sv ** 2
    total = weights.sum()
    pur = float(np.sum(weights ** 2) / total ** 2)
    if pur < 1.0 - purity_tol:
        return None
    _, _, vh = np.linalg.svd(psi)
    m_mat = vh[0].reshape(d, d)
    support = diag > rank_cutoff
    cols = m_mat[:, support] / np.sqrt(diag[support])[None, :]
    defect = np.abs(np.conj(cols.T) @ cols - np.eye(cols.shape[1])).max()
    if defect > 1e-6:
        return None
    v = np.zeros((d, d), dtype=complex)
    v[:, support] = cols
    n_free = d - cols.shape[1]
    if n_free:
        u_full, _, _ = np.linalg.svd(cols)
        v[:, ~support] = u_full[:, cols.shape[1]:]
    # Snap to the nearest unitary to clear float-level drift.
    u_snap, _, vh_snap = np.linalg.svd(v)
    return u_snap @ vh_snap


@dataclass(frozen=True)
class PurityAuditReport:
    """Search outcome plus per-message purities at one spectrum."""

    spectrum: SchmidtSpectrum
    search: FeasibilityReport
    purities: Optional[np.ndarray]
    min_purity: Optional[float]
    bound_check: Optional[OperatorBoundReport]

    def to_json_dict(self) -> dict:
        return {
            "kind": "purity_audit",
            "spectrum": [float(v) for v in self.spectrum.values],
            "search": self.search.to_json_dict(),
            "purities": None if self.purities is None else [float(p) for p in self.purities],
            "min_purity": self.min_purity,
            "bound_check": None if self.bound_check is None else self.bound_check.to_json_dict(),
        }


def equal_tail_spectrum(d: int, lambda0: float) -> SchmidtSpectrum:
    """Spectrum (lambda0, t, ..., t) with the remaining weight split equally."""
    tail = (1.0 - lambda0) / (d - 1)
    if tail > lambda0 + 1e-12:
        raise ValueError(f"lambda0={lambda0} too small to lead a d={d} spectrum")
    return make_spectrum([lambda0] + [tail] * (d - 1))


def theorem2_audit(d: int, n_messages: int, kappa: int,
                   cfg: SolverConfig | None = None,
                   spectrum: SchmidtSpectrum | None = None) -> PurityAuditReport:
    """Audit message purities for a search run at lambda_0 = d/N.

    At the bound every found message should be (numerically) pure; away
    from it mixed messages are allowed.  The audit reports the empirical
    purities without asserting a rate of approach.
    """
    cfg = cfg or SolverConfig()
    if spectrum is None:
        spectrum = equal_tail_spectrum(d, d / n_messages)
    rep = find_kraus_messages(spectrum, n_messages, kappa, cfg)
    if rep.witness is None:
        return PurityAuditReport(spectrum, rep, None, None, None)
    purities = message_purities(rep.witness, spectrum)
    bound = operator_bound_check(rep.witness, spectrum)
    return PurityAuditReport(spectrum, rep, purities, float(purities.min()), bound)
