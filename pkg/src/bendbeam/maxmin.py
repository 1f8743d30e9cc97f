"""Max-min bending beamforming: penalized SCA over lifted correlation matrices.

The synthesis maximizes the minimum received power over the trajectory
samples. Lifting V = w w^H and dropping the rank constraint gives a convex
relaxation; the rank-one requirement is equivalent to the trace of V
matching its largest eigenvalue, and that gap is pushed to zero by a growing
penalty. Because the largest eigenvalue is convex, the penalized objective
is maximized through successive convex approximation: at each iterate the
eigenvalue is replaced by its tangent plane through the current top
eigenvector s, i.e. the penalty surrogate Tr(V) - Re Tr(s s^H V), which
upper-bounds the true penalty and touches it at the iterate. Each surrogate
maximization is the convex subproblem in :mod:`bendbeam.sdp`; the loop is
monotone in the surrogate objective by construction.

The final beamformer comes from the principal eigenpair: elementwise phases
for the phase-only scheme, the eigenvector itself for the unit-power scheme.
No randomized rounding is used anywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .channel import ABF, DBF, Beamformer, ChannelMatrix
from .sdp import DIAG, TRACE, SubproblemSolver

RHO_AFTER_FIRST_ROUND = 1e-2  # penalty once the pure-relaxation round leaves a rank gap


class NoPrincipalComponentError(ValueError):
    """Extraction was asked for the principal component of a zero matrix."""


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the penalty/SCA loop.

    Penalties are expressed in scale-free units (relative to the largest
    sample-channel power), so the same defaults work at desk scale and at
    full scale. rho_init = 0 makes the first round a pure relaxation solve,
    whose optimum is kept as the upper bound on any unit-rank beamformer.
    """

    scheme: str = ABF
    rho_init: float = 0.0
    rho_growth: float = 3.0
    rank_gap_tol: float = 1e-4
    obj_tol: float = 1e-6
    max_sca_iters: int = 100
    max_penalty_rounds: int = 12
    backend: str = "auto"
    subproblem_tol: float = 1e-8

    def __post_init__(self):
        if self.scheme not in (ABF, DBF):
            raise ValueError(f"scheme must be ABF or DBF, got {self.scheme!r}")
        if self.rho_init < 0:
            raise ValueError("rho_init must be >= 0")
        if not (self.rho_growth > 1):
            raise ValueError("rho_growth must be > 1")
        for name in ("rank_gap_tol", "obj_tol", "subproblem_tol"):
            if not (getattr(self, name) > 0):
                raise ValueError(f"{name} must be > 0")
        if self.max_sca_iters < 1 or self.max_penalty_rounds < 0:
            raise ValueError("iteration limits must be positive")


@dataclass
class TraceRow:
    iteration: int
    rho: float
    t: float
    objective: float  # surrogate objective t - rho * penalty_surrogate
    rank_gap: float


@dataclass
class SolverState:
    """Iterate and per-iteration trace of one synthesis run."""

    V: np.ndarray
    t: float
    rho: float
    status: str = "pending"
    t_relaxation: Optional[float] = None  # pure-SDR optimum when rho_init == 0
    trace_log: List[TraceRow] = field(default_factory=list)

    def trace_table(self):
        """Rows (iteration, rho, t, objective, rank_gap) for export."""
        return [(r.iteration, r.rho, r.t, r.objective, r.rank_gap)
                for r in self.trace_log]


def rank_gap(V: np.ndarray) -> float:
    """Tr(V) minus the largest eigenvalue; zero iff PSD V has unit rank."""
    V = np.asarray(V)
    asym = float(np.max(np.abs(V - V.conj().T)))
    if asym > 1e-8:
        raise ValueError(f"matrix is not Hermitian (max asymmetry {asym:.2e})")
    eigs = np.linalg.eigvalsh(0.5 * (V + V.conj().T))
    return float(np.real(np.trace(V)) - eigs[-1])


def _principal_eigvec(V: np.ndarray, degeneracy_tol: float = 1e-10) -> np.ndarray:
    """Unit top eigenvector, deterministically chosen and phase-canonical.

    On a (near-)degenerate top eigenvalue the eigendecomposition's last
    basis vector is kept, the phase is pinned so the first significant
    entry is real positive, and a warning is emitted.
    """
    Vh = 0.5 * (V + V.conj().T)
    w, Q = np.linalg.eigh(Vh)
    if w.size > 1 and w[-1] - w[-2] <= degeneracy_tol * max(1.0, abs(w[-1])):
        warnings.warn("top eigenvalue is degenerate; using the canonical "
                      "eigenvector choice", stacklevel=2)
    s = Q[:, -1]
    mags = np.abs(s)
    lead = int(np.argmax(mags > 1e-12 * max(mags.max(), 1e-300)))
    phase = np.angle(s[lead])
    return s * np.exp(-1j * phase)


def linearized_penalty(V: np.ndarray, V_ref: np.ndarray) -> Tuple[float, np.ndarray]:
    """Tangent-plane surrogate of Tr(V) - lambda_max(V) at V_ref.

    Returns (value, gradient); the value upper-bounds the true rank penalty
    everywhere and matches it at V = V_ref, and the gradient is I - s s^H
    with s the top eigenvector of V_ref.
    """
    s = _principal_eigvec(V_ref)
    ss = np.outer(s, s.conj())
    sigma_ref = float(np.real(np.vdot(s, V_ref @ s)))
    value = float(np.real(np.trace(V)) - sigma_ref
                  - np.real(np.trace(ss @ (V - V_ref))))
    grad = np.eye(V.shape[0], dtype=complex) - ss
    return value, grad


def extract_beamformer(V_final: np.ndarray, scheme: str) -> Beamformer:
    """Unit-rank beamformer from the principal eigenpair of V_final.

    Phase-only scheme keeps only the elementwise phases of the principal
    component; the unit-power scheme keeps the eigenvector. The global phase
    is pinned to the first (significant) entry.
    """
    V_final = np.asarray(V_final, dtype=complex)
    eigs = np.linalg.eigvalsh(0.5 * (V_final + V_final.conj().T))
    if not np.any(np.abs(eigs) > 0):
        raise NoPrincipalComponentError("cannot extract from a zero matrix")
    s = _principal_eigvec(V_final)
    if scheme == ABF:
        w = np.exp(1j * np.angle(s)) / np.sqrt(s.size)
        w = w * np.exp(-1j * np.angle(w[0]))
        return Beamformer(w, ABF)
    if scheme == DBF:
        return Beamformer(s / np.linalg.norm(s), DBF)
    raise ValueError(f"unknown scheme {scheme!r}")


def solve_maxmin(H: ChannelMatrix, cfg: SolverConfig,
                 V0: Optional[np.ndarray] = None) -> Tuple[Beamformer, SolverState]:
    """Penalty/SCA loop: relaxation solve, then grow the penalty until the
    iterate is numerically unit-rank, running SCA to convergence at each
    penalty level.

    V0 defaults to the maximally mixed feasible point I/N; callers with a
    convex trajectory usually pass the tangent-method outer product instead
    (see the pipeline helpers), which speeds up convergence.
    """
    gains = H.gains
    m, n = gains.shape
    solver = SubproblemSolver(gains, DIAG if cfg.scheme == ABF else TRACE,
                              backend=cfg.backend, tol=cfg.subproblem_tol)
    scale = solver.scale  # penalties are configured relative to this power

    if V0 is None:
        V = np.eye(n, dtype=complex) / n
    else:
        V = np.asarray(V0, dtype=complex)
        if V.shape != (n, n):
            raise ValueError(f"V0 must be ({n}, {n}), got {V.shape}")
    rho = cfg.rho_init
    state = SolverState(V=V, t=-np.inf, rho=rho)
    iteration = 0
    status = "max_iterations"

    for round_idx in range(cfg.max_penalty_rounds + 1):
        prev_obj = None
        for _ in range(cfg.max_sca_iters):
            s = _principal_eigvec(V)
            C = np.outer(s, s.conj())
            sol = solver.solve(C, rho * scale, warm_start=V)
            if sol.status == "infeasible":
                warnings.warn("subproblem reported a numerical breakdown; "
                              "keeping the best iterate so far", stacklevel=2)
                state.status = "infeasible"
                w = extract_beamformer(state.V, cfg.scheme)
                return w, state
            V = sol.V
            # surrogate objective t - rho*(Tr V - s^H V s), in config units
            penalty = float(np.real(np.trace(V)) - np.real(np.vdot(s, V @ s)))
            objective = sol.t / scale - rho * penalty
            gap = rank_gap(V)
            state.trace_log.append(TraceRow(iteration, rho, sol.t, objective, gap))
            state.V, state.t, state.rho = V, sol.t, rho
            iteration += 1
            if rho == 0.0:
                break  # objective has no reference dependence; one solve is exact
            if prev_obj is not None and \
                    abs(objective - prev_obj) <= cfg.obj_tol * max(1.0, abs(prev_obj)):
                break
            prev_obj = objective
        if round_idx == 0 and cfg.rho_init == 0.0:
            state.t_relaxation = state.t
        if gap <= cfg.rank_gap_tol * max(np.real(np.trace(V)), 0.0):
            status = "optimal"
            break
        rho = RHO_AFTER_FIRST_ROUND if rho == 0.0 else rho * cfg.rho_growth

    state.status = status
    w = extract_beamformer(V, cfg.scheme)
    return w, state
