"""Convex subproblem solver: max t + rho*Re Tr(C V) - rho*Tr(V) over PSD V.

Constraints are Tr(R_m V) >= t for every sample channel (R_m = h_m h_m^H)
plus either a fixed diagonal (phase-only lifting, V(n,n) = 1/N) or a fixed
trace (unit-power lifting, Tr V = 1).

Two interchangeable backends solve the same problem:

* ``cvxpy``: delegation to a conic solver (SCS), the default at small and
  medium N. The parametrized problem is canonicalized once per instance and
  re-solved as the linear term changes.
* ``splitting``: an embedded ADMM that alternates PSD-cone projection
  (Hermitian eigendecomposition, negative eigenvalues clipped) against the
  affine constraints. The affine projection exploits the rank-one structure
  of the R_m, so memory stays O(MN + N^2 + (M+N)^2) and N in the hundreds is
  tractable where generic canonicalization is not.

Both report a certified duality gap built from the same primal-repair /
dual-repair helper, so "optimal" means the same thing regardless of backend.
Channels are rescaled internally so the solver sees O(1) data; results are
returned in the caller's units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

DIAG = "diag"   # V(n,n) = 1/N for all n
TRACE = "trace"  # Tr(V) = 1

_CVXPY_MAX_N = 128       # above this, "auto" switches to the splitting backend
_IP_ITERATION_CAP = 200  # interior-point style iteration budget
_FO_ITERATION_CAP = 50_000  # first-order iteration budget


@dataclass(frozen=True)
class SubproblemSpec:
    """One convex subproblem instance.

    ``channels`` holds the rows h_m; the constraint matrices R_m = h_m h_m^H
    are implied and never materialized densely. ``linear_term`` is the
    Hermitian matrix C multiplying rho in the objective; ``rho`` is in the
    caller's power units.
    """

    channels: np.ndarray          # (M, N) complex
    linear_term: np.ndarray       # (N, N) Hermitian
    constraint_kind: str = DIAG
    rho: float = 0.0

    def __post_init__(self):
        H = np.asarray(self.channels, dtype=complex)
        C = np.asarray(self.linear_term, dtype=complex)
        if H.ndim != 2:
            raise ValueError("channels must be a 2-D array (M, N)")
        n = H.shape[1]
        if C.shape != (n, n):
            raise ValueError(f"linear_term must be ({n}, {n}), got {C.shape}")
        if np.max(np.abs(C - C.conj().T)) > 1e-10 * max(1.0, float(np.max(np.abs(C)))):
            raise ValueError("linear_term must be Hermitian")
        if self.constraint_kind not in (DIAG, TRACE):
            raise ValueError(f"unknown constraint_kind {self.constraint_kind!r}")
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        object.__setattr__(self, "channels", H)
        object.__setattr__(self, "linear_term", 0.5 * (C + C.conj().T))

    @property
    def num_points(self) -> int:
        return self.channels.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.channels.shape[1]

    def rank_one_term(self, m: int) -> np.ndarray:
        """Materialize R_m = h_m h_m^H (test/debug helper)."""
        h = self.channels[m]
        return np.outer(h, h.conj())


@dataclass(frozen=True)
class SubproblemSolution:
    V: np.ndarray
    t: float
    status: str                   # optimal | max_iterations | infeasible
    residuals: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.residuals.get("objective", np.nan)


def _trace_forms(H: np.ndarray, V: np.ndarray) -> np.ndarray:
    """All M values Tr(R_m V) = h_m^H V h_m, O(M N^2)."""
    return np.real(np.einsum("mn,nk,mk->m", H.conj(), V, H, optimize=True))


def _adjoint(H: np.ndarray, y: np.ndarray) -> np.ndarray:
    """sum_m y_m R_m without forming any R_m."""
    return (H.T * y) @ H.conj()


def _certify(H, A, kind, d_val, V, y, mu):
    """Certified primal value and dual bound from (possibly infeasible) iterates.

    Repairs the primal by rescaling onto the diag/trace constraint and the
    dual by shifting mu until Z = D*(mu) - A - sum_m y_m R_m is PSD; the mu
    sign convention varies between solvers, so both signs are tried and the
    tighter valid bound kept. Returns (primal_value, dual_bound, V_repaired,
    t_repaired).
    """
    n = V.shape[0]
    # primal repair: clip to PSD, then rescale onto the affine constraint
    w, Q = np.linalg.eigh(0.5 * (V + V.conj().T))
    Vp = (Q * np.maximum(w, 0.0)) @ Q.conj().T
    if kind == DIAG:
        g = np.real(np.diag(Vp)).copy()
        zero = g <= 0
        g[zero] = 1.0
        s = np.sqrt(d_val / g)
        Vp = Vp * np.outer(s, s)
        if np.any(zero):
            Vp[zero, zero] = d_val
    else:
        tr = float(np.real(np.trace(Vp)))
        Vp = Vp / tr if tr > 0 else np.eye(n, dtype=complex) / n
    t_p = float(np.min(_trace_forms(H, Vp)))
    primal = t_p + float(np.real(np.vdot(A, Vp)))

    # dual repair: y onto the simplex, then shift mu until Z is PSD
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    tot = y.sum()
    y = y / tot if tot > 0 else np.full(H.shape[0], 1.0 / H.shape[0])
    Z0 = -A - _adjoint(H, y)
    mu = np.atleast_1d(np.real(np.asarray(mu, dtype=complex))).astype(float)
    dual = np.inf
    for signed in (mu, -mu):
        if kind == DIAG:
            lam = float(np.linalg.eigvalsh(Z0 + np.diag(signed))[0])
            cand = float(np.sum(signed - min(lam, 0.0)) * d_val)
        else:
            m0 = float(signed[0])
            lam = float(np.linalg.eigvalsh(Z0 + m0 * np.eye(n))[0])
            cand = (m0 - min(lam, 0.0)) * d_val
        dual = min(dual, cand)
    return primal, dual, Vp, t_p


class _CvxpyBackend:
    """Parametrized conic program, canonicalized once per instance."""

    def __init__(self, H, kind, d_val, tol):
        import cvxpy as cp

        self._cp = cp
        m, n = H.shape
        self.H = H
        self.kind = kind
        self.d_val = d_val
        self.tol = tol
        self.V = cp.Variable((n, n), hermitian=True)
        self.t = cp.Variable()
        self.A = cp.Parameter((n, n), hermitian=True)
        # rows vec(R_m) in C order pair with vec(V, order='F') to give Tr(R_m V)
        rows = np.stack([np.outer(H[i], H[i].conj()).reshape(-1) for i in range(m)])
        cons = [cp.real(rows @ cp.vec(self.V, order="F")) >= self.t, self.V >> 0]
        if kind == DIAG:
            cons.append(cp.diag(self.V) == d_val)
        else:
            cons.append(cp.real(cp.trace(self.V)) == d_val)
        self.ineq = cons[0]
        self.affine = cons[-1]
        self.problem = cp.Problem(
            cp.Maximize(self.t + cp.real(cp.trace(self.A @ self.V))), cons)

    def solve(self, A, warm_start):
        cp = self._cp
        self.A.value = A
        if warm_start is not None:
            self.V.value = warm_start
        try:
            self.problem.solve(solver=cp.SCS, warm_start=warm_start is not None,
                               eps_abs=self.tol, eps_rel=self.tol,
                               max_iters=_FO_ITERATION_CAP, verbose=False)
        except cp.SolverError:
            return None, {"solver_status": "solver_error"}
        if self.V.value is None:
            return None, {"solver_status": str(self.problem.status)}
        V = 0.5 * (self.V.value + self.V.value.conj().T)
        m, n = self.H.shape
        y = self.ineq.dual_value
        y = np.real(np.asarray(y)) if y is not None else np.zeros(m)
        mu = self.affine.dual_value
        if mu is None:
            mu = np.zeros(n) if self.kind == DIAG else 0.0
        stats = {
            "solver_status": str(self.problem.status),
            "iterations": getattr(self.problem.solver_stats, "num_iters", None),
        }
        return (V, float(self.t.value), y, mu), stats


class _SplittingBackend:
    """ADMM: PSD/nonnegative cone projection vs affine least squares.

    The affine step solves an equality-constrained least squares whose KKT
    matrix involves only the (M + p + 1)-dimensional Gram of the constraint
    operators, assembled once from inner products of the rank-one terms.
    """

    def __init__(self, H, kind, d_val, tol, max_iters=_FO_ITERATION_CAP,
                 check_every=25):
        m, n = H.shape
        self.H = H
        self.kind = kind
        self.d_val = d_val
        self.tol = tol
        self.max_iters = max_iters
        self.check_every = check_every

        gram_kk = np.abs(H.conj() @ H.T) ** 2     # <R_i, R_j> = |h_i^H h_j|^2
        if kind == DIAG:
            p = n
            gram_kd = np.abs(H) ** 2              # <R_i, E_nn> = |h_i[n]|^2
            gram_dd = np.eye(n)
        else:
            p = 1
            gram_kd = np.sum(np.abs(H) ** 2, axis=1, keepdims=True)
            gram_dd = np.array([[float(n)]])
        # KKT for the affine least-squares step; unknowns [nu (M), mu (p), t]
        kkt = np.zeros((m + p + 1, m + p + 1))
        kkt[:m, :m] = gram_kk + np.eye(m)
        kkt[:m, m:m + p] = gram_kd
        kkt[m:m + p, :m] = gram_kd.T
        kkt[m:m + p, m:m + p] = gram_dd
        kkt[:m, -1] = 1.0
        kkt[-1, :m] = 1.0
        self._lu = scipy.linalg.lu_factor(kkt)
        self._m, self._p, self._n = m, p, n

    def _apply_dstar(self, mu):
        if self.kind == DIAG:
            return np.diag(mu.astype(complex))
        return float(mu[0]) * np.eye(self._n, dtype=complex)

    def _apply_d(self, V):
        if self.kind == DIAG:
            return np.real(np.diag(V))
        return np.array([float(np.real(np.trace(V)))])

    def solve(self, A, warm_start, state=None):
        H, m, p, n = self.H, self._m, self._p, self._n
        eta = 1.0  # objective weight relative to unit ADMM penalty
        if state is None:
            V1 = warm_start if warm_start is not None else np.eye(n, dtype=complex) * (self.d_val if self.kind == DIAG else 1.0 / n)
            s1 = np.maximum(_trace_forms(H, V1) - np.min(_trace_forms(H, V1)), 0.0)
            U = np.zeros((n, n), dtype=complex)
            u = np.zeros(m)
        else:
            V1, s1, U, u = state
        d_target = np.full(p, self.d_val) if self.kind == DIAG else np.array([1.0])

        best = None
        it = 0
        for it in range(1, self.max_iters + 1):
            # affine block: project (V1 - U, s1 - u) onto the constraint set
            # while pulling along the linear objective
            Vt = V1 - U + eta * A
            b = np.concatenate([
                _trace_forms(H, Vt) - (s1 - u),
                self._apply_d(Vt) - d_target,
                [-eta],
            ])
            sol = scipy.linalg.lu_solve(self._lu, b)
            nu, mu, t = sol[:m], sol[m:m + p], float(sol[-1])
            V2 = Vt - _adjoint(H, nu) - self._apply_dstar(mu)
            V2 = 0.5 * (V2 + V2.conj().T)
            s2 = s1 - u + nu

            # cone block: PSD clip and nonnegative clip
            w, Q = np.linalg.eigh(V2 + U)
            V1_new = (Q * np.maximum(w, 0.0)) @ Q.conj().T
            s1_new = np.maximum(s2 + u, 0.0)

            U = U + V2 - V1_new
            u = u + s2 - s1_new
            dV = np.linalg.norm(V1_new - V1)
            V1, s1 = V1_new, s1_new

            if it % self.check_every == 0 or it == self.max_iters:
                y = np.maximum(-nu / eta, 0.0)
                primal, dual, Vp, t_p = _certify(H, A, self.kind, self.d_val,
                                                 V1, y, mu / eta)
                gap = dual - primal
                if best is None or gap < best[0]:
                    best = (gap, primal, dual, Vp, t_p, y, mu / eta)
                scale = 1.0 + max(abs(primal), abs(dual))
                if gap <= self.tol * scale and dV <= self.tol * max(1.0, np.linalg.norm(V1)):
                    break
        gap, primal, dual, Vp, t_p, y, mu = best
        stats = {
            "solver_status": "optimal" if gap <= self.tol * (1.0 + max(abs(primal), abs(dual))) else "max_iterations",
            "iterations": it,
        }
        return (Vp, t_p, y, mu), stats, (V1, s1, U, u)


class SubproblemSolver:
    """Reusable solver for a fixed channel set and constraint kind.

    Channels are rescaled once so that max_m ||h_m||^2 = 1; ``solve`` takes
    the penalty in original units and returns a solution in original units.
    backend: "auto" (cvxpy up to N=128, splitting above), "cvxpy",
    or "splitting".
    """

    def __init__(self, channels, constraint_kind=DIAG, backend="auto",
                 tol=1e-8, gap_tol=1e-6):
        H = np.asarray(channels, dtype=complex)
        if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
            raise ValueError("channels must be a nonempty (M, N) array")
        self.scale = float(np.max(np.sum(np.abs(H) ** 2, axis=1)))
        if self.scale == 0:
            raise ValueError("all channels are zero; nothing to optimize")
        self.H = H / np.sqrt(self.scale)
        self.kind = constraint_kind
        self.n = H.shape[1]
        self.d_val = 1.0 / self.n if constraint_kind == DIAG else 1.0
        self.gap_tol = gap_tol
        if backend == "auto":
            backend = "cvxpy" if self.n <= _CVXPY_MAX_N else "splitting"
        self.backend_name = backend
        if backend == "cvxpy":
            self._backend = _CvxpyBackend(self.H, constraint_kind, self.d_val, tol)
        elif backend == "splitting":
            self._backend = _SplittingBackend(self.H, constraint_kind, self.d_val,
                                              max(tol, 1e-9))
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self._splitting_state = None

    def solve(self, linear_term, rho, warm_start=None) -> SubproblemSolution:
        C = np.asarray(linear_term, dtype=complex)
        rho_scaled = float(rho) / self.scale
        A = rho_scaled * (C - np.eye(self.n))    # Re Tr(A V) = rho(Re Tr(CV) - Tr V)
        A = 0.5 * (A + A.conj().T)

        if self.backend_name == "cvxpy":
            result, stats = self._backend.solve(A, warm_start)
            if result is None:
                return self._failure(stats, warm_start)
            V, t_raw, y, mu = result
            primal, dual, Vp, t_p = _certify(self.H, A, self.kind, self.d_val,
                                             V, y, mu)
        else:
            result, stats, self._splitting_state = self._backend.solve(
                A, warm_start, self._splitting_state)
            Vp, t_p, y, mu = result
            primal = t_p + float(np.real(np.vdot(A, Vp)))
            _, dual, _, _ = _certify(self.H, A, self.kind, self.d_val, Vp, y, mu)

        gap = dual - primal
        gap_scale = 1.0 + max(abs(primal), abs(dual))
        eigs = np.linalg.eigvalsh(Vp)
        forms = _trace_forms(self.H, Vp)
        residuals = {
            "hermiticity": float(np.max(np.abs(Vp - Vp.conj().T))),
            "min_eigenvalue": float(eigs[0]),
            "constraint": float(np.max(np.abs(self._affine_values(Vp)))),
            "margin": float(np.min(forms) - t_p) * self.scale,
            "gap": gap * self.scale,
            "gap_rel": gap / gap_scale,
            "objective": primal * self.scale,
            "solver_status": stats.get("solver_status"),
            "iterations": stats.get("iterations"),
            "backend": self.backend_name,
        }
        ok = (gap <= self.gap_tol * gap_scale
              and eigs[0] >= -1e-8
              and residuals["constraint"] <= 1e-7)
        status = "optimal" if ok else "max_iterations"
        return SubproblemSolution(V=Vp, t=t_p * self.scale, status=status,
                                  residuals=residuals)

    def _affine_values(self, V):
        if self.kind == DIAG:
            return np.real(np.diag(V)) - self.d_val
        return np.array([float(np.real(np.trace(V))) - 1.0])

    def _failure(self, stats, warm_start):
        V = warm_start if warm_start is not None else \
            np.eye(self.n, dtype=complex) * (self.d_val if self.kind == DIAG else 1.0 / self.n)
        t = float(np.min(_trace_forms(self.H, V))) * self.scale
        residuals = {"solver_status": stats.get("solver_status"),
                     "backend": self.backend_name, "objective": t}
        return SubproblemSolution(V=V, t=t, status="infeasible",
                                  residuals=residuals)


def solve_subproblem(spec: SubproblemSpec, warm_start: Optional[np.ndarray] = None,
                     backend="auto", tol=1e-8) -> SubproblemSolution:
    """One-shot solve of a SubproblemSpec.

    Iterative callers should hold a SubproblemSolver instead, which caches
    the canonicalized problem across penalty iterations.
    """
    solver = SubproblemSolver(spec.channels, spec.constraint_kind,
                              backend=backend, tol=tol)
    return solver.solve(spec.linear_term, spec.rho, warm_start=warm_start)
