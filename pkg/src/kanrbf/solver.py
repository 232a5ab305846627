"""Equality-constrained minimum-norm solves.

    minimize  lam^T K lam   subject to   A lam = b

The native-norm route factors ``K = L L^T``, finds the minimum 2-norm ``y``
with ``(A L^-T) y = b`` by a complete orthogonal decomposition, and maps back
with ``lam = L^-T y``.  ``K = I`` is the plain minimum-norm least-squares
problem.  A dense KKT solve is kept as an independent oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError, DomainError, InfeasibleError

RANK_TOL = 1e-12
FEASIBILITY_TOL = 1e-8
DEFAULT_MU = 1e-8


@dataclass(frozen=True)
class EpsilonPolicy:
    start: float = 1e-12  # multiples of trace(K) / M
    growth: float = 10.0
    cap: float = 1e-4

    def schedule(self, scale: float):
        eps = self.start
        while eps <= self.cap * (1 + 1e-9):
            yield eps * scale
            eps *= self.growth


@dataclass
class MinNormProblem:
    A: np.ndarray
    b: np.ndarray
    K: np.ndarray | None = None  # None means the identity (l2 objective)
    objective: str = "native"
    K_blocks: list[np.ndarray] | None = None  # block-diagonal K, if known
    epsilon_policy: EpsilonPolicy = field(default_factory=EpsilonPolicy)
    feasibility_tol: float = FEASIBILITY_TOL
    rank_tol: float = RANK_TOL
    check_feasibility: bool = True

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.shape[0] != len(self.b):
            raise DomainError(f"A has {self.A.shape[0]} rows but b has {len(self.b)} entries")
        if self.objective not in ("native", "l2"):
            raise DomainError(f"unknown objective {self.objective!r}")
        if self.K is not None:
            self.K = np.asarray(self.K, dtype=float)
            M = self.A.shape[1]
            if self.K.shape != (M, M):
                raise DomainError(f"K must be {M}x{M}")

    @property
    def M(self) -> int:
        return self.A.shape[1]

    @classmethod
    def from_assembly(cls, asm, b, objective: str = "native", **kw) -> "MinNormProblem":
        return cls(asm.A, b, asm.K if objective == "native" else None, objective,
                   K_blocks=asm.K_blocks if objective == "native" else None, **kw)


@dataclass
class MinNormSolution:
    lam: np.ndarray
    residual: float
    objective_value: float
    epsilon_used: float
    method: str


def _k_matrix(problem: MinNormProblem) -> np.ndarray:
    return np.eye(problem.M) if problem.K is None else problem.K


def _blocks(problem: MinNormProblem) -> list[np.ndarray]:
    if problem.K_blocks is not None:
        return problem.K_blocks
    return [_k_matrix(problem)]


def _cholesky_with_fallback(blocks, policy: EpsilonPolicy, trace_scale: float):
    """Lower Cholesky factors of each block, shifting by eps*I on failure."""
    def attempt(eps):
        out = []
        for B in blocks:
            Bs = B if eps == 0.0 else B + eps * np.eye(len(B))
            out.append(np.linalg.cholesky(Bs))
        if not all(np.all(np.isfinite(L)) for L in out):
            raise np.linalg.LinAlgError("non-finite factor")
        return out

    try:
        return attempt(0.0), 0.0
    except np.linalg.LinAlgError:
        pass
    for eps in policy.schedule(trace_scale):
        try:
            return attempt(eps), eps
        except np.linalg.LinAlgError:
            continue
    raise ConditioningError("Cholesky failed for every regularization in the epsilon policy")


def _minnorm_lstsq(B: np.ndarray, b: np.ndarray, rank_tol: float) -> np.ndarray:
    # complete orthogonal decomposition (pivoted QR), rank cut relative to the largest
    y, *_ = sla.lstsq(B, b, cond=rank_tol, lapack_driver="gelsy", check_finite=False)
    return y


def _finish(problem, lam, eps, method, K=None) -> MinNormSolution:
    res = float(np.linalg.norm(problem.A @ lam - problem.b))
    if K is None:
        obj = float(lam @ lam)
    else:
        obj = float(lam @ (K @ lam))
    if problem.check_feasibility and res > problem.feasibility_tol * (1 + np.linalg.norm(problem.b)):
        raise InfeasibleError(f"constraint residual {res:.3e} above tolerance")
    return MinNormSolution(lam, res, obj, eps, method)


def solve_native(problem: MinNormProblem) -> MinNormSolution:
    blocks = _blocks(problem)
    trace = sum(float(np.trace(B)) for B in blocks)
    factors, eps = _cholesky_with_fallback(blocks, problem.epsilon_policy, trace / problem.M)
    # B^T = L^-1 A^T, one triangular solve per diagonal block
    Bt = np.empty((problem.M, problem.A.shape[0]))
    start = 0
    for L in factors:
        stop = start + len(L)
        Bt[start:stop] = sla.solve_triangular(L, problem.A[:, start:stop].T, lower=True,
                                              check_finite=False)
        start = stop
    y = _minnorm_lstsq(Bt.T, problem.b, problem.rank_tol)
    lam = np.empty(problem.M)
    start = 0
    for L in factors:
        stop = start + len(L)
        lam[start:stop] = sla.solve_triangular(L, y[start:stop], lower=True, trans="T",
                                               check_finite=False)
        start = stop
    return _finish(problem, lam, eps, "native-cholesky", _k_matrix(problem))


def solve_l2(problem: MinNormProblem) -> MinNormSolution:
    lam = _minnorm_lstsq(problem.A, problem.b, problem.rank_tol)
    return _finish(problem, lam, 0.0, "l2-cod")


def solve(problem: MinNormProblem) -> MinNormSolution:
    return solve_native(problem) if problem.objective == "native" else solve_l2(problem)


def solve_tikhonov(problem: MinNormProblem, mu: float = DEFAULT_MU) -> MinNormSolution:
    """argmin |A lam - b|^2 + mu lam^T K lam via the normal equations."""
    if not mu > 0:
        raise DomainError("Tikhonov weight must be positive")
    A, b = problem.A, problem.b
    K = _k_matrix(problem)
    N = A.T @ A + mu * K
    rhs = A.T @ b
    scale = float(np.trace(N)) / problem.M
    for eps in (0.0, *problem.epsilon_policy.schedule(scale)):
        try:
            c = sla.cho_factor(N if eps == 0.0 else N + eps * np.eye(problem.M),
                               lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            continue
        lam = sla.cho_solve(c, rhs, check_finite=False)
        if np.all(np.isfinite(lam)):
            res = float(np.linalg.norm(A @ lam - b))
            return MinNormSolution(lam, res, float(lam @ (K @ lam)), eps, "tikhonov")
    raise ConditioningError("Tikhonov normal matrix is numerically singular")


def kkt_oracle(problem: MinNormProblem, max_size: int = 512) -> MinNormSolution:
    """Dense saddle-point solve; independent reference for the other routes."""
    A, b = problem.A, problem.b
    m, M = A.shape
    if M > max_size:
        raise DomainError(f"KKT oracle limited to M <= {max_size}")
    K = _k_matrix(problem)
    eps = 0.0
    w = np.linalg.eigvalsh(K)
    if w[0] <= 1e-14 * max(w[-1], 1.0):
        eps = max(1e-12 * float(np.trace(K)) / M, -w[0] + 1e-12 * w[-1])
        K = K + eps * np.eye(M)
    kkt = np.block([[K, A.T], [A, np.zeros((m, m))]])
    rhs = np.concatenate([np.zeros(M), b])
    try:
        sol, *_ = sla.lstsq(kkt, rhs, cond=1e-13, lapack_driver="gelsd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise ConditioningError(f"KKT oracle failed: {exc}") from exc
    lam = sol[:M]
    res = float(np.linalg.norm(A @ lam - b))
    return MinNormSolution(lam, res, float(lam @ (_k_matrix(problem) @ lam)), eps, "kkt")
