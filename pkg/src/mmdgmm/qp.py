"""Exact weight update: convex quadratic program over the probability simplex.

    minimise  pi^T I pi - 2 J^T pi   subject to  pi >= 0, sum(pi) = 1

solved with a primal active-set method.  ``I`` only needs to be positive
semidefinite; zero-curvature directions are followed to the boundary.
"""

from __future__ import annotations

import numpy as np


def qp_objective(I: np.ndarray, J: np.ndarray, pi: np.ndarray) -> float:
    return float(pi @ I @ pi - 2.0 * J @ pi)


def kkt_residual(I: np.ndarray, J: np.ndarray, pi: np.ndarray) -> float:
    """Largest violation among stationarity on the support, dual feasibility
    off the support, complementary slackness and primal feasibility."""
    I = np.asarray(I, dtype=float)
    J = np.asarray(J, dtype=float)
    pi = np.asarray(pi, dtype=float)
    g = 2.0 * (I @ pi - J)
    support = pi > 0
    nu = float(np.mean(g[support])) if np.any(support) else float(np.min(g))
    lam = g - nu
    stationarity = float(np.max(np.abs(lam[support]), initial=0.0))
    dual = float(np.max(-lam[~support], initial=0.0))
    slack = float(np.max(np.abs(pi * lam)))
    primal = max(abs(float(pi.sum()) - 1.0), float(np.max(-pi, initial=0.0)))
    return max(stationarity, dual, slack, primal)


def _check(I, J):
    I = np.asarray(I, dtype=float)
    J = np.asarray(J, dtype=float).reshape(-1)
    K = J.shape[0]
    if I.shape != (K, K):
        raise ValueError(f"I must be {K}x{K}, got {I.shape}")
    if not (np.all(np.isfinite(I)) and np.all(np.isfinite(J))):
        raise ValueError("QP inputs must be finite")
    if np.max(np.abs(I - I.T), initial=0.0) > 1e-10:
        raise ValueError("I must be symmetric")
    return 0.5 * (I + I.T), J


def _null_basis(m: int) -> np.ndarray:
    """Orthonormal basis of {p in R^m : sum(p) = 0}."""
    if m == 1:
        return np.zeros((1, 0))
    # first m-1 columns of the centred identity span the complement of 1
    A = np.eye(m)[:, : m - 1] - 1.0 / m
    Q, _ = np.linalg.qr(A)
    return Q


def solve_simplex_qp(I, J, tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Minimiser of ``pi^T I pi - 2 J^T pi`` over the probability simplex."""
    I, J = _check(I, J)
    K = J.shape[0]
    if K == 1:
        return np.ones(1)
    scale = max(1.0, float(np.max(np.abs(I))), float(np.max(np.abs(J))))
    eps = 1e-13 * scale
    max_iter = max_iter or 50 * K + 100

    start = int(np.argmin(np.diag(I) - 2.0 * J))
    pi = np.zeros(K)
    pi[start] = 1.0
    free = np.zeros(K, dtype=bool)
    free[start] = True

    for _ in range(max_iter):
        F = np.flatnonzero(free)
        g = 2.0 * (I @ pi - J)
        Z = _null_basis(F.size)
        p = np.zeros(K)
        unbounded = False
        if Z.shape[1]:
            H = Z.T @ (2.0 * I[np.ix_(F, F)]) @ Z
            r = Z.T @ g[F]
            w, V = np.linalg.eigh(H)
            flat = w <= 1e-12 * max(1.0, float(np.max(np.abs(w))))
            rv = V.T @ r
            if np.any(flat & (np.abs(rv) > eps)):
                # objective is linear along these directions: descend to the boundary
                step = -(V[:, flat] @ rv[flat])
                unbounded = True
            else:
                coef = np.where(flat, 0.0, rv / np.where(flat, 1.0, w))
                step = -(V @ coef)
            p[F] = Z @ step

        if np.max(np.abs(p)) <= 1e-12:
            nu = float(np.mean(g[F]))
            lam = g - nu
            lam[F] = np.inf
            j = int(np.argmin(lam))
            if lam[j] >= -0.1 * tol:
                break
            free[j] = True
            continue

        neg = (p < 0) & free
        ratios = np.full(K, np.inf)
        ratios[neg] = pi[neg] / -p[neg]
        blocking = int(np.argmin(ratios))
        alpha = ratios[blocking]
        if not unbounded and alpha >= 1.0:
            pi = pi + p
            continue
        if not np.isfinite(alpha):  # pragma: no cover - simplex is bounded
            raise RuntimeError("QP step is unbounded")
        pi = pi + alpha * p
        pi[blocking] = 0.0
        free[blocking] = False
    else:  # pragma: no cover
        raise RuntimeError("active-set QP did not converge")

    pi[~free] = 0.0
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return _polish(I, J, pi)


def _polish(I, J, pi):
    """One Newton step on the support to remove accumulated round-off."""
    S = np.flatnonzero(pi > 0)
    m = S.size
    if m < 2:
        return pi
    A = np.zeros((m + 1, m + 1))
    A[:m, :m] = 2.0 * I[np.ix_(S, S)]
    A[:m, m] = 1.0
    A[m, :m] = 1.0
    rhs = np.concatenate([2.0 * J[S], [1.0]])
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return pi
    cand = pi.copy()
    cand[S] = sol[:m]
    if np.all(cand[S] > 0) and np.all(np.isfinite(cand)):
        cand /= cand.sum()
        if kkt_residual(I, J, cand) <= kkt_residual(I, J, pi):
            return cand
    return pi
