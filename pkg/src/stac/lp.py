"""Dense tableau simplex for small zero-sum matrix games."""

from __future__ import annotations

import numpy as np


class LpFailure(RuntimeError):
    pass


def simplex_max(c: np.ndarray, A: np.ndarray, b: np.ndarray, max_iter: int = 10_000,
                tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray, float]:
    """Maximize c.x subject to A x <= b, x >= 0, with b >= 0.

    The slack basis is feasible, so no phase one is needed. Bland's rule keeps
    degenerate pivots from cycling. Returns (x, duals, objective).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    if np.any(b < 0):
        raise LpFailure("right-hand side must be nonnegative")
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = list(range(n, n + m))
    for _ in range(max_iter):
        entering = next((j for j in range(n + m) if T[m, j] < -tol), None)
        if entering is None:
            break
        col = T[:m, entering]
        rows = [i for i in range(m) if col[i] > tol]
        if not rows:
            raise LpFailure("objective is unbounded")
        ratios = [T[i, -1] / col[i] for i in rows]
        best = min(ratios)
        # Bland: among tied rows, leave with the smallest basis index
        leave = min((i for i, r in zip(rows, ratios) if r <= best + tol), key=lambda i: basis[i])
        T[leave] /= T[leave, entering]
        for i in range(m + 1):
            if i != leave and T[i, entering] != 0.0:
                T[i] -= T[i, entering] * T[leave]
        basis[leave] = entering
    else:
        raise LpFailure("simplex iteration limit reached")
    x = np.zeros(n + m)
    for i, j in enumerate(basis):
        x[j] = T[i, -1]
    duals = T[m, n:n + m].copy()
    return x[:n], duals, float(T[m, -1])


def solve_matrix_game(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Row player maximizes x^T M y. Returns (row mixture, column mixture, value)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or 0 in M.shape:
        raise LpFailure("payoff matrix must be a nonempty 2-d array")
    shift = 1.0 - M.min()
    Mp = M + shift
    y, u, obj = simplex_max(np.ones(M.shape[1]), Mp, np.ones(M.shape[0]))
    if obj <= 0:
        raise LpFailure("degenerate game value")
    v = 1.0 / obj
    col = np.clip(y * v, 0.0, None)
    row = np.clip(u * v, 0.0, None)
    col /= col.sum()
    row /= row.sum()
    return row, col, v - shift
