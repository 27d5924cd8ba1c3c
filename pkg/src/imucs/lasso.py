"""Cyclic coordinate descent for min_x ||Ax - y||_2^2 + lambda ||x||_1.

The solver works in Gram form: with G = A^T A and c = A^T (y - A x), the
exact one-dimensional minimizer for coordinate j is a soft-threshold of
rho_j = c_j + G_jj x_j at lambda/2. Coordinates are visited in order
0..n-1 every sweep. Updates to c are deferred within blocks of consecutive
coordinates and flushed with one matrix product, which lets a batch of
frames share the BLAS work while each frame keeps its own iterate sequence
and stopping rule.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numba
import numpy as np

BLOCK = 24
CHUNK = 256


def lp_norm(x, p: float) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    x = np.abs(np.asarray(x, dtype=np.float64))
    if p == 1:
        return float(x.sum())
    return float(np.sum(x**p) ** (1.0 / p))


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def lasso_objective(A, x, y, lam) -> float:
    r = np.asarray(getattr(A, "entries", A)) @ x - y
    return float(r @ r + lam * np.abs(x).sum())


@dataclass
class LassoConfig:
    lam: float = 1e-5
    max_iter: int = 1000
    tol: float = 1e-6
    tau_report: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class LassoSolution:
    x_hat: np.ndarray
    iterations: int
    objective: float
    converged: bool
    l1_norm: float | None = None
    objective_trace: np.ndarray | None = None

    def to_json(self) -> str:
        return json.dumps({"x_hat": self.x_hat.tolist(), "iterations": self.iterations,
                           "objective": self.objective, "converged": self.converged})


@numba.njit(cache=True)
def _cd_kernel(G, GB, C, lam, max_iter, tol, X, iters, conv, A, Y, trace):
    """G: (n, n) Gram matrix. GB: (nblocks, n, BLOCK) column blocks of G.
    C: (n, B) gradient state A^T(y - A x), updated in place. X: (n, B).
    A, Y and trace are only read when trace has length > 0 (B must be 1)."""
    n, B = C.shape
    nblocks, _, s = GB.shape
    half = 0.5 * lam
    active = np.ones(B, dtype=np.bool_)
    n_active = B
    D = np.zeros((s, B))
    maxc = np.zeros(B)
    record = trace.shape[0] > 0
    if record:
        trace[0] = _objective(A, X[:, 0], Y[0], lam)
    for it in range(max_iter):
        maxc[:] = 0.0
        for b in range(nblocks):
            D[:, :] = 0.0
            for t in range(s):
                j = b * s + t
                if j >= n:
                    break
                gjj = G[j, j]
                if gjj == 0.0:
                    continue
                for f in range(B):
                    if not active[f]:
                        continue
                    c = C[j, f]
                    for u in range(t):
                        c -= G[j, b * s + u] * D[u, f]
                    old = X[j, f]
                    rho = c + gjj * old
                    if rho > half:
                        new = (rho - half) / gjj
                    elif rho < -half:
                        new = (rho + half) / gjj
                    else:
                        new = 0.0
                    delta = new - old
                    if delta != 0.0:
                        X[j, f] = new
                        D[t, f] = delta
                        if abs(delta) > maxc[f]:
                            maxc[f] = abs(delta)
            C -= np.dot(GB[b], D)
        if record:
            trace[it + 1] = _objective(A, X[:, 0], Y[0], lam)
        for f in range(B):
            if active[f]:
                iters[f] = it + 1
                if maxc[f] <= tol:
                    active[f] = False
                    conv[f] = True
                    n_active -= 1
        if n_active == 0:
            break


@numba.njit(cache=True)
def _objective(A, x, y, lam):
    m, n = A.shape
    s = 0.0
    for i in range(m):
        r = -y[i]
        for j in range(n):
            r += A[i, j] * x[j]
        s += r * r
    l1 = 0.0
    for j in range(n):
        l1 += abs(x[j])
    return s + lam * l1


class _Prepared:
    __slots__ = ("entries", "G", "GB")

    def __init__(self, entries):
        n = entries.shape[1]
        self.entries = np.ascontiguousarray(entries, dtype=np.float64)
        self.G = np.ascontiguousarray(self.entries.T @ self.entries)
        nblocks = -(-n // BLOCK)
        GB = np.zeros((nblocks, n, BLOCK))
        for b in range(nblocks):
            cols = self.G[:, b * BLOCK:(b + 1) * BLOCK]
            GB[b, :, :cols.shape[1]] = cols
        self.GB = GB


def _prepare(A, Y):
    entries = np.asarray(getattr(A, "entries", A), dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if not (np.all(np.isfinite(entries)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite input to lasso solver")
    if Y.shape[-1] != entries.shape[0]:
        raise ValueError(f"measurement length {Y.shape[-1]} != {entries.shape[0]} rows")
    return _Prepared(entries), Y


def _run(prep: _Prepared, Y2, config, trace_buf):
    B = Y2.shape[0]
    n = prep.G.shape[0]
    C = np.ascontiguousarray((Y2 @ prep.entries).T)
    X = np.zeros((n, B))
    iters = np.zeros(B, dtype=np.int64)
    conv = np.zeros(B, dtype=np.bool_)
    _cd_kernel(prep.G, prep.GB, C, float(config.lam), int(config.max_iter), float(config.tol),
               X, iters, conv, prep.entries, np.ascontiguousarray(Y2), trace_buf)
    return X.T.copy(), iters, conv


def solve(A, y_received, config: LassoConfig | None = None, trace: bool = False) -> LassoSolution:
    """Solve one frame from x = 0. Zero columns of A stay at 0.

    With ``trace`` the objective after every sweep is recorded (entry 0 is
    the starting objective).
    """
    config = config or LassoConfig()
    prep, y = _prepare(A, y_received)
    if y.ndim != 1:
        raise ValueError("solve takes a single measurement vector; use solve_batch")
    buf = np.zeros(config.max_iter + 1) if trace else np.empty(0)
    X, iters, conv = _run(prep, y[None, :], config, buf)
    x = X[0]
    it = int(iters[0])
    return LassoSolution(x_hat=x, iterations=it, objective=lasso_objective(prep.entries, x, y, config.lam),
                         converged=bool(conv[0]),
                         l1_norm=float(np.abs(x).sum()) if config.tau_report else None,
                         objective_trace=buf[: it + 1].copy() if trace else None)


def solve_batch(A, Y, config: LassoConfig | None = None, mode: str = "blocked"):
    """Solve every row of ``Y`` independently.

    ``mode="blocked"`` advances all frames together through shared matrix
    products; ``mode="sequential"`` solves one frame after another.
    Returns (X_hat, iterations, converged).
    """
    config = config or LassoConfig()
    prep, Y = _prepare(A, np.atleast_2d(Y))
    empty = np.empty(0)
    if mode == "blocked":
        out = [_run(prep, Y[i:i + CHUNK], config, empty) for i in range(0, Y.shape[0], CHUNK)]
    elif mode == "sequential":
        out = [_run(prep, Y[i:i + 1], config, empty) for i in range(Y.shape[0])]
    else:
        raise ValueError(f"unknown batch mode {mode!r}")
    return (np.vstack([o[0] for o in out]), np.concatenate([o[1] for o in out]),
            np.concatenate([o[2] for o in out]))
