"""Sparse saddle-point solvers for ``[[K, -D^T], [-D, 0]] [u; p] = [f; g]``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverBreakdownError, ToleranceNotReachedError


@dataclass
class SolveInfo:
    method: str
    iterations: int
    residual: float
    n_unknowns: int


def saddle_matrix(K, D):
    K = sp.csr_matrix(K)
    D = sp.csr_matrix(D)
    return sp.bmat([[K, -D.T], [-D, None]], format="csr")


def _drop_index(n, pin):
    keep = np.ones(n, dtype=bool)
    if pin is not None:
        keep[pin] = False
    return keep


def solve_saddle(
    K,
    D,
    f,
    g,
    pin: int | None = 0,
    method: str = "direct",
    tol: float = 1e-10,
    maxiter: int = 5000,
    pressure_weights=None,
) -> tuple[np.ndarray, np.ndarray, SolveInfo]:
    """Solve the symmetric saddle system, fixing pressure ``pin`` to zero.

    ``pressure_weights`` is a positive diagonal approximating the pressure
    Schur complement (cell volumes for Stokes); it only enters the MINRES
    preconditioner.
    """
    n_u, n_p = K.shape[0], D.shape[0]
    keep = _drop_index(n_p, pin)
    Dk = sp.csr_matrix(D)[keep]
    M = saddle_matrix(K, Dk)
    rhs = np.concatenate([np.asarray(f, dtype=float), np.asarray(g, dtype=float)[keep]])
    if not np.all(np.isfinite(M.data)) or not np.all(np.isfinite(rhs)):
        raise SolverBreakdownError("non-finite entries in the saddle system")
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n_u), np.zeros(n_p), SolveInfo(method, 0, 0.0, n_u + n_p)

    if method == "direct":
        try:
            lu = spla.splu(M.tocsc())
        except RuntimeError as exc:
            raise SolverBreakdownError(f"sparse LU failed: {exc}", {"n": M.shape[0]}) from exc
        x = lu.solve(rhs)
        iters = 1
    elif method == "minres":
        x, iters = _minres(K, Dk, M, rhs, tol, maxiter, None if pressure_weights is None else np.asarray(pressure_weights)[keep])
    else:
        raise ValueError(f"unknown saddle method {method!r}")

    if not np.all(np.isfinite(x)):
        raise SolverBreakdownError("saddle solve produced non-finite values", {"method": method})
    res = np.linalg.norm(M @ x - rhs) / bnorm
    limit = 1e-8 if method == "direct" else 10 * tol
    if res > limit:
        raise ToleranceNotReachedError(f"{method} saddle solve did not converge", res)
    u = x[:n_u]
    p = np.zeros(n_p)
    p[keep] = x[n_u:]
    return u, p, SolveInfo(method, iters, res, n_u + n_p)


def _minres(K, Dk, M, rhs, tol, maxiter, weights):
    import pyamg

    n_u = K.shape[0]
    ml = pyamg.smoothed_aggregation_solver(sp.csr_matrix(K), symmetry="symmetric")
    amg = ml.aspreconditioner(cycle="V")
    if weights is None:
        weights = np.ones(Dk.shape[0])
    inv_w = 1.0 / weights

    def apply(r):
        out = np.empty_like(r)
        out[:n_u] = amg.matvec(r[:n_u])
        out[n_u:] = inv_w * r[n_u:]
        return out

    prec = spla.LinearOperator(M.shape, matvec=apply, dtype=float)
    count = [0]

    def cb(_xk):
        count[0] += 1

    # MINRES stops on the preconditioned residual; restart from the current
    # iterate until the true relative residual meets the tolerance
    bnorm = np.linalg.norm(rhs)
    x = np.zeros_like(rhs)
    res = 1.0
    for _ in range(8):
        r = rhs - M @ x
        dx, info = spla.minres(M, r, M=prec, rtol=tol, maxiter=maxiter, callback=cb)
        if info < 0:
            raise SolverBreakdownError("MINRES breakdown", {"info": info, "iterations": count[0]})
        x = x + dx
        res = np.linalg.norm(M @ x - rhs) / bnorm
        if res <= tol or count[0] >= maxiter:
            break
    if res > 10 * tol:
        raise ToleranceNotReachedError(f"MINRES stopped after {count[0]} iterations", res)
    return x, count[0]
