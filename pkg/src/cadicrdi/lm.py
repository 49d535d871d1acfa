"""Levenberg-Marquardt for small dense nonlinear least-squares problems.

Minimises 0.5 * ||e(x)||^2 with a central-difference Jacobian and
Marquardt's diagonal scaling. The damping update follows Nielsen's rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

COND_LIMIT = 1e12


def fd_steps(x, typical) -> np.ndarray:
    # cube root of machine epsilon suits central differences
    return 6e-6 * np.maximum(np.abs(x), typical)


def jacobian(fun: Callable, x: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at ``x``; one column per parameter."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j, h in enumerate(steps):
        up = x.copy()
        down = x.copy()
        up[j] += h
        down[j] -= h
        cols.append((fun(up) - fun(down)) / (up[j] - down[j]))
    return np.column_stack(cols) if cols else np.zeros((len(fun(x)), 0))


@dataclass
class LMResult:
    x: np.ndarray
    residual: np.ndarray
    jac: np.ndarray
    cost: float
    n_iter: int
    status: str
    flags: list[str] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status in ("gtol", "xtol", "ftol")

    @property
    def sse(self) -> float:
        return 2.0 * self.cost


def levenberg_marquardt(
    fun: Callable,
    x0,
    typical=None,
    max_iter: int = 500,
    gtol: float = 1e-10,
    xtol: float = 1e-12,
    ftol: float = 1e-15,
    tau: float = 1e-3,
) -> LMResult:
    """Damped Gauss-Newton from ``x0``.

    ``fun`` returns the residual vector; non-finite residuals reject a
    step. ``typical`` gives per-parameter magnitudes for the difference
    steps. Status is one of gtol, xtol, ftol, max_iter or nonfinite_start.
    """
    x = np.array(x0, dtype=float)
    typical = np.ones_like(x) if typical is None else np.asarray(typical, dtype=float)
    flags: list[str] = []
    e = fun(x)
    if not np.all(np.isfinite(e)):
        return LMResult(x, e, np.full((len(e), len(x)), np.nan), np.inf, 0, "nonfinite_start", flags)
    cost = 0.5 * float(e @ e)
    J = jacobian(fun, x, fd_steps(x, typical))
    A = J.T @ J
    g = J.T @ e
    if np.max(np.abs(g), initial=0.0) <= gtol:
        return LMResult(x, e, J, cost, 0, "gtol", flags)
    mu = tau * max(float(np.max(np.diag(A), initial=0.0)), 1e-300)
    nu = 2.0
    status = "max_iter"
    it = 0
    while it < max_iter:
        it += 1
        if not np.isfinite(mu) or mu > 1e300:
            # damping exhausted: no step of any length reduces the cost
            status = "xtol"
            break
        D = np.maximum(np.diag(A), 1e-12 * max(float(np.max(np.diag(A), initial=0.0)), 1e-300))
        M = A + mu * np.diag(D)
        try:
            if np.linalg.cond(M) > COND_LIMIT:
                raise np.linalg.LinAlgError("ill-conditioned")
            h = np.linalg.solve(M, -g)
        except np.linalg.LinAlgError:
            if "singular_jacobian" not in flags:
                flags.append("singular_jacobian")
            mu *= 10.0
            continue
        if np.linalg.norm(h) <= xtol * (np.linalg.norm(x) + xtol):
            status = "xtol"
            break
        x_new = x + h
        e_new = fun(x_new)
        if not np.all(np.isfinite(e_new)):
            mu *= nu
            nu *= 2.0
            continue
        cost_new = 0.5 * float(e_new @ e_new)
        predicted = 0.5 * float(h @ (mu * D * h - g))
        rho = (cost - cost_new) / predicted if predicted > 0 else -1.0
        if rho > 0:
            small_gain = cost - cost_new <= ftol * cost
            x, e, cost = x_new, e_new, cost_new
            J = jacobian(fun, x, fd_steps(x, typical))
            A = J.T @ J
            g = J.T @ e
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
            if np.max(np.abs(g)) <= gtol:
                status = "gtol"
                break
            if small_gain:
                status = "ftol"
                break
        else:
            mu *= nu
            nu *= 2.0
    return LMResult(x, e, J, cost, it, status, flags)
