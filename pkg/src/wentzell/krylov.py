"""Conjugate gradients in a user-supplied inner product."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConvergenceError


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float  # final relative residual (recursive estimate)
    history: list = field(default_factory=list)
    converged: bool = True


def cg(apply: Callable[[np.ndarray], np.ndarray], b: np.ndarray, inner: Callable, *,
       tol: float = 1e-8, maxiter: int = 500, x0: np.ndarray | None = None,
       strict: bool = True) -> CGResult:
    """Solve ``apply(x) = b`` for an operator self-adjoint and positive in ``inner``.

    Stops when ``|r| <= tol |b|`` (norms induced by ``inner``). Raises
    :class:`ConvergenceError` with the residual history otherwise, unless
    ``strict`` is false, in which case the last iterate is returned with
    ``converged=False``.
    """
    bnorm = np.sqrt(inner(b, b))
    if bnorm == 0:
        return CGResult(np.zeros_like(b), 0, 0.0, [0.0])
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply(x) if x0 is not None else b.copy()
    p = r.copy()
    rr = inner(r, r)
    history = [np.sqrt(rr) / bnorm]
    for k in range(1, maxiter + 1):
        Ap = apply(p)
        pAp = inner(p, Ap)
        if pAp <= 0:
            raise ConvergenceError(
                "operator is not positive definite along a search direction",
                {"iteration": k, "pAp": float(pAp), "history": history},
            )
        a = rr / pAp
        x += a * p
        r -= a * Ap
        rr_new = inner(r, r)
        history.append(np.sqrt(rr_new) / bnorm)
        if history[-1] <= tol:
            return CGResult(x, k, history[-1], history)
        p = r + (rr_new / rr) * p
        rr = rr_new
    if not strict:
        return CGResult(x, maxiter, history[-1], history, converged=False)
    raise ConvergenceError(
        f"CG did not reach tol={tol} in {maxiter} iterations (residual {history[-1]:.3e})",
        {"iterations": maxiter, "history": history},
    )
