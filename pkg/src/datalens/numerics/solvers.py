"""Inverse-Hessian-vector product solvers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from datalens.errors import ConfigError, DimensionError, DivergenceError, SolverError
from datalens.numerics.params import LinearOperator, ParamVector, as_array

log = logging.getLogger(__name__)

Sampler = Callable[[np.random.Generator], LinearOperator]


@dataclass
class SolveResult:
    """Outcome of an iterative solve. ``x`` has the same type as the rhs."""

    x: Union[np.ndarray, ParamVector]
    iterations: int
    residual_norm: float
    rhs_norm: float
    converged: bool
    history: list[float] = field(default_factory=list)

    @property
    def relative_residual(self) -> float:
        return self.residual_norm / self.rhs_norm if self.rhs_norm > 0 else 0.0

    def meta(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "relative_residual": self.relative_residual,
            "converged": self.converged,
        }


def _wrap(rhs, x: np.ndarray):
    return rhs.with_values(x) if isinstance(rhs, ParamVector) else x


def cg_solve(op: LinearOperator, rhs, damping: float = 0.0, tol: float = 1e-8,
             max_iter: int = 1000) -> SolveResult:
    """Solve ``(op + damping*I) x = rhs`` for a symmetric PSD ``op``.

    The Krylov iteration is the conjugate-residual variant of CG: it needs one
    operator application per step like CG, but minimises the residual norm
    over the Krylov space, so the residual history never increases. When the
    recursively updated residual claims convergence the true residual is
    recomputed and the iteration restarted from the current iterate if the
    two disagree.
    """
    if damping < 0:
        raise ConfigError("damping must be non-negative")
    b = as_array(rhs)
    if b.shape != (op.dimension,):
        raise DimensionError(f"rhs has shape {b.shape}, operator dimension is {op.dimension}")
    b_norm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if b_norm == 0.0:
        return SolveResult(_wrap(rhs, x), 0, 0.0, 0.0, True, [0.0])

    damped = op.damped(damping)
    it = 0

    def A(v):
        out = damped(v)
        if not np.all(np.isfinite(out)):
            raise SolverError(f"operator returned non-finite values at iteration {it}",
                              iteration=it, residual=r_norm)
        return out

    target = tol * b_norm
    history = [b_norm]
    r = b.copy()
    r_norm = b_norm
    restarts = 0
    while True:
        Ar = A(r)
        p, Ap = r.copy(), Ar.copy()
        rAr = float(r @ Ar)
        stalled = False
        while it < max_iter and r_norm > target:
            if rAr <= 0.0:
                raise SolverError(
                    "operator is not positive definite on the Krylov space; "
                    "increase the damping", iteration=it, residual=r_norm)
            alpha = rAr / float(Ap @ Ap)
            x_new = x + alpha * p
            r_new = r - alpha * Ap
            it += 1
            if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(r_new))):
                raise SolverError(f"non-finite iterate at iteration {it}",
                                  iteration=it, residual=r_norm)
            new_norm = float(np.linalg.norm(r_new))
            if new_norm > r_norm:
                stalled = True  # rounding floor reached
                break
            x, r, r_norm = x_new, r_new, new_norm
            history.append(r_norm)
            Ar = A(r)
            rAr_new = float(r @ Ar)
            beta = rAr_new / rAr
            rAr = rAr_new
            p = r + beta * p
            Ap = Ar + beta * Ap
        true_r = b - A(x)
        true_norm = float(np.linalg.norm(true_r))
        drifted = true_norm > max(target, 1.5 * r_norm)
        if true_norm <= target or it >= max_iter or restarts >= 5 or (stalled and not drifted):
            r_norm = true_norm
            break
        # recursive residual drifted away from the true one: restart from x
        restarts += 1
        r, r_norm = true_r, true_norm

    converged = r_norm <= target
    if not converged:
        log.warning("cg_solve stopped after %d iterations, relative residual %.3e",
                    it, r_norm / b_norm)
    return SolveResult(_wrap(rhs, x), it, r_norm, b_norm, converged, history)


def estimate_spectral_radius(op: LinearOperator, iters: int = 50, seed: int = 0) -> float:
    """Largest eigenvalue magnitude of a symmetric operator by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.dimension)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op(v)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        lam = norm
        v = w / norm
    return lam


def extreme_eigenvalues(op: LinearOperator, steps: int = 60, seed: int = 0) -> tuple[float, float]:
    """Smallest and largest Ritz values of a symmetric operator (Lanczos, full reorthogonalisation).

    Exact when ``steps >= op.dimension``; otherwise the Ritz values lie inside
    the spectrum and approach its ends quickly.
    """
    n = op.dimension
    m = min(steps, n)
    rng = np.random.default_rng(seed)
    Q = np.zeros((m, n))
    q = rng.standard_normal(n)
    Q[0] = q / np.linalg.norm(q)
    alphas, betas = [], []
    for j in range(m):
        w = op(Q[j])
        a = float(Q[j] @ w)
        w = w - Q[:j + 1].T @ (Q[:j + 1] @ w)
        w = w - Q[:j + 1].T @ (Q[:j + 1] @ w)
        alphas.append(a)
        b = float(np.linalg.norm(w))
        if j + 1 == m or b <= 1e-12 * max(abs(a), 1.0):
            break
        betas.append(b)
        Q[j + 1] = w / b
    T = np.diag(alphas) + np.diag(betas[:len(alphas) - 1], 1) + np.diag(betas[:len(alphas) - 1], -1)
    ritz = np.linalg.eigvalsh(T)
    return float(ritz[0]), float(ritz[-1])


def ensure_nonsingular(op: LinearOperator, damping: float, rtol: float = 1e-8,
                       steps: int = 60) -> None:
    """Raise SolverError when ``op + damping*I`` is numerically singular or indefinite."""
    lo, hi = extreme_eigenvalues(op, steps)
    lo, hi = lo + damping, hi + damping
    if lo <= rtol * max(abs(hi), 1e-300):
        raise SolverError(f"Hessian is singular or indefinite (eigenvalue estimate {lo:.3e} "
                          f"against {hi:.3e}); increase the damping")


def lissa_solve(sampler: Union[Sampler, LinearOperator], rhs, damping: float = 0.01,
                scale: float = 10.0, depth: int = 1000, repeats: int = 1,
                seed: int = 0) -> SolveResult:
    """Stochastic Neumann-series estimate of ``(H + damping*I)^-1 rhs``.

    Each repeat runs ``h <- rhs + (1 - damping/scale) h - H_batch h / scale``
    for ``depth`` steps with a freshly sampled minibatch Hessian, and the
    estimates ``h / scale`` are averaged. ``scale`` must exceed the largest
    eigenvalue of ``H + damping*I``.

    A convergent recursion never exceeds ``|rhs| * min(scale/damping, depth+1)``
    in norm; growing ten times past that bound aborts with DivergenceError.
    """
    if depth < 1 or repeats < 1:
        raise ConfigError("depth and repeats must be >= 1")
    if scale <= 0:
        raise ConfigError("scale must be positive")
    v = as_array(rhs)
    v_norm = float(np.linalg.norm(v))
    if v_norm == 0.0:
        return SolveResult(_wrap(rhs, np.zeros_like(v)), 0, 0.0, 0.0, True, [0.0])
    if isinstance(sampler, LinearOperator):
        fixed = sampler
        sampler = lambda rng: fixed  # noqa: E731
    reach = (scale / damping) if damping > 0 else float(depth + 1)
    limit = 10.0 * v_norm * min(reach, depth + 1)
    keep = 1.0 - damping / scale

    children = np.random.SeedSequence(seed).spawn(repeats)
    total = np.zeros_like(v)
    for rep, child in enumerate(children):
        rng = np.random.default_rng(child)
        h = v.copy()
        for step in range(depth):
            H = sampler(rng)
            h = v + keep * h - H(h) / scale
            norm = float(np.linalg.norm(h))
            if not np.isfinite(norm) or norm > limit:
                raise DivergenceError(
                    f"LiSSA recursion diverged at repeat {rep}, step {step + 1} "
                    f"(|h|={norm:.3e}); increase scale or damping",
                    iteration=step + 1, residual=norm)
        total += h / scale
    x = total / repeats
    return SolveResult(_wrap(rhs, x), depth * repeats, float("nan"), v_norm, True, [])
