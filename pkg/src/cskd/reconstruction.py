"""Total-variation recovery of the object from its pattern projections.

Solves ``min_x sum_i ||D_i x||_p + mu/2 ||A x - b||^2`` with ``x >= 0`` by an
augmented-Lagrangian splitting in the style of TVAL3: gradient variables
``w_i ~ D_i x`` are updated by closed-form shrinkage, ``x`` by projected
Barzilai-Borwein gradient steps under a nonmonotone line search, and the
multipliers after each inner loop.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, SolverError

log = logging.getLogger(__name__)

NOISE_GAIN = 4.0


@dataclass(frozen=True)
class SolverParams:
    mu: float = 256.0
    beta: float = 32.0
    p: int = 2
    max_outer: int = 300
    max_inner: int = 20
    tol: float = 1e-4
    tol_inner: float = 1e-3
    # penalties start at value / continuation and grow by `continuation_rate` per outer step
    continuation: float = 64.0
    continuation_rate: float = 2.0
    # enforce A x = b through a multiplier as well as the penalty; turn off for noisy data
    fit_constraint: bool = True
    nonneg: bool = True

    def __post_init__(self):
        if not self.mu > 0:
            raise ContractError("mu must be positive")
        if not self.beta > 0:
            raise ContractError("beta must be positive")
        if self.p not in (1, 2):
            raise ContractError("p must be 1 or 2")
        if not self.tol > 0 or not self.tol_inner > 0:
            raise ContractError("tolerances must be positive")


@dataclass
class SolverResult:
    image: np.ndarray
    outer_iterations: int
    inner_iterations: int
    objective_initial: float
    objective_zero: float
    objective_final: float
    history: list = field(default_factory=list)


def gradient(x):
    """Forward differences with replicate boundary -> array of shape (2, h, w)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros((2,) + x.shape)
    g[0, :, :-1] = x[:, 1:] - x[:, :-1]
    g[1, :-1, :] = x[1:, :] - x[:-1, :]
    return g


def gradient_adjoint(g):
    """Exact adjoint of :func:`gradient` (the negative divergence)."""
    gh, gv = g[0], g[1]
    out = np.zeros(gh.shape)
    out[:, :-1] -= gh[:, :-1]
    out[:, 1:] += gh[:, :-1]
    out[:-1, :] -= gv[:-1, :]
    out[1:, :] += gv[:-1, :]
    return out


def divergence(g):
    return -gradient_adjoint(g)


def shrink(q, beta, p=2):
    """Minimiser of ``||z||_p + beta/2 ||z - q||^2`` per pixel; ``q`` has shape (2, ...)."""
    if p == 1:
        return np.sign(q) * np.maximum(np.abs(q) - 1.0 / beta, 0.0)
    norm = np.sqrt(q[0] ** 2 + q[1] ** 2)
    scale = np.maximum(norm - 1.0 / beta, 0.0) / np.where(norm > 0, norm, 1.0)
    return q * scale


def tv_norm(x, p=2):
    g = gradient(x)
    if p == 1:
        return float(np.abs(g).sum())
    return float(np.sqrt(g[0] ** 2 + g[1] ** 2).sum())


def tv_reconstruct(matrix, b, shape, params=SolverParams(), noise_std=None):
    """Recover an image of ``shape`` = (height, width) from measurements ``b``.

    ``matrix`` is a :class:`~cskd.sensing.MeasurementMatrix` or a dense array.
    The output is in the units implied by ``b`` (no display rescaling).
    """
    return tv_solve(matrix, b, shape, params, noise_std).image


def tv_solve(matrix, b, shape, params=SolverParams(), noise_std=None):
    """Full solver output; see :func:`tv_reconstruct`.

    ``noise_std`` is the expected per-measurement noise in the units of ``b``.
    When given, the fidelity weight is capped at ``NOISE_GAIN / std`` (in the
    solver's normalised units) so the fit stops short of the noise floor.
    """
    A = matrix.dense() if hasattr(matrix, "dense") else np.asarray(matrix, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = A.shape
    if b.shape != (m,):
        raise ContractError(f"expected {m} measurements, got {b.shape}")
    if shape[0] * shape[1] != n:
        raise ContractError(f"shape {shape} does not match {n} pattern columns")
    if not np.isfinite(b).all():
        raise ContractError("measurements contain non-finite values")

    # work in units where a typical pixel is O(1) and a typical singular value of A is 1
    row_mass = A.sum() / m
    x_scale = max(np.abs(b).mean() / row_mass, np.finfo(float).tiny) if row_mass > 0 else 1.0
    # Deflate the common-mode direction of 0/1 patterns: W = I - (1 - eps) 11^T / M is
    # invertible, so W A x = W b has the same solutions as A x = b, but the huge
    # singular value carried by the pattern mean no longer dominates the conditioning.
    eps = 1.0 / np.sqrt(m)
    Aw = A - (1.0 - eps) * A.mean(axis=0)
    bw = b - (1.0 - eps) * b.mean()
    a_scale = np.sqrt((Aw * Aw).sum() / min(m, n))
    An = Aw / a_scale
    bn = bw / (x_scale * a_scale)
    if noise_std is not None and noise_std > 0:
        params = replace(params, mu=min(params.mu, NOISE_GAIN * x_scale * a_scale / noise_std))
    p = params.p
    mu = params.mu / params.continuation
    beta = params.beta / params.continuation

    def project(v):
        return np.maximum(v, 0.0) if params.nonneg else v

    # matched-filter start, min-max rescaled then fitted in amplitude
    u = An.T @ bn
    lo, hi = u.min(), u.max()
    u = (u - lo) / (hi - lo) if hi > lo else np.ones(n)
    Au = An @ u
    gain = (Au @ bn) / (Au @ Au) if Au @ Au > 0 else 0.0
    u = project(u * gain).reshape(shape)

    def objective(v, Av):
        r = Av - bn
        return tv_norm(v, p) + 0.5 * params.mu * float(r @ r)

    sigma = np.zeros((2,) + tuple(shape))
    delta = np.zeros(m)
    Au = An @ u.ravel()
    obj_zero = 0.5 * params.mu * float(bn @ bn)
    obj_init = objective(u, Au)
    Du = gradient(u)
    w = shrink(Du - sigma / beta, beta, p)

    def lagrangian(v, Dv, Av):
        r = Av - bn
        e = Dv - w
        tv = np.abs(w).sum() if p == 1 else np.sqrt(w[0] ** 2 + w[1] ** 2).sum()
        return (tv - float((sigma * e).sum()) + 0.5 * beta * float((e * e).sum())
                - float(delta @ r) + 0.5 * mu * float(r @ r))

    def lag_grad(Dv, Av):
        gx = gradient_adjoint(beta * (Dv - w) - sigma)
        ga = An.T @ (mu * (Av - bn) - delta)
        return gx + ga.reshape(shape)

    history = []
    total_inner = 0
    outer = 0
    tau = 1.0
    for outer in range(1, params.max_outer + 1):
        u_outer = u
        # nonmonotone line-search reference (Zhang-Hager)
        f = lagrangian(u, Du, Au)
        C, Q, gamma = f, 1.0, 0.85
        g = lag_grad(Du, Au)
        for _ in range(params.max_inner):
            total_inner += 1
            # backtracking projected step
            step = tau
            for _ls in range(30):
                u_new = project(u - step * g)
                Au_new = An @ u_new.ravel()
                Du_new = gradient(u_new)
                f_new = lagrangian(u_new, Du_new, Au_new)
                d = u_new - u
                if f_new <= C - 1e-5 * float((d * d).sum()) / step:
                    break
                step *= 0.6
            w = shrink(Du_new - sigma / beta, beta, p)
            f_new = lagrangian(u_new, Du_new, Au_new)
            g_new = lag_grad(Du_new, Au_new)
            s = u_new - u
            yv = g_new - g
            sy = float((s * yv).sum())
            ss = float((s * s).sum())
            tau = ss / sy if sy > 0 else step * 2.0
            tau = min(max(tau, 1e-8), 1e8)
            rel = np.sqrt(ss) / max(np.linalg.norm(u), 1e-12)
            u, Du, Au, g = u_new, Du_new, Au_new, g_new
            Qp = Q
            Q = gamma * Q + 1.0
            C = (gamma * Qp * C + f_new) / Q
            if rel < params.tol_inner:
                break
        sigma = sigma - beta * (Du - w)
        if params.fit_constraint:
            delta = delta - mu * (Au - bn)
        mu = min(mu * params.continuation_rate, params.mu)
        beta = min(beta * params.continuation_rate, params.beta)
        obj = objective(u, Au)
        if not np.isfinite(obj):
            raise SolverError(f"objective became non-finite at outer iteration {outer}",
                              iteration=outer, history=history)
        change = np.linalg.norm(u - u_outer) / max(np.linalg.norm(u), 1e-12)
        history.append((outer, obj, change))
        if change < params.tol and mu == params.mu and beta == params.beta:
            break

    log.debug("tv_solve: %d outer / %d inner iterations, objective %.6g -> %.6g",
              outer, total_inner, obj_init, history[-1][1] if history else obj_init)
    return SolverResult(
        image=u * x_scale,
        outer_iterations=outer,
        inner_iterations=total_inner,
        objective_initial=obj_init,
        objective_zero=obj_zero,
        objective_final=history[-1][1] if history else obj_init,
        history=history,
    )
