"""Derivative-free simplex search and Adam, as used by parameter fitting and
value-network training."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import NumericError


@dataclass(frozen=True)
class NelderMeadConfig:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    max_iters: int = 200
    tol: float = 1e-6
    initial_step: float | tuple[float, ...] = 0.1

    def __post_init__(self):
        if not (self.reflection > 0 and self.expansion > 1 and 0 < self.contraction < 1
                and 0 < self.shrink < 1):
            raise ValueError("invalid simplex coefficients")
        if self.max_iters < 0 or self.tol <= 0:
            raise ValueError("max_iters must be >= 0 and tol > 0")


@dataclass(frozen=True)
class NelderMeadResult:
    x: np.ndarray
    fun: float
    n_iter: int
    n_evals: int
    converged: bool


def nelder_mead(f: Callable[[np.ndarray], float], x0, config: NelderMeadConfig | None = None) -> NelderMeadResult:
    """Minimize ``f`` with the Nelder-Mead simplex method.

    Stops when the simplex diameter (max vertex distance to the best vertex)
    falls below ``tol`` or after ``max_iters`` iterations. A simplex that
    starts on a plateau (all vertices equal) is returned unchanged with
    ``converged=False``, since no descent direction can be inferred.
    """
    cfg = config or NelderMeadConfig()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = x0.size
    steps = np.broadcast_to(np.asarray(cfg.initial_step, dtype=float), (n,))
    n_evals = 0

    def call(x):
        nonlocal n_evals
        n_evals += 1
        v = float(f(x))
        return v if not np.isnan(v) else np.inf

    f0 = call(x0)
    if not np.isfinite(f0):
        raise NumericError(f"objective is not finite at x0 (got {f0})")
    simplex = [x0.copy()]
    values = [f0]
    for i in range(n):
        v = x0.copy()
        v[i] += steps[i] if steps[i] != 0 else 0.05
        simplex.append(v)
        values.append(call(v))
    simplex = np.array(simplex)
    values = np.array(values)
    if np.all(values == f0):
        return NelderMeadResult(x0, f0, 0, n_evals, False)

    a, g, c, s = cfg.reflection, cfg.expansion, cfg.contraction, cfg.shrink
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if np.max(np.linalg.norm(simplex[1:] - simplex[0], axis=1)) < cfg.tol:
            converged = True
            it -= 1
            break
        centroid = simplex[:-1].mean(axis=0)
        xr = centroid + a * (centroid - simplex[-1])
        fr = call(xr)
        if fr < values[0]:
            xe = centroid + g * (xr - centroid)
            fe = call(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            if fr < values[-1]:
                xc = centroid + c * (xr - centroid)
                fc = call(xc)
                accept = fc <= fr
            else:
                xc = centroid + c * (simplex[-1] - centroid)
                fc = call(xc)
                accept = fc < values[-1]
            if accept:
                simplex[-1], values[-1] = xc, fc
            else:
                simplex[1:] = simplex[0] + s * (simplex[1:] - simplex[0])
                values[1:] = [call(v) for v in simplex[1:]]
    best = int(np.argmin(values))
    return NelderMeadResult(simplex[best].copy(), float(values[best]), it, n_evals, converged)


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.05
    beta_m: float = 0.9
    beta_v: float = 0.999
    eps: float = 1e-8
    max_iters: int = 2000
    tol: float = 1e-9

    def __post_init__(self):
        if self.lr < 0 or not (0 <= self.beta_m < 1) or not (0 <= self.beta_v < 1):
            raise ValueError("invalid Adam configuration")


@dataclass
class AdamState:
    """Moment estimates for in-place Adam updates of a list of arrays."""

    config: AdamConfig
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    def update(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        cfg = self.config
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        bm = 1.0 - cfg.beta_m ** self.t
        bv = 1.0 - cfg.beta_v ** self.t
        for p, gr, m, v in zip(params, grads, self.m, self.v):
            if not np.all(np.isfinite(gr)):
                raise NumericError("non-finite gradient")
            m *= cfg.beta_m
            m += (1 - cfg.beta_m) * gr
            v *= cfg.beta_v
            v += (1 - cfg.beta_v) * gr * gr
            p -= cfg.lr * (m / bm) / (np.sqrt(v / bv) + cfg.eps)


@dataclass(frozen=True)
class AdamResult:
    x: np.ndarray
    fun: float
    n_iter: int
    converged: bool
    history: tuple[float, ...]


def adam(f_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]], x0,
         config: AdamConfig | None = None) -> AdamResult:
    """Minimize with Adam given ``f_and_grad(x) -> (f, grad)``.

    Stops once the gradient norm drops below ``tol`` or after ``max_iters``
    updates; returns the final iterate.
    """
    cfg = config or AdamConfig()
    x = np.array(np.atleast_1d(x0), dtype=float)
    state = AdamState(cfg)
    history = []
    converged = False
    it = 0
    fx, gx = f_and_grad(x)
    for it in range(cfg.max_iters):
        gx = np.atleast_1d(np.asarray(gx, dtype=float))
        if not np.all(np.isfinite(gx)):
            raise NumericError(f"non-finite gradient at iteration {it}")
        history.append(float(fx))
        if np.linalg.norm(gx) < cfg.tol:
            converged = True
            break
        state.update([x], [gx])
        fx, gx = f_and_grad(x)
    else:
        it = cfg.max_iters
        history.append(float(fx))
    return AdamResult(x, float(fx), it, converged, tuple(history))
