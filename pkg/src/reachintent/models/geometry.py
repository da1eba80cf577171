"""Line and parabola fits to wrist windows, and point distances to them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import ReachInferenceError


class DegenerateWindowError(ReachInferenceError):
    """The window cannot support the requested fit."""


@dataclass(frozen=True)
class Line3:
    point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if not np.isfinite(n) or n == 0:
            raise ValueError("line direction must be non-zero")
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "direction", d / n)


@dataclass(frozen=True)
class Parabola3:
    """``c(u) = coeffs[:, 0] u**2 + coeffs[:, 1] u + coeffs[:, 2]``.

    ``u`` is the frame offset within the fitted window divided by
    ``param_span``, so the window runs from u = 0 to u = 1.
    """

    coeffs: np.ndarray
    param_origin: float = 0.0
    param_span: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (3, 3) or not np.all(np.isfinite(c)):
            raise ValueError("coeffs must be a finite 3x3 array")
        if not self.param_span > 0:
            raise ValueError("param_span must be > 0")
        object.__setattr__(self, "coeffs", c)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        a, b, c = self.coeffs[:, 0], self.coeffs[:, 1], self.coeffs[:, 2]
        return np.multiply.outer(u * u, a) + np.multiply.outer(u, b) + c


def _window(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("expected an (n, 3) array of points")
    return p


def is_stationary(points, tol: float = 1e-12) -> bool:
    p = _window(points)
    return bool(np.max(np.linalg.norm(p - p.mean(axis=0), axis=1)) <= tol)


def fit_line(points) -> Line3:
    """Orthogonal-regression line: centroid plus principal axis.

    The direction is oriented along the motion (first to last point).
    """
    p = _window(points)
    if len(p) < 2:
        raise DegenerateWindowError("a line fit needs at least 2 points")
    if is_stationary(p):
        raise DegenerateWindowError("all points identical")
    centroid = p.mean(axis=0)
    _, _, vt = np.linalg.svd(p - centroid, full_matrices=False)
    d = vt[0]
    if np.dot(d, p[-1] - p[0]) < 0:
        d = -d
    return Line3(centroid, d)


def line_residual(line: Line3, points) -> float:
    """Sum of squared perpendicular distances."""
    p = _window(points) - line.point
    perp = p - np.outer(p @ line.direction, line.direction)
    return float(np.sum(perp * perp))


def point_line_distance(line: Line3, p, ray_from=None) -> float:
    """Distance from ``p`` to the infinite line.

    With ``ray_from`` (a point on or near the line) the line is cut to the
    forward ray starting at that point's projection.
    """
    v = np.asarray(p, dtype=float) - line.point
    t = float(v @ line.direction)
    if ray_from is not None:
        t0 = float((np.asarray(ray_from, dtype=float) - line.point) @ line.direction)
        t = max(t, t0)
    return float(np.linalg.norm(v - t * line.direction))


def fit_parabola(points, param_origin: float = 0.0) -> Parabola3:
    """Per-coordinate quadratic least squares against the window parameter
    ``u = i / (n - 1)``."""
    p = _window(points)
    n = len(p)
    if n < 3:
        raise DegenerateWindowError("a parabola fit needs at least 3 points")
    u = np.arange(n) / (n - 1)
    design = np.column_stack([u * u, u, np.ones(n)])
    coef, _, rank, _ = np.linalg.lstsq(design, p, rcond=None)
    if rank < 3:
        raise DegenerateWindowError("rank-deficient parabola design")
    return Parabola3(coef.T, param_origin, float(n - 1))


def parabola_residual(curve: Parabola3, points) -> float:
    """Sum of squared coordinate errors at the fitted parameters."""
    p = _window(points)
    u = np.arange(len(p)) / (len(p) - 1)
    r = curve(u) - p
    return float(np.sum(r * r))


def _polish(coefs: np.ndarray, roots: np.ndarray) -> np.ndarray:
    # two Newton steps on the cubic tighten np.roots' eigenvalue estimates
    d = np.polyder(coefs)
    for _ in range(2):
        fp = np.polyval(d, roots)
        step = np.divide(np.polyval(coefs, roots), fp, out=np.zeros_like(roots), where=fp != 0)
        roots = roots - step
    return roots


def closest_parameter(curve: Parabola3, p, u_min: float | None = None) -> float:
    """Parameter of the closest curve point to ``p`` (optionally with u >= u_min).

    Squared distance is quartic in u; its derivative is the cubic
    ``2|a|^2 u^3 + 3 a.b u^2 + (|b|^2 + 2 a.(c-p)) u + b.(c-p)``, whose real
    roots are the candidates.
    """
    a, b, c = curve.coeffs[:, 0], curve.coeffs[:, 1], curve.coeffs[:, 2]
    w = c - np.asarray(p, dtype=float)
    cubic = np.array([2 * a @ a, 3 * a @ b, b @ b + 2 * a @ w, b @ w])
    # leading terms negligible against the largest only add roots at |u| ~ 1e12
    nz = np.flatnonzero(np.abs(cubic) > 1e-12 * np.abs(cubic).max()) if cubic.any() else []
    if len(nz) == 0 or nz[0] == 3:
        cand = np.array([0.0])
    else:
        trimmed = cubic[nz[0]:]
        cand = _polish(cubic, np.roots(trimmed).real)
        cand = cand[np.isfinite(cand)] if np.isfinite(cand).any() else np.array([0.0])
    if u_min is not None:
        cand = np.append(np.maximum(cand, u_min), u_min)
    pts = curve(cand)
    dist = np.linalg.norm(pts - np.asarray(p, dtype=float), axis=1)
    return float(cand[int(np.argmin(dist))])


def point_curve_distance(curve: Parabola3, p, ray: bool = False) -> float:
    """Shortest distance from ``p`` to the curve over all real u.

    ``ray`` restricts to the forward part u >= 1 (beyond the latest frame).
    """
    u = closest_parameter(curve, p, 1.0 if ray else None)
    return float(np.linalg.norm(curve(u) - np.asarray(p, dtype=float)))
