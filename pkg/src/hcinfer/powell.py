"""Powell's conjugate-direction minimizer with a Brent line search.

Derivative-free and box-aware: every line search is confined to the segment
of the line that stays inside the bounds, so no probe ever leaves the box.
A line search only moves the point when it finds a strictly lower value,
which keeps the returned value at or below f(start).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

GOLDEN = 0.5 * (3.0 - math.sqrt(5.0))
SQRT_EPS = math.sqrt(np.finfo(float).eps)


class PowellParamError(ValueError):
    pass


@dataclass
class PowellConfig:
    ftol: float = 1e-3
    xtol: float = 1e-2
    max_iterations: int = 50
    bounds: Sequence[tuple[float, float]] | None = ((0.0, 1.0), (0.0, 1.0))

    def __post_init__(self):
        problems = []
        if not self.ftol > 0:
            problems.append(f"ftol must be positive, got {self.ftol}")
        if not self.xtol > 0:
            problems.append(f"xtol must be positive, got {self.xtol}")
        if self.max_iterations < 1:
            problems.append(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.bounds is not None:
            self.bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            for i, (lo, hi) in enumerate(self.bounds):
                if not lo < hi:
                    problems.append(f"bounds[{i}] needs lo < hi, got ({lo}, {hi})")
        if problems:
            raise PowellParamError("; ".join(problems))


@dataclass
class PowellResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    history: list[tuple[tuple[float, ...], float]] = field(default_factory=list, repr=False)

    def __iter__(self):
        # allows ``x, fx = powell_minimize(...)``
        yield self.x
        yield self.fun


def brent_bounded(g: Callable[[float], float], a: float, b: float, xatol: float,
                  max_evals: int = 500) -> tuple[float, float, int]:
    """Minimize a scalar function on [a, b] by golden section with parabolic steps.

    Returns (t, g(t), evaluations).  Terminates once the bracket around the
    best point is narrower than about ``xatol``.
    """
    if not a < b:
        raise ValueError("empty interval")
    x = w = v = a + GOLDEN * (b - a)
    fx = fw = fv = g(x)
    evals = 1
    d = e = 0.0
    while evals < max_evals:
        xm = 0.5 * (a + b)
        tol1 = SQRT_EPS * abs(x) + xatol / 3.0
        tol2 = 2.0 * tol1
        if abs(x - xm) <= tol2 - 0.5 * (b - a):
            break
        use_golden = True
        if abs(e) > tol1:
            # parabola through (x, fx), (w, fw), (v, fv)
            r = (x - w) * (fx - fv)
            q = (x - v) * (fx - fw)
            p = (x - v) * q - (x - w) * r
            q = 2.0 * (q - r)
            if q > 0.0:
                p = -p
            q = abs(q)
            e_prev, e = e, d
            if abs(p) < abs(0.5 * q * e_prev) and q * (a - x) < p < q * (b - x):
                d = p / q
                u = x + d
                if (u - a) < tol2 or (b - u) < tol2:
                    d = tol1 if xm >= x else -tol1
                use_golden = False
        if use_golden:
            e = (a - x) if x >= xm else (b - x)
            d = GOLDEN * e
        step = d if abs(d) >= tol1 else math.copysign(tol1, d if d != 0 else 1.0)
        u = x + step
        fu = g(u)
        evals += 1
        if fu <= fx:
            if u >= x:
                a = x
            else:
                b = x
            v, fv, w, fw, x, fx = w, fw, x, fx, u, fu
        else:
            if u < x:
                a = u
            else:
                b = u
            if fu <= fw or w == x:
                v, fv, w, fw = w, fw, u, fu
            elif fu <= fv or v == x or v == w:
                v, fv = u, fu
    return x, fx, evals


def _segment(x: np.ndarray, d: np.ndarray, bounds) -> tuple[float, float]:
    """Range of t keeping x + t d inside the box."""
    lo_t, hi_t = -math.inf, math.inf
    for xi, di, (lo, hi) in zip(x, d, bounds):
        if di > 0:
            lo_t, hi_t = max(lo_t, (lo - xi) / di), min(hi_t, (hi - xi) / di)
        elif di < 0:
            lo_t, hi_t = max(lo_t, (hi - xi) / di), min(hi_t, (lo - xi) / di)
    return lo_t, hi_t


def _bracket(g: Callable[[float], float], f0: float, step: float = 1.0,
             max_expand: int = 50) -> tuple[float, float]:
    """Golden-ratio expansion from t=0 until the minimum is enclosed."""
    grow = 1.0 + (1.0 + math.sqrt(5.0)) / 2.0
    fa, fb = f0, g(step)
    a, b = 0.0, step
    if fb > fa:
        a, b, fa, fb = b, a, fb, fa
    c = b + (b - a) * grow
    fc = g(c)
    n = 0
    while fc < fb and n < max_expand:
        a, b, fb = b, c, fc
        c = b + (b - a) * grow
        fc = g(c)
        n += 1
    return (min(a, c), max(a, c))


def _clip(x, bounds):
    if bounds is None:
        return x
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    return np.clip(x, lo, hi)


def powell_minimize(f: Callable[[np.ndarray], float], start, config: PowellConfig | None = None
                    ) -> PowellResult:
    """Minimize ``f`` from ``start`` with Powell's direction-set method.

    Directions start as the coordinate axes.  After each sweep the net
    displacement is tried as a new direction and, when the usual test says it
    is worth it, replaces the direction of largest decrease.  Stops when a
    sweep improves f by less than ``ftol`` and moves no coordinate by
    ``xtol`` or more, or after ``max_iterations`` sweeps.
    """
    config = config or PowellConfig()
    x = np.array(start, dtype=float)
    bounds = config.bounds
    if bounds is not None:
        if len(bounds) != len(x):
            raise PowellParamError(f"{len(bounds)} bounds for a {len(x)}-dimensional start")
        if any(not lo <= xi <= hi for xi, (lo, hi) in zip(x, bounds)):
            raise PowellParamError(f"start {x.tolist()} outside bounds {list(bounds)}")

    history: list[tuple[tuple[float, ...], float]] = []

    def fx_of(point):
        val = float(f(point))
        history.append((tuple(float(c) for c in point), val))
        return val

    def line_min(x, fx, d):
        d = d / np.linalg.norm(d)
        g = lambda t: fx_of(x + t * d)
        if bounds is not None:
            lo, hi = _segment(x, d, bounds)
            if not hi - lo > 0:
                return x, fx
        else:
            lo, hi = _bracket(g, fx)
        t, ft, _ = brent_bounded(g, lo, hi, config.xtol)
        if ft < fx:
            return _clip(x + t * d, bounds), ft
        return x, fx

    fx = fx_of(x)
    n = len(x)
    dirs = [np.eye(n)[i] for i in range(n)]
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        x0, f0 = x.copy(), fx
        biggest, ibig = 0.0, 0
        for i, d in enumerate(dirs):
            before = fx
            x, fx = line_min(x, fx, d)
            if before - fx > biggest:
                biggest, ibig = before - fx, i
        if f0 - fx < config.ftol and np.max(np.abs(x - x0)) < config.xtol:
            converged = True
            break
        disp = x - x0
        if np.linalg.norm(disp) == 0.0:
            continue
        fe = fx_of(_clip(x + disp, bounds))
        if fe < f0:
            crit = 2.0 * (f0 - 2.0 * fx + fe) * (f0 - fx - biggest) ** 2 - biggest * (f0 - fe) ** 2
            if crit < 0.0:
                x, fx = line_min(x, fx, disp)
                dirs[ibig] = dirs[-1]
                dirs[-1] = disp / np.linalg.norm(disp)
    return PowellResult(x, fx, it, len(history), converged, history)
