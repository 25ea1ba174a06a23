"""Closed-form velocity fields with exact derivatives.

Fields are defined symbolically and compiled with :func:`sympy.lambdify`.
Each field exposes ``values``, ``jacobian`` and ``divergence``, all taking
coordinate arrays ``x, y`` and returning arrays with the points on the last
axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy as sym

X, Y = sym.symbols("x y", real=True)

SINGULAR_EXPONENT = 1.05
SINGULAR_CENTER = (0.5, 0.5)


def _compile(expr):
    f = sym.lambdify((X, Y), expr, modules="numpy")

    def g(x, y):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(f(x, y), dtype=float), x.shape).copy()

    return g


@dataclass
class CatalogField:
    """A closed-form 2-vector field.

    Attributes
    ----------
    name : str
    components : tuple of sympy expressions
    smoothness : str
        Informal regularity class, e.g. ``"C-inf"`` or ``"W2,2"``.
    tags : frozenset of str
        Boundary behaviour on the unit square: ``zero_trace``,
        ``zero_normal_trace``, ``discrete_trace`` (the trace of a degree-4
        continuous piecewise polynomial on any mesh), ``divergence_free``.
    singular_point : tuple or None
        Location of a point singularity; quadrature collapses there.
    """

    name: str
    components: tuple
    smoothness: str = "C-inf"
    tags: frozenset = field(default_factory=frozenset)
    singular_point: tuple | None = None
    degree: int | None = None

    def __post_init__(self):
        u, v = self.components
        self._v = [_compile(u), _compile(v)]
        self._jac = [[_compile(sym.diff(c, s)) for s in (X, Y)] for c in (u, v)]
        self._div = _compile(sym.simplify(sym.diff(u, X) + sym.diff(v, Y)))

    def values(self, x, y) -> np.ndarray:
        return np.stack([f(x, y) for f in self._v])

    def jacobian(self, x, y) -> np.ndarray:
        """``J[i, j] = d v_i / d x_j`` with shape ``(2, 2, ...)``."""
        return np.stack([np.stack([f(x, y) for f in row]) for row in self._jac])

    def divergence(self, x, y) -> np.ndarray:
        return self._div(x, y)

    def __call__(self, x, y) -> np.ndarray:
        return self.values(x, y)

    def self_check(self, n: int = 20, seed: int = 0, h: float = 1e-5) -> float:
        """Max difference between analytic and central-difference divergence.

        Points are drawn in ``[0.05, 0.95]^2`` away from any singular point.
        """
        rng = np.random.default_rng(seed)
        pts = []
        while len(pts) < n:
            p = rng.uniform(0.05, 0.95, size=2)
            if self.singular_point is None or np.hypot(*(p - self.singular_point)) > 0.1:
                pts.append(p)
        x, y = np.array(pts).T
        fd = ((self.values(x + h, y)[0] - self.values(x - h, y)[0])
              + (self.values(x, y + h)[1] - self.values(x, y - h)[1])) / (2 * h)
        J = self.jacobian(x, y)
        err_div = np.abs(fd - self.divergence(x, y)).max()
        err_tr = np.abs(J[0, 0] + J[1, 1] - self.divergence(x, y)).max()
        return float(max(err_div, err_tr))


def _r(center=SINGULAR_CENTER):
    return sym.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2)


def _stream(psi):
    return (sym.diff(psi, Y), -sym.diff(psi, X))


pi = sym.pi
_bump_poly = X ** 2 * (1 - X) ** 2 * Y ** 2 * (1 - Y) ** 2


def _definitions() -> dict[str, dict]:
    a = sym.Rational(SINGULAR_EXPONENT).limit_denominator(1000)
    return {
        "trig": dict(components=(sym.sin(pi * X) * sym.sin(pi * Y), sym.Integer(0)),
                     tags={"zero_trace"}),
        "trig_mixed": dict(components=(sym.sin(pi * X) * sym.sin(pi * Y), X * (1 - X) * Y * (1 - Y)),
                           tags={"zero_trace"}),
        "rotation": dict(components=(-Y, X), tags={"discrete_trace", "divergence_free"}, degree=1),
        "exp": dict(components=(sym.exp(X + Y / 2), sym.cos(2 * X - Y))),
        "stream": dict(components=_stream(sym.sin(pi * X) ** 2 * sym.sin(pi * Y) ** 2 / pi),
                       tags={"zero_trace", "divergence_free"}),
        "poly4": dict(components=(X ** 4 - 2 * X ** 2 * Y + Y ** 3 + 1, X * Y ** 3 - X ** 2 + 3 * Y),
                      tags={"discrete_trace"}, degree=4),
        "slip": dict(components=(sym.sin(pi * X) * sym.exp(Y), sym.sin(pi * Y) * sym.cos(X)),
                     tags={"zero_normal_trace"}),
        "bump": dict(components=(_bump_poly, 2 * _bump_poly),
                     tags={"zero_trace", "discrete_trace"}, degree=8),
        "singular": dict(components=(_r() ** a, -_r() ** a), smoothness="W2,2",
                         singular_point=SINGULAR_CENTER),
    }


CATALOG_NAMES = tuple(_definitions().keys())


@lru_cache(maxsize=None)
def catalog_field(name: str) -> CatalogField:
    defs = _definitions()
    if name not in defs:
        raise KeyError(f"unknown catalog field {name!r}; choose from {', '.join(CATALOG_NAMES)}")
    d = dict(defs[name])
    d["tags"] = frozenset(d.get("tags", ()))
    return CatalogField(name=name, **d)


class BumpField:
    """Smooth compactly supported bump ``amp * exp(1 - 1 / (1 - s))``, ``s = |x-c|^2 / rho^2``."""

    def __init__(self, center, radius: float, amplitude=(1.0, 0.0)):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.amplitude = np.asarray(amplitude, dtype=float)
        self.singular_point = None

    def _profile(self, x, y):
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        s = (dx ** 2 + dy ** 2) / self.radius ** 2
        inside = s < 1.0
        g = np.zeros_like(s)
        si = s[inside]
        g[inside] = np.exp(1.0 - 1.0 / (1.0 - si))
        dg_ds = np.zeros_like(s)
        dg_ds[inside] = -g[inside] / (1.0 - si) ** 2
        gx = dg_ds * 2 * dx / self.radius ** 2
        gy = dg_ds * 2 * dy / self.radius ** 2
        return g, gx, gy

    def values(self, x, y) -> np.ndarray:
        g, _, _ = self._profile(x, y)
        return self.amplitude.reshape((2,) + (1,) * g.ndim) * g

    def jacobian(self, x, y) -> np.ndarray:
        _, gx, gy = self._profile(x, y)
        return np.stack([np.stack([a * gx, a * gy]) for a in self.amplitude])

    def divergence(self, x, y) -> np.ndarray:
        _, gx, gy = self._profile(x, y)
        return self.amplitude[0] * gx + self.amplitude[1] * gy

    def __call__(self, x, y):
        return self.values(x, y)


class SumField:
    """Pointwise linear combination ``sum_i c_i f_i`` of closed-form fields."""

    def __init__(self, terms):
        self.terms = [(float(c), f) for c, f in terms]
        pts = [getattr(f, "singular_point", None) for _, f in self.terms]
        pts = [p for p in pts if p is not None]
        self.singular_point = pts[0] if pts else None

    def values(self, x, y):
        return sum(c * np.asarray(f.values(x, y)) for c, f in self.terms)

    def jacobian(self, x, y):
        return sum(c * np.asarray(f.jacobian(x, y)) for c, f in self.terms)

    def divergence(self, x, y):
        return sum(c * np.asarray(f.divergence(x, y)) for c, f in self.terms)

    def __call__(self, x, y):
        return self.values(x, y)
