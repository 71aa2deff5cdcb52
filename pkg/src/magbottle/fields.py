"""Magnetic fields on the half-plane and sampled checks of the bottle hypotheses.

Points are ``(x, y)`` with ``y > 0``; the hyperbolic area element is
``y**-2 dx dy``.  A field model gives the signed density ``b_tilde`` of the
field two-form against that area element; the intensity is ``|b_tilde|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr

# hyperbolic area element dv = y^-2 dx dy
VOLUME_EXPONENT = -2

PRESETS = {
    "bottle-j1": "(x/y)^2 + y + 1/y",
    "bottle-j2": "(x/y)^4 + y + 1/y",
    "strip": "y + 1/y",
    "unit": "1",
}


class FieldEvaluationError(ArithmeticError):
    pass


@dataclass(frozen=True)
class HalfPlanePoint:
    x: float
    y: float

    def __post_init__(self):
        if not self.y > 0:
            raise ValueError(f"half-plane point needs y > 0, got y={self.y}")


def hyperbolic_distance(x, y, x0=0.0, y0=1.0):
    """Distance to ``(x0, y0)`` from ``cosh d = 1 + |z - z0|^2 / (2 y y0)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    arg = 1.0 + ((x - x0) ** 2 + (y - y0) ** 2) / (2.0 * y * y0)
    return np.arccosh(np.maximum(arg, 1.0))


def point_at(d, theta):
    """Half-plane point at distance ``d`` from ``i`` in direction ``theta``.

    Rotates ``i e^d`` about ``i`` with the elliptic Moebius map of angle ``theta``.
    """
    d = np.asarray(d, dtype=float)
    theta = np.asarray(theta, dtype=float)
    w = 1j * np.exp(d)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    z = (c * w + s) / (-s * w + c)
    return z.real, z.imag


@dataclass(frozen=True)
class FieldModel:
    """A magnetic field on the half-plane.

    ``kind`` is ``"constant"`` (params ``(b0,)``), ``"power_xy"``
    (``b = (x/y)^(2j) + p1(y) + p2(1/y)`` with ascending coefficient tuples)
    or ``"expression"`` (a parsed arithmetic tree in ``x`` and ``y``).
    """

    kind: str
    b0: float = 0.0
    j: int = 1
    p1: tuple = ()
    p2: tuple = ()
    source: str = ""
    name: str = ""
    tree: object = field(default=None, compare=False, repr=False)

    @classmethod
    def constant(cls, b0: float, name: str = "") -> "FieldModel":
        return cls("constant", b0=float(b0), name=name or f"constant({b0:g})")

    @classmethod
    def power_xy(cls, j: int, p1, p2, name: str = "") -> "FieldModel":
        p1 = tuple(float(c) for c in p1)
        p2 = tuple(float(c) for c in p2)
        if int(j) != j or j < 1:
            raise ValueError("power_xy needs an integer j >= 1")
        for p in (p1, p2):
            if len(p) < 2 or not any(p[1:]):
                raise ValueError("power_xy polynomials must have degree >= 1")
        return cls("power_xy", j=int(j), p1=p1, p2=p2, name=name or f"power_xy(j={j})")

    @classmethod
    def expression(cls, source: str, name: str = "") -> "FieldModel":
        tree = expr.parse(source)
        return cls("expression", source=source, name=name or source, tree=tree)

    @classmethod
    def from_spec(cls, spec) -> "FieldModel":
        """Build from a preset name, an expression string, or a config mapping."""
        if isinstance(spec, FieldModel):
            return spec
        if isinstance(spec, str):
            src = PRESETS.get(spec, spec)
            return cls.expression(src, name=spec)
        kind = spec.get("kind", "expression")
        name = spec.get("name", "")
        if kind == "constant":
            return cls.constant(spec["b0"], name=name)
        if kind == "power_xy":
            return cls.power_xy(spec["j"], spec["p1"], spec["p2"], name=name)
        if kind == "expression":
            src = spec["expr"]
            return cls.expression(PRESETS.get(src, src), name=name or src)
        raise ValueError(f"unknown field kind {kind!r}")

    def to_spec(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "b0": self.b0, "name": self.name}
        if self.kind == "power_xy":
            return {"kind": "power_xy", "j": self.j, "p1": list(self.p1), "p2": list(self.p2), "name": self.name}
        return {"kind": "expression", "expr": self.source, "name": self.name}

    # -- evaluation --------------------------------------------------------

    def signed(self, x, y):
        """Vectorised ``b_tilde(x, y)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.kind == "constant":
            return np.full(np.broadcast_shapes(x.shape, y.shape), self.b0)
        if self.kind == "power_xy":
            with np.errstate(all="ignore"):
                out = (x / y) ** (2 * self.j) + np.polynomial.polynomial.polyval(y, self.p1) \
                    + np.polynomial.polynomial.polyval(1.0 / y, self.p2)
            if not np.all(np.isfinite(out)):
                raise FieldEvaluationError(f"non-finite field value in {self.name}")
            return out
        try:
            return expr.evaluate(self.tree, x, y)
        except expr.ExprEvalError as exc:
            raise FieldEvaluationError(str(exc)) from exc

    def intensity(self, x, y):
        return np.abs(self.signed(x, y))

    def intensity_log(self, x, t):
        """Intensity in log coordinates ``y = e^t``."""
        return self.intensity(x, np.exp(t))


def signed_field_at(model: FieldModel, p: HalfPlanePoint) -> float:
    return float(model.signed(p.x, p.y))


def intensity_at(model: FieldModel, p: HalfPlanePoint) -> float:
    return abs(signed_field_at(model, p))


def _fd_gradient(model: FieldModel, x, y):
    """Central differences, step 1e-4 * max(1, |x|, y); the y-step is also kept below 1e-3 * y."""
    h = 1e-4 * np.maximum(1.0, np.maximum(np.abs(x), y))
    hy = np.minimum(h, 1e-3 * y)
    bx = (model.signed(x + h, y) - model.signed(x - h, y)) / (2 * h)
    by = (model.signed(x, y + hy) - model.signed(x, y - hy)) / (2 * hy)
    return bx, by


@dataclass
class BottleReport:
    growth_ok: bool
    estimated_C0: float
    sample_count: int
    shell_radii: np.ndarray
    shell_min: np.ndarray
    shell_max: np.ndarray
    witnesses: list = field(default_factory=list)
    heuristic: bool = True
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "growth_ok": self.growth_ok,
            "estimated_C0": self.estimated_C0,
            "sample_count": self.sample_count,
            "heuristic": self.heuristic,
            "witnesses": self.witnesses,
            "notes": self.notes,
        }


def verify_bottle_conditions(model: FieldModel, sample_radius: float = 8.0, samples: int = 4000) -> BottleReport:
    """Sample the growth and derivative-control hypotheses on geodesic shells.

    Shells are geodesic circles about ``(0, 1)``.  Growth passes when the shell
    minima are nondecreasing from the middle shell outwards and the outermost
    shell's minimum beats every value seen inside the middle shell.  This is a
    heuristic: only finitely many points are ever looked at.
    """
    if sample_radius <= 0:
        raise ValueError("sample_radius must be positive")
    if samples < 100:
        raise ValueError("need at least 100 samples")
    n_shell = max(10, int(round(np.sqrt(samples))))
    n_ang = max(10, samples // n_shell)
    radii = sample_radius * np.arange(1, n_shell + 1) / n_shell
    theta = 2 * np.pi * np.arange(n_ang) / n_ang
    D, TH = np.meshgrid(radii, theta, indexing="ij")
    x, y = point_at(D, TH)
    notes = []
    try:
        bt = model.signed(x, y)
    except FieldEvaluationError as exc:
        return BottleReport(False, float("inf"), x.size, radii, np.full(n_shell, np.nan),
                            np.full(n_shell, np.nan), notes=[f"evaluation failed: {exc}"])
    b = np.abs(bt)
    smin = b.min(axis=1)
    smax = b.max(axis=1)
    k0 = n_shell // 2
    interior_max = smax[: k0 + 1].max()
    tail = smin[k0:]
    monotone = bool(np.all(np.diff(tail) >= -1e-12 * np.maximum(1.0, np.abs(tail[1:]))))
    outer = b[-1]
    low = np.flatnonzero(outer <= interior_max)
    growth_ok = monotone and low.size == 0
    witnesses = []
    if not monotone:
        k = k0 + int(np.argmax(np.diff(tail) < 0)) + 1
        i = int(np.argmin(b[k]))
        witnesses.append({"reason": "shell minimum decreased", "distance": float(radii[k]),
                          "x": float(x[k, i]), "y": float(y[k, i]), "b": float(b[k, i])})
    if low.size:
        i = int(low[np.argmin(outer[low])])
        witnesses.append({"reason": "outer shell below interior max", "distance": float(radii[-1]),
                          "x": float(x[-1, i]), "y": float(y[-1, i]), "b": float(outer[i]),
                          "interior_max": float(interior_max)})
    try:
        bx, by = _fd_gradient(model, x, y)
        ratio = y * (np.abs(bx) + np.abs(by)) / (np.abs(bt) + 1.0)
        c0 = float(np.max(ratio))
        if not np.isfinite(c0):
            notes.append("control estimate not finite")
    except FieldEvaluationError as exc:
        c0 = float("inf")
        notes.append(f"derivative sampling failed: {exc}")
    if growth_ok and smin[-1] - smin[k0] < 1e-9 * max(1.0, smin[-1]):
        growth_ok = False
        notes.append("shell minima flat; growth inconclusive")
    return BottleReport(growth_ok, c0, int(x.size), radii, smin, smax, witnesses, True, notes)
