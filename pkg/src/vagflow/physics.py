"""Data of the continuous problem: mobility/pressure models, tensors, potentials.

A :class:`Model` bundles the mobility ``eta``, the pressure ``p`` (extended to
negative values when ``p(0)`` is finite), the entropy ``Gamma`` with
``Gamma(1) = 0`` and ``Gamma' = p - p(1)``, and ``xi = int_0^u sqrt(eta) p'``.
All callables are vectorized over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate

__all__ = [
    "Model",
    "make_model",
    "TensorField",
    "Potential",
    "HeteroModel",
    "analytical_solution",
    "gibbs_state",
    "test1_mass",
    "CATALOG",
]

Fn = Callable[[np.ndarray], np.ndarray]

CATALOG = ("fokker_planck_log", "pme_a", "pme_b", "pme_c", "pme_drift", "custom")


def _abs(u):
    return np.abs(u)


def _sign(u):
    return np.sign(u)


def _log(u):
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("log pressure evaluated at a nonpositive state")
    return np.log(u)


def _inv(u):
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise ValueError("log pressure derivative evaluated at a nonpositive state")
    return 1.0 / u


def _gamma_log(u):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.where(u > 0, u * np.log(np.where(u > 0, u, 1.0)) - u + 1.0, np.inf)
    return np.where(u == 0, 1.0, g)


def _gamma_cubic(u):
    """|u|^3/3 - u + 2/3, factored as (u-1)^2 (u+2)/3 on u >= 0 so it is exact at 1."""
    u = np.asarray(u, dtype=float)
    return np.where(u >= 0, (u - 1.0) ** 2 * (u + 2.0), 2.0 - 3.0 * u - u**3) / 3.0


@dataclass(frozen=True, eq=False)
class Model:
    name: str
    eta: Fn
    deta: Fn
    pressure: Fn
    dpressure: Fn
    p_at_zero: float
    entropy: Fn
    xi: Fn
    params: Mapping = field(default_factory=dict)

    @property
    def singular(self) -> bool:
        return self.p_at_zero == -math.inf

    def admissible(self, u) -> bool:
        u = np.asarray(u)
        return bool(np.all(np.isfinite(u)) and (not self.singular or np.all(u > 0)))

    def hydrostatic(self, u, V) -> np.ndarray:
        return self.pressure(u) + V


def _catalog(name: str) -> Model:
    if name == "fokker_planck_log":
        return Model(
            name, _abs, _sign, _log, _inv, -math.inf, _gamma_log,
            lambda u: 2.0 * np.sqrt(np.maximum(u, 0.0)),
        )
    if name == "pme_a":
        return Model(
            name, lambda u: 2.0 * np.asarray(u) ** 2, lambda u: 4.0 * np.asarray(u),
            _log, _inv, -math.inf, _gamma_log,
            lambda u: math.sqrt(2.0) * np.maximum(u, 0.0),
        )
    if name == "pme_b":
        return Model(
            name, lambda u: 2.0 * np.abs(u), lambda u: 2.0 * np.sign(u),
            lambda u: np.asarray(u, dtype=float), lambda u: np.ones_like(u, dtype=float), 0.0,
            lambda u: 0.5 * (np.asarray(u) - 1.0) ** 2,
            lambda u: 2.0 * math.sqrt(2.0) / 3.0 * np.sign(u) * np.abs(u) ** 1.5,
        )
    if name == "pme_c":
        return Model(
            name, lambda u: np.ones_like(u, dtype=float), lambda u: np.zeros_like(u, dtype=float),
            lambda u: np.asarray(u) * np.abs(u), lambda u: 2.0 * np.abs(u), 0.0,
            _gamma_cubic,
            lambda u: np.asarray(u) * np.abs(u),
        )
    if name == "pme_drift":
        return Model(
            name, _abs, _sign,
            lambda u: 2.0 * np.asarray(u, dtype=float), lambda u: np.full_like(u, 2.0, dtype=float), 0.0,
            lambda u: (np.asarray(u) - 1.0) ** 2,
            lambda u: 4.0 / 3.0 * np.sign(u) * np.abs(u) ** 1.5,
        )
    raise ValueError(f"unknown model {name!r}; expected one of {CATALOG}")


def _extend(f: Fn, df: Fn, p0: float) -> tuple[Fn, Fn]:
    """Odd-about-p(0) extension p(u) = 2 p(0) - p(-u) for u <= 0."""

    def p(u):
        u = np.asarray(u, dtype=float)
        return np.where(u >= 0, f(np.abs(u)), 2.0 * p0 - f(np.abs(u)))

    def dp(u):
        return df(np.abs(np.asarray(u, dtype=float)))

    return p, dp


def _custom(params: Mapping) -> Model:
    if "m" in params:
        m = float(params["m"])
        if m < 1.0:
            raise ValueError(
                f"power-law exponent m={m} < 1 is the fast-diffusion regime, which is not supported"
            )
        if m == 1.0:
            base = _catalog("fokker_planck_log")
            return Model("custom", base.eta, base.deta, base.pressure, base.dpressure,
                         base.p_at_zero, base.entropy, base.xi, dict(params))
        eta, deta = _abs, _sign
        c = m / (m - 1.0)
        p, dp = _extend(lambda u: c * u ** (m - 1.0), lambda u: m * u ** (m - 2.0), 0.0)
        p0 = 0.0
    else:
        try:
            eta, deta = params["eta"], params["deta"]
            p, dp = params["pressure"], params["dpressure"]
        except KeyError as exc:
            raise ValueError(f"custom model needs {exc.args[0]!r}") from None
        p0 = float(params.get("p_at_zero", -math.inf))
        if p0 > -math.inf:
            p, dp = _extend(p, dp, p0)

    p1 = float(p(np.array(1.0)))
    lo = 0.0 if p0 > -math.inf else None

    def entropy(u):
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape)
        for i, v in np.ndenumerate(u):
            if lo is None and v <= 0:
                out[i] = math.inf if v < 0 else _quad(lambda a: float(p(a)) - p1, 1.0, 1e-300)
            else:
                out[i] = _quad(lambda a: float(p(a)) - p1, 1.0, float(v))
        return out

    def xi(u):
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape)
        for i, v in np.ndenumerate(u):
            val = _quad(lambda a: math.sqrt(float(eta(a))) * float(dp(a)), 0.0, abs(float(v)))
            if v >= 0:
                out[i] = val
            else:
                out[i] = -val if p0 > -math.inf else math.nan
        return out

    model = Model("custom", eta, deta, p, dp, p0, entropy, xi, dict(params))
    _check_assumptions(model)
    return model


def _quad(f, a, b) -> float:
    if a == b:
        return 0.0
    val, _ = integrate.quad(f, a, b, epsabs=1e-10, epsrel=1e-12, limit=200)
    return val


def _check_assumptions(model: Model) -> None:
    """Sample checks of the mobility/pressure assumptions."""
    grid = np.linspace(0.0, 10.0, 201)
    eta = model.eta(grid)
    if eta[0] != 0.0 or np.any(eta[1:] <= 0) or np.any(np.diff(eta) < 0):
        raise ValueError("mobility must vanish at 0, be positive and nondecreasing on R+")
    pg = grid[1:] if model.singular else np.linspace(-10.0, 10.0, 401)
    if np.any(np.diff(model.pressure(pg)) <= 0):
        raise ValueError("pressure must be increasing")
    big = np.array([1e6, 1e12])
    pb = model.pressure(big)
    if not pb[1] > pb[0] + 1.0:
        raise ValueError("pressure must be unbounded at infinity (fast diffusion is excluded)")
    r = model.entropy(np.array([1e3, 1e6])) / model.eta(np.array([1e3, 1e6]))
    if not r[1] > r[0]:
        raise ValueError("entropy/mobility must grow at infinity")


def make_model(name: str, params: Mapping | None = None) -> Model:
    """Catalog models; ``custom`` takes ``{"m": m}`` or explicit callables."""
    params = dict(params or {})
    if name == "custom":
        return _custom(params)
    model = _catalog(name)
    if params:
        model = Model(model.name, model.eta, model.deta, model.pressure, model.dpressure,
                      model.p_at_zero, model.entropy, model.xi, params)
    return model


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TensorField:
    """Constant symmetric tensor per subdomain tag."""

    tensors: Mapping[int, np.ndarray]
    lambda_min: float = field(init=False)
    lambda_max: float = field(init=False)

    def __post_init__(self):
        lo, hi = math.inf, 0.0
        clean = {}
        for tag, L in self.tensors.items():
            L = np.array(L, dtype=float)
            if L.shape != (2, 2) or L[0, 1] != L[1, 0]:
                raise ValueError(f"tensor of subdomain {tag} must be a symmetric 2x2 matrix")
            ev = np.linalg.eigvalsh(L)
            if ev[0] <= 0:
                raise ValueError(f"tensor of subdomain {tag} is not positive definite")
            lo, hi = min(lo, ev[0]), max(hi, ev[1])
            L.setflags(write=False)
            clean[int(tag)] = L
        object.__setattr__(self, "tensors", clean)
        object.__setattr__(self, "lambda_min", float(lo))
        object.__setattr__(self, "lambda_max", float(hi))

    @classmethod
    def diagonal(cls, lx: float, ly: float, tags=(1,)) -> "TensorField":
        return cls({t: np.diag([lx, ly]) for t in tags})

    def for_cells(self, tags: np.ndarray) -> np.ndarray:
        try:
            return np.stack([self.tensors[int(t)] for t in tags])
        except KeyError as exc:
            raise ValueError(f"no tensor for subdomain {exc.args[0]}") from None


@dataclass(frozen=True)
class Potential:
    """Exterior potential: ``zero``, ``gravity`` (V = -g x) or ``quadratic``
    (V = |x - center|^2 / 2)."""

    kind: str = "zero"
    g: float = 0.0
    center: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        if self.kind not in ("zero", "gravity", "quadratic"):
            raise ValueError(f"unknown potential {self.kind!r}")

    @classmethod
    def gravity(cls, g: float) -> "Potential":
        return cls("gravity", g=float(g))

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "gravity":
            return -self.g * x[:, 0]
        if self.kind == "quadratic":
            return 0.5 * ((x - np.asarray(self.center)) ** 2).sum(axis=1)
        return np.zeros(len(x))

    def gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "gravity":
            return np.tile([-self.g, 0.0], (len(x), 1))
        if self.kind == "quadratic":
            return x - np.asarray(self.center)
        return np.zeros_like(x)

    def lipschitz(self, bbox=(0.0, 1.0, 0.0, 1.0)) -> float:
        if self.kind == "gravity":
            return abs(self.g)
        if self.kind == "quadratic":
            xmin, xmax, ymin, ymax = bbox
            cx, cy = self.center
            return math.hypot(max(abs(xmin - cx), abs(xmax - cx)), max(abs(ymin - cy), abs(ymax - cy)))
        return 0.0


@dataclass(frozen=True, eq=False)
class HeteroModel:
    """Linear mobility with a logarithmic pressure ``p = scale[tag] * log u``
    per subdomain, solved with the pressure as unknown."""

    scales: Mapping[int, float]
    tensor: TensorField

    def __post_init__(self):
        for tag, c in self.scales.items():
            if not c > 0:
                raise ValueError(f"pressure scale of subdomain {tag} must be positive")
        missing = set(self.scales) - set(self.tensor.tensors)
        if missing:
            raise ValueError(f"no tensor for subdomains {sorted(missing)}")

    @classmethod
    def drain_barrier(cls, drain: int = 1, barrier: int = 2) -> "HeteroModel":
        return cls(
            {drain: 3.0, barrier: 1.0},
            TensorField({drain: np.eye(2), barrier: np.diag([1.0, 0.01])}),
        )

    def cell_scales(self, tags) -> np.ndarray:
        try:
            return np.array([self.scales[int(t)] for t in tags], dtype=float)
        except KeyError as exc:
            raise ValueError(f"cell tagged {exc.args[0]} has no pressure law") from None

    @staticmethod
    def pressure(u, scale):
        return scale * np.log(u)

    @staticmethod
    def inverse(p, scale):
        """u such that scale * log(u) = p."""
        return np.exp(np.asarray(p) / scale)

    @staticmethod
    def dinverse(p, scale):
        return np.exp(np.asarray(p) / scale) / scale


# ---------------------------------------------------------------------------


def analytical_solution(test: str, x, t: float, lx: float = 1.0, ly: float = 1.0, g: float = 0.0) -> np.ndarray:
    """Closed-form reference solutions of the benchmark problems at points ``x``.

    ``t1``: linear Fokker-Planck with gravity (no-flux); ``t2_1d``: porous
    medium front ``max(2 lx t - x, 0)``; ``t2_2d``: anisotropic paraboloid,
    valid for ``t < 1``; ``t3``: porous medium with drift ``max(lx (2+g) t - x, 0)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    X, Y = x[:, 0], x[:, 1]
    if test == "t1":
        rate = lx * (np.pi**2 + g**2 / 4.0)
        transient = np.exp(-rate * t + g * X / 2.0) * (np.pi * np.cos(np.pi * X) + g / 2.0 * np.sin(np.pi * X))
        return transient + np.pi * np.exp(g * (X - 0.5))
    if test == "t2_1d":
        return np.maximum(2.0 * lx * t - X, 0.0)
    if test == "t2_2d":
        if t >= 1.0:
            raise ValueError("the 2D porous medium solution blows up at t = 1")
        a, b = 1.0 / (16.0 * lx), 1.0 / (16.0 * ly)
        return (a * (X - 0.5) ** 2 + b * (Y - 0.5) ** 2) / (1.0 - t)
    if test == "t3":
        return np.maximum(lx * (2.0 + g) * t - X, 0.0)
    raise ValueError(f"unknown analytical solution {test!r}")


def test1_mass(g: float) -> float:
    """Mass of the steady profile pi exp(g (x - 1/2)) on the unit square."""
    if g == 0:
        return math.pi
    return math.pi * math.exp(-g / 2.0) * math.expm1(g) / g


def gibbs_state(model: Model, potential: Potential, mass: float, domain=(0.0, 1.0, 0.0, 1.0)) -> Callable:
    """Zero-flux steady state ``w = C exp(-V)`` with total mass ``mass`` on a box.

    Only logarithmic pressures admit this closed form.
    """
    if model.name not in ("fokker_planck_log", "pme_a") and not (
        model.name == "custom" and model.params.get("m") == 1.0
    ):
        raise ValueError(f"no closed-form steady state for model {model.name!r}")
    xmin, xmax, ymin, ymax = domain
    if potential.kind == "gravity" and potential.g != 0:
        g = potential.g
        integral = (ymax - ymin) * (math.exp(g * xmax) - math.exp(g * xmin)) / g
    elif potential.kind == "zero" or potential.g == 0 and potential.kind == "gravity":
        integral = (xmax - xmin) * (ymax - ymin)
    else:
        integral, _ = integrate.dblquad(
            lambda y, x: math.exp(-float(potential(np.array([[x, y]]))[0])), xmin, xmax, ymin, ymax
        )
    C = mass / integral

    def w(x):
        return C * np.exp(-potential(x))

    return w
