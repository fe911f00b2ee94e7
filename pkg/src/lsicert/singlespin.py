"""Single-spin measures and their tilted versions.

The sphere measure on ``S^{n-1}`` (n = 1, 2, 3) is normalised to a probability
measure. Tilted moments reduce to a one-dimensional problem along the field:
n = 1 is a two-point law, n = 2 uses a periodic trapezoid rule in the angle and
n = 3 a Gauss-Legendre rule in ``cos(theta)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np

EXP_LIMIT = 700.0
TRAPEZOID_NODES = 128
LEGENDRE_NODES = 64
STANDARD_FIELD_NORMS = (0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0)

ISING_GAMMA = 4.0
"""Uniform-in-field LSI constant of the tilted two-point measure (2/gamma = 1/2)."""


class FieldTooLargeError(ValueError):
    """The tilt ``|h| R`` exceeds the exponential range of the quadrature."""


class NoDefaultGammaError(ValueError):
    pass


@lru_cache(maxsize=64)
def _legendre(m: int):
    t, w = np.polynomial.legendre.leggauss(m)
    return t, w / 2.0


@lru_cache(maxsize=64)
def _circle(m: int):
    theta = 2.0 * np.pi * np.arange(m) / m
    return np.cos(theta), np.full(m, 1.0 / m)


def _field_nodes(base: int, a: float, scale: int) -> int:
    # enough nodes to resolve exp(a t): Poisson(a) tail beyond a + 10 sqrt(a) + 30 is negligible
    need = int(math.ceil(a + 10.0 * math.sqrt(a) + 30.0))
    return scale * max(base, need)


@dataclass(frozen=True)
class TiltedMoments:
    field: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray
    log_partition: float
    longitudinal_mean: float
    longitudinal_variance: float
    transverse_variance: float

    def to_dict(self) -> dict:
        return {
            "field": self.field.tolist(),
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "logPartition": self.log_partition,
        }


@dataclass(frozen=True)
class SingleSpinModel:
    """Single-spin measure.

    ``measure_kind`` is ``"sphere"`` (uniform law on ``S^{n-1}``) or
    ``"general-bounded"`` (a discrete law on ``[-R, R]`` given by ``nodes`` and
    ``weights``, n = 1 only). ``gamma`` is the uniform-in-field LSI constant;
    ``resolution`` multiplies the default quadrature node counts.
    """

    n: int
    gamma: Optional[float] = None
    measure_kind: str = "sphere"
    radius: float = 1.0
    nodes: Optional[np.ndarray] = field(default=None, repr=False)
    weights: Optional[np.ndarray] = field(default=None, repr=False)
    resolution: int = 1

    def __post_init__(self):
        if self.measure_kind == "sphere":
            if self.n not in (1, 2, 3):
                raise ValueError(f"sphere measures are available for n in (1, 2, 3), got {self.n}")
            if self.radius != 1.0:
                raise ValueError("sphere measures have radius 1")
        elif self.measure_kind == "general-bounded":
            if self.n != 1:
                raise ValueError("general-bounded measures are one-dimensional")
            x = np.asarray(self.nodes, dtype=np.float64)
            w = np.asarray(self.weights, dtype=np.float64)
            if x.ndim != 1 or x.shape != w.shape or x.size == 0:
                raise ValueError("nodes and weights must be equal-length 1-D arrays")
            if np.any(w <= 0):
                raise ValueError("quadrature weights must be positive")
            if np.any(np.abs(x) > self.radius):
                raise ValueError("nodes must lie within the support radius")
            object.__setattr__(self, "nodes", x)
            object.__setattr__(self, "weights", w / w.sum())
        else:
            raise ValueError(f"unknown measure kind {self.measure_kind!r}")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @classmethod
    def sphere(cls, n: int, gamma: Optional[float] = None, resolution: int = 1) -> "SingleSpinModel":
        if gamma is None and n == 1:
            gamma = ISING_GAMMA
        return cls(n=n, gamma=gamma, resolution=resolution)

    @classmethod
    def from_table(cls, doc: dict) -> "SingleSpinModel":
        """``{"radius": R, "nodes": [...], "weights": [...], "gamma": g}``."""
        return cls(
            n=1,
            gamma=float(doc["gamma"]),
            measure_kind="general-bounded",
            radius=float(doc["radius"]),
            nodes=np.asarray(doc["nodes"], dtype=np.float64),
            weights=np.asarray(doc["weights"], dtype=np.float64),
        )

    @classmethod
    def load(cls, path) -> "SingleSpinModel":
        return cls.from_table(json.loads(Path(path).read_text()))

    def to_table(self) -> dict:
        if self.measure_kind != "general-bounded":
            raise ValueError("only general-bounded measures have a density table")
        return {"radius": self.radius, "nodes": self.nodes.tolist(), "weights": self.weights.tolist(), "gamma": self.gamma}

    def axial_rule(self, a: float):
        """Nodes ``t`` (projection on the field axis) and weights of the rule used at tilt ``a``."""
        if self.measure_kind == "general-bounded":
            return self.nodes, self.weights
        if self.n == 1:
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        if self.n == 2:
            return _circle(_field_nodes(TRAPEZOID_NODES, a, self.resolution))
        return _legendre(_field_nodes(LEGENDRE_NODES, a, self.resolution) // 2 * 2)

    def _check_field(self, a: float):
        if not math.isfinite(a) or a * self.radius > EXP_LIMIT:
            raise FieldTooLargeError(f"|h| = {a:g} exceeds the exponential range {EXP_LIMIT / self.radius:g}")

    def axial_moments(self, a: float) -> tuple[float, float, float, float]:
        """``(log Z, E t, E t^2, transverse variance)`` for field strength ``a >= 0``.

        ``t`` is the component along the field direction.
        """
        self._check_field(a)
        if self.measure_kind == "sphere" and self.n == 1:
            m = math.tanh(a)
            return _log_cosh(a), m, 1.0, 0.0
        t, w = self.axial_rule(a)
        shift = a * float(np.max(t))
        e = w * np.exp(a * t - shift)
        z = float(e.sum())
        p = e / z
        m1 = float(p @ t)
        m2 = float(p @ (t * t))
        log_z = shift + math.log(z)
        if self.measure_kind == "general-bounded":
            trans = 0.0
        else:
            trans = max(1.0 - m2, 0.0) / (self.n - 1)
        return log_z, m1, m2, trans

    def log_partition(self, h) -> float:
        return self.axial_moments(float(np.linalg.norm(np.atleast_1d(h))))[0]


def _log_cosh(x: float) -> float:
    x = abs(x)
    return x + math.log1p(math.exp(-2.0 * x)) - math.log(2.0)


def _axis(h: np.ndarray, n: int) -> np.ndarray:
    a = float(np.linalg.norm(h))
    if a > 0:
        return h / a
    e = np.zeros(n)
    e[0] = 1.0
    return e


def tilted_moments(model: SingleSpinModel, h) -> TiltedMoments:
    """Mean, covariance and log-partition of ``mu^h(ds) ~ exp(h.s) mu(ds)``."""
    h = np.atleast_1d(np.asarray(h, dtype=np.float64))
    if h.shape != (model.n,):
        raise ValueError(f"field must have {model.n} components, got shape {h.shape}")
    a = float(np.linalg.norm(h))
    if model.measure_kind == "general-bounded":
        # signed one-dimensional field: tilt directly
        model._check_field(a)
        t, w = model.nodes, model.weights
        expo = h[0] * t
        shift = float(np.max(expo))
        e = w * np.exp(expo - shift)
        z = float(e.sum())
        p = e / z
        m1 = float(p @ t)
        var = float(p @ (t - m1) ** 2)
        return TiltedMoments(h, np.array([m1]), np.array([[var]]), shift + math.log(z), m1, var, 0.0)
    log_z, m1, m2, trans = model.axial_moments(a)
    e = _axis(h, model.n)
    long_var = max(m2 - m1 * m1, 0.0)
    if model.n == 1:
        long_var = 1.0 - m1 * m1
    proj = np.outer(e, e)
    cov = long_var * proj + trans * (np.eye(model.n) - proj)
    cov = 0.5 * (cov + cov.T)
    return TiltedMoments(h, m1 * e, cov, log_z, m1, long_var, trans)


def standard_field_grid(n: int, norms=STANDARD_FIELD_NORMS, directions: int = 3, seed: int = 0) -> list[np.ndarray]:
    """Fields with the given norms along ``directions`` fixed unit vectors.

    For n = 1 the directions are +1 and -1.
    """
    if n == 1:
        units = [np.array([1.0]), np.array([-1.0])]
    else:
        rng = np.random.default_rng(seed)
        units = [np.eye(n)[0]]
        while len(units) < directions:
            v = rng.normal(size=n)
            units.append(v / np.linalg.norm(v))
    return [r * u for r in norms for u in units]


@dataclass(frozen=True)
class VarianceReport:
    max_directional_variance: float
    bound: float
    pass_: bool
    argmax_field: np.ndarray

    def to_dict(self) -> dict:
        return {
            "maxDirectionalVariance": self.max_directional_variance,
            "bound": self.bound,
            "pass": self.pass_,
            "argmaxField": self.argmax_field.tolist(),
        }


def variance_bound_check(model: SingleSpinModel, h_grid, tol: float = 1e-8) -> VarianceReport:
    """Largest ``var_{mu^h}(x.s)`` over unit ``x`` and the grid, against ``1/n``.

    For general-bounded measures the trivial bound ``R^2`` is used.
    """
    h_grid = list(h_grid)
    if not h_grid:
        raise ValueError("field grid must be nonempty")
    best, arg = -math.inf, None
    for h in h_grid:
        cov = tilted_moments(model, h).covariance
        top = float(np.linalg.eigvalsh(cov)[-1])
        if top > best:
            best, arg = top, np.atleast_1d(np.asarray(h, dtype=np.float64))
    bound = model.radius**2 if model.measure_kind == "general-bounded" else 1.0 / model.n
    return VarianceReport(best, bound, best <= bound + tol, arg)


def single_spin_lsi_default(n: int, configured: Optional[float] = None) -> float:
    """Single-spin LSI constant: 4 for Ising, otherwise the configured value."""
    if configured is not None:
        if not configured > 0:
            raise ValueError("configured gamma must be positive")
        return float(configured)
    if n == 1:
        return ISING_GAMMA
    if n in (2, 3):
        raise NoDefaultGammaError(f"no default single-spin LSI constant available for n={n}; pass gamma explicitly")
    raise ValueError(f"spin dimension must be 1, 2 or 3, got {n}")
