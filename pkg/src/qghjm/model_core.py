"""Model primitives: parameters, volatility function, forward curve, state,
drift/diffusion fields, and the infinitesimal generator.

The model evolves the pair (r, y) where r is the short rate and y is an
auxiliary convexity state with units of rate squared:

    dr = (y - beta*r + beta*lambda(t) + lambda'(t)) dt + sigma_r(r) dW
    dy = (sigma_r(r)^2 - 2*beta*y) dt

started from r(0) = lambda(0), y(0) = 0. The short-rate volatility is a CEV
power law regularized below a cutoff level epsilon, where it switches to
log-normal scaling:

    sigma_r(x) = sigma * x * min(x^(gamma-1), epsilon^(gamma-1)),

so gamma = 1 is the plain log-normal model and the cutoff only affects the
region x < epsilon. A displacement a > 0 shifts the volatility argument,
sigma_r(x) = sigma*(x+a)*min((x+a)^(gamma-1), epsilon^(gamma-1)), which for
gamma = 1 is the displaced log-normal family; it is equivalent to the
non-displaced model run on the shifted curve lambda(t) + a.

Units: time in years, rates as absolute decimals (0.1 means 10%).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "ModelParams",
    "ForwardCurve",
    "State",
    "SmoothField",
    "sigma_r",
    "drift",
    "diffusion",
    "generator_apply",
]


@dataclass(frozen=True)
class ModelParams:
    """Constant model parameters.

    Attributes
    ----------
    sigma : float
        Volatility scale, units 1/sqrt(year).
    beta : float
        Mean-reversion speed, 1/year. Larger beta delays or suppresses
        explosion.
    gamma : float
        CEV exponent in (0, 1]; gamma = 1 is log-normal.
    epsilon : float
        Cutoff level below which the volatility scales log-normally.
    lambda0 : float
        Initial flat forward rate, must exceed epsilon.
    displacement : float
        Shift a >= 0 of the volatility argument (0 = non-displaced).
    vol_cap : float, optional
        Cap c on sigma_r; when set the volatility is clipped to [0, c],
        which restores sub-linear growth and removes the explosion.
    """

    sigma: float
    beta: float
    gamma: float
    epsilon: float
    lambda0: float
    displacement: float = 0.0
    vol_cap: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.sigma > 0.0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if not self.beta >= 0.0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not self.epsilon > 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.lambda0 > self.epsilon:
            raise ConfigError(
                f"lambda0 must exceed epsilon, got lambda0={self.lambda0} "
                f"epsilon={self.epsilon}")
        if not self.displacement >= 0.0:
            raise ConfigError(
                f"displacement must be >= 0, got {self.displacement}")
        if self.vol_cap is not None and not self.vol_cap > 0.0:
            raise ConfigError(f"vol_cap must be > 0, got {self.vol_cap}")

    @classmethod
    def from_json(cls, obj: dict) -> "ModelParams":
        allowed = {"sigma", "beta", "gamma", "epsilon", "lambda0",
                   "displacement", "vol_cap"}
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigError(f"unknown model key(s): {sorted(unknown)}")
        missing = {"sigma", "beta", "gamma", "epsilon", "lambda0"} - set(obj)
        if missing:
            raise ConfigError(f"missing model key(s): {sorted(missing)}")
        return cls(
            sigma=float(obj["sigma"]),
            beta=float(obj["beta"]),
            gamma=float(obj["gamma"]),
            epsilon=float(obj["epsilon"]),
            lambda0=float(obj["lambda0"]),
            displacement=float(obj.get("displacement", 0.0)),
            vol_cap=None if obj.get("vol_cap") is None else float(obj["vol_cap"]),
        )

    def to_json(self) -> dict:
        return {
            "sigma": self.sigma, "beta": self.beta, "gamma": self.gamma,
            "epsilon": self.epsilon, "lambda0": self.lambda0,
            "displacement": self.displacement, "vol_cap": self.vol_cap,
        }


class ForwardCurve:
    """Initial instantaneous forward curve lambda(t) = f(0, t).

    Either flat or piecewise linear between knots, with the analytic segment
    slope as lambda'(t). A tabulated curve is held constant beyond its last
    knot (slope 0). All values must be positive.
    """

    __slots__ = ("kind", "_lambda0", "_t", "_v", "_m")

    def __init__(self, kind: str, lambda0: float = 0.0,
                 knots: Optional[Sequence[Sequence[float]]] = None) -> None:
        if kind == "flat":
            if not lambda0 > 0.0:
                raise ConfigError(f"flat curve needs lambda0 > 0, got {lambda0}")
            self.kind = "flat"
            self._lambda0 = float(lambda0)
            self._t = self._v = self._m = None
        elif kind == "tabulated":
            arr = np.asarray(knots, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
                raise ConfigError("tabulated curve needs >= 2 (t, value) knots")
            t, v = arr[:, 0], arr[:, 1]
            if t[0] != 0.0:
                raise ConfigError("first knot must be at t = 0")
            if not np.all(np.diff(t) > 0.0):
                raise ConfigError("knot times must be strictly increasing")
            if not np.all(v > 0.0):
                raise ConfigError("curve values must be positive")
            self.kind = "tabulated"
            self._lambda0 = float(v[0])
            self._t = t
            self._v = v
            self._m = np.diff(v) / np.diff(t)
            for a in (self._t, self._v, self._m):
                a.setflags(write=False)
        else:
            raise ConfigError(f"unknown curve kind {kind!r}")

    @classmethod
    def flat(cls, lambda0: float) -> "ForwardCurve":
        return cls("flat", lambda0=lambda0)

    @classmethod
    def tabulated(cls, knots: Sequence[Sequence[float]]) -> "ForwardCurve":
        return cls("tabulated", knots=knots)

    @property
    def lambda0(self) -> float:
        return self._lambda0

    def value(self, t):
        """lambda(t); accepts scalars or arrays."""
        if self.kind == "flat":
            return self._lambda0 + np.zeros_like(np.asarray(t, dtype=float)) \
                if np.ndim(t) else self._lambda0
        return np.interp(t, self._t, self._v)

    def slope(self, t):
        """lambda'(t): the segment slope, 0 for flat or beyond the last knot."""
        if self.kind == "flat":
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        idx = np.clip(np.searchsorted(self._t, t, side="right") - 1,
                      0, len(self._m))
        padded = np.concatenate([self._m, [0.0]])
        out = padded[idx]
        return out if np.ndim(t) else float(out)

    def rate_and_slope(self, t):
        return self.value(t), self.slope(t)

    def shifted(self, a: float) -> "ForwardCurve":
        """The curve lambda(t) + a (used by the displaced-model reduction)."""
        if a == 0.0:
            return self
        if self.kind == "flat":
            return ForwardCurve.flat(self._lambda0 + a)
        return ForwardCurve.tabulated(np.column_stack([self._t, self._v + a]))

    def satisfies_lower_bound(self, beta: float) -> bool:
        """Test lambda'(t) + beta*lambda(t) >= beta*lambda(0) at all knots.

        Under this condition the time-dependent dynamics dominate the flat
        dynamics at level lambda(0), so flat-curve explosion results apply.
        """
        if self.kind == "flat":
            return True
        target = beta * self._lambda0
        # slope is piecewise constant and lambda is linear per segment, so
        # checking both endpoints of every segment is exact
        for i, m in enumerate(self._m):
            if m + beta * self._v[i] < target:
                return False
            if m + beta * self._v[i + 1] < target:
                return False
        # constant extrapolation beyond the last knot
        return 0.0 + beta * self._v[-1] >= target

    def to_json(self) -> dict:
        if self.kind == "flat":
            return {"kind": "flat", "lambda0": self._lambda0}
        return {"kind": "tabulated",
                "knots": [[float(t), float(v)] for t, v in zip(self._t, self._v)]}

    @classmethod
    def from_json(cls, obj: dict) -> "ForwardCurve":
        kind = obj.get("kind")
        if kind == "flat":
            unknown = set(obj) - {"kind", "lambda0"}
            if unknown:
                raise ConfigError(f"unknown curve key(s): {sorted(unknown)}")
            return cls.flat(float(obj["lambda0"]))
        if kind == "tabulated":
            unknown = set(obj) - {"kind", "knots"}
            if unknown:
                raise ConfigError(f"unknown curve key(s): {sorted(unknown)}")
            return cls.tabulated(obj["knots"])
        raise ConfigError(f"curve kind must be 'flat' or 'tabulated', got {kind!r}")

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, s: str) -> "ForwardCurve":
        return cls.from_json(json.loads(s))


@dataclass(frozen=True)
class State:
    """Point state of the simulation: short rate r, convexity y, time t."""

    r: float
    y: float
    t: float


@dataclass(frozen=True)
class SmoothField:
    """A twice-differentiable scalar field V(r, y) with analytic partials.

    The callables must accept (r, y) and broadcast over numpy arrays.
    """

    value: Callable
    d_r: Callable
    d_rr: Callable
    d_y: Callable


def sigma_r(x, p: ModelParams):
    """Short-rate volatility sigma * z * min(z^(gamma-1), epsilon^(gamma-1))
    with z = x + displacement.

    Full truncation: returns 0 for z <= 0, so negative Euler overshoots see
    zero diffusion and the positive drift restores the state. Continuous at
    z = epsilon, and exactly sigma*z for gamma = 1. When vol_cap is set the
    result is clipped to [0, vol_cap]. Accepts scalars or arrays.
    """
    z = np.asarray(x, dtype=float) + p.displacement
    pos = z > 0.0
    zs = np.where(pos, z, 1.0)
    cut = p.epsilon ** (p.gamma - 1.0)
    v = np.where(pos, p.sigma * z * np.minimum(zs ** (p.gamma - 1.0), cut), 0.0)
    if p.vol_cap is not None:
        v = np.minimum(np.maximum(v, 0.0), p.vol_cap)
    return float(v) if np.ndim(x) == 0 else v


def drift(s: State, p: ModelParams, curve: ForwardCurve):
    """Drift of (r, y): (y - beta*r + beta*lambda(t) + lambda'(t),
    sigma_r(r)^2 - 2*beta*y)."""
    lam, dlam = curve.rate_and_slope(s.t)
    dr_dt = s.y - p.beta * s.r + p.beta * lam + dlam
    sr = sigma_r(s.r, p)
    dy_dt = sr * sr - 2.0 * p.beta * s.y
    return dr_dt, dy_dt


def diffusion(s: State, p: ModelParams):
    """Diffusion coefficient of r (y carries no noise)."""
    return sigma_r(s.r, p)


def generator_apply(field: SmoothField, s: State, p: ModelParams):
    """Apply the infinitesimal generator of the flat-curve diffusion to V.

    Returns

        (sigma_r(r)^2 - 2*beta*y) dV/dy
        + (y - beta*r + beta*lambda0) dV/dr
        + (1/2) sigma_r(r)^2 d2V/dr2

    evaluated with the supplied analytic partials; no finite differencing.
    Only the time-homogeneous (flat-curve) generator is exposed, with
    beta*lambda0 taken from the parameters.
    """
    r, y = s.r, s.y
    sr = sigma_r(r, p)
    a2 = sr * sr
    return ((a2 - 2.0 * p.beta * y) * field.d_y(r, y)
            + (y - p.beta * r + p.beta * p.lambda0) * field.d_r(r, y)
            + 0.5 * a2 * field.d_rr(r, y))
