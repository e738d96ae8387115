"""Bond and futures pricing from the (x, y) state, with explosion-collapse
diagnostics.

The zero-coupon bond price is

    P(t, T) = P(0,T)/P(0,t) * exp(-G(t,T) x - (1/2) G(t,T)^2 y),

with x = r - lambda(t), G(t,T) = (1 - exp(-beta (T-t)))/beta, and
P(0, T) = exp(-integral of lambda over [0, T]). Past an explosion the bond
collapses to zero and the simple rate on it blows up; the Eurodollar
futures estimator reports this through the diverged flag rather than a
number.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Optional

import numpy as np

from .errors import CollapsedBond, ConfigError
from .model_core import ForwardCurve, ModelParams, State
from .sde_engine import (McEstimate, OnExplosion, SimConfig,
                         expectation_functional, pathwise_discount_factors)

__all__ = [
    "DiscountCurve",
    "g_factor",
    "zcb_price",
    "libor",
    "eurodollar_futures",
    "discount_consistency_check",
]

# exp underflows to exactly 0.0 below roughly -745; make the collapse explicit
_UNDERFLOW_EXPONENT = -745.0


class DiscountCurve:
    """Initial discount factors P(0, T) = exp(-int_0^T lambda(s) ds).

    The integral is exact per linear segment of the forward curve.
    """

    def __init__(self, curve: ForwardCurve) -> None:
        self.curve = curve
        if curve.kind == "tabulated":
            t = curve.to_json()["knots"]
            arr = np.asarray(t, dtype=float)
            self._t = arr[:, 0]
            self._v = arr[:, 1]
            seg = np.diff(self._t) * 0.5 * (self._v[:-1] + self._v[1:])
            self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        else:
            self._t = self._v = self._cum = None

    def integral(self, T):
        """int_0^T lambda(s) ds, exact for the piecewise-linear curve."""
        if self.curve.kind == "flat":
            return self.curve.lambda0 * np.asarray(T, dtype=float)
        T = np.asarray(T, dtype=float)
        idx = np.clip(np.searchsorted(self._t, T, side="right") - 1,
                      0, len(self._t) - 1)
        t0 = self._t[idx]
        v0 = self._v[idx]
        # slope is zero beyond the last knot (constant extrapolation)
        m = np.where(idx < len(self._t) - 1,
                     np.concatenate([np.diff(self._v) / np.diff(self._t), [0.0]])[idx],
                     0.0)
        dt = T - t0
        return self._cum[idx] + v0 * dt + 0.5 * m * dt * dt

    def price(self, T):
        """P(0, T); equals 1 at T = 0 and decreases for positive rates."""
        out = np.exp(-self.integral(T))
        return float(out) if np.ndim(T) == 0 else out


def g_factor(t: float, T: float, beta: float) -> float:
    """G(t, T) = (1 - exp(-beta (T-t)))/beta, continuously T - t at beta = 0.

    Uses expm1 so small beta*(T-t) suffers no cancellation.
    """
    if T < t:
        raise ConfigError(f"T must be >= t, got t={t} T={T}")
    tau = T - t
    if beta == 0.0:
        return tau
    return -math.expm1(-beta * tau) / beta


def zcb_price(t: float, T: float, x: float, y: float, p: ModelParams,
              dc: DiscountCurve) -> float:
    """Zero-coupon bond price from the state (x, y) at time t.

    Returns exactly 0.0 when the exponent underflows, signalling the
    collapse regime to downstream rate calculations.
    """
    if T < t:
        raise ConfigError(f"T must be >= t, got t={t} T={T}")
    G = g_factor(t, T, p.beta)
    expo = -G * x - 0.5 * G * G * y
    ratio = dc.price(T) / dc.price(t)
    if expo < _UNDERFLOW_EXPONENT:
        return 0.0
    return ratio * math.exp(expo)


def libor(t: float, T2: float, zcb: float) -> float:
    """Simple rate over [t, T2] implied by the bond price:
    (1/(T2-t)) (1/zcb - 1).

    Raises CollapsedBond for a zero price, the signature of an exploded
    path.
    """
    if not T2 > t:
        raise ConfigError(f"T2 must exceed t, got t={t} T2={T2}")
    if zcb <= 0.0:
        raise CollapsedBond(
            "bond price is zero; the implied simple rate is infinite")
    return (1.0 / zcb - 1.0) / (T2 - t)


def eurodollar_futures(p: ModelParams, curve: ForwardCurve, cfg: SimConfig,
                       T: float, delta: float, *,
                       threads: Optional[int] = None) -> McEstimate:
    """Monte Carlo estimate of E[1/P(T, T+delta)]:

        P(0,T)/P(0,T+delta) * E[exp(G(T,T+delta) x_T + (1/2) G^2 y_T)]

    with x_T = r_T - lambda(T). Paths exploding before T make the true
    expectation infinite; the estimate is then flagged diverged and covers
    the surviving paths only. A surviving payoff whose exponent overflows
    is treated as infinite rather than raising.
    """
    if not delta > 0.0:
        raise ConfigError(f"delta must be positive, got {delta}")
    if not T + delta <= cfg.horizon:
        raise ConfigError(
            f"T + delta = {T + delta} exceeds horizon {cfg.horizon}")
    G = g_factor(T, T + delta, p.beta)
    lam_T = float(curve.value(T))

    def payoff(s: State) -> float:
        x = s.r - lam_T
        expo = G * x + 0.5 * G * G * s.y
        return math.exp(expo) if expo < 709.0 else math.inf

    est = expectation_functional(p, curve, replace(cfg, horizon=T), payoff,
                                 OnExplosion.DIVERGE, threads=threads)
    dc = DiscountCurve(curve)
    factor = dc.price(T) / dc.price(T + delta)
    return McEstimate(mean=factor * est.mean, std_error=factor * est.std_error,
                      n=est.n, n_exploded=est.n_exploded, diverged=est.diverged)


def discount_consistency_check(p: ModelParams, curve: ForwardCurve,
                               cfg: SimConfig, T: float, *,
                               threads: Optional[int] = None) -> McEstimate:
    """MC mean of the pathwise discount factor exp(-sum_k r_k dt) up to T.

    In an arbitrage-consistent implementation this reproduces P(0, T) up
    to discretization and sampling error, which makes it a end-to-end
    sanity check of the simulation. Exploded paths are excluded and
    counted.
    """
    if T == 0.0:
        return McEstimate(mean=1.0, std_error=0.0, n=cfg.n_paths,
                          n_exploded=0, diverged=False)
    dfs, exploded = pathwise_discount_factors(p, curve, cfg, T, threads=threads)
    surv = dfs[~exploded]
    n = len(dfs)
    if len(surv) == 0:
        return McEstimate(mean=math.nan, std_error=math.nan, n=n,
                          n_exploded=n, diverged=True)
    se = float(surv.std(ddof=1) / math.sqrt(len(surv))) if len(surv) > 1 else 0.0
    return McEstimate(mean=float(surv.mean()), std_error=se, n=n,
                      n_exploded=int(exploded.sum()), diverged=False)
