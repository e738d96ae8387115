"""Explosion certificates for exponents gamma in (1/2, 1].

Two scalar conditions decide whether the finite-time explosion of (r, y)
can be certified. Both are parameterized by a split (delta1, delta2) of
the exponent budget,

    (1 + delta1)(1 + delta2) = 2*gamma,    delta1, delta2 > 0,

a domain radius R >= epsilon, and the combination
A = 2*beta + (1/2) sigma^2 delta2 (delta2 + 1):

  (I)  sup_{R >= eps} F(R) > 0 with
       F(R) = R^(2g) - A * [ (1/(d1 s^2)) (1+R)^(d1+1)
                             + (1/d2) R^(2g-1) (1+R)^(d2+1) ]

  (II) sup_{R >= eps} ( G(R) - A ) >= 0 with
       G(R) = d2 * R / (1+R)^(d2+1),

where G peaks at R0 = 1/delta2 with value (d2/(1+d2))^(d2+1). Scanning
the peak value over delta2 yields the admissible mean-reversion band
0 <= beta <= beta_max(sigma, gamma), which closes at sigma = sqrt(2).

A certificate is realized by a bounded function

    V(r, y) = C1 - C2 (1+y)^(-d1) - C3 (1+r)^(-d2),   C1 = C2 + C3,

whose generator dominates C*V outside the square D = (0,R)^2, with
C = max(2*d1, d2)*beta + (1/2) sigma^2 d2 (d2+1). Feasible (C2, C3) form
a wedge of slopes b/a in transformed coordinates

    a = d1 C2 sigma^2 (R/(1+R))^(d1+1),  b = d2 C3 (R/(1+R))^(d2+1),

on which  kappa1 a + kappa2 b <= min{ kappa_d a^e1 b^e2,
a R^(2g-d1-1), b R^(-d2) }  holds. Solving the three constraints gives
the slope band

    kappa1 / (R^(-d2) - kappa2)  <=  b/a  <=  (R^(2g-d1-1) - kappa1)/kappa2,

split by the line b/a = R^(d2 (d1+2)) into an upper (region-1) and lower
(region-2) part. The band is non-empty exactly when condition (I) holds
at that (delta2, R); condition (II) alone guarantees only the lower slope
to be finite. When no wedge exists anywhere, constants are instead picked
by directly maximizing the worst-case generator slack on the verification
grid, which succeeds on a strictly larger parameter region because the
wedge inequalities discard several positive terms of the generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._search import golden_max
from .errors import ConfigError, DomainError, GammaOutOfRange, InfeasibleWedge
from .model_core import ModelParams, SmoothField, State, generator_apply

__all__ = [
    "DeltaPair",
    "LyapunovSpec",
    "ConditionReport",
    "RegionCurve",
    "WedgeSlopes",
    "ScanSpec",
    "VerifyGrid",
    "VerificationReport",
    "R0Threshold",
    "A5Report",
    "condition_F",
    "condition_G",
    "check_condition",
    "delta2_star",
    "beta_max",
    "region_curve",
    "kappa_delta",
    "min_F_hat",
    "kappas",
    "wedge_feasible_slopes",
    "build_lyapunov",
    "scale_c3",
    "lyapunov_field",
    "a5_field",
    "verify_generator_inequality",
    "as_explosion_r0_threshold",
    "k0",
    "verify_a5_function",
]

_COUPLING_TOL = 1e-12


def _require_gamma(gamma: float) -> None:
    if not 0.5 < gamma <= 1.0:
        raise GammaOutOfRange(
            f"explosion certificates require gamma in (1/2, 1], got {gamma}; "
            "for gamma <= 1/2 the dynamics are non-explosive")


@dataclass(frozen=True)
class DeltaPair:
    """Exponent split with (1+delta1)(1+delta2) = 2*gamma, both positive."""

    delta1: float
    delta2: float
    gamma: float

    def __post_init__(self) -> None:
        _require_gamma(self.gamma)
        if not (self.delta1 > 0.0 and self.delta2 > 0.0):
            raise ConfigError(
                f"deltas must be positive, got ({self.delta1}, {self.delta2})")
        resid = (1.0 + self.delta1) * (1.0 + self.delta2) - 2.0 * self.gamma
        if abs(resid) > _COUPLING_TOL:
            raise ConfigError(
                f"(1+delta1)(1+delta2) != 2*gamma (residual {resid:.3e})")

    @classmethod
    def from_delta2(cls, delta2: float, gamma: float) -> "DeltaPair":
        _require_gamma(gamma)
        if not 0.0 < delta2 < 2.0 * gamma - 1.0:
            raise ConfigError(
                f"delta2 must lie in (0, {2.0 * gamma - 1.0}), got {delta2}")
        return cls(delta1=2.0 * gamma / (1.0 + delta2) - 1.0,
                   delta2=delta2, gamma=gamma)


@dataclass(frozen=True)
class LyapunovSpec:
    """Constants (C1, C2, C3, deltas, R, C) of a certificate candidate."""

    c1: float
    c2: float
    c3: float
    deltas: DeltaPair
    R: float
    C: float

    def __post_init__(self) -> None:
        if not (self.c1 > 0.0 and self.c2 > 0.0 and self.c3 > 0.0):
            raise ConfigError("C1, C2, C3 must be positive")
        if self.c1 < (self.c2 + self.c3) * (1.0 - 1e-12):
            raise ConfigError("C1 must be at least C2 + C3")
        if not self.R > 0.0:
            raise ConfigError(f"R must be positive, got {self.R}")
        if not self.C > 0.0:
            raise ConfigError(f"C must be positive, got {self.C}")

    def to_json(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3,
                "delta1": self.deltas.delta1, "delta2": self.deltas.delta2,
                "gamma": self.deltas.gamma, "R": self.R, "C": self.C}


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of scanning condition I or II."""

    condition: str
    satisfied: bool
    witness_R: Optional[float]
    witness_deltas: Optional[DeltaPair]
    sup_value: float

    def to_json(self) -> dict:
        d = self.witness_deltas
        return {"condition": self.condition, "satisfied": self.satisfied,
                "witness_R": self.witness_R, "sup_value": self.sup_value,
                "witness_delta1": None if d is None else d.delta1,
                "witness_delta2": None if d is None else d.delta2}


@dataclass(frozen=True)
class RegionCurve:
    """Sampled admissible-region boundary sigma -> beta_max for one gamma."""

    gamma: float
    points: np.ndarray  # rows (sigma, beta_max, delta2_star)

    def write_csv(self, fh) -> None:
        fh.write("sigma,beta_max,delta2_star\n")
        for s, b, d in self.points:
            fh.write(f"{s:.17g},{b:.17g},{d:.17g}\n")


@dataclass(frozen=True)
class WedgeSlopes:
    """Feasible slope band b/a of the certificate wedge at one (deltas, R).

    slope_lo and slope_hi bound the full feasible band; divider is the line
    separating the upper (region-1) and lower (region-2) parts, recorded
    separately when non-empty. ineq1/ineq2 report the two scalar
    precursors: ineq1 (equivalent to F(R) >= 0) makes the band non-empty,
    ineq2 (equivalent to G(R) >= A) only makes the lower slope finite.
    """

    kind: str  # "region1" | "region2" | "empty"
    slope_lo: Optional[float]
    slope_hi: Optional[float]
    divider: float
    region1: Optional[tuple[float, float]]
    region2: Optional[tuple[float, float]]
    ineq1_holds: bool
    ineq2_holds: bool

    @property
    def nonempty(self) -> bool:
        return self.kind != "empty"


@dataclass(frozen=True)
class ScanSpec:
    """Grid resolution for the condition scans."""

    n_delta2: int = 400
    n_r: int = 400
    r_max: float = 1e4
    refine_tol: float = 1e-10


@dataclass(frozen=True)
class VerifyGrid:
    """Verification grid: n x n log-spaced points on (0, l_over_r * R]^2
    outside the open square, plus face_points hugging each face of the
    square boundary at relative offset face_offset."""

    n: int = 200
    l_over_r: float = 10.0
    face_points: int = 100
    face_offset: float = 1e-6
    floor: float = 1e-6


@dataclass(frozen=True)
class VerificationReport:
    """Grid slack statistics for the generator inequality LV - C V >= 0."""

    min_slack: float
    violations: int
    n_points: int
    worst_point: tuple[float, float]

    def to_json(self) -> dict:
        return {"min_slack": self.min_slack, "violations": self.violations,
                "n_points": self.n_points,
                "worst_r": self.worst_point[0], "worst_y": self.worst_point[1]}


@dataclass(frozen=True)
class R0Threshold:
    """Initial-rate threshold for almost-sure explosion, kept in log space.

    value is None when exp(log_value) would overflow (log_value > 700).
    """

    log_value: float
    value: Optional[float]
    overflow: bool


@dataclass(frozen=True)
class A5Report:
    """Grid maximum of the generator applied to V0 = exp(-r) + exp(-y)."""

    max_value: float
    argmax: tuple[float, float]
    n_points: int

    @property
    def negative(self) -> bool:
        return self.max_value < 0.0


# ---------------------------------------------------------------------------
# scalar building blocks


def _a_const(p: ModelParams, d: DeltaPair) -> float:
    return 2.0 * p.beta + 0.5 * p.sigma ** 2 * d.delta2 * (d.delta2 + 1.0)


def condition_F(R, p: ModelParams, d: DeltaPair):
    """The condition-(I) function F(R); requires R >= epsilon."""
    R = np.asarray(R, dtype=float)
    if np.any(R < p.epsilon):
        raise DomainError(f"R must be >= epsilon ({p.epsilon})")
    g2 = 2.0 * d.gamma
    A = _a_const(p, d)
    val = R ** g2 - A * ((1.0 / (d.delta1 * p.sigma ** 2)) * (1.0 + R) ** (d.delta1 + 1.0)
                         + (1.0 / d.delta2) * R ** (g2 - 1.0) * (1.0 + R) ** (d.delta2 + 1.0))
    return float(val) if val.ndim == 0 else val


def condition_G(R, d: DeltaPair):
    """G(R) = delta2 * R / (1+R)^(delta2+1); vanishes at 0 and infinity,
    peaks at R = 1/delta2."""
    R = np.asarray(R, dtype=float)
    if np.any(R <= 0.0):
        raise DomainError("R must be positive")
    val = d.delta2 * R / (1.0 + R) ** (d.delta2 + 1.0)
    return float(val) if val.ndim == 0 else val


def _g_peak(delta2) -> np.ndarray:
    """Peak value of G: (d2/(1+d2))^(d2+1), continuously 0 at d2 = 0."""
    d2 = np.asarray(delta2, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(d2 > 0.0, (d2 / (1.0 + d2)) ** (d2 + 1.0), 0.0)
    return v


def kappa_delta(delta1: float) -> float:
    """(delta1+2) * (delta1+1)^(-(delta1+1)/(delta1+2)); exceeds 1 on [0, 1]
    and decreases there."""
    return (delta1 + 2.0) * (delta1 + 1.0) ** (-(delta1 + 1.0) / (delta1 + 2.0))


def min_F_hat(a: float, b: float, delta1: float) -> float:
    """Closed-form infimum of x -> a x^(delta1+1) + b/x over x > 0:
    kappa_delta * a^(1/(d1+2)) * b^((d1+1)/(d1+2))."""
    if not (a > 0.0 and b > 0.0):
        raise DomainError("a and b must be positive")
    e1 = 1.0 / (delta1 + 2.0)
    return kappa_delta(delta1) * a ** e1 * b ** (1.0 - e1)


def kappas(R: float, p: ModelParams, d: DeltaPair) -> tuple[float, float]:
    """The wedge constants kappa1, kappa2 at radius R."""
    if not R > 0.0:
        raise DomainError("R must be positive")
    A = _a_const(p, d)
    q = (1.0 + R) / R
    k1 = A / (d.delta1 * p.sigma ** 2) * q ** (d.delta1 + 1.0)
    k2 = A / d.delta2 * q ** (d.delta2 + 1.0)
    return k1, k2


# ---------------------------------------------------------------------------
# condition scans and the admissible region


def check_condition(p: ModelParams, which: str,
                    scan: Optional[ScanSpec] = None) -> ConditionReport:
    """Scan condition I or II over delta2 in (0, 2*gamma-1) and R >= epsilon.

    Grid search (log-uniform per the scan spec) followed by golden-section
    refinement. Condition I is satisfied when its sup is strictly positive,
    condition II when its sup is non-negative; the closed-form maximizer
    R0 = 1/delta2 replaces the R scan for condition II.
    """
    _require_gamma(p.gamma)
    if which not in ("I", "II"):
        raise ConfigError(f"condition must be 'I' or 'II', got {which!r}")
    sc = scan or ScanSpec()
    d2_hi = 2.0 * p.gamma - 1.0
    d2_grid = np.geomspace(1e-4, d2_hi * (1.0 - 1e-9), sc.n_delta2)

    if which == "II":
        def margin(d2: float) -> float:
            dd = DeltaPair.from_delta2(d2, p.gamma)
            r0 = max(1.0 / d2, p.epsilon)
            return condition_G(r0, dd) - _a_const(p, dd)

        vals = np.array([margin(d2) for d2 in d2_grid])
        i = int(np.argmax(vals))
        lo = d2_grid[max(i - 1, 0)]
        hi = d2_grid[min(i + 1, len(d2_grid) - 1)]
        d2_best, sup = golden_max(margin, lo, hi, tol=sc.refine_tol)
        if vals[i] > sup:
            d2_best, sup = float(d2_grid[i]), float(vals[i])
        deltas = DeltaPair.from_delta2(d2_best, p.gamma)
        wr = max(1.0 / d2_best, p.epsilon)
        ok = sup >= 0.0
        return ConditionReport(condition="II", satisfied=ok,
                               witness_R=wr if ok else None,
                               witness_deltas=deltas if ok else None,
                               sup_value=float(sup))

    r_grid = np.geomspace(p.epsilon, sc.r_max, sc.n_r)
    best = (-math.inf, d2_grid[0], r_grid[0])
    for d2 in d2_grid:
        dd = DeltaPair.from_delta2(float(d2), p.gamma)
        vals = condition_F(r_grid, p, dd)
        i = int(np.argmax(vals))
        if vals[i] > best[0]:
            best = (float(vals[i]), float(d2), float(r_grid[i]))

    sup, d2_best, r_best = best
    # coordinate refinement: R at fixed delta2, then delta2 at fixed R
    for _ in range(2):
        dd = DeltaPair.from_delta2(d2_best, p.gamma)
        j = int(np.searchsorted(r_grid, r_best))
        r_lo = r_grid[max(j - 1, 0)]
        r_hi = r_grid[min(j + 1, len(r_grid) - 1)]
        r_best, sup_r = golden_max(lambda R: condition_F(R, p, dd),
                                   r_lo, r_hi, tol=sc.refine_tol)
        jj = int(np.searchsorted(d2_grid, d2_best))
        d_lo = d2_grid[max(jj - 1, 0)]
        d_hi = d2_grid[min(jj + 1, len(d2_grid) - 1)]
        d2_best, sup = golden_max(
            lambda d2: condition_F(r_best, p, DeltaPair.from_delta2(d2, p.gamma)),
            d_lo, d_hi, tol=sc.refine_tol)
        sup = max(sup, sup_r)
    sup = max(sup, best[0])
    deltas = DeltaPair.from_delta2(d2_best, p.gamma)
    ok = sup > 0.0
    return ConditionReport(condition="I", satisfied=ok,
                           witness_R=r_best if ok else None,
                           witness_deltas=deltas if ok else None,
                           sup_value=float(sup))


def delta2_star(sigma: float, gamma: float) -> tuple[float, float]:
    """Maximizer of (d2/(1+d2))^(d2+1) - (1/2) sigma^2 d2 (d2+1) over
    [0, 2*gamma-1], ties broken toward larger delta2.

    Returns (argmax, objective value). The objective is independent of
    gamma except through the admissible interval, so interior maximizers
    coincide across gamma.
    """
    _require_gamma(gamma)
    hi = 2.0 * gamma - 1.0

    def J(d2: float) -> float:
        return float(_g_peak(d2) - 0.5 * sigma * sigma * d2 * (d2 + 1.0))

    grid = np.linspace(0.0, hi, 801)
    vals = _g_peak(grid) - 0.5 * sigma * sigma * grid * (grid + 1.0)
    i = len(vals) - 1 - int(np.argmax(vals[::-1]))  # ties -> larger delta2
    lo_b = grid[max(i - 1, 0)]
    hi_b = grid[min(i + 1, len(grid) - 1)]
    x, v = golden_max(J, lo_b, hi_b, tol=1e-13)
    # boundary candidates compete exactly; larger delta2 wins ties
    cands = [(J(0.0), 0.0), (v, x), (J(hi), hi)]
    best = max(cands, key=lambda c: (c[0], c[1]))
    return best[1], best[0]


def beta_max(sigma: float, gamma: float) -> float:
    """Largest mean reversion admitted by condition II:
    max{0, (1/2) G(R0(d2*)) - (1/4) sigma^2 d2* (d2*+1)}."""
    d2s, _ = delta2_star(sigma, gamma)
    val = 0.5 * float(_g_peak(d2s)) - 0.25 * sigma * sigma * d2s * (d2s + 1.0)
    return max(0.0, val)


def region_curve(gamma: float, sigma_grid) -> RegionCurve:
    """Map beta_max over a sigma grid, recording delta2* per point."""
    _require_gamma(gamma)
    rows = []
    for s in np.asarray(sigma_grid, dtype=float):
        d2s, _ = delta2_star(float(s), gamma)
        rows.append((float(s), beta_max(float(s), gamma), d2s))
    return RegionCurve(gamma=gamma, points=np.array(rows))


# ---------------------------------------------------------------------------
# wedge geometry and Lyapunov construction


def wedge_feasible_slopes(R: float, p: ModelParams, d: DeltaPair) -> WedgeSlopes:
    """Feasible slope band of the certificate wedge at radius R.

    The three wedge constraints reduce to slope bounds
    lo = kappa1/(R^(-d2) - kappa2) (finite only under ineq2) and
    hi = (R^(2g-d1-1) - kappa1)/kappa2 (finite only when the numerator is
    positive); the band [lo, hi] is non-empty exactly when ineq1 holds,
    in which case the divider R^(d2 (d1+2)) splits it into the region-1
    part above and the region-2 part below.
    """
    if not R >= p.epsilon:
        raise DomainError(f"R must be >= epsilon ({p.epsilon})")
    k1, k2 = kappas(R, p, d)
    g2 = 2.0 * d.gamma
    divider = R ** (d.delta2 * (d.delta1 + 2.0))
    pow1 = R ** (g2 - d.delta1 - 1.0)
    pow2 = R ** (-d.delta2)

    ineq2 = pow2 > k2
    s_lo = k1 / (pow2 - k2) if ineq2 else math.inf
    s_hi = (pow1 - k1) / k2 if pow1 > k1 else -math.inf
    ineq1 = k2 * divider <= pow1 - k1

    region1 = (divider, s_hi) if ineq1 and s_hi >= divider else None
    region2 = (s_lo, divider) if ineq2 and s_lo <= divider else None
    if region1 is not None:
        kind = "region1"
    elif region2 is not None:
        kind = "region2"
    else:
        kind = "empty"
    lo = s_lo if math.isfinite(s_lo) else (divider if region1 else None)
    hi = s_hi if math.isfinite(s_hi) else (divider if region2 else None)
    if kind == "empty":
        lo = hi = None
    return WedgeSlopes(kind=kind, slope_lo=lo, slope_hi=hi, divider=divider,
                       region1=region1, region2=region2,
                       ineq1_holds=bool(ineq1), ineq2_holds=bool(ineq2))


def _c_growth(p: ModelParams, d: DeltaPair) -> float:
    return (max(2.0 * d.delta1, d.delta2) * p.beta
            + 0.5 * p.sigma ** 2 * d.delta2 * (d.delta2 + 1.0))


def _spec_from_ab(p: ModelParams, d: DeltaPair, R: float,
                  a: float, b: float) -> LyapunovSpec:
    q = R / (1.0 + R)
    c2 = a / (d.delta1 * p.sigma ** 2 * q ** (d.delta1 + 1.0))
    c3 = b / (d.delta2 * q ** (d.delta2 + 1.0))
    return LyapunovSpec(c1=c2 + c3, c2=c2, c3=c3, deltas=d, R=R,
                        C=_c_growth(p, d))


def _spec_from_ratio(p: ModelParams, d: DeltaPair, R: float,
                     c2_over_c3: float) -> LyapunovSpec:
    c3 = 1.0
    c2 = c2_over_c3
    return LyapunovSpec(c1=c2 + c3, c2=c2, c3=c3, deltas=d, R=R,
                        C=_c_growth(p, d))


def lyapunov_field(spec: LyapunovSpec) -> SmoothField:
    """V(r,y) = C1 - C2 (1+y)^(-d1) - C3 (1+r)^(-d2) with analytic partials."""
    c1, c2, c3 = spec.c1, spec.c2, spec.c3
    d1, d2 = spec.deltas.delta1, spec.deltas.delta2
    return SmoothField(
        value=lambda r, y: c1 - c2 * (1.0 + y) ** (-d1) - c3 * (1.0 + r) ** (-d2),
        d_r=lambda r, y: d2 * c3 * (1.0 + r) ** (-d2 - 1.0),
        d_rr=lambda r, y: -d2 * (d2 + 1.0) * c3 * (1.0 + r) ** (-d2 - 2.0),
        d_y=lambda r, y: d1 * c2 * (1.0 + y) ** (-d1 - 1.0),
    )


def a5_field() -> SmoothField:
    """V0(r,y) = exp(-r) + exp(-y) with analytic partials."""
    return SmoothField(
        value=lambda r, y: np.exp(-r) + np.exp(-y),
        d_r=lambda r, y: -np.exp(-r),
        d_rr=lambda r, y: np.exp(-r),
        d_y=lambda r, y: -np.exp(-y),
    )


def _exterior_grid(R: float, grid: VerifyGrid) -> tuple[np.ndarray, np.ndarray]:
    g = np.geomspace(R * grid.floor, R * grid.l_over_r, grid.n)
    rr, yy = np.meshgrid(g, g)
    keep = (rr >= R) | (yy >= R)
    r = rr[keep]
    y = yy[keep]
    s = np.linspace(R * grid.floor, R, grid.face_points)
    face = np.full(grid.face_points, R)
    off = np.full(grid.face_points, R * (1.0 + grid.face_offset))
    r = np.concatenate([r, face, s, off, s])
    y = np.concatenate([y, s, face, s, off])
    return r, y


def verify_generator_inequality(spec: LyapunovSpec, p: ModelParams,
                                grid: Optional[VerifyGrid] = None
                                ) -> VerificationReport:
    """Evaluate LV - C*V on the exterior grid and count violations.

    The slack uses the exact generator with the analytic partials of V; a
    point violates when its slack drops below -1e-12.
    """
    if spec.R < p.epsilon:
        raise DomainError(f"spec.R must be >= epsilon ({p.epsilon})")
    if spec.C < _c_growth(p, spec.deltas) - 1e-12:
        raise DomainError("spec.C is below the admissible growth constant")
    gr = grid or VerifyGrid()
    r, y = _exterior_grid(spec.R, gr)
    field = lyapunov_field(spec)
    lv = generator_apply(field, State(r=r, y=y, t=0.0), p)
    slack = lv - spec.C * field.value(r, y)
    i = int(np.argmin(slack))
    return VerificationReport(
        min_slack=float(slack[i]),
        violations=int(np.count_nonzero(slack < -1e-12)),
        n_points=len(slack),
        worst_point=(float(r[i]), float(y[i])),
    )


def _min_slack(p: ModelParams, spec: LyapunovSpec, n: int) -> float:
    rep = verify_generator_inequality(
        spec, p, VerifyGrid(n=n, face_points=max(20, n // 4)))
    return rep.min_slack


def build_lyapunov(p: ModelParams, report: ConditionReport) -> LyapunovSpec:
    """Construct certificate constants from a satisfied condition report.

    Preference order: (1) the wedge at the witness (deltas, R), using the
    geometric midpoint slope with a normalized to 1; (2) the best wedge
    found on a (delta2, R) grid; (3) direct choice of C2/C3 maximizing the
    minimum generator slack at candidate (delta2, R) pairs, for parameter
    regions where condition II holds but no wedge exists. Raises
    InfeasibleWedge when even the direct construction fails to produce a
    non-negative slack.
    """
    if not report.satisfied:
        raise InfeasibleWedge("condition report is not satisfied")
    gamma = p.gamma
    _require_gamma(gamma)

    def from_wedge(d: DeltaPair, R: float, w: WedgeSlopes) -> LyapunovSpec:
        s_mid = math.sqrt(w.slope_lo * w.slope_hi)
        return _spec_from_ab(p, d, R, 1.0, s_mid)

    # (1) wedge at the witness
    if report.witness_deltas is not None and report.witness_R is not None:
        d = report.witness_deltas
        R = max(report.witness_R, p.epsilon)
        w = wedge_feasible_slopes(R, p, d)
        if w.nonempty and w.slope_lo is not None and w.slope_hi is not None \
                and w.slope_lo <= w.slope_hi:
            return from_wedge(d, R, w)

    # (2) grid search for any wedge, maximizing the slope-band width
    best = None
    d2_hi = 2.0 * gamma - 1.0
    for d2 in np.geomspace(1e-3, d2_hi * (1.0 - 1e-9), 60):
        d = DeltaPair.from_delta2(float(d2), gamma)
        for R in np.geomspace(p.epsilon, 1e4, 80):
            w = wedge_feasible_slopes(float(R), p, d)
            if w.nonempty and w.slope_lo is not None and w.slope_hi is not None \
                    and w.slope_hi > w.slope_lo > 0.0:
                width = math.log(w.slope_hi / w.slope_lo)
                if best is None or width > best[0]:
                    best = (width, d, float(R), w)
    if best is not None:
        return from_wedge(best[1], best[2], best[3])

    # (3) direct slack maximization over C2/C3
    candidates: list[tuple[DeltaPair, float]] = []

    def add(d2: float) -> None:
        if 0.0 < d2 < d2_hi:
            d = DeltaPair.from_delta2(d2, gamma)
            if d.delta1 > 1e-6:
                candidates.append((d, max(1.0 / d2, p.epsilon)))

    if report.witness_deltas is not None:
        wd = report.witness_deltas
        if wd.delta1 > 1e-6:
            candidates.append((wd, max(report.witness_R or 1.0 / wd.delta2,
                                       p.epsilon)))
    add(math.sqrt(2.0 * gamma) - 1.0)  # symmetric split delta1 = delta2
    for f in (0.25, 0.5, 0.75):
        add(f * d2_hi)

    best_spec = None
    best_val = -math.inf
    for d, R in candidates:
        def slack_of(log_t: float, d=d, R=R) -> float:
            return _min_slack(p, _spec_from_ratio(p, d, R, math.exp(log_t)), 60)

        lt, val = golden_max(slack_of, math.log(1e-6), math.log(1e6), tol=1e-6)
        if val > best_val:
            best_val = val
            best_spec = _spec_from_ratio(p, d, R, math.exp(lt))
    if best_spec is None or best_val < 0.0:
        raise InfeasibleWedge(
            "no feasible Lyapunov constants found for these parameters")
    return best_spec


def scale_c3(spec: LyapunovSpec, factor: float) -> LyapunovSpec:
    """Rescale C3 by the given factor, keeping C1 = C2 + C3.

    Used as a negative control: a large factor pushes the C2/C3 ratio out
    of the feasible band so the generator inequality must fail somewhere.
    """
    if not factor > 0.0:
        raise ConfigError("factor must be positive")
    c3 = spec.c3 * factor
    return LyapunovSpec(c1=spec.c2 + c3, c2=spec.c2, c3=c3,
                        deltas=spec.deltas, R=spec.R, C=spec.C)


# ---------------------------------------------------------------------------
# almost-sure explosion machinery


def k0(spec: LyapunovSpec) -> float:
    """Infimum of V over the exterior domain:
    min{C1 - C2 (1+R)^(-d1) - C3, C1 - C2 - C3 (1+R)^(-d2)}."""
    d1, d2 = spec.deltas.delta1, spec.deltas.delta2
    R = spec.R
    return min(spec.c1 - spec.c2 * (1.0 + R) ** (-d1) - spec.c3,
               spec.c1 - spec.c2 - spec.c3 * (1.0 + R) ** (-d2))


def as_explosion_r0_threshold(R: float, p: ModelParams) -> R0Threshold:
    """Initial-rate level above which the explosion is almost sure:

        max{ (e/beta)(4 beta R + beta + sigma^2),
             (sigma^2/beta) exp( (e^(2R)/sigma^2)(4 beta R + beta + sigma^2)
                                 - 2R - 1 ) }

    computed in log space; requires beta > 0.
    """
    if not p.beta > 0.0:
        raise DomainError("the almost-sure threshold requires beta > 0")
    if not R > 0.0:
        raise DomainError("R must be positive")
    s2 = p.sigma ** 2
    core = 4.0 * p.beta * R + p.beta + s2
    log1 = 1.0 - math.log(p.beta) + math.log(core)
    log2 = math.log(s2 / p.beta) + math.exp(2.0 * R) / s2 * core - 2.0 * R - 1.0
    log_val = max(log1, log2)
    overflow = log_val > 700.0
    return R0Threshold(log_value=log_val,
                       value=None if overflow else math.exp(log_val),
                       overflow=overflow)


def verify_a5_function(p: ModelParams, R: float,
                       grid: Optional[VerifyGrid] = None) -> A5Report:
    """Evaluate L V0 for V0 = exp(-r) + exp(-y) over the strip complement
    {0 < y < 2R or 0 < r < 2R}, truncated at l_over_r * R.

    With beta > 0 and lambda0 at or above the almost-sure threshold the
    maximum is negative; small lambda0 produces positive spots.
    """
    if not p.beta > 0.0:
        raise DomainError("requires beta > 0")
    if not R > 0.0:
        raise DomainError("R must be positive")
    gr = grid or VerifyGrid()
    g = np.geomspace(R * gr.floor, R * gr.l_over_r, gr.n)
    rr, yy = np.meshgrid(g, g)
    keep = (rr < 2.0 * R) | (yy < 2.0 * R)
    r = rr[keep]
    y = yy[keep]
    vals = generator_apply(a5_field(), State(r=r, y=y, t=0.0), p)
    i = int(np.argmax(vals))
    return A5Report(max_value=float(vals[i]),
                    argmax=(float(r[i]), float(y[i])), n_points=len(vals))
