"""Command-line front end.

    qghjm simulate|region|verify|ode|price --config FILE --out DIR
          [--seed N] [--threads N]

All inputs come from a JSON config file with strict key checking; outputs
are plot-ready CSV files plus JSON summaries that embed the resolved
configuration. Exit codes: 0 success, 2 configuration error, 3 analytic
condition unsatisfied or verification failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from typing import Optional

import numpy as np

from . import explosion_criteria as xc
from . import ode_limit, pricing
from . import sde_engine as eng
from .errors import ConfigError, GammaOutOfRange, QGHJMError
from .model_core import ForwardCurve, ModelParams

_TOP_KEYS = {"model", "curve", "sim", "simulate", "region", "verify", "ode",
             "price"}
_SECTION_KEYS = {
    "simulate": {"checkpoints"},
    "region": {"gammas", "sigma"},
    "verify": {"condition", "c3_scale", "grid_n", "R"},
    "ode": {"horizon", "tol", "blowup_threshold"},
    "price": {"T", "delta", "discount_check"},
}


def _fail_config(msg: str) -> "SystemExit":
    print(f"config error: {msg}", file=sys.stderr)
    return SystemExit(2)


def _load_config(path: str, command: str, needs: set[str]) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise _fail_config(f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise _fail_config(f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    if not isinstance(raw, dict):
        raise _fail_config("top-level config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise _fail_config(f"unknown top-level key(s): {sorted(unknown)}")
    missing = needs - set(raw)
    if missing:
        raise _fail_config(f"{command} requires section(s): {sorted(missing)}")
    sect = raw.get(command)
    if sect is not None:
        bad = set(sect) - _SECTION_KEYS.get(command, set())
        if bad:
            raise _fail_config(
                f"unknown key(s) in '{command}' section: {sorted(bad)}")
    return raw


def _parse_model(raw: dict) -> ModelParams:
    try:
        return ModelParams.from_json(raw["model"])
    except ConfigError as e:
        raise _fail_config(f"model: {e}")


def _parse_curve(raw: dict) -> ForwardCurve:
    try:
        return ForwardCurve.from_json(raw["curve"])
    except ConfigError as e:
        raise _fail_config(f"curve: {e}")


def _parse_sim(raw: dict, seed_override: Optional[int]) -> eng.SimConfig:
    try:
        cfg = eng.SimConfig.from_json(raw["sim"])
    except ConfigError as e:
        raise _fail_config(f"sim: {e}")
    if seed_override is not None:
        cfg = replace(cfg, seed=seed_override)
    return cfg


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    raw = _load_config(args.config, "simulate", {"model", "curve", "sim"})
    p = _parse_model(raw)
    curve = _parse_curve(raw)
    cfg = _parse_sim(raw, args.seed)
    opts = raw.get("simulate") or {}
    checkpoints = opts.get("checkpoints")
    if checkpoints is None:
        checkpoints = list(np.linspace(cfg.horizon / 10.0, cfg.horizon, 10))
    os.makedirs(args.out, exist_ok=True)

    batch = eng.simulate_batch(p, curve, cfg, record=True, threads=args.threads)
    with open(os.path.join(args.out, "paths.csv"), "w") as fh:
        eng.write_paths_csv(batch, fh)
    with open(os.path.join(args.out, "explosions.csv"), "w") as fh:
        eng.write_explosions_csv(batch, fh)
    n = len(batch.path_index)
    summary = {
        "config": {"model": p.to_json(), "curve": curve.to_json(),
                   "sim": cfg.to_json()},
        "n_paths": n,
        "n_exploded": int(batch.exploded.sum()),
        "explosion_fraction": float(batch.exploded.mean()),
        "checkpoints": [
            {"T": float(T),
             "fraction": float(np.count_nonzero(batch.tau_hat <= T) / n)}
            for T in checkpoints
        ],
    }
    _write_json(os.path.join(args.out, "summary.json"), summary)
    return 0


def cmd_region(args) -> int:
    raw = _load_config(args.config, "region", {"region"})
    opts = raw["region"]
    gammas = opts.get("gammas")
    sig = opts.get("sigma")
    if not gammas or sig is None:
        raise _fail_config("region requires 'gammas' and 'sigma'")
    if isinstance(sig, dict):
        bad = set(sig) - {"start", "stop", "num"}
        if bad:
            raise _fail_config(f"unknown sigma key(s): {sorted(bad)}")
        sigma_grid = np.linspace(float(sig["start"]), float(sig["stop"]),
                                 int(sig["num"]))
    else:
        sigma_grid = np.asarray([float(s) for s in sig])
    if np.any(sigma_grid <= 0.0):
        raise _fail_config("sigma grid must be positive")
    for g in gammas:
        if not 0.5 < float(g) <= 1.0:
            raise _fail_config(f"gamma must be in (1/2, 1], got {g}")
    os.makedirs(args.out, exist_ok=True)
    for g in gammas:
        curve = xc.region_curve(float(g), sigma_grid)
        name = f"region_gamma_{float(g):g}.csv"
        with open(os.path.join(args.out, name), "w") as fh:
            curve.write_csv(fh)
    return 0


def cmd_verify(args) -> int:
    raw = _load_config(args.config, "verify", {"model"})
    p = _parse_model(raw)
    opts = raw.get("verify") or {}
    which = opts.get("condition", "II")
    c3_scale = float(args.c3_scale if args.c3_scale is not None
                     else opts.get("c3_scale", 1.0))
    grid = xc.VerifyGrid(n=int(opts.get("grid_n", 200)))
    os.makedirs(args.out, exist_ok=True)
    out: dict = {"model": p.to_json(), "condition_requested": which,
                 "c3_scale": c3_scale}

    try:
        report = xc.check_condition(p, which)
    except GammaOutOfRange as e:
        out["outcome"] = f"non-explosive regime: {e}"
        _write_json(os.path.join(args.out, "verify.json"), out)
        print(f"non-explosive regime (gamma = {p.gamma} <= 1/2)")
        return 3
    out["condition"] = report.to_json()
    if not report.satisfied:
        out["outcome"] = "condition unsatisfied"
        _write_json(os.path.join(args.out, "verify.json"), out)
        print(f"condition {which} unsatisfied "
              f"(sup value {report.sup_value:.6g})")
        return 3

    spec = xc.build_lyapunov(p, report)
    if c3_scale != 1.0:
        spec = xc.scale_c3(spec, c3_scale)
    d = spec.deltas
    R = spec.R
    k1, k2 = xc.kappas(R, p, d)
    wedge = xc.wedge_feasible_slopes(R, p, d)
    K2 = spec.c1 - spec.c2 * (1 + R) ** (-d.delta1) \
        - spec.c3 * (1 + R) ** (-d.delta2)
    K3 = spec.c1 - spec.c2 * (1 + 2 * R) ** (-d.delta1) \
        - spec.c3 * (1 + 2 * R) ** (-d.delta2)
    rep = xc.verify_generator_inequality(spec, p, grid)
    thr = xc.as_explosion_r0_threshold(R, p) if p.beta > 0 else None

    out["spec"] = spec.to_json()
    out["constants"] = {
        "K0": xc.k0(spec), "K1": spec.c1, "K2": K2, "K3": K3, "C": spec.C,
        "kappa1": k1, "kappa2": k2,
        "wedge": {"kind": wedge.kind, "slope_lo": wedge.slope_lo,
                  "slope_hi": wedge.slope_hi, "divider": wedge.divider,
                  "ineq1": wedge.ineq1_holds, "ineq2": wedge.ineq2_holds},
    }
    out["verification"] = rep.to_json()
    if thr is not None:
        out["r0_threshold"] = {"R": R, "log_value": thr.log_value,
                               "value": thr.value, "overflow": thr.overflow}
        if not thr.overflow:
            p_as = replace(p, lambda0=thr.value)
            a5 = xc.verify_a5_function(p_as, R, grid)
            out["a5"] = {"lambda0_used": thr.value,
                         "max_value": a5.max_value, "negative": a5.negative}
        else:
            out["a5"] = {"skipped": "r0 threshold overflows"}
    _write_json(os.path.join(args.out, "verify.json"), out)
    print(f"min slack {rep.min_slack:.6g}, violations {rep.violations} "
          f"of {rep.n_points}")
    return 0 if rep.violations == 0 else 3


def cmd_ode(args) -> int:
    raw = _load_config(args.config, "ode", {"model", "curve", "ode"})
    p = _parse_model(raw)
    curve = _parse_curve(raw)
    opts = raw["ode"]
    if "horizon" not in opts:
        raise _fail_config("ode requires 'horizon'")
    horizon = float(opts["horizon"])
    tol = float(opts.get("tol", 1e-10))
    blowup = float(opts.get("blowup_threshold", 1e10))
    os.makedirs(args.out, exist_ok=True)
    try:
        res = ode_limit.ode_integrate(p, curve, horizon, tol,
                                      blowup_threshold=blowup)
    except QGHJMError as e:
        raise _fail_config(str(e))
    with open(os.path.join(args.out, "ode_trace.csv"), "w") as fh:
        fh.write("t,r,y\n")
        for t, r, y in res.trace:
            fh.write(f"{t:.17g},{r:.17g},{y:.17g}\n")
    bc = ode_limit.beta_critical(p)
    out = {
        "config": {"model": p.to_json(), "curve": curve.to_json(),
                   "ode": {"horizon": horizon, "tol": tol,
                           "blowup_threshold": blowup}},
        "exploded": res.exploded,
        "t_exp": res.t_exp,
        "terminal": None if res.terminal is None else
            {"r": res.terminal[0], "y": res.terminal[1]},
        "beta_critical": bc,
        "fixed_point_r": ode_limit.fixed_point_r(p) if p.beta >= bc else None,
    }
    _write_json(os.path.join(args.out, "ode.json"), out)
    return 0


def cmd_price(args) -> int:
    raw = _load_config(args.config, "price", {"model", "curve", "sim", "price"})
    p = _parse_model(raw)
    curve = _parse_curve(raw)
    cfg = _parse_sim(raw, args.seed)
    opts = raw["price"]
    if "T" not in opts or "delta" not in opts:
        raise _fail_config("price requires 'T' and 'delta'")
    T = float(opts["T"])
    delta = float(opts["delta"])
    os.makedirs(args.out, exist_ok=True)
    try:
        est = pricing.eurodollar_futures(p, curve, cfg, T, delta,
                                         threads=args.threads)
    except ConfigError as e:
        raise _fail_config(str(e))
    with open(os.path.join(args.out, "futures.csv"), "w") as fh:
        fh.write("T,delta,estimate,std_error,n_exploded,diverged\n")
        fh.write(f"{T:.17g},{delta:.17g},{est.mean:.17g},{est.std_error:.17g},"
                 f"{est.n_exploded},{int(est.diverged)}\n")
    if opts.get("discount_check"):
        chk = pricing.discount_consistency_check(p, curve, cfg, T,
                                                 threads=args.threads)
        target = pricing.DiscountCurve(curve).price(T)
        with open(os.path.join(args.out, "discount.csv"), "w") as fh:
            fh.write("T,delta,estimate,std_error,n_exploded,diverged\n")
            fh.write(f"{T:.17g},0,{chk.mean:.17g},{chk.std_error:.17g},"
                     f"{chk.n_exploded},{int(chk.diverged)}\n")
        _write_json(os.path.join(args.out, "discount.json"),
                    {"T": T, "mc_mean": chk.mean, "curve_price": target,
                     "rel_error": abs(chk.mean / target - 1.0)})
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qghjm",
        description="quasi-Gaussian HJM short-rate model tools")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("region", cmd_region),
                     ("verify", cmd_verify), ("ode", cmd_ode),
                     ("price", cmd_price)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        if name == "verify":
            sp.add_argument("--c3-scale", type=float, default=None,
                            dest="c3_scale")
        sp.set_defaults(fn=fn)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except QGHJMError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
