"""Command-line front end: curve computation, example reproduction,
simulation and verification, with CSV/JSON output.

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import examples as ex
from .core import LN2
from .ensembles import CurvePoint, EnsembleSpec, d1bar_cc, d1bar_expurgated, \
    d1bar_iid, d1bar_superposition
from .errors import BudgetError, ConfigError, ConvergenceError
from .general_dual import gaussian_sign_model, mismatched_d1
from .montecarlo import SimConfig, check_type_coverage, run_trials, run_trials_continuous
from .verification import run_suite

CSV_HEADER = ["rate_bits", "d0", "d1", "d1_min", "d1_max", "ensemble",
              "tie_rule", "source", "n", "trials", "seed"]
DEFAULT_SEED = 1729
EXAMPLES = ("binary", "parallel", "ternary", "gaussian")


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write_rows(rows, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r.get(k)) for k in CSV_HEADER])
    text = buf.getvalue()
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _point_row(pt: CurvePoint, tie_rule="pessimistic", source="analytic"):
    return {"rate_bits": pt.rate_bits, "d0": pt.d0_value, "d1": pt.d1_value,
            "d1_min": pt.tie_bracket[0], "d1_max": pt.tie_bracket[1],
            "ensemble": pt.ensemble, "tie_rule": tie_rule, "source": source}


def _parse_rates(text: str, units: str):
    try:
        parts = [float(p) for p in text.split(":")]
    except (AttributeError, ValueError) as err:
        raise ConfigError(f"bad --rates {text!r}, expected start:stop:step") from err
    if len(parts) != 3:
        raise ConfigError(f"bad --rates {text!r}, expected start:stop:step")
    start, stop, step = parts
    if step <= 0:
        raise ConfigError("rate step must be positive")
    grid = np.arange(start, stop + step / 2, step)
    if units == "nats":
        grid = grid / LN2
    grid = [float(r) for r in grid if r > 0]
    if not grid:
        raise ConfigError("rate grid is empty")
    return grid


def _problem(cfg):
    name = cfg.get("example")
    if name == "binary":
        return ex.binary_problem()
    if name == "parallel":
        return ex.parallel_problem(cfg.get("lambda_weight") or 0.3)
    if name == "ternary":
        return ex.ternary_problem()
    if name == "gaussian":
        return {"sigma2": cfg.get("sigma2") or 1.0, "tau2": cfg.get("tau2") or 1.0}
    raise ConfigError(f"--example must be one of {EXAMPLES}, got {name!r}")


def cmd_curve(cfg) -> int:
    name = cfg["example"]
    ensemble = cfg["ensemble"]
    tie = cfg.get("tie") or "pessimistic"
    prob = _problem(cfg)
    rows = []
    if name == "gaussian":
        if ensemble not in ("iid", "matched"):
            raise ConfigError("the gaussian example supports --ensemble iid or matched")
        lam_grid = cfg.get("lambda_grid") or list(ex.DEFAULT_GAUSSIAN_LAMBDAS)
        curve = ex.gaussian_curve(lam_grid, prob["sigma2"], prob["tau2"])
        if ensemble == "iid":
            for pt in curve:
                rows.append({"rate_bits": pt.rate_bits, "d0": pt.d0_value,
                             "d1": pt.d1_value, "d1_min": pt.d1_value,
                             "d1_max": pt.d1_value, "ensemble": "iid-gaussian",
                             "tie_rule": tie, "source": "analytic"})
        else:
            for pt in ex.gaussian_matched_points(curve):
                rows.append(_point_row(pt, tie))
        _write_rows(rows, cfg.get("out"))
        return 0

    rates = _parse_rates(cfg["rates"], cfg.get("units") or "bits")
    for r in rates:
        rows.append(_curve_point_row(name, ensemble, prob, r, tie, cfg))
    _write_rows(rows, cfg.get("out"))
    return 0


def _curve_point_row(name, ensemble, prob, rate, tie, cfg):
    if ensemble == "matched":
        if name == "binary":
            d = ex.binary_curve(rate, "matched")
        elif name == "parallel":
            d = ex.parallel_curve(rate, prob["lambda_weight"], "matched")
        elif name == "ternary":
            d = ex.ternary_matched(rate).d1
        else:
            raise ConfigError(f"no matched closed form for example {name!r}")
        return {"rate_bits": rate, "d0": d, "d1": d, "d1_min": d, "d1_max": d,
                "ensemble": "matched", "tie_rule": tie, "source": "analytic"}
    if name == "binary" and ensemble == "iid" and tie == "uniform":
        d = ex.binary_curve(rate, "iid", tie="uniform")
        return {"rate_bits": rate, "d0": "", "d1": d, "d1_min": d, "d1_max": d,
                "ensemble": "iid", "tie_rule": "uniform", "source": "analytic"}
    if name == "parallel" and ensemble == "independent":
        d = ex.parallel_curve(rate, prob["lambda_weight"], "independent")
        return {"rate_bits": rate, "d0": "", "d1": d, "d1_min": d, "d1_max": d,
                "ensemble": "independent", "tie_rule": tie, "source": "analytic"}
    if ensemble == "cc":
        pt = d1bar_cc(prob["px"], prob["q"], prob["d0"], prob["d1"], rate)
    elif ensemble == "iid":
        pt = d1bar_iid(prob["px"], prob["q"], prob["d0"], prob["d1"], rate)
    elif ensemble == "superposition":
        if "q_uxhat" not in prob:
            raise ConfigError(f"example {name!r} has no two-layer auxiliary distribution")
        r0 = cfg.get("r0")
        if r0 is None:
            r0 = ex.ternary_matched(rate).r0_bits if name == "ternary" else rate / 2
        if not (0 <= r0 <= rate):
            raise ConfigError("--r0 must lie in [0, rate]")
        pt = d1bar_superposition(prob["px"], prob["q_uxhat"], prob["d0"], prob["d1"],
                                 r0, rate - r0)
    elif ensemble == "expurgated":
        if "psi" not in prob:
            raise ConfigError(f"example {name!r} has no parallel-coding structure")
        pt = d1bar_expurgated(prob["px"], prob["q1"], prob["q2"], prob["psi"],
                              prob["d0"], prob["d1"], rate / 2, rate / 2)
    else:
        raise ConfigError(f"unknown ensemble {ensemble!r}")
    return _point_row(pt, tie)


def cmd_simulate(cfg) -> int:
    name = cfg["example"]
    ensemble = cfg["ensemble"]
    prob = _problem(cfg)
    units = cfg.get("units") or "bits"
    rate = float(cfg["rate"])
    if units == "nats":
        rate = rate / LN2
    config = SimConfig(
        n=int(cfg["n"]), rate_bits=rate, trials=int(cfg["trials"]),
        seed=int(cfg["seed"]), tie_rule=cfg.get("tie") or "pessimistic",
        delta=float(cfg.get("delta") or 0.05),
        fresh_codebook=not cfg.get("fixed_codebook", False),
        method=cfg.get("method") or "auto")

    if name == "gaussian":
        model = gaussian_sign_model(prob["sigma2"], prob["tau2"])
        target = cfg.get("d1_target")
        if target is None:
            target = mismatched_d1(model, rate * LN2).d1_value
        stats = run_trials_continuous(model, config, float(target))
    else:
        spec = _sim_spec(name, ensemble, prob, rate, cfg)
        target = cfg.get("d1_target")
        if target is None:
            target = _analytic_target(name, ensemble, prob, rate, config.tie_rule)
        stats = run_trials(prob["px"], spec, config, prob["d0"], prob["d1"], float(target))

    payload = json.dumps(stats.to_dict(), indent=2, sort_keys=True)
    out = cfg.get("out")
    if out in (None, "-"):
        sys.stdout.write(payload + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(payload + "\n")
    csv_path = cfg.get("csv")
    if csv_path:
        row = {"rate_bits": rate, "d0": stats.mean_d0, "d1": stats.mean_d1,
               "d1_min": stats.d1_quantiles[0], "d1_max": stats.d1_quantiles[2],
               "ensemble": stats.ensemble, "tie_rule": stats.tie_rule,
               "source": "simulation", "n": stats.n, "trials": stats.trials,
               "seed": stats.seed}
        _write_rows([row], csv_path)
    return 0


def _sim_spec(name, ensemble, prob, rate, cfg):
    if ensemble == "cc":
        return EnsembleSpec("cc", q=prob["q"])
    if ensemble == "iid":
        return EnsembleSpec("iid", q=prob["q"])
    if ensemble == "superposition":
        if "q_uxhat" not in prob:
            raise ConfigError(f"example {name!r} has no two-layer auxiliary distribution")
        r0 = cfg.get("r0")
        if r0 is None:
            r0 = rate / 2
        return EnsembleSpec("superposition", q_uxhat=prob["q_uxhat"],
                            rate_split=(float(r0), float(rate - r0)))
    if ensemble == "expurgated":
        if "psi" not in prob:
            raise ConfigError(f"example {name!r} has no parallel-coding structure")
        return EnsembleSpec("expurgated", q1=prob["q1"], q2=prob["q2"], psi=prob["psi"],
                            rate_split=(rate / 2, rate / 2))
    raise ConfigError(f"unknown ensemble {ensemble!r} for simulation")


def _analytic_target(name, ensemble, prob, rate, tie_rule):
    tie = "uniform" if tie_rule in ("uniform", "first_index") else "pessimistic"
    if name == "binary" and ensemble in ("cc", "iid", "matched"):
        return ex.binary_curve(rate, "cc" if ensemble == "matched" else ensemble, tie)
    if name == "parallel" and ensemble == "expurgated":
        return ex.parallel_curve(rate, prob["lambda_weight"], "expurgated")
    if name == "ternary" and ensemble == "cc":
        return ex.ternary_cc(rate)
    if ensemble == "cc":
        return d1bar_cc(prob["px"], prob["q"], prob["d0"], prob["d1"], rate).d1_value
    if ensemble == "iid":
        return d1bar_iid(prob["px"], prob["q"], prob["d0"], prob["d1"], rate).d1_value
    if ensemble == "superposition":
        pt = ex.ternary_matched(rate) if name == "ternary" else None
        if pt is not None:
            return pt.d1
    if ensemble == "expurgated":
        return d1bar_expurgated(prob["px"], prob["q1"], prob["q2"], prob["psi"],
                                prob["d0"], prob["d1"], rate / 2, rate / 2).d1_value
    raise ConfigError("no analytic target available; pass --d1-target")


def cmd_coverage(cfg) -> int:
    """Joint-type occurrence report for the binary example."""
    prob = ex.binary_problem()
    config = SimConfig(n=int(cfg["n"]), rate_bits=float(cfg["rate"]),
                       trials=int(cfg["trials"]), seed=int(cfg["seed"]),
                       delta=float(cfg.get("delta") or 0.2))
    spec = EnsembleSpec("cc", q=prob["q"])
    report = check_type_coverage(prob["px"], spec, config, prob["d0"])
    payload = {
        "clean_trial_fraction": report.clean_trial_fraction,
        "mean_coverage": report.mean_coverage,
        "violations_per_trial": list(report.violations_per_trial),
        "coverage_per_trial": list(report.coverage_per_trial),
        "n": report.n, "rate_bits": report.rate_bits,
        "delta_bits": report.delta_bits, "trials": report.trials, "seed": report.seed,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    out = cfg.get("out")
    if out in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    return 0


def cmd_verify(cfg) -> int:
    checks = run_suite(cfg["suite"])
    ok = True
    for c in checks:
        print(c.line())
        ok = ok and c.passed
    print(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
    return 0 if ok else 1


def _build_parser():
    p = argparse.ArgumentParser(prog="mrd",
                                description="Mismatched distortion-rate bounds and simulation")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with defaults for this command")
        sp.add_argument("--emit-config", help="write the resolved configuration as JSON")
        sp.add_argument("--out", help="output path ('-' for stdout)")
        sp.add_argument("--units", choices=["bits", "nats"], help="unit of rate inputs")
        sp.add_argument("--seed", type=int, help=f"rng seed (default {DEFAULT_SEED})")

    c = sub.add_parser("curve", help="analytic distortion-rate points")
    common(c)
    c.add_argument("--example", choices=EXAMPLES, required=False)
    c.add_argument("--ensemble",
                   choices=["cc", "iid", "superposition", "expurgated", "matched",
                            "independent"])
    c.add_argument("--rates", help="bit-rate grid start:stop:step")
    c.add_argument("--r0", type=float, help="cloud-layer rate for superposition")
    c.add_argument("--lambda-grid", dest="lambda_grid",
                   help="comma-separated negative tilts for the gaussian example")
    c.add_argument("--lambda-weight", dest="lambda_weight", type=float,
                   help="branch weight of the parallel example encoding metric")
    c.add_argument("--sigma2", type=float)
    c.add_argument("--tau2", type=float)
    c.add_argument("--tie", choices=["pessimistic", "uniform"])

    s = sub.add_parser("simulate", help="random-codebook simulation")
    common(s)
    s.add_argument("--example", choices=EXAMPLES, required=False)
    s.add_argument("--ensemble",
                   choices=["cc", "iid", "superposition", "expurgated"])
    s.add_argument("--n", type=int)
    s.add_argument("--rate", type=float)
    s.add_argument("--r0", type=float)
    s.add_argument("--trials", type=int)
    s.add_argument("--tie", choices=["pessimistic", "uniform", "first_index"])
    s.add_argument("--delta", type=float)
    s.add_argument("--d1-target", dest="d1_target", type=float)
    s.add_argument("--method", choices=["auto", "literal", "types"])
    s.add_argument("--fixed-codebook", dest="fixed_codebook", action="store_true")
    s.add_argument("--lambda-weight", dest="lambda_weight", type=float)
    s.add_argument("--sigma2", type=float)
    s.add_argument("--tau2", type=float)
    s.add_argument("--csv", help="also append a summary row to this CSV file")

    t = sub.add_parser("coverage", help="joint-type occurrence checks (binary example)")
    common(t)
    t.add_argument("--n", type=int)
    t.add_argument("--rate", type=float)
    t.add_argument("--trials", type=int)
    t.add_argument("--delta", type=float)

    v = sub.add_parser("verify", help="run self-check suites")
    v.add_argument("suite", choices=["oracles", "reductions", "examples", "all"])
    return p


_REQUIRED = {
    "curve": ("example",),
    "simulate": ("example", "n", "rate", "trials"),
    "coverage": ("n", "rate", "trials"),
}


def _resolve_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read --config {args.config!r}: {err}") from err
        if not isinstance(loaded, dict):
            raise ConfigError("--config must hold a JSON object")
        cfg.update(loaded)
    for key, val in vars(args).items():
        if key in ("config", "emit_config") or val is None:
            continue
        cfg[key] = val
    cfg.setdefault("command", args.command)
    cfg.setdefault("seed", DEFAULT_SEED)
    if args.command in ("curve", "simulate"):
        cfg.setdefault("ensemble", "cc")
    for key in _REQUIRED.get(args.command, ()):
        if cfg.get(key) is None:
            raise ConfigError(f"missing required option --{key.replace('_', '-')}")
    if args.command == "curve" and cfg.get("example") != "gaussian" and not cfg.get("rates"):
        raise ConfigError("curve needs --rates start:stop:step")
    lam = cfg.get("lambda_grid")
    if isinstance(lam, str):
        try:
            cfg["lambda_grid"] = [float(x) for x in lam.split(",") if x.strip()]
        except ValueError as err:
            raise ConfigError(f"bad --lambda-grid {lam!r}") from err
    if getattr(args, "emit_config", None):
        with open(args.emit_config, "w") as fh:
            json.dump(cfg, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "curve":
            return cmd_curve(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "coverage":
            return cmd_coverage(cfg)
        return cmd_verify({"suite": args.suite})
    except (ConfigError, BudgetError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ConvergenceError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
