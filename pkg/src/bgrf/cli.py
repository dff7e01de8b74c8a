"""Command-line surface.

One JSON config drives every subcommand; flags override config values.
Exit codes: 0 pass, 1 semantic/check failure, 2 usage or parse failure.
Outputs are CSV (or JSON lines with --format json) with a leading
metadata comment carrying the config hash and seed, so a rerun with the
same config and seed is byte-identical regardless of --threads.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from .asymptotics import (
    CellBudgetError,
    default_delta_constant,
    riemann_sum_check,
    theorem1_value,
    theorem2_value,
)
from .fields import (
    DomainPair,
    GridSpec,
    NotPositiveDefiniteError,
    Rect,
    build_covariance,
    cholesky_factor,
    sample_blocks,
    write_sample_dump,
)
from .model import (
    BivariateMaternModel,
    UnsupportedModelError,
    check_assumptions,
    cross_corr,
    local_expansion,
)
from .montecarlo import (
    estimates_from_maxima,
    field_maxima,
    maxima_from_dump,
    rate_fit,
)
from .pickands import estimate_H_constant
from .specfun import MaternParams, matern, matern_cosine_integral


class ConfigError(ValueError):
    pass


_DEFAULTS = {
    "domain": {"A1": None, "A2": None, "split_M": None},
    "grid": {"points_per_axis": 100},
    "estimation": {
        "reps": 200_000,
        "seed": 1234,
        "eta": 1.0 / 64.0,
        "T_list": [1.0, 2.0, 4.0, 8.0],
        "alpha": None,
        "H1": None,
        "H2": None,
    },
    "thresholds": {"u": [2.0, 2.4, 2.8, 3.2]},
    "output": {"directory": None, "format": "csv"},
    "verify": {
        "rate_tol": 0.10,
        "riemann_band": 0.10,
        "riemann_u": [20.0, 40.0, 50.0, 80.0],
        "riemann_T": 1.0,
        "riemann_C": None,
    },
}

_MODEL_KEYS = {
    "nu1", "nu2", "nu12", "rho", "a1", "a2", "a12", "sigma1", "sigma2", "dim_N",
}


def _merge_section(name: str, given: dict) -> dict:
    allowed = _DEFAULTS[name]
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    out = {k: v for k, v in allowed.items()}
    out.update(given)
    return out


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - ({"model"} | set(_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "model" not in raw:
        raise ConfigError("config needs a 'model' section")
    model = dict(raw["model"])
    unknown = set(model) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown keys in 'model': {sorted(unknown)}")
    cfg = {"model": model}
    for name in _DEFAULTS:
        cfg[name] = _merge_section(name, raw.get(name, {}))
    return cfg


def build_model(cfg: dict) -> BivariateMaternModel:
    try:
        return BivariateMaternModel(**cfg["model"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model: {exc}") from exc


def _boxes(spec, N: int, label: str) -> tuple[Rect, ...]:
    try:
        out = []
        for box in spec:
            lo = tuple(float(side[0]) for side in box)
            hi = tuple(float(side[1]) for side in box)
            out.append(Rect(lo, hi))
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid {label}: {exc}") from exc
    for r in out:
        if r.dim != N:
            raise ConfigError(f"{label} boxes must have dim_N = {N} sides")
    return tuple(out)


def build_domain(cfg: dict, m: BivariateMaternModel) -> DomainPair:
    dom = cfg["domain"]
    N = m.dim_N
    unit = (Rect((0.0,) * N, (1.0,) * N),)
    A1 = _boxes(dom["A1"], N, "domain.A1") if dom["A1"] is not None else unit
    A2 = _boxes(dom["A2"], N, "domain.A2") if dom["A2"] is not None else unit
    split = dom["split_M"]
    if split is not None and not isinstance(split, int):
        raise ConfigError("domain.split_M must be an integer or null")
    try:
        return DomainPair(A1=A1, A2=A2, dim_N=N, split_M=split)
    except ValueError as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc


def config_hash(cfg: dict) -> str:
    # the hash covers the scientific sections only, not output routing
    payload = {k: cfg[k] for k in ("model", "domain", "grid", "estimation",
                                   "thresholds", "verify")}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class Writer:
    def __init__(self, cfg: dict, args, command: str, columns: list[str]):
        self.columns = columns
        self.fmt = args.format or cfg["output"]["format"]
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"unknown output format {self.fmt!r}")
        out_dir = (
            args.out_dir
            or cfg["output"]["directory"]
            or os.environ.get("BGRF_OUT_DIR")
            or "bgrf-out"
        )
        os.makedirs(out_dir, exist_ok=True)
        ext = "csv" if self.fmt == "csv" else "jsonl"
        self.path = os.path.join(out_dir, f"{command}.{ext}")
        self.meta = {"config_sha256": config_hash(cfg), "seed": _seed(cfg, args)}
        self.rows: list[list] = []

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError("row width mismatch")
        self.rows.append(list(values))

    def flush(self) -> str:
        if self.fmt == "csv":
            lines = [
                "# " + " ".join(f"{k}={v}" for k, v in self.meta.items()),
                ",".join(self.columns),
            ]
            lines += [",".join(_fmt(v) for v in row) for row in self.rows]
        else:
            lines = [json.dumps({"_meta": self.meta}, sort_keys=True)]
            lines += [
                json.dumps(dict(zip(self.columns, row)), sort_keys=True)
                for row in self.rows
            ]
        text = "\n".join(lines) + "\n"
        with open(self.path, "w") as fh:
            fh.write(text)
        sys.stdout.write(text)
        return self.path


def _seed(cfg: dict, args) -> int:
    return args.seed if args.seed is not None else cfg["estimation"]["seed"]


def _reps(cfg: dict, args) -> int:
    return args.reps if args.reps is not None else cfg["estimation"]["reps"]


def _alphas(cfg: dict, m: BivariateMaternModel) -> list[float]:
    if cfg["estimation"]["alpha"] is not None:
        return [float(cfg["estimation"]["alpha"])]
    seen = []
    for a in (2.0 * m.nu1, 2.0 * m.nu2):
        if a not in seen:
            seen.append(a)
    return seen


def _pickands_constants(cfg, m, args) -> tuple[float, float]:
    """User-supplied H values, or constant estimates at the config's
    estimation settings."""
    est = cfg["estimation"]
    H = {}
    for label, alpha in (("H1", 2.0 * m.nu1), ("H2", 2.0 * m.nu2)):
        if est[label] is not None:
            H[label] = float(est[label])
        else:
            r = estimate_H_constant(
                alpha, [float(t) for t in est["T_list"]], float(est["eta"]),
                _reps(cfg, args), _seed(cfg, args), args.threads,
            )
            H[label] = r.value
    return H["H1"], H["H2"]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_validate(cfg, args) -> int:
    m = build_model(cfg)
    report = check_assumptions(m)
    for line in report.lines():
        print(line)
    bound = report["validity"].witness
    print(f"rho^2 = {m.rho ** 2:.6g}, validity bound = {bound:.6g}")
    return 0 if report.passed else 1


def cmd_matern_eval(cfg, args) -> int:
    m = build_model(cfg)
    w = Writer(cfg, args, "matern-eval", ["nu", "a", "h", "matern", "cosine_integral", "abs_diff"])
    hs = np.linspace(args.h_min, args.h_max, args.h_points)
    for nu, a in ((m.nu1, m.a1), (m.nu2, m.a2), (m.nu12, m.a12)):
        p = MaternParams(nu, a)
        for h in hs:
            direct = matern(float(h), p)
            quad = matern_cosine_integral(float(h), p)
            w.add(nu, a, float(h), direct, quad, abs(direct - quad))
    w.flush()
    return 0


def cmd_expansion(cfg, args) -> int:
    m = build_model(cfg)
    e = local_expansion(m)
    w = Writer(cfg, args, "expansion",
               ["alpha1", "alpha2", "c1", "c2", "rho", "r2_zero", "dim_N"])
    w.add(e.alpha1, e.alpha2, e.c1, e.c2, e.rho, e.r2_zero, e.dim_N)
    w.flush()
    return 0


def cmd_simulate(cfg, args) -> int:
    m = build_model(cfg)
    g = GridSpec(build_domain(cfg, m), cfg["grid"]["points_per_axis"])
    reps, seed = _reps(cfg, args), _seed(cfg, args)
    L = cholesky_factor(build_covariance(m, g))
    rows = np.empty((reps, g.n1 + g.n2))
    for start, mat in sample_blocks(L, seed, reps, args.threads):
        rows[start : start + mat.shape[1]] = mat.T
    out_dir = (
        args.out_dir or cfg["output"]["directory"]
        or os.environ.get("BGRF_OUT_DIR") or "bgrf-out"
    )
    os.makedirs(out_dir, exist_ok=True)
    dump = os.path.join(out_dir, "samples.bgrf")
    write_sample_dump(dump, rows)
    w = Writer(cfg, args, "simulate", ["replicates", "nodes1", "nodes2", "seed", "dump"])
    w.add(reps, g.n1, g.n2, seed, dump)
    w.flush()
    return 0


def cmd_pickands(cfg, args) -> int:
    m = build_model(cfg)
    est = cfg["estimation"]
    w = Writer(cfg, args, "pickands", ["alpha", "T", "eta", "reps", "value", "std_error"])
    reps, seed = _reps(cfg, args), _seed(cfg, args)
    for alpha in _alphas(cfg, m):
        r = estimate_H_constant(
            alpha, [float(t) for t in est["T_list"]], float(est["eta"]),
            reps, seed, args.threads,
        )
        for T, value, se in r.sequence:
            w.add(alpha, T, float(est["eta"]), reps, value, se)
        if r.warning:
            print(f"warning: alpha={alpha:g}: {r.warning}", file=sys.stderr)
    w.flush()
    return 0


def cmd_theorem(cfg, args, which: str) -> int:
    m = build_model(cfg)
    d = build_domain(cfg, m)
    e = local_expansion(m)
    mes = d.mes_intersection()
    # routing consistency between the domain pair and the requested theorem
    if which == "theorem1" and mes <= 0.0:
        print(
            "error: theorem1 needs mes_N(A1 and A2) > 0; this domain pair "
            "routes to theorem2",
            file=sys.stderr,
        )
        return 1
    if which == "theorem2" and d.split_M is None:
        print("error: theorem2 needs domain.split_M", file=sys.stderr)
        return 1
    H1, H2 = _pickands_constants(cfg, m, args)
    us = [float(u) for u in (args.u or cfg["thresholds"]["u"])]
    w = Writer(cfg, args, which,
               ["u", "value", "log_value", "exp_rate", "u_power", "constant"])
    for u in us:
        if which == "theorem1":
            r = theorem1_value(e, mes, H1, H2, u)
        else:
            r = theorem2_value(e, d.split_M, d.mes_shared_face(), H1, H2, u)
        w.add(u, r.value, r.log_value, r.exp_rate, r.u_power, r.constant)
    w.flush()
    return 0


def cmd_riemann_check(cfg, args) -> int:
    m = build_model(cfg)
    d = build_domain(cfg, m)
    e = local_expansion(m)
    ver = cfg["verify"]
    C = args.C if args.C is not None else ver["riemann_C"]
    if C is None:
        C = default_delta_constant(e)
    T = args.T if args.T is not None else ver["riemann_T"]
    us = [float(u) for u in (args.u or ver["riemann_u"])]
    w = Writer(cfg, args, "riemann-check",
               ["u", "h_sum", "limit_value", "ratio", "n_pairs", "regime", "cells", "delta"])
    for u in us:
        for mode in ("intersect", "subset") if args.both_cells else ("intersect",):
            chk = riemann_sum_check(e, d, lambda h: cross_corr(m, h), T, C, u, mode)
            w.add(u, chk.h_sum, chk.limit_value, chk.ratio, chk.n_pairs,
                  chk.regime, chk.cells, chk.delta)
    w.flush()
    return 0


def cmd_mc_excursion(cfg, args) -> int:
    m = build_model(cfg)
    g = GridSpec(build_domain(cfg, m), cfg["grid"]["points_per_axis"])
    reps, seed = _reps(cfg, args), _seed(cfg, args)
    us = [float(u) for u in (args.u or cfg["thresholds"]["u"])]
    if args.samples:
        max1, max2 = maxima_from_dump(args.samples, g.n1)
    else:
        max1, max2 = field_maxima(m, g, reps, seed, args.threads)
    ests = estimates_from_maxima(max1, max2, us, seed)
    w = Writer(cfg, args, "mc-excursion",
               ["u", "p_hat", "ci_low", "ci_high", "hits", "reps"])
    w.meta["samples"] = "shared-across-u"  # thresholds reuse one sample set
    code = 0
    for est in ests:
        w.add(est.u, est.p_hat, est.ci_low, est.ci_high, est.hits, est.replicates)
        if est.warning:
            print(f"warning: u={est.u:g}: {est.warning}", file=sys.stderr)
            code = 1
    w.flush()
    return code


def cmd_verify(cfg, args) -> int:
    m = build_model(cfg)
    d = build_domain(cfg, m)
    e = local_expansion(m)
    g = GridSpec(d, cfg["grid"]["points_per_axis"])
    ver = cfg["verify"]
    reps, seed = _reps(cfg, args), _seed(cfg, args)
    if reps < 1000:
        print(f"verify FAILED: reps = {reps} below the Monte Carlo floor of 1000")
        return 1
    H1, H2 = _pickands_constants(cfg, m, args)
    us = [float(u) for u in (args.u or cfg["thresholds"]["u"])]

    mes = d.mes_intersection()
    max1, max2 = field_maxima(m, g, reps, seed, args.threads)
    ests = estimates_from_maxima(max1, max2, us, seed)
    theorem = []
    for u in us:
        if mes > 0.0:
            theorem.append(theorem1_value(e, mes, H1, H2, u))
        else:
            theorem.append(theorem2_value(e, d.split_M, d.mes_shared_face(), H1, H2, u))

    w = Writer(cfg, args, "verify",
               ["u", "p_hat", "hits", "theorem_value", "ratio"])
    w.meta["samples"] = "shared-across-u"
    for u, est, th in zip(us, ests, theorem):
        ratio = est.p_hat / th.value if th.value > 0 else math.nan
        w.add(u, est.p_hat, est.hits, th.value, ratio)

    failures = []
    target = -1.0 / (1.0 + e.rho)
    try:
        fit = rate_fit(list(zip(us, ests)))
        rate_ok = abs(fit.slope - target) <= ver["rate_tol"] * abs(target)
        print(
            f"rate: slope = {fit.slope:.4f} (se {fit.slope_se:.4f}), "
            f"target {target:.4f}, tol {ver['rate_tol']:.0%}: "
            + ("PASS" if rate_ok else "FAIL")
        )
        if not rate_ok:
            failures.append("rate")
    except ValueError as exc:
        print(f"rate: FAIL ({exc})")
        failures.append("rate")

    C = ver["riemann_C"]
    if C is None:
        C = default_delta_constant(e)
    band = ver["riemann_band"]
    for u in ver["riemann_u"]:
        chk = riemann_sum_check(e, d, lambda h: cross_corr(m, h), ver["riemann_T"], C, float(u))
        ok = abs(chk.ratio - 1.0) <= band
        print(
            f"riemann u={u:g}: ratio = {chk.ratio:.4f}, band {band:.0%}: "
            + ("PASS" if ok else "FAIL")
        )
        if not ok:
            failures.append(f"riemann(u={u:g})")
    w.flush()
    if failures:
        print("verify FAILED: " + ", ".join(failures))
        return 1
    print("verify PASSED")
    return 0


# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="path to the JSON run config")
    p.add_argument("--seed", type=int, default=None, help="override estimation.seed")
    p.add_argument("--reps", type=int, default=None, help="override estimation.reps")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads (never changes outputs)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--out-dir", default=None,
                   help="output directory (default $BGRF_OUT_DIR or ./bgrf-out)")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="bgrf",
        description="Bivariate Matern Gaussian fields: validity checks, "
        "Pickands estimation, tail asymptotics, and Monte Carlo verification.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("validate", "expansion", "simulate", "pickands"):
        _add_common(sub.add_parser(name))

    p = sub.add_parser("matern-eval")
    _add_common(p)
    p.add_argument("--h-min", type=float, default=0.0)
    p.add_argument("--h-max", type=float, default=5.0)
    p.add_argument("--h-points", type=int, default=26)

    for name in ("theorem1", "theorem2"):
        p = sub.add_parser(name)
        _add_common(p)
        p.add_argument("--u", type=float, nargs="+", default=None)

    p = sub.add_parser("riemann-check")
    _add_common(p)
    p.add_argument("--u", type=float, nargs="+", default=None)
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--C", type=float, default=None)
    p.add_argument("--both-cells", action="store_true",
                   help="also sum over the subset cell family")

    p = sub.add_parser("mc-excursion")
    _add_common(p)
    p.add_argument("--u", type=float, nargs="+", default=None)
    p.add_argument("--samples", default=None,
                   help="reuse a binary sample dump instead of sampling")

    p = sub.add_parser("verify")
    _add_common(p)
    p.add_argument("--u", type=float, nargs="+", default=None)

    args = ap.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    handlers = {
        "validate": cmd_validate,
        "matern-eval": cmd_matern_eval,
        "expansion": cmd_expansion,
        "simulate": cmd_simulate,
        "pickands": cmd_pickands,
        "theorem1": lambda c, a: cmd_theorem(c, a, "theorem1"),
        "theorem2": lambda c, a: cmd_theorem(c, a, "theorem2"),
        "riemann-check": cmd_riemann_check,
        "mc-excursion": cmd_mc_excursion,
        "verify": cmd_verify,
    }
    try:
        return handlers[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (
        UnsupportedModelError,
        NotPositiveDefiniteError,
        CellBudgetError,
        ValueError,
    ) as exc:
        # model/domain parsed fine but the requested computation is
        # semantically impossible with it
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
