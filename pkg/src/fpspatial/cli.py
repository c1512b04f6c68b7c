"""``fpspatial`` command line: simulate fields, estimate densities, run experiments.

Exit codes: 0 success, 2 config or input error, 3 I/O error, 4 a check failed
under ``--assert``, 5 the mixing profile fails the hypotheses of the requested
experiment (and ``--override-hypotheses`` was not given).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

from .config import (
    ConfigError,
    apply_overrides,
    get,
    load_config,
    parse_bin_width,
    parse_density,
    parse_experiment,
    parse_model,
    parse_profile,
    parse_region,
)
from .estimator import bin_counts, evaluation_grid, histogram_csv, polygon_grid_csv
from .experiments import (
    HypothesisRefused,
    run_clt_experiment,
    run_schedule_sweep,
    run_variance_experiment,
)
from .fields import sample
from .grid import BinGrid
from .mixing import THEOREMS, CannotCertifyError, NonSummableError, hypothesis_check, lemma1_diagnostic

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_ASSERT, EXIT_REFUSED = 0, 2, 3, 4, 5

_EXPERIMENT_KEYS = """\
  model.kind          "iid" or "m_dependent_gaussian_ma"
  model.marginal      {"density": name, "params": [...]}; names: uniform,
                      triangular, normal, normal_mixture
  model.m, model.d    range and dimension of the moving average
  model.weights       flat list of (2m+1)^d weights or "ones" (default)
  region              {"rectangle": [n1, ..., nd], "origin": [...]} or
                      {"d": d, "sites": [[...], ...]} or
                      {"ball": {"center": [...], "radius": r}} or
                      {"random_connected": {"d": d, "size": n, "seed": s}}
  eval_points         list of distinct points with f(x) > 0
  replicates          number of Monte Carlo replicates (>= 2)
  master_seed         unsigned 64-bit seed
  workers             worker processes (default 1; --threads overrides)
  mixing_profile      optional declared mixing profile (default: the
                      generator's certified profile)
  override_hypotheses run even if the mixing hypotheses fail (default false)
"""

_PROFILE_KEYS = """\
  profile             {"kind": "alpha"|"rho", "tau": "inf"|int,
                       "decay": {"type": "finite_range", "m0": m0} or
                                {"type": "polynomial", "theta": t,
                                 "scale": c, "cap": cap} or
                                {"type": "table", "values": [...],
                                 "tail": {"type": "polynomial",
                                          "theta": t}}}
  d                   lattice dimension
"""

HELP = {
    "simulate": ("Draw one field sample and write it as CSV.", f"""\
config keys:
  model, region       as for the experiment subcommands (see below)
  seed                unsigned 64-bit seed (master_seed is accepted too)
  replicate           replicate index (default 0)
  outputs.field       output file name (default field.csv)

{_EXPERIMENT_KEYS}"""),
    "estimate": ("Histogram and frequency polygon of observations in a CSV file.", """\
config keys:
  data                CSV file with the observations; relative paths are
                      resolved against the config file's directory
  column              column name when the file has a header (default
                      "value", else the last column)
  bin_width           positive bin width
  points_per_bin      evaluation-grid resolution (default 10)
  normalized          also emit the normalized estimator (default false);
                      needs "density"
  density             {"density": name, "params": [...]}: the true density,
                      available only in simulation mode
  outputs.histogram   default histogram.csv
  outputs.polygon     default polygon.csv
"""),
    "variance": ("Monte Carlo check of the scaled variance limit.", f"""\
config keys:
{_EXPERIMENT_KEYS}  bin_width           positive number or {{"rule": "power", "gamma": g}}
  checks.scaled_variance  accepted band, default [0.9, 1.1]
  outputs.report      default variance_report.json
  outputs.statistics  default variance_statistics.csv
"""),
    "clt": ("Monte Carlo check of joint asymptotic normality.", f"""\
config keys:
{_EXPERIMENT_KEYS}  bin_width           positive number or {{"rule": "power", "gamma": g}}
  checks.ks_alpha     KS level, default 0.01
  checks.max_offdiag  bound on |off-diagonal covariance|, default 0.1
  outputs.report      default clt_report.json
  outputs.statistics  default clt_statistics.csv
"""),
    "sweep": ("Scaled variance along growing regions with b = N^-gamma.", f"""\
config keys:
{_EXPERIMENT_KEYS}  sweep.sizes         rectangle shapes or cube side lengths, increasing
  sweep.gamma         exponent in (0, 1)
  checks.scaled_variance  band each row must meet under --assert,
                      default [0.9, 1.1]
  checks.require_approaching_one  also require |1 - scaled variance| to
                      shrink strictly (default false)
  outputs.table       default sweep.csv
  outputs.report      default sweep.json
"""),
    "lemma-mn": ("Tabulate the blocking sequence over a bin-width schedule.", f"""\
config keys:
{_PROFILE_KEYS}  b_schedule          strictly decreasing bin widths in (0, 1)
  variant             "sqrt" (default) or "plain"
  checks.strict       require strict trends under --assert (default false)
  outputs.table       default lemma_mn.csv
  outputs.report      default lemma_mn.json
"""),
    "check-hypotheses": ("Certify the mixing-rate summability conditions.", f"""\
config keys:
{_PROFILE_KEYS}  theorems            list among {sorted(THEOREMS)}; default: every one
                      compatible with the profile
  outputs.report      default hypotheses.json
"""),
}


class InputError(ValueError):
    pass


def _out_name(cfg: dict, key: str, default: str) -> str:
    outputs = get(cfg, "outputs", "", dict, {})
    return get(outputs, key, "outputs", str, default)


def _write_all(out_dir: Path, files: dict[str, str]) -> None:
    """Write every file or none: stage to temporaries, then rename."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            target = out_dir / name
            fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            staged.append((tmp, target))
        for tmp, target in staged:
            os.replace(tmp, target)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# --------------------------------------------------------------------------
# subcommands: each returns (files, checks_passed)


def cmd_simulate(cfg: dict, args) -> tuple[dict, bool]:
    model = parse_model(get(cfg, "model", "", dict))
    region = parse_region(get(cfg, "region", "", dict))
    if "seed" in cfg:
        seed = get(cfg, "seed", "", int)
    else:
        seed = get(cfg, "master_seed", "", int)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", "seed must be a 64-bit unsigned integer")
    replicate = get(cfg, "replicate", "", int, 0)
    if model.dimension is not None and model.dimension != region.dimension:
        raise ConfigError("region", "region dimension differs from model.d")
    name = _out_name(cfg, "field", "field.csv")
    return {name: sample(model, region, seed, replicate).to_csv()}, True


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_observations(path: Path, column: str | None) -> list[float]:
    """Numeric column of a CSV file; raises InputError naming the line number.

    A first row with any non-numeric cell is a header.  Without a header the
    last column is used.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(n, row) for n, row in enumerate(csv.reader(fh), start=1)
                if row and any(c.strip() for c in row)]
    if not rows:
        raise InputError("input contains no observations")
    first_line, first = rows[0]
    if not all(_is_number(c) for c in first):
        header = [c.strip() for c in first]
        want = column or ("value" if "value" in header else header[-1])
        if want not in header:
            raise InputError(f"line {first_line}: no column named {want!r}")
        col = header.index(want)
        rows = rows[1:]
    elif column is not None:
        raise InputError(f"column {column!r} requested but the file has no header")
    else:
        col = len(first) - 1
    values: list[float] = []
    for lineno, row in rows:
        if col >= len(row):
            raise InputError(f"line {lineno}: missing value column")
        try:
            v = float(row[col])
        except ValueError:
            raise InputError(f"line {lineno}: non-numeric value {row[col]!r}") from None
        if not math.isfinite(v):
            raise InputError(f"line {lineno}: non-finite value {row[col]!r}")
        values.append(v)
    if not values:
        raise InputError("input contains no observations")
    return values


def cmd_estimate(cfg: dict, args) -> tuple[dict, bool]:
    data = Path(get(cfg, "data", "", str))
    if not data.is_absolute():
        data = Path(args.config).resolve().parent / data
    b, gamma = parse_bin_width(get(cfg, "bin_width", ""))
    if b is None:
        raise ConfigError("bin_width", "estimate needs a numeric bin width")
    ppb = get(cfg, "points_per_bin", "", int, 10)
    if ppb < 1:
        raise ConfigError("points_per_bin", "must be >= 1")
    column = get(cfg, "column", "", str, None)
    normalized = get(cfg, "normalized", "", bool, False)
    density = None
    if "density" in cfg:
        density = parse_density(get(cfg, "density", "", dict), "density")
    if normalized and density is None:
        raise ConfigError("normalized", "simulation mode required: the normalized estimator needs "
                          "the true density under key 'density'")
    hist_name = _out_name(cfg, "histogram", "histogram.csv")
    poly_name = _out_name(cfg, "polygon", "polygon.csv")
    values = read_observations(data, column)
    counts = bin_counts(values, BinGrid(b))
    xs = evaluation_grid(counts, ppb)
    return {
        hist_name: histogram_csv(counts),
        poly_name: polygon_grid_csv(counts, xs, density if normalized else None),
    }, True


def _experiment(cfg: dict, args, runner, kind: str) -> tuple[dict, bool]:
    exp = parse_experiment(cfg, workers=args.threads, override_hypotheses=args.override_hypotheses)
    report_name = _out_name(cfg, "report", f"{kind}_report.json")
    stats_name = _out_name(cfg, "statistics", f"{kind}_statistics.csv")
    report = runner(exp)
    files = {report_name: _dump(report.to_json()), stats_name: report.statistics_csv()}
    return files, report.passed


def cmd_variance(cfg, args):
    return _experiment(cfg, args, run_variance_experiment, "variance")


def cmd_clt(cfg, args):
    return _experiment(cfg, args, run_clt_experiment, "clt")


def cmd_sweep(cfg: dict, args) -> tuple[dict, bool]:
    sw = get(cfg, "sweep", "", dict)
    gamma = get(sw, "gamma", "sweep", float)
    if not 0.0 < gamma < 1.0:
        raise ConfigError("sweep.gamma", "gamma must lie strictly between 0 and 1")
    sizes = get(sw, "sizes", "sweep", list)
    if not sizes:
        raise ConfigError("sweep.sizes", "need at least one size")
    cfg = dict(cfg)
    cfg.setdefault("bin_width", {"rule": "power", "gamma": gamma})
    exp = parse_experiment(cfg, workers=args.threads, override_hypotheses=args.override_hypotheses)
    checks = get(cfg, "checks", "", dict, {})
    lo, hi = checks.get("scaled_variance", (0.9, 1.1))
    need_trend = bool(checks.get("require_approaching_one", False))
    try:
        table = run_schedule_sweep(exp, sizes, gamma)
    except ValueError as exc:
        raise ConfigError("sweep.sizes", str(exc)) from None
    passed = all(lo <= r["scaled_variance"] <= hi for r in table.rows)
    if need_trend:
        passed = passed and table.approaching_one
    report = table.to_json()
    report["checks"] = {"scaled_variance": [lo, hi], "require_approaching_one": need_trend,
                        "passed": passed}
    return {_out_name(cfg, "table", "sweep.csv"): table.to_csv(),
            _out_name(cfg, "report", "sweep.json"): _dump(report)}, passed


def cmd_lemma_mn(cfg: dict, args) -> tuple[dict, bool]:
    profile = parse_profile(get(cfg, "profile", "", dict))
    d = get(cfg, "d", "", int)
    if d < 1:
        raise ConfigError("d", "dimension must be >= 1")
    schedule = get(cfg, "b_schedule", "", list)
    variant = get(cfg, "variant", "", str, "sqrt")
    strict = bool(get(cfg, "checks", "", dict, {}).get("strict", False))
    try:
        diag = lemma1_diagnostic(profile, d, schedule, variant)
    except (NonSummableError, CannotCertifyError) as exc:
        raise ConfigError("profile", str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError("b_schedule", str(exc)) from None
    flag = "strict" if strict else "monotone"
    passed = all(t[flag] for t in diag.trends.values())
    report = {"d": d, "variant": variant, "profile": profile.to_json(), "rows": diag.table(),
              "trends": diag.trends, "passed": passed}
    return {_out_name(cfg, "table", "lemma_mn.csv"): diag.to_csv(),
            _out_name(cfg, "report", "lemma_mn.json"): _dump(report)}, passed


def cmd_check_hypotheses(cfg: dict, args) -> tuple[dict, bool]:
    profile = parse_profile(get(cfg, "profile", "", dict))
    d = get(cfg, "d", "", int)
    if d < 1:
        raise ConfigError("d", "dimension must be >= 1")
    default = [t for t, (kind, need_inf, _) in THEOREMS.items()
               if kind == profile.kind and (profile.tau == math.inf or not need_inf)]
    theorems = get(cfg, "theorems", "", list, default)
    results = {}
    for i, t in enumerate(theorems):
        try:
            results[t] = hypothesis_check(profile, d, t).to_json()
        except CannotCertifyError as exc:
            raise ConfigError("profile.decay", str(exc)) from None
        except ValueError as exc:
            raise ConfigError(f"theorems[{i}]", str(exc)) from None
    passed = all(r["holds"] for r in results.values())
    report = {"d": d, "profile": profile.to_json(), "results": results, "passed": passed}
    return {_out_name(cfg, "report", "hypotheses.json"): _dump(report)}, passed


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "variance": cmd_variance,
    "clt": cmd_clt,
    "sweep": cmd_sweep,
    "lemma-mn": cmd_lemma_mn,
    "check-hypotheses": cmd_check_hypotheses,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpspatial", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, (summary, keys) in HELP.items():
        p = sub.add_parser(name, help=summary, description=summary, epilog=keys,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("config", help="JSON config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. --set replicates=200 or "
                            "--set model.marginal.params=[0,1]; repeatable")
        p.add_argument("--output-dir", "-o", default=".", help="directory for outputs (default .)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes; does not change results")
        p.add_argument("--assert", dest="do_assert", action="store_true",
                       help="exit 4 if any reported check fails")
        p.add_argument("--override-hypotheses", action="store_true",
                       help="run even if the mixing hypotheses fail (a warning is recorded)")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    err = sys.stderr
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=err)
        return EXIT_CONFIG
    try:
        cfg = apply_overrides(load_config(args.config), args.overrides)
        files, passed = COMMANDS[args.command](cfg, args)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_CONFIG
    except HypothesisRefused as exc:
        print(f"refused: {exc}; pass --override-hypotheses to run anyway", file=err)
        return EXIT_REFUSED
    except OSError as exc:
        print(f"I/O error: {exc}", file=err)
        return EXIT_IO
    try:
        _write_all(Path(args.output_dir), files)
    except OSError as exc:
        print(f"I/O error: {exc}", file=err)
        return EXIT_IO
    for name in files:
        print(Path(args.output_dir) / name)
    if args.do_assert and not passed:
        print("assertion failed: at least one reported check did not pass", file=err)
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
