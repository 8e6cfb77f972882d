"""Command-line driver: ``verify``, ``run``, ``sweep`` and ``regen-goldens``.

Exit codes: 0 when every asserted tolerance passes, 1 when a check or run
fails, 2 for usage or configuration errors, 3 for a sweep in which some
sub-runs crashed (the others are still written).
"""
import argparse
import concurrent.futures as cf
import copy
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_PARTIAL = 0, 1, 2, 3

# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

DEFAULT_CONFIG = {
    "t0": -0.01,
    "t_end": 0.0,
    "C0": 0.5,
    "direction": "forward",
    "dt": None,
    "stepping": "s_uniform",
    "scheme": "suzuki",
    "decompose_stride": 20,
    "newton_tol": 1e-10,
    "delta": 0.1,
    "collapse_floor": 4.0,
    "max_steps": 10 ** 7,
    "grid.m": 256,
    "grid.L": None,
    "grid.box_over_lambda0": 16.0,
    "k.family": "quadratic_gaussian",
    "k.k1": 1.0,
    "k.k2": 1.0,
    "k.rough_modulus": 1.0,
    "lyapunov.enabled": False,
    "lyapunov.A": None,
    "lyapunov.delta0": None,
    "output.snapshot_every": 0,
}

_TYPES = {
    "t0": float, "t_end": float, "C0": float, "direction": str, "dt": float, "stepping": str,
    "scheme": str, "decompose_stride": int, "newton_tol": float, "delta": float,
    "collapse_floor": float, "max_steps": int, "grid.m": int, "grid.L": float,
    "grid.box_over_lambda0": float, "k.family": str, "k.k1": float, "k.k2": float,
    "k.rough_modulus": float, "lyapunov.enabled": bool, "lyapunov.A": float,
    "lyapunov.delta0": float, "output.snapshot_every": int,
}


class ConfigError(ValueError):
    """A configuration failed validation; ``problems`` lists every issue."""

    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


def flatten(mapping, prefix=""):
    """Nested dicts to dotted keys (``{"grid": {"m": 8}}`` -> ``{"grid.m": 8}``)."""
    out = {}
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def validate_config(raw):
    """Merge ``raw`` (nested or dotted) over the defaults and check every field.

    Raises
    ------
    ConfigError
        With one message per problem.
    """
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    flat = flatten(raw)
    problems = [f"unknown key '{key}'" for key in flat if key not in DEFAULT_CONFIG]
    cfg = dict(DEFAULT_CONFIG)
    for key, value in flat.items():
        if key not in DEFAULT_CONFIG:
            continue
        want = _TYPES[key]
        if value is None:
            cfg[key] = None
            continue
        if want is bool and not isinstance(value, bool):
            problems.append(f"'{key}' must be true or false")
        elif want is int and (isinstance(value, bool) or not isinstance(value, int)):
            problems.append(f"'{key}' must be an integer")
        elif want is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
            problems.append(f"'{key}' must be a number")
        elif want is str and not isinstance(value, str):
            problems.append(f"'{key}' must be a string")
        else:
            cfg[key] = float(value) if want is float else value
    checks = [
        (cfg["t0"] is not None and cfg["t0"] < 0, "'t0' must be negative"),
        (cfg["C0"] is not None and cfg["C0"] > 0, "'C0' must be positive"),
        (cfg["direction"] in ("forward", "backward"), "'direction' must be forward or backward"),
        (cfg["stepping"] in ("s_uniform", "fixed"), "'stepping' must be s_uniform or fixed"),
        (cfg["scheme"] in ("strang", "yoshida", "suzuki"), "'scheme' must be strang, yoshida or suzuki"),
        (cfg["dt"] is None or cfg["dt"] > 0, "'dt' must be positive"),
        (isinstance(cfg["decompose_stride"], int) and cfg["decompose_stride"] >= 1, "'decompose_stride' must be >= 1"),
        (cfg["collapse_floor"] is not None and cfg["collapse_floor"] >= 4, "'collapse_floor' must be >= 4 grid cells"),
        (isinstance(cfg["grid.m"], int) and cfg["grid.m"] >= 16, "'grid.m' must be an integer >= 16"),
        (cfg["grid.L"] is None or cfg["grid.L"] > 0, "'grid.L' must be positive"),
        (cfg["grid.box_over_lambda0"] is None or cfg["grid.box_over_lambda0"] > 0, "'grid.box_over_lambda0' must be positive"),
    ]
    problems += [msg for ok, msg in checks if not ok]
    if cfg["direction"] == "forward" and cfg["t_end"] is not None and cfg["t0"] is not None:
        if not cfg["t_end"] > cfg["t0"]:
            problems.append("forward runs need t_end > t0")
    if cfg["direction"] == "backward" and cfg["t_end"] is not None and cfg["t0"] is not None:
        if not cfg["t_end"] < cfg["t0"]:
            problems.append("backward runs need t_end < t0")
    if not problems:
        try:
            build_sim_config(cfg)
        except (ValueError, TypeError) as exc:
            problems.append(str(exc))
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file {path} not found"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file {path} is not valid JSON: {exc}"]) from None
    return validate_config(raw)


def build_sim_config(cfg, fields_dir=None):
    """Translate a validated flat config into a :class:`~blowuplab.nlssim.SimConfig`."""
    from .coefficient import CoefficientK
    from .nlssim import SimConfig
    from .numerics import CartesianGrid

    lam0 = -cfg["t0"] / cfg["C0"]
    L = cfg["grid.L"] if cfg["grid.L"] is not None else cfg["grid.box_over_lambda0"] * lam0
    grid = CartesianGrid(L, cfg["grid.m"])
    if cfg["k.family"] == "constant":
        k = CoefficientK("constant", 0.0, 0.0)
    else:
        k = CoefficientK(cfg["k.family"], cfg["k.k1"], cfg["k.k2"], rough_modulus=cfg["k.rough_modulus"])
    t_end = cfg["t_end"]
    if t_end is None:
        t_end = 0.0 if cfg["direction"] == "forward" else 10.0 * cfg["t0"]
    return SimConfig(
        grid=grid,
        k=k,
        t0=cfg["t0"],
        t_end=t_end,
        dt=cfg["dt"],
        direction=cfg["direction"],
        decompose_stride=cfg["decompose_stride"],
        newton_tol=cfg["newton_tol"],
        delta=cfg["delta"],
        collapse_floor=cfg["collapse_floor"],
        C0=cfg["C0"],
        stepping=cfg["stepping"],
        scheme=cfg["scheme"],
        lyapunov=cfg["lyapunov.enabled"],
        lyapunov_A=cfg["lyapunov.A"],
        fields_dir=fields_dir,
        snapshot_every=cfg["output.snapshot_every"],
        max_steps=cfg["max_steps"],
    )


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config_path: str
    seed: int
    outputs: list = field(default_factory=list)
    status: str = "pass"
    wall_time: float = 0.0

    def write(self, out_dir):
        """Append this manifest as one JSON line to ``out_dir/manifest.jsonl``."""
        missing = [p for p in self.outputs if not os.path.exists(p)]
        if missing and self.status == "pass":
            raise RuntimeError(f"manifest lists missing outputs {missing}")
        path = os.path.join(out_dir, "manifest.jsonl")
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(asdict(self), sort_keys=True) + "\n")
        return path


def _threads():
    value = os.environ.get("BLOWUPLAB_THREADS")
    if value is None:
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise ConfigError([f"BLOWUPLAB_THREADS must be an integer, got {value!r}"]) from None
    if n < 1:
        raise ConfigError(["BLOWUPLAB_THREADS must be >= 1"])
    return n


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_verify(suite="all", seed=0, out_dir=None, goldens=None, samples=100, stream=None):
    """Run one verification suite (or all); return the exit code."""
    from .suites import SUITES, format_table, run_suite

    stream = stream or sys.stdout
    names = SUITES if suite == "all" else (suite,)
    if suite != "all" and suite not in SUITES:
        print(f"unknown suite {suite!r}; choose from {', '.join(SUITES + ('all',))}", file=sys.stderr)
        return EXIT_USAGE
    start = time.time()
    all_checks = []
    try:
        for name in names:
            checks = run_suite(name, seed=seed, golden_path=goldens, samples=samples)
            print(f"== suite {name}", file=stream)
            print(format_table(checks), file=stream)
            all_checks += [(name, c) for c in checks]
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    failed = [(n, c) for n, c in all_checks if not c.passed]
    if failed:
        first = failed[0][1]
        print(f"FAIL: {len(failed)} check(s) failed; first: [{failed[0][0]}] {first.name}", file=stream)
    else:
        print(f"PASS: {len(all_checks)} checks", file=stream)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        table = os.path.join(out_dir, f"verify_{suite}.csv")
        with open(table, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["suite", "check", "value", "relation", "bound", "passed", "expected_fail"])
            for n, c in all_checks:
                w.writerow([n, c.name, repr(float(c.value)), c.relation, repr(float(c.bound)), c.passed, c.expected_fail])
        RunManifest(f"verify --suite {suite}", "", seed, [table], "fail" if failed else "pass",
                    time.time() - start).write(out_dir)
    return EXIT_FAIL if failed else EXIT_OK


def _run_one(cfg, out_dir, fields=False):
    """Execute one run; write CSV and SVG; return (summary dict, outputs)."""
    from . import nlssim
    from .lyapunov import append_lyapunov_columns
    from .svg import line_plot

    os.makedirs(out_dir, exist_ok=True)
    fields_dir = os.path.join(out_dir, "fields") if cfg["output.snapshot_every"] else None
    sim = build_sim_config(cfg, fields_dir)
    traj, _ = nlssim.run(sim)
    if sim.lyapunov and len(traj) >= 3:
        append_lyapunov_columns(traj, cfg["lyapunov.delta0"])
    csv_path = os.path.join(out_dir, "trajectory.csv")
    traj.to_csv(csv_path)
    t = traj.column("t")
    lam = traj.column("lambda")
    svg_path = line_plot(
        os.path.join(out_dir, "trajectory.svg"),
        t,
        [
            ("lambda(t)", [("lambda", lam)]),
            ("b(t) / lambda(t)", [("b/lambda", traj.column("b") / lam)]),
            ("||eps||_H1 / lambda(t)", [("eps_h1/lambda", traj.column("eps_h1") / lam)]),
        ],
    )
    summary = {"status": traj.status, "samples": len(traj)}
    boot = traj.column("boot_all")
    summary["boot_all"] = bool(np.all(boot == 1.0))
    if len(traj) >= 3 and sim.direction == "forward":
        fit = nlssim.blowup_rate_fit(traj)
        summary["C0_fit"] = fit["C0_fit"]
        summary["rate_rel_error"] = abs(fit["C0_fit"] - sim.C0) / sim.C0
        try:
            summary["eps_exponent"] = nlssim.measured_eps_exponent(traj)
        except ValueError:
            summary["eps_exponent"] = math.nan
    if sim.lyapunov and len(traj) >= 3:
        summary["min_dI1_dt"] = float(np.nanmin(traj.column("dI1_dt")))
    outputs = [csv_path, svg_path]
    if fields_dir and os.path.isdir(fields_dir):
        outputs += sorted(os.path.join(fields_dir, f) for f in os.listdir(fields_dir))
    return summary, outputs


def _run_ok(summary):
    return not summary["status"].startswith("decomposition failed")


def cmd_run(config_path, out_dir, seed=0, stream=None):
    stream = stream or sys.stdout
    start = time.time()
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print("configuration errors:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_USAGE
    summary, outputs = _run_one(cfg, out_dir)
    for key, value in summary.items():
        print(f"{key}: {value}", file=stream)
    ok = _run_ok(summary)
    RunManifest("run", os.path.abspath(config_path), seed, outputs, "pass" if ok else "fail",
                time.time() - start).write(out_dir)
    return EXIT_OK if ok else EXIT_FAIL


SWEEP_AXES = ("t0", "k1", "P_scale")


def _sweep_worker(args):
    cfg, out_dir = args
    try:
        summary, outputs = _run_one(cfg, out_dir)
        return summary, outputs, None
    except Exception as exc:  # a crashed sub-run must not take the sweep down
        return None, [], f"{type(exc).__name__}: {exc}"


def cmd_sweep(config_path, axis, values, out_dir, seed=0, stream=None):
    """One sub-run per value of ``axis``; a combined ``summary.csv`` with fitted slopes."""
    from .suites import loglog_slope, profile_sweep

    stream = stream or sys.stdout
    start = time.time()
    if axis not in SWEEP_AXES:
        print(f"unknown axis {axis!r}; choose from {', '.join(SWEEP_AXES)}", file=sys.stderr)
        return EXIT_USAGE
    if len(values) < 3:
        print("a sweep needs at least 3 values (--values a,b,c)", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print("configuration errors:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_USAGE
    os.makedirs(out_dir, exist_ok=True)
    summary_path = os.path.join(out_dir, "summary.csv")
    rows = []
    outputs = [summary_path]
    crashed = 0
    failed = 0
    if axis == "P_scale":
        from .numerics import CartesianGrid

        family = cfg["k.family"] if cfg["k.family"] != "constant" else "quadratic_gaussian"
        prof = profile_sweep(family, CartesianGrid(16.0, cfg["grid.m"]), tuple(values), cfg["k.k1"], cfg["k.k2"])
        size = [r["size"] for r in prof]
        slopes = {
            "mass_defect_slope": loglog_slope(size, [r["mass_defect"] for r in prof]),
            "energy_residual_slope": loglog_slope(size, [r["energy_residual"] for r in prof]),
            "psi_sup_slope": loglog_slope(size, [r["psi_sup"] for r in prof]),
        }
        header = ["P_scale", "size", "mass_defect", "energy_residual", "psi_sup", "psi_weighted_sup"]
        for v, r in zip(values, prof):
            rows.append([v, r["size"], r["mass_defect"], r["energy_residual"], r["psi_sup"], r["psi_weighted_sup"]])
        if slopes["mass_defect_slope"] < 3.7:
            failed += 1
    else:
        jobs = []
        for v in values:
            sub = copy.deepcopy(cfg)
            sub["t0" if axis == "t0" else "k.k1"] = float(v)
            try:
                sub = validate_config(sub)
            except ConfigError as exc:
                print(f"value {v}: " + "; ".join(exc.problems), file=sys.stderr)
                return EXIT_USAGE
            jobs.append((sub, os.path.join(out_dir, f"{axis}_{v:+.6g}")))
        workers = min(_threads(), len(jobs))
        if workers > 1:
            with cf.ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_sweep_worker, jobs))
        else:
            results = [_sweep_worker(j) for j in jobs]
        header = [axis, "status", "samples", "boot_all", "C0_fit", "rate_rel_error", "eps_exponent", "min_dI1_dt", "passed"]
        slopes = {}
        for v, (summary, outs, err) in zip(values, results):
            if summary is None:
                crashed += 1
                rows.append([v, f"crashed: {err}"] + [""] * (len(header) - 2))
                continue
            outputs += outs
            rate_ok = summary.get("rate_rel_error", math.inf) <= 0.10
            ok = _run_ok(summary) and rate_ok
            failed += 0 if ok else 1
            rows.append([
                v, summary["status"], summary["samples"], summary["boot_all"],
                summary.get("C0_fit", math.nan), summary.get("rate_rel_error", math.nan),
                summary.get("eps_exponent", math.nan), summary.get("min_dI1_dt", math.nan), ok,
            ])
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
        for name, value in slopes.items():
            w.writerow([f"# {name}", repr(float(value))])
    for row in rows:
        print(", ".join(str(x) for x in row), file=stream)
    for name, value in slopes.items():
        print(f"{name}: {value:.4f}", file=stream)
    status = "partial" if crashed else ("fail" if failed else "pass")
    RunManifest(f"sweep --axis {axis}", os.path.abspath(config_path), seed, outputs, status,
                time.time() - start).write(out_dir)
    if crashed:
        return EXIT_PARTIAL
    return EXIT_FAIL if failed else EXIT_OK


def cmd_regen_goldens(path=None, stream=None):
    from .groundstate import golden_path, shooting_oracle, write_goldens

    stream = stream or sys.stdout
    values = shooting_oracle()
    target = path or str(golden_path())
    write_goldens(values, target)
    for key, value in values.items():
        print(f"{key}={float(value):.17g}", file=stream)
    print(f"wrote {target}", file=stream)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parse_values(text):
    if text is None or not text.strip():
        raise argparse.ArgumentTypeError("empty value list")
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"values must be numbers: {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="blowuplab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run invariant suites and print residuals vs tolerances")
    v.add_argument("--suite", default="all", help="spectral, profile, energy, ode, lyapunov or all")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None, help="directory for the residual table and manifest")
    v.add_argument("--goldens", default=None, help="golden constants file (default: packaged)")
    v.add_argument("--samples", type=int, default=100, help="random samples for the lyapunov suite")

    r = sub.add_parser("run", help="one PDE run from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("sweep", help="sub-runs along one axis with a combined summary")
    s.add_argument("--config", required=True)
    s.add_argument("--axis", required=True, choices=SWEEP_AXES)
    s.add_argument("--values", required=True, type=_parse_values)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("regen-goldens", help="recompute golden constants with the shooting oracle")
    g.add_argument("--out", default=None, help="target file (default: packaged goldens)")
    return parser


def _attach_values(argv):
    # "--values -0.01,-0.02" would otherwise be read as an unknown option
    out = []
    i = 0
    while i < len(argv):
        if argv[i] == "--values" and i + 1 < len(argv):
            out.append("--values=" + argv[i + 1])
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None):
    parser = build_parser()
    argv = _attach_values(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "verify":
            return cmd_verify(args.suite, args.seed, args.out, args.goldens, args.samples)
        if args.command == "run":
            return cmd_run(args.config, args.out, args.seed)
        if args.command == "sweep":
            return cmd_sweep(args.config, args.axis, args.values, args.out, args.seed)
        return cmd_regen_goldens(args.out)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
