"""Command line front end: ``ma {solve, eigen, check, oracle, repro}``.

Configuration is a TOML file; command line flags override its keys and the
``MA_SEED`` environment variable overrides the configured seed (a ``--seed``
flag still wins).  Schema::

    seed = 41445
    out = "run"
    domain = { kind = "interval", a = -1, b = 1 }   # or ball / polygon
    mesh = { n = 801, grading = 2.0 }               # grading: interval only
    measure = { kind = "hardy", s = 2.0 }

    [solve]
    backend = "pl1d"            # pl1d | radial | op2d
    tol = 1e-10
    m_schedule = [2, 4, 8]      # or "2:256" (doubling) or "2,4,8"
    p = 0.5                     # optional: solve mu_u = |u|^p nu

    [eigen]
    m_schedule = "2:256"
    tol = 1e-10
    max_k = 5000

    [check]
    suite = "blocki"
    trials = 200

    [oracle]
    name = "hardy_family"
    params = { alpha = 0.25 }

Exit status: 0 all good, 1 a check or criterion failed, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import math
import os
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import serialize
from .convex import ConvexFn, cone, quadratic
from .geometry import Ball, Interval, domain_from_dict, graded_interval_mesh, grid_mesh, interval_mesh, radial_mesh
from .ledger import ConsistencyError, IterationLimitError
from .measures import INFINITE, MeasureSpec, boundary_profile, weighted_mass

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
BACKENDS = ("pl1d", "radial", "op2d")
DEFAULT_SEED = 0xA1E5


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


# --------------------------------------------------------------------------
# parsing helpers


def parse_schedule(text, field="m_schedule") -> list:
    """``"2:256"`` (doubling), ``"2,4,8"`` or a list; must be strictly increasing positive integers."""
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        vals = list(text)
    else:
        text = str(text).strip()
        try:
            if ":" in text:
                lo, hi = (int(t) for t in text.split(":"))
                if lo < 1 or hi < lo:
                    raise ConfigError(field, f"bad range {text!r}")
                vals = []
                m = lo
                while m <= hi:
                    vals.append(m)
                    m *= 2
            else:
                vals = [int(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise ConfigError(field, f"cannot parse {text!r}") from None
    if not vals:
        raise ConfigError(field, "schedule is empty")
    if any(not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1 for v in vals):
        raise ConfigError(field, "schedule entries must be positive integers")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(field, "schedule must be strictly increasing")
    return [int(v) for v in vals]


def _number(text):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_measure_flag(text: str) -> dict:
    """``"hardy:s=2"`` -> ``{"kind": "hardy", "s": 2}``."""
    kind, _, rest = text.partition(":")
    out = {"kind": kind.strip()}
    for item in filter(None, (t.strip() for t in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ConfigError("measure", f"expected key=value, got {item!r}")
        out[key.strip()] = _number(val.strip())
    return out


def _positive(cfg, section, key):
    val = cfg.get(section, {}).get(key)
    if val is None:
        return
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not val > 0:
        raise ConfigError(f"{section}.{key}", f"must be > 0, got {val!r}")


# --------------------------------------------------------------------------
# configuration


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        # the message carries "(at line L, column C)"
        raise ConfigError("config", f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None


def effective_config(args, env=None) -> dict:
    """Merge the config file, the environment and the flags (flags win)."""
    env = os.environ if env is None else env
    cfg = copy.deepcopy(load_config(args.config))
    seed = cfg.get("seed", DEFAULT_SEED)
    if env.get("MA_SEED"):
        try:
            seed = int(env["MA_SEED"], 0)
        except ValueError:
            raise ConfigError("MA_SEED", f"not an integer: {env['MA_SEED']!r}") from None
    if args.seed is not None:
        seed = args.seed
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", f"must be a nonnegative integer, got {seed!r}")
    cfg["seed"] = seed
    if args.out is not None:
        cfg["out"] = args.out
    cfg.setdefault("out", "ma_output")
    if getattr(args, "mesh", None) is not None:
        cfg.setdefault("mesh", {})["n"] = args.mesh
    if getattr(args, "measure", None) is not None:
        cfg["measure"] = parse_measure_flag(args.measure)
    sec = cfg.setdefault(args.command, {})
    if not isinstance(sec, dict):
        raise ConfigError(args.command, "must be a table")
    for key in ("backend", "tol", "p", "max_k", "suite", "trials", "name"):
        val = getattr(args, key, None)
        if val is not None:
            sec[key] = val
    if getattr(args, "m_schedule", None) is not None:
        sec["m_schedule"] = args.m_schedule
    if args.command == "oracle":
        params = sec.setdefault("params", {})
        for key in ("alpha", "n", "k", "a", "eps", "m"):
            val = getattr(args, key, None)
            if val is not None:
                params[key] = val
    validate(cfg, args.command)
    return cfg


def validate(cfg, command):
    for key in ("tol", "p", "max_k", "trials"):
        _positive(cfg, command, key)
    sec = cfg.get(command, {})
    if "m_schedule" in sec:
        sec["m_schedule"] = parse_schedule(sec["m_schedule"], f"{command}.m_schedule")
    if "backend" in sec and sec["backend"] not in BACKENDS:
        raise ConfigError(f"{command}.backend", f"unknown backend {sec['backend']!r}; choose from {BACKENDS}")
    if "domain" in cfg:
        try:
            domain_from_dict(cfg["domain"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("domain", str(exc)) from None
    meas = cfg.get("measure")
    if meas is not None:
        if not isinstance(meas, dict) or "kind" not in meas:
            raise ConfigError("measure", "needs a kind")
        if meas["kind"] not in ("lebesgue", "hardy", "from_convex"):
            raise ConfigError("measure.kind", f"unknown measure kind {meas['kind']!r}")
        if meas["kind"] == "hardy" and "s" not in meas:
            raise ConfigError("measure.s", "hardy measure needs an exponent s")
    if "mesh" in cfg:
        n = cfg["mesh"].get("n")
        if n is not None and (isinstance(n, bool) or not isinstance(n, int) or n < 3):
            raise ConfigError("mesh.n", f"must be an integer >= 3, got {n!r}")
    if command == "check":
        from .checks import SUITE_NAMES

        suite = sec.get("suite")
        if suite is None:
            raise ConfigError("check.suite", "missing")
        if suite not in SUITE_NAMES:
            raise ConfigError("check.suite", f"unknown suite {suite!r}; choose from {SUITE_NAMES}")
    if command == "oracle":
        from .oracles import REGISTRY

        name = sec.get("name")
        if name not in REGISTRY:
            raise ConfigError("oracle.name", f"unknown oracle {name!r}; choose from {sorted(REGISTRY)}")


def config_hash(cfg) -> str:
    return hashlib.sha256(serialize.dumps(cfg).encode()).hexdigest()


# --------------------------------------------------------------------------
# building blocks


def _domain(cfg, backend=None):
    if "domain" in cfg:
        return domain_from_dict(cfg["domain"])
    if backend in ("radial", "op2d"):
        return Ball((0.0, 0.0), 1.0)
    return Interval(-1.0, 1.0)


def _backend_for(domain, requested):
    if requested:
        return requested
    if isinstance(domain, Interval):
        return "pl1d"
    return "op2d"


def build_mesh(cfg, backend):
    domain = _domain(cfg, backend)
    mcfg = cfg.get("mesh", {})
    if backend == "pl1d":
        if not isinstance(domain, Interval):
            raise ConfigError("solve.backend", "pl1d needs an interval domain")
        n = int(mcfg.get("n", 801))
        grading = mcfg.get("grading")
        return graded_interval_mesh(domain, n, float(grading)) if grading else interval_mesh(domain, n)
    if backend == "radial":
        if not isinstance(domain, Ball):
            raise ConfigError("solve.backend", "radial needs a ball domain")
        return radial_mesh(int(mcfg.get("dim", domain.dim)), domain.radius, int(mcfg.get("n", 400)))
    if isinstance(domain, Interval) or getattr(domain, "dim", 2) != 2:
        raise ConfigError("solve.backend", "op2d needs a planar domain")
    return grid_mesh(domain, int(mcfg.get("n", 33)))


def _named_fn(name, mesh) -> ConvexFn:
    if name == "sqrt_profile":
        vals = -np.sqrt(np.maximum(boundary_profile(mesh), 0.0))
        return ConvexFn(mesh, vals)
    if name == "cone":
        return cone(mesh)
    if name == "quadratic":
        return quadratic(mesh)
    raise ConfigError("measure.v", f"unknown function {name!r}; choose sqrt_profile, cone or quadratic")


def build_measure(cfg, mesh) -> MeasureSpec:
    meas = cfg.get("measure", {"kind": "lebesgue"})
    kind = meas["kind"]
    if kind == "lebesgue":
        return MeasureSpec.lebesgue()
    if kind == "hardy":
        return MeasureSpec.hardy(float(meas["s"]))
    return MeasureSpec.from_convex(_named_fn(meas.get("v", "sqrt_profile"), mesh), float(meas.get("q", 1.0)))


# --------------------------------------------------------------------------
# output


class Output:
    def __init__(self, cfg, command):
        self.dir = Path(cfg["out"])
        self.cfg = cfg
        self.command = command
        self.files = []

    def open(self):
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError("out", f"cannot create {self.dir}: {exc.strerror}") from None
        if not os.access(self.dir, os.W_OK):
            raise ConfigError("out", f"{self.dir} is not writable")

    def write(self, name, text):
        (self.dir / name).write_text(text)
        self.files.append(name)

    def json(self, name, obj):
        self.write(name, serialize.dumps(obj) + "\n")

    def manifest(self, status):
        import scipy

        from . import __version__

        self.json(
            "manifest.json",
            {
                "command": self.command,
                "config": self.cfg,
                "config_hash": config_hash(self.cfg),
                "seed": self.cfg["seed"],
                "status": status,
                "files": sorted(self.files),
                "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
                "versions": {
                    "mongeampere": __version__,
                    "python": platform.python_version(),
                    "numpy": np.__version__,
                    "scipy": scipy.__version__,
                },
            },
        )


LEDGER_UNITS = {"sup_gap": "value", "residual": "volume", "energy": "value*volume"}


# --------------------------------------------------------------------------
# subcommands


def cmd_solve(cfg, out: Output) -> int:
    from .convex import energy
    from .dirichlet import DirichletProblem, power_residual, solve_dirichlet, solve_dirichlet_singular, solve_power
    from .measures import realize

    sec = cfg["solve"]
    domain = _domain(cfg, sec.get("backend"))
    backend = _backend_for(domain, sec.get("backend"))
    mesh = build_mesh(cfg, backend)
    spec = build_measure(cfg, mesh)
    nu = realize(spec, mesh)
    tol = float(sec.get("tol", 1e-10))
    header = ("m", "sup_gap", "residual", "energy")
    result = {"backend": backend, "measure": cfg.get("measure", {"kind": "lebesgue"})}
    if "p" in sec:
        rep = solve_power(mesh, nu, float(sec["p"]), tol=max(tol, 1e-12))
        u = rep.solution
        res = power_residual(u, nu, float(sec["p"]))
        changes = rep.ledger.column("sup_change")
        rows = [("", changes[-1] if changes else math.nan, res, energy(u))]
        result.update(iterations=rep.iterations, residual=res)
    elif "m_schedule" in sec or weighted_mass(nu, 1.0) == INFINITE:
        schedule = sec.get("m_schedule")
        rep = solve_dirichlet_singular(mesh, nu, m_schedule=schedule, tol=tol)
        u = rep.solution
        rows = [tuple(r[h] for h in header) for r in rep.ledger.rows]
        result.update(residual=rep.residual, info=rep.info)
    else:
        rep = solve_dirichlet(DirichletProblem(mesh, nu), tol=tol)
        u = rep.solution
        rows = [("", math.nan, rep.residual, energy(u))]
        result.update(iterations=rep.iterations, residual=rep.residual)
    result["solution"] = serialize.fn_to_dict(u)
    out.write("ledger.csv", serialize.table_csv(header, rows, LEDGER_UNITS))
    out.write("solution.csv", serialize.fn_csv(u))
    out.json("result.json", result)
    print(f"solve: backend={backend}, nodes={mesh.n_nodes}, residual={result['residual']:.3e}, min u={float(np.min(u.values)):.6g}")
    return EXIT_OK


def cmd_eigen(cfg, out: Output) -> int:
    from .eigen import LEDGER_COLUMNS, eigen_ladder, inverse_iterate
    from .measures import realize

    sec = cfg["eigen"]
    domain = _domain(cfg, sec.get("backend"))
    backend = _backend_for(domain, sec.get("backend"))
    mesh = build_mesh(cfg, backend)
    spec = build_measure(cfg, mesh)
    tol = float(sec.get("tol", 1e-10))
    max_k = int(sec.get("max_k", 5000))
    schedule = sec.get("m_schedule")
    if schedule:
        lad = eigen_ladder(mesh, spec, schedule, tol=tol, max_k=max_k)
        levels, results, limit = lad.levels, lad.results, lad.limit
    else:
        res = inverse_iterate(cone(mesh), realize(spec, mesh), tol=tol, max_k=max_k)
        levels, results, limit = [("", res.lam, res.iterations, res.residual)], {"": res}, res.lam
    ladder_rows = [(m, lam, it, r) for m, lam, it, r in levels]
    out.write(
        "ladder.csv",
        serialize.table_csv(("m", "lambda_m", "iters", "residual"), ladder_rows, {"lambda_m": "1", "residual": "volume"}),
    )
    ledger_rows = []
    for m, _, _, _ in levels:
        for r in results[m].ledger.rows:
            ledger_rows.append((m, *(r[c] for c in LEDGER_COLUMNS)))
    out.write("ledger.csv", serialize.table_csv(("m",) + LEDGER_COLUMNS, ledger_rows, {"energy": "value*volume", "rayleigh": "1"}))
    last = results[levels[-1][0]]
    out.json(
        "result.json",
        {"levels": ladder_rows, "limit": limit, "eigenfunction": serialize.fn_to_dict(last.eigenfunction)},
    )
    for row in ladder_rows:
        print(f"m={row[0]!s:>4}  lambda={row[1]:.8f}  iters={row[2]}")
    print(f"limit estimate {limit:.6f}")
    return EXIT_OK


def cmd_check(cfg, out: Output) -> int:
    from .checks import as_expected, run_suite

    sec = cfg["check"]
    trials = int(sec.get("trials", 200))
    reports = run_suite(sec["suite"], trials, cfg["seed"])
    rows = [r.row() for r in reports]
    out.write("checks.csv", serialize.table_csv(("name", "lhs", "rhs", "slack", "pass"), rows))
    unexpected = [r for r in reports if not as_expected(r)]
    out.json(
        "result.json",
        {"suite": sec["suite"], "trials": trials, "passed": sum(r.passed for r in reports), "unexpected": [r.name for r in unexpected]},
    )
    print(f"check {sec['suite']}: {sum(r.passed for r in reports)}/{len(reports)} pass, {len(unexpected)} unexpected")
    return EXIT_FAIL if unexpected else EXIT_OK


def _oracle_mesh(case, n):
    from .geometry import Polygon

    if case.radial:
        return radial_mesh(case.params["n"], case.domain.radius, n or 400)
    if isinstance(case.domain, Interval):
        return interval_mesh(case.domain, n or 201)
    if isinstance(case.domain, (Ball, Polygon)):
        return grid_mesh(case.domain, n or 33)
    raise ConfigError("oracle.name", "oracle has no sampling domain")


def cmd_oracle(cfg, out: Output) -> int:
    from .oracles import TruncationRequiredError, oracle, sample

    sec = cfg["oracle"]
    try:
        case = oracle(sec["name"], **sec.get("params", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError("oracle.params", str(exc)) from None
    payload = case.to_dict()
    mesh = _oracle_mesh(case, cfg.get("mesh", {}).get("n"))
    try:
        with np.errstate(all="ignore"):
            u, nu = sample(case, mesh)
    except TruncationRequiredError as exc:
        payload["sample_error"] = str(exc)
    else:
        payload["function"] = serialize.fn_to_dict(u)
        payload["measure"] = serialize.measure_to_dict(nu, include_mesh=False)
        out.write("function.csv", serialize.fn_csv(u))
        out.write("measure.csv", serialize.measure_csv(nu))
    out.json("result.json", payload)
    print(f"oracle {case.name}: lambda={payload['lambda']}")
    return EXIT_OK


def cmd_repro(cfg, out: Output) -> int:
    from .acceptance import CRITERIA

    only = cfg.get("repro", {}).get("only")
    results = []
    for fn in CRITERIA:
        if only and fn.number not in only:
            continue
        r = fn()
        print(r.line(), flush=True)
        results.append(r)
    rows = [(r.number, r.title, r.passed, r.summary) for r in results]
    out.write("acceptance.csv", serialize.table_csv(("criterion", "title", "pass", "summary"), rows))
    out.json("result.json", {"criteria": [{"number": r.number, "title": r.title, "pass": r.passed, "summary": r.summary} for r in results]})
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} criteria pass")
    return EXIT_OK if n_pass == len(results) else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "eigen": cmd_eigen, "check": cmd_check, "oracle": cmd_oracle, "repro": cmd_repro}


# --------------------------------------------------------------------------
# argument parsing


def _int_auto(text):
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--out", help="output directory (default ma_output)")
    common.add_argument("--seed", type=_int_auto, help="random seed (overrides config and MA_SEED)")

    p = argparse.ArgumentParser(prog="ma", description="Discrete Monge-Ampere measures, Dirichlet solves and eigenvalue ladders.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="Dirichlet problem mu_u = nu, u = 0 on the boundary")
    s.add_argument("--backend", choices=BACKENDS)
    s.add_argument("--measure", help='measure, e.g. "lebesgue" or "hardy:s=1.5"')
    s.add_argument("--tol", type=float)
    s.add_argument("--m-schedule", dest="m_schedule", help='truncation levels, "2:256" or "2,4,8"')
    s.add_argument("--p", type=float, help="solve mu_u = |u|^p nu instead")
    s.add_argument("--mesh", type=int, help="mesh size (nodes, shells or grid side)")

    e = sub.add_parser("eigen", parents=[common], help="inverse iteration and truncation ladder")
    e.add_argument("--backend", choices=BACKENDS)
    e.add_argument("--measure")
    e.add_argument("--m-schedule", dest="m_schedule")
    e.add_argument("--tol", type=float)
    e.add_argument("--max-k", dest="max_k", type=int)
    e.add_argument("--mesh", type=int)

    c = sub.add_parser("check", parents=[common], help="run an inequality suite")
    from .checks import SUITE_NAMES

    c.add_argument("--suite", choices=SUITE_NAMES)
    c.add_argument("--trials", type=int)

    o = sub.add_parser("oracle", parents=[common], help="dump a closed-form example")
    o.add_argument("--name")
    o.add_argument("--mesh", type=int)
    o.add_argument("--alpha", type=float)
    o.add_argument("--n", type=int)
    o.add_argument("--k", type=int)
    o.add_argument("--a", type=float)
    o.add_argument("--eps", type=float)
    o.add_argument("--m", type=int)

    r = sub.add_parser("repro", parents=[common], help="run the acceptance table")
    r.add_argument("--only", help="comma separated criterion numbers")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = effective_config(args)
        if args.command == "repro" and getattr(args, "only", None):
            try:
                cfg.setdefault("repro", {})["only"] = [int(t) for t in args.only.split(",")]
            except ValueError:
                raise ConfigError("repro.only", f"cannot parse {args.only!r}") from None
        out = Output(cfg, args.command)
        out.open()
    except ConfigError as exc:
        print(f"ma: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    status = EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            status = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"ma: error: {exc}", file=sys.stderr)
        status = EXIT_USAGE
    except (ConsistencyError, IterationLimitError, ArithmeticError) as exc:
        print(f"ma: {type(exc).__name__}: {exc}", file=sys.stderr)
        status = EXIT_FAIL
    out.manifest(status)
    return status


if __name__ == "__main__":
    sys.exit(main())
