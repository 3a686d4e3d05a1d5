"""Command-line front end: ``dsocs simulate | converge | diagnose``.

Exit codes: 0 success, 2 solver failure or failed diagnostic, 3 bad
configuration.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, reference, systems
from .core import ConfigPair, Selection, StepperConfig, default_config, flow, seed_from_continuous
from .errors import DSOCSError, FlowError

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3

SYSTEMS = ("particle", "pendulum", "free", "harmonic", "nonholonomic-test", "knife-edge", "holonomic-test")

DEFAULT_SEEDS = {
    "particle": ([0.0, 0.0], [1.0, 1.0]),
    "pendulum": ([0.5, 0.0], [0.0, 0.5]),
    "free": ([0.0, 0.0], [1.0, 0.5]),
    "harmonic": ([1.0], [0.0]),
    "nonholonomic-test": ([0.0, 0.0], [2.0, -1.0]),
    "knife-edge": ([0.2, 0.1, 0.0], [1.0, 0.0, 0.1]),
    "holonomic-test": ([1.0, 0.3], [0.5, 0.0]),
}

DEFAULT_STUDY = {
    "particle": ((0.2, 0.1, 0.05, 0.025), 500.0, 0),
    "pendulum": ((0.2, 0.1, 0.05), 2000.0, 0),
    "harmonic": ((0.2, 0.1, 0.05, 0.025), 50.0, 0),
}

# parameters each system accepts through --param / <system>.<key>
PARAM_KEYS = {
    "particle": ("mass", "curvature"),
    "pendulum": ("I", "J", "M", "d", "e", "chi", "n", "rho"),
    "free": (),
    "harmonic": ("omega",),
    "nonholonomic-test": ("a0", "a1"),
    "knife-edge": (),
    "holonomic-test": ("omega",),
}

OPTION_KEYS = {
    "system", "h", "steps", "t_end", "h_list", "seed_q", "seed_qdot", "seed_q1", "out",
    "selection", "generic_stepper", "tolerance", "max_iterations",
    "stepper.scan_lo", "stepper.scan_hi", "stepper.scan_points", "samples",
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    system: str = "particle"
    h: float = 0.1
    steps: int | None = None
    t_end: float | None = None
    h_list: tuple | None = None
    seed_q: list | None = None
    seed_qdot: list | None = None
    seed_q1: list | None = None
    out: str | None = None
    selection: str | None = None
    generic_stepper: bool = False
    tolerance: float | None = None
    max_iterations: int | None = None
    scan_lo: float | None = None
    scan_hi: float | None = None
    scan_points: int | None = None
    samples: int = 20
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# configuration parsing

def _floats(text):
    try:
        return [float(x) for x in str(text).replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    entries = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    for number, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{number}: empty key")
        entries[key.replace("-", "_") if "." not in key else key] = value
    return entries


def _apply(cfg: RunConfig, key, value):
    try:
        if key == "system":
            cfg.system = str(value)
        elif key == "h":
            cfg.h = float(value)
        elif key == "steps":
            cfg.steps = int(value)
        elif key == "t_end":
            cfg.t_end = float(value)
        elif key == "h_list":
            cfg.h_list = tuple(_floats(value))
        elif key in ("seed_q", "seed_qdot", "seed_q1"):
            setattr(cfg, key, _floats(value))
        elif key == "out":
            cfg.out = str(value)
        elif key == "selection":
            cfg.selection = str(value)
        elif key == "generic_stepper":
            cfg.generic_stepper = value if isinstance(value, bool) else _bool(value)
        elif key == "tolerance":
            cfg.tolerance = float(value)
        elif key == "max_iterations":
            cfg.max_iterations = int(value)
        elif key == "stepper.scan_lo":
            cfg.scan_lo = float(value)
        elif key == "stepper.scan_hi":
            cfg.scan_hi = float(value)
        elif key == "stepper.scan_points":
            cfg.scan_points = int(value)
        elif key == "samples":
            cfg.samples = int(value)
        else:
            raise ConfigError(f"unknown key {key!r}")
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def build_run_config(args) -> RunConfig:
    """Merge defaults, config file, DSOCS_TOL and command-line flags."""
    cfg = RunConfig()
    file_params = {}
    if args.config:
        for key, value in read_config_file(args.config).items():
            if key in OPTION_KEYS:
                _apply(cfg, key, value)
            elif "." in key:
                file_params[key] = value
            else:
                raise ConfigError(f"unknown key {key!r} in {args.config}")
    env_tol = os.environ.get("DSOCS_TOL")
    if env_tol:
        _apply(cfg, "tolerance", env_tol)
    for key in ("system", "h", "steps", "t_end", "h_list", "seed_q", "seed_qdot", "seed_q1", "out", "selection"):
        value = getattr(args, key, None)
        if value is not None:
            _apply(cfg, key, value)
    if getattr(args, "generic_stepper", False):
        cfg.generic_stepper = True
    if cfg.system not in SYSTEMS:
        raise ConfigError(f"unknown system {cfg.system!r}; choose from {', '.join(SYSTEMS)}")
    allowed = PARAM_KEYS[cfg.system]
    for key, value in file_params.items():
        prefix, name = key.split(".", 1)
        if prefix != cfg.system or name not in allowed:
            raise ConfigError(f"unknown parameter {key!r} for system {cfg.system}")
        cfg.params[name] = value
    for item in args.param or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        name = key.split(".", 1)[1] if key.startswith(cfg.system + ".") else key
        if name not in allowed:
            raise ConfigError(f"unknown parameter {key!r} for system {cfg.system}")
        cfg.params[name] = value
    try:
        cfg.params = {k: float(v) for k, v in cfg.params.items()}
    except ValueError as exc:
        raise ConfigError(f"parameter values must be numbers: {exc}") from exc
    if not (np.isfinite(cfg.h) and cfg.h > 0):
        raise ConfigError("h must be positive")
    if cfg.steps is not None and cfg.steps < 1:
        raise ConfigError("steps must be at least 1")
    if cfg.t_end is not None and not cfg.t_end > 0:
        raise ConfigError("t_end must be positive")
    if cfg.selection is not None:
        try:
            Selection(cfg.selection)
        except ValueError as exc:
            raise ConfigError(f"unknown selection {cfg.selection!r}") from exc
    if cfg.h_list is not None and (len(cfg.h_list) < 1 or min(cfg.h_list) <= 0):
        raise ConfigError("h-list entries must be positive")
    return cfg


# ---------------------------------------------------------------------------
# systems and seeds

def make_system(cfg: RunConfig, h: float | None = None):
    h = cfg.h if h is None else h
    prm = dict(cfg.params)
    try:
        if cfg.system == "particle":
            return systems.make_particle(systems.ParticleParams(h=h, **prm))
        if cfg.system == "pendulum":
            if "n" in prm:
                prm["n"] = int(prm["n"])
            return systems.make_pendulum(systems.PendulumParams(h=h, **prm), generic=cfg.generic_stepper)
        if cfg.system == "free":
            return systems.free_particle(2, h)
        if cfg.system == "harmonic":
            return systems.harmonic_oscillator(1, h, **prm)
        if cfg.system == "nonholonomic-test":
            a = (prm.get("a0", 1.0), prm.get("a1", 2.0))
            return systems.linear_constraint_system(a, h)
        if cfg.system == "knife-edge":
            return systems.knife_edge_system(h)
        return systems.holonomic_leaf_system(h, **prm)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters for {cfg.system}: {exc}") from exc


def make_seed(cfg: RunConfig, sys_, h: float | None = None):
    h = cfg.h if h is None else h
    q_default, qdot_default = DEFAULT_SEEDS[cfg.system]
    q = np.array(cfg.seed_q if cfg.seed_q is not None else q_default, dtype=float)
    if q.size != sys_.dim:
        raise ConfigError(f"seed-q needs {sys_.dim} entries")
    if cfg.seed_q1 is not None:
        q1 = np.array(cfg.seed_q1, dtype=float)
        if q1.size != sys_.dim:
            raise ConfigError(f"seed-q1 needs {sys_.dim} entries")
        return ConfigPair(q, q1)
    qdot = np.array(cfg.seed_qdot if cfg.seed_qdot is not None else qdot_default, dtype=float)
    if qdot.size != sys_.dim:
        raise ConfigError(f"seed-qdot needs {sys_.dim} entries")
    return seed_from_continuous(q, qdot, h)


def make_stepper_config(cfg: RunConfig, sys_) -> StepperConfig:
    base = default_config(sys_)
    solve = base.solve
    changes = {}
    if cfg.tolerance is not None:
        changes["tolerance"] = cfg.tolerance
    if cfg.max_iterations is not None:
        changes["max_iterations"] = cfg.max_iterations
    try:
        if changes:
            solve = dataclasses.replace(solve, **changes)
        stepper = {"solve": solve}
        for key in ("scan_lo", "scan_hi", "scan_points"):
            if getattr(cfg, key) is not None:
                stepper[key] = getattr(cfg, key)
        stepper["selection"] = Selection(cfg.selection) if cfg.selection else base.selection
        if cfg.generic_stepper:
            stepper["selection"] = Selection.NEWTON_ONLY
        return dataclasses.replace(base, **stepper)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _step_count(cfg: RunConfig):
    if cfg.steps is not None:
        return cfg.steps
    if cfg.t_end is not None:
        return max(1, int(round(cfg.t_end / cfg.h)) - 1)
    return 1000


# ---------------------------------------------------------------------------
# output

def _fmt(x):
    return format(float(x), ".17g")


def write_trajectory_csv(fh, sys_, traj, preamble=(), trailer=()):
    """Trajectory as CSV: k, t, coordinates, then L_d or V when available."""
    pts = traj.points
    n = len(pts)
    pend = isinstance(sys_.params, systems.PendulumParams)
    extra = "V" if pend else "Ld"
    if pend:
        series = diagnostics.lyapunov_series(sys_.params, traj)
        values = {k + 1: v for k, v in enumerate(series)}
    else:
        values = dict(enumerate(diagnostics.energy_series(sys_, traj)))
    for line in preamble:
        fh.write(f"# {line}\n")
    fh.write(",".join(["k", "t", *sys_.coordinate_names, extra]) + "\n")
    for k in range(n):
        cells = [str(k), _fmt(k * traj.h), *(_fmt(x) for x in pts[k])]
        cells.append(_fmt(values[k]) if k in values else "")
        fh.write(",".join(cells) + "\n")
    for line in trailer:
        fh.write(f"# {line}\n")


def read_trajectory_csv(path):
    """Inverse of :func:`write_trajectory_csv` for the coordinate columns."""
    with open(path, encoding="utf-8") as fh:
        rows = [line.rstrip("\n") for line in fh if line.strip() and not line.startswith("#")]
    header = rows[0].split(",")
    coords = header[2:-1]
    data = [r.split(",") for r in rows[1:]]
    pts = np.array([[float(c) for c in row[2:2 + len(coords)]] for row in data])
    return header, pts


class _Output:
    def __init__(self, path):
        self.path = path
        self.fh = None

    def __enter__(self):
        self.fh = open(self.path, "w", encoding="utf-8", newline="\n") if self.path else sys.stdout
        return self.fh

    def __exit__(self, *exc):
        if self.path:
            self.fh.close()
        return False


def _preamble(cfg, sys_, stepper, steps):
    return [
        f"system={cfg.system} h={_fmt(cfg.h)} steps={steps}",
        f"selection={stepper.selection.value} tolerance={stepper.solve.tolerance:g}",
        "params=" + (",".join(f"{k}={_fmt(v)}" for k, v in sorted(cfg.params.items())) or "defaults"),
    ]


def _summary(sys_, traj, err=sys.stderr):
    pts = traj.points
    print(f"steps completed: {len(pts) - 2}", file=err)
    print("final state: " + ", ".join(f"{n}={_fmt(x)}" for n, x in zip(sys_.coordinate_names, pts[-1])), file=err)
    if isinstance(sys_.params, systems.PendulumParams):
        v = diagnostics.lyapunov_series(sys_.params, traj)
        if v:
            print(f"lyapunov: first {v[0]:.10g}, last {v[-1]:.10g}, min {min(v):.10g}", file=err)
    else:
        e = np.asarray(diagnostics.energy_series(sys_, traj))
        rel = np.max(np.abs(e - e[0])) / max(abs(e[0]), 1e-300)
        print(f"discrete energy: first {e[0]:.17g}, max relative drift {rel:.3e}", file=err)


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig) -> int:
    sys_ = make_system(cfg)
    seed = make_seed(cfg, sys_)
    stepper = make_stepper_config(cfg, sys_)
    steps = _step_count(cfg)
    trailer = []
    code = EXIT_OK
    try:
        traj = flow(sys_, seed, steps, stepper)
    except FlowError as exc:
        traj = exc.trajectory
        trailer = [f"truncated: {exc}"]
        code = EXIT_SOLVER
    with _Output(cfg.out) as fh:
        write_trajectory_csv(fh, sys_, traj, _preamble(cfg, sys_, stepper, steps), trailer)
    _summary(sys_, traj)
    if code:
        print(f"error: {trailer[0]}", file=sys.stderr)
    return code


def _reference_for(cfg: RunConfig, seed_q, seed_qdot):
    t_end = t_end_of(cfg)
    if cfg.system == "particle":
        if cfg.params.get("curvature", 1.0) != 1.0 or cfg.seed_q is not None or cfg.seed_qdot is not None:
            raise ConfigError("the particle reference covers only the default seed with unit curvature")
        return lambda h: reference.sampled_reference(reference.particle_exact, h, t_end)
    if cfg.system == "pendulum":
        prm = dict(cfg.params)
        if "n" in prm:
            prm["n"] = int(prm["n"])
        params = systems.PendulumParams(**prm)
        return lambda h: reference.pendulum_reference(params, seed_q, seed_qdot, h / 100, t_end, sample_every=100)
    w = cfg.params.get("omega", 1.0)
    q0, v0 = float(seed_q[0]), float(seed_qdot[0])
    exact = lambda t: q0 * np.cos(w * t) + v0 / w * np.sin(w * t)  # noqa: E731
    return lambda h: reference.sampled_reference(exact, h, t_end)


def t_end_of(cfg: RunConfig):
    return cfg.t_end if cfg.t_end is not None else DEFAULT_STUDY[cfg.system][1]


def cmd_converge(cfg: RunConfig) -> int:
    if cfg.system not in DEFAULT_STUDY:
        raise ConfigError(f"no continuous reference for system {cfg.system}")
    h_list = cfg.h_list or DEFAULT_STUDY[cfg.system][0]
    index = DEFAULT_STUDY[cfg.system][2]
    q_default, qdot_default = DEFAULT_SEEDS[cfg.system]
    seed_q = cfg.seed_q if cfg.seed_q is not None else q_default
    seed_qdot = cfg.seed_qdot if cfg.seed_qdot is not None else qdot_default
    if cfg.seed_q1 is not None:
        raise ConfigError("convergence studies need continuous seeds (seed-q, seed-qdot)")
    ref = _reference_for(cfg, seed_q, seed_qdot)
    probe = make_system(cfg, h_list[0])
    stepper = make_stepper_config(cfg, probe)
    result = diagnostics.convergence_study(
        lambda h: make_system(cfg, h),
        ref,
        lambda h: seed_from_continuous(seed_q, seed_qdot, h),
        h_list,
        t_end_of(cfg),
        index,
        stepper,
    )
    with _Output(cfg.out) as fh:
        fh.write(f"# system={cfg.system} t_end={_fmt(t_end_of(cfg))} coordinate={probe.coordinate_names[index]}\n")
        fh.write("h,error\n")
        for h, err in result.pairs:
            fh.write(f"{_fmt(h)},{_fmt(err)}\n")
        for h, msg in result.failures:
            fh.write(f"# failed h={_fmt(h)}: {msg}\n")
    if result.slope is not None:
        print(f"slope: {result.slope:.4f}", file=sys.stderr if cfg.out is None else sys.stdout)
    else:
        print("slope: unavailable (fewer than two successful runs)", file=sys.stderr)
    return EXIT_SOLVER if result.failures else EXIT_OK


def cmd_diagnose(cfg: RunConfig) -> int:
    sys_ = make_system(cfg)
    seed = make_seed(cfg, sys_)
    stepper = make_stepper_config(cfg, sys_)
    steps = cfg.steps if cfg.steps is not None else (_step_count(cfg) if cfg.t_end else 200)
    code = EXIT_OK
    header = []
    try:
        traj = flow(sys_, seed, steps, stepper)
    except FlowError as exc:
        traj = exc.trajectory
        header.append(f"truncated: {exc}")
        code = EXIT_SOLVER
    if len(traj.points) < 3:
        print(f"error: {header[0]}", file=sys.stderr)
        return EXIT_SOLVER
    report = diagnostics.diagnose(sys_, traj, stepper, samples=cfg.samples)
    with _Output(cfg.out) as fh:
        fh.write(f"system: {cfg.system}\nh: {cfg.h:g}\nsteps: {len(traj.points) - 2}\n")
        for line in header:
            fh.write(f"# {line}\n")
        fh.write(report.render())
    if not report.healthy:
        return EXIT_SOLVER
    return code


# ---------------------------------------------------------------------------

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", choices=SYSTEMS)
    common.add_argument("--h", type=float)
    common.add_argument("--steps", type=int)
    common.add_argument("--t-end", dest="t_end", type=float)
    common.add_argument("--h-list", dest="h_list", help="comma-separated step sizes")
    common.add_argument("--seed-q", dest="seed_q", help="initial configuration, comma-separated")
    common.add_argument("--seed-qdot", dest="seed_qdot", help="initial velocity, comma-separated")
    common.add_argument("--seed-q1", dest="seed_q1", help="second configuration (explicit pair seed)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--selection", choices=[s.value for s in Selection])
    common.add_argument("--param", action="append", metavar="KEY=VALUE", help="system parameter override")
    common.add_argument("--generic-stepper", dest="generic_stepper", action="store_true",
                        help="use generic Newton steps instead of the pendulum scalar reduction")
    parser = argparse.ArgumentParser(prog="dsocs", description="Discrete second-order constrained systems")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="run a trajectory and write CSV")
    sub.add_parser("converge", parents=[common], help="error versus step size study")
    sub.add_parser("diagnose", parents=[common], help="structural checks along a trajectory")
    return parser


COMMANDS = {"simulate": cmd_simulate, "converge": cmd_converge, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = build_run_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DSOCSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
