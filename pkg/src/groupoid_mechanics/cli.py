"""Batch front-end: simulate, convergence studies, verification suites.

Configuration comes from a single JSON file with flag overrides (--h,
--steps, --seed, --out); every randomized suite is seeded and echoes its
seed, so identical configurations produce byte-identical artifacts.  Exit
codes: 0 success, 1 verification failure, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import random
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .groupoids import (
    PairGroupoid,
    SpecialOrthogonal3,
    compose,
    identity,
    inverse,
    rodrigues,
    rotation_to_quaternion,
    source,
    target,
)
from .hp_principle import (
    build_variation_basis,
    construct_hp_solution,
    hp_differential,
    hp_interior_points,
    leok_ohsawa_solve,
    verify_theorem,
)
from .lagrangians import (
    SingularMassMatrix,
    available_systems,
    get_system,
    reference_trajectory,
)
from .legendre_flow import (
    AlgebroidCovector,
    SolverStepError,
    del_boundary_solve,
    simulate,
    symplecticity_defect,
)
from .numerics import NoConvergence, SingularJacobian


class ConfigError(Exception):
    pass


NUMERICAL_ERRORS = (NoConvergence, SingularJacobian, SolverStepError,
                    SingularMassMatrix)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

DEFAULT_INITIAL = {
    "harmonic": {"q0": [1.0], "p0": [0.0]},
    "pendulum": {"q0": [0.3], "p0": [0.0]},
    "kepler": {"q0": [1.0, 0.0, -1.0, 0.0], "p0": [0.0, 0.35, 0.0, -0.35]},
    "rigid-body": {"Pi0": [1.0, 0.5, -0.3]},
    "degenerate": {"q0": [1.0], "p0": [0.5]},
}


def load_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    for key in ("h", "steps", "seed", "out", "system", "scheme", "which"):
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            cfg[key] = value
    cfg.setdefault("system", "harmonic")
    cfg.setdefault("scheme", "midpoint")
    cfg.setdefault("h", 0.1)
    cfg.setdefault("steps", 100)
    cfg.setdefault("seed", 0)
    if cfg["h"] <= 0:
        raise ConfigError("h must be positive")
    if cfg["steps"] < 0:
        raise ConfigError("steps must be nonnegative")
    return cfg


def build_system(cfg):
    name = cfg["system"]
    try:
        system = get_system(name, d=cfg.get("d", 1), j_d=cfg.get("j_d"))
    except KeyError:
        raise ConfigError(
            f"unknown system {name!r}; available: {', '.join(available_systems())}")
    return system


def build_discrete(cfg, system, h=None):
    try:
        return system.discrete(h if h is not None else cfg["h"], cfg["scheme"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def initial_state(cfg, system, L_h):
    """Initial data: momentum covector or first arrow, plus attitude (group)."""
    init = cfg.get("initial") or DEFAULT_INITIAL[system.name]
    inst = L_h.instance
    if system.kind == "group":
        Pi0 = init.get("Pi0")
        if Pi0 is None or len(Pi0) != 3:
            raise ConfigError("rigid-body runs need initial data {'Pi0': [x, y, z]}")
        R0 = np.asarray(init.get("R0", np.eye(3)), dtype=float)
        try:
            attitude = inst.element(R0)
        except ValueError as exc:
            raise ConfigError(f"R0 is not a rotation: {exc}") from exc
        return AlgebroidCovector(inst.base_point(), tuple(Pi0)), attitude
    d = inst.d
    if "q1" in init:
        q0, q1 = init.get("q0"), init.get("q1")
        if q0 is None or len(q0) != d or len(q1) != d:
            raise ConfigError(f"configuration pair must have dimension {d}")
        return inst.element(q0, q1), None
    q0, p0 = init.get("q0"), init.get("p0")
    if q0 is None or p0 is None or len(q0) != d or len(p0) != d:
        raise ConfigError(f"initial data needs q0 and p0 of dimension {d}")
    return AlgebroidCovector(inst.base_point(q0), tuple(float(p) for p in p0)), None


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _json_report(report) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def trajectory_csv(traj, system, initial, attitude=None) -> str:
    """CSV with one row per state; LF line endings, RFC-4180 quoting."""
    lines = []
    group = system.kind == "group"
    if group:
        header = ["step", "t", "qw", "qx", "qy", "qz", "Pi0", "Pi1", "Pi2",
                  "energy_or_casimir", "del_residual", "composability_gap"]
    else:
        d = len(initial.base.q) if isinstance(initial, AlgebroidCovector) \
            else len(initial.coords) // 2
        header = (["step", "t"] + [f"q{i}" for i in range(d)]
                  + [f"p{i}" for i in range(d)]
                  + ["energy_or_casimir", "del_residual", "composability_gap"])
    lines.append(",".join(header))

    states = traj.states()
    if not states:
        states = [initial]   # zero-step run: echo the initial state

    acc = attitude
    for n in range(len(states)):
        row = [str(n), _fmt(traj.times[n] if n < len(traj.times) else n * traj.h)]
        if group:
            if n > 0:
                acc = compose(acc, traj.elements[n - 1])
            quat = rotation_to_quaternion(acc.as_matrix())
            row += [_fmt(v) for v in quat]
            row += [_fmt(v) for v in states[n].mu_array()]
        else:
            row += [_fmt(v) for v in states[n].base.q]
            row += [_fmt(v) for v in states[n].mu_array()]
        row += [_fmt(traj.energy[n]), _fmt(traj.del_residual[n]),
                _fmt(traj.composability_gap[n])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(cfg) -> int:
    system = build_system(cfg)
    L_h = build_discrete(cfg, system)
    initial, attitude = initial_state(cfg, system, L_h)
    if attitude is None and system.kind == "group":
        attitude = L_h.instance.identity()
    try:
        traj = simulate(L_h, initial, cfg["steps"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _write_text(cfg.get("out"), trajectory_csv(traj, system, initial, attitude))
    return 0


def _convergence_error(system, cfg, h, T):
    steps = T / h
    if abs(steps - round(steps)) > 1e-9:
        raise ConfigError(f"T = {T} is not an integer number of steps of h = {h}")
    steps = int(round(steps))
    L_h = build_discrete(cfg, system, h=h)
    init = cfg.get("initial") or DEFAULT_INITIAL[system.name]
    q0 = [float(v) for v in init["q0"]]
    p0 = [float(v) for v in init["p0"]]
    v0 = system.lagrangian.velocity_from_momentum(q0, np.asarray(p0))
    traj = simulate(L_h, AlgebroidCovector(L_h.instance.base_point(q0), tuple(p0)),
                    steps)
    ref_steps = steps if system.lagrangian.exact_solution else 50 * steps
    ref = reference_trajectory(system.lagrangian, q0, v0, T, ref_steps)
    q_end = np.array([v for v in target(traj.elements[-1]).q])
    return float(np.max(np.abs(q_end - ref.q[-1])))


def cmd_convergence(cfg) -> int:
    system = build_system(cfg)
    if system.kind != "pair" or system.lagrangian is None:
        raise ConfigError("convergence studies need a pair-groupoid system "
                          "with a continuous reference")
    T = float(cfg.get("T", 1.0))
    h_list = cfg.get("h_list", [0.1, 0.05, 0.025, 0.0125])
    if not h_list:
        raise ConfigError("h_list must not be empty")
    workers = os.environ.get("GROUPOID_INT_THREADS")
    workers = int(workers) if workers else (os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        errors = list(pool.map(lambda h: _convergence_error(system, cfg, h, T),
                               h_list))
    if len(h_list) >= 2:
        slope = float(np.polyfit(np.log(h_list), np.log(errors), 1)[0])
    else:
        slope = None
    report = {
        "system": system.name,
        "scheme": cfg["scheme"],
        "T": T,
        "seed": cfg["seed"],
        "errors": {_fmt(h): e for h, e in zip(h_list, errors)},
        "slope": slope,
    }
    _write_text(cfg.get("out"), _json_report(report))
    return 0


def _verify_groupoid(cfg):
    rng = random.Random(cfg["seed"])
    cases = int(cfg.get("cases", 1000))
    worst = 0.0
    pair = PairGroupoid(3)
    so3 = SpecialOrthogonal3()

    def rand_pair():
        return pair.element([rng.uniform(-2, 2) for _ in range(3)],
                            [rng.uniform(-2, 2) for _ in range(3)])

    def rand_rot():
        v = [rng.uniform(-1, 1) for _ in range(3)]
        n = math.sqrt(sum(x * x for x in v)) or 1.0
        a = rng.uniform(0, math.pi)
        return so3.element(np.array(rodrigues(tuple(a * x / n for x in v))))

    for inst, rand in ((pair, rand_pair), (so3, rand_rot)):
        for _ in range(cases):
            g = rand()
            if inst is pair:
                g2 = inst.element(list(target(g).q),
                                  [rng.uniform(-2, 2) for _ in range(3)])
                g3 = inst.element(list(target(g2).q),
                                  [rng.uniform(-2, 2) for _ in range(3)])
            else:
                g2, g3 = rand(), rand()

            def gap(a, b):
                return max(abs(x - y) for x, y in zip(a.coords, b.coords))

            worst = max(
                worst,
                gap(compose(identity(source(g)), g), g),
                gap(compose(g, identity(target(g))), g),
                gap(compose(g, inverse(g)), identity(source(g))),
                gap(compose(compose(g, g2), g3), compose(g, compose(g2, g3))),
            )
    return {"cases": cases, "max_residual": float(worst),
            "pass": bool(worst < 1e-12)}


def _verify_symplectic(cfg, system):
    if system.kind != "pair":
        raise ConfigError("the symplectic check runs on pair-groupoid systems")
    L_h = build_discrete(cfg, system)
    rng = random.Random(cfg["seed"])
    states = int(cfg.get("states", 100))
    d = L_h.instance.d
    worst = 0.0
    for _ in range(states):
        q = [rng.uniform(-1.5, 1.5) for _ in range(d)]
        p = tuple(rng.uniform(-1.0, 1.0) for _ in range(d))
        mu = AlgebroidCovector(L_h.instance.base_point(q), p)
        worst = max(worst, symplecticity_defect(L_h, mu))
    return {"states": states, "max_defect": float(worst),
            "pass": bool(worst < 1e-8)}


def _verify_hp(cfg, system):
    if system.kind != "pair":
        raise ConfigError("the cotangent-path check is run on pair systems here")
    L_h = build_discrete(cfg, system)
    N = int(cfg.get("N", 3))
    nodes = int(cfg.get("nodes", 5))
    initial, _ = initial_state(cfg, system, L_h)
    traj = simulate(L_h, initial, N)
    cfg_hp = construct_hp_solution(L_h, traj, nodes=nodes)
    report = verify_theorem(cfg_hp, L_h, tol=float(cfg.get("tol", 1e-9)))
    derivs = hp_differential(cfg_hp, L_h, build_variation_basis(cfg_hp))
    max_deriv = float(np.max(np.abs(derivs)))
    out = report.to_dict()
    out["max_differential"] = max_deriv
    out["N"] = N
    out["nodes"] = nodes
    out["pass"] = bool(report.all_pass and max_deriv < 1e-8)
    return out


def _verify_leok_ohsawa(cfg, system):
    if system.kind != "pair":
        raise ConfigError("the multiplier formulation needs a vector space")
    L_h = build_discrete(cfg, system)
    N = int(cfg.get("N", 3))
    initial, _ = initial_state(cfg, system, L_h)
    traj = simulate(L_h, initial, N)
    q_start = source(traj.elements[0]).q
    q_end = target(traj.elements[-1]).q
    bvp = del_boundary_solve(L_h, q_start, q_end, N) if N >= 2 else []
    hp_pts = hp_interior_points(construct_hp_solution(L_h, traj, nodes=5))
    lo_pts = leok_ohsawa_solve(L_h, (q_start, q_end), N).interior_points()
    gap = 0.0
    for a, b, c in zip(bvp, hp_pts, lo_pts):
        gap = max(gap, float(np.max(np.abs(a - b))), float(np.max(np.abs(a - c))),
                  float(np.max(np.abs(b - c))))
    return {"N": N, "max_gap": float(gap), "pass": bool(gap < 1e-8)}


def cmd_verify(cfg) -> int:
    system = build_system(cfg)
    which = cfg.get("which", "all")
    runners = {
        "groupoid": lambda: _verify_groupoid(cfg),
        "symplectic": lambda: _verify_symplectic(cfg, system),
        "hp": lambda: _verify_hp(cfg, system),
        "leok-ohsawa": lambda: _verify_leok_ohsawa(cfg, system),
    }
    if which == "all":
        names = ["groupoid", "symplectic", "hp", "leok-ohsawa"]
    elif which in runners:
        names = [which]
    else:
        raise ConfigError(
            f"unknown verification {which!r}; pick from "
            "hp | symplectic | groupoid | leok-ohsawa | all")
    checks = {name: runners[name]() for name in names}
    ok = all(c["pass"] for c in checks.values())
    report = {
        "system": system.name,
        "scheme": cfg["scheme"],
        "seed": cfg["seed"],
        "which": which,
        "checks": checks,
        "pass": ok,
    }
    _write_text(cfg.get("out"), _json_report(report))
    return 0 if ok else 1


def cmd_compare_leok_ohsawa(cfg) -> int:
    system = build_system(cfg)
    if system.kind != "pair":
        raise ConfigError("the multiplier formulation needs a vector space")
    L_h = build_discrete(cfg, system)
    N = int(cfg.get("N", 3))
    initial, _ = initial_state(cfg, system, L_h)
    traj = simulate(L_h, initial, N)
    q_start = source(traj.elements[0]).q
    q_end = target(traj.elements[-1]).q
    routes = {
        "del_boundary": [list(map(float, p))
                         for p in (del_boundary_solve(L_h, q_start, q_end, N)
                                   if N >= 2 else [])],
        "hp_theorem": [list(map(float, p))
                       for p in hp_interior_points(
                           construct_hp_solution(L_h, traj, nodes=5))],
        "leok_ohsawa": [list(map(float, p))
                        for p in leok_ohsawa_solve(
                            L_h, (q_start, q_end), N).interior_points()],
    }
    gap = 0.0
    for a, b in zip(routes["del_boundary"], routes["leok_ohsawa"]):
        gap = max(gap, float(np.max(np.abs(np.array(a) - np.array(b)))))
    for a, b in zip(routes["hp_theorem"], routes["leok_ohsawa"]):
        gap = max(gap, float(np.max(np.abs(np.array(a) - np.array(b)))))
    report = {
        "system": system.name,
        "scheme": cfg["scheme"],
        "seed": cfg["seed"],
        "N": N,
        "interior_points": routes,
        "max_gap": gap,
        "pass": gap < 1e-8,
    }
    _write_text(cfg.get("out"), _json_report(report))
    return 0 if report["pass"] else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupoid-int",
        description="Structure-preserving integrators from discrete "
                    "Lagrangians on Lie groupoids")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--system", help="system name override")
        p.add_argument("--scheme", help="discretization scheme override")
        p.add_argument("--h", type=float, help="time step override")
        p.add_argument("--steps", type=int, help="step count override")
        p.add_argument("--seed", type=int, help="PRNG seed override")
        p.add_argument("--out", help="output path (default: stdout)")

    common(sub.add_parser("simulate", help="run a trajectory, emit CSV"))
    common(sub.add_parser("convergence", help="h-sweep against the reference"))
    p_verify = sub.add_parser("verify", help="structure verification suites")
    common(p_verify)
    p_verify.add_argument("--which",
                          choices=["hp", "symplectic", "groupoid",
                                   "leok-ohsawa", "all"],
                          help="which suite to run (default: all)")
    common(sub.add_parser("compare-leok-ohsawa",
                          help="three-formulation interior-point comparison"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "convergence":
            return cmd_convergence(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        return cmd_compare_leok_ohsawa(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
