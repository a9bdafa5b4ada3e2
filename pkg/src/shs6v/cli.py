"""Command-line interface.

Subcommands: weights | simulate | stationary | duality-check | kernel |
she-check | kpz-scan.  Global flags --seed, --threads, --out override the
corresponding config values.  Every subcommand validates the admissible
parameter region up front and prints the violated inequality on failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import SHS6VError
from .params import ModelParams, scaled_params


def _params_from_args(args) -> ModelParams:
    if getattr(args, "eps", None) is not None:
        return scaled_params(args.I, args.J, args.b, args.rho, args.eps)
    p = ModelParams(q=args.q, I=args.I, J=args.J, alpha=args.alpha)
    return p


def _add_raw_params(sub, scaled_default=False):
    sub.add_argument("--I", type=int, default=2)
    sub.add_argument("--J", type=int, default=1)
    sub.add_argument("--q", type=float, default=None)
    sub.add_argument("--alpha", type=float, default=None)
    sub.add_argument("--b", type=float, default=0.8)
    sub.add_argument("--rho", type=float, default=1.0)
    sub.add_argument("--eps", type=float, default=0.01 if scaled_default else None)


def cmd_weights(args) -> int:
    from .weights import build_table

    p = _params_from_args(args)
    p.require_condition1()
    tbl = build_table(p, p.alpha, p.J)
    out = ["i1,j1,i2,j2,weight"]
    rows = None
    if args.row:
        i1, j1 = (int(s) for s in args.row.split(","))
        rows = [(i1, j1)]
    else:
        rows = [(i1, j1) for i1 in range(p.I + 1) for j1 in range(p.J + 1)]
    for (i1, j1) in rows:
        for i2 in range(p.I + 1):
            j2 = i1 + j1 - i2
            if 0 <= j2 <= p.J:
                out.append(f"{i1},{j1},{i2},{j2},{tbl.weight(i1, j1, i2, j2)!r}")
    _write(args.out, "\n".join(out) + "\n")
    return 0


def cmd_simulate(args) -> int:
    from .dynamics import (HeightField, OccupancyWindow, RandomEnvironment,
                           make_initial, step_unfused)
    from .experiments import parse_config

    cfg = parse_config(open(args.config).read())
    if args.seed is not None:
        cfg.seed = args.seed
    p = cfg.params()
    state = make_initial("product_pi_rho", cfg.x_left, cfg.width, p,
                         seed=cfg.seed)
    env = RandomEnvironment(p, cfg.seed)
    heights = HeightField(t=0, x_left=cfg.x_left, base=0.0,
                          eta=state.values.copy())
    lines = ["t,x,eta,N"]

    def dump(t, h):
        Ns = h.N_array()
        for i in range(len(h.eta)):
            lines.append(f"{t},{h.x_left + i},{h.eta[i]},{Ns[i]!r}")

    dump(0, heights)
    for t in range(cfg.steps):
        state = step_unfused(state, t, env, heights=heights, boundary="absorb")
        dump(t + 1, heights)
    _write(args.out or cfg.out, "\n".join(lines) + "\n")
    return 0


def cmd_stationary(args) -> int:
    from .stationary import (current_second_derivative,
                             integrated_covariance_A, kpz_coefficients,
                             pi_rho, solve_chi, steady_current_j)

    p = scaled_params(args.I, args.J, args.b, args.rho, args.eps)
    chi = solve_chi(p, args.rho)
    dist = pi_rho(p, chi)
    coeff = kpz_coefficients(p)
    rep = {
        "chi": chi,
        "pmf": dist.pmf.tolist(),
        "mean": dist.mean,
        "variance": dist.variance,
        "j": steady_current_j(p, args.rho),
        "A": integrated_covariance_A(p, args.rho),
        "minus_j_second": -current_second_derivative(p, args.rho),
        "V_star": coeff["V_star"],
        "D_star": coeff["D_star"],
    }
    _write(args.out, json.dumps(rep, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_duality_check(args) -> int:
    from .duality import verify_duality

    p = _params_from_args(args)
    p.require_condition1()
    mode = {"H": "H_k", "G": "G_2", "tiltZ": "tilt_Z", "tiltD": "tilt_D"}[args.mode]
    init = (1, 0, 2, 0, 1) + (0,) * 40
    rho = args.rho if mode.startswith("tilt") else None
    if mode.startswith("tilt"):
        from .kernels import TiltFrame
        fr = TiltFrame(p, args.rho)
        ys = (fr.lattice_point(1, args.steps), fr.lattice_point(3, args.steps))
    else:
        ys = (1, 3)
    rep = verify_duality(p, mode, init, 0, args.steps, ys=ys,
                         method="mc" if args.mc else "exact", rho=rho,
                         replicas=args.replicas, seed=args.seed or 7)
    _write(args.out, json.dumps(rep.as_dict(), indent=1, sort_keys=True) + "\n")
    return 0


def cmd_kernel(args) -> int:
    from .duality import ReversedChain
    from .kernels import PairKernelBatch, TiltFrame

    p = _params_from_args(args)
    p.require_condition1()
    rho = args.rho if args.tilted else None
    t, s = args.t, args.s
    x = (args.x1, args.x2)
    y = (args.y1, args.y2)
    lo = int(np.floor(min(args.x1 - args.y2, 0))) - 4
    hi = int(np.ceil(max(args.x2 - args.y1, 0))) + 4
    batch = PairKernelBatch(p, t, s, rho=rho, a_range=(lo, hi), b_range=(lo, hi))
    val = batch.value(x[0], x[1], y[0], y[1])
    rep = {"value": val, "nodes": batch.nodes, "radius": batch.radius,
           "quad_error_estimate": batch.quad_error}
    if args.oracle:
        chain = ReversedChain(p)
        if args.tilted:
            fr = TiltFrame(p, args.rho)
            xs = (fr.lattice_coord(x[0], t), fr.lattice_coord(x[1], t))
            ys_ = (fr.lattice_coord(y[0], s), fr.lattice_coord(y[1], s))
            kern, missing = chain.kernel(xs, t, s)
            pr = kern.get(ys_, 0.0)
            tilt = (fr.lam_hat_ratio(t, s) ** 2
                    * p.q ** (args.rho * (x[0] + x[1] - y[0] - y[1]
                                          + 2 * (fr.mu_hat(t) - fr.mu_hat(s)))))
            oracle = tilt * pr
        else:
            kern, missing = chain.kernel((int(x[0]), int(x[1])), t, s)
            oracle = kern.get((int(y[0]), int(y[1])), 0.0)
        rep["oracle"] = oracle
        rep["gap"] = abs(val - oracle)
        rep["oracle_missing_mass"] = missing
    _write(args.out, json.dumps(rep, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_she_check(args) -> int:
    from .dynamics import make_initial
    from .hopfcole import martingale_identity_check

    p = scaled_params(args.I, args.J, args.b, args.rho, args.eps)
    win = make_initial("product_pi_rho", 0, args.window, p, seed=args.seed or 3)
    init = tuple(win.values.tolist()) + (0,) * 40
    reps = []
    for t in range(args.steps):
        reps.append(martingale_identity_check(p, args.rho, init, t,
                                              sites=range(0, args.window + 2)))
    rep = {
        "max_mean_gap": max(r["mean_gap"] for r in reps),
        "max_qv_gap": max(r["qv_gap"] for r in reps),
        "missing_mass": max(r["missing_mass"] for r in reps),
        "steps": args.steps,
    }
    _write(args.out, json.dumps(rep, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_kpz_scan(args) -> int:
    from .experiments import emit, kpz_scan, parse_config

    cfg = parse_config(open(args.config).read())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    rows = kpz_scan(cfg)
    emit(rows, "csv", args.out or cfg.out)
    return 0


def _write(path, text):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shs6v",
                                 description="stochastic higher-spin "
                                             "six-vertex toolkit")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out", type=str, default=None)
    sub = ap.add_subparsers(dest="command", required=True)

    w = sub.add_parser("weights", help="print a vertex weight table as CSV")
    _add_raw_params(w)
    w.add_argument("--row", type=str, default=None,
                   help="restrict to one input row 'i1,j1'")
    w.set_defaults(fn=cmd_weights)

    s = sub.add_parser("simulate", help="simulate a trajectory to CSV")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=cmd_simulate)

    st = sub.add_parser("stationary", help="stationary-state report as JSON")
    _add_raw_params(st, scaled_default=True)
    st.set_defaults(fn=cmd_stationary)

    d = sub.add_parser("duality-check", help="two-sided duality report")
    _add_raw_params(d, scaled_default=True)
    d.add_argument("--mode", choices=("H", "G", "tiltZ", "tiltD"), default="H")
    d.add_argument("--steps", type=int, default=1)
    d.add_argument("--exact", action="store_true", default=True)
    d.add_argument("--mc", action="store_true", default=False)
    d.add_argument("--replicas", type=int, default=10**6)
    d.set_defaults(fn=cmd_duality_check)

    k = sub.add_parser("kernel", help="pair kernel value (and oracle gap)")
    _add_raw_params(k)
    k.add_argument("--t", type=int, required=True)
    k.add_argument("--s", type=int, default=0)
    for c in ("x1", "x2", "y1", "y2"):
        k.add_argument(f"--{c}", type=float, required=True)
    k.add_argument("--tilted", action="store_true")
    k.add_argument("--oracle", action="store_true")
    k.set_defaults(fn=cmd_kernel)

    sh = sub.add_parser("she-check", help="discrete heat-equation identity gaps")
    sh.add_argument("--window", type=int, default=5)
    sh.add_argument("--eps", type=float, default=0.04)
    sh.add_argument("--steps", type=int, default=2)
    sh.add_argument("--I", type=int, default=2)
    sh.add_argument("--J", type=int, default=2)
    sh.add_argument("--b", type=float, default=0.8)
    sh.add_argument("--rho", type=float, default=1.0)
    sh.set_defaults(fn=cmd_she_check)

    kp = sub.add_parser("kpz-scan", help="replica scan of the rescaled "
                                         "fluctuation field")
    kp.add_argument("--config", required=True)
    kp.set_defaults(fn=cmd_kpz_scan)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except SHS6VError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
