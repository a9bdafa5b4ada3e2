"""Experiment orchestration: flat key=value configs, seeded replica sweeps
of the rescaled height fluctuations, coefficient reports and deterministic
CSV/JSON emission.

The weak-limit statement itself is not a desk-scale target; the scan pivots
on observables with exact finite-size expectations (drift cancellation under
stationary data, single-site variance) plus the closed-form coefficients.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .dynamics import RandomEnvironment, ensemble_initial, ensemble_step_unfused
from .errors import ParameterError, WindowUnderflow
from .kernels import TiltFrame
from .params import ModelParams, scaled_params
from .stationary import (flux_bernoulli_mean, integrated_covariance_A,
                         current_second_derivative, kpz_coefficients, pi_rho,
                         solve_chi)


@dataclass
class ExperimentConfig:
    """Scan settings; mirrors the flat key=value config file."""

    I: int = 2
    J: int = 1
    b: float = 0.8
    rho: float = 1.0
    eps: float = 0.01
    width: int = 256
    x_left: int = -64
    steps: int = 400            # unfused steps
    record_every: int = 100
    replicas: int = 200
    seed: int = 42
    horizon: float = 10.0       # cap on eps^2 * steps
    threads: int = 1
    out: str = "kpz_scan.csv"
    observables: str = "fluctuation,site_variance"

    def params(self) -> ModelParams:
        return scaled_params(self.I, self.J, self.b, self.rho, self.eps)

    def validate(self):
        if self.eps**2 * self.steps > self.horizon:
            raise ParameterError(
                f"eps^2 * steps = {self.eps**2 * self.steps:.3g} exceeds the "
                f"declared horizon {self.horizon}")
        p = self.params()
        frame = TiltFrame(p, self.rho)
        drift = abs(frame.mu_hat(self.steps))
        # left margin shields the recording site from the truncation
        # rarefaction (front speed tracks the drift, fan width ~ sqrt(eps) T
        # plus diffusive spread); right margin holds the drifted site plus
        # fluctuations
        spread = 4.0 * math.sqrt(self.steps)
        left_need = spread + 2.0 * math.sqrt(self.eps) * self.steps + 12
        need = left_need + drift + spread + 12
        if self.width < need or -self.x_left < left_need:
            raise WindowUnderflow(
                f"window [{self.x_left}, {self.x_left + self.width}) too "
                f"small: need x_left <= -{left_need:.0f} and width >= "
                f"{need:.0f} (4 sqrt(T) + drift + truncation margins)")


CONFIG_FIELDS = {f.name: f.type for f in ExperimentConfig.__dataclass_fields__.values()}


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key=value format (# comments, blank lines allowed)."""
    kw: Dict = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"bad config line: {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in ExperimentConfig.__dataclass_fields__:
            raise ParameterError(f"unknown config key {key!r}")
        typ = ExperimentConfig.__dataclass_fields__[key].type
        if typ in ("int",):
            kw[key] = int(val)
        elif typ in ("float",):
            kw[key] = float(val)
        else:
            kw[key] = val
    return ExperimentConfig(**kw)


def config_to_text(cfg: ExperimentConfig) -> str:
    lines = [f"{name}={getattr(cfg, name)}"
             for name in ExperimentConfig.__dataclass_fields__]
    return "\n".join(lines) + "\n"


def _chunk_scan(args):
    """Worker: evolve one replica chunk and accumulate the per-record sums."""
    (cfg_text, chunk_id, chunk_size) = args
    cfg = parse_config(cfg_text)
    p = cfg.params()
    frame = TiltFrame(p, cfg.rho)
    chi = solve_chi(p, cfg.rho)
    pmf = pi_rho(p, chi).pmf
    env = RandomEnvironment(p, cfg.seed)
    env.rng = env.rng.derive(1000003 + chunk_id)
    vals = ensemble_initial("product_pi_rho", cfg.x_left, cfg.width,
                            chunk_size, p, pmf=pmf,
                            seed=cfg.seed * 7919 + chunk_id)
    lnq = math.sqrt(cfg.eps)
    rho = cfg.rho
    records = []
    interior = slice(8, cfg.width - 8)

    def record(t):
        mu_hat = frame.mu_hat(t)
        y = int(math.floor(mu_hat))  # x* = 0 compensated site label
        i = y - cfg.x_left
        cum = np.cumsum(vals, axis=1)
        Nbar = cum[:, i] + rho * (cfg.x_left - 1)
        fluct = (Nbar - rho * y) * lnq - frame.log_lam_hat(t)
        eta_int = vals[:, interior].astype(np.float64)
        records.append({
            "t": t,
            "sum_fluct": float(fluct.sum()),
            "sum_fluct2": float((fluct**2).sum()),
            "n": int(len(fluct)),
            "sum_eta": float(eta_int.sum()),
            "sum_eta2": float((eta_int**2).sum()),
            "n_eta": int(eta_int.size),
        })

    record(0)
    for t in range(cfg.steps):
        ensemble_step_unfused(vals, t, env, cfg.x_left, boundary="absorb")
        if (t + 1) % cfg.record_every == 0 or t + 1 == cfg.steps:
            record(t + 1)
    return records


def analytic_drift(cfg: ExperimentConfig, t: int) -> float:
    """Exact finite-eps expectation of the rescaled fluctuation under the
    two-sided stationary measure: the height at the recording site drops by
    the stationary flux mean each step, so

        E fluct(t) = -sqrt(eps) * sum_{s<t} flux_mean(s) - log lam_hat(t),

    the finite-size drift/normalization-correctness target (O(sqrt(eps))
    per unit of scaled time)."""
    p = cfg.params()
    frame = TiltFrame(p, cfg.rho)
    chi = solve_chi(p, cfg.rho)
    per_period = sum(flux_bernoulli_mean(p, chi, s) for s in range(p.J))
    full, r = divmod(t, p.J)
    drop = full * per_period + sum(flux_bernoulli_mean(p, chi, s)
                                   for s in range(r))
    return -drop * math.sqrt(cfg.eps) - frame.log_lam_hat(t)


def kpz_scan(cfg: ExperimentConfig) -> List[Dict]:
    """Run the scan and return tidy rows (one per recorded observable)."""
    cfg.validate()
    p = cfg.params()
    n_chunks = max(1, cfg.threads)
    sizes = [cfg.replicas // n_chunks] * n_chunks
    for i in range(cfg.replicas - sum(sizes)):
        sizes[i] += 1
    args = [(config_to_text(cfg), i, s) for i, s in enumerate(sizes) if s > 0]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            chunk_results = list(ex.map(_chunk_scan, args))
    else:
        chunk_results = [_chunk_scan(a) for a in args]
    # deterministic merge across chunks, keyed by record time
    merged: Dict[int, Dict] = {}
    for res in chunk_results:
        for rec in res:
            slot = merged.setdefault(rec["t"], {k: 0.0 for k in rec})
            for k, v in rec.items():
                slot[k] = slot[k] + v if k != "t" else rec["t"]
    rows: List[Dict] = []
    coeff = kpz_coefficients(p)
    A_val = float(integrated_covariance_A(p, cfg.rho))
    mj2 = float(-current_second_derivative(p, cfg.rho))
    for t in sorted(merged):
        m = merged[t]
        n = m["n"]
        mean = m["sum_fluct"] / n
        var = max(m["sum_fluct2"] / n - mean**2, 0.0)
        sem = math.sqrt(var / n)
        emean = m["sum_eta"] / m["n_eta"]
        evar = m["sum_eta2"] / m["n_eta"] - emean**2
        rows.append({"eps": cfg.eps, "t": t, "observable": "fluctuation_mean",
                     "value": mean, "sem": sem,
                     "expected": analytic_drift(cfg, t)})
        rows.append({"eps": cfg.eps, "t": t, "observable": "site_variance",
                     "value": evar,
                     "sem": math.sqrt(2.0 / m["n_eta"]) * max(evar, 1e-12),
                     "expected": A_val})
    rows.append({"eps": cfg.eps, "t": -1, "observable": "V_star",
                 "value": coeff["V_star"], "sem": 0.0,
                 "expected": coeff["V_star"]})
    rows.append({"eps": cfg.eps, "t": -1, "observable": "D_star",
                 "value": coeff["D_star"], "sem": 0.0,
                 "expected": coeff["D_star"]})
    rows.append({"eps": cfg.eps, "t": -1, "observable": "A_rho",
                 "value": A_val, "sem": 0.0,
                 "expected": cfg.rho * (cfg.I - cfg.rho) / cfg.I})
    rows.append({"eps": cfg.eps, "t": -1, "observable": "minus_j_second",
                 "value": mj2, "sem": 0.0,
                 "expected": cfg.J * coeff["V_star"]})
    return rows


SCAN_COLUMNS = ("eps", "t", "observable", "value", "sem", "expected")


def emit(rows: Sequence[Dict], fmt: str = "csv",
         path: Optional[str] = None) -> str:
    """Serialize rows deterministically; returns the text (and writes it
    when a path is given)."""
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(",".join(SCAN_COLUMNS) + "\n")
        for r in rows:
            cells = []
            for c in SCAN_COLUMNS:
                v = r.get(c, "")
                if isinstance(v, (float, np.floating)):
                    cells.append(repr(float(v)))
                else:
                    cells.append(str(v))
            buf.write(",".join(cells) + "\n")
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps(list(rows), indent=1, sort_keys=True) + "\n"
    else:
        raise ParameterError(f"unknown emit format {fmt!r}")
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text
