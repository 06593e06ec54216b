"""Configuration-driven experiment runner.

Every command reads a JSON config, resolves defaults, runs one module
pipeline, and writes CSV (or JSON) tables plus a run manifest.  Output bodies
are deterministic for a fixed config and seed: the resolved config is embedded
as a '#'-prefixed header, floats are serialized with shortest round-trip
repr, and no timestamps enter the tables (the manifest carries them).

Exit codes: 0 ok, 2 config error, 3 model violation, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cocycle import SpectralPoint, szego_step, transfer_product
from .errors import CmvLabError, ConfigError, ModelViolation
from .lyapunov import (
    ap_check,
    finite_lyapunov,
    ldt_exceptional_indicator,
    ldt_ladder,
    rate_table,
)
from .model import CoinField, SamplingFunction, builtin_model, model_from_json
from .cmvop import (
    build_finite_cmv,
    char_det,
    finite_cmv_from_model,
    green_decay_scan,
    green_entry,
)
from .spectral import (
    double_resonance_gap,
    eigenphases,
    eigenvector_inverse_iteration,
    localization_fit,
    visit_ladder,
)
from .qwalk import (
    WalkState,
    build_walk,
    evolve,
    unitary_equiv_check,
    walk_lyapunov_compare,
    walk_to_cmv,
)
from .torus import Frequency, Phase

__all__ = ["ExperimentConfig", "RunManifest", "validate_config", "run", "main", "COMMANDS"]


# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------

_COMMON = {
    "model": (str, None),
    "model_params": (dict, {}),
    "omega": (list, None),
    "dioph_p": (float, 1e-3),
    "dioph_q": (float, None),
    "x0": (list, None),
    "seed": (int, 0),
    "out": (str, "."),
}

_SCHEMAS: dict[str, dict] = {
    "lyapunov-scan": {
        **_COMMON,
        "theta_grid": (dict, {"start": 0.0, "stop": 6.283185307179586, "count": 16}),
        "n": (int, 100),
        "samples": (int, 200),
    },
    "ldt": {
        **_COMMON,
        "theta": (float, 0.0),
        "n_list": (list, [50, 100, 200, 400]),
        "tau": (float, 0.3),
        "samples": (int, 10000),
    },
    "ap-check": {
        **_COMMON,
        "theta": (float, 0.0),
        "block_len": (int, 40),
        "m": (int, 8),
        "chains": (int, 1),
        "c_a": (float, 10.0),
    },
    "rate-table": {
        **_COMMON,
        "theta": (float, 0.0),
        "n_list": (list, [25, 50, 100, 200]),
        "samples": (int, 400),
        "sigma": (float, 0.3),
    },
    "green-check": {
        **_COMMON,
        "theta": (float, 0.5),
        "a": (int, 0),
        "b": (int, 11),
        "beta_phase": (float, 0.0),
        "eta_phase": (float, 0.0),
    },
    "green-decay": {
        **_COMMON,
        "theta": (float, 0.5),
        "n": (int, 64),
        "gamma_ref": (float, 0.5),
        "phases": (int, 20),
        "beta_phase": (float, 0.0),
        "eta_phase": (float, 0.0),
    },
    "spectrum": {
        **_COMMON,
        "a": (int, 0),
        "b": (int, 31),
        "beta_phase": (float, 0.0),
        "eta_phase": (float, 0.0),
        "vectors": (bool, True),
    },
    "localize": {
        **_COMMON,
        "a": (int, 0),
        "b": (int, 199),
        "beta_phase": (float, 0.0),
        "eta_phase": (float, 0.0),
    },
    "resonance": {
        **_COMMON,
        "theta": (float, 0.5),
        "n1": (int, 16),
        "beta_phase": (float, 0.0),
        "eta_phase": (float, 0.0),
        "convention": (str, "closed"),
    },
    "visits": {
        **_COMMON,
        "theta": (float, 0.5),
        "n": (int, 50),
        "tau": (float, 0.3),
        "samples": (int, 400),
        "n_ladder": (list, [1000, 10000, 100000]),
    },
    "qwalk-gauge": {
        **_COMMON,
        "window": (list, [0, 63]),
    },
    "qwalk-equiv": {
        **_COMMON,
        "window": (list, [0, 255]),
        "trim": (int, 4),
    },
    "qwalk-evolve": {
        **_COMMON,
        "window": (list, [-1024, 1023]),
        "steps": (int, 1000),
        "start_site": (int, 0),
        "spin": (str, "up"),
        "closure": (str, "reflective"),
    },
    "qwalk-lyapunov": {
        **_COMMON,
        "theta_grid": (dict, {"start": 0.1, "stop": 6.2, "count": 8}),
        "n": (int, 400),
        "samples": (int, 500),
    },
}

COMMANDS = tuple(sorted(_SCHEMAS))


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment configuration; params carry schema defaults."""

    command: str
    params: dict
    outdir: str
    fmt: str = "csv"
    threads: int = 0

    def header_dict(self) -> dict:
        # out dir excluded so re-runs into different directories are byte-equal
        d = {k: v for k, v in self.params.items() if k != "out"}
        d["command"] = self.command
        return d

    def hash(self) -> str:
        blob = json.dumps(self.header_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    command: str
    config_hash: str
    started_at: str
    finished_at: str
    outputs: list
    tool_version: str


def validate_config(raw, command: str | None = None) -> ExperimentConfig:
    """Resolve and check a raw config (JSON text or dict) against the schema.

    Unknown keys are rejected with their names; missing required fields are
    reported with the command schema they belong to.
    """
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = dict(raw)
    cmd = command or raw.pop("command", None)
    if cmd is None:
        raise ConfigError("no command given (config key 'command' or CLI argument)")
    if cmd not in _SCHEMAS:
        raise ConfigError(f"unknown command {cmd!r}; choose from {', '.join(COMMANDS)}")
    raw.pop("command", None)
    schema = _SCHEMAS[cmd]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config keys for {cmd}: {', '.join(unknown)}")
    params: dict = {}
    missing = []
    for key, (typ, default) in schema.items():
        if key in raw:
            val = raw[key]
            if typ is float and isinstance(val, int):
                val = float(val)
            if typ is int and isinstance(val, bool):
                raise ConfigError(f"field {key}: expected int, got bool")
            if val is not None and not isinstance(val, typ):
                raise ConfigError(f"field {key}: expected {typ.__name__}, got {type(val).__name__}")
            params[key] = val
        elif default is None and key in ("model", "omega", "x0"):
            missing.append(key)
        else:
            params[key] = default
    if missing:
        raise ConfigError(f"missing required fields for {cmd}: {', '.join(missing)}")
    if params.get("dioph_q") is None:
        params["dioph_q"] = len(params["omega"]) + 1.0
    outdir = params.get("out", ".")
    return ExperimentConfig(cmd, params, outdir)


# ---------------------------------------------------------------------------
# model / geometry resolution
# ---------------------------------------------------------------------------

def _resolve_model(cfg: ExperimentConfig):
    name = cfg.params["model"]
    params = cfg.params.get("model_params", {})
    if name.endswith(".json"):
        with open(name, "r", encoding="utf-8") as fh:
            alpha, coins = model_from_json(fh.read())
        return alpha, coins
    obj = builtin_model(name, **params)
    if isinstance(obj, SamplingFunction):
        return obj, None
    if isinstance(obj, CoinField):
        return None, obj
    raise ConfigError(f"model {name!r} resolved to unsupported type")


def _need_alpha(cfg) -> SamplingFunction:
    alpha, _ = _resolve_model(cfg)
    if alpha is None:
        raise ConfigError(f"command {cfg.command} needs a sampling-function model")
    return alpha


def _need_coins(cfg) -> CoinField:
    _, coins = _resolve_model(cfg)
    if coins is None:
        raise ConfigError(f"command {cfg.command} needs a coin-field model")
    return coins


def _geometry(cfg):
    p = cfg.params
    omega = Frequency(np.asarray(p["omega"], dtype=float), p["dioph_p"], p["dioph_q"])
    x0 = Phase(np.asarray(p["x0"], dtype=float))
    if omega.d != x0.d:
        raise ConfigError("omega and x0 dimensions differ")
    return x0, omega


def _theta_list(spec: dict):
    start, stop, count = float(spec["start"]), float(spec["stop"]), int(spec["count"])
    if count < 1:
        raise ConfigError("theta_grid.count must be >= 1")
    return np.linspace(start, stop, count)


# ---------------------------------------------------------------------------
# output writing
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+}j"
    return str(v)


def _write_table(cfg: ExperimentConfig, name: str, columns, units, rows) -> str:
    os.makedirs(cfg.outdir, exist_ok=True)
    header = json.dumps(cfg.header_dict(), sort_keys=True)
    if cfg.fmt == "json":
        path = os.path.join(cfg.outdir, f"{name}.json")
        payload = {
            "config": cfg.header_dict(),
            "columns": list(columns),
            "units": dict(zip(columns, units)),
            "rows": [[_fmt(v) for v in row] for row in rows],
        }
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
            fh.write("\n")
        os.replace(tmp, path)
        return path
    path = os.path.join(cfg.outdir, f"{name}.csv")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {header}\n")
        for col, unit in zip(columns, units):
            fh.write(f"# column {col}: {unit}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    os.replace(tmp, path)
    return path


# ---------------------------------------------------------------------------
# command implementations
# ---------------------------------------------------------------------------

def _map_ordered(fn, items, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _cmd_lyapunov_scan(cfg: ExperimentConfig):
    alpha = _need_alpha(cfg)
    _, omega = _geometry(cfg)
    p = cfg.params
    thetas = _theta_list(p["theta_grid"])

    def one(theta):
        est = finite_lyapunov(alpha, omega, SpectralPoint(theta), p["n"], p["samples"], p["seed"])
        return (est.n, est.theta, est.mean, est.stderr, est.sample_count, est.seed)

    rows = _map_ordered(one, thetas, cfg.threads)
    return [
        _write_table(
            cfg,
            "lyapunov_scan",
            ("n", "theta", "mean", "stderr", "samples", "seed"),
            (
                "transfer steps",
                "spectral angle (radians)",
                "finite-size exponent estimate (nats/step)",
                "standard error of the mean (nats/step)",
                "Monte Carlo phase count",
                "sampling seed",
            ),
            rows,
        )
    ]


def _cmd_ldt(cfg: ExperimentConfig):
    alpha = _need_alpha(cfg)
    _, omega = _geometry(cfg)
    p = cfg.params
    reports = ldt_ladder(
        alpha, omega, SpectralPoint(p["theta"]), p["n_list"], p["tau"], p["samples"], p["seed"]
    )
    rows = [
        (r.n, r.tau, r.deviation_threshold, r.measure_estimate, r.sample_count)
        for r in reports
    ]
    return [
        _write_table(
            cfg,
            "ldt",
            ("n", "tau", "threshold", "measure", "samples"),
            (
                "transfer steps",
                "deviation exponent parameter",
                "deviation threshold n^(1-tau) (nats)",
                "estimated measure of the deviation set",
                "Monte Carlo phase count",
            ),
            rows,
        )
    ]


def _cmd_ap_check(cfg: ExperimentConfig):
    alpha = _need_alpha(cfg)
    x0, omega = _geometry(cfg)
    p = cfg.params
    z = SpectralPoint(p["theta"])
    length, m = p["block_len"], p["m"]
    rows = []
    for chain in range(p["chains"]):
        x = Phase(x0.coords + chain * np.pi / 50.0)
        blocks = [
            transfer_product("szego", alpha, Phase(x.coords + j * length * omega.coords), omega, z, length)
            for j in range(m)
        ]
        mu = float(np.exp(min(b.log_norm() for b in blocks)))
        rep = ap_check(blocks, mu, p["c_a"])
        rows.append(
            (chain, rep.m, rep.mu, int(rep.hyp1_ok), int(rep.hyp2_ok), rep.residual, rep.bound, int(rep.within_bound))
        )
    return [
        _write_table(
            cfg,
            "ap_check",
            ("chain", "m", "mu", "hyp1_ok", "hyp2_ok", "residual", "bound", "within_bound"),
            (
                "chain index",
                "number of blocks",
                "minimal block norm",
                "first hypothesis holds",
                "second hypothesis holds",
                "chain identity residual (nats)",
                "c_a * m / mu",
                "residual within bound",
            ),
            rows,
        )
    ]


def _cmd_rate_table(cfg: ExperimentConfig):
    alpha = _need_alpha(cfg)
    _, omega = _geometry(cfg)
    p = cfg.params
    rows_fit, coeff = rate_table(
        alpha, omega, SpectralPoint(p["theta"]), p["n_list"], p["samples"], p["seed"], p["sigma"]
    )
    rows = [
        (e.n, e.mean, e.stderr, delta, coeff)
        for e, delta in rows_fit
    ]
    return [
        _write_table(
            cfg,
            "rate_table",
            ("n", "mean", "stderr", "delta_to_ref", "fit_coeff"),
            (
                "transfer steps",
                "finite-size exponent (nats/step)",
                "standard error (nats/step)",
                "excess over the reference at the largest n (nats/step)",
                "least-squares coefficient against (log n)^(1/sigma)/n",
            ),
            rows,
        )
    ]


def _cmd_green_check(cfg: ExperimentConfig):
    alpha = _need_alpha(cfg)
    x0, omega = _geometry(cfg)
    p = cfg.params
    beta = complex(np.exp(1j * p["beta_phase"]))
    eta = complex(np.exp(1j * p["eta_phase"]))
    op = finite_cmv_from_model(alpha, x0, omega, p["a"], p["b"], beta, eta)
    z = SpectralPoint(p["theta"])
    rows = []
    for j in range(op.a, op.b + 1):
        for k in range(j, op.b + 1):
            mag, val = green_entry(op, j, k, z)
            rows.append((j, k, mag, abs(val)))
    return [
        _write_table(
            cfg,
            "green_check",
            ("j", "k", "mag_product", "mag_dense"),
            (
                "row site",
                "column site",
                "magnitude from the determinant product formula",
                "magnitude from the banded resolvent solve",
            ),
            rows,
        )
    ]


def _cmd_green_decay(cfg: ExperimentConfig):
    alpha = _need_alpha(cfg)
    _, omega = _geometry(cfg)
    p = cfg.params
    from .lyapunov import sample_phases

    phases = sample_phases(alpha.d, p["phases"], p["seed"])
    beta = complex(np.exp(1j * p["beta_phase"]))
    eta = complex(np.exp(1j * p["eta_phase"]))
    rows = []
    for i in range(phases.shape[0]):
        rep = green_decay_scan(
            alpha, omega, Phase(phases[i]), p["n"], SpectralPoint(p["theta"]), p["gamma_ref"],
            beta, eta,
        )
        rows.append(
            (i, rep.worst_ratio, rep.lambda_choice[0], rep.lambda_choice[1], len(rep.violating_pairs), int(rep.worst_ratio <= 1.0))
        )
    return [
        _write_table(
            cfg,
            "green_decay",
            ("phase_index", "worst_ratio", "window_lo", "window_hi", "violations", "good"),
            (
                "sampled phase index",
                "max |G(j,k)| e^(gamma |j-k| - n^0.9) over long hops",
                "winning window start",
                "winning window end",
                "number of violating pairs",
                "phase counts as good (ratio <= 1)",
            ),
            rows,
        )
    ]


def _cmd_spectrum(cfg: ExperimentConfig):
    alpha = _need_alpha(cfg)
    x0, omega = _geometry(cfg)
    p = cfg.params
    beta = complex(np.exp(1j * p["beta_phase"]))
    eta = complex(np.exp(1j * p["eta_phase"]))
    op = finite_cmv_from_model(alpha, x0, omega, p["a"], p["b"], beta, eta)
    thetas = eigenphases(op)
    rows = []
    for t in thetas:
        if p["vectors"]:
            pair = eigenvector_inverse_iteration(op, t)
            rows.append((pair.theta, pair.residual))
        else:
            rows.append((float(t), float("nan")))
    return [
        _write_table(
            cfg,
            "spectrum",
            ("theta", "residual"),
            ("eigenphase (radians)", "eigen-equation residual ||E v - z v||"),
            rows,
        )
    ]


def _cmd_localize(cfg: ExperimentConfig):
    alpha = _need_alpha(cfg)
    x0, omega = _geometry(cfg)
    p = cfg.params
    beta = complex(np.exp(1j * p["beta_phase"]))
    eta = complex(np.exp(1j * p["eta_phase"]))
    op = finite_cmv_from_model(alpha, x0, omega, p["a"], p["b"], beta, eta)
    rows = []
    for t in eigenphases(op):
        pair = eigenvector_inverse_iteration(op, t)
        fit = localization_fit(pair)
        rows.append((pair.theta, fit.center + op.a, fit.rate, fit.fit_quality, fit.tail_fraction))
    return [
        _write_table(
            cfg,
            "localize",
            ("theta", "center", "rate", "quality", "tail_fraction"),
            (
                "eigenphase (radians)",
                "peak site of the eigenvector",
                "fitted exponential decay (nats/site)",
                "coefficient of determination",
                "l2 mass in the fitted outer region",
            ),
            rows,
        )
    ]


def _cmd_resonance(cfg: ExperimentConfig):
    alpha = _need_alpha(cfg)
    x0, omega = _geometry(cfg)
    p = cfg.params
    beta = complex(np.exp(1j * p["beta_phase"]))
    eta = complex(np.exp(1j * p["eta_phase"]))
    rep = double_resonance_gap(
        alpha, omega, x0, SpectralPoint(p["theta"]), p["n1"], beta, eta,
        convention=p["convention"],
    )
    rows = [(j, gap) for j, gap in rep.ladder]
    return [
        _write_table(
            cfg,
            "resonance",
            ("j", "gap"),
            ("half-width of the centered window", "chordal distance from z to the window spectrum"),
            rows,
        )
    ]


def _cmd_visits(cfg: ExperimentConfig):
    alpha = _need_alpha(cfg)
    x0, omega = _geometry(cfg)
    p = cfg.params
    z = SpectralPoint(p["theta"])
    base = finite_lyapunov(alpha, omega, z, p["n"], p["samples"], p["seed"])
    indicator = ldt_exceptional_indicator(alpha, omega, z, p["n"], p["tau"], base.mean)
    rows, slope = visit_ladder(indicator, x0, omega, p["n_ladder"])
    out = [(n, c, c / n, slope) for n, c in rows]
    return [
        _write_table(
            cfg,
            "visits",
            ("N", "count", "fraction", "fitted_exponent"),
            (
                "orbit length",
                "orbit points in the deviation set",
                "count / N",
                "log-log slope of count vs N",
            ),
            out,
        )
    ]


def _cmd_qwalk_gauge(cfg: ExperimentConfig):
    coins = _need_coins(cfg)
    x0, omega = _geometry(cfg)
    p = cfg.params
    g = walk_to_cmv(coins, x0, omega, tuple(p["window"]))
    rows = []
    for m in range(g.lattice_lo, g.lattice_hi + 1):
        lam = g.lam(m) if g.lambdas_lo <= m <= g.lambdas_lo + len(g.lambdas) - 1 else complex(np.nan)
        ah = g.alpha_hat(m)
        rows.append((m, lam.real, lam.imag, ah.real, ah.imag))
    return [
        _write_table(
            cfg,
            "qwalk_gauge",
            ("n", "re_lambda", "im_lambda", "re_alpha_hat", "im_alpha_hat"),
            (
                "lattice index",
                "gauge sequence real part",
                "gauge sequence imaginary part",
                "hatted coefficient real part",
                "hatted coefficient imaginary part",
            ),
            rows,
        )
    ]


def _cmd_qwalk_equiv(cfg: ExperimentConfig):
    coins = _need_coins(cfg)
    x0, omega = _geometry(cfg)
    p = cfg.params
    residual = unitary_equiv_check(coins, x0, omega, tuple(p["window"]), p["trim"])
    rows = [(p["window"][0], p["window"][1], p["trim"], residual)]
    return [
        _write_table(
            cfg,
            "qwalk_equiv",
            ("window_lo", "window_hi", "trim", "residual"),
            (
                "first walk site",
                "last walk site",
                "boundary rows excluded per side",
                "max interior-row entry of |D* U D - E_hat|",
            ),
            rows,
        )
    ]


def _cmd_qwalk_evolve(cfg: ExperimentConfig):
    coins = _need_coins(cfg)
    x0, omega = _geometry(cfg)
    p = cfg.params
    walk = build_walk(coins, x0, omega, tuple(p["window"]), closure=p["closure"])
    psi0 = WalkState.delta(walk, p["start_site"], p["spin"])
    rows = [
        (r["t"], r["norm"], r["mean"], r["sigma"], r["return_prob"], int(r["escaped"]))
        for r in evolve(walk, psi0, p["steps"])
    ]
    return [
        _write_table(
            cfg,
            "qwalk_evolve",
            ("t", "norm", "mean", "sigma", "return_prob", "escaped_flag"),
            (
                "time step",
                "state norm",
                "position mean (sites)",
                "position standard deviation (sites)",
                "overlap probability with the initial state",
                "mass reached the window edge",
            ),
            rows,
        )
    ]


def _cmd_qwalk_lyapunov(cfg: ExperimentConfig):
    coins = _need_coins(cfg)
    x0, omega = _geometry(cfg)
    p = cfg.params
    thetas = _theta_list(p["theta_grid"])

    def one(theta):
        rep = walk_lyapunov_compare(coins, x0, omega, SpectralPoint(theta), p["n"], p["samples"], p["seed"])
        return (rep.theta, rep.n, rep.l_walk, rep.stderr_walk, rep.l_hat, rep.stderr_hat)

    rows = _map_ordered(one, thetas, cfg.threads)
    return [
        _write_table(
            cfg,
            "qwalk_lyapunov",
            ("theta", "n", "l_walk", "stderr_walk", "l_hat", "stderr_hat"),
            (
                "spectral angle (radians)",
                "two-site transfer steps",
                "alternating-product exponent (nats/site)",
                "standard error (nats/site)",
                "plain-product exponent (nats/site)",
                "standard error (nats/site)",
            ),
            rows,
        )
    ]


_RUNNERS = {
    "lyapunov-scan": _cmd_lyapunov_scan,
    "ldt": _cmd_ldt,
    "ap-check": _cmd_ap_check,
    "rate-table": _cmd_rate_table,
    "green-check": _cmd_green_check,
    "green-decay": _cmd_green_decay,
    "spectrum": _cmd_spectrum,
    "localize": _cmd_localize,
    "resonance": _cmd_resonance,
    "visits": _cmd_visits,
    "qwalk-gauge": _cmd_qwalk_gauge,
    "qwalk-equiv": _cmd_qwalk_equiv,
    "qwalk-evolve": _cmd_qwalk_evolve,
    "qwalk-lyapunov": _cmd_qwalk_lyapunov,
}


def run(command: str, config: ExperimentConfig) -> RunManifest:
    """Execute one command pipeline and write its outputs plus a manifest."""
    if command != config.command:
        raise ConfigError(f"command mismatch: {command} vs config {config.command}")
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    outputs = _RUNNERS[command](config)
    finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
    manifest = RunManifest(
        command=command,
        config_hash=config.hash(),
        started_at=started,
        finished_at=finished,
        outputs=[os.path.basename(o) for o in outputs],
        tool_version=__version__,
    )
    os.makedirs(config.outdir, exist_ok=True)
    path = os.path.join(config.outdir, "run_manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest.__dict__, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cmvlab",
        description="experiment runner for the quasi-periodic CMV laboratory",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to a JSON config")
    parser.add_argument("--out", default=None, help="output directory (default: from config)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    args = parser.parse_args(argv)

    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = validate_config(raw, args.command)
        outdir = os.environ.get("CMVLAB_OUT") or args.out or cfg.outdir
        cfg = ExperimentConfig(cfg.command, cfg.params, outdir, args.format, args.threads)
        manifest = run(args.command, cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 2
    except ModelViolation as exc:
        print(json.dumps({"error": "model", "message": str(exc)}), file=sys.stderr)
        return 3
    except (CmvLabError, ValueError, FileNotFoundError) as exc:
        print(json.dumps({"error": "numerical", "message": str(exc)}), file=sys.stderr)
        return 4
    print(json.dumps({"ok": True, "outputs": manifest.outputs, "hash": manifest.config_hash}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
