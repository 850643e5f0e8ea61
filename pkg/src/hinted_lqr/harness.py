"""Experiment configuration, seed sweeps, regret-growth fits and report files.

A config is one JSON document::

    {
      "plant": {"preset": "paper-desk-3x2"},
      "algorithm": "alg1",
      "params_mode": "practical",
      "params": {"tau1": 200, "lam": 1.0},
      "hint": {"r": 2.0, "theta": 1.0, "adversarial": false},
      "horizons": [1024, 4096, 16384],
      "seeds": {"count": 20, "base": 0},
      "out": "results",
      "regret_metric": "paired"
    }

A custom plant replaces ``preset`` with ``A, B, Q, R, sigma2, C0, eps0``
(plus optional ``tau1`` and ``r``). Outputs: ``records.jsonl`` (one run per
line), ``epochs.csv`` and ``summary.json``; ``--traj-dump`` adds one CSV per
run under ``trajectories/``.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .control_core import SystemTruth
from .controllers import (Alg1Controller, Alg2Controller, NoHintController, ScalarHintBController,
                          StaticGainController, epoch_schedule, theoretical_params)
from .errors import ConfigError, HorizonTooShort, InsufficientData
from .hints import HintOracle, default_schedule, scalar_variant_schedule
from .presets import PRESETS, Preset, get_preset, practical_params
from .prng import GaussianStream
from .simulation import rollout

log = logging.getLogger(__name__)

ALGORITHMS = ("alg1", "alg2", "scalarB", "baseline-optimal", "baseline-static_K0",
              "baseline-no_hint_eps_greedy")
METRICS = ("paired", "raw")
SEED_ENV = "HINTED_LQR_SEED"
EPOCH_COLUMNS = ["T", "seed", "i", "tau_i", "gamma_i", "E_norm", "delta_norm", "K_norm", "stable", "aborted"]
MIN_HORIZONS = 4
MIN_SEEDS = 10


@dataclass
class ExperimentConfig:
    plant: dict
    algorithm: str
    horizons: list[int]
    seed_count: int = 1
    base_seed: int = 0
    params_mode: str = "practical"
    params: dict = field(default_factory=dict)
    hint: dict = field(default_factory=dict)
    out: str = "results"
    regret_metric: str = "paired"
    trajectory_dump: bool = False

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("trajectory_dump")
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def seeds(self) -> list[int]:
        return [self.base_seed + j for j in range(self.seed_count)]


def _line_of(text: str, key: str) -> int | None:
    for no, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return no
    return None


def parse_config(text: str, env=None) -> ExperimentConfig:
    """Parse and validate a JSON config; errors name the offending line and field."""
    env = os.environ if env is None else env
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", line=1)

    def fail(key, msg):
        raise ConfigError(msg, line=_line_of(text, key.split(".")[-1]), field=key)

    known = {"plant", "algorithm", "params_mode", "params", "hint", "horizons", "seeds", "out",
             "regret_metric"}
    for key in raw:
        if key not in known:
            fail(key, "unknown field")
    for key in ("plant", "algorithm", "horizons"):
        if key not in raw:
            raise ConfigError("missing required field", field=key)

    plant = raw["plant"]
    if not isinstance(plant, dict):
        fail("plant", "must be an object")
    if "preset" in plant:
        if plant["preset"] not in PRESETS:
            fail("plant.preset", f"unknown preset; known: {sorted(PRESETS)}")
    else:
        for key in ("A", "B", "Q", "R", "sigma2", "C0", "eps0"):
            if key not in plant:
                fail(f"plant.{key}", "missing (needed for a custom plant)")
        try:
            _build_truth(plant)
        except (ValueError, TypeError) as exc:
            fail("plant", str(exc))

    algorithm = raw["algorithm"]
    if algorithm not in ALGORITHMS:
        fail("algorithm", f"must be one of {ALGORITHMS}")
    params_mode = raw.get("params_mode", "practical")
    if params_mode not in ("practical", "theoretical"):
        fail("params_mode", "must be 'practical' or 'theoretical'")

    horizons = raw["horizons"]
    if (not isinstance(horizons, list) or not horizons
            or not all(isinstance(h, int) and not isinstance(h, bool) and h > 0 for h in horizons)):
        fail("horizons", "must be a non-empty list of positive integers")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        fail("horizons", "must be strictly increasing")

    seeds = raw.get("seeds", {})
    if not isinstance(seeds, dict):
        fail("seeds", "must be an object with 'count' and 'base'")
    count, base = seeds.get("count", 1), seeds.get("base", 0)
    if not isinstance(count, int) or count < 1:
        fail("seeds.count", "must be a positive integer")
    if not isinstance(base, int) or base < 0:
        fail("seeds.base", "must be a non-negative integer")
    if env.get(SEED_ENV):
        try:
            base = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer", field=SEED_ENV) from None

    hint = raw.get("hint", {})
    if not isinstance(hint, dict):
        fail("hint", "must be an object")
    if "r" in hint and not (isinstance(hint["r"], (int, float)) and hint["r"] > 1):
        fail("hint.r", "must exceed 1")
    if "theta" in hint and not (isinstance(hint["theta"], (int, float)) and 0 <= hint["theta"] <= 1):
        fail("hint.theta", "must lie in [0, 1]")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        fail("params", "must be an object")
    for key, val in params.items():
        if key not in ("tau1", "lam", "x_b", "mu1", "bhat_eps"):
            fail(f"params.{key}", "unknown parameter")
        if not (isinstance(val, (int, float)) and val > 0):
            fail(f"params.{key}", "must be positive")
    metric = raw.get("regret_metric", "paired")
    if metric not in METRICS:
        fail("regret_metric", f"must be one of {METRICS}")
    return ExperimentConfig(plant=plant, algorithm=algorithm, horizons=list(horizons), seed_count=count,
                            base_seed=base, params_mode=params_mode, params=params, hint=hint,
                            out=str(raw.get("out", "results")), regret_metric=metric)


def load_config(path, env=None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, env)


def _build_truth(plant: dict) -> SystemTruth:
    return SystemTruth(np.array(plant["A"], float), np.array(plant["B"], float), np.array(plant["Q"], float),
                       np.array(plant["R"], float), float(plant["sigma2"]), name="custom")


def resolve_plant(plant: dict) -> Preset:
    if "preset" in plant:
        return get_preset(plant["preset"])
    return Preset(_build_truth(plant), C0=float(plant["C0"]), eps0=float(plant["eps0"]),
                  tau1=int(plant.get("tau1", 100)), r=float(plant.get("r", 2.0)))


# -- one (T, seed) cell ---------------------------------------------------------

def _alg_index(algorithm: str) -> int:
    return 2 if algorithm == "alg2" else 1


def controller_config(cfg: ExperimentConfig, preset: Preset, T: int):
    alg = _alg_index(cfg.algorithm)
    r = float(cfg.hint.get("r", preset.r))
    t = preset.truth
    if cfg.params_mode == "theoretical":
        bounds = dict(alpha0=t.alpha0, alpha1=t.alpha1, nu=t.cost_of(preset.K0), phi=t.phi,
                      sigma2=t.sigma2, n=t.n, m=t.m)
        return theoretical_params(bounds, r, T, preset.C0, preset.eps0, alg=alg,
                                  mu_star=t.mu_star if alg == 2 else None)
    p = cfg.params
    cc = practical_params(preset, T, alg=alg, tau1=p.get("tau1"), lam=float(p.get("lam", 1.0)), r=r,
                          mu1=p.get("mu1"))
    if "x_b" in p:
        cc = replace(cc, x_b=float(p["x_b"]))
    return cc


def build_run(cfg: ExperimentConfig, preset: Preset, T: int, seed: int):
    """Return ``(controller, hint_oracle or None, hint mode)`` for one cell."""
    t = preset.truth
    algorithm = cfg.algorithm
    if algorithm == "baseline-optimal":
        return StaticGainController(t.K_star, name="optimal"), None, None
    if algorithm == "baseline-static_K0":
        return StaticGainController(preset.K0, name="static_K0"), None, None
    cc = controller_config(cfg, preset, T)
    eta = GaussianStream(seed, "eta", t.m)
    alg = _alg_index(algorithm)
    taus = epoch_schedule(cc.tau1, cc.r, T, alg=alg)
    theta = float(cfg.hint.get("theta", 1.0))
    adversarial = bool(cfg.hint.get("adversarial", False))
    if algorithm == "baseline-no_hint_eps_greedy":
        return NoHintController(cc, t.Q, t.R, preset.K0, eta), None, None
    if algorithm == "alg1":
        sched = default_schedule("B", cc.r, len(taus), taus, theta, adversarial)
        oracle = HintOracle(sched, t.B_star, GaussianStream(seed, "hint", t.n * t.m))
        return Alg1Controller(cc, t.Q, t.R, preset.K0, oracle, eta), oracle, "B"
    if algorithm == "alg2":
        sched = default_schedule("A", 2.0, len(taus), taus, theta, adversarial)
        oracle = HintOracle(sched, t.A_star, GaussianStream(seed, "hint", t.n * t.n))
        return Alg2Controller(cc, t.Q, t.R, preset.K0, oracle, eta), oracle, "A"
    if algorithm == "scalarB":
        if (t.n, t.m) != (1, 1):
            raise ConfigError("scalarB needs a scalar plant", field="algorithm")
        limit = preset.eps0 / (4.0 * cc.k)
        eps = float(cfg.params.get("bhat_eps", limit))
        if eps > limit:
            raise ConfigError(f"bhat_eps must not exceed eps0/(4k) = {limit:.6g}", field="params.bhat_eps")
        sched = scalar_variant_schedule(cc.r, cc.k, len(taus), taus, theta)
        oracle = HintOracle(sched, t.B_star, GaussianStream(seed, "hint", 1))
        signs = np.sign(GaussianStream(seed, "bhat", 1).block(1, len(taus))[:, 0])
        signs[signs == 0] = 1.0
        bhat = lambda i: t.B_star + eps * signs[i - 1]
        return ScalarHintBController(cc, t.Q, t.R, preset.K0, oracle, bhat, eta), oracle, "B"
    raise ConfigError(f"unknown algorithm {algorithm!r}", field="algorithm")


def run_cell(cfg: ExperimentConfig, T: int, seed: int, dump_dir: str | None = None):
    """Simulate one (T, seed) cell; returns ``(record, epoch_rows)``."""
    start = time.perf_counter()
    preset = resolve_plant(cfg.plant)
    truth = preset.truth
    controller, oracle, _ = build_run(cfg, preset, T, seed)
    traj, ledger, epoch_log = rollout(truth, controller, T, seed)
    theta_star = truth.theta_star
    rows, deltas = [], []
    for rec in epoch_log:
        h = oracle.record(rec.i) if oracle is not None else None
        d = float(np.linalg.norm(np.hstack([rec.A, rec.B]) - theta_star, 2)) if rec.A is not None else math.nan
        stable = int(rec.K is not None and truth.closed_loop_radius(rec.K) < 1.0)
        deltas.append(d)
        rows.append({"T": T, "seed": seed, "i": rec.i, "tau_i": rec.tau,
                     "gamma_i": h.gamma if h is not None else 0.0,
                     "E_norm": h.E_norm if h is not None else 0.0, "delta_norm": d,
                     "K_norm": rec.K_norm, "stable": stable, "aborted": int(rec.aborted)})
    info = controller.summary()
    regret = ledger.regret if not traj.diverged else math.inf
    paired = ledger.paired_regret if not traj.diverged else math.inf
    record = {"config_hash": cfg.config_hash, "algorithm": cfg.algorithm, "seed": seed, "T": T,
              "regret": regret, "paired_regret": paired, "aborted": bool(info["aborted"]),
              "abort_t": info["abort_t"], "diverged": traj.diverged, "n_s": info.get("n_s"),
              "no_curvature": bool(info.get("no_curvature", False)), "delta_norms": deltas,
              "wall_time": time.perf_counter() - start}
    if dump_dir is not None:
        _dump_trajectory(Path(dump_dir) / f"traj_T{T}_s{seed}.csv", traj)
    return record, rows


def _dump_trajectory(path: Path, traj) -> None:
    n, m = traj.xs.shape[1], traj.us.shape[1]
    header = ["t"] + [f"x{j}" for j in range(n)] + [f"u{j}" for j in range(m)] + [f"w{j}" for j in range(n)] + ["cost"]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=" ")
        w.writerow(header)
        for t in range(traj.steps):
            w.writerow([t + 1, *map(repr, traj.xs[t]), *map(repr, traj.us[t]), *map(repr, traj.ws[t]),
                        repr(traj.costs[t])])


def _cell(args):
    return run_cell(*args)


# -- fits and summaries -----------------------------------------------------------

def _r2(y, yhat) -> float:
    y, yhat = np.asarray(y, float), np.asarray(yhat, float)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return 1.0 if np.allclose(y, yhat) else 0.0
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def group_medians(records, metric: str = "paired"):
    key = "paired_regret" if metric == "paired" else "regret"
    by_T: dict[int, list[float]] = {}
    for rec in records:
        by_T.setdefault(int(rec["T"]), []).append(float(rec[key]))
    Ts = sorted(by_T)
    return Ts, by_T


def fit_regret_growth(records, metric: str = "paired", min_horizons: int = MIN_HORIZONS,
                      min_seeds: int = MIN_SEEDS) -> dict:
    """Least-squares fits of median regret against ``log^2 T`` and ``T^alpha``.

    ``c_log2`` is the slope of ``median ~ a + c log^2 T``; ``alpha`` is the
    slope of ``log median ~ b + alpha log T``. Both R^2 values are measured
    on the medians themselves so they are comparable.
    """
    Ts, by_T = group_medians(records, metric)
    if len(Ts) < min_horizons:
        raise InsufficientData(f"need at least {min_horizons} horizons, got {len(Ts)}")
    short = [T for T in Ts if len(by_T[T]) < min_seeds]
    if short:
        raise InsufficientData(f"need at least {min_seeds} seeds per horizon; short at T={short}")
    T_arr = np.array(Ts, float)
    med = np.array([np.median(by_T[T]) for T in Ts])
    if not np.all(np.isfinite(med)):
        raise InsufficientData("median regret is not finite at some horizon")
    L2 = np.log(T_arr) ** 2
    X = np.column_stack([np.ones_like(L2), L2])
    coef, *_ = np.linalg.lstsq(X, med, rcond=None)
    pred_log2 = X @ coef
    out = {"c_log2": float(coef[1]), "intercept_log2": float(coef[0]), "r2_log2": _r2(med, pred_log2),
           "T": Ts, "median": [float(v) for v in med],
           "residuals": {"log2": [float(v) for v in med - pred_log2]}}
    if np.all(med > 0):
        Xp = np.column_stack([np.ones_like(T_arr), np.log(T_arr)])
        pc, *_ = np.linalg.lstsq(Xp, np.log(med), rcond=None)
        pred_pow = np.exp(Xp @ pc)
        out.update(alpha=float(pc[1]), scale_power=float(np.exp(pc[0])), r2_power=_r2(med, pred_pow))
        out["residuals"]["power"] = [float(v) for v in med - pred_pow]
    else:
        out.update(alpha=math.nan, scale_power=math.nan, r2_power=math.nan)
        out["residuals"]["power"] = []
    return out


def summarize(records, cfg: ExperimentConfig) -> dict:
    records = sorted(records, key=lambda r: (r["T"], r["seed"]))
    Ts, by_T = group_medians(records, cfg.regret_metric)
    _, raw_by_T = group_medians(records, "raw")
    aborted: dict[int, list[bool]] = {}
    for rec in records:
        aborted.setdefault(rec["T"], []).append(bool(rec["aborted"] or rec["diverged"]))

    def iqr(v):
        q75, q25 = np.percentile(v, [75, 25])
        return float(q75 - q25)

    try:
        f = fit_regret_growth(records, cfg.regret_metric)
        fit = {k: f[k] for k in ("c_log2", "alpha", "r2_log2", "r2_power")}
    except InsufficientData:
        fit = None
    return {
        "config_hash": cfg.config_hash,
        "algorithm": cfg.algorithm,
        "regret_metric": cfg.regret_metric,
        "T": Ts,
        "seeds": cfg.seed_count,
        "base_seed": cfg.base_seed,
        "regret_median": [float(np.median(by_T[T])) for T in Ts],
        "regret_iqr": [iqr(by_T[T]) for T in Ts],
        "raw_regret_median": [float(np.median(raw_by_T[T])) for T in Ts],
        "abort_rate": [float(np.mean(aborted[T])) for T in Ts],
        "fit": fit,
    }


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def write_summary(path: Path, summary: dict) -> None:
    text = json.dumps(summary, sort_keys=True, indent=2, default=_json_default, allow_nan=True)
    Path(path).write_text(text + "\n")


def run_experiment(cfg: ExperimentConfig, out: str | None = None, workers: int = 1,
                   traj_dump: bool | None = None) -> list[dict]:
    """Run every (T, seed) cell, writing records, epoch rows and the summary.

    Records are streamed to ``records.jsonl`` as cells finish; on interrupt
    the summary is written from whatever completed before re-raising.
    """
    out_dir = Path(out or cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump = cfg.trajectory_dump if traj_dump is None else traj_dump
    dump_dir = str(out_dir / "trajectories") if dump else None
    preset = resolve_plant(cfg.plant)
    for T in cfg.horizons:
        if cfg.algorithm not in ("baseline-optimal", "baseline-static_K0"):
            try:
                cc = controller_config(cfg, preset, T)
                epoch_schedule(cc.tau1, cc.r, T, alg=_alg_index(cfg.algorithm))
            except HorizonTooShort as exc:
                raise ConfigError(str(exc), field="horizons") from None
    cells = [(cfg, T, s, dump_dir) for T in cfg.horizons for s in cfg.seeds]
    records: list[dict] = []
    epoch_rows: list[dict] = []
    with open(out_dir / "records.jsonl", "w") as rec_fh:
        try:
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    results = pool.map(_cell, cells)
                    for rec, rows in results:
                        records.append(rec)
                        epoch_rows.extend(rows)
                        rec_fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")
                        rec_fh.flush()
            else:
                for cell in cells:
                    rec, rows = _cell(cell)
                    records.append(rec)
                    epoch_rows.extend(rows)
                    rec_fh.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")
                    rec_fh.flush()
        finally:
            records.sort(key=lambda r: (r["T"], r["seed"]))
            epoch_rows.sort(key=lambda r: (r["T"], r["seed"], r["i"]))
            with open(out_dir / "epochs.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=EPOCH_COLUMNS)
                w.writeheader()
                w.writerows(epoch_rows)
            if records:
                write_summary(out_dir / "summary.json", summarize(records, cfg))
    return records


def read_records(in_dir) -> list[dict]:
    path = Path(in_dir) / "records.jsonl"
    if not path.exists():
        raise InsufficientData(f"no records.jsonl in {in_dir}")
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
