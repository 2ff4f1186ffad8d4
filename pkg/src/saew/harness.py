"""Experiment runner: configs, seeded runs, CSVs, summaries, plot scripts.

The harness turns a flat INI config into deterministic per-seed runs of one
of four algorithms (the acceleration wrapper, the plain ball subroutine,
l1-regularized dual averaging, or the calibration loop), writes one CSV per
seed plus cross-seed summary tables, and emits gnuplot scripts that render
the standard diagnostic figures offline.

Seeding contract: the experiment's seed list is used directly as
environment master seeds; each environment expands its master seed into
per-component child streams, so runs are independent and adding a seed
never perturbs the others.  Multi-seed execution can be parallelized
across processes; workers share no mutable state and results are merged
after completion, so parallel output is byte-identical to serial output.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from saew.baselines import rda_init, rda_predict, rda_step
from saew.calibration import run_calibration
from saew.core import (
    BASE_COLUMNS,
    Environment,
    L1Ball,
    ProblemParams,
    RunRecord,
    config_hash,
)
from saew.engine import saew_estimators, saew_init, saew_step
from saew.losses import (
    make_quantile_env,
    make_square_env,
    make_truncated_square_env,
    pinball_subgrad,
    square_grad,
    true_excess_risk,
)
from saew.subroutine import eg_init, eg_predict, eg_update

ENVIRONMENTS = ("square", "truncated_square", "quantile")
ALGORITHMS = ("saew", "eg", "rda", "calibrate")

TRACE_COLUMNS = ("err_t", "a_prime", "b_prime", "l2_bound")
CALIBRATION_COLUMNS = ("j", "grid_size", "best_candidate", "meta_risk",
                       "best_risk")

_TINY = 1e-300  # floor before taking logs of error norms


class ConfigError(ValueError):
    """An invalid experiment configuration; ``key`` names the bad field."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


# ============================================================
# Experiment configuration
# ============================================================

@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: an environment, an algorithm, a horizon, and seeds.

    Serialized as a flat INI file with a single ``[experiment]`` section;
    the round trip through :meth:`to_ini` / :meth:`from_ini` is lossless.

    Attributes:
        env: environment family (``square | truncated_square | quantile``).
        d: covariate dimension (quantile runs prepend an intercept, so
            parameter vectors have ``d + 1`` entries there).
        d0: number of nonzero coordinates of the environment's true
            parameter.
        noise_sd: response noise standard deviation.
        algorithm: ``saew | eg | rda | calibrate``.
        T: horizon (number of stream samples), >= 1.
        seeds: nonempty tuple of master seeds, one run per seed.
        outdir: output directory; all files are written under it.
        trace_bounds: append per-step bound columns to wrapper run CSVs.
        alpha_q: quantile level (quantile environment only).
        x_bound: covariate sup-norm bound (truncated environment only).
        noise_bound_sds: noise truncation in standard deviations
            (truncated environment only).
        saew_d0: wrapper sparsity target; ``-1`` derives it from the
            environment (``d0``, plus one for the quantile intercept).
        alpha: strong-convexity constant assumed by the wrapper.
        U: l1-radius of the initial ball (wrapper and subroutine runs).
        B: gradient sup-norm bound declared to the optimizer.
        delta: confidence level for the wrapper / calibration.
        rda_gamma: dual-averaging step-size scale, > 0.
        rda_rho: sparsity-enhancing threshold scale, >= 0.
        rda_lambda: fixed l1 penalty, >= 0.
        mc_risk: quantile runs only — estimate risks by paired Monte
            Carlo on the seeded holdout (columns gain a real standard
            error) instead of the Gaussian closed form.
        cal_Y: response clipping bound for calibration runs.
        cal_budget: calibration compute budget in candidate-steps.
        cal_clamp_lo / cal_clamp_hi: optional grid exponent clamp; set
            both or neither.
    """

    env: str
    d: int
    d0: int
    noise_sd: float
    algorithm: str
    T: int
    seeds: tuple[int, ...]
    outdir: str
    trace_bounds: bool = False
    alpha_q: float = 0.8
    x_bound: float = 2.0
    noise_bound_sds: float = 3.0
    saew_d0: int = -1
    alpha: float = 1.0
    U: float = 1.0
    B: float = 1.0
    delta: float = 0.05
    rda_gamma: float = 1.0
    rda_rho: float = 0.0
    rda_lambda: float = 0.0
    mc_risk: bool = False
    cal_Y: float = 1.0
    cal_budget: int = 50_000_000
    cal_clamp_lo: int | None = None
    cal_clamp_hi: int | None = None

    # ---- validation ----------------------------------------------------

    def validate(self) -> None:
        """Raise :class:`ConfigError` naming the first offending field."""
        if self.env not in ENVIRONMENTS:
            raise ConfigError("env", f"must be one of {ENVIRONMENTS}, "
                                     f"got {self.env!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"must be one of {ALGORITHMS}, "
                                           f"got {self.algorithm!r}")
        if self.d < 1:
            raise ConfigError("d", f"must be >= 1, got {self.d}")
        if not (1 <= self.d0 <= self.d):
            raise ConfigError("d0", f"must satisfy 1 <= d0 <= d, "
                                    f"got {self.d0}")
        if self.noise_sd < 0.0:
            raise ConfigError("noise_sd", f"must be >= 0, got {self.noise_sd}")
        if self.T < 1:
            raise ConfigError("T", f"must be >= 1, got {self.T}")
        if not self.seeds:
            raise ConfigError("seeds", "must be nonempty")
        if not self.outdir:
            raise ConfigError("outdir", "must be nonempty")
        if not (0.0 < self.alpha_q < 1.0):
            raise ConfigError("alpha_q", f"must lie in (0, 1), "
                                         f"got {self.alpha_q}")
        if self.x_bound <= 0.0:
            raise ConfigError("x_bound", f"must be > 0, got {self.x_bound}")
        if self.noise_bound_sds <= 0.0:
            raise ConfigError("noise_bound_sds",
                              f"must be > 0, got {self.noise_bound_sds}")
        if self.saew_d0 < -1:
            raise ConfigError("saew_d0", f"must be -1 (auto) or >= 0, "
                                         f"got {self.saew_d0}")
        for key in ("alpha", "U", "B", "cal_Y"):
            value = getattr(self, key)
            if not (value > 0.0) or not math.isfinite(value):
                raise ConfigError(key, f"must be > 0, got {value}")
        if not (0.0 < self.delta < 1.0):
            raise ConfigError("delta", f"must lie in (0, 1), "
                                       f"got {self.delta}")
        if self.algorithm == "rda":
            if self.rda_gamma <= 0.0:
                raise ConfigError("rda_gamma",
                                  f"must be > 0, got {self.rda_gamma}")
            if self.rda_rho < 0.0:
                raise ConfigError("rda_rho",
                                  f"must be >= 0, got {self.rda_rho}")
            if self.rda_lambda < 0.0:
                raise ConfigError("rda_lambda",
                                  f"must be >= 0, got {self.rda_lambda}")
        if self.mc_risk and self.env != "quantile":
            raise ConfigError("mc_risk",
                              "only quantile runs use Monte-Carlo risks")
        if self.cal_budget < 1:
            raise ConfigError("cal_budget",
                              f"must be >= 1, got {self.cal_budget}")
        if (self.cal_clamp_lo is None) != (self.cal_clamp_hi is None):
            raise ConfigError("cal_clamp_lo",
                              "set both clamp bounds or neither")
        if (self.cal_clamp_lo is not None
                and self.cal_clamp_lo > self.cal_clamp_hi):
            raise ConfigError("cal_clamp_lo",
                              f"must be <= cal_clamp_hi, got "
                              f"({self.cal_clamp_lo}, {self.cal_clamp_hi})")
        if self.algorithm == "calibrate" and self.env == "quantile":
            raise ConfigError("algorithm",
                              "calibrate requires a square-loss environment")

    # ---- derived values --------------------------------------------------

    @property
    def cal_clamp(self) -> tuple[int, int] | None:
        if self.cal_clamp_lo is None:
            return None
        return (self.cal_clamp_lo, self.cal_clamp_hi)

    def wrapper_d0(self) -> int:
        """The sparsity target handed to the wrapper.

        ``-1`` resolves to the environment's own sparsity — ``d0`` plus
        one for the quantile intercept coordinate (nonzero whenever the
        noise quantile is).
        """
        if self.saew_d0 >= 0:
            return self.saew_d0
        return self.d0 + 1 if self.env == "quantile" else self.d0

    def as_mapping(self) -> dict:
        """Plain dict of all fields (hashing / metadata)."""
        out = dataclasses.asdict(self)
        out["seeds"] = list(self.seeds)
        return out

    # ---- INI round trip --------------------------------------------------

    def to_ini(self, path: str | Path) -> None:
        """Write the config as a one-section flat INI file."""
        parser = configparser.ConfigParser()
        parser.optionxform = str  # preserve key case (T vs t, U, B, cal_Y)
        section: dict[str, str] = {}
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if field.name == "seeds":
                section[field.name] = ",".join(str(s) for s in value)
            elif value is None:
                section[field.name] = ""
            elif isinstance(value, bool):
                section[field.name] = "true" if value else "false"
            elif isinstance(value, float):
                section[field.name] = repr(value)
            else:
                section[field.name] = str(value)
        parser["experiment"] = section
        with open(path, "w") as fh:
            parser.write(fh)

    @classmethod
    def from_ini(cls, path: str | Path) -> "ExperimentConfig":
        """Parse and validate a config file written by :meth:`to_ini`.

        Raises:
            ConfigError: unknown key, unparseable value, or missing
                required key — the message names the offending key.
            OSError: unreadable file.
        """
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keys are case-sensitive
        text = Path(path).read_text()
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError("file", f"not valid INI: {exc}") from exc
        if not parser.has_section("experiment"):
            raise ConfigError("experiment", "missing [experiment] section")
        raw = dict(parser["experiment"])

        fields = {f.name: f for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in fields:
                raise ConfigError(key, "unknown config key")
        kwargs: dict = {}
        for name, field in fields.items():
            if name not in raw:
                if field.default is dataclasses.MISSING:
                    raise ConfigError(name, "required key is missing")
                continue
            kwargs[name] = _parse_field(name, raw[name].strip())
        config = cls(**kwargs)
        config.validate()
        return config


def _parse_field(name: str, text: str):
    """Convert one INI value to its typed field, or raise ConfigError."""
    try:
        if name == "seeds":
            seeds = tuple(int(s) for s in text.split(",") if s.strip())
            return seeds
        if name in ("d", "d0", "T", "saew_d0", "cal_budget"):
            return int(text)
        if name in ("cal_clamp_lo", "cal_clamp_hi"):
            return None if text == "" else int(text)
        if name in ("trace_bounds", "mc_risk"):
            lowered = text.lower()
            if lowered not in ("true", "false"):
                raise ValueError(f"expected true/false, got {text!r}")
            return lowered == "true"
        if name in ("noise_sd", "alpha_q", "x_bound", "noise_bound_sds",
                    "alpha", "U", "B", "delta", "rda_gamma", "rda_rho",
                    "rda_lambda", "cal_Y"):
            return float(text)
        return text  # env, algorithm, outdir
    except ValueError as exc:
        raise ConfigError(name, f"cannot parse value {text!r}: {exc}") from exc


# ============================================================
# Environment and oracle construction
# ============================================================

def build_environment(config: ExperimentConfig, seed: int) -> Environment:
    """Instantiate the configured environment for one master seed."""
    if config.env == "square":
        return make_square_env(config.d, config.d0, config.noise_sd, seed)
    if config.env == "truncated_square":
        return make_truncated_square_env(
            config.d, config.d0, config.noise_sd, seed,
            x_bound=config.x_bound, noise_bound_sds=config.noise_bound_sds)
    return make_quantile_env(config.d, config.d0, config.alpha_q,
                             config.noise_sd, seed)


def _gradient_fn(env: Environment
                 ) -> Callable[[np.ndarray, np.ndarray, float], np.ndarray]:
    if env.loss == "square":
        return square_grad
    alpha_q = float(env.config["alpha_q"])
    return lambda theta, x, y: pinball_subgrad(theta, x, y, alpha_q)


def _risk_fn(env: Environment, mc_risk: bool
             ) -> Callable[[np.ndarray], tuple[float, float]]:
    """Return ``theta -> (excess risk, standard error)``."""
    if mc_risk:
        def mc(theta: np.ndarray) -> tuple[float, float]:
            est = true_excess_risk(theta, env)
            return float(est), float(getattr(est, "se", 0.0))
        return mc

    exact = env.excess_risk_exact

    def closed_form(theta: np.ndarray) -> tuple[float, float]:
        return float(exact(theta)), 0.0

    return closed_form


# ============================================================
# Single-seed runs
# ============================================================

def run_one_seed(config: ExperimentConfig, seed: int) -> RunRecord:
    """Run the configured algorithm once and return its per-step record.

    Pure apart from RNG seeded by ``seed``; no files are touched, so seeds
    can run in separate processes and merge results deterministically.
    """
    env = build_environment(config, seed)
    xs, ys = env.draw(config.T)
    grad = _gradient_fn(env)
    risk_of = _risk_fn(env, config.mc_risk)
    theta_star = env.theta_star_metrics
    hash_ = config_hash(config.as_mapping())

    columns: tuple[str, ...] = BASE_COLUMNS
    if env.loss == "pinball":
        columns = columns + ("risk_se",)
    if config.algorithm == "saew" and config.trace_bounds:
        columns = columns + TRACE_COLUMNS

    if config.algorithm == "saew":
        rows = _saew_rows(config, env, xs, ys, grad, risk_of, theta_star)
    elif config.algorithm == "eg":
        rows = _eg_rows(config, env, xs, ys, grad, risk_of, theta_star)
    elif config.algorithm == "rda":
        rows = _rda_rows(config, env, xs, ys, grad, risk_of, theta_star)
    else:
        raise ConfigError("algorithm",
                          f"run_one_seed cannot run {config.algorithm!r}")
    record = RunRecord(columns=columns, rows=rows, seed=seed,
                       config_hash=hash_)
    record.validate()
    return record


def _metrics(theta_hat, theta_tilde, theta_star, risk_of, cum_risk):
    """Shared per-step metric block: (l2, risk_hat, risk_tilde, se, cum)."""
    l2 = float(np.linalg.norm(theta_tilde - theta_star))
    risk_hat, _ = risk_of(theta_hat)
    risk_tilde, se = risk_of(theta_tilde)
    # True excess risk is nonnegative; a Monte-Carlo estimate can dip
    # below zero, so only the nonnegative part accumulates.
    cum_risk += max(risk_hat, 0.0)
    return l2, risk_hat, risk_tilde, se, cum_risk


def _saew_rows(config, env, xs, ys, grad, risk_of, theta_star):
    params = ProblemParams(d0=config.wrapper_d0(), alpha=config.alpha,
                           U=config.U, B=config.B, delta=config.delta)
    state = saew_init(params, env.dimension)
    d0 = max(params.d0, 1)
    rows = []
    cum = 0.0
    for t in range(config.T):
        x, y = xs[t], float(ys[t])
        theta_hat = saew_estimators(state)[0]
        saew_step(state, lambda theta: grad(theta, x, y))
        theta_tilde = saew_estimators(state)[1]
        l2, r_hat, r_tilde, se, cum = _metrics(theta_hat, theta_tilde,
                                               theta_star, risk_of, cum)
        row = (float(t + 1), l2, r_hat, r_tilde, cum,
               state.eps_t, float(state.session))
        if env.loss == "pinball":
            row = row + (se,)
        if config.trace_bounds:
            row = row + (state.err_t, state.a_prime_t, state.b_prime_t,
                         state.eps_t / (2.0 * math.sqrt(2.0 * d0)))
        rows.append(row)
    return rows


def _eg_rows(config, env, xs, ys, grad, risk_of, theta_star):
    ball = L1Ball(np.zeros(env.dimension), config.U)
    state = eg_init(ball, config.B)
    average = np.zeros(env.dimension)
    rows = []
    cum = 0.0
    for t in range(config.T):
        x, y = xs[t], float(ys[t])
        theta_hat = eg_predict(state)
        eg_update(state, grad(theta_hat, x, y))
        average += (theta_hat - average) / (t + 1)
        l2, r_hat, r_tilde, se, cum = _metrics(theta_hat, average,
                                               theta_star, risk_of, cum)
        row = (float(t + 1), l2, r_hat, r_tilde, cum, 0.0, 0.0)
        if env.loss == "pinball":
            row = row + (se,)
        rows.append(row)
    return rows


def _rda_rows(config, env, xs, ys, grad, risk_of, theta_star):
    state = rda_init(env.dimension, config.rda_gamma, rho=config.rda_rho,
                     lam=config.rda_lambda)
    rows = []
    cum = 0.0
    for t in range(config.T):
        x, y = xs[t], float(ys[t])
        theta_hat = rda_predict(state)
        rda_step(state, grad(theta_hat, x, y))
        theta_tilde = rda_predict(state)
        l2, r_hat, r_tilde, se, cum = _metrics(theta_hat, theta_tilde,
                                               theta_star, risk_of, cum)
        row = (float(t + 1), l2, r_hat, r_tilde, cum, 0.0, 0.0)
        if env.loss == "pinball":
            row = row + (se,)
        rows.append(row)
    return rows


# ============================================================
# Multi-seed experiments
# ============================================================

def _seed_csv_name(seed: int) -> str:
    return f"run_seed{seed}.csv"


def run_experiment(config: ExperimentConfig, workers: int = 1) -> list[Path]:
    """Run every seed, write per-seed CSVs plus ``summary.csv``.

    Runs are independent; with ``workers > 1`` they execute in separate
    processes and the merged output is identical to serial execution.

    Returns the written file paths (per-seed CSVs, then summary files).

    Raises:
        ConfigError: invalid configuration.
        OSError: unwritable output directory.
    """
    config.validate()
    if config.algorithm == "calibrate":
        return run_calibrate(config)
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_one_seed,
                                    [config] * len(config.seeds),
                                    config.seeds))
    else:
        records = [run_one_seed(config, seed) for seed in config.seeds]

    paths = []
    for record in records:
        path = outdir / _seed_csv_name(record.seed)
        record.to_csv(path)
        paths.append(path)
    config.to_ini(outdir / "config.ini")
    summary = summarize(records)
    paths.extend(write_summary(summary, outdir))
    return paths


def run_calibrate(config: ExperimentConfig) -> list[Path]:
    """Run the calibration loop per seed; one per-session CSV per seed.

    Each CSV follows the calibration schema
    ``j,grid_size,best_candidate,meta_risk,best_risk``.

    Raises:
        ConfigError: invalid configuration.
        BudgetExceededError: projected grid work above ``cal_budget``.
        OSError: unwritable output directory.
    """
    config.validate()
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for seed in config.seeds:
        env = build_environment(config, seed)
        state = run_calibration(env.draw, T=config.T, d=env.dimension,
                                Y=config.cal_Y, delta=config.delta,
                                budget=config.cal_budget,
                                exponent_clamp=config.cal_clamp)
        lines = [",".join(CALIBRATION_COLUMNS)]
        for row in state.session_rows:
            lines.append(f"{row.j},{row.grid_size},{row.best_candidate},"
                         f"{format(row.meta_risk, '.12g')},"
                         f"{format(row.best_risk, '.12g')}")
        path = outdir / f"calibration_seed{seed}.csv"
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    config.to_ini(outdir / "config.ini")
    return paths


# ============================================================
# Summaries
# ============================================================

@dataclasses.dataclass
class SeedScalars:
    """End-of-run scalars for one seed."""

    seed: int
    final_log_l2: float
    final_cum_risk: float
    slope: float


@dataclasses.dataclass
class Summary:
    """Cross-seed aggregates: per-step quartile curves plus finals.

    ``curves`` maps metric name (``log_l2`` / ``cum_risk``) to a dict of
    aggregate name (``median``, ``q1``, ``q3``, ``mean``) to arrays over
    ``t``.
    """

    t: np.ndarray
    curves: dict[str, dict[str, np.ndarray]]
    finals: list[SeedScalars]


def loglog_slope(t: np.ndarray, values: np.ndarray,
                 t_min: float | None = None) -> float:
    """OLS slope of ``log(values)`` against ``log(t)``.

    Fits over ``t >= t_min`` (default: the second half, ``t >= T/2``).
    Values are floored at a tiny positive number before the log.

    Raises:
        ValueError: fewer than two points in the fit window.
    """
    t = np.asarray(t, float)
    values = np.asarray(values, float)
    if t_min is None:
        t_min = float(t[-1]) / 2.0
    mask = t >= t_min
    if int(mask.sum()) < 2:
        raise ValueError("need at least two points to fit a slope")
    log_t = np.log(t[mask])
    log_v = np.log(np.maximum(values[mask], _TINY))
    slope, _ = np.polyfit(log_t, log_v, 1)
    return float(slope)


def summarize(records: Sequence[RunRecord]) -> Summary:
    """Aggregate per-step metrics across seeds.

    Emits per-``t`` median, quartiles, and mean of the log l2 error and
    of the cumulative excess risk, plus per-seed end-of-run scalars
    (final log l2 error, final cumulative risk, and the fitted log-log
    slope of the l2 error over the second half of the run).

    Raises:
        ValueError: no records, or records with mismatched schemas.
    """
    if not records:
        raise ValueError("summarize needs at least one run record")
    columns = records[0].columns
    length = len(records[0].rows)
    for record in records[1:]:
        if record.columns != columns:
            raise ValueError("schema mismatch: run records have different "
                             f"columns ({record.columns} vs {columns})")
        if len(record.rows) != length:
            raise ValueError("schema mismatch: run records have different "
                             f"lengths ({len(record.rows)} vs {length})")

    t_col = columns.index("t")
    l2_col = columns.index("l2_error")
    cum_col = columns.index("cum_risk")
    t = np.array([row[t_col] for row in records[0].rows])

    log_l2 = np.array([[math.log(max(row[l2_col], _TINY)) for row in r.rows]
                       for r in records])
    cum = np.array([[row[cum_col] for row in r.rows] for r in records])

    def aggregates(matrix: np.ndarray) -> dict[str, np.ndarray]:
        return {
            "median": np.median(matrix, axis=0),
            "q1": np.percentile(matrix, 25, axis=0),
            "q3": np.percentile(matrix, 75, axis=0),
            "mean": np.mean(matrix, axis=0),
        }

    finals = []
    for r, log_row in zip(records, log_l2):
        l2_series = np.array([row[l2_col] for row in r.rows])
        finals.append(SeedScalars(
            seed=r.seed,
            final_log_l2=float(log_row[-1]),
            final_cum_risk=float(r.rows[-1][cum_col]),
            slope=loglog_slope(t, l2_series),
        ))
    return Summary(t=t,
                   curves={"log_l2": aggregates(log_l2),
                           "cum_risk": aggregates(cum)},
                   finals=finals)


_SUMMARY_AGGS = ("median", "q1", "q3", "mean")


def write_summary(summary: Summary, outdir: str | Path) -> list[Path]:
    """Write ``summary.csv`` (per-t curves) and ``finals.csv`` (scalars)."""
    outdir = Path(outdir)
    header = ["t"]
    for metric in ("log_l2", "cum_risk"):
        header.extend(f"{metric}_{agg}" for agg in _SUMMARY_AGGS)
    lines = [",".join(header)]
    for k in range(summary.t.shape[0]):
        fields = [str(int(summary.t[k]))]
        for metric in ("log_l2", "cum_risk"):
            fields.extend(format(float(summary.curves[metric][agg][k]), ".12g")
                          for agg in _SUMMARY_AGGS)
        lines.append(",".join(fields))
    summary_path = outdir / "summary.csv"
    summary_path.write_text("\n".join(lines) + "\n")

    lines = ["seed,final_log_l2,final_cum_risk,slope"]
    for s in summary.finals:
        lines.append(f"{s.seed},{format(s.final_log_l2, '.12g')},"
                     f"{format(s.final_cum_risk, '.12g')},"
                     f"{format(s.slope, '.12g')}")
    finals_path = outdir / "finals.csv"
    finals_path.write_text("\n".join(lines) + "\n")
    return [summary_path, finals_path]


def load_run_records(outdir: str | Path) -> list[RunRecord]:
    """Load every per-seed run CSV under ``outdir``, sorted by seed.

    Raises:
        ValueError: no run CSVs present.
    """
    outdir = Path(outdir)
    paths = sorted(outdir.glob("run_seed*.csv"),
                   key=lambda p: int(p.stem.removeprefix("run_seed")))
    if not paths:
        raise ValueError(f"no run_seed*.csv files under {outdir}")
    return [RunRecord.from_csv(p) for p in paths]


# ============================================================
# Plot scripts
# ============================================================

_GP_HEADER = """\
# Generated by the saew harness; run offline with: gnuplot {name}
set datafile separator ','
set terminal svg size 800,560
set key left bottom
"""


def emit_plots(outdir: str | Path) -> list[Path]:
    """Write gnuplot scripts (plus data files) for the standard figures.

    Three scripts, all referencing files by relative name only:

    * ``plot_l2.gp`` — median log l2 error with quartile band vs log t;
    * ``plot_cum_risk.gp`` — median cumulative excess risk vs t;
    * ``plot_sessions.gp`` — confidence-radius staircase from the first
      seed's run: the radius ``eps_t`` and its running minimum above the
      l2 error curve, with one vertical marker per recorded session
      start.

    Requires ``summary.csv`` and at least one ``run_seed*.csv`` in
    ``outdir`` (produced by :func:`run_experiment`).
    """
    outdir = Path(outdir)
    if not (outdir / "summary.csv").exists():
        raise ValueError(f"{outdir} has no summary.csv; run the experiment "
                         "or `summarize` first")
    records = load_run_records(outdir)
    paths = []

    l2_script = _GP_HEADER.format(name="plot_l2.gp") + (
        "set output 'l2_error.svg'\n"
        "set logscale x\n"
        "set xlabel 't'\n"
        "set ylabel 'log l2 error'\n"
        "plot 'summary.csv' using 1:3:4 skip 1 with filledcurves "
        "fill transparent solid 0.2 title 'quartiles', \\\n"
        "     'summary.csv' using 1:2 skip 1 with lines lw 2 "
        "title 'median log l2 error'\n")
    path = outdir / "plot_l2.gp"
    path.write_text(l2_script)
    paths.append(path)

    risk_script = _GP_HEADER.format(name="plot_cum_risk.gp") + (
        "set output 'cum_risk.svg'\n"
        "set xlabel 't'\n"
        "set ylabel 'cumulative excess risk'\n"
        "plot 'summary.csv' using 1:7:8 skip 1 with filledcurves "
        "fill transparent solid 0.2 title 'quartiles', \\\n"
        "     'summary.csv' using 1:6 skip 1 with lines lw 2 "
        "title 'median cumulative excess risk'\n")
    path = outdir / "plot_cum_risk.gp"
    path.write_text(risk_script)
    paths.append(path)

    paths.extend(_emit_session_plot(outdir, records[0]))
    return paths


def _emit_session_plot(outdir: Path, record: RunRecord) -> list[Path]:
    """Staircase data + script for one run's session radii."""
    cols = record.columns
    t_col, l2_col = cols.index("t"), cols.index("l2_error")
    eps_col, ses_col = cols.index("epsilon"), cols.index("session")

    lines = ["t,l2_error,epsilon,eps_min"]
    eps_min = math.inf
    session_starts = []
    prev_session = 0.0
    for row in record.rows:
        eps_min = min(eps_min, row[eps_col])
        if row[ses_col] != prev_session:
            session_starts.append(int(row[t_col]))
            prev_session = row[ses_col]
        lines.append(f"{int(row[t_col])},{format(row[l2_col], '.12g')},"
                     f"{format(row[eps_col], '.12g')},"
                     f"{format(eps_min, '.12g')}")
    data_path = outdir / "sessions.dat"
    data_path.write_text("\n".join(lines) + "\n")

    script = _GP_HEADER.format(name="plot_sessions.gp") + (
        "set output 'sessions.svg'\n"
        "set logscale xy\n"
        "set xlabel 't'\n"
        "set ylabel 'radius / error'\n")
    for t_i in session_starts:
        script += (f"set arrow from {t_i}, graph 0 to {t_i}, graph 1 "
                   "nohead dt 2\n")
    script += (
        "plot 'sessions.dat' using 1:3 skip 1 with steps "
        "title 'confidence radius', \\\n"
        "     'sessions.dat' using 1:4 skip 1 with lines "
        "title 'running minimum radius', \\\n"
        "     'sessions.dat' using 1:2 skip 1 with lines "
        "title 'l2 error'\n")
    script_path = outdir / "plot_sessions.gp"
    script_path.write_text(script)
    return [data_path, script_path]
