"""Forecast-accuracy experiment: TRUTH, EKF, GS_BCK and GS_DEC on a 1D SDE.

Config files are flat ``key = value`` text. ``#`` starts a comment; values
are numeric expressions (``pi``, ``e``, ``+ - * / **`` allowed), comma lists
for the ``initial.*`` keys, or bare words for ``model`` and ``output_dir``.
Unknown keys are errors. See :data:`CONFIG_KEYS` for the full key set.
"""
from __future__ import annotations

import ast
import csv
import logging
import math
import operator
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import DynamicsModel, get_model
from .exceptions import ConfigError, NumericalError
from .fpke_weights import FPKEWeightAdapter, QuadratureSpec
from .metrics import RunReport, report
from .mixture import GaussianMixture, LossFunction, eval_density
from .propagate import PropagationSchedule, propagate_mixture
from .seeder import SeederConfig, SeedingResult, backprop_seed, progressive_selection
from .truth import FPKEGrid, FPKEGridSpec, FPKESolution, expected_loss_on_grid, solve_fpke

log = logging.getLogger(__name__)

METHODS = ("TRUTH", "EKF", "GS_BCK", "GS_DEC")
PERCENTILES = (0, 5, 10, 25, 50, 75, 90, 95, 100)
METRICS = ("L_hat", "R_err", "ISD", "WISD")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "sine"
    model_a: float = -1.0
    model_q: float = 1.0
    initial_weights: tuple = (1.0,)
    initial_means: tuple = (-0.3,)
    initial_covs: tuple = (0.09,)
    loss_mean: float = math.pi / 2
    loss_cov: float = 0.01
    t_d: float = 8.0
    ode_step: float = 0.01
    weight_update_interval: float = 0.5
    seeder_M: int = 5
    seeder_D: float = 0.01
    seeder_beta: float = 0.9
    seeder_w_tol: float = 1e-3
    seeder_max_iter: int = 25
    seeder_max_resample: int = 100
    bck_count: int = 5
    bck_variance: float = 1e-10
    truth_x_lo: float = -20.0
    truth_x_hi: float = 20.0
    truth_nodes: int = 4001
    truth_dt: float = 1e-3
    quadrature_nodes: int = 801
    quadrature_sigma_pad: float = 6.0
    monte_carlo_runs: int = 50
    seed: int = 0
    output_dir: str = "results"

    def __post_init__(self):
        for name in ("initial_weights", "initial_means", "initial_covs"):
            object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(getattr(self, name))))
        if self.monte_carlo_runs < 1:
            raise ConfigError("monte_carlo_runs must be at least 1")
        # validate every sub-config eagerly
        try:
            self.initial_pdf()
            self.loss()
            self.schedule()
            self.seeder_config(self.seed)
            self.grid_spec()
            self.quadrature()
            self.dynamics()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.bck_count < 1 or self.bck_variance <= 0:
            raise ConfigError("bck.count must be >= 1 and bck.variance > 0")

    def dynamics(self) -> DynamicsModel:
        params = {"q": self.model_q}
        if self.model == "linear":
            params["a"] = self.model_a
        return get_model(self.model, **params)

    def initial_pdf(self) -> GaussianMixture:
        return GaussianMixture.from_arrays(self.initial_weights, self.initial_means, self.initial_covs)

    def loss(self) -> LossFunction:
        return LossFunction([self.loss_mean], [[self.loss_cov]])

    def schedule(self) -> PropagationSchedule:
        return PropagationSchedule(0.0, self.t_d, self.ode_step, self.weight_update_interval)

    def seeder_config(self, rng_seed: int) -> SeederConfig:
        return SeederConfig(t_d=self.t_d, M=self.seeder_M, D=np.array([[self.seeder_D]]),
                            w_tol=self.seeder_w_tol, beta=self.seeder_beta, max_iter=self.seeder_max_iter,
                            rng_seed=rng_seed, ode_step=self.ode_step, max_resample=self.seeder_max_resample)

    def grid_spec(self) -> FPKEGridSpec:
        return FPKEGridSpec(self.truth_x_lo, self.truth_x_hi, self.truth_nodes, self.truth_dt)

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(nodes=self.quadrature_nodes, sigma_pad=self.quadrature_sigma_pad)


PRESETS = {"paper_experiment": ExperimentConfig()}

_GROUPS = ("model", "initial", "loss", "seeder", "bck", "truth", "quadrature")


def _config_key(name: str) -> str:
    group, _, rest = name.partition("_")
    return f"{group}.{rest}" if rest and group in _GROUPS else name


# config-file key (e.g. ``seeder.M``) -> dataclass field (``seeder_M``)
CONFIG_KEYS = {_config_key(f.name): f.name for f in fields(ExperimentConfig)}
_LIST_FIELDS = {"initial_weights", "initial_means", "initial_covs"}
_STR_FIELDS = {"model", "output_dir"}
_INT_FIELDS = {f.name for f in fields(ExperimentConfig) if f.type in ("int", int)}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_CONSTS = {"pi": math.pi, "e": math.e}


def _eval_number(text: str) -> float:
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id in _CONSTS:
            return _CONSTS[node.id]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            left, right = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Pow) and abs(right) > 1024:
                raise ConfigError(f"exponent too large in {text!r}")
            return _BINOPS[type(node.op)](float(left), right) if isinstance(node.op, ast.Pow) else \
                _BINOPS[type(node.op)](left, right)
        raise ConfigError(f"unsupported expression {text!r}")

    try:
        value = ev(ast.parse(text.strip(), mode="eval"))
    except SyntaxError:
        raise ConfigError(f"cannot parse number {text!r}") from None
    except (ZeroDivisionError, OverflowError) as exc:
        raise ConfigError(f"cannot evaluate {text!r}: {exc}") from None
    if not math.isfinite(value):
        raise ConfigError(f"non-finite value {text!r}")
    return value


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        name = CONFIG_KEYS[key]
        if name in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if name in _STR_FIELDS:
            values[name] = value
        elif name in _LIST_FIELDS:
            values[name] = tuple(_eval_number(v) for v in value.split(","))
        elif name in _INT_FIELDS:
            v = _eval_number(value)
            if v != int(v):
                raise ConfigError(f"line {lineno}: {key} must be an integer")
            values[name] = int(v)
        else:
            values[name] = float(_eval_number(value))
    try:
        return replace(base or ExperimentConfig(), **values)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(source: str | os.PathLike) -> ExperimentConfig:
    """Read a config file, or return a named preset."""
    if str(source) in PRESETS:
        return PRESETS[str(source)]
    path = Path(source)
    if not path.is_file():
        raise ConfigError(f"no config file or preset named {str(source)!r}")
    return parse_config_text(path.read_text())


def format_config(config: ExperimentConfig) -> str:
    lines = []
    for key, name in CONFIG_KEYS.items():
        v = getattr(config, name)
        if isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


# -- running methods ---------------------------------------------------------

_TRUTH_CACHE: dict = {}


def solve_truth(config: ExperimentConfig, snapshot_times: Sequence[float] | None = None) -> FPKESolution:
    key = (config.model, config.model_a, config.model_q, config.initial_weights, config.initial_means,
           config.initial_covs, config.t_d, config.grid_spec(), tuple(snapshot_times or ()))
    if key not in _TRUTH_CACHE:
        _TRUTH_CACHE[key] = solve_fpke(config.dynamics(), config.initial_pdf(), config.grid_spec(),
                                       config.t_d, snapshot_times)
    return _TRUTH_CACHE[key]


@dataclass
class MethodRun:
    report: RunReport
    mixture: GaussianMixture | None
    seeding: SeedingResult | None = None


def forecast_mixture(config: ExperimentConfig, method: str, seed: int):
    """Decision-time mixture for EKF, GS_BCK or GS_DEC (plus seeding info for GS_DEC)."""
    model = config.dynamics()
    init = config.initial_pdf()
    loss = config.loss()
    schedule = config.schedule()
    seeding = None
    if method == "EKF":
        mix, adapter = init, None
    elif method == "GS_BCK":
        mix = backprop_seed(init, model, loss, config.t_d, config.bck_count, config.bck_variance,
                            config.ode_step)
        adapter = FPKEWeightAdapter(config.quadrature())
    elif method == "GS_DEC":
        seeding = progressive_selection(init, model, config.seeder_config(seed), loss)
        mix = seeding.mixture
        adapter = FPKEWeightAdapter(config.quadrature())
    else:
        raise ValueError(f"unknown method {method!r}")
    final = propagate_mixture(model, mix, schedule, adapter)[-1].mixture
    return final, seeding


def run_method(config: ExperimentConfig, method: str, seed: int, truth: FPKEGrid | None = None) -> MethodRun:
    truth = truth or solve_truth(config).final
    loss = config.loss()
    L_true = expected_loss_on_grid(truth, loss)
    if method == "TRUTH":
        return MethodRun(RunReport("TRUTH", seed, L_true, 0.0, 0.0, 0.0), None)
    mix, seeding = forecast_mixture(config, method, seed)
    return MethodRun(report(method, seed, mix, truth, loss, L_true), mix, seeding)


def _dec_row(args):
    config, seed, truth = args
    try:
        return run_method(config, "GS_DEC", seed, truth).report, None
    except (NumericalError, np.linalg.LinAlgError) as exc:
        return RunReport("GS_DEC", seed, *(math.nan,) * 4), f"{type(exc).__name__}: {exc}"


@dataclass
class AggregateReport:
    means: dict
    percentiles: dict
    counts: dict
    failed: dict
    rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)


def nearest_rank_percentile(values: Iterable[float], pct: float) -> float:
    """Smallest value with at least ``pct`` percent of the sample at or below it."""
    v = np.asarray(list(values), dtype=float)
    if len(v) == 0:
        return math.nan
    return float(np.percentile(v, pct, method="inverted_cdf"))


def aggregate(rows: Sequence[RunReport]) -> AggregateReport:
    means, counts, failed = {}, {}, {}
    for method in METHODS:
        sel = [r for r in rows if r.method == method]
        ok = [r for r in sel if all(math.isfinite(getattr(r, m)) for m in METRICS)]
        counts[method] = len(ok)
        failed[method] = len(sel) - len(ok)
        if ok:
            means[method] = {m: float(np.mean([getattr(r, m) for r in ok])) for m in METRICS}
    dec = [r for r in rows if r.method == "GS_DEC" and math.isfinite(r.L_hat)]
    percentiles = {p: {m: nearest_rank_percentile([getattr(r, m) for r in dec], p) for m in METRICS}
                   for p in PERCENTILES} if dec else {}
    return AggregateReport(means, percentiles, counts, failed, list(rows))


def run_experiment(config: ExperimentConfig, runs: int | None = None, workers: int = 1,
                   write: bool = True) -> AggregateReport:
    """Monte-Carlo repetitions with seeds ``config.seed + i``.

    TRUTH, EKF and GS_BCK involve no randomness; they are computed once and
    repeated in every row.
    """
    runs = runs or config.monte_carlo_runs
    if runs < 1:
        raise ConfigError("need at least one run")
    truth = solve_truth(config).final
    fixed = {m: run_method(config, m, config.seed, truth) for m in ("TRUTH", "EKF", "GS_BCK")}
    seeds = [config.seed + i for i in range(runs)]
    jobs = [(config, s, truth) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            dec = list(pool.map(_dec_row, jobs))
    else:
        dec = [_dec_row(j) for j in jobs]
    rows, errors = [], []
    for s, (dec_report, err) in zip(seeds, dec):
        for m in ("TRUTH", "EKF", "GS_BCK"):
            rows.append(replace(fixed[m].report, seed=s))
        rows.append(dec_report)
        if err:
            errors.append((s, err))
            log.warning("GS_DEC run with seed %d failed: %s", s, err)
    agg = aggregate(rows)
    agg.errors = errors
    if write:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_runs_csv(out / "runs.csv", rows)
        write_aggregate_csv(out / "aggregate.csv", agg)
        first = run_method(config, "GS_DEC", config.seed, truth)
        write_pdf_csv(out / f"pdf_t{config.t_d:g}.csv", truth,
                      {"ekf": fixed["EKF"].mixture, "gs_bck": fixed["GS_BCK"].mixture, "gs_dec": first.mixture})
    return agg


# -- CSV artifacts -------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_runs_csv(path, rows: Sequence[RunReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RunReport.FIELDS)
        for r in rows:
            w.writerow([_fmt(getattr(r, f)) for f in RunReport.FIELDS])


def read_runs_csv(path) -> list[RunReport]:
    with open(path, newline="") as fh:
        return [RunReport(row["method"], int(row["seed"]), *(float(row[m]) for m in METRICS))
                for row in csv.DictReader(fh)]


def write_aggregate_csv(path, agg: AggregateReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["section", "label", *METRICS, "count", "failed"])
        for method, vals in agg.means.items():
            w.writerow(["mean", method, *(_fmt(vals[m]) for m in METRICS), agg.counts[method], agg.failed[method]])
        for p, vals in agg.percentiles.items():
            w.writerow(["percentile_GS_DEC", p, *(_fmt(vals[m]) for m in METRICS),
                        agg.counts["GS_DEC"], agg.failed["GS_DEC"]])


def write_pdf_csv(path, truth: FPKEGrid, mixtures: dict) -> None:
    cols = {name: eval_density(mix, truth.x) for name, mix in mixtures.items()}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "truth", *cols])
        for k, x in enumerate(truth.x):
            w.writerow([_fmt(x), _fmt(truth.pdf[k]), *(_fmt(c[k]) for c in cols.values())])


def write_truth_snapshots(path, solution: FPKESolution) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "p"])
        for snap in solution.snapshots:
            for x, p in zip(snap.x, snap.pdf):
                w.writerow([_fmt(snap.t), _fmt(x), _fmt(p)])


def write_sampling_csv(path, seeding: SeedingResult, x: np.ndarray) -> None:
    """Per-iteration sampling pdf on a grid of initial states."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "alpha", "beta", "x", "density"])
        for i, it in enumerate(seeding.history):
            pdf = eval_density(it.sampling_pdf, x)
            for xv, pv in zip(x, pdf):
                w.writerow([i + 1, _fmt(it.alpha), _fmt(it.beta), _fmt(xv), _fmt(pv)])


def write_candidates_csv(path, seeding: SeedingResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "index", "mean_t0", "cov_t0", "mean_td", "cov_td", "weight"])
        for i, it in enumerate(seeding.history):
            for j in range(len(it.means)):
                w.writerow([i + 1, j, _fmt(it.means[j, 0]), _fmt(it.covs[j, 0, 0]), _fmt(it.means_td[j, 0]),
                            _fmt(it.covs_td[j, 0, 0]), _fmt(it.weights[j])])
