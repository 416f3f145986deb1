"""Monte Carlo experiment runner.

Every replication owns three random streams derived from
``(base_seed, draw_index, rep_index)`` with :func:`~ci_robust.rng.mix_indices`
(SplitMix64 folding): one for the outer (a, b) parameter draw, one for the
data, and one per method for the test's own randomness. Sweep points reuse the
same streams, so a sweep compares methods and parameter values on common
random numbers, and the worker count never changes a result.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import citests, simgen
from ..citests import ABSOLUTE, SQUARED, StfrConfig
from ..errors import CIError, ConfigError
from ..models import ConditionalModel, Dataset, IntegrationConfig, fit_logistic, make_factory
from ..rng import RngStream, mix_indices
from .config import METHODS, ExperimentConfig
from .csvio import ColumnSpec, load_csv

TAG_PARAMS, TAG_DATA, TAG_TEST, TAG_MODEL = 1, 2, 3, 4

CSV_COLUMNS = ["sweep_value", "method", "rejection_rate", "mc_se", "degenerate_count",
               "mean_p", "wall_time_s"]


def param_stream(cfg: ExperimentConfig, draw: int) -> RngStream:
    return RngStream(cfg.base_seed, mix_indices(draw, TAG_PARAMS))


def data_stream(cfg: ExperimentConfig, draw: int, rep: int) -> RngStream:
    return RngStream(cfg.base_seed, mix_indices(draw, rep, TAG_DATA))


def test_stream(cfg: ExperimentConfig, draw: int, rep: int, method: str) -> RngStream:
    return RngStream(cfg.base_seed, mix_indices(draw, rep, TAG_TEST, METHODS.index(method)))


# -- building blocks -------------------------------------------------------

def build_factory(spec: dict, stream: RngStream):
    spec = dict(spec)
    name = spec.pop("name")
    if name == "lasso" and "rng" not in spec:
        spec["rng"] = stream
    if name == "lasso" and "lam" in spec and spec["lam"] != "cv":
        spec["lam"] = float(spec["lam"])
    try:
        return make_factory(name, **spec)
    except ValueError as exc:
        raise ConfigError(str(exc), "model.name") from exc


def build_loss(test_cfg: dict):
    return SQUARED if test_cfg["loss"] == "squared" else ABSOLUTE


@functools.lru_cache(maxsize=4)
def _cached_csv(path, x_cols, y_cols, z_cols):
    return load_csv(path, ColumnSpec.of(x_cols, y_cols, z_cols))


def _sweep_dgp(cfg: ExperimentConfig, sweep_value):
    dgp = dict(cfg.dgp)
    if cfg.sweep is not None:
        dgp[cfg.sweep["param"]] = sweep_value
    return dgp


@dataclass
class Replicate:
    """Data and truth for one replication."""

    train: object
    test: object
    oracle_q: object = None


def bin_indicators(bins: np.ndarray, n_bins: int) -> np.ndarray:
    """Dummy columns for bins 1..n_bins-1; bin 0 is absorbed by the intercept."""
    return (bins[:, None] == np.arange(1, n_bins)[None, :]).astype(float)


def make_replicate(cfg: ExperimentConfig, dgp: dict, draw: int, rep: int) -> Replicate:
    kind = dgp["kind"]
    n = cfg.n_train + cfg.n_test
    stream = data_stream(cfg, draw, rep)
    if kind == "quadratic":
        params = simgen.draw_generative_params(int(dgp["d_z"]), param_stream(cfg, draw)).with_(
            c=float(dgp["c"]), gamma=float(dgp["gamma"]),
            skew_shape=float(dgp["skew_shape"]), theta=float(dgp["theta"]),
        )
        data = simgen.gen_quadratic(params, n, stream)
        train, test = data.split(cfg.n_train)
        return Replicate(train, test, params.x_given_z())
    if kind == "highdim":
        params = simgen.HighDimDgpParams(str(dgp["variant"]), n, int(dgp["d"]),
                                         float(dgp["signal"]), int(dgp["sparsity"]))
        data = simgen.gen_highdim(params, stream)
        train, test = data.split(cfg.n_train)
        beta_x = params.betas()[0]
        return Replicate(train, test, ConditionalModel.gaussian_shift(lambda z: z @ beta_x))
    data = _cached_csv(str(dgp["path"]), str(dgp["x_cols"]), str(dgp["y_cols"]), str(dgp["z_cols"]))
    if n > data.n:
        raise ConfigError(f"n_train + n_test = {n} exceeds the {data.n} rows in the file",
                          "experiment.n_train")
    gen = stream.generator()
    if int(dgp["null_bins"]):
        data = simgen.semi_synthetic_null(data, int(dgp["null_bins"]), gen)
        if dgp["z_encoding"] == "onehot":
            data = Dataset(data.x, data.y, bin_indicators(data.z[:, 0], int(dgp["null_bins"])))
    rows = gen.permutation(data.n)[:n] if dgp["shuffle_rows"] else np.arange(n)
    train, test = data.take(rows).split(cfg.n_train)
    return Replicate(train, test, None)


def build_q(spec: dict, rep: Replicate, theta: float, stream: RngStream) -> ConditionalModel:
    kind = spec.get("kind", "oracle")
    theta = float(spec.get("theta", theta))
    train = rep.train
    if kind == "oracle":
        if rep.oracle_q is None:
            raise ConfigError("the csv dgp has no oracle X|Z model; use gaussian or logistic",
                              "model.q.kind")
        return rep.oracle_q.with_theta(theta)
    if kind == "gaussian":
        mean_model = build_factory({"name": spec.get("mean_model", "ols")}, stream)(train.z, train.x)
        resid = train.x - mean_model.predict(train.z)
        scale = float(np.sqrt(np.mean(resid ** 2))) or 1e-12
        return ConditionalModel.gaussian_shift(lambda z: mean_model.predict(z)[:, 0], scale, theta)
    if kind == "logistic":
        model = fit_logistic(train.z, train.x[:, 0])
        return ConditionalModel.logistic_binary(lambda z: model.predict(z)[:, 0])
    raise ConfigError(f"unknown q kind {kind!r}", "model.q.kind")


def run_method(cfg: ExperimentConfig, method: str, rep: Replicate, theta: float, stream: RngStream):
    models = cfg.models
    tcfg = cfg.test
    loss = build_loss(tcfg)
    train, test = rep.train, rep.test
    model_stream = stream.child(TAG_MODEL)

    def factory(role):
        return build_factory(models[role], model_stream.child(("g1", "gx", "gy", "h").index(role)))

    if method == "stfr":
        rho = float(tcfg["rho"]) + float(tcfg["rho_scale"]) * float(train.y.std())
        return citests.stfr(train, test, factory("g1"), None, loss, StfrConfig(rho, cfg.alpha), stream)
    if method == "gcm":
        return citests.gcm(train, test, factory("gx"), factory("gy"), cfg.alpha)
    if method == "resit":
        return citests.resit(train, test, factory("gx"), factory("gy"), int(tcfg["B"]), cfg.alpha, stream)
    if method == "rbpt":
        q = build_q(models["q"], rep, theta, model_stream)
        integ = IntegrationConfig(str(tcfg["integration"]), mc_draws=int(tcfg["mc_draws"]))
        return citests.rbpt(train, test, factory("g1"), q, loss, integ, cfg.alpha, stream)
    if method == "rbpt2":
        return citests.rbpt2(train, test, factory("g1"), factory("h"), loss, cfg.alpha)
    if method == "crt":
        q = build_q(models["q"], rep, theta, model_stream)
        rho = float(tcfg["crt_rho_scale"]) * float(train.y.std())
        return citests.crt(train, test, factory("g1"), None, q, loss, int(tcfg["B"]), cfg.alpha,
                           stream, rho)
    raise ConfigError(f"unknown method {method!r}", "experiment.methods")


def run_replication(cfg: ExperimentConfig, sweep_value, draw: int, rep_index: int) -> dict:
    """``{method: (p_value or None, seconds)}`` for one replication."""
    dgp = _sweep_dgp(cfg, sweep_value)
    rep = make_replicate(cfg, dgp, draw, rep_index)
    out = {}
    for method in cfg.methods:
        start = time.perf_counter()
        try:
            p = run_method(cfg, method, rep, float(dgp.get("theta", 0.0)),
                           test_stream(cfg, draw, rep_index, method)).p_value
        except ConfigError:
            raise
        except CIError:
            p = None
        out[method] = (p, time.perf_counter() - start)
    return out


# -- report ----------------------------------------------------------------

@dataclass
class ReportRow:
    sweep_value: object
    method: str
    rejection_rate: float
    mc_se: float
    degenerate_count: int
    mean_p: float
    wall_time_s: float
    per_draw_rates: list = field(default_factory=list)
    p_values: list = field(default_factory=list)

    def csv_values(self) -> list:
        sv = "" if self.sweep_value is None else self.sweep_value
        return [sv, self.method.upper(), self.rejection_rate, self.mc_se, self.degenerate_count,
                self.mean_p, self.wall_time_s]


@dataclass
class Report:
    rows: list
    config: dict

    def row(self, method: str, sweep_value=None) -> ReportRow:
        for r in self.rows:
            if r.method == method.lower() and (sweep_value is None or r.sweep_value == sweep_value):
                return r
        raise KeyError((method, sweep_value))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(r.csv_values())
        return buf.getvalue()

    def to_dict(self) -> dict:
        rows = []
        for r in self.rows:
            d = dict(zip(CSV_COLUMNS, r.csv_values()))
            d["method"] = r.method.upper()
            d["sweep_value"] = r.sweep_value
            d["per_draw_rejection_rates"] = r.per_draw_rates
            if self.config["experiment"].get("dump_pvalues"):
                d["p_values"] = r.p_values
            rows.append(d)
        return {"config": self.config, "results": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _rate(pvals, alpha):
    valid = [p for p in pvals if p is not None]
    if not valid:
        return float("nan"), float("nan"), float("nan")
    r = sum(p <= alpha for p in valid) / len(valid)
    return r, math.sqrt(r * (1 - r) / len(valid)), float(np.mean(valid))


_WORKER_CFG = None


def _init_worker(cfg_dict):
    global _WORKER_CFG
    _WORKER_CFG = ExperimentConfig.from_dict(cfg_dict)


def _worker(task):
    return run_replication(_WORKER_CFG, *task)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> Report:
    """Run every (sweep value, parameter draw, replication) and aggregate.

    ``rejection_rate`` is computed over the replications that produced a
    p-value; the rest are counted in ``degenerate_count``.
    """
    sweep_values = cfg.sweep["values"] if cfg.sweep else [None]
    draws = cfg.param_draws if cfg.dgp["kind"] != "csv" else 1
    tasks = [(sv, d, r) for sv in sweep_values for d in range(draws) for r in range(cfg.replications)]
    if jobs > 1:
        chunk = max(1, len(tasks) // (jobs * 8))
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(cfg.to_dict(),)) as ex:
            results = list(ex.map(_worker, tasks, chunksize=chunk))
    else:
        results = [run_replication(cfg, *t) for t in tasks]

    rows = []
    for sv in sweep_values:
        for method in cfg.methods:
            per_draw, pvals, seconds = [], [], 0.0
            for d in range(draws):
                block = [res[method] for (s, dd, _), res in zip(tasks, results) if s == sv and dd == d]
                ps = [p for p, _ in block]
                seconds += sum(t for _, t in block)
                per_draw.append(_rate(ps, cfg.alpha)[0])
                pvals.extend(ps)
            rate, se, mean_p = _rate(pvals, cfg.alpha)
            rows.append(ReportRow(
                sv, method, rate, se, sum(p is None for p in pvals), mean_p,
                round(seconds, 6) if cfg.record_timing else 0.0,
                per_draw, [p for p in pvals if p is not None],
            ))
    return Report(rows, cfg.to_dict())
