"""Experiment configuration: ``key = value`` files with one section per role.

Example::

    [experiment]
    methods = stfr, gcm, rbpt
    n_train = 800
    n_test = 200
    replications = 48
    param_draws = 10

    [dgp]
    kind = quadratic
    d_z = 10
    gamma = 0

    [sweep]
    param = gamma
    values = 0, 1, 2

    [model.g1]
    name = ols

Sections: ``experiment``, ``dgp``, ``test``, ``sweep`` and ``model.<role>``
for roles ``g1`` (Y on X,Z; also STFR's reduced model), ``gx``/``gy``
(X and Y on Z), ``h`` (RBPT2 second regressor) and ``q`` (model of X|Z).
"""
from __future__ import annotations

import configparser
import copy
import io
import os
from dataclasses import dataclass, field
from typing import Any, Optional

from ..core_stats import Method
from ..errors import ConfigError

METHODS = [m.value.lower() for m in Method]
DGP_KINDS = ("quadratic", "highdim", "csv")
SWEEP_PARAMS = ("gamma", "theta", "c", "d_z", "skew_shape")
ROLES = ("g1", "gx", "gy", "h", "q")

DEFAULT_MODELS = {
    "g1": {"name": "ols"},
    "gx": {"name": "ols"},
    "gy": {"name": "ols"},
    "h": {"name": "krr_poly", "degree": 3, "ridge": 1e-3},
    "q": {"kind": "oracle"},
}

DGP_DEFAULTS = {
    "quadratic": {"d_z": 10, "c": 0.0, "gamma": 0.0, "skew_shape": 0.0, "theta": 0.0},
    "highdim": {"variant": "GcmToy", "d": 500, "signal": 20.0, "sparsity": 5},
    "csv": {"path": "", "x_cols": "", "y_cols": "", "z_cols": "", "null_bins": 0,
            "z_encoding": "raw", "shuffle_rows": True, "theta": 0.0},
}

# rho/rho_scale set STFR's noise sd as rho + rho_scale * sd(train Y); the
# randomization test has its own crt_rho_scale (0 keeps the plain statistic)
TEST_DEFAULTS = {"rho": 0.0, "rho_scale": 0.0, "crt_rho_scale": 0.0, "B": 100, "loss": "squared",
                 "integration": "auto", "mc_draws": 100}


def _coerce(text: str) -> Any:
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t


def _as_list(value) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [_coerce(v) for v in str(value).split(",") if v.strip()]


@dataclass
class ExperimentConfig:
    methods: list
    dgp: dict
    n_train: int = 800
    n_test: int = 200
    alpha: float = 0.1
    replications: int = 48
    param_draws: int = 10
    base_seed: int = 0
    models: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_MODELS))
    test: dict = field(default_factory=lambda: dict(TEST_DEFAULTS))
    sweep: Optional[dict] = None
    record_timing: bool = True
    dump_pvalues: bool = False

    def __post_init__(self):
        self.validate()

    # -- validation --------------------------------------------------------
    def validate(self):
        methods = [str(m).strip().lower() for m in _as_list(self.methods)]
        if not methods:
            raise ConfigError("at least one method is required", "experiment.methods")
        for m in methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {METHODS}", "experiment.methods")
        self.methods = methods
        kind = self.dgp.get("kind")
        if kind not in DGP_KINDS:
            raise ConfigError(f"unknown dgp kind {kind!r}; choose from {list(DGP_KINDS)}", "dgp.kind")
        self.dgp = {**DGP_DEFAULTS[kind], **self.dgp}
        for key in ("n_train", "n_test", "replications", "param_draws"):
            value = getattr(self, key)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"must be a positive integer, got {value!r}", f"experiment.{key}")
        if not 0 < float(self.alpha) < 1:
            raise ConfigError(f"must lie in (0, 1), got {self.alpha!r}", "experiment.alpha")
        self.alpha = float(self.alpha)
        self.test = {**TEST_DEFAULTS, **self.test}
        if int(self.test["B"]) < 1:
            raise ConfigError("must be >= 1", "test.B")
        if self.test["loss"] not in ("squared", "absolute"):
            raise ConfigError("must be 'squared' or 'absolute'", "test.loss")
        models = copy.deepcopy(DEFAULT_MODELS)
        for role, spec in self.models.items():
            if role not in ROLES:
                raise ConfigError(f"unknown model role {role!r}; choose from {list(ROLES)}", f"model.{role}")
            models[role] = {**models[role], **spec} if role == "q" or "name" not in spec else dict(spec)
        self.models = models
        if self.sweep is not None:
            param = self.sweep.get("param")
            if param not in SWEEP_PARAMS:
                raise ConfigError(f"unknown sweep parameter {param!r}; choose from {list(SWEEP_PARAMS)}",
                                  "sweep.param")
            values = _as_list(self.sweep.get("values", ""))
            if not values:
                raise ConfigError("sweep needs at least one value", "sweep.values")
            if param == "d_z" and kind != "quadratic":
                raise ConfigError("d_z sweeps need the quadratic dgp", "sweep.param")
            self.sweep = {"param": param, "values": values}
        if kind == "csv" and not self.dgp["path"]:
            raise ConfigError("csv dgp needs a path", "dgp.path")
        if kind == "csv":
            if self.dgp["z_encoding"] not in ("raw", "onehot"):
                raise ConfigError("must be 'raw' or 'onehot'", "dgp.z_encoding")
            if self.dgp["z_encoding"] == "onehot" and int(self.dgp["null_bins"]) < 2:
                raise ConfigError("onehot encoding needs null_bins >= 2", "dgp.z_encoding")

    # -- (de)serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "experiment": {
                "methods": list(self.methods), "n_train": self.n_train, "n_test": self.n_test,
                "alpha": self.alpha, "replications": self.replications,
                "param_draws": self.param_draws, "base_seed": self.base_seed,
                "record_timing": self.record_timing, "dump_pvalues": self.dump_pvalues,
            },
            "dgp": dict(self.dgp),
            "test": dict(self.test),
            "sweep": None if self.sweep is None else dict(self.sweep),
            "models": copy.deepcopy(self.models),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        exp = dict(d.get("experiment", {}))
        known = {"methods", "n_train", "n_test", "alpha", "replications", "param_draws",
                 "base_seed", "record_timing", "dump_pvalues"}
        unknown = set(exp) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", "experiment")
        if "methods" not in exp:
            raise ConfigError("missing required key", "experiment.methods")
        if "dgp" not in d or "kind" not in d["dgp"]:
            raise ConfigError("missing required key", "dgp.kind")
        return cls(
            methods=exp.pop("methods"), dgp=dict(d["dgp"]), models=dict(d.get("models") or {}),
            test=dict(d.get("test") or {}), sweep=d.get("sweep"), **exp,
        )

    def to_text(self) -> str:
        """Serialize back to the ``key = value`` file format."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        d = self.to_dict()
        exp = d["experiment"]
        exp["methods"] = ", ".join(exp["methods"])
        cp["experiment"] = {k: str(v) for k, v in exp.items()}
        cp["dgp"] = {k: str(v) for k, v in d["dgp"].items()}
        cp["test"] = {k: str(v) for k, v in d["test"].items()}
        if d["sweep"]:
            cp["sweep"] = {"param": d["sweep"]["param"],
                           "values": ", ".join(str(v) for v in d["sweep"]["values"])}
        for role, spec in d["models"].items():
            cp[f"model.{role}"] = {k: str(v) for k, v in spec.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def parse_config_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    d: dict = {"models": {}}
    for section in cp.sections():
        values = {k: _coerce(v) for k, v in cp[section].items()}
        if section.startswith("model."):
            d["models"][section[len("model."):]] = values
        elif section in ("experiment", "dgp", "test", "sweep"):
            d[section] = values
        else:
            raise ConfigError(f"unknown section [{section}]", section)
    if "experiment" not in d:
        raise ConfigError("missing [experiment] section", "experiment")
    exp = d["experiment"]
    if "methods" not in exp and "method" in exp:
        exp["methods"] = exp.pop("method")
    if "methods" in exp:
        exp["methods"] = _as_list(exp["methods"])
    if "sweep" in d and "values" in d["sweep"]:
        d["sweep"]["values"] = _as_list(d["sweep"]["values"])
    return ExperimentConfig.from_dict(d)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}", "--config") from exc
    cfg = parse_config_text(text)
    # relative data paths are resolved against the config file's directory
    if cfg.dgp["kind"] == "csv" and not os.path.isabs(str(cfg.dgp["path"])):
        cfg.dgp["path"] = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(path)),
                                                        str(cfg.dgp["path"])))
    return cfg
