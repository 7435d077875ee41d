"""Experiment configuration files.

Configs are INI-style files with one section per concern; every key is
addressed by its dotted path (``train.eta_w``).  Unknown sections or keys
are rejected so that typos never silently fall back to defaults::

    [data]
    source = xor

    [network]
    arch = mlp
    widths = 2, 8
    out_width = 1

    [train]
    eta_w = 0.1
    max_iters = 50000
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict

from . import data as datasets
from .architectures import NetworkSpec
from .constraints import ConstraintKind
from .core import RegConfig
from .optimizer import TrainConfig


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str):
    return tuple(int(p) for p in text.replace(" ", "").split(",") if p)


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


# dotted key -> (parser, default)
SCHEMA: Dict[str, tuple] = {
    "data.source": (str, "xor"),
    "data.n": (int, 64),
    "data.noise": (float, 0.0),
    "data.seed": (int, 0),
    "data.per_step": (_bool, False),
    "data.path": (str, ""),
    "data.input_cols": (_ints, ()),
    "data.target_cols": (_ints, ()),
    "data.one_hot": (_opt_int, None),
    "data.standardize": (_bool, False),

    "network.arch": (str, "mlp"),
    "network.widths": (_ints, (2, 8)),
    "network.out_width": (int, 1),
    "network.activation": (str, "tanh"),
    "network.loss": (str, "squared_error"),
    "network.seq_len": (int, 1),
    "network.bias": (_bool, True),
    "network.supervision": (str, "final"),

    "constraint.kind": (str, "identity"),
    "constraint.epsilon": (float, 0.0),

    "train.eta_w": (float, 0.01),
    "train.eta_x": (float, 0.01),
    "train.eta_lambda": (float, 0.1),
    "train.max_iters": (int, 10000),
    "train.target_residual": (float, 1e-3),
    "train.seed": (int, 0),
    "train.log_every": (int, 100),
    "train.plateau_window": (int, 100),
    "train.plateau_rtol": (float, 1e-6),
    "train.batch_size": (_opt_int, None),

    "reg.rho": (float, 0.0),
    "reg.alpha": (float, 0.0),

    "run.workers": (int, 1),

    "output.dir": (str, "out"),
    "output.metrics": (str, "metrics.jsonl"),
    "output.weights": (str, "weights.lpw"),

    "gradcheck.n_examples": (int, 3),
    "gradcheck.seed": (int, 0),
    "gradcheck.rtol": (float, 1e-6),
    "gradcheck.atol": (float, 1e-9),
    "gradcheck.margin": (float, 1e-4),
    "gradcheck.recover_tol": (float, 1e-10),
    # test hook: offset added to one analytic coordinate
    "gradcheck.corrupt": (float, 0.0),
}


@dataclass
class ExperimentConfig:
    values: Dict[str, Any]
    source: str = "<memory>"

    def __getitem__(self, key):
        return self.values[key]

    def section(self, name: str) -> Dict[str, Any]:
        pre = name + "."
        return {k[len(pre):]: v for k, v in self.values.items() if k.startswith(pre)}

    # -- derived objects -------------------------------------------------

    def network_spec(self) -> NetworkSpec:
        n = self.section("network")
        try:
            return NetworkSpec(n["arch"], n["widths"], n["out_width"], n["activation"], n["loss"],
                               n["seq_len"], n["bias"], n["supervision"])
        except ValueError as err:
            raise ConfigError("network", str(err))

    def constraint(self) -> ConstraintKind:
        try:
            return ConstraintKind(self["constraint.kind"], self["constraint.epsilon"])
        except ValueError as err:
            raise ConfigError("constraint.kind", str(err))

    def reg(self) -> RegConfig:
        try:
            return RegConfig(self["reg.rho"], self["reg.alpha"])
        except ValueError as err:
            raise ConfigError("reg", str(err))

    def train_config(self) -> TrainConfig:
        t = self.section("train")
        try:
            return TrainConfig(t["eta_w"], t["eta_x"], t["eta_lambda"], t["max_iters"],
                               t["target_residual"], t["seed"], self.reg(), self.constraint(),
                               t["log_every"], t["plateau_window"], t["plateau_rtol"],
                               t["batch_size"])
        except ValueError as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError("train", str(err))

    def dataset(self) -> datasets.Dataset:
        d = self.section("data")
        spec = self.network_spec()
        src = d["source"]
        try:
            if src == "xor":
                ds = datasets.gen_xor()
            elif src == "two_moons":
                ds = datasets.gen_two_moons(d["n"], d["noise"], d["seed"])
            elif src == "parity":
                ds = datasets.gen_parity_sequences(d["n"], spec.seq_len, d["seed"], d["per_step"])
            elif src == "csv":
                if not d["path"]:
                    raise ConfigError("data.path", "required when data.source = csv")
                path = Path(d["path"])
                if not path.is_absolute() and self.source != "<memory>":
                    path = Path(self.source).parent / path
                ds = datasets.load_csv(path, d["input_cols"], d["target_cols"], d["one_hot"])
                if spec.recurrent:
                    n = len(ds)
                    ds = datasets.Dataset(ds.inputs.reshape(n, spec.seq_len, -1), ds.targets,
                                          ds.meta)
            else:
                raise ConfigError("data.source",
                                  f"unknown source {src!r}; expected xor, two_moons, parity or csv")
        except datasets.DataError as err:
            raise ConfigError("data", str(err))
        except OSError as err:
            raise ConfigError("data.path", str(err))
        if d["standardize"]:
            ds = datasets.standardize(ds)
        return ds

    def validate(self) -> None:
        """Build every derived object once so all errors surface before compute."""
        spec = self.network_spec()
        self.train_config()
        if self["run.workers"] < 1:
            raise ConfigError("run.workers", "must be >= 1")
        if self["run.workers"] > 1 and spec.arch not in ("mlp", "resnet"):
            raise ConfigError("run.workers",
                              f"parallel execution needs arch mlp or resnet, not {spec.arch!r}")
        ds = self.dataset()
        want_in = (spec.seq_len, spec.widths[0]) if spec.recurrent else (spec.widths[0],)
        if ds.inputs.shape[1:] != want_in:
            raise ConfigError("network.widths",
                              f"input shape {ds.inputs.shape[1:]} does not match network {want_in}")
        if ds.target_width != spec.out_width:
            raise ConfigError("network.out_width",
                              f"targets have width {ds.target_width}, network outputs {spec.out_width}")


def parse_config(text: str, source: str = "<memory>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError("<file>", str(err).splitlines()[0])
    values = {k: default for k, (_, default) in SCHEMA.items()}
    for section in cp.sections():
        for key, raw in cp.items(section):
            dotted = f"{section}.{key}"
            if dotted not in SCHEMA:
                raise ConfigError(dotted, "unknown configuration key")
            parser = SCHEMA[dotted][0]
            try:
                values[dotted] = parser(raw)
            except ValueError as err:
                raise ConfigError(dotted, f"cannot parse {raw!r} ({err})")
    return ExperimentConfig(values, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError("--config", str(err))
    return parse_config(text, str(path))
