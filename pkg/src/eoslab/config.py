"""Experiment configuration: INI-style ``key = value`` sections or a flat JSON object.

An INI file holds exactly one section named after the experiment::

    [oscillate1d]
    mu = 1.0
    eta = 1.05
    x0 = 0.5

A JSON file holds the same keys plus ``"experiment"``.  ``seed`` and
``output_dir`` are accepted by every experiment.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import dataclass, field

from eoslab.errors import ConfigError

REQUIRED = object()

_COMMON = {"seed": (int, 0), "output_dir": (str, "")}

_PERIOD = {"max_period": (int, 8), "tail_window": (int, 64)}

SCHEMAS: dict[str, dict[str, tuple]] = {
    "oscillate1d": {
        "fn": (str, "quartic"),
        "mu": (float, 1.0),
        "amplitude": (float, 1.0),
        "lam": (float, 1.0),
        "eta": (float, REQUIRED),
        "x0": (float, REQUIRED),
        "steps": (int, 10_000),
        "tol": (float, 1e-8),
        **_PERIOD,
    },
    "balance2d": {
        "mu": (float, 1.0),
        "K": (float, REQUIRED),
        "x0": (float, REQUIRED),
        "y0": (float, REQUIRED),
        "steps": (int, 10_000),
        "theorem_mode": (bool, True),
        "tol": (float, 1e-7),
        **_PERIOD,
    },
    "neuron": {
        "d": (int, 2),
        "K": (float, 1.1),
        "eps": (float, 0.1),
        "init_angle": (float, math.pi / 2),
        "steps": (int, 300),
        "theorem_mode": (bool, True),
    },
    "neuron_empirical": {
        "n": (int, REQUIRED),
        "d": (int, 2),
        "eta": (float, REQUIRED),
        "v0": (float, REQUIRED),
        "wx0": (float, 0.0),
        "wy0": (float, REQUIRED),
        "steps": (int, 500),
    },
    "matfac_sym": {
        "m": (int, 8),
        "eta_rel": (float, 1.02),
        "eps_rel": (float, 1e-3),
        "steps": (int, 20_000),
        "probe_every": (int, 0),
    },
    "matfac_quasi": {
        "m": (int, 8),
        "alpha": (float, 0.8),
        "eta_rel": (float, 1.02),
        "eps_rel": (float, 1e-3),
        "steps": (int, 20_000),
        "theorem_mode": (bool, True),
        "probe_every": (int, 0),
    },
    "condition_check": {
        "fn": (str, "quartic"),
        "mu": (float, 1.0),
        "amplitude": (float, 1.0),
        "lam": (float, 1.0),
        "x_bar": (float, REQUIRED),
        "y": (float, 0.0),
        "eps": (float, 0.01),
    },
    "orbit_predict": {
        "mu": (float, REQUIRED),
        "eta": (float, REQUIRED),
    },
    "sharpness_trace": {
        "objective": (str, "factor2d"),
        "mu": (float, 1.0),
        "eta": (float, REQUIRED),
        "x0": (float, REQUIRED),
        "y0": (float, 1.0),
        "steps": (int, 1000),
        "probe_every": (int, 0),
    },
}

CHOICES = {
    ("oscillate1d", "fn"): ("quartic", "sine", "quadratic"),
    ("condition_check", "fn"): ("quartic", "sine", "quadratic", "square_l2", "tanh_l2", "sine_l2"),
    ("sharpness_trace", "objective"): ("quartic", "factor2d"),
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict = field(default_factory=dict)
    output_dir: str = ""
    seed: int = 0

    def echo(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, **self.params}

    def hash(self) -> str:
        blob = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _coerce(raw, kind, where: str):
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}", where)
    if kind is str:
        if not isinstance(raw, str):
            raise ConfigError(f"expected a string, got {raw!r}", where)
        return raw.strip()
    if isinstance(raw, bool):
        raise ConfigError(f"expected a number, got {raw!r}", where)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {raw!r}", where) from None
    if kind is int:
        if not value.is_integer():
            raise ConfigError(f"expected an integer, got {raw!r}", where)
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"expected a finite number, got {raw!r}", where)
    return value


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*[=:]", re.IGNORECASE)
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.match(line):
            return i
    return None


def _where(text, key, fmt):
    line = _line_of(text, key) if fmt == "ini" else None
    return f"line {line}, key {key!r}" if line else f"key {key!r}"


def _read(text: str) -> tuple[str, dict, str]:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", f"line {exc.lineno}") from None
        if not isinstance(obj, dict):
            raise ConfigError("JSON config must be an object")
        obj = dict(obj)
        if "experiment" not in obj:
            raise ConfigError("missing required key", "key 'experiment'")
        return str(obj.pop("experiment")), obj, "json"
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [experiment] section header", f"line {exc.lineno}") from None
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    sections = parser.sections()
    if len(sections) != 1:
        raise ConfigError(f"expected exactly one [experiment] section, found {len(sections)}")
    name = sections[0]
    return name, dict(parser[name]), "ini"


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config; defaults are filled in and unknown keys rejected."""
    name, raw, fmt = _read(text)
    if name not in SCHEMAS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {sorted(SCHEMAS)}")
    schema = {**SCHEMAS[name], **_COMMON}
    for key in raw:
        if key not in schema:
            raise ConfigError(f"unknown key for {name}", _where(text, key, fmt))
    values = {}
    for key, (kind, default) in schema.items():
        if key in raw:
            values[key] = _coerce(raw[key], kind, _where(text, key, fmt))
        elif default is REQUIRED:
            raise ConfigError(f"missing required key for {name}", f"key {key!r}")
        else:
            values[key] = default
    for (exp, key), options in CHOICES.items():
        if exp == name and values[key] not in options:
            raise ConfigError(f"must be one of {options}", _where(text, key, fmt))
    seed = values.pop("seed")
    output_dir = values.pop("output_dir")
    cfg = ExperimentConfig(name, values, output_dir, seed)
    _validate(cfg, text, fmt)
    return cfg


def _validate(cfg: ExperimentConfig, text: str, fmt: str):
    p = cfg.params

    def bad(key, msg):
        raise ConfigError(msg, _where(text, key, fmt))

    for key in ("steps", "n", "d", "m"):
        if key in p and p[key] < 1:
            bad(key, "must be >= 1")
    if "steps" in p and "max_period" in p and p["steps"] + 1 < p["tail_window"] + p["max_period"]:
        bad("steps", "too short for period detection (need steps + 1 >= tail_window + max_period)")
    if cfg.experiment == "balance2d":
        if not p["mu"] > 0:
            bad("mu", "must be positive")
        if p["theorem_mode"] and not 1.0 < p["K"] < 1.5:
            bad("K", f"theorem mode requires 1<K<1.5, got {p['K']}")
    if cfg.experiment == "neuron":
        if p["d"] < 2:
            bad("d", "must be >= 2")
        if p["theorem_mode"]:
            if not 1.0 < p["K"] <= 1.1:
                bad("K", f"theorem mode requires 1<K<=1.1, got {p['K']}")
            if not 0.0 < p["eps"] <= 0.1:
                bad("eps", f"theorem mode requires 0<eps<=0.1, got {p['eps']}")
    if cfg.experiment in ("matfac_sym", "matfac_quasi"):
        if not p["eta_rel"] > 0:
            bad("eta_rel", "must be positive")
        if cfg.experiment == "matfac_quasi" and not p["alpha"] > 0:
            bad("alpha", "must be positive")
    if cfg.experiment == "orbit_predict" and not (p["mu"] > 0 and p["eta"] > 0):
        bad("mu", "mu and eta must be positive")


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
