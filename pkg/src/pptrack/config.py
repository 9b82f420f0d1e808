"""Scenario presets and the INI-style configuration format.

A config file has one section per subsystem::

    [scenario]
    base = pp-otcp          ; start from a preset, then override

    [simulation]
    dt = 0.0005

Vectors are comma separated, matrices are rows separated by ``;``.
Unknown sections or keys are rejected. Every numeric value of the two
shipped presets lives in :data:`PRESETS`; nothing else hardcodes them.
"""
from __future__ import annotations

import configparser
import copy
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .critic import BasisSpec, CriticState, ExperienceBuffer, manipulator_basis
from .dynamics import ManipulatorParams, manipulator_plant, oscillator_reference
from .performance import CostSpec, PenaltySpec, PpfSpec, Quadratic, RiskSensitive
from .simulation import Models, SimConfig


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the culprit."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


# kind: float | int | bool | str | vector | matrix | weights
SCHEMA: dict[str, dict[str, str]] = {
    "scenario": {"name": "str"},
    "plant": {k: "float" for k in ("p1", "p2", "p3", "fs1", "fs2", "fd1", "fd2")},
    "reference": {"x_r0": "vector"},
    "cost": {"variant": "str", "q": "matrix", "r": "matrix"},
    "penalty": {
        "k": "vector",
        "alpha": "vector",
        "rho0": "vector",
        "rho_inf": "vector",
        "l": "vector",
        "h": "vector",
        "beta": "vector",
        "ref_normalization": "str",
    },
    "critic": {
        "basis": "str",
        "k_c": "float",
        "k_e": "float",
        "gamma": "float",
        "buffer_size": "int",
        "rank_tol": "float",
        "improve_factor": "float",
        "normalize": "bool",
    },
    "simulation": {"dt": "float", "t_end": "float", "record_dt": "float", "buffer_dt": "float"},
    "initial": {"x0": "vector", "w0": "weights"},
}

PRESET_NAMES = ("otcp-quadratic", "pp-otcp")
BASES = {"manipulator-23": manipulator_basis}

_RHO0 = math.radians(60.0)
_RHO_INF = math.radians(3.0)

_COMMON = {
    "plant": {"p1": 3.4743, "p2": 0.196, "p3": 0.242,
              "fs1": 8.45, "fs2": 2.35, "fd1": 5.3, "fd2": 1.1},
    "reference": {"x_r0": [0.5, 1.0, 0.0, 0.0]},
    "cost": {"variant": "quadratic",
             "q": np.diag([8.0, 8.0, 8.0, 8.0]).tolist(),
             "r": np.eye(2).tolist()},
    "penalty": {
        "k": [1.0, 0.3, 1.0, 1.0],
        "alpha": [0.20, 0.25, 0.25, 0.25],
        "rho0": [_RHO0] * 4,
        "rho_inf": [_RHO_INF] * 4,
        "l": [0.1] * 4,
        "h": [0.01] * 4,
        "beta": [10.0] * 4,
        "ref_normalization": "unscaled",
    },
    "critic": {"basis": "manipulator-23", "k_c": 100.0, "k_e": 10.0, "gamma": 1.0,
               "buffer_size": 25, "rank_tol": 1e-8, "improve_factor": 1.05,
               "normalize": False},
    "simulation": {"dt": 1e-3, "t_end": 80.0, "record_dt": 0.01, "buffer_dt": 0.1},
    "initial": {"x0": [0.4, 1.1, 0.0, 0.0], "w0": "zeros"},
}


def _preset(name: str, variant: str) -> dict:
    values = copy.deepcopy(_COMMON)
    values["scenario"] = {"name": name}
    values["cost"]["variant"] = variant
    return values


PRESETS = {
    "otcp-quadratic": _preset("otcp-quadratic", "quadratic"),
    "pp-otcp": _preset("pp-otcp", "risk-sensitive"),
}
SECTION_ORDER = list(SCHEMA)


def _parse_value(key: str, kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError("not an integer")
            return int(v)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError("not a boolean")
        if kind == "str":
            return raw
        if kind == "vector":
            return [float(v) for v in raw.split(",")]
        if kind == "matrix":
            rows = [[float(v) for v in row.split(",")] for row in raw.split(";")]
            if len({len(r) for r in rows}) != 1:
                raise ValueError("ragged matrix rows")
            return rows
        if kind == "weights":
            return "zeros" if raw == "zeros" else [float(v) for v in raw.split(",")]
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse {raw!r} as {kind} ({exc})") from None
    raise AssertionError(kind)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return v
    if v and isinstance(v[0], list):
        return "; ".join(", ".join(_fmt(float(x)) for x in row) for row in v)
    return ", ".join(_fmt(float(x)) for x in v)


@dataclass
class ScenarioPreset:
    """Complete, validated parameter tree of one scenario."""

    values: dict

    @property
    def name(self) -> str:
        return self.values["scenario"]["name"]

    def get(self, dotted: str):
        section, key = dotted.split(".")
        return self.values[section][key]

    def with_overrides(self, overrides: dict[str, object]) -> "ScenarioPreset":
        values = copy.deepcopy(self.values)
        for dotted, v in overrides.items():
            section, key = _split_key(dotted)
            values[section][key] = v
        return validate(values)

    # builders ---------------------------------------------------------
    def manipulator_params(self) -> ManipulatorParams:
        return ManipulatorParams(**self.values["plant"])

    def models(self) -> Models:
        return Models(manipulator_plant(self.manipulator_params()),
                      oscillator_reference(self.values["reference"]["x_r0"]))

    def penalty(self) -> PenaltySpec:
        p = self.values["penalty"]
        ppf = tuple(PpfSpec(r0, ri, l, a)
                    for r0, ri, l, a in zip(p["rho0"], p["rho_inf"], p["l"], p["alpha"]))
        return PenaltySpec(k=tuple(p["k"]), ppf=ppf, h=tuple(p["h"]), beta=tuple(p["beta"]),
                           ref_normalization=p["ref_normalization"])

    def cost(self) -> CostSpec:
        c = self.values["cost"]
        if c["variant"] == "quadratic":
            variant = Quadratic(np.array(c["q"], dtype=float))
        else:
            variant = RiskSensitive(self.penalty())
        return CostSpec(variant, np.array(c["r"], dtype=float))

    def basis(self) -> BasisSpec:
        return BASES[self.values["critic"]["basis"]]()

    def sim_config(self) -> SimConfig:
        return SimConfig(**self.values["simulation"])

    def initial_weights(self, N: int) -> np.ndarray:
        w0 = self.values["initial"]["w0"]
        return np.zeros(N) if w0 == "zeros" else np.array(w0, dtype=float)

    def critic(self) -> CriticState:
        c = self.values["critic"]
        N = self.basis().N
        buffer = ExperienceBuffer(c["buffer_size"], N, rank_tol=c["rank_tol"],
                                  improve_factor=c["improve_factor"])
        return CriticState(self.initial_weights(N), c["gamma"] * np.eye(N), c["k_c"], c["k_e"],
                           buffer, normalize=c["normalize"])

    @property
    def x0(self) -> np.ndarray:
        return np.array(self.values["initial"]["x0"], dtype=float)

    def to_ini(self) -> str:
        out = io.StringIO()
        for section in SECTION_ORDER:
            out.write(f"[{section}]\n")
            for key in SCHEMA[section]:
                out.write(f"{key} = {_fmt(self.values[section][key])}\n")
            out.write("\n")
        return out.getvalue()


def _split_key(dotted: str) -> tuple[str, str]:
    if dotted.count(".") != 1:
        raise ConfigError(dotted, "expected section.key")
    section, key = dotted.split(".")
    if section not in SCHEMA:
        raise ConfigError(dotted, f"unknown section {section!r}")
    if key not in SCHEMA[section]:
        raise ConfigError(dotted, f"unknown key {key!r}")
    return section, key


def _require(cond: bool, key: str, message: str):
    if not cond:
        raise ConfigError(key, message)


def validate(values: dict) -> ScenarioPreset:
    """Check every invariant of a parameter tree; raises :class:`ConfigError`."""
    for section, keys in SCHEMA.items():
        _require(section in values, section, "missing section")
        for key in keys:
            _require(key in values[section], f"{section}.{key}", "missing key")
        for key in values[section]:
            _require(key in keys, f"{section}.{key}", "unknown key")

    for key, v in values["plant"].items():
        _require(v > 0, f"plant.{key}", "must be > 0")
    n = len(values["reference"]["x_r0"])
    _require(n == 4, "reference.x_r0", "manipulator reference needs 4 entries")
    _require(len(values["initial"]["x0"]) == n, "initial.x0", f"needs {n} entries")

    cost = values["cost"]
    _require(cost["variant"] in ("quadratic", "risk-sensitive"), "cost.variant",
             "must be 'quadratic' or 'risk-sensitive'")
    q, r = np.array(cost["q"], dtype=float), np.array(cost["r"], dtype=float)
    _require(q.shape == (n, n), "cost.q", f"must be {n}x{n}")
    _require(np.allclose(q, q.T) and np.linalg.eigvalsh(q)[0] >= -1e-12, "cost.q",
             "must be symmetric positive semidefinite")
    _require(r.shape == (2, 2), "cost.r", "must be 2x2")
    _require(np.allclose(r, r.T) and np.linalg.eigvalsh(r)[0] > 0, "cost.r",
             "must be symmetric positive definite")

    pen = values["penalty"]
    for key in ("k", "alpha", "rho0", "rho_inf", "l", "h", "beta"):
        _require(len(pen[key]) == n, f"penalty.{key}", f"needs {n} entries")
    for key in ("alpha", "l", "beta", "rho_inf"):
        for i, v in enumerate(pen[key]):
            _require(v > 0, f"penalty.{key}[{i}]", "must be > 0")
    for key in ("k", "h"):
        for i, v in enumerate(pen[key]):
            _require(v >= 0, f"penalty.{key}[{i}]", "must be >= 0")
    for i, (r0, ri) in enumerate(zip(pen["rho0"], pen["rho_inf"])):
        _require(r0 > ri, f"penalty.rho0[{i}]", "must exceed rho_inf")
    _require(pen["ref_normalization"] in ("unscaled", "ppf-scaled"),
             "penalty.ref_normalization", "must be 'unscaled' or 'ppf-scaled'")

    crit = values["critic"]
    _require(crit["basis"] in BASES, "critic.basis", f"must be one of {sorted(BASES)}")
    _require(crit["k_c"] >= 0, "critic.k_c", "must be >= 0")
    _require(crit["k_e"] >= 0, "critic.k_e", "must be >= 0")
    _require(crit["gamma"] > 0, "critic.gamma", "must be > 0")
    _require(crit["buffer_size"] >= 1, "critic.buffer_size", "must be >= 1")
    _require(0 < crit["rank_tol"] < 1, "critic.rank_tol", "must be in (0, 1)")
    _require(crit["improve_factor"] >= 1, "critic.improve_factor", "must be >= 1")
    N = BASES[crit["basis"]]().N
    w0 = values["initial"]["w0"]
    _require(w0 == "zeros" or len(w0) == N, "initial.w0", f"needs {N} entries or 'zeros'")

    sim = values["simulation"]
    try:
        SimConfig(**sim)
    except ValueError as exc:
        raise ConfigError("simulation", str(exc)) from None

    preset = ScenarioPreset(values)
    if cost["variant"] == "risk-sensitive":
        from .performance import constraint_margin

        margins = constraint_margin(preset.penalty(), np.subtract(values["initial"]["x0"],
                                                                  values["reference"]["x_r0"]), 0.0)
        _require(bool(np.all(margins < 1)), "initial.x0",
                 f"initial error outside the performance envelope (margins {margins})")
    return preset


def load_preset(name: str) -> ScenarioPreset:
    if name not in PRESETS:
        raise ConfigError("scenario.name", f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return validate(copy.deepcopy(PRESETS[name]))


def parse_config_text(text: str, base: str | None = None) -> ScenarioPreset:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc)) from None
    raw = {s: dict(parser[s]) for s in parser.sections()}
    scenario = raw.get("scenario", {})
    base = scenario.pop("base", base)
    if base and base not in PRESETS:
        raise ConfigError("scenario.base", f"unknown preset {base!r}")
    values = copy.deepcopy(PRESETS[base]) if base else {s: {} for s in SCHEMA}
    for section, entries in raw.items():
        if section not in SCHEMA:
            raise ConfigError(section, "unknown section")
        for key, text_value in entries.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            values[section][key] = _parse_value(f"{section}.{key}", SCHEMA[section][key],
                                                text_value)
    # a file without a base preset is a fully custom scenario
    values.setdefault("scenario", {}).setdefault("name", "custom")
    return validate(values)


def parse_config(path: str | Path, base: str | None = None) -> ScenarioPreset:
    """Read a config file; ``base`` names the preset to override when the
    file has no ``[scenario] base`` entry."""
    return parse_config_text(Path(path).read_text(), base=base)
