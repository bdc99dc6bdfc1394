"""Run configuration: a sectioned INI file with a fixed schema.

Sections are ``[model]`` (canonical flat model keys, e.g. ``g = linear`` and
``g.c = 0.1``), ``[sim]`` (SimConfig fields), ``[mc]`` (estimator inputs),
``[grids]`` (state grids and criterion exponents), ``[regimes]`` (optional
classification parameters) and ``[output]``. Unknown sections and keys are
errors, reported with their line number.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ModelError
from .model import ModelSpec, build_model
from .simulate import SimConfig


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.replace(",", " ").split())


_SCHEMA = {
    "sim": {"dt": float, "t_max": float, "x_abs": float, "x_max": float,
            "rate_cap_factor": float, "seed": int, "refine": int},
    "mc": {"x0": float, "n": int, "event": str, "t": float, "times": _floats,
           "poly_power": float, "eta": float, "rate_floor": float, "tolerance": float,
           "a": float, "c": float, "b": float, "checkpoints": _floats, "budget": float,
           "paths": int},
    "grids": {"near_zero_min": float, "near_zero_max": float, "near_zero_points": int,
              "large_min": float, "large_max": float, "large_points": int, "a_values": _floats},
    "regimes": {"a_scan": _floats, "slack": float, "eta_ln": float, "eta_local": float,
                "eta_global": float, "rate_floor": float},
    "output": {"directory": str, "decimation": int},
}
SECTIONS = ("model", *_SCHEMA)


@dataclass
class RunConfig:
    model_raw: dict
    sections: dict = field(default_factory=dict)
    digest: str = ""
    path: str = ""
    lines: dict = field(default_factory=dict)

    def has(self, section: str) -> bool:
        return section == "model" and bool(self.model_raw) or section in self.sections

    def require(self, *names):
        for name in names:
            if not self.has(name):
                raise ConfigError(f"section [{name}] is required for this subcommand", name)

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def need(self, section: str, key: str):
        value = self.get(section, key)
        if value is None:
            raise ConfigError("missing key", f"{section}.{key}")
        return value

    def model(self) -> ModelSpec:
        try:
            return build_model(self.model_raw)
        except ModelError as exc:
            key = exc.key or "model"
            head = key.split(".")[0]
            line = self.lines.get(("model", key)) or self.lines.get(("model", head))
            raise ConfigError(str(exc).split(": ", 1)[-1], f"model.{key}", line) from None

    def sim(self, seed: int | None = None) -> SimConfig:
        sec = dict(self.sections.get("sim", {}))
        if "t_max" not in sec:
            raise ConfigError("missing key", "sim.t_max")
        if seed is not None:
            sec["seed"] = seed
        dec = self.get("output", "decimation")
        if dec is not None:
            sec["decimation"] = dec
        try:
            return SimConfig(**sec)
        except ModelError as exc:
            key = exc.key or "sim"
            raise ConfigError(str(exc).split(": ", 1)[-1], key,
                              self.lines.get(tuple(key.split(".", 1)))) from None

    def grids(self):
        g = self.sections.get("grids", {})
        near = np.logspace(np.log10(g.get("near_zero_min", 1e-8)), np.log10(g.get("near_zero_max", 1e-2)),
                           g.get("near_zero_points", 61))
        large = np.logspace(np.log10(g.get("large_min", 1e2)), np.log10(g.get("large_max", 1e8)),
                            g.get("large_points", 61))
        if not (near.size and large.size and near[0] > 0 and large[0] > 0):
            raise ConfigError("grids must be non-empty with positive bounds", "grids")
        return near, large


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, from a raw scan of the file."""
    out = {}
    section = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            out[(section, None)] = i
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip()), i)
    return out


def parse_config(text: str, path: str = "<string>") -> RunConfig:
    lines = _line_index(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"cannot parse: {exc.message if hasattr(exc, 'message') else exc}",
                          path, line) from None
    sections = {}
    model_raw = {}
    for name in cp.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section; expected one of {list(SECTIONS)}", f"[{name}]",
                              lines.get((name, None)))
        if name == "model":
            model_raw = dict(cp.items(name))
            continue
        schema = _SCHEMA[name]
        values = {}
        for key, raw in cp.items(name):
            where = lines.get((name, key))
            if key not in schema:
                raise ConfigError(f"unknown key; expected one of {sorted(schema)}", f"{name}.{key}", where)
            try:
                conv = schema[key]
                values[key] = raw.strip() if conv is str else conv(raw)
            except ValueError:
                raise ConfigError(f"bad value {raw!r}", f"{name}.{key}", where) from None
        sections[name] = values
    digest = hashlib.sha256(text.encode()).hexdigest()[:16]
    return RunConfig(model_raw, sections, digest, path, lines)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config(text, path)
