"""Experiment configuration: INI-style ``key = value`` sections with comma lists.

Every violation in a file is collected before anything is raised, so a single
run of :func:`parse_config` reports all problems at once.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable

from .elliptic import BC
from .errors import ConfigError

__all__ = ["ExperimentConfig", "parse_config", "parse_text", "SCHEMA", "BATTERIES"]

BATTERIES = ("validate", "simulate", "martingale", "uniqueness", "markov", "regularizer")
DIFFUSIONS = ("constant", "affine", "bump", "table")
NOISES = ("holder_sqrt", "lipschitz", "truncated", "additive", "custom_table", "power")
BASES = ("sine", "cosine", "constant", "eigen")
INITIALS = ("sine", "constant", "zero")
MODELS = ("custom", "ou")
MODULI = ("sqrt", "linear", "power", "noise")


def _float(v: str) -> float:
    return float(v)


def _int(v: str) -> int:
    f = float(v)
    if f != int(f):
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _floats(v: str) -> list[float]:
    return [float(x) for x in v.split(",") if x.strip()]


def _names(v: str) -> list[str]:
    return [x.strip().lower() for x in v.split(",") if x.strip()]


def _name(v: str) -> str:
    return v.strip().lower()


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None
    check: Callable[[Any], str | None] | None = None  # returns a message on violation
    required: bool = False


def _positive(name):
    return lambda v: None if v > 0 else f"{name} must be positive"


def _nonneg(name):
    return lambda v: None if v >= 0 else f"{name} must be nonnegative"


def _one_of(name, options):
    return lambda v: None if v in options else f"unknown {name}: {v!r} (expected one of {', '.join(options)})"


def _all_of(name, options):
    def check(vs):
        bad = [v for v in vs if v not in options]
        return f"unknown {name}: {', '.join(bad)}" if bad else None

    return check


def _bc(v):
    try:
        BC.parse(v)
    except ValueError:
        return "unknown boundary condition"
    return None


def _grid(v):
    return None if 2 <= v <= 256 else "n must lie in [2, 256]"


def _unit(name):
    return lambda v: None if 0 < v < 1 else f"{name} must lie in (0, 1)"


def _deltas(name):
    def check(vs):
        pos = [v for v in vs if v != 0]
        if not vs or any(v < 0 for v in vs) or any(b >= a for a, b in zip(pos, pos[1:])):
            return f"{name} must be nonnegative with decreasing positive entries"
        return None

    return check


def _decreasing(name):
    def check(vs):
        if not vs:
            return f"{name} must not be empty"
        if any(v < 0 for v in vs) or any(b > a for a, b in zip(vs, vs[1:])):
            return f"{name} must be nonnegative and nonincreasing"
        return None

    return check


SCHEMA: dict[str, dict[str, Key]] = {
    "model": {
        "kind": Key(_name, "custom", _one_of("model kind", MODELS)),
        "n": Key(_int, 16, _grid),
        "length": Key(_float, 1.0, _positive("length")),
        "bc": Key(_name, "dirichlet", _bc),
        "diffusion": Key(_name, "constant", _one_of("diffusion coefficient", DIFFUSIONS)),
        "diffusion_params": Key(_floats, [0.1]),
        "drift": Key(_floats, [0.0, 1.0, 0.0, -1.0]),
        "noise": Key(_name, "holder_sqrt", _one_of("noise family", NOISES)),
        "K": Key(_int, 8, _nonneg("K")),
        "noise_c": Key(_float, 1.0, _nonneg("noise_c")),
        "noise_decay": Key(_float, 0.5, lambda v: None if 0 <= v < 1 else "noise_decay must lie in [0, 1)"),
        "noise_cap": Key(_float, math.inf, _positive("noise_cap")),
        "noise_basis": Key(_name, None, _one_of("noise basis", BASES)),
        "noise_amplitudes": Key(_floats, None),
        "noise_exponent": Key(_float, 0.5, _positive("noise_exponent")),
        "table_r": Key(_floats, None),
        "table_g": Key(_floats, None),
        "alpha": Key(_floats, None),
        "beta": Key(_floats, None),
        "tail_bound": Key(_float, None, _nonneg("tail_bound")),
    },
    "run": {
        "T": Key(_float, 1.0, _positive("T")),
        "dt": Key(_float, 1e-3, _positive("dt")),
        "paths": Key(_int, 1000, lambda v: None if 1 <= v <= 10**6 else "paths must lie in [1, 1e6]"),
        "seed": Key(_int, None, _nonneg("seed"), required=True),
        "stop_level": Key(_float, math.inf, _positive("stop_level")),
        "stride": Key(_int, 1, _positive("stride")),
        "initial": Key(_name, "sine", _one_of("initial state", INITIALS)),
        "initial_amplitude": Key(_float, 1.0),
    },
    "tests": {
        "battery": Key(_names, list(BATTERIES), _all_of("battery", BATTERIES)),
        "threshold": Key(_float, 3.0, _positive("threshold")),
        "windows": Key(_floats, None),  # default: the two halves of [0, T]
        "test_functions": Key(_names, ["linear", "square", "trigonometric"],
                              _all_of("test function", ("linear", "square", "trigonometric"))),
        "modes": Key(_int, 2, _positive("modes")),
        "weights": Key(_names, ["one", "tanh"], _all_of("weight", ("one", "tanh", "clip"))),
        "markov_s": Key(_float, 0.25, _positive("markov_s")),
        "markov_t": Key(_float, 0.25, _positive("markov_t")),
        "restart_level": Key(_float, math.inf, _positive("restart_level")),
        "feller_deltas": Key(_floats, [0.1, 0.01, 0.001], _decreasing("feller_deltas")),
        "containment_quantile": Key(_float, 0.99, _unit("containment_quantile")),
        "uniqueness_deltas": Key(_floats, [0.0, 0.1, 0.01, 0.001], _deltas("uniqueness_deltas")),
        "halvings": Key(_int, 3, _nonneg("halvings")),
        "regularizer_levels": Key(_int, 6, lambda v: None if 1 <= v <= 12 else "regularizer_levels must lie in [1, 12]"),
        "modulus": Key(_name, "sqrt", _one_of("modulus", MODULI)),
        "modulus_exponent": Key(_float, 0.5, _positive("modulus_exponent")),
        "validate_radius": Key(_float, 5.0, _positive("validate_radius")),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    tests: dict = field(default_factory=dict)
    source: str = ""

    @property
    def seed(self) -> int:
        return self.run["seed"]

    def digest(self) -> str:
        """SHA-256 of the canonical form (independent of comments and key order)."""
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def canonical(self) -> str:
        lines = []
        for sec in SCHEMA:
            lines.append(f"[{sec}]")
            values = getattr(self, sec)
            for key in sorted(SCHEMA[sec]):
                v = values[key]
                if v is None:
                    continue
                if isinstance(v, list):
                    v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{key} = {v}")
            lines.append("")
        return "\n".join(lines)

    def with_overrides(self, paths: int | None = None, seed: int | None = None) -> "ExperimentConfig":
        run = dict(self.run)
        if paths is not None:
            run["paths"] = paths
        if seed is not None:
            run["seed"] = seed
        errors = []
        for key in ("paths", "seed"):
            spec = SCHEMA["run"][key]
            msg = spec.check(run[key]) if spec.check else None
            if msg:
                errors.append(f"[run] {msg}")
        if errors:
            raise ConfigError(errors)
        return ExperimentConfig(model=self.model, run=run, tests=self.tests, source=self.source)


def parse_text(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep case: ``K`` and ``T`` are keys
    errors = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from exc
    for sec in cp.sections():
        if sec not in SCHEMA:
            errors.append(f"unknown section [{sec}]")
    out = {}
    for sec, keys in SCHEMA.items():
        given = dict(cp.items(sec)) if cp.has_section(sec) else {}
        for key in given:
            if key not in keys:
                errors.append(f"[{sec}] unknown key {key!r}")
        values = {}
        for key, spec in keys.items():
            if key not in given:
                if spec.required:
                    errors.append(f"[{sec}] missing required key {key!r}")
                values[key] = spec.default
                continue
            try:
                v = spec.parse(given[key])
            except ValueError as exc:
                errors.append(f"[{sec}] {key}: cannot parse {given[key]!r} ({exc})")
                values[key] = spec.default
                continue
            msg = spec.check(v) if spec.check else None
            if msg:
                errors.append(f"[{sec}] {msg}")
            values[key] = v
        out[sec] = values
    m = out["model"]
    if m["noise"] == "custom_table" and (m["table_r"] is None or m["table_g"] is None):
        errors.append("[model] custom_table noise needs table_r and table_g")
    if m["table_r"] is not None and m["table_g"] is not None and len(m["table_r"]) != len(m["table_g"]):
        errors.append("[model] table_r and table_g must have the same length")
    if m["noise"] == "truncated" and not math.isfinite(m["noise_cap"]):
        errors.append("[model] truncated noise needs a finite noise_cap")
    if m["noise_amplitudes"] is not None and len(m["noise_amplitudes"]) != m["K"]:
        errors.append("[model] noise_amplitudes must have K entries")
    if m["noise"] == "power" and m["noise_exponent"] > 1 and (m["alpha"] is None or m["beta"] is None):
        errors.append("[model] power noise with noise_exponent > 1 needs alpha and beta")
    if m["noise_basis"] == "eigen" and m["K"] > m["n"]:
        errors.append("[model] eigen basis has at most n modes")
    if len(m["drift"]) == 0:
        errors.append("[model] drift needs at least one coefficient")
    r = out["run"]
    if r["T"] is not None and r["dt"] is not None and r["T"] > 0 and r["dt"] > 0:
        steps = r["T"] / r["dt"]
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            errors.append("[run] T must be an integer multiple of dt")
        elif r["stride"] and round(steps) % r["stride"]:
            errors.append("[run] stride must divide T / dt")
    t = out["tests"]
    if t["windows"] is None:
        T = r["T"] if r["T"] and r["T"] > 0 else 1.0
        t["windows"] = [0.0, T / 2, T / 2, T]
    w = t["windows"]
    if len(w) % 2 or any(not (0 <= a < b) for a, b in zip(w[::2], w[1::2])):
        errors.append("[tests] windows must be pairs s < t with s >= 0")
    elif w and r["T"] is not None and max(w) > r["T"] + 1e-12:
        errors.append("[tests] windows must end by T")
    if r["dt"] and r["dt"] > 0:
        for key in ("markov_s", "markov_t"):
            k = t[key] / r["dt"]
            if t[key] > 0 and abs(k - round(k)) > 1e-9 * max(1.0, k):
                errors.append(f"[tests] {key} must be an integer multiple of dt")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(model=out["model"], run=out["run"], tests=out["tests"], source=text)


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    return parse_text(text)
