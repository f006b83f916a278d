"""Run configuration: TOML parsing with a closed schema.

Unknown keys are errors, as are wrong types and invalid process parameters;
every error names the field path and, when it can be located, the line.

Schema
------
Top level::

    seed = 1                    # required, nonnegative integer
    n_paths = 100000            # paths per simulated quantity
    workers = 1
    output = "runs/example"     # optional; CLI --out and MAXINEQ_OUTPUT_ROOT apply otherwise
    checks = ["envelope"]       # any of CHECK_KINDS; empty -> manifest only
    F = ["pow:0.5", "pow:1"]    # moderate-function descriptors
    plots = true

    [time_grid]                 # t = 10^start * 10^(k / points_per_decade)
    start_decade = -2
    decades = 6
    points_per_decade = 2

    [[process]]                 # repeated; kind plus that variant's parameters
    kind = "ou"
    alpha = 0.05
    x0 = 0.0                    # optional
    label = "ou"                # optional, defaults to kind
    normalized = false          # complex_bm only

    [thresholds]                # overrides, echoed into the manifest
    spread_limit = 10.0         # global envelope spread limit
    min_ratio = 1e-3
    ks_level = 0.01
    z = 4.0
    [thresholds.spread.ou]      # per process label and descriptor
    "pow:2" = 3.0

Per-check option tables ``[controllability]``, ``[good_lambda]``,
``[lp_bound]``, ``[identities]`` and ``[conformal]`` are listed in
:data:`CHECK_OPTIONS`.
"""

from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass, fields
from typing import Optional

from .moderate import parse_descriptor
from .processes import VARIANTS, ParameterError, process_from_dict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


CHECK_KINDS = ("envelope", "controllability", "good_lambda", "lp_bound", "identities", "conformal")

NUM = (int, float)
LIST = list

TOP_LEVEL = {
    "seed": int,
    "n_paths": int,
    "workers": int,
    "output": str,
    "checks": LIST,
    "F": LIST,
    "plots": bool,
    "time_grid": dict,
    "process": LIST,
    "thresholds": dict,
    **{k: dict for k in CHECK_KINDS if k != "envelope"},
}

TIME_GRID = {"start_decade": NUM, "decades": NUM, "points_per_decade": int}

THRESHOLDS = {"spread_limit": NUM, "min_ratio": NUM, "ks_level": NUM, "z": NUM, "spread": dict, "conformal": dict}

CHECK_OPTIONS = {
    "controllability": {"beta": NUM, "gamma": NUM, "C": NUM, "t_grid": LIST, "lambda_grid": LIST},
    "good_lambda": {"levels": LIST, "cap": NUM, "deltas": LIST, "beta": NUM},
    "lp_bound": {"alpha": LIST, "p": LIST, "t": LIST},
    "identities": {"pairs": LIST},
    "conformal": {"map": str, "T": NUM, "n_steps": int, "times": LIST, "compare_complex_bm": bool},
}

IDENTITY_PAIRS = ("complex_ou_vs_cir", "cir_vs_time_changed_besq", "besq_additivity", "time_changed_cbm_vs_complex_ou")

DEFAULTS = {
    "n_paths": 100_000,
    "workers": 1,
    "checks": [],
    "F": ["pow:0.5", "pow:1", "pow:2", "powlog:1,1"],
    "plots": True,
    "time_grid": {"start_decade": -2, "decades": 6, "points_per_decade": 2},
    "process": [],
    "thresholds": {},
}


class ConfigError(ParameterError):
    """Malformed or invalid run configuration."""

    def __init__(self, path: str, message: str, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f"{path} (line {line})" if line else path
        super().__init__(f"config error at {where}: {message}")


def _locate(text: str, path: str) -> Optional[int]:
    """Best-effort 1-based line of the last key in ``path`` (e.g. ``process[1].b``)."""
    if not text:
        return None
    lines = text.splitlines()
    start = 0
    parts = re.findall(r"([^.\[\]]+)(?:\[(\d+)\])?", path)
    for name, index in parts[:-1]:
        header = re.compile(rf"^\s*\[\[?\s*{re.escape(name)}(\.[^\]]*)?\s*\]\]?\s*$")
        hits = [i for i in range(start, len(lines)) if header.match(lines[i])]
        if index and len(hits) > int(index):
            start = hits[int(index)]
        elif hits:
            start = hits[0]
    key = parts[-1][0] if parts else ""
    pat = re.compile(rf"^\s*(\"{re.escape(key)}\"|{re.escape(key)})\s*=|\[\s*{re.escape(key)}\s*\]")
    for i in range(start, len(lines)):
        if pat.search(lines[i]):
            return i + 1
    return None


def _type_name(t) -> str:
    if t is NUM:
        return "number"
    return {int: "integer", str: "string", bool: "boolean", list: "array", dict: "table"}[t]


def _check_type(value, expected, path, text):
    ok = isinstance(value, expected) and not (expected in (int, NUM) and isinstance(value, bool))
    if not ok:
        raise ConfigError(path, f"expected {_type_name(expected)}, got {type(value).__name__}", _locate(text, path))


def _check_table(table: dict, schema: dict, prefix: str, text: str):
    for key, value in table.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in schema:
            raise ConfigError(path, f"unknown key {key!r}; allowed: {', '.join(sorted(schema))}", _locate(text, path))
        _check_type(value, schema[key], path, text)


def _numbers(values, path, text, positive=True):
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, NUM) or (positive and not v > 0):
            raise ConfigError(f"{path}[{i}]", f"expected a {'positive ' if positive else ''}number, got {v!r}", _locate(text, path))
    return [float(v) for v in values]


@dataclass
class RunConfig:
    """Fully resolved configuration; ``to_dict`` is what the manifest stores."""

    data: dict
    source: Optional[str] = None

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def n_paths(self) -> int:
        return self.data["n_paths"]

    @property
    def workers(self) -> int:
        return self.data["workers"]

    def processes(self):
        """``(label, spec, normalized)`` triples."""
        out = []
        for entry in self.data["process"]:
            d = {k: v for k, v in entry.items() if k not in ("label", "normalized")}
            if isinstance(d.get("x0"), list):
                d["x0"] = complex(*d["x0"])
            out.append((entry["label"], process_from_dict(d), bool(entry.get("normalized", False))))
        return out

    def times(self):
        import numpy as np

        tg = self.data["time_grid"]
        n = int(round(tg["decades"] * tg["points_per_decade"])) + 1
        return np.logspace(tg["start_decade"], tg["start_decade"] + tg["decades"], n)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def load_config(path: str, overrides: Optional[dict] = None) -> RunConfig:
    with open(path, "rb") as fh:
        raw = fh.read()
    return parse_config(raw.decode("utf-8"), source=str(path), overrides=overrides)


def parse_config(text: str, source: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Parse TOML text into a validated :class:`RunConfig`."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError("<toml>", str(exc), int(m.group(1)) if m else None) from None
    return resolve(doc, text, source, overrides)


def resolve(doc: dict, text: str = "", source: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Validate a parsed document and fill in defaults."""
    doc = copy.deepcopy(doc)
    for k, v in (overrides or {}).items():
        if v is not None:
            doc[k] = v
    _check_table(doc, TOP_LEVEL, "", text)
    if "seed" not in doc:
        raise ConfigError("seed", "a master seed is required (no wall-clock seeding)")
    if doc["seed"] < 0:
        raise ConfigError("seed", "must be a nonnegative integer", _locate(text, "seed"))
    data = copy.deepcopy(DEFAULTS)
    data.update({k: v for k, v in doc.items()})
    for key in ("n_paths", "workers"):
        if data[key] < 1:
            raise ConfigError(key, "must be >= 1", _locate(text, key))

    for i, c in enumerate(data["checks"]):
        if c not in CHECK_KINDS:
            raise ConfigError(f"checks[{i}]", f"unknown check {c!r}; expected one of {', '.join(CHECK_KINDS)}", _locate(text, "checks"))
    for i, d in enumerate(data["F"]):
        if not isinstance(d, str):
            raise ConfigError(f"F[{i}]", f"expected a descriptor string, got {d!r}", _locate(text, "F"))
        try:
            parse_descriptor(d)
        except ParameterError as exc:
            raise ConfigError(f"F[{i}]", str(exc), _locate(text, "F")) from None

    tg = {**DEFAULTS["time_grid"], **doc.get("time_grid", {})}
    _check_table(tg, TIME_GRID, "time_grid", text)
    if not (tg["decades"] > 0 and tg["points_per_decade"] >= 1):
        raise ConfigError("time_grid", "decades must be > 0 and points_per_decade >= 1", _locate(text, "time_grid"))
    data["time_grid"] = tg

    procs = []
    labels = set()
    for i, entry in enumerate(data["process"]):
        path = f"process[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(path, "expected a table", _locate(text, path))
        kind = entry.get("kind")
        if kind not in VARIANTS:
            raise ConfigError(f"{path}.kind", f"unknown process kind {kind!r}; expected one of {', '.join(sorted(VARIANTS))}", _locate(text, f"{path}.kind"))
        cls = VARIANTS[kind]
        allowed = {"kind": str, "label": str, "x0": (int, float, list)}
        allowed.update({f.name: NUM for f in fields(cls) if f.name != "x0"})
        if kind == "complex_bm":
            allowed["normalized"] = bool
        for key, value in entry.items():
            if key not in allowed:
                raise ConfigError(f"{path}.{key}", f"unknown key {key!r} for {kind}; allowed: {', '.join(sorted(allowed))}", _locate(text, f"{path}.{key}"))
            if allowed[key] is NUM:
                _numbers([value], f"{path}.{key}", text, positive=False)
            else:
                _check_type(value, allowed[key], f"{path}.{key}", text)
        params = {k: v for k, v in entry.items() if k not in ("label", "normalized")}
        if isinstance(params.get("x0"), list):
            params["x0"] = complex(*params["x0"])
        try:
            spec = process_from_dict(params)
        except (ParameterError, TypeError) as exc:
            bad = next((k for k in ("b", "a", "c", "alpha", "beta", "mu", "x0") if k in entry and k in str(exc)), "kind")
            raise ConfigError(f"{path}.{bad}", str(exc), _locate(text, f"{path}.{bad}")) from None
        label = entry.get("label", kind + ("_normalized" if entry.get("normalized") else ""))
        if label in labels:
            raise ConfigError(f"{path}.label", f"duplicate process label {label!r}", _locate(text, f"{path}.label"))
        labels.add(label)
        resolved = spec.to_dict()
        resolved["label"] = label
        if kind == "complex_bm":
            resolved["normalized"] = bool(entry.get("normalized", False))
        procs.append(resolved)
    data["process"] = procs

    th = data["thresholds"]
    _check_table(th, THRESHOLDS, "thresholds", text)
    for key in ("spread_limit", "min_ratio", "ks_level", "z"):
        if key in th and not th[key] > 0:
            raise ConfigError(f"thresholds.{key}", "must be > 0", _locate(text, key))
    for label, per in th.get("spread", {}).items():
        path = f"thresholds.spread.{label}"
        if label not in labels:
            raise ConfigError(path, f"no process with label {label!r}", _locate(text, path))
        if not isinstance(per, dict):
            raise ConfigError(path, "expected a table of descriptor = limit", _locate(text, path))
        for d, v in per.items():
            if d not in data["F"]:
                raise ConfigError(f"{path}.{d}", f"descriptor {d!r} is not in F", _locate(text, d))
            _numbers([v], f"{path}.{d}", text)
    for d, v in th.get("conformal", {}).items():
        if d not in data["F"]:
            raise ConfigError(f"thresholds.conformal.{d}", f"descriptor {d!r} is not in F", _locate(text, d))
        _numbers([v], f"thresholds.conformal.{d}", text)

    for kind, schema in CHECK_OPTIONS.items():
        opts = data.get(kind, {})
        _check_table(opts, schema, kind, text)
        for key, value in opts.items():
            if schema[key] is LIST and key != "pairs":
                _numbers(value, f"{kind}.{key}", text)
            if schema[key] is NUM and not value > 0:
                raise ConfigError(f"{kind}.{key}", "must be > 0", _locate(text, f"{kind}.{key}"))
        data[kind] = opts
    for i, pair in enumerate(data["identities"].get("pairs", [])):
        if pair not in IDENTITY_PAIRS:
            raise ConfigError(f"identities.pairs[{i}]", f"unknown pair {pair!r}; expected one of {', '.join(IDENTITY_PAIRS)}", _locate(text, "pairs"))
    cm = data["conformal"].get("map")
    if cm is not None and cm not in ("identity", "square", "exponential"):
        raise ConfigError("conformal.map", f"unknown map {cm!r}; expected identity, square or exponential", _locate(text, "conformal.map"))
    return RunConfig(data, source)
