"""Flat sectioned key-value experiment configs.

The format is deliberately minimal: ``[section]`` headers, ``key = value``
lines, ``#`` comments, nothing nested.  Every diagnostic carries a line
number and parsing reports all violations at once rather than stopping
at the first.  ``serialize_config`` writes the canonical form, which is
a byte-exact fixed point under a further parse/serialize round trip.

Sections: ``[drift]`` the vector field, ``[grid]`` the mesh, ``[initial]``
the data, ``[run]`` the time window, level list and seed, ``[checks]``
the check list with parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import drifts
from .solver import build_grid

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "serialize_config",
    "build_field",
    "build_grid_from",
    "initial_values",
    "CHECK_NAMES",
]

_DRIFT_KINDS = (
    "zero",
    "hardy",
    "split",
    "annulus",
    "time_log",
    "log_counterexample",
    "ball",
)

CHECK_NAMES = (
    "positivity",
    "contraction",
    "composition",
    "refinement",
    "continuity",
    "weak",
    "apriori",
    "lp",
    "iteration",
    "cauchy",
    "formbound",
)


class ConfigError(ValueError):
    """Carries the full list of violations, one message per line."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))


@dataclass(frozen=True)
class ExperimentConfig:
    drift: dict
    grid: dict
    initial: dict
    run: dict
    checks: dict


def _float(text):
    return float(text)


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError("not an integer")
    return int(value)


def _str(text):
    return text


def _int_list(text):
    return tuple(_int(part.strip()) for part in text.split(",") if part.strip())


def _float_list(text):
    return tuple(float(part.strip()) for part in text.split(",") if part.strip())


def _str_list(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


# key -> (parser, range predicate or None, range description, default or
# REQUIRED).  Defaults of None mean "absent unless given".
_REQUIRED = object()

_SCHEMA = {
    "drift": {
        "kind": (_str, lambda v: v in _DRIFT_KINDS, "a catalog kind", _REQUIRED),
        "a": (_float, None, "", 1.0),
        "c1": (_float, _nonneg, ">= 0", 1.0),
        "c2": (_float, _nonneg, ">= 0", 1.0),
        "n": (_int, lambda v: v >= 1, ">= 1", 3),
        "m": (_int, _nonneg, ">= 0", 3),
        "c": (_float, None, "", 1.0),
        "delta": (_float, lambda v: 0.0 < v < 1.0, "in (0, 1)", 0.5),
        "a_exp": (_float, lambda v: 0.0 < v < 0.5, "in (0, 1/2)", 0.25),
        "a2": (_float, None, "", 1.0),
        "t0": (_float, _nonneg, ">= 0", 0.0),
        "eps": (_float, _positive, "> 0", 1.0),
        "kappa": (_float, _positive, "> 0", 2.0),
        "alpha_exp": (_float, lambda v: v >= 1.0, ">= 1", 1.0),
        "radius": (_float, _positive, "> 0", 1.0),
        "beta_scale": (_float, _nonneg, ">= 0", 1.0),
    },
    "grid": {
        "kind": (_str, lambda v: v in ("radial", "tensor3"), "radial or tensor3", _REQUIRED),
        "d": (_int, lambda v: v >= 3, ">= 3", 3),
        "r_max": (_float, _positive, "> 0", None),
        "n": (_int, lambda v: v >= 16, ">= 16", _REQUIRED),
        "r_min": (_float, _nonneg, ">= 0", 0.0),
        "spacing": (_str, lambda v: v in ("uniform", "geometric"), "uniform or geometric", "uniform"),
        "l": (_float, _positive, "> 0", None),
    },
    "initial": {
        "kind": (
            _str,
            lambda v: v in ("gaussian", "eigenmode", "indicator_smoothed"),
            "gaussian, eigenmode or indicator_smoothed",
            "gaussian",
        ),
        "center": (_float, _nonneg, ">= 0", 0.0),
        "width": (_float, _positive, "> 0", 1.0),
        "radius": (_float, _positive, "> 0", 1.0),
    },
    "run": {
        "s": (_float, _nonneg, ">= 0", 0.0),
        "t_end": (_float, _positive, "> 0", _REQUIRED),
        "dt": (_float, _positive, "> 0", _REQUIRED),
        "m_list": (_int_list, None, "", (8, 16, 32, 64)),
        "seed": (_int, _nonneg, ">= 0", 0),
        "out": (_str, None, "", "out"),
    },
    "checks": {
        "list": (_str_list, None, "", ()),
        "composition_r": (_float, _nonneg, ">= 0", None),
        "continuity_deltas": (_float_list, None, "", (0.02, 0.01, 0.005)),
        "continuity_tol": (_float, _positive, "> 0", 5e-2),
        "apriori_q": (_float, lambda v: v >= 2.0, ">= 2", 2.0),
        "apriori_alpha": (_float, lambda v: 0.0 <= v <= 1.0, "in [0, 1]", 1.0),
        "weak_tol": (_float, _positive, "> 0", 5e-3),
        "lp_p": (_float, lambda v: v >= 1.0, ">= 1 (inf allowed)", 2.0),
        "iteration_p": (_float, lambda v: v > 2.0, "> 2", 2.5),
        "iteration_alpha": (_float, lambda v: 0.0 <= v < 1.0, "in [0, 1)", 0.4),
        "iteration_sigma_prime": (_float, _positive, "> 0", 1.25),
        "cauchy_norm": (_str, lambda v: v in ("supL2", "supC"), "supL2 or supC", "supL2"),
        "cauchy_lattice": (_int, lambda v: v >= 2, ">= 2", 8),
    },
}

_SECTION_ORDER = ("drift", "grid", "initial", "run", "checks")

# keys meaningful for each drift kind (beyond `kind` and `beta_scale`)
_DRIFT_KEYS = {
    "zero": set(),
    "hardy": {"a"},
    "split": {"c1", "c2", "n", "m"},
    "annulus": {"c", "delta", "a_exp"},
    "time_log": {"a2", "t0", "eps"},
    "log_counterexample": {"kappa", "alpha_exp"},
    "ball": {"c", "radius"},
}

_GRID_KEYS = {
    "radial": {"d", "r_max", "n", "r_min", "spacing"},
    "tensor3": {"l", "n"},
}

_INITIAL_KEYS = {
    "gaussian": {"center", "width"},
    "eigenmode": set(),
    "indicator_smoothed": {"radius", "width"},
}


def parse_config(text):
    """Parse and validate; raises ``ConfigError`` listing every violation."""
    violations = []
    raw = {}      # section -> key -> (line, text value)
    section = None
    known_section = False
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            known_section = section in _SCHEMA
            if not known_section:
                violations.append(f"line {lineno}: unknown section [{section}]")
            elif section not in raw:
                raw[section] = {}
            continue
        if "=" not in stripped:
            violations.append(f"line {lineno}: expected 'key = value'")
            continue
        if section is None:
            violations.append(f"line {lineno}: key outside any [section]")
            continue
        if not known_section:
            continue
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _SCHEMA[section]:
            violations.append(f"line {lineno}: unknown key '{key}' in [{section}]")
            continue
        if key in raw[section]:
            first = raw[section][key][0]
            violations.append(
                f"line {lineno}: duplicate key '{key}' in [{section}]"
                f" (first at line {first})"
            )
            continue
        raw[section][key] = (lineno, value)

    resolved = {}
    for name in _SECTION_ORDER:
        schema = _SCHEMA[name]
        got = raw.get(name, {})
        out = {}
        for key, (parser, pred, desc, default) in schema.items():
            if key in got:
                lineno, value = got[key]
                try:
                    parsed = parser(value)
                except ValueError:
                    violations.append(
                        f"line {lineno}: key '{key}': cannot parse {value!r}"
                    )
                    continue
                if pred is not None and not pred(parsed):
                    violations.append(
                        f"line {lineno}: key '{key}' = {value} out of range (must be {desc})"
                    )
                    continue
                out[key] = parsed
            elif default is _REQUIRED:
                violations.append(f"section [{name}]: missing required key '{key}'")
            elif default is not None:
                out[key] = default
        resolved[name] = out

    _cross_validate(resolved, raw, violations)
    if violations:
        def _line_of(msg):
            if msg.startswith("line "):
                return int(msg.split(":", 1)[0][5:])
            return 10 ** 9
        raise ConfigError(sorted(violations, key=_line_of))
    _prune_to_kind(resolved)
    return ExperimentConfig(
        drift=resolved["drift"],
        grid=resolved["grid"],
        initial=resolved["initial"],
        run=resolved["run"],
        checks=resolved["checks"],
    )


def _prune_to_kind(resolved):
    """Drop defaulted keys that do not apply to the chosen kinds."""
    for name, table, extra in (
        ("drift", _DRIFT_KEYS, ("beta_scale",)),
        ("grid", _GRID_KEYS, ()),
        ("initial", _INITIAL_KEYS, ()),
    ):
        section = resolved[name]
        kind = section.get("kind")
        if kind not in table:
            continue
        keep = {"kind"} | table[kind] | set(extra)
        for key in list(section):
            if key not in keep:
                del section[key]


def _flag_off_kind(section, kind, allowed, raw, violations, extra=()):
    got = raw.get(section, {})
    for key, (lineno, _) in got.items():
        if key in ("kind",) + tuple(extra):
            continue
        if key not in allowed:
            violations.append(
                f"line {lineno}: key '{key}' does not apply to {section} kind '{kind}'"
            )


def _cross_validate(resolved, raw, violations):
    drift_kind = resolved["drift"].get("kind")
    if drift_kind in _DRIFT_KEYS:
        _flag_off_kind(
            "drift", drift_kind, _DRIFT_KEYS[drift_kind], raw, violations,
            extra=("beta_scale",),
        )
    grid_kind = resolved["grid"].get("kind")
    if grid_kind in _GRID_KEYS:
        _flag_off_kind("grid", grid_kind, _GRID_KEYS[grid_kind], raw, violations)
        for req in ("r_max",) if grid_kind == "radial" else ("l",):
            if req not in resolved["grid"]:
                violations.append(
                    f"section [grid]: missing required key '{req}' for {grid_kind}"
                )
    init_kind = resolved["initial"].get("kind")
    if init_kind in _INITIAL_KEYS:
        _flag_off_kind("initial", init_kind, _INITIAL_KEYS[init_kind], raw, violations)

    run = resolved["run"]
    if "t_end" in run and run["t_end"] <= run.get("s", 0.0):
        violations.append("section [run]: t_end must exceed s")
    m_list = run.get("m_list", ())
    if any(m < 1 for m in m_list) or any(
        b <= a for a, b in zip(m_list, m_list[1:])
    ):
        violations.append("section [run]: m_list must be increasing integers >= 1")
    for name in resolved["checks"].get("list", ()):
        if name not in CHECK_NAMES:
            violations.append(f"section [checks]: unknown check '{name}'")


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _format(value):
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def serialize_config(cfg):
    """Canonical text form; parse -> serialize is a byte-exact fixed point."""
    sections = {
        "drift": cfg.drift,
        "grid": cfg.grid,
        "initial": cfg.initial,
        "run": cfg.run,
        "checks": cfg.checks,
    }
    lines = []
    for name in _SECTION_ORDER:
        lines.append(f"[{name}]")
        values = sections[name]
        for key in _SCHEMA[name]:
            if key in values:
                lines.append(f"{key} = {_format(values[key])}")
        lines.append("")
    return "\n".join(lines)


def build_field(cfg):
    """Construct the drift field, applying ``beta_scale`` if not 1."""
    spec = dict(cfg.drift)
    scale = spec.pop("beta_scale", 1.0)
    kind = spec["kind"]
    spec = {k: v for k, v in spec.items() if k == "kind" or k in _DRIFT_KEYS[kind]}
    if kind != "split":
        spec["d"] = cfg.grid.get("d", 3)
    field = drifts.build_drift(spec)
    if scale != 1.0:
        field = drifts.ScaledDrift(math.sqrt(scale), field)
    return field


def build_grid_from(cfg):
    spec = dict(cfg.grid)
    if spec["kind"] == "tensor3":
        spec = {"kind": "tensor3", "L": spec["l"], "n": spec["n"]}
    return build_grid(spec)


def initial_values(grid, cfg):
    """Evaluate the configured initial bump on the grid nodes."""
    spec = cfg.initial
    kind = spec["kind"]
    if grid.kind == "radial":
        radius = grid.radii
    else:
        radius = np.linalg.norm(grid.points(), axis=1)
    if kind == "gaussian":
        return np.exp(-(((radius - spec["center"]) / spec["width"]) ** 2))
    if kind == "eigenmode":
        if grid.kind == "radial":
            arg = np.pi * radius / grid.r_max
            out = np.ones_like(arg)
            nz = arg > 0
            out[nz] = np.sin(arg[nz]) / arg[nz]
            return out
        pts = grid.points()
        return np.prod(np.cos(0.5 * np.pi * pts / grid.L), axis=1)
    # smoothed indicator of the ball, C^inf ramp of the given width
    edge = (radius - spec["radius"]) / spec["width"]
    return 0.5 * (1.0 - np.tanh(edge))
