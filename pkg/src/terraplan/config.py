"""Plain-text run configuration: namespaced key=value with override support.

A config file holds lines like

    task.kind = hill_circle
    constraints.rr_max = 2.7
    mppi.rng_seed = 7

Values land on the matching dataclass fields; unknown sections or keys are
errors. Loading starts from the task preset named by task.kind, so a file
(or a --set override) only needs the values that differ from it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import replace

from .sim import TaskSpec, task_preset


class ConfigError(Exception):
    pass


# section name -> TaskSpec attribute holding that dataclass
SECTIONS = {
    "terrain": "terrain",
    "mppi": "mppi",
    "constraints": "constraints",
    "vehicle": "vehicle",
    "gains": "gains",
    "plant": "plant",
    "limits": "limits",
}

TASK_FIELDS = ("kind", "duration", "v_ref", "v0", "radius", "direction",
               "center_x", "center_y", "start_offset", "waypoints",
               "w_speed", "w_track", "w_heading",
               "baseline_roll_penalty", "roll_limit_deg")


def _parse_value(text: str, example):
    text = text.strip()
    if isinstance(example, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if isinstance(example, int) and not isinstance(example, bool):
        return int(text)
    if isinstance(example, float):
        return float(text)
    if isinstance(example, tuple):
        if not text:
            return ()
        return tuple(float(v) for v in text.replace(";", ",").split(","))
    if example is None or isinstance(example, int):
        # optional ints (mppi.workers): 0 means unset
        n = int(text)
        return None if n == 0 else n
    return text


def parse_pairs(lines) -> list[tuple[str, str, str]]:
    """Parse 'section.key = value' lines into (section, key, value) triples."""
    out = []
    for ln, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if "." not in key:
            raise ConfigError(f"line {ln}: key must be section.name, got {key!r}")
        section, name = key.split(".", 1)
        out.append((section.strip(), name.strip(), value.strip()))
    return out


def apply_pairs(spec: TaskSpec, pairs) -> TaskSpec:
    """Return a copy of spec with every (section, key, value) applied."""
    task_updates: dict = {}
    section_updates: dict[str, dict] = {}
    for section, key, value in pairs:
        if section == "task":
            if key not in TASK_FIELDS:
                raise ConfigError(f"unknown key task.{key}")
            task_updates[key] = _parse_value(value, getattr(spec, key))
        elif section in SECTIONS:
            obj = getattr(spec, SECTIONS[section])
            names = {f.name for f in dataclasses.fields(obj)}
            if key not in names:
                raise ConfigError(f"unknown key {section}.{key}")
            section_updates.setdefault(section, {})[key] = \
                _parse_value(value, getattr(obj, key))
        else:
            raise ConfigError(f"unknown section {section!r}")
    for section, updates in section_updates.items():
        attr = SECTIONS[section]
        task_updates[attr] = replace(getattr(spec, attr), **updates)
    kind = task_updates.pop("kind", None)
    if kind is not None and kind.replace("-", "_") != spec.kind:
        raise ConfigError("task.kind cannot be changed by overrides; "
                          "restart from the matching preset")
    return replace(spec, **task_updates)


def load_task(path: str | None = None, overrides=(), task: str | None = None,
              seed: int | None = None) -> TaskSpec:
    """Build a TaskSpec from preset + optional config file + overrides.

    Priority (lowest to highest): preset defaults, config file, --set
    overrides, explicit seed.
    """
    file_pairs: list[tuple[str, str, str]] = []
    if path is not None:
        with open(path) as f:
            file_pairs = parse_pairs(f)
    kind = task
    if kind is None:
        for section, key, value in file_pairs:
            if section == "task" and key == "kind":
                kind = value
    if kind is None:
        kind = "flat_circle"
    spec = task_preset(kind, seed=seed if seed is not None else 0)
    pairs = [p for p in file_pairs if not (p[0] == "task" and p[1] == "kind")]
    pairs += parse_pairs(overrides) if overrides and isinstance(overrides[0], str) else list(overrides)
    spec = apply_pairs(spec, pairs)
    if seed is not None:
        spec = replace(spec, mppi=replace(spec.mppi, rng_seed=seed))
    return spec


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, tuple):
        return ",".join(f"{x:.12g}" for x in v)
    if v is None:
        return "0"
    return str(v)


def dump_task(spec: TaskSpec) -> str:
    """Render every effective value; the output reloads to an equal spec."""
    lines = [f"task.kind = {spec.kind}"]
    for key in TASK_FIELDS:
        if key == "kind":
            continue
        lines.append(f"task.{key} = {_format_value(getattr(spec, key))}")
    for section in sorted(SECTIONS):
        obj = getattr(spec, SECTIONS[section])
        for f in dataclasses.fields(obj):
            if not f.init:
                continue
            lines.append(f"{section}.{f.name} = {_format_value(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"
