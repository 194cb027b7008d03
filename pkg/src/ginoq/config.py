"""TOML experiment configs: parsing with strict key checks, and emission.

Grammar (states in files are labelled ``index_base .. index_base+S-1``)::

    [experiment]
    id = "nonindexable-10-7"
    family = "nonindexable"        # nonindexable | aoi | patrol | custom
    index_base = 1

    [instance]
    budget = 7
    initial_state = "uniform"      # or a state label every arm starts in

    [[class]]                      # explicit class
    name = "arm"
    count = 10
    states = 6
    rewards = [[1, 1, -10.0], [1, 0, -4.0], ...]   # (state, action, value)
    passive = [[...], ...]         # row-stochastic, one row per state
    active = [[...], ...]

    [[class]]                      # generated AoI class
    kind = "aoi"
    name = "linear"
    count = 5
    cost = "2x"                    # "2x" or "log"
    x_max = 20
    success = 1.0

    [[class]]                      # generated patrol site
    kind = "patrol"
    name = "busy"
    count = 5
    event = [[0.7, 0.3], [0.4, 0.6]]
    reward = 1.0
    penalty = 1.0

    [training]                     # GinoQConfig overrides
    [wibq]                         # WibqConfig overrides
    [evaluation]
    horizon = 20000
    seeds = 20

Missing rewards default to zero. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arms import ArmClass, ArmModel, InvalidModelError, build_instance

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FAMILIES = ("nonindexable", "aoi", "patrol", "custom")

_TOP_KEYS = {"experiment", "instance", "class", "training", "wibq", "evaluation"}
_EXPERIMENT_KEYS = {"id", "family", "index_base", "description"}
_INSTANCE_KEYS = {"budget", "initial_state"}
_EVAL_KEYS = {"horizon", "seeds", "train_horizon"}
_CLASS_KEYS = {
    "explicit": {"kind", "name", "count", "states", "rewards", "passive", "active", "assume_unichain"},
    "aoi": {"kind", "name", "count", "cost", "x_max", "success"},
    "patrol": {"kind", "name", "count", "event", "event_active", "reward", "penalty"},
}


class ConfigError(ValueError):
    """Config problem, with the source line when it can be located."""

    def __init__(self, message, source="<config>", line=None):
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")
        self.line = line
        self.source = source


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    id: str
    family: str
    instance: object
    training: dict = field(default_factory=dict)
    wibq: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    index_base: int = 0
    config_hash: str = ""
    source: str = "<config>"
    initial: object = None  # None (uniform) or per-class start distributions


def _find_line(text, key):
    pat = re.compile(rf"^\s*\[*\s*{re.escape(key)}\b")
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _check_keys(table, allowed, where, text, source):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}", source, _find_line(text, key))


def _require(table, key, where, text, source):
    if key not in table:
        raise ConfigError(f"missing required key {key!r} in {where}", source, _find_line(text, where))
    return table[key]


def _explicit_model(c, base, text, source):
    where = f"class {c.get('name', '?')!r}"
    S = int(_require(c, "states", where, text, source))
    if S < 1:
        raise ConfigError(f"{where}: states must be positive", source, _find_line(text, "states"))
    labels = tuple(range(base, base + S))
    reward = np.zeros((S, 2))
    for triple in c.get("rewards", []):
        if len(triple) != 3:
            raise ConfigError(f"{where}: reward entries are (state, action, value) triples",
                              source, _find_line(text, "rewards"))
        st, a, v = triple
        if st not in labels or a not in (0, 1):
            raise ConfigError(f"{where}: reward entry for unknown (state, action) ({st}, {a})",
                              source, _find_line(text, "rewards"))
        reward[labels.index(st), int(a)] = float(v)
    P = np.empty((2, S, S))
    for a, key in enumerate(("passive", "active")):
        rows = np.asarray(_require(c, key, where, text, source), dtype=float)
        if rows.shape != (S, S):
            raise ConfigError(f"{where}: {key} matrix has shape {rows.shape}, expected ({S}, {S})",
                              source, _find_line(text, key))
        P[a] = rows
    return ArmModel(reward, P, name=c["name"], labels=labels,
                    assume_unichain=bool(c.get("assume_unichain", False)))


def _class_from_table(c, base, text, source):
    from . import experiments

    kind = c.get("kind", "explicit")
    if kind not in _CLASS_KEYS:
        raise ConfigError(f"unknown class kind {kind!r}", source, _find_line(text, "kind"))
    _check_keys(c, _CLASS_KEYS[kind], f"class {c.get('name', '?')!r}", text, source)
    name = _require(c, "name", "class", text, source)
    count = int(_require(c, "count", f"class {name!r}", text, source))
    try:
        if kind == "explicit":
            model = _explicit_model(c, base, text, source)
        elif kind == "aoi":
            model = experiments.aoi_arm(
                cost=c.get("cost", "2x"), x_max=int(c.get("x_max", 20)),
                success=float(c.get("success", 1.0)), name=name)
        else:
            model = experiments.patrol_arm(
                event=_require(c, "event", f"class {name!r}", text, source),
                event_active=c.get("event_active"), reward=float(c.get("reward", 1.0)),
                penalty=float(c.get("penalty", 1.0)), name=name)
    except (InvalidModelError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"class {name!r}: {exc}", source, _find_line(text, "name")) from exc
    return ArmClass(model, count)


def parse_config(text, source="<config>"):
    """Parse config text into an ExperimentConfig with a validated instance."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"malformed TOML: {exc}", source, int(m.group(1)) if m else None) from exc

    _check_keys(data, _TOP_KEYS, "top level", text, source)
    exp = data.get("experiment", {})
    _check_keys(exp, _EXPERIMENT_KEYS, "[experiment]", text, source)
    family = exp.get("family", "custom")
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}", source, _find_line(text, "family"))
    base = int(exp.get("index_base", 0))

    inst = _require(data, "instance", "top level", text, source)
    _check_keys(inst, _INSTANCE_KEYS, "[instance]", text, source)
    budget = _require(inst, "budget", "instance", text, source)

    tables = data.get("class", [])
    if not tables:
        raise ConfigError("no [[class]] tables", source)
    classes = [_class_from_table(c, base, text, source) for c in tables]
    try:
        instance = build_instance(classes, budget)
    except InvalidModelError as exc:
        raise ConfigError(str(exc), source, _find_line(text, "budget")) from exc

    initial = _initial(inst.get("initial_state", "uniform"), instance, text, source)

    evaluation = data.get("evaluation", {})
    _check_keys(evaluation, _EVAL_KEYS, "[evaluation]", text, source)
    training = dict(data.get("training", {}))
    wibq = dict(data.get("wibq", {}))
    _check_section(training, "training", text, source)
    _check_section(wibq, "wibq", text, source)

    return ExperimentConfig(
        id=str(exp.get("id", Path(source).stem)),
        family=family,
        instance=instance,
        training=training,
        wibq=wibq,
        evaluation=dict(evaluation),
        index_base=base,
        config_hash=hashlib.sha256(text.encode()).hexdigest(),
        source=str(source),
        initial=initial,
    )


def _initial(value, instance, text, source):
    if value == "uniform":
        return None
    out = []
    for m in instance.models:
        if value not in m.labels:
            raise ConfigError(f"initial_state {value!r} is not a state of class {m.name!r}",
                              source, _find_line(text, "initial_state"))
        p = np.zeros(m.state_count)
        p[m.index_of(value)] = 1.0
        out.append(p)
    return out


def _check_section(section, name, text, source):
    from .baselines import WibqConfig
    from .learner import GinoQConfig

    cls = GinoQConfig if name == "training" else WibqConfig
    allowed = set(cls.__dataclass_fields__) | {"horizon"}
    _check_keys(section, allowed, f"[{name}]", text, source)


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), source=str(path))


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x == int(x) and abs(x) < 1e15:
            return f"{x:.1f}"
        return repr(x)
    if isinstance(x, str):
        return '"' + x.replace("\\", "\\\\").replace('"', '\\"') + '"'
    raise TypeError(f"cannot emit {type(x).__name__}")


def _matrix(rows):
    return "[\n" + "".join("    [" + ", ".join(_fmt(float(v)) for v in row) + "],\n" for row in rows) + "]"


def emit_config(instance, experiment_id="custom", family="custom", index_base=1,
                training=None, wibq=None, evaluation=None):
    """Write an instance as explicit-class TOML (the inverse of ``parse_config``)."""
    out = ["[experiment]", f"id = {_fmt(experiment_id)}", f"family = {_fmt(family)}",
           f"index_base = {index_base}", "", "[instance]", f"budget = {instance.budget}", ""]
    for c in instance.classes:
        m = c.model
        S = m.state_count
        out += ["[[class]]", f"name = {_fmt(m.name)}", f"count = {c.count}", f"states = {S}"]
        if m.assume_unichain:
            out.append("assume_unichain = true")
        triples = [f"[{s + index_base}, {a}, {_fmt(float(m.reward[s, a]))}]"
                   for s in range(S) for a in (1, 0) if m.reward[s, a] != 0]
        out.append("rewards = [" + ", ".join(triples) + "]")
        out.append(f"passive = {_matrix(m.transitions[0])}")
        out.append(f"active = {_matrix(m.transitions[1])}")
        out.append("")
    for name, section in (("training", training), ("wibq", wibq), ("evaluation", evaluation)):
        if section:
            out.append(f"[{name}]")
            out += [f"{k} = {_fmt(v)}" for k, v in section.items()]
            out.append("")
    return "\n".join(out)
