"""Index tables and the top-N index policy."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA = "ginoq.index_table/1"


@dataclass(frozen=True, eq=False)
class IndexTable:
    """State -> index value, one row per class (``mode="class"``) or per arm."""

    values: tuple
    names: tuple
    labels: tuple
    mode: str = "class"
    kind: str = "gain"
    lam: float = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = []
        for v in self.values:
            v = np.array(v, dtype=float)
            v.setflags(write=False)
            vals.append(v)
        object.__setattr__(self, "values", tuple(vals))
        if self.mode not in ("class", "arm"):
            raise ValueError(f"mode must be 'class' or 'arm', got {self.mode!r}")

    @classmethod
    def for_instance(cls, instance, values, mode="class", **kw):
        if mode == "class":
            names = tuple(c.name for c in instance.classes)
            labels = tuple(m.labels for m in instance.models)
        else:
            names = tuple(str(i) for i in range(instance.M))
            labels = tuple(instance.model_of(i).labels for i in range(instance.M))
        return cls(tuple(values), names, labels, mode=mode, **kw)

    def value(self, name, label):
        i = self.names.index(name)
        return float(self.values[i][self.labels[i].index(label)])

    def matrix(self, instance):
        """(rows, S_max) lookup array plus the row used by each arm; NaN pads."""
        S = instance.max_states
        if self.mode == "class":
            expected = tuple(c.name for c in instance.classes)
            row_of_arm = np.asarray(instance.arm_class)
            models = instance.models
        else:
            expected = tuple(str(i) for i in range(instance.M))
            row_of_arm = np.arange(instance.M)
            models = [instance.model_of(i) for i in range(instance.M)]
        if self.names != expected:
            raise KeyError(f"index table rows {self.names} do not match instance {expected}")
        table = np.full((len(models), S), np.nan)
        for i, m in enumerate(models):
            if self.labels[i] != m.labels:
                raise KeyError(f"index table states for {self.names[i]!r} do not match the model")
            table[i, : m.state_count] = self.values[i]
        return table, row_of_arm

    def transformed(self, fn):
        return IndexTable(tuple(fn(v) for v in self.values), self.names, self.labels,
                          self.mode, self.kind, self.lam, dict(self.meta))

    def to_dict(self):
        return {
            "schema": SCHEMA,
            "kind": self.kind,
            "mode": self.mode,
            "lambda": self.lam,
            "meta": self.meta,
            "tables": {
                name: {str(l): (None if np.isnan(v) else float(v)) for l, v in zip(lbls, vals)}
                for name, lbls, vals in zip(self.names, self.labels, self.values)
            },
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported index table schema {d.get('schema')!r}")
        names, labels, values = [], [], []
        for name, entries in d["tables"].items():
            names.append(name)
            labels.append(tuple(int(k) if k.lstrip("-").isdigit() else k for k in entries))
            values.append([np.nan if v is None else v for v in entries.values()])
        return cls(tuple(values), tuple(names), tuple(labels), d.get("mode", "class"),
                   d.get("kind", "gain"), d.get("lambda"), d.get("meta", {}))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def top_n(values, N):
    """Indices of the N largest values, ties to the lowest position."""
    order = np.lexsort((np.arange(len(values)), -np.asarray(values)))
    return order[:N]


class IndexPolicy:
    """Activate the N arms with the largest current index values."""

    tie_break = "lowest-arm-id"

    def __init__(self, table, instance):
        self.table = table
        self.instance = instance
        self.lookup, self.row_of_arm = table.matrix(instance)

    def indices(self, states):
        states = np.asarray(states)
        vals = self.lookup[self.row_of_arm, states]
        bad = np.flatnonzero(np.isnan(vals))
        if bad.size:
            arm = int(bad[0])
            row = self.row_of_arm[arm]
            label = self.table.labels[row][states[arm]]
            raise KeyError(f"no index for ({self.table.names[row]!r}, state {label!r})")
        return vals

    def select(self, states, N=None):
        N = self.instance.budget if N is None else N
        action = np.zeros(len(states), dtype=np.int64)
        action[top_n(self.indices(states), N)] = 1
        return action

    __call__ = select


def select(policy, states, N=None):
    return policy.select(states, N)
