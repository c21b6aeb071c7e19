"""Run reports: a JSON document and an equivalent flat ``key=value`` text.

Text form: one ``key=value`` line per leaf, nested keys joined with ``.``,
list positions written as numbers, each value JSON-encoded. Keys are
identifiers, so they never contain ``.`` or ``=``. See
``docs/report_schema.md`` for the fields.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .loopnest import buffer_dims
from .paths import intermediate_names

SCHEMA_VERSION = 1
COUNTING_CONVENTION = (
    "2 operations per pairwise multiply-accumulate; the unfactorized oracle counts "
    "n_factors operations per innermost body"
)


@dataclass
class RunReport:
    command: str
    kernel: str
    dims: dict
    cost_model: str | None = None
    path: dict = field(default_factory=dict)
    orders: list = field(default_factory=list)
    cost: object = None
    costs: list = field(default_factory=list)
    buffers: list = field(default_factory=list)
    hooks: list = field(default_factory=list)
    search: dict = field(default_factory=dict)
    flops_estimate: int | None = None
    stats: dict = field(default_factory=dict)
    verification: dict = field(default_factory=dict)
    bench: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION
    counting_convention: str = COUNTING_CONVENTION

    def to_dict(self):
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_text(self):
        lines = []
        _flatten(self.to_dict(), "", lines)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        return cls.from_dict(_unflatten(text))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):
        return x.item()
    return x


def _flatten(x, prefix, lines):
    if isinstance(x, dict) and x:
        for k in sorted(x):
            _flatten(x[k], f"{prefix}.{k}" if prefix else k, lines)
    elif isinstance(x, list) and x and any(isinstance(v, (dict, list)) for v in x):
        lines.append(f"{prefix}.#={len(x)}")
        for k, v in enumerate(x):
            _flatten(v, f"{prefix}.{k}", lines)
    else:
        lines.append(f"{prefix}={json.dumps(x, sort_keys=True)}")


def _unflatten(text):
    root = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, raw = line.partition("=")
        parts = key.split(".")
        if parts[-1] == "#":
            _set(root, parts[:-1], [None] * int(raw))
            continue
        _set(root, parts, json.loads(raw))
    return root


def _set(root, parts, value):
    node = root
    for k, part in enumerate(parts[:-1]):
        nxt = parts[k + 1]
        if isinstance(node, list):
            i = int(part)
            if node[i] is None:
                node[i] = {}
            node = node[i]
        else:
            node = node.setdefault(part, {} if not nxt.isdigit() else [])
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = value
    else:
        node[last] = value


def path_expression(path):
    """Parenthesized expression of ``path``, e.g. ``(T*V)*U``."""
    expr = {k: t.name for k, t in enumerate(path.spec.inputs)}
    for t in path.terms:
        expr[t.out] = f"({expr[t.lhs]}*{expr[t.rhs]})"
    text = expr[path.terms[-1].out]
    return text[1:-1]


def path_dict(path):
    return {
        "expression": path_expression(path),
        "terms": path.describe(),
        "pairs": [[t.lhs, t.rhs] for t in path.terms],
        "csf_order": list(path.csf_order),
    }


def buffer_table(forest):
    path = forest.path
    names = intermediate_names(path)
    sizes = buffer_dims(forest)
    rows = []
    for (p, c), idx in sorted(forest.buffers.items()):
        order, n = sizes[(p, c)]
        rows.append(
            {
                "name": names[p],
                "producer": p,
                "consumer": c,
                "indices": list(idx),
                "dims": [path.spec.dim(i) for i in idx],
                "order": order,
                "bytes": 8 * n,
            }
        )
    return rows
