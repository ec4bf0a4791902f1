"""Synthetic corpus generation with planted, certified gadget chains.

Each generated program plants exactly one source-to-sink chain: a linear
backbone of stage classes joined through per-stage interfaces, so every call
site is polymorphic with ``fanout`` implementers of which one is on-chain.
The source gadget always checks an integer stream-version field, and every
non-source gadget carries ``decoy_branches`` guards that bail out of the
chain unless specific field values are supplied. Off-chain implementers
never contain a sink, so static analysis recovers exactly the planted chain,
while the guards make dynamic confirmation require actual search.

Satisfiable programs ship a witness object the interpreter certifies at
generation time; unsatisfiable ones carry a contradictory pair of integer
equality guards (one field required to equal two different constants), which
a bounded value sweep confirms.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Optional

from .interp import execute
from .model import ProgramModel, class_hierarchy, load_program, parse_type
from .proptree import ObjectValue
from .taint import DEFAULT_SINKS, DEFAULT_SOURCES, SourceSinkConfig, enumerate_chains

GUARD_KINDS = ("null-check", "int-equality", "string-equality", "array-length")

_INT_GUARD_POOL_SIZE = 3
_STRING_GUARD_WORDS = ("alpha", "bravo", "delta", "echo", "lima", "oscar", "tango", "zulu")
_ARRAY_GUARD_MIN = 2
_UNSAT_CONSTANTS = (5, 7)
_MAX_RETRIES = 8


class GenerationRetryExhausted(Exception):
    """The generated program failed its own certification repeatedly."""


@dataclass(frozen=True)
class CorpusSpec:
    """Shape of one synthetic program."""

    name: str
    chain_depth: int  # gadget methods on the chain, source included
    fanout: int  # implementations per interface (one on-chain)
    decoy_branches: int  # bail-out guards per non-source gadget
    guard_kinds: tuple[str, ...] = GUARD_KINDS
    unsatisfiable: bool = False
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.chain_depth < 2:
            raise ValueError("chain_depth must be >= 2")
        if self.fanout < 1:
            raise ValueError("fanout must be >= 1")
        if self.decoy_branches < 0:
            raise ValueError("decoy_branches must be >= 0")
        for k in self.guard_kinds:
            if k not in GUARD_KINDS:
                raise ValueError(f"unknown guard kind {k!r}")
        if not self.guard_kinds:
            raise ValueError("guard_kinds must be non-empty")


@dataclass(frozen=True)
class GroundTruth:
    """What the generator planted, for use as a test oracle."""

    name: str
    chain_methods: tuple[str, ...]  # "Class.method" per gadget, source first
    sink: str
    satisfiable: bool
    witness: Optional[ObjectValue]  # certified sink-reaching object, if satisfiable

    def to_document(self) -> dict:
        return {
            "name": self.name,
            "chain": list(self.chain_methods),
            "sink": self.sink,
            "satisfiable": self.satisfiable,
            "witness": self.witness.render() if self.witness is not None else None,
        }

    @staticmethod
    def from_document(doc: dict) -> "GroundTruth":
        witness = doc.get("witness")
        return GroundTruth(
            name=doc["name"],
            chain_methods=tuple(doc["chain"]),
            sink=doc["sink"],
            satisfiable=bool(doc["satisfiable"]),
            witness=parse_rendered(witness) if witness is not None else None,
        )


def parse_rendered(doc) -> ObjectValue:
    """Inverse of ObjectValue.render()."""
    if doc is None:
        return ObjectValue.null()
    if isinstance(doc, bool):
        return ObjectValue(kind="bool", value=doc)
    if isinstance(doc, int):
        return ObjectValue(kind="int", value=doc)
    if isinstance(doc, str):
        return ObjectValue(kind="string", value=doc)
    if "array" in doc:
        return ObjectValue(
            kind="array",
            elem_type=parse_type(doc["array"]),
            elements=tuple(parse_rendered(e) for e in doc["elements"]),
        )
    return ObjectValue(
        kind="object",
        cls=doc["class"],
        fields=tuple((k, parse_rendered(v)) for k, v in doc["fields"].items()),
    )


@dataclass
class _Guard:
    kind: str
    field_name: str
    field_type: str
    stmts: list[dict]
    witness_value: ObjectValue


class _ProgramBuilder:
    def __init__(self, spec: CorpusSpec, rng: random.Random) -> None:
        self.spec = spec
        self.rng = rng
        self.prefix = _camel(spec.name)
        self.int_pool = rng.sample(range(10, 100), _INT_GUARD_POOL_SIZE)
        self.word_pool = rng.sample(_STRING_GUARD_WORDS, _INT_GUARD_POOL_SIZE)
        self.classes: list[dict] = []
        self.interfaces: list[dict] = []
        self.uses_token = False

    def build(self) -> tuple[dict, list[str], ObjectValue]:
        spec = self.spec
        depth = spec.chain_depth
        chain_methods: list[str] = []
        stage_objs: list[tuple[str, list[tuple[str, ObjectValue]]]] = []

        for i in range(depth):
            cls_name = f"{self.prefix}Stage{i}"
            method = "readObject" if i == 0 else f"hop{i}"
            chain_methods.append(f"{cls_name}.{method}")
            is_sink_stage = i == depth - 1

            fields: list[dict] = []
            body: list[dict] = []
            witness_fields: list[tuple[str, ObjectValue]] = []

            if i == 0:
                # every source gadget checks a stream-version field before
                # forwarding the payload, so even guard-free programs require
                # a value only reachable through the program's own constants
                version = self.rng.choice(self.int_pool)
                fields.append({"name": "version", "type": "int", "transient": False})
                body.append({"op": "load", "dst": "ver", "obj": "this", "field": "version"})
                body.append({"op": "const", "dst": "vk", "value": version})
                body.append(
                    {"op": "branch", "lhs": "ver", "relop": "!=", "rhs": "vk", "target": "bail"}
                )
                witness_fields.append(("version", ObjectValue(kind="int", value=version)))
                fields.append({"name": "payload", "type": "string", "transient": False})
                body.append({"op": "load", "dst": "x", "obj": "this", "field": "payload"})
                witness_fields.append(("payload", ObjectValue(kind="string", value="go")))
            else:
                for j, guard in enumerate(self._guards(i)):
                    fields.append(
                        {"name": guard.field_name, "type": guard.field_type, "transient": False}
                    )
                    body.extend(guard.stmts)
                    witness_fields.append((guard.field_name, guard.witness_value))
                if spec.unsatisfiable and is_sink_stage:
                    fields.append({"name": "lock", "type": "int", "transient": False})
                    body.extend(_unsat_guard_stmts())
                    witness_fields.append(
                        ("lock", ObjectValue(kind="int", value=_UNSAT_CONSTANTS[0]))
                    )

            if is_sink_stage:
                fields.append({"name": "target", "type": "string", "transient": False})
                body.append({"op": "load", "dst": "m", "obj": "this", "field": "target"})
                body.append(
                    {
                        "op": "sinvoke",
                        "dst": "r",
                        "class": "reflect",
                        "method": "invoke",
                        "args": ["x", "m"],
                    }
                )
                witness_fields.append(("target", ObjectValue(kind="string", value="exec")))
            else:
                link = f"{self.prefix}Link{i}"
                fields.append({"name": "next", "type": link, "transient": False})
                body.append({"op": "load", "dst": "nx", "obj": "this", "field": "next"})
                body.append(
                    {
                        "op": "invoke",
                        "dst": "r",
                        "recv": "nx",
                        "method": f"hop{i + 1}",
                        "args": ["x"],
                    }
                )
                self.interfaces.append(
                    {
                        "name": link,
                        "methods": [
                            {"name": f"hop{i + 1}", "params": ["string"], "returns": "string"}
                        ],
                    }
                )
            body.append({"op": "return"} if i == 0 else {"op": "return", "src": "r"})
            if any(s.get("target") == "bail" for s in body):
                body.append({"op": "return", "label": "bail"})

            implements = [] if i == 0 else [f"{self.prefix}Link{i - 1}"]
            params = [] if i == 0 else [{"name": "x", "type": "string"}]
            self.classes.append(
                {
                    "name": cls_name,
                    "implements": implements,
                    "serializable": True,
                    "fields": fields,
                    "methods": [
                        {
                            "name": method,
                            "params": params,
                            "static": False,
                            **({} if i == 0 else {"returns": "string"}),
                            "body": body,
                        }
                    ],
                }
            )
            stage_objs.append((cls_name, witness_fields))

        self._add_offchain_implementers()
        if self.uses_token:
            self.classes.append(
                {
                    "name": f"{self.prefix}Token",
                    "implements": [],
                    "serializable": True,
                    "fields": [],
                    "methods": [],
                }
            )

        witness = None
        for cls_name, wf in reversed(stage_objs):
            if witness is not None:
                wf = wf + [("next", witness)]
            witness = ObjectValue(kind="object", cls=cls_name, fields=tuple(wf))

        document = {
            "interfaces": self.interfaces,
            "classes": self.classes,
            "intrinsics": ["array.length", "array.get", "reflect.invoke"],
        }
        return document, chain_methods, witness

    def _guards(self, stage: int) -> list[_Guard]:
        guards = []
        for j in range(self.spec.decoy_branches):
            kind = self.spec.guard_kinds[j % len(self.spec.guard_kinds)]
            guards.append(self._make_guard(kind, stage, j))
        return guards

    def _make_guard(self, kind: str, stage: int, j: int) -> _Guard:
        fname = f"g{stage}_{j}"
        load = {"op": "load", "dst": f"v{j}", "obj": "this", "field": fname}
        if kind == "null-check":
            self.uses_token = True
            return _Guard(
                kind=kind,
                field_name=fname,
                field_type=f"{self.prefix}Token",
                stmts=[
                    load,
                    {"op": "branch", "lhs": f"v{j}", "relop": "is-null", "target": "bail"},
                ],
                witness_value=ObjectValue(kind="object", cls=f"{self.prefix}Token"),
            )
        if kind == "int-equality":
            k = self.rng.choice(self.int_pool)
            return _Guard(
                kind=kind,
                field_name=fname,
                field_type="int",
                stmts=[
                    load,
                    {"op": "const", "dst": f"c{j}", "value": k},
                    {"op": "branch", "lhs": f"v{j}", "relop": "!=", "rhs": f"c{j}", "target": "bail"},
                ],
                witness_value=ObjectValue(kind="int", value=k),
            )
        if kind == "string-equality":
            w = self.rng.choice(self.word_pool)
            return _Guard(
                kind=kind,
                field_name=fname,
                field_type="string",
                stmts=[
                    load,
                    {"op": "const", "dst": f"c{j}", "value": w},
                    {"op": "branch", "lhs": f"v{j}", "relop": "!=", "rhs": f"c{j}", "target": "bail"},
                ],
                witness_value=ObjectValue(kind="string", value=w),
            )
        # array-length: array present and at least _ARRAY_GUARD_MIN long
        elems = tuple(ObjectValue.null() for _ in range(_ARRAY_GUARD_MIN))
        return _Guard(
            kind=kind,
            field_name=fname,
            field_type="string[]",
            stmts=[
                load,
                {"op": "branch", "lhs": f"v{j}", "relop": "is-null", "target": "bail"},
                {
                    "op": "sinvoke",
                    "dst": f"n{j}",
                    "class": "array",
                    "method": "length",
                    "args": [f"v{j}"],
                },
                {"op": "const", "dst": f"c{j}", "value": _ARRAY_GUARD_MIN},
                {"op": "branch", "lhs": f"n{j}", "relop": "<", "rhs": f"c{j}", "target": "bail"},
            ],
            witness_value=ObjectValue(
                kind="array", elem_type=parse_type("string"), elements=elems
            ),
        )

    def _add_offchain_implementers(self) -> None:
        for rec in list(self.interfaces):
            link = rec["name"]
            hop = rec["methods"][0]["name"]
            for d in range(self.spec.fanout - 1):
                self.classes.append(
                    {
                        "name": f"{link}Alt{d}",
                        "implements": [link],
                        "serializable": True,
                        "fields": [],
                        "methods": [
                            {
                                "name": hop,
                                "params": [{"name": "x", "type": "string"}],
                                "returns": "string",
                                "static": False,
                                "body": [
                                    {"op": "const", "dst": "z", "value": ""},
                                    {"op": "return", "src": "z"},
                                ],
                            }
                        ],
                    }
                )


def _unsat_guard_stmts() -> list[dict]:
    a, b = _UNSAT_CONSTANTS
    return [
        {"op": "load", "dst": "lk", "obj": "this", "field": "lock"},
        {"op": "const", "dst": "ca", "value": a},
        {"op": "branch", "lhs": "lk", "relop": "!=", "rhs": "ca", "target": "bail"},
        {"op": "const", "dst": "cb", "value": b},
        {"op": "branch", "lhs": "lk", "relop": "!=", "rhs": "cb", "target": "bail"},
    ]


def _camel(name: str) -> str:
    return "".join(p.capitalize() for p in name.replace("_", "-").split("-") if p)


def generate_corpus(spec: CorpusSpec) -> tuple[ProgramModel, GroundTruth, dict]:
    """Generate one program plus certified ground truth.

    Returns (model, truth, document). Satisfiable specs are certified by
    executing the witness; unsatisfiable ones by sweeping the contradictory
    guard's whole small value domain. Raises GenerationRetryExhausted when
    certification keeps failing.
    """
    last_error: Optional[str] = None
    for attempt in range(_MAX_RETRIES):
        rng = random.Random(f"{spec.rng_seed}/{attempt}")
        document, chain_methods, witness = _ProgramBuilder(spec, rng).build()
        program = load_program(document)
        err = _certify(program, spec, chain_methods, witness)
        if err is None:
            truth = GroundTruth(
                name=spec.name,
                chain_methods=tuple(chain_methods),
                sink="reflect.invoke",
                satisfiable=not spec.unsatisfiable,
                witness=None if spec.unsatisfiable else witness,
            )
            return program, truth, document
        last_error = err
    raise GenerationRetryExhausted(f"{spec.name}: {last_error}")


def _certify(
    program: ProgramModel,
    spec: CorpusSpec,
    chain_methods: list[str],
    witness: ObjectValue,
) -> Optional[str]:
    hierarchy = class_hierarchy(program)
    config = SourceSinkConfig(sources=DEFAULT_SOURCES, sinks=DEFAULT_SINKS)
    chains = enumerate_chains(program, hierarchy, config, max(15, spec.chain_depth + 1))
    planted = [
        c for c in chains if [f"{k[0]}.{k[1]}" for k in c.methods] == chain_methods
    ]
    if not planted:
        return "planted chain not found by analysis"
    chain = planted[0]
    if spec.unsatisfiable:
        # sweep the whole guard domain of the contradictory lock field
        for v in range(-1, 130):
            probe = _with_field(witness, "lock", ObjectValue(kind="int", value=v))
            if execute(program, chain, probe).sink_hit:
                return f"unsatisfiable program reached sink with lock={v}"
        return None
    feedback = execute(program, chain, witness)
    if not feedback.sink_hit:
        return f"witness did not reach sink (fault={feedback.fault})"
    return None


def _with_field(obj: ObjectValue, name: str, value: ObjectValue) -> ObjectValue:
    """Copy with the named field replaced wherever it occurs in the object."""
    if obj.kind != "object":
        return obj
    fields = tuple(
        (k, value if k == name else _with_field(v, name, value)) for k, v in obj.fields
    )
    return ObjectValue(kind="object", cls=obj.cls, fields=fields)


# ---------------------------------------------------------------------------
# the bundled 12-program release corpus
# ---------------------------------------------------------------------------

_TIERS = {
    "easy": (3, 1, 0),
    "medium": (5, 2, 2),
    "hard": (7, 3, 4),
}
_FAMILIES = {
    "nullguard": ("null-check",),
    "inteq": ("int-equality",),
    "streq": ("string-equality",),
    "arrlen": ("array-length",),
}
# the two certified-unsatisfiable entries, both in the hard tier
_UNSAT_NAMES = frozenset({"nullguard-hard", "arrlen-hard"})


def release_specs() -> tuple[CorpusSpec, ...]:
    """The pinned 12-program corpus: 4 guard families x 3 difficulty tiers."""
    specs = []
    for fi, (family, kinds) in enumerate(sorted(_FAMILIES.items())):
        for ti, (tier, (depth, fanout, decoys)) in enumerate(_TIERS.items()):
            name = f"{family}-{tier}"
            specs.append(
                CorpusSpec(
                    name=name,
                    chain_depth=depth,
                    fanout=fanout,
                    decoy_branches=decoys,
                    guard_kinds=kinds,
                    unsatisfiable=name in _UNSAT_NAMES,
                    rng_seed=1000 * fi + ti,
                )
            )
    return tuple(specs)


def write_corpus(specs, out_dir) -> list[str]:
    """Generate each spec into <out>/<name>.json + <name>.truth.json."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for spec in specs:
        _, truth, document = generate_corpus(spec)
        (out / f"{spec.name}.json").write_text(json.dumps(document, indent=2) + "\n")
        (out / f"{spec.name}.truth.json").write_text(
            json.dumps(truth.to_document(), indent=2) + "\n"
        )
        names.append(spec.name)
    return names
