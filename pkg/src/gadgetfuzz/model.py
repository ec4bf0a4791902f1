"""Mini object-oriented IR: types, loader/validator, and class-hierarchy queries.

The IR is three-address code with unstructured control flow (labels + branches).
Basic blocks are derived from labels and branch targets, never declared.
Programs are loaded from a JSON document (see ``load_program``) and are
immutable after validation, so a single ``ProgramModel``/``Hierarchy`` pair can
be shared across concurrent fuzzing campaigns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

PRIMITIVE_TYPES = ("int", "bool", "string")

STMT_OPS = (
    "const",
    "assign",
    "load",
    "store",
    "new",
    "invoke",
    "sinvoke",
    "branch",
    "goto",
    "return",
)

RELOPS = ("==", "!=", "<", "<=", "is-null", "not-null")

# Intrinsics the interpreter evaluates inline instead of treating as terminal
# sink markers.
COMPUTED_INTRINSICS = ("array.length", "array.get")

DEFAULT_INTRINSICS = (
    "reflect.invoke",
    "runtime.exec",
    "array.length",
    "array.get",
)


class ModelError(Exception):
    """Base class for model loading/validation failures."""


class UnresolvedName(ModelError):
    """A superclass, interface, type, label, or variable does not resolve."""


class DuplicateDefinition(ModelError):
    """A class name or (class, method) pair is defined twice."""


class InheritanceCycle(ModelError):
    """The declared inheritance relation contains a cycle."""


@dataclass(frozen=True)
class TypeRef:
    """A declared type: primitive, class/interface name, or array thereof.

    ``dims`` counts array dimensions; ``TypeRef("string", 1)`` is ``string[]``.
    """

    name: str
    dims: int = 0

    @property
    def is_primitive(self) -> bool:
        return self.dims == 0 and self.name in PRIMITIVE_TYPES

    @property
    def is_array(self) -> bool:
        return self.dims > 0

    def element(self) -> "TypeRef":
        if not self.is_array:
            raise ValueError(f"{self} is not an array type")
        return TypeRef(self.name, self.dims - 1)

    def __str__(self) -> str:
        return self.name + "[]" * self.dims


def parse_type(text: str) -> TypeRef:
    dims = 0
    while text.endswith("[]"):
        text = text[:-2]
        dims += 1
    return TypeRef(text, dims)


@dataclass(frozen=True)
class Stmt:
    """One three-address statement. ``op`` selects which fields are meaningful.

    const:   dst, value
    assign:  dst, src
    load:    dst, obj, fieldname        (dst = obj.fieldname)
    store:   obj, fieldname, src        (obj.fieldname = src)
    new:     dst, cls
    invoke:  dst?, obj (receiver), method, args
    sinvoke: dst?, cls (class or intrinsic namespace), method, args
    branch:  lhs, relop, rhs?, target
    goto:    target
    return:  src?
    """

    op: str
    label: Optional[str] = None
    dst: Optional[str] = None
    src: Optional[str] = None
    obj: Optional[str] = None
    fieldname: Optional[str] = None
    value: Any = None
    cls: Optional[str] = None
    method: Optional[str] = None
    args: tuple[str, ...] = ()
    lhs: Optional[str] = None
    relop: Optional[str] = None
    rhs: Optional[str] = None
    target: Optional[str] = None

    @property
    def is_call(self) -> bool:
        return self.op in ("invoke", "sinvoke")

    @property
    def is_terminator(self) -> bool:
        return self.op in ("branch", "goto", "return")


@dataclass(frozen=True)
class Param:
    name: str
    type: TypeRef


@dataclass(frozen=True)
class MethodDef:
    name: str
    params: tuple[Param, ...]
    returns: Optional[TypeRef]
    is_static: bool
    body: tuple[Stmt, ...]

    @property
    def entry_block(self) -> int:
        return 0


@dataclass(frozen=True)
class FieldDef:
    name: str
    declared_type: TypeRef
    transient_flag: bool = False


@dataclass(frozen=True)
class ClassDef:
    name: str
    superclass: Optional[str]
    implements: tuple[str, ...]
    serializable: bool
    fields: tuple[FieldDef, ...]
    methods: tuple[MethodDef, ...]


@dataclass(frozen=True)
class MethodSig:
    name: str
    params: tuple[TypeRef, ...]
    returns: Optional[TypeRef]


@dataclass(frozen=True)
class InterfaceDef:
    name: str
    extends: tuple[str, ...]
    methods: tuple[MethodSig, ...]


# A method is identified by (owning class name, method name). Overloading by
# parameter types is not supported; the loader rejects duplicate names.
MethodKey = tuple[str, str]


@dataclass
class BlockInfo:
    """Derived basic-block partition of one method body."""

    starts: tuple[int, ...]  # statement index of each block leader
    stmt_block: tuple[int, ...]  # statement index -> block index
    label_index: dict[str, int]  # label -> statement index

    @property
    def num_blocks(self) -> int:
        return len(self.starts)

    def block_range(self, b: int) -> tuple[int, int]:
        lo = self.starts[b]
        hi = self.starts[b + 1] if b + 1 < len(self.starts) else len(self.stmt_block)
        return lo, hi


def compute_blocks(body: tuple[Stmt, ...]) -> BlockInfo:
    label_index = {s.label: i for i, s in enumerate(body) if s.label is not None}
    leaders = {0}
    for i, s in enumerate(body):
        if s.label is not None:
            leaders.add(i)
        if s.is_terminator and i + 1 < len(body):
            leaders.add(i + 1)
    starts = tuple(sorted(leaders & set(range(len(body))))) if body else ()
    stmt_block = []
    b = -1
    for i in range(len(body)):
        if b + 1 < len(starts) and starts[b + 1] == i:
            b += 1
        stmt_block.append(b)
    return BlockInfo(starts=starts, stmt_block=tuple(stmt_block), label_index=label_index)


@dataclass
class ProgramModel:
    """A validated program: classes, interfaces, and recognized intrinsics.

    Immutable after ``load_program``; lookup tables are precomputed.
    """

    classes: tuple[ClassDef, ...]
    interfaces: tuple[InterfaceDef, ...]
    intrinsics: frozenset[str]
    class_by_name: dict[str, ClassDef] = field(default_factory=dict)
    interface_by_name: dict[str, InterfaceDef] = field(default_factory=dict)
    _blocks: dict[MethodKey, BlockInfo] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.class_by_name = {c.name: c for c in self.classes}
        self.interface_by_name = {i.name: i for i in self.interfaces}
        for c in self.classes:
            for m in c.methods:
                self._blocks[(c.name, m.name)] = compute_blocks(m.body)

    def method(self, key: MethodKey) -> MethodDef:
        cls = self.class_by_name[key[0]]
        for m in cls.methods:
            if m.name == key[1]:
                return m
        raise KeyError(key)

    def has_method(self, key: MethodKey) -> bool:
        cls = self.class_by_name.get(key[0])
        return cls is not None and any(m.name == key[1] for m in cls.methods)

    def blocks(self, key: MethodKey) -> BlockInfo:
        return self._blocks[key]

    def resolve_method(self, class_name: str, method_name: str) -> Optional[MethodKey]:
        """Dynamic-dispatch lookup: walk up the superclass chain."""
        cur: Optional[str] = class_name
        while cur is not None:
            cls = self.class_by_name.get(cur)
            if cls is None:
                return None
            if any(m.name == method_name for m in cls.methods):
                return (cur, method_name)
            cur = cls.superclass
        return None

    def all_fields(self, class_name: str) -> tuple[FieldDef, ...]:
        """Own plus inherited fields, with shadowing resolved toward the subclass.

        Declaration order: inherited (outermost superclass first), then own.
        """
        chain = []
        cur: Optional[str] = class_name
        while cur is not None:
            chain.append(self.class_by_name[cur])
            cur = self.class_by_name[cur].superclass
        seen: dict[str, FieldDef] = {}
        for cls in chain:  # subclass first, so its fields win under shadowing
            for f in cls.fields:
                if f.name not in seen:
                    seen[f.name] = f
        ordered: list[FieldDef] = []
        for cls in reversed(chain):
            for f in cls.fields:
                if seen[f.name] is f:
                    ordered.append(f)
        return tuple(ordered)

    def is_type_name(self, name: str) -> bool:
        return name in self.class_by_name or name in self.interface_by_name

    def methods_in_order(self) -> Iterable[tuple[ClassDef, MethodDef]]:
        for c in self.classes:
            for m in c.methods:
                yield c, m


@dataclass
class Hierarchy:
    """Transitive subtype and overrider relations, in declaration order."""

    program: ProgramModel
    subclasses: dict[str, tuple[str, ...]]  # class -> transitive subclasses (excl. self)
    implementers: dict[str, tuple[str, ...]]  # interface -> transitive implementing classes

    def subtypes(self, type_name: str) -> tuple[str, ...]:
        """Concrete classes that are, extend, or implement ``type_name``."""
        if type_name in self.program.interface_by_name:
            return self.implementers.get(type_name, ())
        if type_name in self.program.class_by_name:
            return (type_name,) + self.subclasses.get(type_name, ())
        return ()

    def is_subtype(self, class_name: str, type_name: str) -> bool:
        return class_name in self.subtypes(type_name)

    def overriders(self, type_name: str, method_name: str) -> tuple[MethodKey, ...]:
        """CHA candidate set: the resolved method of every subtype defining it."""
        seen: list[MethodKey] = []
        for cls in self.subtypes(type_name):
            key = self.program.resolve_method(cls, method_name)
            if key is not None and key not in seen:
                seen.append(key)
        return tuple(seen)


def class_hierarchy(program: ProgramModel) -> Hierarchy:
    # direct interface set per class, including superinterfaces of interfaces
    iface_super: dict[str, set[str]] = {}

    def iface_closure(name: str) -> set[str]:
        if name in iface_super:
            return iface_super[name]
        out = {name}
        for parent in program.interface_by_name[name].extends:
            out |= iface_closure(parent)
        iface_super[name] = out
        return out

    direct_ifaces: dict[str, set[str]] = {}
    for c in program.classes:
        out: set[str] = set()
        for i in c.implements:
            out |= iface_closure(i)
        direct_ifaces[c.name] = out

    order = {c.name: i for i, c in enumerate(program.classes)}

    subclasses: dict[str, list[str]] = {c.name: [] for c in program.classes}
    for c in program.classes:
        cur = c.superclass
        while cur is not None:
            subclasses[cur].append(c.name)
            cur = program.class_by_name[cur].superclass

    implementers: dict[str, list[str]] = {i.name: [] for i in program.interfaces}
    for c in program.classes:
        ifaces: set[str] = set()
        cur: Optional[str] = c.name
        while cur is not None:
            ifaces |= direct_ifaces[cur]
            cur = program.class_by_name[cur].superclass
        for i in ifaces:
            implementers[i].append(c.name)

    return Hierarchy(
        program=program,
        subclasses={k: tuple(sorted(v, key=order.__getitem__)) for k, v in subclasses.items()},
        implementers={k: tuple(sorted(v, key=order.__getitem__)) for k, v in implementers.items()},
    )


# ---------------------------------------------------------------------------
# loading / validation
# ---------------------------------------------------------------------------


def _parse_stmt(rec: dict, where: str) -> Stmt:
    op = rec.get("op")
    if op not in STMT_OPS:
        raise UnresolvedName(f"{where}: unknown statement op {op!r}")
    kw: dict[str, Any] = {"op": op, "label": rec.get("label")}
    if op == "const":
        kw["dst"] = rec["dst"]
        kw["value"] = rec.get("value")
    elif op == "assign":
        kw["dst"] = rec["dst"]
        kw["src"] = rec["src"]
    elif op == "load":
        kw["dst"] = rec["dst"]
        kw["obj"] = rec["obj"]
        kw["fieldname"] = rec["field"]
    elif op == "store":
        kw["obj"] = rec["obj"]
        kw["fieldname"] = rec["field"]
        kw["src"] = rec["src"]
    elif op == "new":
        kw["dst"] = rec["dst"]
        kw["cls"] = rec["class"]
    elif op == "invoke":
        kw["dst"] = rec.get("dst")
        kw["obj"] = rec["recv"]
        kw["method"] = rec["method"]
        kw["args"] = tuple(rec.get("args", ()))
    elif op == "sinvoke":
        kw["dst"] = rec.get("dst")
        kw["cls"] = rec["class"]
        kw["method"] = rec["method"]
        kw["args"] = tuple(rec.get("args", ()))
    elif op == "branch":
        relop = rec["relop"]
        if relop not in RELOPS:
            raise UnresolvedName(f"{where}: unknown relop {relop!r}")
        kw["lhs"] = rec["lhs"]
        kw["relop"] = relop
        kw["rhs"] = rec.get("rhs")
        kw["target"] = rec["target"]
        if relop not in ("is-null", "not-null") and kw["rhs"] is None:
            raise UnresolvedName(f"{where}: relop {relop!r} needs rhs")
    elif op == "goto":
        kw["target"] = rec["target"]
    elif op == "return":
        kw["src"] = rec.get("src")
    return Stmt(**kw)


def _stmt_uses(s: Stmt) -> tuple[str, ...]:
    uses: list[str] = []
    if s.op == "assign":
        uses.append(s.src)  # type: ignore[arg-type]
    elif s.op == "load":
        uses.append(s.obj)  # type: ignore[arg-type]
    elif s.op == "store":
        uses.extend([s.obj, s.src])  # type: ignore[list-item]
    elif s.op in ("invoke", "sinvoke"):
        if s.op == "invoke":
            uses.append(s.obj)  # type: ignore[arg-type]
        uses.extend(s.args)
    elif s.op == "branch":
        uses.append(s.lhs)  # type: ignore[arg-type]
        if s.rhs is not None:
            uses.append(s.rhs)
    elif s.op == "return" and s.src is not None:
        uses.append(s.src)
    return tuple(uses)


def load_program(document: str | dict) -> ProgramModel:
    """Parse and validate a program document (JSON text or parsed dict).

    Raises UnresolvedName, DuplicateDefinition, or InheritanceCycle on
    malformed input; a returned model satisfies all IR invariants.
    """
    doc = json.loads(document) if isinstance(document, str) else document

    interfaces = []
    for irec in doc.get("interfaces", ()):
        methods = tuple(
            MethodSig(
                name=m["name"],
                params=tuple(parse_type(t) for t in m.get("params", ())),
                returns=parse_type(m["returns"]) if m.get("returns") else None,
            )
            for m in irec.get("methods", ())
        )
        interfaces.append(
            InterfaceDef(
                name=irec["name"],
                extends=tuple(irec.get("extends", ())),
                methods=methods,
            )
        )

    classes = []
    for crec in doc.get("classes", ()):
        fields = tuple(
            FieldDef(
                name=f["name"],
                declared_type=parse_type(f["type"]),
                transient_flag=bool(f.get("transient", False)),
            )
            for f in crec.get("fields", ())
        )
        methods = []
        for mrec in crec.get("methods", ()):
            where = f"{crec['name']}.{mrec['name']}"
            params = tuple(
                Param(name=p["name"], type=parse_type(p["type"]))
                for p in mrec.get("params", ())
            )
            body = tuple(_parse_stmt(s, where) for s in mrec.get("body", ()))
            methods.append(
                MethodDef(
                    name=mrec["name"],
                    params=params,
                    returns=parse_type(mrec["returns"]) if mrec.get("returns") else None,
                    is_static=bool(mrec.get("static", False)),
                    body=body,
                )
            )
        classes.append(
            ClassDef(
                name=crec["name"],
                superclass=crec.get("extends"),
                implements=tuple(crec.get("implements", ())),
                serializable=bool(crec.get("serializable", False)),
                fields=fields,
                methods=tuple(methods),
            )
        )

    intrinsics = frozenset(doc.get("intrinsics", DEFAULT_INTRINSICS))
    model = ProgramModel(
        classes=tuple(classes), interfaces=tuple(interfaces), intrinsics=intrinsics
    )
    _validate(model)
    return model


def _validate(model: ProgramModel) -> None:
    names: set[str] = set()
    for d in list(model.classes) + list(model.interfaces):
        if d.name in names:
            raise DuplicateDefinition(f"duplicate definition: {d.name}")
        names.add(d.name)

    def check_type(t: TypeRef, where: str) -> None:
        if t.name in PRIMITIVE_TYPES:
            return
        if not model.is_type_name(t.name):
            raise UnresolvedName(f"{where}: unknown type {t}")

    for iface in model.interfaces:
        for parent in iface.extends:
            if parent not in model.interface_by_name:
                raise UnresolvedName(f"interface {iface.name} extends unknown {parent}")
        seen_m: set[str] = set()
        for m in iface.methods:
            if m.name in seen_m:
                raise DuplicateDefinition(f"duplicate method {iface.name}.{m.name}")
            seen_m.add(m.name)
            for t in m.params:
                check_type(t, f"{iface.name}.{m.name}")
            if m.returns:
                check_type(m.returns, f"{iface.name}.{m.name}")

    # interface extension cycles
    color: dict[str, int] = {}

    def visit_iface(name: str) -> None:
        if color.get(name) == 1:
            raise InheritanceCycle(f"interface cycle through {name}")
        if color.get(name) == 2:
            return
        color[name] = 1
        for parent in model.interface_by_name[name].extends:
            visit_iface(parent)
        color[name] = 2

    for iface in model.interfaces:
        visit_iface(iface.name)

    for cls in model.classes:
        if cls.superclass is not None and cls.superclass not in model.class_by_name:
            raise UnresolvedName(f"class {cls.name} extends unknown {cls.superclass}")
        for i in cls.implements:
            if i not in model.interface_by_name:
                raise UnresolvedName(f"class {cls.name} implements unknown {i}")
        seen_f: set[str] = set()
        for f in cls.fields:
            if f.name in seen_f:
                raise DuplicateDefinition(f"duplicate field {cls.name}.{f.name}")
            seen_f.add(f.name)
            check_type(f.declared_type, f"{cls.name}.{f.name}")
        seen_m = set()
        for m in cls.methods:
            if m.name in seen_m:
                raise DuplicateDefinition(f"duplicate method {cls.name}.{m.name}")
            seen_m.add(m.name)
            _validate_method(model, cls, m, check_type)

    # class inheritance cycles
    state: dict[str, int] = {}
    for cls in model.classes:
        seen_chain: set[str] = set()
        cur: Optional[str] = cls.name
        while cur is not None:
            if state.get(cur) == 2:
                break
            if cur in seen_chain:
                raise InheritanceCycle(f"class cycle through {cur}")
            seen_chain.add(cur)
            cur = model.class_by_name[cur].superclass
        for n in seen_chain:
            state[n] = 2


def _validate_method(model: ProgramModel, cls: ClassDef, m: MethodDef, check_type) -> None:
    where = f"{cls.name}.{m.name}"
    for p in m.params:
        check_type(p.type, where)
    if m.returns:
        check_type(m.returns, where)

    labels = {s.label for s in m.body if s.label is not None}
    defined: set[str] = {p.name for p in m.params}
    if not m.is_static:
        defined.add("this")
    for i, s in enumerate(m.body):
        for v in _stmt_uses(s):
            if v not in defined:
                raise UnresolvedName(f"{where}: stmt {i} uses undefined variable {v!r}")
        if s.dst is not None:
            defined.add(s.dst)
        if s.op == "new" and s.cls not in model.class_by_name:
            raise UnresolvedName(f"{where}: new of unknown class {s.cls}")
        if s.op == "sinvoke":
            full = f"{s.cls}.{s.method}"
            if full not in model.intrinsics and s.cls not in model.class_by_name:
                raise UnresolvedName(f"{where}: sinvoke target {full} unknown")
        if s.target is not None and s.target not in labels:
            raise UnresolvedName(f"{where}: stmt {i} branches to unknown label {s.target!r}")


# ---------------------------------------------------------------------------
# printing (round-trip inverse of loading)
# ---------------------------------------------------------------------------


def _stmt_to_record(s: Stmt) -> dict:
    rec: dict[str, Any] = {"op": s.op}
    if s.op == "const":
        rec.update(dst=s.dst, value=s.value)
    elif s.op == "assign":
        rec.update(dst=s.dst, src=s.src)
    elif s.op == "load":
        rec.update(dst=s.dst, obj=s.obj)
        rec["field"] = s.fieldname
    elif s.op == "store":
        rec.update(obj=s.obj, src=s.src)
        rec["field"] = s.fieldname
    elif s.op == "new":
        rec["dst"] = s.dst
        rec["class"] = s.cls
    elif s.op == "invoke":
        rec.update(recv=s.obj, method=s.method, args=list(s.args))
        if s.dst is not None:
            rec["dst"] = s.dst
    elif s.op == "sinvoke":
        rec["class"] = s.cls
        rec.update(method=s.method, args=list(s.args))
        if s.dst is not None:
            rec["dst"] = s.dst
    elif s.op == "branch":
        rec.update(lhs=s.lhs, relop=s.relop, target=s.target)
        if s.rhs is not None:
            rec["rhs"] = s.rhs
    elif s.op == "goto":
        rec["target"] = s.target
    elif s.op == "return":
        if s.src is not None:
            rec["src"] = s.src
    if s.label is not None:
        rec["label"] = s.label
    return rec


def dump_program(model: ProgramModel) -> dict:
    """Inverse of ``load_program``: load(dump(m)) is structurally identical to m."""
    return {
        "interfaces": [
            {
                "name": i.name,
                **({"extends": list(i.extends)} if i.extends else {}),
                "methods": [
                    {
                        "name": m.name,
                        "params": [str(t) for t in m.params],
                        **({"returns": str(m.returns)} if m.returns else {}),
                    }
                    for m in i.methods
                ],
            }
            for i in model.interfaces
        ],
        "classes": [
            {
                "name": c.name,
                **({"extends": c.superclass} if c.superclass else {}),
                "implements": list(c.implements),
                "serializable": c.serializable,
                "fields": [
                    {
                        "name": f.name,
                        "type": str(f.declared_type),
                        "transient": f.transient_flag,
                    }
                    for f in c.fields
                ],
                "methods": [
                    {
                        "name": m.name,
                        "params": [{"name": p.name, "type": str(p.type)} for p in m.params],
                        **({"returns": str(m.returns)} if m.returns else {}),
                        "static": m.is_static,
                        "body": [_stmt_to_record(s) for s in m.body],
                    }
                    for m in c.methods
                ],
            }
            for c in model.classes
        ],
        "intrinsics": sorted(model.intrinsics),
    }
