"""Summary-based taint analysis and DFS enumeration of candidate gadget chains.

Each method is summarized independently under the assumption that all of its
parameters (and ``this``) carry attacker-controlled data. Taint is
field-insensitive: loading any member of a tainted base yields a tainted
value, and storing a tainted value taints the whole base object. Chains are
then found by a depth-first search from magic-method sources, expanding
virtual calls through the class hierarchy only when the receiver is tainted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .model import (
    ClassDef,
    Hierarchy,
    MethodDef,
    MethodKey,
    ProgramModel,
    Stmt,
    TypeRef,
)

# Default magic methods (sources): methods the deserialization runtime invokes
# automatically on untrusted objects.
DEFAULT_SOURCES = (
    "readObject",
    "hashCode",
    "get",
    "put",
    "compare",
    "readExternal",
    "readResolve",
    "finalize",
    "equals",
    "compareTo",
    "toString",
    "validateObject",
    "readObjectNoData",
    "<clinit>",
    "call",
    "doCall",
)

# Default security-sensitive call sites (sinks), grouped by attack class.
# Owner "*" matches any receiver class or intrinsic namespace.
_RCE = (
    "getDeclaredMethod",
    "getConstructor",
    "findClass",
    "getMethod",
    "loadClass",
    "start",
    "exec",
    "invoke",
    "forName",
    "newInstance",
    "exit",
    "defineClass",
    "call",
    "invokeMethod",
    "invokeStaticMethod",
    "invokeConstructor",
)
_JNDI = ("getConnection", "do_lookup", "lookup", "c_lookup", "getObjectInstance", "connect")
_SRA = (
    "newBufferedReader",
    "newBufferedWriter",
    "delete",
    "newInputStream",
    "newOutputStream",
    "<init>",
)
_SSRF = ("openConnection", "openStream")

DEFAULT_SINKS = tuple(("*", name) for name in _RCE + _JNDI + _SRA + _SSRF)

DEFAULT_MAX_CHAIN_LENGTH = 15


@dataclass(frozen=True)
class SourceSinkConfig:
    """Configured magic methods and sensitive call sites."""

    sources: tuple[str, ...] = DEFAULT_SOURCES
    sinks: tuple[tuple[str, str], ...] = DEFAULT_SINKS  # (owner-or-"*", method)

    def __post_init__(self) -> None:
        if not self.sources or not self.sinks:
            raise ValueError("sources and sinks must be non-empty")

    def is_sink(self, owner: Optional[str], method: str) -> bool:
        for s_owner, s_method in self.sinks:
            if s_method != method:
                continue
            if s_owner == "*" or s_owner == owner:
                return True
        return False

    @staticmethod
    def from_document(doc: dict) -> "SourceSinkConfig":
        sinks = tuple((s["owner"], s["method"]) for s in doc["sinks"])
        return SourceSinkConfig(sources=tuple(doc["sources"]), sinks=sinks)


@dataclass(frozen=True)
class TaintFlow:
    """One flow out of a method: param index -> return / call arg / field.

    ``kind`` is "return", "call-arg", or "field". For instance methods
    parameter index 0 is ``this`` and declared parameters start at 1; static
    methods index declared parameters from 0. Call argument positions also use
    0 for the receiver and 1.. for arguments.
    """

    kind: str
    param: int
    site: Optional[int] = None  # statement index of the call site
    arg_pos: Optional[int] = None
    fieldname: Optional[str] = None


@dataclass
class MethodSummary:
    owner: MethodKey
    flows: tuple[TaintFlow, ...]
    # call-site statement index -> names of tainted locals used at that site
    tainted_vars: dict[int, frozenset[str]] = field(default_factory=dict)

    def site_is_tainted(self, site: int) -> bool:
        return bool(self.tainted_vars.get(site))

    def receiver_tainted(self, site: int, stmt: Stmt) -> bool:
        return stmt.op == "invoke" and stmt.obj in self.tainted_vars.get(site, frozenset())


def _param_indices(method: MethodDef) -> dict[str, int]:
    idx: dict[str, int] = {}
    pos = 0
    if not method.is_static:
        idx["this"] = pos
        pos += 1
    for p in method.params:
        idx[p.name] = pos
        pos += 1
    return idx


def summarize_method(owner: MethodKey, method: MethodDef) -> MethodSummary:
    """Compute the taint summary of one method body.

    Taint origins are tracked per variable as sets of parameter indices and
    propagated to a fixpoint (accumulating, flow-insensitive across loops).
    """
    params = _param_indices(method)
    taint: dict[str, set[int]] = {name: {i} for name, i in params.items()}

    def taint_of(v: Optional[str]) -> set[int]:
        if v is None:
            return set()
        return taint.setdefault(v, set())

    changed = True
    while changed:
        changed = False
        for s in method.body:
            if s.op == "assign":
                new = taint_of(s.src) - taint_of(s.dst)
            elif s.op == "load":
                new = taint_of(s.obj) - taint_of(s.dst)
            elif s.op == "store":
                new = taint_of(s.src) - taint_of(s.obj)
            else:
                continue
            if new:
                target = s.dst if s.op in ("assign", "load") else s.obj
                taint[target].update(new)  # type: ignore[index]
                changed = True

    flows: list[TaintFlow] = []
    tainted_vars: dict[int, frozenset[str]] = {}
    for i, s in enumerate(method.body):
        if s.op == "return" and s.src is not None:
            for origin in sorted(taint_of(s.src)):
                flows.append(TaintFlow(kind="return", param=origin))
        elif s.op == "store" and s.obj == "this":
            for origin in sorted(taint_of(s.src)):
                flows.append(TaintFlow(kind="field", param=origin, fieldname=s.fieldname))
        elif s.is_call:
            positions = []
            if s.op == "invoke":
                positions.append((0, s.obj))
            for j, a in enumerate(s.args, start=1):
                positions.append((j, a))
            site_tainted: set[str] = set()
            for pos, var in positions:
                origins = taint_of(var)
                if origins:
                    site_tainted.add(var)  # type: ignore[arg-type]
                for origin in sorted(origins):
                    flows.append(TaintFlow(kind="call-arg", param=origin, site=i, arg_pos=pos))
            tainted_vars[i] = frozenset(site_tainted)
    return MethodSummary(owner=owner, flows=tuple(flows), tainted_vars=tainted_vars)


def compute_summaries(program: ProgramModel) -> dict[MethodKey, MethodSummary]:
    return {
        (cls.name, m.name): summarize_method((cls.name, m.name), m)
        for cls, m in program.methods_in_order()
    }


# ---------------------------------------------------------------------------
# chain enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GadgetChain:
    """An ordered gadget sequence from a magic method to a sink call site.

    ``gadgets`` holds (method, linking call-site statement index in the
    predecessor gadget); the first gadget's link is None. ``sink_site`` is the
    statement index of the sink call inside the last gadget, and
    ``sink_target`` its (owner, method) descriptor.
    """

    gadgets: tuple[tuple[MethodKey, Optional[int]], ...]
    sink_site: int
    sink_target: tuple[Optional[str], str]

    @property
    def source(self) -> MethodKey:
        return self.gadgets[0][0]

    @property
    def methods(self) -> tuple[MethodKey, ...]:
        return tuple(g[0] for g in self.gadgets)

    @property
    def length(self) -> int:
        # counts the sink frame, matching how chain stack traces are reported
        return len(self.gadgets) + 1

    def describe(self) -> str:
        parts = [f"{c}.{m}" for (c, m), _ in self.gadgets]
        owner, name = self.sink_target
        parts.append(f"{owner}.{name}" if owner else name)
        return " -> ".join(parts)


def _local_types(program: ProgramModel, owner_class: str, method: MethodDef) -> dict[str, TypeRef]:
    """Best-effort forward inference of declared types for locals.

    Used for static resolution of virtual calls at untainted sites and for
    matching sink owners; unknown stays unknown.
    """
    types: dict[str, TypeRef] = {p.name: p.type for p in method.params}
    if not method.is_static:
        types["this"] = TypeRef(owner_class)
    fields = {f.name: f.declared_type for f in program.all_fields(owner_class)}
    for s in method.body:
        if s.op == "assign" and s.src in types and s.dst is not None:
            types[s.dst] = types[s.src]
        elif s.op == "new" and s.dst is not None and s.cls is not None:
            types[s.dst] = TypeRef(s.cls)
        elif s.op == "load" and s.dst is not None:
            if s.obj == "this" and s.fieldname in fields:
                types[s.dst] = fields[s.fieldname]
            elif s.obj in types and not types[s.obj].is_primitive and not types[s.obj].is_array:
                obj_fields = {
                    f.name: f.declared_type
                    for f in (
                        program.all_fields(types[s.obj].name)
                        if types[s.obj].name in program.class_by_name
                        else ()
                    )
                }
                if s.fieldname in obj_fields:
                    types[s.dst] = obj_fields[s.fieldname]
    return types


def _call_targets(
    program: ProgramModel,
    hierarchy: Hierarchy,
    summary: MethodSummary,
    owner_class: str,
    method: MethodDef,
    site: int,
    stmt: Stmt,
    types: dict[str, TypeRef],
) -> tuple[MethodKey, ...]:
    """Candidate callees of one call site under the CHA-when-tainted rule."""
    if stmt.op == "sinvoke":
        full = f"{stmt.cls}.{stmt.method}"
        if full in program.intrinsics:
            return ()
        key = (stmt.cls, stmt.method)
        return (key,) if program.has_method(key) else ()

    recv_type = types.get(stmt.obj)  # type: ignore[arg-type]
    if summary.receiver_tainted(site, stmt):
        if recv_type is not None and program.is_type_name(recv_type.name):
            return hierarchy.overriders(recv_type.name, stmt.method)  # type: ignore[arg-type]
        # receiver type unknown: consider every class defining the method
        out: list[MethodKey] = []
        for cls in program.classes:
            if any(m.name == stmt.method for m in cls.methods):
                out.append((cls.name, stmt.method))  # type: ignore[arg-type]
        return tuple(out)
    # untainted receiver: static resolution only
    if recv_type is not None and recv_type.name in program.class_by_name:
        key = program.resolve_method(recv_type.name, stmt.method)  # type: ignore[arg-type]
        if key is not None:
            return (key,)
    return ()


def _sink_descriptor(
    program: ProgramModel, stmt: Stmt, types: dict[str, TypeRef]
) -> tuple[Optional[str], str]:
    if stmt.op == "sinvoke":
        return (stmt.cls, stmt.method)  # intrinsic namespace or class
    recv_type = types.get(stmt.obj)  # type: ignore[arg-type]
    owner = recv_type.name if recv_type is not None else None
    return (owner, stmt.method)  # type: ignore[return-value]


def enumerate_chains(
    program: ProgramModel,
    hierarchy: Hierarchy,
    config: SourceSinkConfig,
    max_len: int = DEFAULT_MAX_CHAIN_LENGTH,
    summaries: Optional[dict[MethodKey, MethodSummary]] = None,
    serializable_only: bool = False,
) -> list[GadgetChain]:
    """DFS over method summaries from every source magic method.

    ``max_len`` bounds the number of frames in a chain counting the sink
    frame; there is no visited set beyond this bound, so revisiting a method
    on one path is allowed. Output order is deterministic (declaration order)
    and duplicate-free.
    """
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    if summaries is None:
        summaries = compute_summaries(program)
    types_cache: dict[MethodKey, dict[str, TypeRef]] = {}

    def types_for(key: MethodKey) -> dict[str, TypeRef]:
        if key not in types_cache:
            types_cache[key] = _local_types(program, key[0], program.method(key))
        return types_cache[key]

    chains: list[GadgetChain] = []
    seen: set[tuple] = set()

    def dfs(path: list[tuple[MethodKey, Optional[int]]]) -> None:
        key = path[-1][0]
        method = program.method(key)
        summary = summaries[key]
        types = types_for(key)
        for site, stmt in enumerate(method.body):
            if not stmt.is_call:
                continue
            desc = _sink_descriptor(program, stmt, types)
            if config.is_sink(desc[0], desc[1]) and summary.site_is_tainted(site):
                chain = GadgetChain(
                    gadgets=tuple(path), sink_site=site, sink_target=desc
                )
                fp = (chain.gadgets, chain.sink_site)
                if chain.length <= max_len and fp not in seen:
                    seen.add(fp)
                    chains.append(chain)
            if len(path) >= max_len - 1:
                continue  # a deeper chain could not fit within max_len frames
            for callee in _call_targets(
                program, hierarchy, summary, key[0], method, site, stmt, types
            ):
                path.append((callee, site))
                dfs(path)
                path.pop()

    for cls in program.classes:
        if serializable_only and not cls.serializable:
            continue
        for m in cls.methods:
            if m.name in config.sources:
                dfs([((cls.name, m.name), None)])
    return chains
