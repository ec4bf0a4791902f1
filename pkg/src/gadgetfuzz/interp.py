"""Deterministic interpreter with gadget-restricted instrumentation.

Executes one injection object from a chain's magic-method entry. Only blocks
and branches inside the chain's gadget methods are recorded; the synthetic
sink frame (the intrinsic call frame of the chain's sink) counts as the final
gadget. All abnormal ends (null dereference, missing method, exhausted step
budget) are encoded in the feedback, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .model import COMPUTED_INTRINSICS, MethodKey, ProgramModel, Stmt, TypeRef
from .proptree import ObjectValue
from .taint import GadgetChain

DEFAULT_STEP_BUDGET = 100_000

# Block ids are (class name, method name, block index); the synthetic sink
# frame uses ("<sink>", <sink descriptor>, 0).
BlockId = tuple[str, str, int]
BranchId = tuple[str, str, int, bool]  # (class, method, branch stmt index, polarity)

FAULT_NULL = "null-dereference"
FAULT_MISSING_METHOD = "missing-method"
FAULT_STEP_BUDGET = "step-budget-exhausted"


def sink_block_id(chain: GadgetChain) -> BlockId:
    owner, name = chain.sink_target
    return ("<sink>", f"{owner}.{name}" if owner else name, 0)


@dataclass
class ExecutionFeedback:
    """Per-run feedback, restricted to the chain's gadgets.

    ``trace`` and ``covered_branches`` are ordered and duplicate-free (set
    semantics with first-seen order preserved).
    """

    trace: tuple[BlockId, ...]
    covered_branches: tuple[BranchId, ...]
    sink_hit: bool
    sink_site: Optional[tuple[MethodKey, int]]
    steps: int
    fault: Optional[str]

    @property
    def last_branch_owner(self) -> Optional[str]:
        if not self.covered_branches:
            return None
        return self.covered_branches[-1][0]


class _RTObject:
    """Mutable runtime instance; fields default to null/zero by declared type."""

    __slots__ = ("cls", "fields")

    def __init__(self, cls: str, fields: dict) -> None:
        self.cls = cls
        self.fields = fields


def _default_for(t: TypeRef):
    if t.is_array:
        return None
    if t.name == "int":
        return 0
    if t.name == "bool":
        return False
    return None


def to_runtime(program: ProgramModel, value: ObjectValue):
    """Deep-convert an injection object into mutable runtime values."""
    kind = value.kind
    if kind == "null":
        return None
    if kind in ("int", "bool", "string"):
        return value.value
    if kind == "array":
        return [to_runtime(program, e) for e in value.elements]
    fields = {f.name: _default_for(f.declared_type) for f in program.all_fields(value.cls)}
    for name, v in value.fields:
        fields[name] = to_runtime(program, v)
    return _RTObject(value.cls, fields)


@dataclass
class _Frame:
    key: MethodKey
    locals: dict
    pc: int
    ret_dst: Optional[str]  # caller variable receiving the return value
    block: int = -1  # block of pc before the call, for re-entry bookkeeping


@dataclass
class _Recorder:
    gadget_methods: frozenset[MethodKey]
    trace: list[BlockId] = field(default_factory=list)
    trace_seen: set[BlockId] = field(default_factory=set)
    branches: list[BranchId] = field(default_factory=list)
    branch_seen: set[BranchId] = field(default_factory=set)

    def block(self, key: MethodKey, b: int) -> None:
        if key not in self.gadget_methods:
            return
        bid: BlockId = (key[0], key[1], b)
        if bid not in self.trace_seen:
            self.trace_seen.add(bid)
            self.trace.append(bid)

    def sink_frame(self, bid: BlockId) -> None:
        if bid not in self.trace_seen:
            self.trace_seen.add(bid)
            self.trace.append(bid)

    def branch(self, key: MethodKey, stmt_idx: int, taken: bool) -> None:
        if key not in self.gadget_methods:
            return
        br: BranchId = (key[0], key[1], stmt_idx, taken)
        if br not in self.branch_seen:
            self.branch_seen.add(br)
            self.branches.append(br)


class _Fault(Exception):
    def __init__(self, kind: str) -> None:
        self.kind = kind


def execute(
    program: ProgramModel,
    chain: GadgetChain,
    root: ObjectValue,
    step_budget: int = DEFAULT_STEP_BUDGET,
) -> ExecutionFeedback:
    """Invoke the chain's source magic method on ``root``.

    Extra magic-method parameters are filled with defaults (null/0). Virtual
    dispatch follows the runtime class of the receiver. Executing the chain's
    sink call site terminates the run with sink_hit=true; any other
    non-computed intrinsic call is a terminal marker without a sink hit.
    """
    if step_budget < 1:
        raise ValueError("step_budget must be >= 1")
    source = chain.source
    if root.kind != "object" or root.cls != source[0]:
        raise ValueError(f"root class {root.cls!r} does not own source method {source}")

    rec = _Recorder(gadget_methods=frozenset(chain.methods))
    rt_root = to_runtime(program, root)
    entry = program.method(source)
    locals0: dict = {"this": rt_root}
    for p in entry.params:
        locals0[p.name] = _default_for(p.type)

    stack: list[_Frame] = [_Frame(key=source, locals=locals0, pc=0, ret_dst=None)]
    rec.block(source, 0)
    steps = 0
    sink_hit = False
    sink_site: Optional[tuple[MethodKey, int]] = None
    fault: Optional[str] = None

    def getvar(frame: _Frame, name: str):
        return frame.locals.get(name)

    try:
        while stack:
            frame = stack[-1]
            method = program.method(frame.key)
            if frame.pc >= len(method.body):
                # fell off the end: implicit return
                stack.pop()
                if stack and frame.ret_dst is not None:
                    stack[-1].locals[frame.ret_dst] = None
                continue
            steps += 1
            if steps > step_budget:
                raise _Fault(FAULT_STEP_BUDGET)
            blocks = program.blocks(frame.key)
            b = blocks.stmt_block[frame.pc]
            if b != frame.block:
                frame.block = b
                rec.block(frame.key, b)
            s: Stmt = method.body[frame.pc]
            op = s.op

            if op == "const":
                frame.locals[s.dst] = s.value
                frame.pc += 1
            elif op == "assign":
                frame.locals[s.dst] = getvar(frame, s.src)
                frame.pc += 1
            elif op == "load":
                base = getvar(frame, s.obj)
                if not isinstance(base, _RTObject):
                    raise _Fault(FAULT_NULL)
                frame.locals[s.dst] = base.fields.get(s.fieldname)
                frame.pc += 1
            elif op == "store":
                base = getvar(frame, s.obj)
                if not isinstance(base, _RTObject):
                    raise _Fault(FAULT_NULL)
                base.fields[s.fieldname] = getvar(frame, s.src)
                frame.pc += 1
            elif op == "new":
                cls = program.class_by_name[s.cls]
                fields = {
                    f.name: _default_for(f.declared_type) for f in program.all_fields(cls.name)
                }
                frame.locals[s.dst] = _RTObject(cls.name, fields)
                frame.pc += 1
            elif op == "goto":
                frame.pc = blocks.label_index[s.target]
                frame.block = -1
            elif op == "return":
                value = getvar(frame, s.src) if s.src is not None else None
                stack.pop()
                if stack and frame.ret_dst is not None:
                    stack[-1].locals[frame.ret_dst] = value
            elif op == "branch":
                taken = _eval_branch(frame, s)
                rec.branch(frame.key, frame.pc, taken)
                if taken:
                    frame.pc = blocks.label_index[s.target]
                    frame.block = -1
                else:
                    frame.pc += 1
            elif op == "sinvoke":
                full = f"{s.cls}.{s.method}"
                args = [getvar(frame, a) for a in s.args]
                if full in program.intrinsics:
                    if full in COMPUTED_INTRINSICS:
                        result = _computed_intrinsic(full, args)
                        if s.dst is not None:
                            frame.locals[s.dst] = result
                        frame.pc += 1
                    else:
                        # terminal intrinsic marker
                        if frame.key == chain.methods[-1] and frame.pc == chain.sink_site:
                            sink_hit = True
                            sink_site = (frame.key, frame.pc)
                            rec.sink_frame(sink_block_id(chain))
                        break
                else:
                    callee = (s.cls, s.method)
                    if not program.has_method(callee):
                        raise _Fault(FAULT_MISSING_METHOD)
                    frame.pc += 1
                    stack.append(_call_frame(program, callee, None, args, s.dst))
                    rec.block(callee, 0)
            elif op == "invoke":
                recv = getvar(frame, s.obj)
                if recv is None:
                    raise _Fault(FAULT_NULL)
                if not isinstance(recv, _RTObject):
                    raise _Fault(FAULT_MISSING_METHOD)
                callee = program.resolve_method(recv.cls, s.method)
                if callee is None:
                    raise _Fault(FAULT_MISSING_METHOD)
                if _is_chain_sink_site(chain, frame.key, frame.pc):
                    sink_hit = True
                    sink_site = (frame.key, frame.pc)
                    rec.sink_frame(sink_block_id(chain))
                    break
                args = [getvar(frame, a) for a in s.args]
                frame.pc += 1
                stack.append(_call_frame(program, callee, recv, args, s.dst))
                rec.block(callee, 0)
            else:  # pragma: no cover - ops are validated at load time
                raise AssertionError(op)
    except _Fault as f:
        fault = f.kind

    return ExecutionFeedback(
        trace=tuple(rec.trace),
        covered_branches=tuple(rec.branches),
        sink_hit=sink_hit,
        sink_site=sink_site,
        steps=steps,
        fault=fault,
    )


def _is_chain_sink_site(chain: GadgetChain, key: MethodKey, pc: int) -> bool:
    return key == chain.methods[-1] and pc == chain.sink_site


def _call_frame(
    program: ProgramModel,
    callee: MethodKey,
    recv,
    args: list,
    ret_dst: Optional[str],
) -> _Frame:
    method = program.method(callee)
    locals_: dict = {}
    if not method.is_static:
        locals_["this"] = recv
    for i, p in enumerate(method.params):
        locals_[p.name] = args[i] if i < len(args) else _default_for(p.type)
    return _Frame(key=callee, locals=locals_, pc=0, ret_dst=ret_dst)


def _eval_branch(frame: _Frame, s: Stmt) -> bool:
    lhs = frame.locals.get(s.lhs)
    if s.relop == "is-null":
        return lhs is None
    if s.relop == "not-null":
        return lhs is not None
    rhs = frame.locals.get(s.rhs)
    if s.relop == "==":
        return _values_equal(lhs, rhs)
    if s.relop == "!=":
        return not _values_equal(lhs, rhs)
    # ordering relops require ints
    if lhs is None or rhs is None:
        raise _Fault(FAULT_NULL)
    if not isinstance(lhs, int) or not isinstance(rhs, int):
        return False
    if s.relop == "<":
        return lhs < rhs
    return lhs <= rhs


def _values_equal(a, b) -> bool:
    if isinstance(a, _RTObject) or isinstance(b, _RTObject):
        return a is b
    if isinstance(a, list) or isinstance(b, list):
        return a is b
    return a == b


def _computed_intrinsic(name: str, args: list):
    if name == "array.length":
        arr = args[0] if args else None
        if not isinstance(arr, list):
            raise _Fault(FAULT_NULL)
        return len(arr)
    if name == "array.get":
        arr = args[0] if args else None
        idx = args[1] if len(args) > 1 else 0
        if not isinstance(arr, list):
            raise _Fault(FAULT_NULL)
        if not isinstance(idx, int) or isinstance(idx, bool) or not (0 <= idx < len(arr)):
            return None
        return arr[idx]
    raise AssertionError(name)  # pragma: no cover
