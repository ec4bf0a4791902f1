"""Property trees, value dictionaries, and parametric seed materialization.

A property tree models the nested object hierarchy a gadget chain requires:
class nodes hold field nodes, and a field node may link to the class node of
the next gadget's class (the *backbone*). Materialization turns a typed draw
sequence into a concrete injection object; replaying the same draws over the
same tree always yields an identical object.

Every class node is a *region*: draws are tagged with the region they were
made under, which lets the mutator re-randomize one gadget class's subtree
while keeping every other region byte-identical.
"""

from __future__ import annotations

import string as _string
from dataclasses import dataclass, field, replace
from typing import Optional

from .model import FieldDef, Hierarchy, MethodKey, ProgramModel, TypeRef
from .taint import GadgetChain

SMALL_INT_POOL = (-1, 0, 1, 2)
ARRAY_SIZE_MAX = 8
DEFAULT_DEPTH_CAP = 8


class UnlinkableChain(Exception):
    """No field of any earlier gadget class can host the next gadget's class.

    Signals a statically infeasible chain; campaigns report it, the pipeline
    continues.
    """


# ---------------------------------------------------------------------------
# tree
# ---------------------------------------------------------------------------


@dataclass
class FieldNode:
    name: str
    declared_type: TypeRef
    child: Optional["ClassNode"] = None
    backbone: bool = False  # merge link along the chain's invocation order
    truncated: bool = False  # recursive type reference cut at the depth cap


@dataclass
class ClassNode:
    class_name: str
    gadgets: tuple[MethodKey, ...] = ()
    fields: list[FieldNode] = field(default_factory=list)
    region: int = -1  # DFS index, assigned once the tree is complete
    depth: int = 1


@dataclass
class PropertyTree:
    root: ClassNode
    regions: tuple[ClassNode, ...]  # DFS order; index == ClassNode.region
    region_parent: tuple[Optional[int], ...]
    depth_cap: int

    def region_of_class(self, class_name: str) -> Optional[int]:
        for node in self.regions:
            if node.class_name == class_name:
                return node.region
        return None

    def regen_set(self, enabled: set[int]) -> set[int]:
        """Enabled regions plus all their descendants."""
        out: set[int] = set()
        for r in range(len(self.regions)):
            cur: Optional[int] = r
            while cur is not None:
                if cur in enabled:
                    out.add(r)
                    break
                cur = self.region_parent[cur]
        return out


def _expandable(program: ProgramModel, t: TypeRef) -> bool:
    return not t.is_array and not t.is_primitive and t.name in program.class_by_name


def _build_class_node(
    program: ProgramModel, class_name: str, depth: int, depth_cap: int
) -> ClassNode:
    node = ClassNode(class_name=class_name, depth=depth)
    for f in program.all_fields(class_name):
        fn = FieldNode(name=f.name, declared_type=f.declared_type)
        if _expandable(program, f.declared_type):
            if depth + 1 <= depth_cap:
                fn.child = _build_class_node(program, f.declared_type.name, depth + 1, depth_cap)
            else:
                fn.truncated = True
        node.fields.append(fn)
    return node


def build_property_tree(
    chain: GadgetChain,
    program: ProgramModel,
    hierarchy: Hierarchy,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> PropertyTree:
    """Build per-class trees for the chain's gadget classes and merge them
    along the invocation order.

    A field node hosts the next gadget's class when its declared type equals
    that class, a superclass of it, or an interface it implements. Raises
    UnlinkableChain when no earlier gadget class offers such a field.
    """
    class_order: list[str] = []
    gadgets_by_class: dict[str, list[MethodKey]] = {}
    for (cls, name), _ in chain.gadgets:
        if cls not in class_order:
            class_order.append(cls)
        gadgets_by_class.setdefault(cls, []).append((cls, name))

    root = _build_class_node(program, class_order[0], 1, depth_cap)
    root.gadgets = tuple(gadgets_by_class[class_order[0]])
    backbone_nodes: list[ClassNode] = [root]

    for nxt in class_order[1:]:
        host: Optional[FieldNode] = None
        host_owner: Optional[ClassNode] = None
        # prefer the most recently placed gadget class as the host
        for owner in reversed(backbone_nodes):
            for fn in owner.fields:
                t = fn.declared_type
                if fn.backbone or t.is_array or t.is_primitive:
                    continue
                if hierarchy.is_subtype(nxt, t.name):
                    host = fn
                    host_owner = owner
                    break
            if host is not None:
                break
        if host is None or host_owner is None:
            raise UnlinkableChain(
                f"no field of {[n.class_name for n in backbone_nodes]} can hold {nxt}"
            )
        child = _build_class_node(program, nxt, host_owner.depth + 1, max(depth_cap, host_owner.depth + 1))
        child.gadgets = tuple(gadgets_by_class[nxt])
        host.child = child
        host.backbone = True
        host.truncated = False
        backbone_nodes.append(child)

    regions: list[ClassNode] = []
    parents: list[Optional[int]] = []

    def index(node: ClassNode, parent: Optional[int]) -> None:
        node.region = len(regions)
        regions.append(node)
        parents.append(parent)
        for fn in node.fields:
            if fn.child is not None:
                index(fn.child, node.region)

    index(root, None)
    return PropertyTree(
        root=root,
        regions=tuple(regions),
        region_parent=tuple(parents),
        depth_cap=depth_cap,
    )


def tree_depth(tree: PropertyTree) -> int:
    return max(node.depth for node in tree.regions)


# ---------------------------------------------------------------------------
# value dictionary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValueDictionary:
    """Candidate literals harvested from the chain's gadget classes."""

    strings: tuple[str, ...]
    ints: tuple[int, ...]  # fixed small-integer pool plus harvested literals
    class_names: tuple[str, ...]
    method_names: tuple[str, ...]


def extract_dictionary(chain: GadgetChain, program: ProgramModel) -> ValueDictionary:
    strings: list[str] = []
    ints: list[int] = list(SMALL_INT_POOL)
    class_names: list[str] = []
    method_names: list[str] = []

    def add(pool: list, item) -> None:
        if item not in pool:
            pool.append(item)

    classes: list[str] = []
    for (cls, _), _ in chain.gadgets:
        if cls not in classes:
            classes.append(cls)
    for cls_name in classes:
        add(class_names, cls_name)
        cls = program.class_by_name[cls_name]
        for m in cls.methods:
            add(method_names, m.name)
            for s in m.body:
                if s.op == "const":
                    if isinstance(s.value, str):
                        add(strings, s.value)
                    elif isinstance(s.value, bool):
                        pass
                    elif isinstance(s.value, int):
                        add(ints, s.value)
                elif s.is_call and s.method is not None:
                    add(method_names, s.method)
    return ValueDictionary(
        strings=tuple(strings),
        ints=tuple(ints),
        class_names=tuple(class_names),
        method_names=tuple(method_names),
    )


# ---------------------------------------------------------------------------
# injection objects
# ---------------------------------------------------------------------------


NULL_KIND = "null"


@dataclass(frozen=True)
class ObjectValue:
    """An immutable injection-object description.

    kind is one of null, int, bool, string, array, object. Arrays carry their
    declared element type so homogeneity is checkable; objects carry ordered
    (field name, value) assignments.
    """

    kind: str
    value: object = None  # int | bool | str payload
    cls: Optional[str] = None  # object class name
    elem_type: Optional[TypeRef] = None
    elements: tuple["ObjectValue", ...] = ()
    fields: tuple[tuple[str, "ObjectValue"], ...] = ()

    @staticmethod
    def null() -> "ObjectValue":
        return _NULL

    def render(self):
        """JSON-compatible rendering for reports."""
        if self.kind == NULL_KIND:
            return None
        if self.kind in ("int", "bool", "string"):
            return self.value
        if self.kind == "array":
            return {"array": str(self.elem_type), "elements": [e.render() for e in self.elements]}
        return {"class": self.cls, "fields": {k: v.render() for k, v in self.fields}}


_NULL = ObjectValue(kind=NULL_KIND)


def field_value(obj: ObjectValue, name: str) -> ObjectValue:
    for k, v in obj.fields:
        if k == name:
            return v
    raise KeyError(name)


# ---------------------------------------------------------------------------
# parametric draw sequences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Draw:
    kind: str  # "int" | "bool" | "choice" | "identifier"
    value: object
    region: int


@dataclass(frozen=True)
class ParamSeq:
    draws: tuple[Draw, ...] = ()

    def by_region(self) -> dict[int, list[Draw]]:
        out: dict[int, list[Draw]] = {}
        for d in self.draws:
            out.setdefault(d.region, []).append(d)
        return out

    def identifier_flags(self) -> dict[int, bool]:
        flags: dict[int, bool] = {}
        for d in self.draws:
            if d.kind == "identifier" and d.region not in flags:
                flags[d.region] = bool(d.value)
        return flags


class _DrawSource:
    """Produces typed draws during a tree walk, recording what it emitted."""

    def __init__(self) -> None:
        self.recorded: list[Draw] = []

    def _emit(self, kind: str, value, region: int):
        self.recorded.append(Draw(kind=kind, value=value, region=region))
        return value

    def int_value(self, region: int) -> int:
        raise NotImplementedError

    def int_range(self, region: int, lo: int, hi: int) -> int:
        raise NotImplementedError

    def boolean(self, region: int) -> bool:
        raise NotImplementedError

    def choice(self, region: int, n: int) -> int:
        raise NotImplementedError

    def identifier(self, region: int) -> bool:
        raise NotImplementedError

    def params(self) -> ParamSeq:
        return ParamSeq(draws=tuple(self.recorded))


def _coerce_int(value) -> int:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int):
        return value
    return 0


class ReplaySource(_DrawSource):
    """Replays a stored ParamSeq; exhausted regions fall back to defaults
    (0 / False / first choice), so short sequences are padded."""

    def __init__(self, params: ParamSeq) -> None:
        super().__init__()
        self._queues = {r: list(ds) for r, ds in params.by_region().items()}

    def _pop(self, region: int) -> Optional[Draw]:
        q = self._queues.get(region)
        if q:
            return q.pop(0)
        return None

    def int_value(self, region: int) -> int:
        d = self._pop(region)
        return self._emit("int", _coerce_int(d.value) if d else 0, region)

    def int_range(self, region: int, lo: int, hi: int) -> int:
        d = self._pop(region)
        raw = _coerce_int(d.value) if d else lo
        return self._emit("int", lo + (raw - lo) % (hi - lo + 1), region)

    def boolean(self, region: int) -> bool:
        d = self._pop(region)
        return self._emit("bool", bool(d.value) if d else False, region)

    def choice(self, region: int, n: int) -> int:
        d = self._pop(region)
        raw = _coerce_int(d.value) if d else 0
        return self._emit("choice", raw % n if n else 0, region)

    def identifier(self, region: int) -> bool:
        d = self._pop(region)
        return self._emit("identifier", bool(d.value) if d else False, region)


class FreshSource(_DrawSource):
    """Draws fresh random values; value pools come from the dictionary."""

    def __init__(self, rng, dictionary: ValueDictionary) -> None:
        super().__init__()
        self.rng = rng
        self.dictionary = dictionary

    def int_value(self, region: int) -> int:
        return self._emit("int", self.rng.choice(self.dictionary.ints), region)

    def int_range(self, region: int, lo: int, hi: int) -> int:
        return self._emit("int", self.rng.randint(lo, hi), region)

    def boolean(self, region: int) -> bool:
        return self._emit("bool", self.rng.random() < 0.5, region)

    def choice(self, region: int, n: int) -> int:
        return self._emit("choice", self.rng.randrange(n) if n else 0, region)

    def identifier(self, region: int) -> bool:
        return self._emit("identifier", self.rng.random() < 0.5, region)


class MutateSource(_DrawSource):
    """Replays the parent's draws except in regenerated regions, which draw
    fresh values; used by step-forward mutation."""

    def __init__(self, parent: ParamSeq, rng, dictionary: ValueDictionary, regen: set[int]) -> None:
        super().__init__()
        self.replay = ReplaySource(parent)
        self.fresh = FreshSource(rng, dictionary)
        self.regen = regen
        self.forced_on: set[int] = set()

    def _pick(self, region: int) -> _DrawSource:
        return self.fresh if region in self.regen else self.replay

    def int_value(self, region: int) -> int:
        return self._emit("int", self._pick(region).int_value(region), region)

    def int_range(self, region: int, lo: int, hi: int) -> int:
        return self._emit("int", self._pick(region).int_range(region, lo, hi), region)

    def boolean(self, region: int) -> bool:
        return self._emit("bool", self._pick(region).boolean(region), region)

    def choice(self, region: int, n: int) -> int:
        return self._emit("choice", self._pick(region).choice(region, n), region)

    def identifier(self, region: int) -> bool:
        if region in self.forced_on:
            # keep the underlying cursors aligned even when forcing the flag
            self._pick(region).identifier(region)
            return self._emit("identifier", True, region)
        return self._emit("identifier", self._pick(region).identifier(region), region)


# ---------------------------------------------------------------------------
# materialization
# ---------------------------------------------------------------------------


class _Materializer:
    def __init__(
        self,
        tree: PropertyTree,
        source: _DrawSource,
        dictionary: ValueDictionary,
        hierarchy: Hierarchy,
    ) -> None:
        self.tree = tree
        self.source = source
        self.dictionary = dictionary
        self.hierarchy = hierarchy
        self.program = hierarchy.program

    def run(self) -> ObjectValue:
        return self._class_node(self.tree.root)

    def _class_node(self, node: ClassNode) -> ObjectValue:
        self.source.identifier(node.region)
        fields = []
        for fn in node.fields:
            fields.append((fn.name, self._field(fn, node)))
        return ObjectValue(kind="object", cls=node.class_name, fields=tuple(fields))

    def _field(self, fn: FieldNode, owner: ClassNode) -> ObjectValue:
        if fn.backbone:
            assert fn.child is not None
            return self._class_node(fn.child)
        return self._typed(fn.declared_type, owner.region, owner.depth, fn.child)

    def _typed(
        self,
        t: TypeRef,
        region: int,
        depth: int,
        linked: Optional[ClassNode] = None,
    ) -> ObjectValue:
        src = self.source
        if t.is_array:
            if not src.boolean(region):
                return ObjectValue.null()
            size = src.int_range(region, 0, ARRAY_SIZE_MAX)
            elems = tuple(self._typed(t.element(), region, depth + 1) for _ in range(size))
            return ObjectValue(kind="array", elem_type=t.element(), elements=elems)
        if t.name == "int":
            return ObjectValue(kind="int", value=src.int_value(region))
        if t.name == "bool":
            return ObjectValue(kind="bool", value=src.boolean(region))
        if t.name == "string":
            candidates = (None,) + self.dictionary.strings
            idx = src.choice(region, len(candidates))
            chosen = candidates[idx]
            return ObjectValue.null() if chosen is None else ObjectValue(kind="string", value=chosen)
        # class or interface typed: Null | concrete subtypes, recursive to cap
        candidates_cls = (None,) + self.hierarchy.subtypes(t.name)
        idx = src.choice(region, len(candidates_cls))
        chosen_cls = candidates_cls[idx]
        if chosen_cls is None:
            return ObjectValue.null()
        if linked is not None and linked.class_name == chosen_cls:
            return self._class_node(linked)
        return self._instantiate(chosen_cls, region, depth + 1)

    def _instantiate(self, class_name: str, region: int, depth: int) -> ObjectValue:
        if depth > self.tree.depth_cap:
            return ObjectValue.null()
        fields = []
        for f in self.program.all_fields(class_name):
            fields.append((f.name, self._typed(f.declared_type, region, depth)))
        return ObjectValue(kind="object", cls=class_name, fields=tuple(fields))


def materialize(
    tree: PropertyTree,
    params: ParamSeq,
    dictionary: ValueDictionary,
    hierarchy: Hierarchy,
) -> ObjectValue:
    """Pure function of (tree, params, dictionary): build the injection object.

    Backbone fields are always instantiated with their linked classes; all
    other fields are filled by the draw kinds, with defaults (null/0/false)
    when the sequence runs short.
    """
    return _Materializer(tree, ReplaySource(params), dictionary, hierarchy).run()


def initial_params() -> ParamSeq:
    """The backbone-only initial seed: all draws default."""
    return ParamSeq()


def mutate_params(
    tree: PropertyTree,
    parent: ParamSeq,
    dictionary: ValueDictionary,
    hierarchy: Hierarchy,
    rng,
    stuck_class: Optional[str],
    p_extra: float = 0.1,
) -> ParamSeq:
    """Step-forward mutation: re-randomize only the stuck class's subtree
    (plus occasionally one extra region), leaving every other region
    byte-identical to the parent so solved gadgets keep their values."""
    stuck_region = tree.region_of_class(stuck_class) if stuck_class else None
    if stuck_region is None:
        stuck_region = tree.root.region
    enabled = {stuck_region}
    forced = {stuck_region}
    if rng.random() < p_extra:
        enabled.add(rng.randrange(len(tree.regions)))
    regen = tree.regen_set(enabled)
    src = MutateSource(parent, rng, dictionary, regen)
    src.forced_on = forced
    _Materializer(tree, src, dictionary, hierarchy).run()
    return src.params()


# ---------------------------------------------------------------------------
# structure-unaware generation (ablation)
# ---------------------------------------------------------------------------

_SU_ALPHABET = _string.ascii_letters + _string.digits


def su_generate(
    root_class: str,
    program: ProgramModel,
    rng,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> tuple[ObjectValue, ParamSeq]:
    """Structure-unaware object generation: no property tree, no backbone, no
    dictionary, and no hierarchy filtering. Class-typed fields draw uniformly
    from all model classes, primitives from wide raw ranges."""
    draws: list[Draw] = []

    def rec_int() -> int:
        v = rng.randrange(-(2**31), 2**31)
        draws.append(Draw(kind="int", value=v, region=0))
        return v

    def rec_choice(n: int) -> int:
        v = rng.randrange(n) if n else 0
        draws.append(Draw(kind="choice", value=v, region=0))
        return v

    def typed(t: TypeRef, depth: int) -> ObjectValue:
        if depth > depth_cap:
            return ObjectValue.null()
        if t.is_array:
            if rec_choice(2) == 0:
                return ObjectValue.null()
            size = rec_choice(ARRAY_SIZE_MAX + 1)
            return ObjectValue(
                kind="array",
                elem_type=t.element(),
                elements=tuple(typed(t.element(), depth + 1) for _ in range(size)),
            )
        if t.name == "int":
            return ObjectValue(kind="int", value=rec_int())
        if t.name == "bool":
            return ObjectValue(kind="bool", value=bool(rec_choice(2)))
        if t.name == "string":
            if rec_choice(2) == 0:
                return ObjectValue.null()
            length = rec_choice(9)
            chars = "".join(_SU_ALPHABET[rec_choice(len(_SU_ALPHABET))] for _ in range(length))
            return ObjectValue(kind="string", value=chars)
        classes = [c.name for c in program.classes]
        idx = rec_choice(len(classes) + 1)
        if idx == 0:
            return ObjectValue.null()
        return instantiate(classes[idx - 1], depth + 1)

    def instantiate(class_name: str, depth: int) -> ObjectValue:
        if depth > depth_cap:
            return ObjectValue.null()
        fields = tuple(
            (f.name, typed(f.declared_type, depth)) for f in program.all_fields(class_name)
        )
        return ObjectValue(kind="object", cls=class_name, fields=fields)

    obj = instantiate(root_class, 1)
    return obj, ParamSeq(draws=tuple(draws))
