"""Chain-level control-flow graph and seed distance.

The chain CFG stitches the basic blocks of each gadget method together with
inter-procedural edges at the linking call sites, and appends a synthetic
single-block sink frame. Distances are hop counts to that sink block,
computed by reverse breadth-first search; blocks that cannot reach it get a
penalty of (max finite distance + 1). A seed's distance is the exact rational
mean of the distinct distances along its executed trace; a seed that covers
no chain block at all is worse than any real seed and gets MAX_DISTANCE
(penalty + 1).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .interp import BlockId, ExecutionFeedback, sink_block_id
from .model import ProgramModel
from .taint import GadgetChain


@dataclass(frozen=True)
class ChainCFG:
    """Inter-procedural CFG over a chain's gadget blocks plus the sink block."""

    chain: GadgetChain
    nodes: tuple[BlockId, ...]
    edges: dict[BlockId, tuple[BlockId, ...]]
    sink_block: BlockId

    def successors(self, node: BlockId) -> tuple[BlockId, ...]:
        return self.edges.get(node, ())


def build_chain_cfg(program: ProgramModel, chain: GadgetChain) -> ChainCFG:
    nodes: list[BlockId] = []
    edges: dict[BlockId, list[BlockId]] = {}
    sink = sink_block_id(chain)

    def add_edge(a: BlockId, b: BlockId) -> None:
        succ = edges.setdefault(a, [])
        if b not in succ:
            succ.append(b)

    methods = chain.methods
    for pos, key in enumerate(methods):
        method = program.method(key)
        info = program.blocks(key)
        nblocks = len(info.starts)
        for b in range(nblocks):
            nodes.append((key[0], key[1], b))

        # The call site that transfers control to the next frame. For the last
        # gadget that is the sink site itself.
        if pos + 1 < len(methods):
            link_site = chain.gadgets[pos + 1][1]
            link_target: BlockId = (methods[pos + 1][0], methods[pos + 1][1], 0)
        else:
            link_site = chain.sink_site
            link_target = sink

        for b in range(nblocks):
            start = info.starts[b]
            end = info.starts[b + 1] if b + 1 < nblocks else len(method.body)
            src: BlockId = (key[0], key[1], b)
            if link_site is not None and start <= link_site < end:
                add_edge(src, link_target)
            last = method.body[end - 1]
            if last.op == "goto":
                add_edge(src, (key[0], key[1], info.stmt_block[info.label_index[last.target]]))
            elif last.op == "branch":
                add_edge(src, (key[0], key[1], info.stmt_block[info.label_index[last.target]]))
                if end < len(method.body):
                    add_edge(src, (key[0], key[1], info.stmt_block[end]))
            elif last.op == "return":
                pass
            elif end < len(method.body):
                add_edge(src, (key[0], key[1], info.stmt_block[end]))

        # Return edges: every exit block of the next gadget flows back to the
        # block containing the linking call site.
        if pos + 1 < len(methods):
            callee = methods[pos + 1]
            cinfo = program.blocks(callee)
            cmethod = program.method(callee)
            caller_block = (key[0], key[1], info.stmt_block[chain.gadgets[pos + 1][1]])
            for b in range(len(cinfo.starts)):
                end = cinfo.starts[b + 1] if b + 1 < len(cinfo.starts) else len(cmethod.body)
                if cmethod.body[end - 1].op == "return" or end == len(cmethod.body):
                    add_edge((callee[0], callee[1], b), caller_block)

    nodes.append(sink)
    return ChainCFG(
        chain=chain,
        nodes=tuple(nodes),
        edges={a: tuple(bs) for a, bs in edges.items()},
        sink_block=sink,
    )


def block_distances(cfg: ChainCFG) -> dict[BlockId, int]:
    """Hop distance from each block to the sink block.

    Unreachable blocks get (max finite distance + 1); the sink itself is 0.
    """
    preds: dict[BlockId, list[BlockId]] = {n: [] for n in cfg.nodes}
    for a, succ in cfg.edges.items():
        for b in succ:
            preds[b].append(a)
    dist: dict[BlockId, int] = {cfg.sink_block: 0}
    q = deque([cfg.sink_block])
    while q:
        cur = q.popleft()
        for p in preds.get(cur, ()):
            if p not in dist:
                dist[p] = dist[cur] + 1
                q.append(p)
    penalty = max(dist.values(), default=0) + 1
    return {n: dist.get(n, penalty) for n in cfg.nodes}


def distance_penalty(distances: dict[BlockId, int]) -> int:
    finite = [d for d in distances.values()]
    return max(finite, default=0) if finite else 0


def max_distance(distances: dict[BlockId, int]) -> Fraction:
    """Sentinel distance for seeds whose trace covers no chain block."""
    return Fraction(max(distances.values(), default=0) + 1)


def seed_distance(feedback: ExecutionFeedback, distances: dict[BlockId, int]) -> Fraction:
    """Exact mean distance over the distinct chain blocks a run executed."""
    distinct = dict.fromkeys(b for b in feedback.trace if b in distances)
    hit = [distances[b] for b in distinct]
    if not hit:
        return max_distance(distances)
    return Fraction(sum(hit), len(hit))
