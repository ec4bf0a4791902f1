"""Directed greybox fuzzing of candidate gadget chains.

For each chain: build its property tree and value dictionary, seed the pool
with the all-defaults injection object, then repeatedly pick a seed
(favored seeds with high probability), give it energy from the distance-based
power schedule, and mutate one property region at a time. A run that reaches
the chain's sink call site confirms the chain and yields the proof-of-concept
object; exhausting the budget without a hit is a timeout; a chain whose
gadgets cannot be joined by field links at all is unlinkable.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .distance import build_chain_cfg, block_distances, max_distance, seed_distance
from .interp import DEFAULT_STEP_BUDGET, ExecutionFeedback, execute
from .model import Hierarchy, ProgramModel
from .proptree import (
    ObjectValue,
    ParamSeq,
    UnlinkableChain,
    build_property_tree,
    extract_dictionary,
    initial_params,
    materialize,
    mutate_params,
    su_generate,
)
from .taint import GadgetChain

DEFAULT_BUDGET_SECS = 120.0
DEFAULT_E_MAX = 64
DEFAULT_P_FAV = 0.8
DEFAULT_P_EXTRA = 0.1

VERDICT_REACHABLE = "Reachable"
VERDICT_TIMEOUT = "Timeout"
VERDICT_UNLINKABLE = "Unlinkable"

FEEDBACK_MODES = ("hybrid", "distance", "coverage")
MUTATION_MODES = ("structured", "random")


@dataclass(frozen=True)
class FuzzConfig:
    budget_secs: float = DEFAULT_BUDGET_SECS
    exec_budget: Optional[int] = None  # executions per chain; overrides wall clock
    rng_seed: int = 0
    step_budget: int = DEFAULT_STEP_BUDGET
    e_max: int = DEFAULT_E_MAX
    p_fav: float = DEFAULT_P_FAV
    p_extra: float = DEFAULT_P_EXTRA
    feedback: str = "hybrid"  # "hybrid" | "distance" | "coverage"
    mutation: str = "structured"  # "structured" | "random"
    structure_unaware: bool = False

    def __post_init__(self) -> None:
        if self.feedback not in FEEDBACK_MODES:
            raise ValueError(f"unknown feedback mode {self.feedback!r}")
        if self.mutation not in MUTATION_MODES:
            raise ValueError(f"unknown mutation mode {self.mutation!r}")


@dataclass
class Seed:
    params: ParamSeq
    obj: ObjectValue
    feedback: ExecutionFeedback
    distance: Fraction
    favored: bool = False

    @property
    def coverage(self) -> frozenset:
        return frozenset(self.feedback.covered_branches)


class SeedPool:
    """Two-level pool: favored seeds are picked with probability ``p_fav``.

    Distance-guided modes mark the minimum-distance seeds favored (coverage
    novelty only gates admission); the coverage-only ablation instead keeps
    the first seed covering each branch favored. Flags are recomputed on
    every admission.
    """

    def __init__(self, p_fav: float = DEFAULT_P_FAV, guided_by_distance: bool = True) -> None:
        self.p_fav = p_fav
        self.guided_by_distance = guided_by_distance
        self.seeds: list[Seed] = []

    def __len__(self) -> int:
        return len(self.seeds)

    def add(self, seed: Seed) -> None:
        self.seeds.append(seed)
        self._refresh_favored()

    def _refresh_favored(self) -> None:
        if not self.seeds:
            return
        if self.guided_by_distance:
            best = min(s.distance for s in self.seeds)
            for s in self.seeds:
                s.favored = s.distance == best
            return
        first_coverer: dict = {}
        for s in self.seeds:
            for br in s.coverage:
                first_coverer.setdefault(br, s)
        keep = {id(s) for s in first_coverer.values()}
        for s in self.seeds:
            s.favored = id(s) in keep

    def select(self, rng: random.Random) -> Seed:
        favored = [s for s in self.seeds if s.favored]
        others = [s for s in self.seeds if not s.favored]
        if favored and (not others or rng.random() < self.p_fav):
            return rng.choice(favored)
        return rng.choice(others)


def normalized_distance(d: Fraction, min_d: Fraction, max_d: Fraction) -> Fraction:
    """Min-max normalization of a seed distance; 1/2 when the range is empty."""
    if max_d == min_d:
        return Fraction(1, 2)
    return (d - min_d) / (max_d - min_d)


def energy(
    psi: Fraction,
    d: Fraction,
    min_d: Fraction,
    max_d: Fraction,
    e_max: int = DEFAULT_E_MAX,
) -> int:
    """Power schedule: energy = ceil(psi * (1 - d_norm) * e_max), at least 1."""
    d_norm = normalized_distance(d, min_d, max_d)
    p = psi * (1 - d_norm)
    return max(1, math.ceil(p * e_max))


def seed_psi(seed: Seed, total_branch_sides: int) -> Fraction:
    """Coverage weight: fraction of branch outcomes in the chain the seed hit.

    A chain whose gadgets have no branches at all weighs 1.
    """
    if total_branch_sides == 0:
        return Fraction(1)
    return Fraction(len(seed.coverage), total_branch_sides)


def count_branch_sides(program: ProgramModel, chain: GadgetChain) -> int:
    """Number of (branch statement, polarity) outcomes across chain gadgets."""
    total = 0
    for key in set(chain.methods):
        total += sum(1 for s in program.method(key).body if s.op == "branch")
    return 2 * total


@dataclass
class FuzzResult:
    chain: GadgetChain
    verdict: str
    poc: Optional[ObjectValue]
    executions: int
    elapsed_secs: float
    pool_size: int = 0
    min_distance: Optional[Fraction] = None
    executions_to_hit: Optional[int] = None


@dataclass
class _Campaign:
    """Mutable per-chain fuzzing state."""

    pool: SeedPool
    gadget_coverage: set = field(default_factory=set)
    min_distance: Fraction = Fraction(0)
    max_distance: Fraction = Fraction(0)
    executions: int = 0


def fuzz_chain(
    program: ProgramModel,
    hierarchy: Hierarchy,
    chain: GadgetChain,
    config: FuzzConfig = FuzzConfig(),
) -> FuzzResult:
    """Run one directed fuzzing campaign against a single candidate chain."""
    start = time.monotonic()
    rng = random.Random(f"{config.rng_seed}/{chain.describe()}")

    if config.structure_unaware:
        return _fuzz_unaware(program, chain, config, rng, start)

    try:
        tree = build_property_tree(chain, program, hierarchy)
    except UnlinkableChain:
        return FuzzResult(
            chain=chain,
            verdict=VERDICT_UNLINKABLE,
            poc=None,
            executions=0,
            elapsed_secs=time.monotonic() - start,
        )
    dictionary = extract_dictionary(chain, program)
    cfg = build_chain_cfg(program, chain)
    distances = block_distances(cfg)
    sentinel = max_distance(distances)
    branch_sides = count_branch_sides(program, chain)

    state = _Campaign(
        pool=SeedPool(p_fav=config.p_fav, guided_by_distance=config.feedback != "coverage")
    )
    state.min_distance = sentinel
    state.max_distance = Fraction(0)

    def out_of_budget() -> bool:
        if config.exec_budget is not None:
            return state.executions >= config.exec_budget
        return time.monotonic() - start > config.budget_secs

    def run(params: ParamSeq) -> tuple[Seed, ObjectValue]:
        obj = materialize(tree, params, dictionary, hierarchy)
        fb = execute(program, chain, obj, step_budget=config.step_budget)
        state.executions += 1
        d = seed_distance(fb, distances)
        state.min_distance = min(state.min_distance, d)
        state.max_distance = max(state.max_distance, d)
        return Seed(params=params, obj=obj, feedback=fb, distance=d), obj

    def finish(verdict: str, poc: Optional[ObjectValue], hit_at: Optional[int]) -> FuzzResult:
        return FuzzResult(
            chain=chain,
            verdict=verdict,
            poc=poc,
            executions=state.executions,
            elapsed_secs=time.monotonic() - start,
            pool_size=len(state.pool),
            min_distance=state.min_distance if state.executions else None,
            executions_to_hit=hit_at,
        )

    seed, obj = run(initial_params())
    if seed.feedback.sink_hit:
        return finish(VERDICT_REACHABLE, obj, state.executions)
    state.pool.add(seed)
    state.gadget_coverage |= seed.coverage

    use_distance = config.feedback in ("hybrid", "distance")
    use_coverage = config.feedback in ("hybrid", "coverage")

    while not out_of_budget():
        parent = state.pool.select(rng)
        if use_distance:
            psi = seed_psi(parent, branch_sides)
            budget = energy(
                psi, parent.distance, state.min_distance, state.max_distance, config.e_max
            )
        else:
            budget = max(1, config.e_max // 2)
        for _ in range(budget):
            if out_of_budget():
                break
            stuck = parent.feedback.last_branch_owner or chain.source[0]
            if config.mutation == "random":
                # random-mutation ablation: regenerate the whole object
                child_params = mutate_params(
                    tree,
                    parent.params,
                    dictionary,
                    hierarchy,
                    rng,
                    stuck_class=None,
                    p_extra=0.0,
                )
            else:
                child_params = mutate_params(
                    tree,
                    parent.params,
                    dictionary,
                    hierarchy,
                    rng,
                    stuck_class=stuck,
                    p_extra=config.p_extra,
                )
            child, child_obj = run(child_params)
            if child.feedback.sink_hit:
                return finish(VERDICT_REACHABLE, child_obj, state.executions)
            admit = False
            if use_distance and child.distance < min(s.distance for s in state.pool.seeds):
                admit = True
            if use_coverage and not (child.coverage <= state.gadget_coverage):
                admit = True
            if admit:
                state.pool.add(child)
                state.gadget_coverage |= child.coverage

    return finish(VERDICT_TIMEOUT, None, None)


def _fuzz_unaware(
    program: ProgramModel,
    chain: GadgetChain,
    config: FuzzConfig,
    rng: random.Random,
    start: float,
) -> FuzzResult:
    """Structure-unaware ablation: blind object generation, no guidance."""
    executions = 0

    def out_of_budget() -> bool:
        if config.exec_budget is not None:
            return executions >= config.exec_budget
        return time.monotonic() - start > config.budget_secs

    while not out_of_budget():
        obj, _ = su_generate(chain.source[0], program, rng)
        fb = execute(program, chain, obj, step_budget=config.step_budget)
        executions += 1
        if fb.sink_hit:
            return FuzzResult(
                chain=chain,
                verdict=VERDICT_REACHABLE,
                poc=obj,
                executions=executions,
                elapsed_secs=time.monotonic() - start,
                executions_to_hit=executions,
            )
    return FuzzResult(
        chain=chain,
        verdict=VERDICT_TIMEOUT,
        poc=None,
        executions=executions,
        elapsed_secs=time.monotonic() - start,
    )


def fuzz_chains(
    program: ProgramModel,
    hierarchy: Hierarchy,
    chains: list[GadgetChain],
    config: FuzzConfig = FuzzConfig(),
) -> list[FuzzResult]:
    """Fuzz each candidate chain in turn, stopping a chain once confirmed."""
    return [fuzz_chain(program, hierarchy, chain, config) for chain in chains]
