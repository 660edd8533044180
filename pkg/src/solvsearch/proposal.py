"""Topology proposal generation.

Context assembly keeps the prompt linear in path depth: the root guidance
plus one capped summary per ancestor, with sibling topologies attached as
negative constraints outside naive mode. Generators take a context and a
seed and return a 2-5 component topology:

- HeuristicGenerator: deterministic HSP-geometry ranking (host close to
  the target, leverage solvent separating from the protect layer along
  the dominant axis, optional boiling-point modifier);
- ScriptedGenerator: canned proposals for tests and oracles;
- the remote chat-endpoint client lives in `remote.py`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidProposal, NoFeasibleProposal
from .hsp import (
    MAX_COMPONENTS,
    MIN_COMPONENTS,
    HspVector,
    MaterialTarget,
    Solvent,
    SolventLibrary,
    hsp_distance,
)
from .planner import GlobalPlan, StrategyDirectives, apply_strategy
from .seeding import derive_seed

__all__ = [
    "SUMMARY_CHAR_CAP",
    "GenerationContext",
    "NegativeConstraint",
    "RootGuidance",
    "TopologyProposal",
    "build_context",
    "format_node_summary",
    "summary_topology",
    "validate_proposal",
    "heuristic_generate",
    "HeuristicGenerator",
    "ScriptedGenerator",
]

SUMMARY_CHAR_CAP = 280


@dataclass(frozen=True)
class RootGuidance:
    """Root-level plan as text for prompts plus structured directives."""

    text: str = ""
    directives: StrategyDirectives = field(default_factory=StrategyDirectives)
    strategy_mode: str = "balanced"


@dataclass(frozen=True)
class NegativeConstraint:
    topology: frozenset[str]
    rationale: str = ""


@dataclass(frozen=True)
class GenerationContext:
    root_plan: RootGuidance
    path_summaries: tuple[str, ...]
    negative_constraints: tuple[NegativeConstraint, ...] | None  # None iff naive mode
    strategy_mode: str


@dataclass(frozen=True)
class TopologyProposal:
    components: tuple[str, ...]
    rationale: str = ""
    declared_roles: dict = field(default_factory=dict)  # name -> host|leverage|modifier

    def topology(self) -> frozenset[str]:
        return frozenset(self.components)


def validate_proposal(proposal: TopologyProposal, library: SolventLibrary) -> TopologyProposal:
    n = len(proposal.components)
    if len(set(proposal.components)) != n:
        raise InvalidProposal(f"duplicate component in proposal {proposal.components}")
    if not MIN_COMPONENTS <= n <= MAX_COMPONENTS:
        raise InvalidProposal(f"proposal has {n} components, needs {MIN_COMPONENTS}..{MAX_COMPONENTS}")
    for name in proposal.components:
        if name not in library:
            raise InvalidProposal(f"unknown solvent {name!r} in proposal")
        if library.get(name).prohibited:
            raise InvalidProposal(f"prohibited solvent {name!r} in proposal")
    return proposal


def format_node_summary(components, reward: float, note: str) -> str:
    """Structured one-line node summary; parseable and capped at 280 chars."""
    head = f"topology={'+'.join(sorted(components))}; reward={reward:.2f}; "
    return (head + note)[:SUMMARY_CHAR_CAP]


def summary_topology(summary: str) -> frozenset[str] | None:
    """Recover the component set from a formatted node summary."""
    if not summary.startswith("topology="):
        return None
    head = summary.split(";", 1)[0][len("topology="):]
    names = [n for n in head.split("+") if n]
    return frozenset(names) if names else None


def build_context(path, siblings, plan, mode: str) -> GenerationContext:
    """Assemble the generation context for expanding the last node of `path`.

    `path` runs from the root; summaries cover every node after the root,
    in order, each truncated to the per-summary cap so context size stays
    linear in depth. Siblings become negative constraints unless the
    search mode is naive. `plan` may be a GlobalPlan, a RootGuidance, or
    None.
    """
    if isinstance(plan, RootGuidance):
        guidance = plan
    elif isinstance(plan, GlobalPlan):
        guidance = RootGuidance(
            text=plan.render_text(),
            directives=apply_strategy(plan, plan.strategy_mode),
            strategy_mode=plan.strategy_mode,
        )
    else:
        guidance = RootGuidance()

    summaries = tuple((node.summary or "")[:SUMMARY_CHAR_CAP] for node in path[1:])

    if mode == "naive":
        constraints = None
    else:
        constraints = tuple(
            NegativeConstraint(
                topology=frozenset(node.action),
                rationale=(node.summary or "")[:SUMMARY_CHAR_CAP],
            )
            for node in siblings
            if node.action
        )

    return GenerationContext(
        root_plan=guidance,
        path_summaries=summaries,
        negative_constraints=constraints,
        strategy_mode=guidance.strategy_mode,
    )


def _dominant_axis(target: MaterialTarget, protect: MaterialTarget) -> tuple[str, float]:
    """Axis along which the protect layer separates most from the target.

    The dispersion gap is doubled to mirror the factor-4 weighting inside
    the distance metric.
    """
    gaps = {
        "delta_d": 2.0 * (protect.hsp.delta_d - target.hsp.delta_d),
        "delta_p": protect.hsp.delta_p - target.hsp.delta_p,
        "delta_h": protect.hsp.delta_h - target.hsp.delta_h,
    }
    axis = max(gaps, key=lambda k: (abs(gaps[k]), k))
    return axis, gaps[axis]


def _axis_separation(s: Solvent, axis: str, gap: float, target: MaterialTarget) -> float:
    """Positive when the solvent pulls the mixture away from the protect
    layer along the separation axis; squashed to (-1, 1) so it stays
    comparable with the closeness term."""
    if gap == 0.0:
        return 0.0
    scale = 2.0 if axis == "delta_d" else 1.0
    value = getattr(s.hsp, axis) - getattr(target.hsp, axis)
    raw = -scale * value * math.copysign(1.0, gap)
    return raw / (1.0 + abs(raw))


def heuristic_generate(ctx: GenerationContext, library: SolventLibrary,
                       target: MaterialTarget, protect: MaterialTarget,
                       seed: int = 0, axis_weight: float = 0.5,
                       boost_bonus: float = 0.25) -> TopologyProposal:
    """Deterministic geometry-based proposal.

    Ranks solvents by closeness to the target (1/(1+Ra)) plus an
    axis-separation term away from the protect layer (weight
    `axis_weight`; both knobs are engineering choices). Walks host x
    leverage combinations in rank order, optionally adding a
    boiling-point modifier, skipping sibling topologies and exact
    ancestor repeats, and honoring the strategy directives in the
    context. The seed only breaks exact score ties.
    """
    directives = ctx.root_plan.directives
    pool = [s for s in library.non_prohibited() if s.name not in directives.exclude]
    if len(pool) < MIN_COMPONENTS:
        raise NoFeasibleProposal("exclusions left fewer than two candidate solvents")

    axis, gap = _dominant_axis(target, protect)
    boost_set = set(directives.boost)

    def closeness(s: Solvent) -> float:
        ra = hsp_distance(s.hsp, target.hsp)
        if directives.red_pre_slack is not None:
            # treat everything inside the slack sphere as equally close, so
            # separation and novelty drive the ordering
            slack_ra = directives.red_pre_slack * target.interaction_radius
            ra = max(ra, slack_ra)
        return 1.0 / (1.0 + ra)

    def tiebreak(s: Solvent) -> tuple:
        return (derive_seed(seed, s.name), s.name)

    scored = sorted(
        pool,
        key=lambda s: (
            -(closeness(s)
              + axis_weight * _axis_separation(s, axis, gap, target)
              + (boost_bonus if s.name in boost_set else 0.0)),
        ) + tiebreak(s),
    )
    # hosts must carry core solvency on their own (inside the target sphere);
    # fall back to the plain ranking if the library offers no such solvent
    hosts = [s for s in scored
             if hsp_distance(s.hsp, target.hsp) < target.interaction_radius]
    if not hosts:
        hosts = scored
    by_separation = sorted(
        pool, key=lambda s: (-_axis_separation(s, axis, gap, target),) + tiebreak(s)
    )

    forbidden: set[frozenset[str]] = set()
    for c in ctx.negative_constraints or ():
        forbidden.add(c.topology)
    for summary in ctx.path_summaries:
        topo = summary_topology(summary)
        if topo:
            forbidden.add(topo)

    def spread_ok(members: list[Solvent]) -> bool:
        if directives.require_bp_spread is None:
            return True
        bps = [s.boiling_point for s in members]
        if any(bp is None for bp in bps):
            return True  # cannot evaluate; leave it to the critic
        return max(bps) - min(bps) >= directives.require_bp_spread

    def protect_margin_ok(members: list[Solvent]) -> bool:
        if directives.min_est_red_post is None:
            return True
        k = len(members)
        mix = HspVector(
            sum(s.hsp.delta_d for s in members) / k,
            sum(s.hsp.delta_p for s in members) / k,
            sum(s.hsp.delta_h for s in members) / k,
        )
        est = hsp_distance(mix, protect.hsp) / protect.interaction_radius
        return est >= directives.min_est_red_post

    def pick_modifier(host: Solvent, lev: Solvent) -> Solvent | None:
        base_bps = [b for b in (host.boiling_point, lev.boiling_point) if b is not None]
        if not base_bps:
            return None
        for s in scored:
            if s.name in (host.name, lev.name) or s.boiling_point is None:
                continue
            if min(abs(s.boiling_point - b) for b in base_bps) >= 30.0:
                return s
        return None

    def finish(members: list[Solvent], roles: dict) -> TopologyProposal:
        names = tuple(s.name for s in members)
        host = members[0]
        rationale = (
            f"{host.name} hosts (Ra to target "
            f"{hsp_distance(host.hsp, target.hsp):.2f}); "
            f"{members[1].name} leverages {axis} away from the protect layer"
        )
        if len(members) > 2:
            rationale += f"; {members[2].name} extends the boiling-point gradient"
        return validate_proposal(
            TopologyProposal(components=names, rationale=rationale, declared_roles=roles),
            library,
        )

    backbones = [tuple(b) for b in directives.preferred_backbones]
    for names in backbones:
        if any(n not in library or library.get(n).prohibited or n in directives.exclude
               for n in names):
            continue
        members = [library.get(n) for n in names]
        topo = frozenset(names)
        if topo in forbidden or not spread_ok(members) or not protect_margin_ok(members):
            continue
        roles = {members[0].name: "host"}
        roles.update({s.name: "leverage" for s in members[1:]})
        return finish(members, roles)

    for host in hosts:
        for lev in by_separation:
            if lev.name == host.name:
                continue
            pair = [host, lev]
            modifier = pick_modifier(host, lev)
            options: list[list[Solvent]] = [pair]
            if modifier is not None:
                options.append(pair + [modifier])
            if directives.require_bp_spread is not None:
                options = [opt for opt in options if spread_ok(opt)]
                options.sort(key=len)  # prefer simpler formulations
            for members in options:
                topo = frozenset(s.name for s in members)
                if topo in forbidden or not protect_margin_ok(members):
                    continue
                roles = {host.name: "host", lev.name: "leverage"}
                if len(members) > 2:
                    roles[members[2].name] = "modifier"
                return finish(members, roles)
    raise NoFeasibleProposal("every candidate topology is excluded or constrained away")


class HeuristicGenerator:
    """Generator-protocol wrapper around `heuristic_generate`."""

    def __init__(self, library: SolventLibrary, target: MaterialTarget,
                 protect: MaterialTarget, axis_weight: float = 0.5,
                 boost_bonus: float = 0.25):
        self.library = library
        self.target = target
        self.protect = protect
        self.axis_weight = axis_weight
        self.boost_bonus = boost_bonus

    def propose(self, ctx: GenerationContext, seed: int = 0) -> TopologyProposal:
        return heuristic_generate(
            ctx, self.library, self.target, self.protect,
            seed=seed, axis_weight=self.axis_weight, boost_bonus=self.boost_bonus,
        )


class ScriptedGenerator:
    """Replays a fixed proposal sequence; records the contexts it saw."""

    def __init__(self, proposals, cycle: bool = False):
        self._items = list(proposals)
        self._cycle = cycle
        self._i = 0
        self.seen_contexts: list[GenerationContext] = []

    def propose(self, ctx: GenerationContext, seed: int = 0) -> TopologyProposal:
        self.seen_contexts.append(ctx)
        if self._i >= len(self._items):
            if not self._cycle or not self._items:
                raise NoFeasibleProposal("script exhausted")
            self._i = 0
        item = self._items[self._i]
        self._i += 1
        if isinstance(item, TopologyProposal):
            return item
        return TopologyProposal(components=tuple(item))
