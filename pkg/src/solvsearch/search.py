"""Sparse-state tree search over discrete solvent topologies.

Each node keeps only a lightweight tuple: the proposed topology, its
reward, visit count, accumulated value, and a capped one-line summary.
Full optimizer output and critic reports live in the trace, not the tree,
so per-node storage stays constant regardless of depth or iteration
count.

One iteration runs selection (UCB over children), expansion (context
assembly + generator proposal, with sibling topologies as negative
constraints outside naive mode), evaluation (ratio optimization,
engineering discretization, hybrid scoring), backpropagation, and memory
consolidation. In full mode a global plan is synthesized from memory
before the run and refreshed every ceil(T/3) iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .critic import CriticConfig, hybrid_score
from .errors import (
    ConfigError,
    DiscretizationInfeasible,
    DuplicateProposal,
    EngineError,
    ExhaustedTree,
    GeneratorFailure,
    HardConstraintViolation,
    InvalidProposal,
)
from .hsp import Formulation, MaterialTarget, SolventLibrary
from .planner import (
    CandidateRecord,
    MemoryStore,
    PlannerThresholds,
    apply_strategy,
    synthesize_plan,
)
from .proposal import RootGuidance, build_context, format_node_summary, validate_proposal
from .ratio.optimizer import (
    LossConfig,
    OptimizerConfig,
    optimize_ratios,
    simplify_recipe,
)
from .seeding import derive_seed

__all__ = [
    "SearchNode",
    "SearchConfig",
    "SearchTrace",
    "TraceEntry",
    "CandidateEvaluator",
    "select_leaf",
    "expand",
    "evaluate_candidate",
    "backpropagate",
    "run_search",
]

SEARCH_MODES = ("naive", "sibling_aware", "full")


@dataclass
class SearchNode:
    """Sparse node state: (action, reward, visits, value_sum, summary)."""

    action: tuple[str, ...] | None  # None only at the root
    parent: "SearchNode | None" = None
    depth: int = 0
    creation_index: int = 0
    reward: float = 0.0
    visits: int = 0
    value_sum: float = 0.0
    summary: str = ""
    children: list = field(default_factory=list)

    def topology(self) -> frozenset[str] | None:
        return frozenset(self.action) if self.action else None

    def mean_value(self) -> float:
        return self.value_sum / self.visits if self.visits else 0.0

    def to_dict(self, node_id: int, parent_id: int | None) -> dict:
        return {
            "id": node_id,
            "parent": parent_id,
            "action": sorted(self.action) if self.action else None,
            "reward": self.reward,
            "visits": self.visits,
            "value_sum": self.value_sum,
            "summary": self.summary,
            "depth": self.depth,
            "children": len(self.children),
        }


@dataclass(frozen=True)
class SearchConfig:
    max_iterations: int = 60
    max_children: int = 4
    exploration_constant: float = 1.414
    mode: str = "sibling_aware"
    seed: int = 0
    max_depth: int = 4
    failure_floor: float = 0.0
    generator_attempts: int = 3

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("search.max_iterations", "must be >= 1")
        if self.max_children < 1:
            raise ConfigError("search.max_children", "must be >= 1")
        if self.exploration_constant < 0:
            raise ConfigError("search.exploration_constant", "must be >= 0")
        if self.mode not in SEARCH_MODES:
            raise ConfigError("search.mode", f"must be one of {SEARCH_MODES}")
        if self.max_depth < 1:
            raise ConfigError("search.max_depth", "must be >= 1")
        if self.generator_attempts < 1:
            raise ConfigError("search.generator_attempts", "must be >= 1")


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    topology: tuple[str, ...]           # sorted component set
    components: tuple[str, ...] | None  # discretized order, None if not surfaced
    fractions: tuple[float, ...] | None
    reward: float
    pv_pass: bool
    verdicts: tuple[dict, ...]
    breakdown: dict

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "topology": list(self.topology),
            "components": list(self.components) if self.components else None,
            "fractions": list(self.fractions) if self.fractions else None,
            "reward": self.reward,
            "pv_pass": self.pv_pass,
            "verdicts": list(self.verdicts),
            "breakdown": self.breakdown,
        }


@dataclass
class SearchTrace:
    run_id: str
    mode: str
    seed: int
    evaluated: list[TraceEntry] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    tree_snapshot: list[dict] = field(default_factory=list)
    best: TraceEntry | None = None
    error: str | None = None

    def summary_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "mode": self.mode,
            "seed": self.seed,
            "iterations_evaluated": len(self.evaluated),
            "events": self.events,
            "best": self.best.to_dict() if self.best else None,
            "error": self.error,
            "tree": self.tree_snapshot,
        }


def _capacity(node: SearchNode, cfg: SearchConfig) -> int:
    return cfg.max_children if node.depth < cfg.max_depth else 0


def _exhausted(node: SearchNode, cfg: SearchConfig) -> bool:
    cap = _capacity(node, cfg)
    if len(node.children) < cap:
        return False
    return all(_exhausted(c, cfg) for c in node.children)


def select_leaf(root: SearchNode, cfg: SearchConfig) -> SearchNode:
    """Descend through fully expanded nodes by UCB; return the first node
    with spare child capacity.

    UCB(c) = Q(c)/N(c) + C * sqrt(ln N(v) / N(c)); unvisited children rank
    first, ties go to the earliest-created child. Raises ExhaustedTree
    when every reachable node is at capacity within the depth bound.
    """
    node = root
    while True:
        if len(node.children) < _capacity(node, cfg):
            return node
        viable = [c for c in node.children if not _exhausted(c, cfg)]
        if not viable:
            raise ExhaustedTree(
                f"no expandable node reachable (depth bound {cfg.max_depth})"
            )

        def ucb(c: SearchNode) -> float:
            if c.visits == 0:
                return math.inf
            explore = cfg.exploration_constant * math.sqrt(
                math.log(node.visits) / c.visits
            )
            return c.value_sum / c.visits + explore

        node = max(viable, key=lambda c: (ucb(c), -c.creation_index))


def expand(leaf: SearchNode, generator, cfg: SearchConfig,
           guidance: RootGuidance | None = None,
           library: SolventLibrary | None = None,
           iteration: int = 0) -> SearchNode:
    """Generate a proposal for `leaf` and attach it as a child (n=0, Q=0).

    The generator sees the reconstructed path context and, outside naive
    mode, the sibling topologies as negative constraints. Failures and
    duplicate proposals are retried up to cfg.generator_attempts times,
    then raised.
    """
    if len(leaf.children) >= _capacity(leaf, cfg):
        raise EngineError("expand() called on a node with no spare capacity")

    path = []
    node = leaf
    while node is not None:
        path.append(node)
        node = node.parent
    path.reverse()

    sibling_topos = {frozenset(c.action) for c in leaf.children if c.action}
    last_error: Exception | None = None
    for attempt in range(cfg.generator_attempts):
        ctx = build_context(path, leaf.children, guidance, cfg.mode)
        seed = derive_seed(cfg.seed, "proposal", iteration, attempt)
        try:
            proposal = generator.propose(ctx, seed)
            if library is not None:
                validate_proposal(proposal, library)
        except (GeneratorFailure, InvalidProposal) as exc:
            last_error = exc
            continue
        topo = frozenset(proposal.components)
        if cfg.mode != "naive" and topo in sibling_topos:
            last_error = DuplicateProposal(topo, attempt + 1)
            continue
        child = SearchNode(
            action=tuple(proposal.components),
            parent=leaf,
            depth=leaf.depth + 1,
            creation_index=len(leaf.children),
        )
        leaf.children.append(child)
        return child
    if isinstance(last_error, DuplicateProposal):
        raise DuplicateProposal(last_error.topology, cfg.generator_attempts)
    raise last_error if last_error else GeneratorFailure("generator produced nothing")


class CandidateEvaluator:
    """Optimize ratios, discretize, and score one topology.

    Constraint violations are data, not errors: the outcome carries the
    failure and the reward drops to the configured floor, and the
    candidate is never surfaced as a result.
    """

    def __init__(self, library: SolventLibrary, target: MaterialTarget,
                 protect: MaterialTarget,
                 loss_cfg: LossConfig = LossConfig(),
                 opt_cfg: OptimizerConfig = OptimizerConfig(),
                 critic_cfg: CriticConfig = CriticConfig(),
                 qualitative_backend=None,
                 failure_floor: float = 0.0,
                 increment: int = 5,
                 prune_below: float = 0.05):
        self.library = library
        self.target = target
        self.protect = protect
        self.loss_cfg = loss_cfg
        self.opt_cfg = opt_cfg
        self.critic_cfg = critic_cfg
        self.qualitative_backend = qualitative_backend
        self.failure_floor = failure_floor
        self.increment = increment
        self.prune_below = prune_below

    def evaluate(self, topology) -> "EvalOutcome":
        recipe = optimize_ratios(
            list(topology), self.library, self.target, self.protect,
            self.loss_cfg, self.opt_cfg,
        )
        loss_info = {"loss_total": recipe.final_loss, "loss_terms": recipe.loss_breakdown}
        try:
            formulation = simplify_recipe(
                recipe, self.library, self.target, self.protect, self.loss_cfg,
                increment=self.increment, prune_below=self.prune_below,
            )
        except (DiscretizationInfeasible, HardConstraintViolation) as exc:
            verdicts = tuple(
                {"name": name, "verdict": "fail", "note": str(exc)}
                for name in (exc.failed or ["discretization"])
            )
            return EvalOutcome(
                topology=tuple(topology),
                formulation=None,
                reward=self.failure_floor,
                report=None,
                pv_pass=False,
                verdicts=verdicts,
                breakdown=loss_info,
                failure=type(exc).__name__,
            )
        report = hybrid_score(
            formulation, self.library, self.target, self.protect,
            self.loss_cfg, self.critic_cfg, self.qualitative_backend,
        )
        reward = report.score_total if report.pv_pass else self.failure_floor
        breakdown = dict(loss_info)
        breakdown["score"] = {
            "score_pre": report.score_pre,
            "score_post": report.score_post,
            "score_physics": report.score_physics,
            "rubric_points": report.rubric_points,
            "score_qualitative": report.score_qualitative,
            "score_total": report.score_total,
        }
        return EvalOutcome(
            topology=tuple(topology),
            formulation=formulation,
            reward=reward,
            report=report,
            pv_pass=report.pv_pass,
            verdicts=tuple(c.to_dict() for c in report.verdicts),
            breakdown=breakdown,
            failure=None if report.pv_pass else "pv_fail",
        )


@dataclass(frozen=True)
class EvalOutcome:
    topology: tuple[str, ...]
    formulation: Formulation | None
    reward: float
    report: object
    pv_pass: bool
    verdicts: tuple[dict, ...]
    breakdown: dict
    failure: str | None


def evaluate_candidate(topology, evaluator: CandidateEvaluator) -> EvalOutcome:
    return evaluator.evaluate(topology)


def backpropagate(node: SearchNode, reward: float) -> None:
    """visits += 1 and value_sum += reward for the node and every ancestor."""
    cur = node
    while cur is not None:
        cur.visits += 1
        cur.value_sum += reward
        cur = cur.parent


def _snapshot(root: SearchNode) -> list[dict]:
    out: list[dict] = []
    stack: list[tuple[SearchNode, int | None]] = [(root, None)]
    next_id = 0
    while stack:
        node, parent_id = stack.pop()
        node_id = next_id
        next_id += 1
        out.append(node.to_dict(node_id, parent_id))
        for child in reversed(node.children):
            stack.append((child, node_id))
    return out


def _make_guidance(memory: MemoryStore, cfg: SearchConfig, strategy_mode: str,
                   thresholds: PlannerThresholds,
                   library: SolventLibrary) -> RootGuidance | None:
    if cfg.mode != "full":
        return None
    plan = synthesize_plan(memory.records(), strategy_mode, thresholds, library)
    return RootGuidance(
        text=plan.render_text(),
        directives=apply_strategy(plan, strategy_mode, library),
        strategy_mode=strategy_mode,
    )


def run_search(library: SolventLibrary, target: MaterialTarget,
               protect: MaterialTarget, generator, memory: MemoryStore,
               cfg: SearchConfig,
               evaluator: CandidateEvaluator | None = None,
               planner_thresholds: PlannerThresholds = PlannerThresholds(),
               strategy_mode: str = "balanced",
               run_id: str | None = None) -> SearchTrace:
    """Run the full search loop for cfg.max_iterations iterations.

    Deterministic given the seed and deterministic collaborators. Returns
    the complete trace; an unrecoverable collaborator failure is recorded
    on the trace (error field) with everything evaluated so far intact.
    """
    if evaluator is None:
        evaluator = CandidateEvaluator(library, target, protect,
                                       failure_floor=cfg.failure_floor)
    run_id = run_id or f"run-{cfg.seed}"
    trace = SearchTrace(run_id=run_id, mode=cfg.mode, seed=cfg.seed)
    root = SearchNode(action=None, depth=0)
    refresh_every = math.ceil(cfg.max_iterations / 3)
    guidance = _make_guidance(memory, cfg, strategy_mode, planner_thresholds, library)

    try:
        for t in range(1, cfg.max_iterations + 1):
            if cfg.mode == "full" and t > 1 and (t - 1) % refresh_every == 0:
                guidance = _make_guidance(memory, cfg, strategy_mode,
                                          planner_thresholds, library)
            try:
                leaf = select_leaf(root, cfg)
            except ExhaustedTree as exc:
                trace.events.append({"iteration": t, "event": "exhausted_tree",
                                     "detail": str(exc)})
                break
            try:
                child = expand(leaf, generator, cfg, guidance=guidance,
                               library=library, iteration=t)
            except (GeneratorFailure, InvalidProposal) as exc:
                trace.events.append({"iteration": t, "event": "skipped_expansion",
                                     "detail": str(exc)})
                continue

            outcome = evaluator.evaluate(child.action)
            child.reward = outcome.reward
            note = "pass" if outcome.pv_pass else (outcome.failure or "fail")
            child.summary = format_node_summary(child.action, outcome.reward, note)
            backpropagate(child, outcome.reward)

            memory.store(CandidateRecord(
                topology=tuple(sorted(outcome.topology)),
                fractions=outcome.formulation.fractions if outcome.formulation else (),
                score_total=outcome.reward,
                pv_pass=outcome.pv_pass,
                verdicts=outcome.verdicts,
                run_id=run_id,
                iteration=t,
            ))
            trace.evaluated.append(TraceEntry(
                iteration=t,
                topology=tuple(sorted(outcome.topology)),
                components=outcome.formulation.components if outcome.formulation else None,
                fractions=outcome.formulation.fractions if outcome.formulation else None,
                reward=outcome.reward,
                pv_pass=outcome.pv_pass,
                verdicts=outcome.verdicts,
                breakdown=outcome.breakdown,
            ))
    except EngineError as exc:
        trace.error = f"{type(exc).__name__}: {exc}"

    surfaced = [e for e in trace.evaluated if e.pv_pass and e.fractions is not None]
    if surfaced:
        trace.best = max(surfaced, key=lambda e: (e.reward, -e.iteration))
    trace.tree_snapshot = _snapshot(root)
    return trace
