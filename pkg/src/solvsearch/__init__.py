"""Solvent formulation discovery engine.

Discrete tree search over solvent subsets coupled with differentiable,
physics-constrained optimization of mixing ratios, hybrid physics+rubric
scoring, memory-driven planning, and diversity metrics.
"""

from .critic import EvaluationReport, check_physical_validity, hybrid_score, physics_score, rubric_score
from .hsp import (
    Formulation,
    HspVector,
    MaterialTarget,
    Solvent,
    SolventLibrary,
    hsp_distance,
    load_library,
    mix_hsp,
    red,
    shipped_library_path,
)
from .metrics import DiversityReport, compute_diversity, run_ablation
from .planner import CandidateRecord, GlobalPlan, MemoryStore, apply_strategy, synthesize_plan
from .proposal import GenerationContext, HeuristicGenerator, TopologyProposal, build_context
from .ratio import (
    LossConfig,
    OptimizedRecipe,
    OptimizerConfig,
    RatioParams,
    loss_gradient,
    loss_total,
    optimize_ratios,
    simplify_recipe,
    softmax_fractions,
)
from .search import CandidateEvaluator, SearchConfig, SearchTrace, run_search

__version__ = "0.1.0"
