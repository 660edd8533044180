"""Stateless hybrid candidate evaluation.

Two complementary signals with equal weight:

- a physics score anchored at 60 points for RED_pre = 0.70 and
  RED_post = 1.00, moving 1 point per 0.01 of RED in the favorable
  direction on each side, averaged into score_physics (unclamped: the
  scale is linear and clamping would silently reorder candidates);
- a qualitative 0-10 rubric (physical performance 0/3/5 plus an
  engineering dimension built from deductions), mapped onto the physics
  scale as points * 10.

Identical inputs always produce identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import SolvSearchError
from .hsp import (
    MAX_COMPONENTS,
    MIN_COMPONENTS,
    Formulation,
    MaterialTarget,
    SolventLibrary,
    mix_hsp,
    red,
)
from .ratio.optimizer import LossConfig

__all__ = [
    "CriticConfig",
    "CheckResult",
    "EvaluationReport",
    "physics_score",
    "rubric_score",
    "check_physical_validity",
    "hybrid_score",
]

PHYSICS_BASELINE = 60.0
RED_PRE_BASELINE = 0.70
RED_POST_BASELINE = 1.00
POINTS_PER_RED = 0.01
QUALITATIVE_SCALE = 10.0


@dataclass(frozen=True)
class CriticConfig:
    """Rubric thresholds and validity-check knobs."""

    excellent_red_pre: float = 0.73
    excellent_red_post: float = 1.1
    bp_spread_min: float = 30.0
    min_fraction: float = 0.05
    flash_point_min: float | None = None  # disabled unless configured


@dataclass(frozen=True)
class CheckResult:
    name: str
    verdict: str  # pass | warn | fail | not_evaluable
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "verdict": self.verdict, "note": self.note}


@dataclass(frozen=True)
class EvaluationReport:
    red_pre: float
    red_post: float
    score_pre: float
    score_post: float
    score_physics: float
    rubric_points: float  # int from the built-in rubric; remote critics may return halves
    rubric_ledger: tuple[dict, ...]
    score_qualitative: float
    score_total: float
    pv_pass: bool
    verdicts: tuple[CheckResult, ...]
    warnings: tuple[str, ...]
    events: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "red_pre": self.red_pre,
            "red_post": self.red_post,
            "score_pre": self.score_pre,
            "score_post": self.score_post,
            "score_physics": self.score_physics,
            "rubric_points": self.rubric_points,
            "rubric_ledger": list(self.rubric_ledger),
            "score_qualitative": self.score_qualitative,
            "score_total": self.score_total,
            "pv_pass": self.pv_pass,
            "verdicts": [c.to_dict() for c in self.verdicts],
            "warnings": list(self.warnings),
            "events": list(self.events),
        }


def physics_score(red_pre: float, red_post: float) -> tuple[float, float, float]:
    """(score_pre, score_post, score_physics) for a RED pair.

    score_pre gains 1 point per 0.01 that RED_pre sits below 0.70;
    score_post gains 1 point per 0.01 that RED_post sits above 1.00;
    score_physics is their mean. No clamping.
    """
    score_pre = PHYSICS_BASELINE + (RED_PRE_BASELINE - red_pre) / POINTS_PER_RED
    score_post = PHYSICS_BASELINE + (red_post - RED_POST_BASELINE) / POINTS_PER_RED
    return score_pre, score_post, (score_pre + score_post) / 2.0


def rubric_score(formulation: Formulation, red_pre: float, red_post: float,
                 library: SolventLibrary,
                 cfg: CriticConfig = CriticConfig()) -> tuple[int, list[dict]]:
    """Qualitative 0-10 rubric with a per-deduction ledger.

    Dimension 1 (physical performance): 5 if RED_pre < 0.73 and
    RED_post > 1.1, 0 if RED_pre > 1.0, else 3. Dimension 2
    (engineering, 5 minus deductions, floored at 0): -1 per warn-class
    solvent, -1 for any fraction under 5%, -1 for a missing boiling-point
    gradient when the data allows the call.
    """
    ledger: list[dict] = []
    solvents = formulation.resolve(library)

    if red_pre < cfg.excellent_red_pre and red_post > cfg.excellent_red_post:
        dim1 = 5
        note = "excellent: strong solvency with protected overcoat"
    elif red_pre > 1.0:
        dim1 = 0
        note = "fail: target layer predicted insoluble (RED_pre > 1.0)"
    else:
        dim1 = 3
        note = "pass: workable but not excellent"
    ledger.append({"item": "physical_performance", "points": dim1, "note": note})

    dim2 = 5
    for s in solvents:
        if s.safety_class == "warn":
            dim2 -= 1
            ledger.append({"item": "toxic_solvent", "points": -1, "note": s.name})
    if any(f < cfg.min_fraction for f in formulation.fractions):
        dim2 -= 1
        ledger.append({"item": "pseudo_mixture", "points": -1,
                       "note": f"component below {cfg.min_fraction:.0%}"})
    bps = [s.boiling_point for s in solvents]
    if any(bp is None for bp in bps):
        ledger.append({"item": "bp_gradient", "points": 0,
                       "note": "not evaluable: boiling point missing"})
    elif len(bps) >= 2 and (max(bps) - min(bps)) < cfg.bp_spread_min:
        dim2 -= 1
        ledger.append({"item": "bp_gradient", "points": -1,
                       "note": f"spread {max(bps) - min(bps):.0f} C < {cfg.bp_spread_min:.0f} C"})
    dim2 = max(dim2, 0)
    ledger.append({"item": "engineering_total", "points": dim2, "note": ""})

    return dim1 + dim2, ledger


def check_physical_validity(formulation: Formulation, library: SolventLibrary,
                            target: MaterialTarget, protect: MaterialTarget,
                            loss_cfg: LossConfig = LossConfig(),
                            cfg: CriticConfig = CriticConfig()) -> list[CheckResult]:
    """Per-constraint verdicts for the explicit validity rules.

    Hard checks: RED_pre bound, protect floor (with the conditional band
    [protect_conditional_floor, red_protect_min) passing as warn),
    sparsity 2-5, fraction floor, prohibited solvents, and the flash-point
    floor when configured. The boiling-point gradient is soft (warn only).
    Checks missing their data report not_evaluable.
    """
    mix = mix_hsp(formulation, library)
    red_pre = red(mix, target)
    red_post = red(mix, protect)
    solvents = formulation.resolve(library)
    checks: list[CheckResult] = []

    if red_pre < loss_cfg.red_target_max:
        checks.append(CheckResult("red_target_bound", "pass",
                                  f"RED_pre {red_pre:.4f} < {loss_cfg.red_target_max:g}"))
    else:
        checks.append(CheckResult("red_target_bound", "fail",
                                  f"RED_pre {red_pre:.4f} >= {loss_cfg.red_target_max:g}"))

    if red_post >= loss_cfg.red_protect_min:
        checks.append(CheckResult("red_protect_bound", "pass",
                                  f"RED_post {red_post:.4f} >= {loss_cfg.red_protect_min:g}"))
    elif red_post >= loss_cfg.protect_conditional_floor:
        checks.append(CheckResult("red_protect_bound", "warn",
                                  f"RED_post {red_post:.4f} in conditional band "
                                  f"[{loss_cfg.protect_conditional_floor:g}, {loss_cfg.red_protect_min:g})"))
    else:
        checks.append(CheckResult("red_protect_bound", "fail",
                                  f"RED_post {red_post:.4f} < {loss_cfg.protect_conditional_floor:g}"))

    n = len(formulation.components)
    if MIN_COMPONENTS <= n <= MAX_COMPONENTS:
        checks.append(CheckResult("sparsity", "pass", f"{n} components"))
    else:
        checks.append(CheckResult("sparsity", "fail",
                                  f"{n} components outside {MIN_COMPONENTS}..{MAX_COMPONENTS}"))

    low = [name for name, f in zip(formulation.components, formulation.fractions)
           if f < cfg.min_fraction]
    if low:
        checks.append(CheckResult("min_fraction", "fail",
                                  f"below {cfg.min_fraction:.0%}: {', '.join(low)}"))
    else:
        checks.append(CheckResult("min_fraction", "pass", ""))

    banned = [s.name for s in solvents if s.prohibited]
    if banned:
        checks.append(CheckResult("prohibited", "fail", ", ".join(banned)))
    else:
        checks.append(CheckResult("prohibited", "pass", ""))

    bps = [s.boiling_point for s in solvents]
    if any(bp is None for bp in bps):
        checks.append(CheckResult("bp_gradient", "not_evaluable", "boiling point missing"))
    elif len(bps) >= 2 and (max(bps) - min(bps)) < cfg.bp_spread_min:
        checks.append(CheckResult("bp_gradient", "warn",
                                  f"spread {max(bps) - min(bps):.0f} C < {cfg.bp_spread_min:.0f} C"))
    else:
        checks.append(CheckResult("bp_gradient", "pass", ""))

    if cfg.flash_point_min is None:
        checks.append(CheckResult("flash_point", "not_evaluable", "no floor configured"))
    else:
        fps = [(s.name, s.flash_point) for s in solvents]
        if any(fp is None for _, fp in fps):
            checks.append(CheckResult("flash_point", "not_evaluable", "flash point missing"))
        else:
            cold = [name for name, fp in fps if fp < cfg.flash_point_min]
            if cold:
                checks.append(CheckResult("flash_point", "fail",
                                          f"below {cfg.flash_point_min:g} C: {', '.join(cold)}"))
            else:
                checks.append(CheckResult("flash_point", "pass", ""))

    return checks


def hybrid_score(formulation: Formulation, library: SolventLibrary,
                 target: MaterialTarget, protect: MaterialTarget,
                 loss_cfg: LossConfig = LossConfig(),
                 cfg: CriticConfig = CriticConfig(),
                 qualitative_backend=None) -> EvaluationReport:
    """Full evaluation: RED pair, physics score, qualitative score, 0.5/0.5
    combination, and validity verdicts.

    `qualitative_backend`, when given, must expose
    `score(formulation, red_pre, red_post) -> (points_0_to_10, ledger)`;
    any backend exception falls back to the built-in rubric and is
    recorded as an event.
    """
    mix = mix_hsp(formulation, library)
    red_pre = red(mix, target)
    red_post = red(mix, protect)
    score_pre, score_post, score_phys = physics_score(red_pre, red_post)

    events: list[str] = []
    if qualitative_backend is not None:
        try:
            points, ledger = qualitative_backend.score(formulation, red_pre, red_post)
        except SolvSearchError as exc:
            events.append(f"qualitative backend failed, fell back to rubric: {exc}")
            points, ledger = rubric_score(formulation, red_pre, red_post, library, cfg)
    else:
        points, ledger = rubric_score(formulation, red_pre, red_post, library, cfg)

    score_qual = points * QUALITATIVE_SCALE
    total = 0.5 * score_phys + 0.5 * score_qual

    checks = check_physical_validity(formulation, library, target, protect, loss_cfg, cfg)
    pv_pass = all(c.verdict != "fail" for c in checks)

    warnings = [f"{c.name}: {c.note}" for c in checks if c.verdict == "warn"]
    warnings += [f"yellow warning: {entry['note']}" for entry in ledger
                 if entry["item"] == "toxic_solvent"]

    return EvaluationReport(
        red_pre=red_pre,
        red_post=red_post,
        score_pre=score_pre,
        score_post=score_post,
        score_physics=score_phys,
        rubric_points=points,
        rubric_ledger=tuple(ledger),
        score_qualitative=score_qual,
        score_total=total,
        pv_pass=pv_pass,
        verdicts=tuple(checks),
        warnings=tuple(warnings),
        events=tuple(events),
    )
