"""Mixing-ratio optimization on the volume-fraction simplex.

Fractions are parameterized by unconstrained logits through a softmax, so
plain gradient descent natively preserves the simplex constraints. The
loss combines thermodynamic selectivity, hinge penalties for RED bounds,
a swelling guard, kinetics proxies, and an entropy sparsity term (see
`_kernel_py` for the formulas). After optimization, recipes are
discretized to manufacturing increments and re-checked against the hard
constraints.
"""

from __future__ import annotations

import math
import random
from array import array
from dataclasses import dataclass, field, replace

from ..errors import (
    ConfigError,
    DiscretizationInfeasible,
    HardConstraintViolation,
    MissingKineticsData,
    NonFiniteLoss,
    UnknownSolvent,
)
from ..hsp import (
    MAX_COMPONENTS,
    MIN_COMPONENTS,
    Formulation,
    MaterialTarget,
    SolventLibrary,
    mix_hsp,
    red,
)
from . import _packing as P
from .kernels import eval_loss_grad

__all__ = [
    "RatioParams",
    "LossConfig",
    "OptimizerConfig",
    "OptimizedRecipe",
    "softmax_fractions",
    "loss_total",
    "loss_gradient",
    "optimize_ratios",
    "simplify_recipe",
]

MAX_HALVINGS = 20


@dataclass(frozen=True)
class RatioParams:
    """Unconstrained logits, one per component of the active topology."""

    logits: tuple[float, ...]

    def __post_init__(self):
        if not self.logits:
            raise ConfigError("logits", "must be non-empty")
        if not all(math.isfinite(v) for v in self.logits):
            raise ConfigError("logits", "must all be finite")


@dataclass(frozen=True)
class LossConfig:
    """Loss weights and thresholds.

    Paper-backed values: the swelling threshold 0.55 and the RED hard
    bound 1.0 for the target; red_protect_min = 1.0 expresses the
    protect-layer safe zone in RED units. Everything else (weights,
    epsilon, caps) is an engineering default, overridable in the run
    config.
    """

    epsilon: float = 1e-6
    omega_diff: float = 0.1
    omega_swell: float = 1.0
    swelling_threshold: float = 0.55
    red_target_max: float = 1.0
    red_protect_min: float = 1.0
    # conditional-pass floor for the protect RED: below this is a hard fail,
    # [floor, red_protect_min) passes with a warning
    protect_conditional_floor: float = 0.8
    hinge_weight_target: float = 10.0
    hinge_weight_protect: float = 10.0
    alpha_vm: float = 0.0
    v_max: float = 150.0
    alpha_bp: float = 0.0
    t_max: float = 200.0
    role_thresholds: dict = field(default_factory=dict)  # role -> (tau, beta)
    gamma: float = 0.02

    def __post_init__(self):
        weights = {
            "omega_diff": self.omega_diff,
            "omega_swell": self.omega_swell,
            "hinge_weight_target": self.hinge_weight_target,
            "hinge_weight_protect": self.hinge_weight_protect,
            "alpha_vm": self.alpha_vm,
            "alpha_bp": self.alpha_bp,
            "gamma": self.gamma,
        }
        for name, v in weights.items():
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"loss.{name}", f"must be >= 0, got {v!r}")
        if not self.epsilon > 0:
            raise ConfigError("loss.epsilon", "must be > 0")
        if not 0 < self.swelling_threshold < self.red_target_max:
            raise ConfigError(
                "loss.swelling_threshold",
                "must satisfy 0 < swelling_threshold < red_target_max",
            )
        if not 0 < self.protect_conditional_floor <= self.red_protect_min:
            raise ConfigError(
                "loss.protect_conditional_floor",
                "must lie in (0, red_protect_min]",
            )
        for role, pair in self.role_thresholds.items():
            tau, beta = pair
            if beta < 0 or tau < 0:
                raise ConfigError(f"loss.role_thresholds.{role}", "tau and beta must be >= 0")


@dataclass(frozen=True)
class OptimizerConfig:
    max_steps: int = 400
    learning_rate: float = 0.2
    convergence_tol: float = 1e-10
    init_mode: str = "zeros"  # "zeros" | "jitter"
    seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise ConfigError("optimizer.max_steps", "must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("optimizer.learning_rate", "must be > 0")
        if self.convergence_tol < 0:
            raise ConfigError("optimizer.convergence_tol", "must be >= 0")
        if self.init_mode not in ("zeros", "jitter"):
            raise ConfigError("optimizer.init_mode", "must be 'zeros' or 'jitter'")


@dataclass(frozen=True)
class OptimizedRecipe:
    """Continuous (pre-discretization) optimizer output."""

    formulation: Formulation
    final_loss: float
    loss_breakdown: dict
    steps_used: int
    converged: bool
    loss_trace: tuple[float, ...]


def softmax_fractions(params: RatioParams) -> tuple[float, ...]:
    """Map logits to strictly positive fractions summing to 1.

    Max-subtraction keeps the exponentials in range for any finite logits;
    shifted exponents are floored at -708 so extreme spreads cannot
    underflow a fraction to exact zero.
    """
    logits = params.logits
    m = max(logits)
    exps = [math.exp(max(v - m, -708.0)) for v in logits]
    z = sum(exps)
    return tuple(e / z for e in exps)


class _Problem:
    """Packed buffers for one topology, reused across kernel calls."""

    def __init__(self, topology: list[str], library: SolventLibrary,
                 target: MaterialTarget, protect: MaterialTarget, cfg: LossConfig):
        solvents = [library.get(name) for name in topology]
        n = len(solvents)
        self.n = n
        self.topology = tuple(topology)
        self.dd = array("d", (s.hsp.delta_d for s in solvents))
        self.dp = array("d", (s.hsp.delta_p for s in solvents))
        self.dh = array("d", (s.hsp.delta_h for s in solvents))

        if cfg.alpha_vm > 0:
            missing = [s.name for s in solvents if s.molar_volume is None]
            if missing:
                raise MissingKineticsData("molar_volume", missing)
        if cfg.alpha_bp > 0:
            missing = [s.name for s in solvents if s.boiling_point is None]
            if missing:
                raise MissingKineticsData("boiling_point", missing)
        self.vm = array("d", ((s.molar_volume if s.molar_volume is not None else math.nan)
                              for s in solvents))
        self.tb = array("d", ((s.boiling_point if s.boiling_point is not None else math.nan)
                              for s in solvents))

        active_roles = sorted(
            (role, tau_beta) for role, tau_beta in cfg.role_thresholds.items()
            if tau_beta[1] > 0
        )
        self.role_tau = array("d", (tb_[0] for _, tb_ in active_roles))
        self.role_beta = array("d", (tb_[1] for _, tb_ in active_roles))
        mask = array("d", [0.0] * (len(active_roles) * n))
        for k, (role, _) in enumerate(active_roles):
            for i, s in enumerate(solvents):
                if role in s.role_tags:
                    mask[k * n + i] = 1.0
        self.role_mask = mask

        scal = array("d", [0.0] * P.N_SCAL)
        scal[P.S_T_DD], scal[P.S_T_DP], scal[P.S_T_DH] = target.hsp.as_tuple()
        scal[P.S_T_R0] = target.interaction_radius
        scal[P.S_P_DD], scal[P.S_P_DP], scal[P.S_P_DH] = protect.hsp.as_tuple()
        scal[P.S_P_R0] = protect.interaction_radius
        scal[P.S_EPS] = cfg.epsilon
        scal[P.S_WDIFF] = cfg.omega_diff
        scal[P.S_WSWELL] = cfg.omega_swell
        scal[P.S_SWTHR] = cfg.swelling_threshold
        scal[P.S_REDMAX] = cfg.red_target_max
        scal[P.S_REDMIN] = cfg.red_protect_min
        scal[P.S_W1] = cfg.hinge_weight_target
        scal[P.S_W2] = cfg.hinge_weight_protect
        scal[P.S_AVM] = cfg.alpha_vm
        scal[P.S_VMAX] = cfg.v_max
        scal[P.S_ABP] = cfg.alpha_bp
        scal[P.S_TMAX] = cfg.t_max
        scal[P.S_GAMMA] = cfg.gamma
        self.scal = scal

        self._phi = array("d", [0.0] * n)
        self._grad = array("d", [0.0] * n)
        self._terms = array("d", [0.0] * P.N_TERMS)

    def evaluate(self, theta) -> tuple[float, tuple[float, ...], tuple[float, ...], tuple[float, ...]]:
        """Returns (loss, terms, grad, phi) for the given logits."""
        loss = eval_loss_grad(
            theta, self.dd, self.dp, self.dh, self.vm, self.tb,
            self.role_beta, self.role_tau, self.role_mask, self.scal,
            self._phi, self._grad, self._terms,
        )
        return loss, tuple(self._terms), tuple(self._grad), tuple(self._phi)


def _breakdown(terms: tuple[float, ...]) -> dict:
    return dict(zip(P.TERM_NAMES, terms))


def loss_total(params: RatioParams, topology: list[str], library: SolventLibrary,
               target: MaterialTarget, protect: MaterialTarget,
               cfg: LossConfig) -> tuple[float, dict]:
    problem = _Problem(list(topology), library, target, protect, cfg)
    loss, terms, _, _ = problem.evaluate(array("d", params.logits))
    return loss, _breakdown(terms)


def loss_gradient(params: RatioParams, topology: list[str], library: SolventLibrary,
                  target: MaterialTarget, protect: MaterialTarget,
                  cfg: LossConfig) -> list[float]:
    problem = _Problem(list(topology), library, target, protect, cfg)
    _, _, grad, _ = problem.evaluate(array("d", params.logits))
    return list(grad)


def _initial_logits(n: int, opt_cfg: OptimizerConfig) -> array:
    theta = array("d", [0.0] * n)
    if opt_cfg.init_mode == "jitter":
        rng = random.Random(opt_cfg.seed)
        for i in range(n):
            theta[i] = rng.uniform(-0.01, 0.01)
    return theta


def optimize_ratios(topology: list[str], library: SolventLibrary,
                    target: MaterialTarget, protect: MaterialTarget,
                    loss_cfg: LossConfig, opt_cfg: OptimizerConfig) -> OptimizedRecipe:
    """Gradient descent on logits with a backtracking halving rule.

    A step is accepted only if it does not increase the loss (up to 20
    halvings of the step size), so the recorded loss trace is
    non-increasing. Stops on |delta loss| < convergence_tol, on a fully
    stalled line search, or after max_steps.
    """
    topology = list(topology)
    if not 1 <= len(topology) <= MAX_COMPONENTS:
        raise ConfigError("topology", f"needs 1..{MAX_COMPONENTS} components, got {len(topology)}")
    problem = _Problem(topology, library, target, protect, loss_cfg)
    n = problem.n

    theta = _initial_logits(n, opt_cfg)
    loss, terms, grad, phi = problem.evaluate(theta)
    if not math.isfinite(loss):
        raise NonFiniteLoss(0)
    trace = [loss]
    converged = False
    steps = 0

    for step in range(1, opt_cfg.max_steps + 1):
        lr = opt_cfg.learning_rate
        accepted = None
        for _ in range(MAX_HALVINGS + 1):
            cand = array("d", (theta[i] - lr * grad[i] for i in range(n)))
            c_loss, c_terms, c_grad, c_phi = problem.evaluate(cand)
            if not math.isfinite(c_loss):
                raise NonFiniteLoss(step)
            if c_loss <= loss:
                accepted = (cand, c_loss, c_terms, c_grad, c_phi)
                break
            lr *= 0.5
        if accepted is None:
            converged = True  # line search stalled: no non-increasing step exists
            break
        delta = loss - accepted[1]
        theta, loss, terms, grad, phi = accepted
        trace.append(loss)
        steps = step
        if delta < opt_cfg.convergence_tol:
            converged = True
            break

    formulation = Formulation(components=tuple(topology), fractions=phi)
    return OptimizedRecipe(
        formulation=formulation,
        final_loss=loss,
        loss_breakdown=_breakdown(terms),
        steps_used=steps,
        converged=converged,
        loss_trace=tuple(trace),
    )


def _largest_remainder_units(fractions: list[float], units_total: int) -> list[int]:
    """Round fractions to integer units keeping the exact total.

    Floors (with an epsilon guard so exact multiples are stable), then
    hands remaining units to the largest remainders; ties go to the lower
    index, which keeps the result deterministic.
    """
    raw = [f * units_total for f in fractions]
    units = [math.floor(r + 1e-9) for r in raw]
    remainder = [r - u for r, u in zip(raw, units)]
    short = units_total - sum(units)
    order = sorted(range(len(fractions)), key=lambda i: (-remainder[i], i))
    for i in range(short):
        units[order[i % len(order)]] += 1
    return units


def simplify_recipe(recipe, library: SolventLibrary, target: MaterialTarget,
                    protect: MaterialTarget, loss_cfg: LossConfig,
                    increment: int = 5, prune_below: float = 0.05) -> Formulation:
    """Engineering discretization of an optimized recipe.

    Prunes trace components below `prune_below`, renormalizes, rounds to
    `increment`-percent steps via largest remainder, then re-checks the
    hard constraints on the discretized recipe. Structural failures
    (component forced under the floor, sparsity bound) raise
    DiscretizationInfeasible; RED-bound failures raise
    HardConstraintViolation. Accepts an OptimizedRecipe or a bare
    Formulation; idempotent on already-discretized recipes.
    """
    formulation = recipe.formulation if isinstance(recipe, OptimizedRecipe) else recipe
    if not isinstance(increment, int) or increment <= 0 or 100 % increment != 0:
        raise ConfigError("increment", f"must be a positive divisor of 100, got {increment!r}")
    units_total = 100 // increment

    kept = [(name, f) for name, f in zip(formulation.components, formulation.fractions)
            if f >= prune_below]
    if not kept:
        raise DiscretizationInfeasible("all components fall below the pruning floor")
    names = [n for n, _ in kept]
    total = math.fsum(f for _, f in kept)
    renorm = [f / total for _, f in kept]

    units = _largest_remainder_units(renorm, units_total)
    fractions = [u / units_total for u in units]

    floor_breaches = [n for n, f in zip(names, fractions) if f < prune_below - 1e-12]
    partial = None
    survivors = [(n, f) for n, f in zip(names, fractions) if f > 0]
    if survivors:
        surv_total = math.fsum(f for _, f in survivors)
        partial = Formulation(
            components=tuple(n for n, _ in survivors),
            fractions=tuple(f / surv_total for _, f in survivors),
        )
    if floor_breaches:
        raise DiscretizationInfeasible(
            f"rounding drove component(s) below {prune_below:g}: {', '.join(floor_breaches)}",
            formulation=partial,
            failed=["min_fraction"],
        )
    if not MIN_COMPONENTS <= len(names) <= MAX_COMPONENTS:
        raise DiscretizationInfeasible(
            f"sparsity bound {MIN_COMPONENTS}..{MAX_COMPONENTS} violated with {len(names)} component(s)",
            formulation=partial,
            failed=["sparsity"],
        )

    result = Formulation(components=tuple(names), fractions=tuple(fractions))

    mix = mix_hsp(result, library)
    red_t = red(mix, target)
    red_p = red(mix, protect)
    failed = []
    if not red_t < loss_cfg.red_target_max:
        failed.append("red_target")
    if red_p < loss_cfg.protect_conditional_floor:
        failed.append("red_protect")
    if failed:
        raise HardConstraintViolation(failed, formulation=result)
    return result
