"""Run configuration: one TOML file with sections, plus flag overrides.

Every tunable lives here with its default; keys outside the schema fail
parsing with the offending dotted path. `config_reference()` renders the
full key list with defaults and marks which values are anchored in the
method itself versus engineering defaults of this implementation.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .critic import CriticConfig
from .errors import ConfigError
from .hsp import (
    DEFAULT_PROHIBITED,
    HspVector,
    MaterialTarget,
    SolventLibrary,
    load_library,
    shipped_library_path,
)
from .planner import STRATEGY_MODES, PlannerThresholds
from .ratio.optimizer import LossConfig, OptimizerConfig
from .remote import RemoteConfig
from .search import SearchConfig

__all__ = ["RunConfig", "load_run_config", "config_reference", "DEFAULT_TARGET", "DEFAULT_PROTECT"]

# Default materials: the pre-development resist layer to dissolve and the
# post-development layer to protect.
DEFAULT_TARGET = {"name": "target_layer", "hsp": [18.27, 7.11, 8.20], "r0": 6.28}
DEFAULT_PROTECT = {"name": "protect_layer", "hsp": [17.95, 11.47, 14.24], "r0": 8.81}

_NUM = (int, float)

# section -> key -> (types, default, anchored-in-method, help)
SCHEMA: dict = {
    "library": {
        "path": ((str,), "", False, "library CSV path; empty = shipped data file"),
        "prohibited": ((list,), list(DEFAULT_PROHIBITED), True,
                       "strictly banned solvents (authoritative for safety_class)"),
        "subset": ((list,), [], False, "restrict the run to these solvent names; empty = all"),
    },
    "materials.target": {
        "name": ((str,), DEFAULT_TARGET["name"], False, "label for reports"),
        "hsp": ((list,), DEFAULT_TARGET["hsp"], True, "target layer HSP triplet (MPa^0.5)"),
        "r0": (_NUM, DEFAULT_TARGET["r0"], True, "target interaction radius R0"),
    },
    "materials.protect": {
        "name": ((str,), DEFAULT_PROTECT["name"], False, "label for reports"),
        "hsp": ((list,), DEFAULT_PROTECT["hsp"], True, "protect layer HSP triplet (MPa^0.5)"),
        "r0": (_NUM, DEFAULT_PROTECT["r0"], True, "protect interaction radius R0"),
    },
    "search": {
        "max_iterations": ((int,), 60, False, "iteration budget T"),
        "max_children": ((int,), 4, False, "max children per node K"),
        "exploration_constant": (_NUM, 1.414, False, "UCB exploration constant C"),
        "mode": ((str,), "sibling_aware", False, "naive | sibling_aware | full"),
        "seed": ((int,), 0, False, "master seed; all randomness derives from it"),
        "max_depth": ((int,), 4, False, "tree depth bound"),
        "failure_floor": (_NUM, 0.0, False, "reward for constraint-violating candidates"),
        "generator_attempts": ((int,), 3, False, "proposal retries before skipping an iteration"),
    },
    "loss": {
        "epsilon": (_NUM, 1e-6, False, "stabilizer in the ratio denominator and entropy log"),
        "omega_diff": (_NUM, 0.1, False, "weight on the absolute distance separation term"),
        "omega_swell": (_NUM, 1.0, False, "weight on the swelling-risk hinge"),
        "swelling_threshold": (_NUM, 0.55, True, "RED floor under which swelling risk is penalized"),
        "red_target_max": (_NUM, 1.0, True, "hard RED bound against the target layer"),
        "red_protect_min": (_NUM, 1.0, True, "safe-zone RED bound for the protect layer"),
        "protect_conditional_floor": (_NUM, 0.8, True,
                                      "below this protect RED is a hard fail; the band up to red_protect_min passes with warning"),
        "hinge_weight_target": (_NUM, 10.0, False, "penalty weight on the target RED hinge"),
        "hinge_weight_protect": (_NUM, 10.0, False, "penalty weight on the protect RED hinge"),
        "alpha_vm": (_NUM, 0.0, False, "weight on the molar-volume cap (0 = off)"),
        "v_max": (_NUM, 150.0, False, "molar-volume cap (cm^3/mol)"),
        "alpha_bp": (_NUM, 0.0, False, "weight on the boiling-point cap (0 = off)"),
        "t_max": (_NUM, 200.0, False, "boiling-point cap (deg C)"),
        "gamma": (_NUM, 0.02, False, "entropy sparsity weight"),
    },
    "loss.role_thresholds": None,  # free-form: role -> [tau, beta]
    "optimizer": {
        "max_steps": ((int,), 400, False, "gradient step budget"),
        "learning_rate": (_NUM, 0.2, False, "initial step size (backtracking halves it)"),
        "convergence_tol": (_NUM, 1e-10, False, "stop when the loss improvement drops below this"),
        "init_mode": ((str,), "zeros", False, "zeros | jitter (seeded +-0.01 logit noise)"),
    },
    "critic": {
        "excellent_red_pre": (_NUM, 0.73, True, "rubric excellence bound on target RED"),
        "excellent_red_post": (_NUM, 1.1, True, "rubric excellence bound on protect RED"),
        "bp_spread_min": (_NUM, 30.0, False, "boiling-point gradient wanted across components (deg C)"),
        "min_fraction": (_NUM, 0.05, True, "pseudo-mixture floor"),
        "flash_point_min": (_NUM, -1.0, False, "flash-point floor in deg C; negative = disabled"),
        "qualitative_backend": ((str,), "rubric", False, "rubric | remote"),
    },
    "remote": {
        "base_url": ((str,), "", False, "chat endpoint base URL"),
        "model": ((str,), "", False, "model name string"),
        "auth_env": ((str,), "SOLVSEARCH_API_TOKEN", False, "env var holding the bearer token"),
        "timeout_s": (_NUM, 30.0, False, "request timeout"),
        "max_retries": ((int,), 2, False, "transport retry budget"),
    },
    "planner": {
        "strategy_mode": ((str,), "balanced", False, "balanced | innovation | green | engineering"),
        "champion_min": (_NUM, 85.0, True, "champion band floor (total scale; rubric 9 x10 scale mapping)"),
        "yellow_min": (_NUM, 75.0, True, "yellow band floor (total scale)"),
        "kill_below": (_NUM, 60.0, True, "kill band ceiling (total scale)"),
    },
    "simplify": {
        "increment": ((int,), 5, True, "manufacturing increment in percent"),
        "prune_below": (_NUM, 0.05, True, "trace-component pruning floor"),
    },
    "output": {
        "dir": ((str,), "runs", False, "output directory for traces and reports"),
    },
}


@dataclass
class RunConfig:
    library: SolventLibrary
    target: MaterialTarget
    protect: MaterialTarget
    search: SearchConfig
    loss: LossConfig
    optimizer: OptimizerConfig
    critic: CriticConfig
    qualitative_backend: str
    remote: RemoteConfig | None
    planner_thresholds: PlannerThresholds
    strategy_mode: str
    increment: int
    prune_below: float
    output_dir: str
    effective: dict  # fully-resolved key/value tree
    run_id: str


def _effective_tree(raw: dict, path_prefix: str = "") -> dict:
    """Merge raw values over schema defaults, rejecting unknown keys."""
    effective: dict = {}
    for section, keys in SCHEMA.items():
        if keys is None:
            continue
        node = raw
        for part in section.split("."):
            node = node.get(part, {}) if isinstance(node, dict) else {}
        if not isinstance(node, dict):
            raise ConfigError(section, "must be a table")
        out = {}
        for key, (types, default, _paper, _help) in keys.items():
            if key in node:
                value = node[key]
                if isinstance(value, bool) or not isinstance(value, types):
                    raise ConfigError(f"{section}.{key}",
                                      f"expected {'/'.join(t.__name__ for t in types)}, got {value!r}")
                out[key] = value
            else:
                out[key] = default
        unknown = set(node) - set(keys)
        if unknown:
            raise ConfigError(f"{section}.{sorted(unknown)[0]}", "unknown key")
        effective[section] = out

    role_thresholds = raw.get("loss", {}).get("role_thresholds", {})
    if not isinstance(role_thresholds, dict):
        raise ConfigError("loss.role_thresholds", "must be a table of role -> [tau, beta]")
    for role, pair in role_thresholds.items():
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(v, _NUM) for v in pair)):
            raise ConfigError(f"loss.role_thresholds.{role}", "must be [tau, beta]")
    effective["loss.role_thresholds"] = {k: list(v) for k, v in role_thresholds.items()}

    known_top = {s.split(".")[0] for s in SCHEMA}
    unknown_top = set(raw) - known_top
    if unknown_top:
        raise ConfigError(sorted(unknown_top)[0], "unknown section")
    known_materials = {"target", "protect"}
    extra_mat = set(raw.get("materials", {})) - known_materials
    if extra_mat:
        raise ConfigError(f"materials.{sorted(extra_mat)[0]}", "unknown section")
    extra_loss = set(raw.get("loss", {})) - set(SCHEMA["loss"]) - {"role_thresholds"}
    if extra_loss:
        raise ConfigError(f"loss.{sorted(extra_loss)[0]}", "unknown key")
    return effective


def _parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(item, "override must look like section.key=value")
    key, _, raw_value = item.partition("=")
    key = key.strip()
    try:
        parsed = tomllib.loads(f"v = {raw_value.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = raw_value.strip()
    return key, parsed


def _apply_overrides(raw: dict, overrides: list[str]) -> dict:
    for item in overrides:
        key, value = _parse_override(item)
        parts = key.split(".")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "override path crosses a non-table value")
        node[parts[-1]] = value
    return raw


def _material(tree: dict, which: str) -> MaterialTarget:
    sec = tree[f"materials.{which}"]
    hsp = sec["hsp"]
    if len(hsp) != 3 or not all(isinstance(v, _NUM) for v in hsp):
        raise ConfigError(f"materials.{which}.hsp", "must be a list of three numbers")
    if not isinstance(sec["r0"], _NUM) or sec["r0"] <= 0:
        raise ConfigError(f"materials.{which}.r0", "must be > 0")
    return MaterialTarget(sec["name"], HspVector(*[float(v) for v in hsp]), float(sec["r0"]))


def load_run_config(path: str | os.PathLike | None = None,
                    overrides: list[str] | None = None) -> RunConfig:
    """Parse (or default) the run config; fails with the offending key path."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(str(path), "config file not found") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    raw = _apply_overrides(raw, overrides or [])
    tree = _effective_tree(raw)

    lib_path = tree["library"]["path"] or os.fspath(shipped_library_path())
    prohibited = [str(v) for v in tree["library"]["prohibited"]]
    library = load_library(lib_path, prohibited=prohibited)
    subset = [str(v) for v in tree["library"]["subset"]]
    if subset:
        library = library.restrict(subset)

    target = _material(tree, "target")
    protect = _material(tree, "protect")

    s = tree["search"]
    search_cfg = SearchConfig(
        max_iterations=s["max_iterations"], max_children=s["max_children"],
        exploration_constant=float(s["exploration_constant"]), mode=s["mode"],
        seed=s["seed"], max_depth=s["max_depth"],
        failure_floor=float(s["failure_floor"]),
        generator_attempts=s["generator_attempts"],
    )

    lo = tree["loss"]
    loss_cfg = LossConfig(
        epsilon=float(lo["epsilon"]), omega_diff=float(lo["omega_diff"]),
        omega_swell=float(lo["omega_swell"]),
        swelling_threshold=float(lo["swelling_threshold"]),
        red_target_max=float(lo["red_target_max"]),
        red_protect_min=float(lo["red_protect_min"]),
        protect_conditional_floor=float(lo["protect_conditional_floor"]),
        hinge_weight_target=float(lo["hinge_weight_target"]),
        hinge_weight_protect=float(lo["hinge_weight_protect"]),
        alpha_vm=float(lo["alpha_vm"]), v_max=float(lo["v_max"]),
        alpha_bp=float(lo["alpha_bp"]), t_max=float(lo["t_max"]),
        role_thresholds={k: (float(v[0]), float(v[1]))
                         for k, v in tree["loss.role_thresholds"].items()},
        gamma=float(lo["gamma"]),
    )

    o = tree["optimizer"]
    opt_cfg = OptimizerConfig(
        max_steps=o["max_steps"], learning_rate=float(o["learning_rate"]),
        convergence_tol=float(o["convergence_tol"]), init_mode=o["init_mode"],
        seed=search_cfg.seed,
    )

    c = tree["critic"]
    flash = float(c["flash_point_min"])
    critic_cfg = CriticConfig(
        excellent_red_pre=float(c["excellent_red_pre"]),
        excellent_red_post=float(c["excellent_red_post"]),
        bp_spread_min=float(c["bp_spread_min"]),
        min_fraction=float(c["min_fraction"]),
        flash_point_min=None if flash < 0 else flash,
    )
    backend = c["qualitative_backend"]
    if backend not in ("rubric", "remote"):
        raise ConfigError("critic.qualitative_backend", "must be 'rubric' or 'remote'")

    r = tree["remote"]
    remote_cfg = None
    if r["base_url"]:
        remote_cfg = RemoteConfig(
            base_url=r["base_url"], model=r["model"] or "default",
            auth_env=r["auth_env"], timeout_s=float(r["timeout_s"]),
            max_retries=r["max_retries"],
        )
    if backend == "remote" and remote_cfg is None:
        raise ConfigError("remote.base_url", "required when critic.qualitative_backend = 'remote'")

    p = tree["planner"]
    if p["strategy_mode"] not in STRATEGY_MODES:
        raise ConfigError("planner.strategy_mode", f"must be one of {STRATEGY_MODES}")
    thresholds = PlannerThresholds(
        champion_min=float(p["champion_min"]), yellow_min=float(p["yellow_min"]),
        kill_below=float(p["kill_below"]),
    )

    sim = tree["simplify"]
    if sim["increment"] <= 0 or 100 % sim["increment"] != 0:
        raise ConfigError("simplify.increment", "must be a positive divisor of 100")
    if not 0 <= sim["prune_below"] < 1:
        raise ConfigError("simplify.prune_below", "must lie in [0, 1)")

    canonical = json.dumps(tree, sort_keys=True)
    run_id = "r" + hashlib.sha256(
        f"{canonical}:{search_cfg.seed}".encode()
    ).hexdigest()[:12]

    return RunConfig(
        library=library, target=target, protect=protect,
        search=search_cfg, loss=loss_cfg, optimizer=opt_cfg,
        critic=critic_cfg, qualitative_backend=backend, remote=remote_cfg,
        planner_thresholds=thresholds, strategy_mode=p["strategy_mode"],
        increment=sim["increment"], prune_below=float(sim["prune_below"]),
        output_dir=tree["output"]["dir"], effective=tree, run_id=run_id,
    )


def config_reference() -> str:
    """All config keys with defaults; non-anchored values are marked as
    engineering defaults of this implementation."""
    lines = ["# Run configuration reference", ""]
    for section, keys in SCHEMA.items():
        if keys is None:
            lines.append("## [loss.role_thresholds]")
            lines.append("free-form table: role name -> [tau, beta] "
                         "(floor tau on the role's fraction mass, hinge weight beta; "
                         "engineering default: empty, term inert)")
            lines.append("")
            continue
        lines.append(f"## [{section}]")
        for key, (_types, default, anchored, help_text) in keys.items():
            origin = "method constant" if anchored else "engineering default"
            lines.append(f"- `{key}` = `{default!r}` ({origin}): {help_text}")
        lines.append("")
    return "\n".join(lines)
