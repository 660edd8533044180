"""Memory of evaluated candidates and global-plan synthesis.

Evaluated candidates accumulate in an append-only store (JSON lines on
disk, one record per line, schema-versioned header). Periodically the
records are summarized into a global plan: champions, kill list, yellow
flags, exploration vectors, and the dominant solvent. Strategy modes
translate the plan into machine-readable directives for the proposal
generator.
"""

from __future__ import annotations

import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field

from .errors import RecordValidationError, StorageError, ConfigError
from .hsp import SolventLibrary

__all__ = [
    "CandidateRecord",
    "GlobalPlan",
    "PlannerThresholds",
    "StrategyDirectives",
    "MemoryStore",
    "synthesize_plan",
    "apply_strategy",
    "STRATEGY_MODES",
    "SOLVENT_CLASS_KEYWORDS",
]

STRATEGY_MODES = ("balanced", "innovation", "green", "engineering")

MEMORY_SCHEMA = {"schema": "solvsearch-memory", "version": 1}

# name/SMILES keyword table for grouping exploration vectors; extend or
# override as needed, classification falls through in order
SOLVENT_CLASS_KEYWORDS: list[tuple[str, tuple[str, ...]]] = [
    ("ester", ("acetate", "lactate", "benzoate", "propionate", "butyrate",
               "isobutyrate", "levulinate", "carbonate", "lactone", "pgmea")),
    ("ketone", ("ketone", "acetone", "butanone", "pentanone", "hexanone",
                "heptanone", "cyclohexanone")),
    ("ether", ("ether", "glyme", "thf", "tetrahydrofuran", "dioxane",
               "anisole", "cellosolve", "furan")),
    ("alcohol", ("alcohol", "methanol", "ethanol", "butanol", "propanol",
                 "isopropanol", "diol", "glycol", "glycerol")),
]


def classify_solvent(name: str, smiles: str = "") -> str:
    lowered = name.lower()
    for cls, keywords in SOLVENT_CLASS_KEYWORDS:
        if any(k in lowered for k in keywords):
            return cls
    if "C(=O)O" in smiles:
        return "ester"
    if "C(=O)" in smiles or "C(C)=O" in smiles:
        return "ketone"
    return "other"


@dataclass(frozen=True)
class CandidateRecord:
    """One evaluated candidate; append-only, never mutated after storage."""

    topology: tuple[str, ...]
    fractions: tuple[float, ...]
    score_total: float
    pv_pass: bool
    verdicts: tuple[dict, ...]
    run_id: str
    iteration: int

    def validate(self) -> None:
        if not self.topology:
            raise RecordValidationError("record has empty topology")
        # empty fractions mark a candidate that never survived discretization
        if self.fractions and len(self.topology) != len(self.fractions):
            raise RecordValidationError("topology/fractions misaligned")
        if not self.verdicts:
            raise RecordValidationError("record is missing constraint verdicts")
        if not self.run_id:
            raise RecordValidationError("record is missing run_id")
        if not math.isfinite(self.score_total):
            raise RecordValidationError("score_total must be finite")

    def to_dict(self) -> dict:
        return {
            "topology": list(self.topology),
            "fractions": list(self.fractions),
            "score_total": self.score_total,
            "pv_pass": self.pv_pass,
            "verdicts": list(self.verdicts),
            "run_id": self.run_id,
            "iteration": self.iteration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CandidateRecord":
        return cls(
            topology=tuple(d["topology"]),
            fractions=tuple(d["fractions"]),
            score_total=d["score_total"],
            pv_pass=d["pv_pass"],
            verdicts=tuple(d["verdicts"]),
            run_id=d["run_id"],
            iteration=d["iteration"],
        )


@dataclass(frozen=True)
class PlannerThresholds:
    """Score bands on the total (hybrid) scale.

    The rubric-scale bands 9.0 / 8.0 / 6.0 translate onto the total scale
    through the x10 qualitative mapping; defaults are config-exposed.
    """

    champion_min: float = 85.0
    yellow_min: float = 75.0
    kill_below: float = 60.0

    def __post_init__(self):
        if not self.kill_below <= self.yellow_min <= self.champion_min:
            raise ConfigError("planner.thresholds", "need kill_below <= yellow_min <= champion_min")


@dataclass(frozen=True)
class GlobalPlan:
    champions: tuple[dict, ...]
    kill_list: tuple[dict, ...]
    yellow_flags: tuple[dict, ...]
    exploration_vectors: tuple[dict, ...]
    dominant_solvent: str | None
    strategy_mode: str
    champion_pattern: str = ""

    def to_dict(self) -> dict:
        return {
            "champions": list(self.champions),
            "kill_list": list(self.kill_list),
            "yellow_flags": list(self.yellow_flags),
            "exploration_vectors": list(self.exploration_vectors),
            "dominant_solvent": self.dominant_solvent,
            "strategy_mode": self.strategy_mode,
            "champion_pattern": self.champion_pattern,
        }

    def render_text(self) -> str:
        """Compact plan rendering used as the root guidance text."""
        lines = [f"strategy mode: {self.strategy_mode}"]
        if self.champions:
            tops = "; ".join("+".join(c["topology"]) for c in self.champions[:3])
            lines.append(f"proven champions: {tops}")
            if self.champion_pattern:
                lines.append(f"shared pattern: {self.champion_pattern}")
        if self.kill_list:
            tops = "; ".join("+".join(c["topology"]) for c in self.kill_list[:3])
            lines.append(f"kill list: {tops}")
        if self.yellow_flags:
            tops = "; ".join("+".join(c["topology"]) for c in self.yellow_flags[:3])
            lines.append(f"yellow flags: {tops}")
        if self.dominant_solvent:
            lines.append(f"dominant solvent so far: {self.dominant_solvent}")
        if self.exploration_vectors:
            groups = "; ".join(
                f"{v['solvent_class']}: {', '.join(v['solvents'][:4])}"
                for v in self.exploration_vectors[:4]
            )
            lines.append(f"underused regions: {groups}")
        return "\n".join(lines)


NEUTRAL_PLAN_SECTIONS = dict(
    champions=(), kill_list=(), yellow_flags=(), exploration_vectors=(),
    dominant_solvent=None, champion_pattern="",
)


class MemoryStore:
    """Append-only candidate memory, optionally persisted as JSON lines.

    A single writer appends; readers get consistent snapshots. The on-disk
    format is one schema header line followed by one record per line.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self._path = os.fspath(path) if path is not None else None
        self._records: list[CandidateRecord] = []
        if self._path is not None and os.path.exists(self._path):
            self._load()

    def _load(self) -> None:
        try:
            with open(self._path, encoding="utf-8") as fh:
                first = fh.readline()
                if not first:
                    return
                header = json.loads(first)
                if header.get("schema") != MEMORY_SCHEMA["schema"]:
                    raise StorageError(f"{self._path}: not a memory file")
                for line in fh:
                    if line.strip():
                        self._records.append(CandidateRecord.from_dict(json.loads(line)))
        except (OSError, json.JSONDecodeError) as exc:
            raise StorageError(f"cannot read memory file {self._path}: {exc}") from exc

    def store(self, record: CandidateRecord) -> None:
        record.validate()
        if self._path is not None:
            try:
                is_new = not os.path.exists(self._path) or os.path.getsize(self._path) == 0
                with open(self._path, "a", encoding="utf-8") as fh:
                    if is_new:
                        fh.write(json.dumps(MEMORY_SCHEMA, sort_keys=True) + "\n")
                    fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
            except OSError as exc:
                raise StorageError(f"cannot append to {self._path}: {exc}") from exc
        self._records.append(record)

    def records(self) -> list[CandidateRecord]:
        return list(self._records)

    def by_run(self, run_id: str) -> list[CandidateRecord]:
        return [r for r in self._records if r.run_id == run_id]

    def by_score(self) -> list[CandidateRecord]:
        return sorted(self._records, key=lambda r: (-r.score_total, r.run_id, r.iteration))

    def __len__(self) -> int:
        return len(self._records)


def _record_summary(r: CandidateRecord) -> dict:
    return {
        "topology": sorted(r.topology),
        "score_total": r.score_total,
        "pv_pass": r.pv_pass,
        "run_id": r.run_id,
        "iteration": r.iteration,
    }


def synthesize_plan(records: list[CandidateRecord], mode: str,
                    thresholds: PlannerThresholds = PlannerThresholds(),
                    library: SolventLibrary | None = None) -> GlobalPlan:
    """Partition memory into score bands and derive exploration guidance.

    Deterministic: records are ordered by (score desc, run_id, iteration)
    before banding. With no records, returns a neutral plan preserving the
    mode. `library` enables exploration vectors (unused / bottom-decile
    solvents grouped by class); without it that section stays empty.
    """
    if mode not in STRATEGY_MODES:
        raise ConfigError("planner.strategy_mode", f"unknown mode {mode!r}")
    if not records:
        return GlobalPlan(strategy_mode=mode, **NEUTRAL_PLAN_SECTIONS)

    ordered = sorted(records, key=lambda r: (-r.score_total, r.run_id, r.iteration))
    champions = [r for r in ordered if r.score_total >= thresholds.champion_min]
    kill = [r for r in ordered
            if r.score_total < thresholds.kill_below or not r.pv_pass]
    in_kill = {id(r) for r in kill}
    yellow = [r for r in ordered
              if thresholds.yellow_min <= r.score_total < thresholds.champion_min
              and id(r) not in in_kill]
    champions = [r for r in champions if id(r) not in in_kill]

    usage = Counter()
    for r in ordered:
        usage.update(r.topology)
    dominant = min(usage.items(), key=lambda kv: (-kv[1], kv[0]))[0] if usage else None

    champion_pattern = ""
    if len(champions) >= 2:
        pair_counts = Counter()
        for r in champions:
            names = sorted(r.topology)
            for i in range(len(names)):
                for j in range(i + 1, len(names)):
                    pair_counts[(names[i], names[j])] += 1
        (pair, count) = min(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if count >= 2:
            champion_pattern = f"{pair[0]} + {pair[1]} recurs in {count} champions"

    exploration: list[dict] = []
    if library is not None:
        counts = [(usage.get(s.name, 0), s.name) for s in library.non_prohibited()]
        counts.sort()
        nonzero = sorted(c for c, _ in counts if c > 0)
        decile_cut = nonzero[max(0, len(nonzero) // 10 - 1)] if nonzero else 0
        underused = [name for c, name in counts if c == 0 or c <= decile_cut]
        groups: dict[str, list[str]] = {}
        for name in underused:
            s = library.get(name)
            groups.setdefault(classify_solvent(s.name, s.smiles), []).append(name)
        for cls in sorted(groups):
            exploration.append({
                "solvent_class": cls,
                "solvents": sorted(groups[cls]),
                "usage_counts": {n: usage.get(n, 0) for n in sorted(groups[cls])},
            })

    return GlobalPlan(
        champions=tuple(_record_summary(r) for r in champions),
        kill_list=tuple(_record_summary(r) for r in kill),
        yellow_flags=tuple(
            {**_record_summary(r),
             "risk_notes": [v.get("note", "") for v in r.verdicts
                            if v.get("verdict") == "warn"]}
            for r in yellow
        ),
        exploration_vectors=tuple(exploration),
        dominant_solvent=dominant,
        strategy_mode=mode,
        champion_pattern=champion_pattern,
    )


@dataclass(frozen=True)
class StrategyDirectives:
    """Machine-readable constraints handed to proposal generators."""

    exclude: frozenset[str] = frozenset()
    boost: tuple[str, ...] = ()               # underused solvents to favor
    preferred_backbones: tuple[tuple[str, ...], ...] = ()
    red_pre_slack: float | None = None        # innovation: accept RED_pre up to here
    require_bp_spread: float | None = None    # engineering: min BP spread (deg C)
    min_est_red_post: float | None = None     # engineering: protect margin on the equal-mix estimate

    def to_dict(self) -> dict:
        return {
            "exclude": sorted(self.exclude),
            "boost": list(self.boost),
            "preferred_backbones": [list(b) for b in self.preferred_backbones],
            "red_pre_slack": self.red_pre_slack,
            "require_bp_spread": self.require_bp_spread,
            "min_est_red_post": self.min_est_red_post,
        }


def apply_strategy(plan: GlobalPlan, mode: str,
                   library: SolventLibrary | None = None) -> StrategyDirectives:
    """Translate a plan + mode into generator-facing directives.

    innovation: drop the dominant solvent, favor underused ones, relax the
    RED_pre preference to 0.8; green: exclude warn-class solvents;
    engineering: demand a 30 C boiling-point spread and an estimated
    protect RED of at least 1.1; balanced: steer toward champion
    backbones.
    """
    if mode not in STRATEGY_MODES:
        raise ConfigError("planner.strategy_mode", f"unknown mode {mode!r}")
    exploration: list[str] = []
    for vec in plan.exploration_vectors:
        exploration.extend(vec["solvents"])
    exploration_t = tuple(sorted(set(exploration)))
    if mode == "balanced":
        return StrategyDirectives(
            preferred_backbones=tuple(tuple(c["topology"]) for c in plan.champions[:3]),
            boost=exploration_t,
        )
    if mode == "innovation":
        exclude = frozenset({plan.dominant_solvent} if plan.dominant_solvent else ())
        return StrategyDirectives(
            exclude=exclude,
            boost=exploration_t,
            red_pre_slack=0.8,
        )
    if mode == "green":
        warn = frozenset(s.name for s in (library or ()) if s.safety_class == "warn")
        return StrategyDirectives(exclude=warn)
    # engineering
    return StrategyDirectives(require_bp_spread=30.0, min_est_red_post=1.1)
