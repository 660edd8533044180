"""Diversity and quality metrics over search traces.

Topology identity is the unordered component set: two recipes over the
same solvents count as one topology. Entropy is Shannon entropy of the
topology frequency distribution in nats (natural log).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, replace

from .errors import EmptyTrace
from .search import SearchTrace

__all__ = [
    "DiversityReport",
    "compute_diversity",
    "run_ablation",
    "ablation_table",
    "ablation_deltas",
]


@dataclass(frozen=True)
class DiversityReport:
    mode: str
    candidates: int
    unique_topologies: int
    shannon_entropy: float
    top5_concentration: float
    pv_rate: float
    top10_mean: float

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "candidates": self.candidates,
            "unique_topologies": self.unique_topologies,
            "shannon_entropy": self.shannon_entropy,
            "top5_concentration": self.top5_concentration,
            "pv_rate": self.pv_rate,
            "top10_mean": self.top10_mean,
        }


def shannon_entropy(frequencies) -> float:
    """Entropy (nats) of a frequency/count distribution."""
    total = sum(frequencies)
    if total <= 0:
        return 0.0
    h = 0.0
    for c in frequencies:
        if c > 0:
            p = c / total
            h -= p * math.log(p)
    return h


def compute_diversity(trace: SearchTrace) -> DiversityReport:
    """Metrics over every evaluated candidate in the trace.

    Failed-discretization attempts count in the denominators (pv_rate,
    entropy) even though they are never surfaced as results.
    """
    if not trace.evaluated:
        raise EmptyTrace("trace holds no evaluated candidates")

    topo_counts = Counter(frozenset(e.topology) for e in trace.evaluated)
    entropy = shannon_entropy(topo_counts.values())

    solvent_counts = Counter()
    for e in trace.evaluated:
        solvent_counts.update(e.topology)
    total_occurrences = sum(solvent_counts.values())
    top5 = sum(c for _, c in solvent_counts.most_common(5))
    concentration = top5 / total_occurrences if total_occurrences else 0.0

    pv_rate = sum(1 for e in trace.evaluated if e.pv_pass) / len(trace.evaluated)
    rewards = sorted((e.reward for e in trace.evaluated), reverse=True)
    top10 = rewards[:10]
    top10_mean = sum(top10) / len(top10)

    return DiversityReport(
        mode=trace.mode,
        candidates=len(trace.evaluated),
        unique_topologies=len(topo_counts),
        shannon_entropy=entropy,
        top5_concentration=concentration,
        pv_rate=pv_rate,
        top10_mean=top10_mean,
    )


def run_ablation(library, target, protect, generator_factory, memory_factory,
                 cfg, modes=("naive", "sibling_aware", "full"),
                 evaluator=None, strategy_mode: str = "balanced",
                 run_id_prefix: str = "ablate") -> dict:
    """Run one search per mode under an otherwise identical budget.

    `generator_factory()` and `memory_factory()` build fresh collaborators
    per mode so state never leaks between runs; T, K, C and the seed stay
    fixed. Returns {mode: {"trace": ..., "report": ...}}.
    """
    from .search import run_search  # local import to keep module load light

    results: dict = {}
    for mode in modes:
        mode_cfg = replace(cfg, mode=mode)
        trace = run_search(
            library, target, protect, generator_factory(), memory_factory(),
            mode_cfg, evaluator=evaluator, strategy_mode=strategy_mode,
            run_id=f"{run_id_prefix}-{mode}-{cfg.seed}",
        )
        results[mode] = {"trace": trace, "report": compute_diversity(trace)}
    return results


_COLUMNS = (
    ("Mode", "mode", "{}"),
    ("PV", "pv_rate", "{:.1%}"),
    ("Top-10 Score", "top10_mean", "{:.2f}"),
    ("Entropy", "shannon_entropy", "{:.3f}"),
    ("Unique", "unique_topologies", "{}"),
    ("Top-5 Conc.", "top5_concentration", "{:.1%}"),
)


def ablation_table(reports: list[DiversityReport]) -> str:
    """Aligned-column text table, one row per mode."""
    rows = [[fmt.format(getattr(r, attr)) for _, attr, fmt in _COLUMNS] for r in reports]
    headers = [h for h, _, _ in _COLUMNS]
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines)


def ablation_deltas(reports: dict) -> dict:
    """Directional deltas of each mode against the naive baseline."""
    if "naive" not in reports:
        return {}
    base = reports["naive"]
    out = {}
    for mode, rep in reports.items():
        if mode == "naive":
            continue
        out[mode] = {
            "entropy_delta": rep.shannon_entropy - base.shannon_entropy,
            "unique_delta": rep.unique_topologies - base.unique_topologies,
            "top10_delta": rep.top10_mean - base.top10_mean,
            "top5_concentration_delta": rep.top5_concentration - base.top5_concentration,
        }
    return out
