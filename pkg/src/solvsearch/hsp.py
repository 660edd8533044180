"""Hansen solubility parameter algebra and the solvent data model.

A material is described by the triplet (delta_d, delta_p, delta_h) in
MPa^0.5: dispersion, polar, and hydrogen-bonding cohesion parameters.
Mixtures combine linearly in volume fraction; affinity between two
materials is the weighted Euclidean distance

    Ra = sqrt(4*(dd_a - dd_b)^2 + (dp_a - dp_b)^2 + (dh_a - dh_b)^2)

where the factor 4 on the dispersion axis is the standard empirical
weighting. RED = Ra / R0 rescales distance by a material's interaction
radius: RED < 1 predicts dissolution, RED > 1 predicts resistance.

Units are MPa^0.5 throughout; there is no conversion layer.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .errors import DuplicateName, InvalidHsp, ParseError, UnknownSolvent

__all__ = [
    "HspVector",
    "Solvent",
    "MaterialTarget",
    "SolventLibrary",
    "Formulation",
    "mix_hsp",
    "hsp_distance",
    "red",
    "load_library",
    "shipped_library_path",
    "DEFAULT_PROHIBITED",
    "ROLE_TAGS",
    "LIBRARY_CSV_HEADER",
]

ROLE_TAGS = frozenset({"fast_penetrant", "heavy_modifier", "anchor", "aromatic"})
SAFETY_CLASSES = ("allowed", "warn", "prohibited")

# Strictly prohibited components; everything else is at most warn-class.
DEFAULT_PROHIBITED = ("Benzene", "Carbon Tetrachloride")

LIBRARY_CSV_HEADER = [
    "name", "smiles", "delta_d", "delta_p", "delta_h",
    "molar_volume", "boiling_point", "flash_point", "roles", "safety_class",
]

FRACTION_SUM_TOL = 1e-9
MIN_COMPONENTS = 2
MAX_COMPONENTS = 5


@dataclass(frozen=True)
class HspVector:
    """A (delta_d, delta_p, delta_h) triplet in MPa^0.5."""

    delta_d: float
    delta_p: float
    delta_h: float

    def __post_init__(self):
        for name in ("delta_d", "delta_p", "delta_h"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise InvalidHsp(f"{name} must be finite and >= 0, got {v!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.delta_d, self.delta_p, self.delta_h)


@dataclass(frozen=True)
class Solvent:
    """One library component: HSP plus engineering and safety metadata.

    molar_volume (cm^3/mol), boiling_point and flash_point (deg C) are
    optional; checks that need a missing field report "not evaluable"
    instead of pass/fail.
    """

    name: str
    hsp: HspVector
    smiles: str = ""
    molar_volume: float | None = None
    boiling_point: float | None = None
    flash_point: float | None = None
    role_tags: frozenset[str] = frozenset()
    safety_class: str = "allowed"
    qualitative_fields: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.name:
            raise ParseError("solvent name must be non-empty")
        if self.molar_volume is not None and not self.molar_volume > 0:
            raise ParseError(f"{self.name}: molar_volume must be > 0")
        if self.boiling_point is not None and not self.boiling_point > -100.0:
            raise ParseError(f"{self.name}: boiling_point must be > -100 C")
        if self.safety_class not in SAFETY_CLASSES:
            raise ParseError(f"{self.name}: bad safety_class {self.safety_class!r}")
        unknown = set(self.role_tags) - ROLE_TAGS
        if unknown:
            raise ParseError(f"{self.name}: unknown role tag(s) {sorted(unknown)}")

    @property
    def prohibited(self) -> bool:
        return self.safety_class == "prohibited"


@dataclass(frozen=True)
class MaterialTarget:
    """A material to dissolve or to protect: HSP centre plus interaction radius R0."""

    name: str
    hsp: HspVector
    interaction_radius: float

    def __post_init__(self):
        if not (math.isfinite(self.interaction_radius) and self.interaction_radius > 0):
            raise ParseError(f"{self.name}: interaction_radius must be > 0")


class SolventLibrary:
    """Immutable ordered collection of solvents with name lookup."""

    def __init__(self, solvents: list[Solvent]):
        self._solvents = tuple(solvents)
        self._index: dict[str, int] = {}
        for i, s in enumerate(self._solvents):
            if s.name in self._index:
                raise DuplicateName(f"duplicate solvent name {s.name!r}")
            self._index[s.name] = i

    def __len__(self) -> int:
        return len(self._solvents)

    def __iter__(self):
        return iter(self._solvents)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    @property
    def names(self) -> list[str]:
        return [s.name for s in self._solvents]

    def get(self, name: str) -> Solvent:
        i = self._index.get(name)
        if i is None:
            import difflib

            close = difflib.get_close_matches(name, self._index, n=3, cutoff=0.6)
            raise UnknownSolvent(name, close)
        return self._solvents[i]

    def restrict(self, names: list[str]) -> "SolventLibrary":
        """Sub-library containing exactly `names`, in the given order."""
        return SolventLibrary([self.get(n) for n in names])

    def non_prohibited(self) -> list[Solvent]:
        return [s for s in self._solvents if not s.prohibited]


@dataclass(frozen=True)
class Formulation:
    """A component subset with aligned volume fractions on the simplex.

    Fractions must be strictly positive and sum to 1 within 1e-9. The
    sparsity bound 2 <= |components| <= 5 is a *finalization* rule: it is
    enforced when recipes are discretized and validity-checked, not here,
    so intermediate optimizer states (including singletons) can exist.
    """

    components: tuple[str, ...]
    fractions: tuple[float, ...]

    def __post_init__(self):
        if len(self.components) != len(self.fractions):
            raise ParseError("components and fractions must align")
        if not self.components:
            raise ParseError("formulation needs at least one component")
        if len(set(self.components)) != len(self.components):
            raise ParseError("duplicate component in formulation")
        for f in self.fractions:
            if not (math.isfinite(f) and f > 0):
                raise ParseError(f"fractions must be finite and > 0, got {f!r}")
        if abs(math.fsum(self.fractions) - 1.0) > FRACTION_SUM_TOL:
            raise ParseError(
                f"fractions sum to {math.fsum(self.fractions)!r}, expected 1"
            )

    def topology(self) -> frozenset[str]:
        return frozenset(self.components)

    def fraction_of(self, name: str) -> float:
        return self.fractions[self.components.index(name)]

    def meets_sparsity(self) -> bool:
        return MIN_COMPONENTS <= len(self.components) <= MAX_COMPONENTS

    def resolve(self, library: SolventLibrary) -> list[Solvent]:
        """Component solvents in formulation order; raises UnknownSolvent."""
        return [library.get(n) for n in self.components]


def mix_hsp(formulation: Formulation, library: SolventLibrary) -> HspVector:
    """Mixture HSP under the linear volume-fraction mixing rule."""
    solvents = formulation.resolve(library)
    dd = math.fsum(f * s.hsp.delta_d for f, s in zip(formulation.fractions, solvents))
    dp = math.fsum(f * s.hsp.delta_p for f, s in zip(formulation.fractions, solvents))
    dh = math.fsum(f * s.hsp.delta_h for f, s in zip(formulation.fractions, solvents))
    return HspVector(dd, dp, dh)


def hsp_distance(a: HspVector, b: HspVector) -> float:
    """Ra between two HSP triplets (4x weight on the dispersion axis)."""
    return math.sqrt(
        4.0 * (a.delta_d - b.delta_d) ** 2
        + (a.delta_p - b.delta_p) ** 2
        + (a.delta_h - b.delta_h) ** 2
    )


def red(mix: HspVector, material: MaterialTarget) -> float:
    """Relative energy difference Ra / R0 against `material`."""
    return hsp_distance(mix, material.hsp) / material.interaction_radius


def shipped_library_path():
    """Path of the packaged default solvent library CSV."""
    from importlib import resources

    return resources.files("solvsearch").joinpath("data").joinpath("solvents.csv")


def _parse_optional_float(cell: str, what: str, row: int) -> float | None:
    cell = cell.strip()
    if not cell:
        return None
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"bad {what} {cell!r}", row=row) from None


def load_library(path, prohibited: tuple[str, ...] | list[str] = DEFAULT_PROHIBITED) -> SolventLibrary:
    """Load a solvent library CSV (see LIBRARY_CSV_HEADER for the schema).

    The configured `prohibited` list is authoritative for the prohibited
    class: rows naming those solvents are retained but flagged
    safety_class="prohibited"; a row declaring itself prohibited without
    being listed is demoted to "warn".
    """
    prohibited_set = set(prohibited)
    solvents: list[Solvent] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty library file") from None
        if [h.strip() for h in header] != LIBRARY_CSV_HEADER:
            raise ParseError(
                f"bad header {header!r}, expected {','.join(LIBRARY_CSV_HEADER)}", row=1
            )
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(LIBRARY_CSV_HEADER):
                raise ParseError(
                    f"expected {len(LIBRARY_CSV_HEADER)} cells, got {len(row)}", row=row_no
                )
            name = row[0].strip()
            if not name:
                raise ParseError("empty solvent name", row=row_no)
            if name in seen:
                raise DuplicateName(
                    f"duplicate solvent {name!r} (first at row {seen[name]})", row=row_no
                )
            seen[name] = row_no
            try:
                hsp = HspVector(float(row[2]), float(row[3]), float(row[4]))
            except InvalidHsp as exc:
                raise InvalidHsp(f"{name}: {exc}", row=row_no) from None
            except ValueError:
                raise InvalidHsp(f"{name}: non-numeric HSP cell", row=row_no) from None
            roles = frozenset(t.strip() for t in row[8].split("|") if t.strip())
            declared = row[9].strip() or "allowed"
            if declared not in SAFETY_CLASSES:
                raise ParseError(f"{name}: bad safety_class {declared!r}", row=row_no)
            if name in prohibited_set:
                safety = "prohibited"
            elif declared == "prohibited":
                safety = "warn"  # list is authoritative; never silently allow
            else:
                safety = declared
            try:
                solvents.append(
                    Solvent(
                        name=name,
                        smiles=row[1].strip(),
                        hsp=hsp,
                        molar_volume=_parse_optional_float(row[5], "molar_volume", row_no),
                        boiling_point=_parse_optional_float(row[6], "boiling_point", row_no),
                        flash_point=_parse_optional_float(row[7], "flash_point", row_no),
                        role_tags=roles,
                        safety_class=safety,
                    )
                )
            except ParseError as exc:
                if exc.row is None:
                    raise type(exc)(str(exc), row=row_no) from None
                raise
    return SolventLibrary(solvents)
