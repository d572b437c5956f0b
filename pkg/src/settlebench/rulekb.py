"""Multi-expert scoring rules over map clusters.

Fourteen rule families — one per buildable center terrain plus five
cluster features (special on center, specials around, water access, deep
ocean access, whale presence). Each family holds four alternative rules
with the same condition but different point values: the encoded opinions
of players with different strategies. Families are the conflict sets a
policy resolves; every fired rule contributes to the cluster score
independently of the others.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

from .world import MapCluster, SpecialKind, TerrainKind

POINTS_MIN, POINTS_MAX = -20, 20


@dataclass(frozen=True)
class ScoringRule:
    id: str
    family: str
    points: int


@dataclass(frozen=True)
class ConflictSet:
    family: str
    condition: str  # human-readable summary of the shared condition
    rules: tuple[ScoringRule, ...]

    def rule_ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.rules)


@dataclass(frozen=True)
class FiredRule:
    family: str
    condition: str
    rule_id: str
    points: int
    # every alternative at decision time: (rule id, points, selection probability)
    alternatives: tuple[tuple[str, int, float], ...]


@dataclass(frozen=True)
class ScoreTrace:
    fired: tuple[FiredRule, ...]
    total: int


@dataclass(frozen=True)
class RuleChoice:
    rule: ScoringRule
    probabilities: dict[str, float]


Chooser = Callable[[ConflictSet], Union[ScoringRule, RuleChoice]]

TERRAIN_FAMILIES = {
    TerrainKind.GRASSLAND: "terrain_grassland",
    TerrainKind.PLAINS: "terrain_plains",
    TerrainKind.HILLS: "terrain_hills",
    TerrainKind.FOREST: "terrain_forest",
    TerrainKind.MOUNTAINS: "terrain_mountains",
    TerrainKind.DESERT: "terrain_desert",
    TerrainKind.SWAMP: "terrain_swamp",
    TerrainKind.JUNGLE: "terrain_jungle",
    TerrainKind.TUNDRA: "terrain_tundra",
}

SPECIAL_ON_CENTER = "special_on_center"
SPECIALS_AROUND = "specials_around"
WATER_ACCESS = "water_access"
DEEP_OCEAN_ACCESS = "deep_ocean_access"
WHALE_PRESENCE = "whale_presence"


def _has_water(cluster: MapCluster) -> bool:
    return any(t.terrain in (TerrainKind.OCEAN, TerrainKind.DEEP_OCEAN) for t in cluster.tiles)


FAMILY_CONDITIONS: dict[str, tuple[str, Callable[[MapCluster], bool]]] = {
    **{
        family: (
            f"center terrain is {kind.value}",
            (lambda kind: lambda cluster: cluster.center_tile.terrain is kind)(kind),
        )
        for kind, family in TERRAIN_FAMILIES.items()
    },
    SPECIAL_ON_CENTER: (
        "special resource on the center tile",
        lambda cluster: cluster.center_tile.special is not None,
    ),
    SPECIALS_AROUND: (
        "special resource on a surrounding tile",
        lambda cluster: any(t.special is not None for t in cluster.surrounding()),
    ),
    WATER_ACCESS: ("ocean or deep ocean tile in the cluster", _has_water),
    DEEP_OCEAN_ACCESS: (
        "deep ocean tile in the cluster",
        lambda cluster: any(t.terrain is TerrainKind.DEEP_OCEAN for t in cluster.tiles),
    ),
    WHALE_PRESENCE: (
        "whales in the cluster",
        lambda cluster: any(t.special is SpecialKind.WHALES for t in cluster.tiles),
    ),
}

# Four alternative point values per family, ordered so that the leading
# alternatives of different families express different players' styles (a
# forest lover, a desert denier, a coast seeker, ...). Anchors: a center
# special is worth 1, 5 or 10 points to different players (plus an
# "ignore it" strategy), and desert earns only zero-or-negative opinions.
DEFAULT_POINT_TABLE: dict[str, tuple[int, int, int, int]] = {
    "terrain_grassland": (5, 12, 2, 8),
    "terrain_plains": (4, 10, 2, 7),
    "terrain_hills": (9, 1, 6, 3),
    "terrain_forest": (10, 1, 7, 3),
    "terrain_mountains": (2, -5, 0, -2),
    "terrain_desert": (0, -10, -2, -5),
    "terrain_swamp": (0, -6, -1, -3),
    "terrain_jungle": (1, -6, -1, -3),
    "terrain_tundra": (0, -8, -2, -4),
    SPECIAL_ON_CENTER: (1, 10, 0, 5),
    SPECIALS_AROUND: (3, 9, 1, 6),
    WATER_ACCESS: (8, 0, 5, 2),
    DEEP_OCEAN_ACCESS: (3, 0, 5, 1),
    WHALE_PRESENCE: (6, 0, 12, 2),
}


class KnowledgeBase:
    def __init__(self, point_table: dict[str, tuple[int, ...]]):
        self.families: dict[str, ConflictSet] = {}
        for family in sorted(point_table):
            if family not in FAMILY_CONDITIONS:
                raise ValueError(f"unknown rule family {family!r}")
            points = point_table[family]
            if len(points) < 2:
                raise ValueError(f"family {family!r} needs at least 2 alternatives")
            if len(set(points)) != len(points):
                raise ValueError(f"family {family!r} has duplicate point values")
            if any(not POINTS_MIN <= p <= POINTS_MAX for p in points):
                raise ValueError(f"family {family!r} has points outside [{POINTS_MIN}, {POINTS_MAX}]")
            condition = FAMILY_CONDITIONS[family][0]
            rules = tuple(
                ScoringRule(id=f"{family}_alt{i}", family=family, points=p)
                for i, p in enumerate(points)
            )
            self.families[family] = ConflictSet(family=family, condition=condition, rules=rules)

    @property
    def rule_count(self) -> int:
        return sum(len(cs.rules) for cs in self.families.values())

    def family(self, family_id: str) -> ConflictSet:
        return self.families[family_id]

    def scaled(self, factor: int) -> "KnowledgeBase":
        """Same KB with every point value multiplied by a positive integer."""
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return KnowledgeBase(
            {f: tuple(r.points * factor for r in cs.rules) for f, cs in self.families.items()}
        )


def default_kb() -> KnowledgeBase:
    kb = KnowledgeBase(DEFAULT_POINT_TABLE)
    assert len(kb.families) == 14 and kb.rule_count == 56
    return kb


def match_rules(kb: KnowledgeBase, cluster: MapCluster) -> list[ConflictSet]:
    """Applicable conflict sets, ordered by family id."""
    matched = []
    for family in sorted(kb.families):
        predicate = FAMILY_CONDITIONS[family][1]
        if predicate(cluster):
            matched.append(kb.families[family])
    return matched


def score_cluster(
    kb: KnowledgeBase, cluster: MapCluster, chooser: Chooser
) -> tuple[int, ScoreTrace]:
    """Total of the chosen rule per applicable family, with a full trace."""
    fired = []
    total = 0
    for conflict_set in match_rules(kb, cluster):
        choice = chooser(conflict_set)
        if isinstance(choice, ScoringRule):
            choice = RuleChoice(rule=choice, probabilities={choice.id: 1.0})
        if choice.rule not in conflict_set.rules:
            raise ValueError(
                f"chooser returned {choice.rule.id!r}, not a member of family {conflict_set.family!r}"
            )
        total += choice.rule.points
        fired.append(
            FiredRule(
                family=conflict_set.family,
                condition=conflict_set.condition,
                rule_id=choice.rule.id,
                points=choice.rule.points,
                alternatives=tuple(
                    (r.id, r.points, float(choice.probabilities.get(r.id, 0.0)))
                    for r in conflict_set.rules
                ),
            )
        )
    return total, ScoreTrace(fired=tuple(fired), total=total)


def max_points_chooser(conflict_set: ConflictSet) -> ScoringRule:
    return max(conflict_set.rules, key=lambda r: (r.points, r.id))


def fixed_chooser(selection: dict[str, str]) -> Chooser:
    """Chooser picking the named rule id per family."""

    def choose(conflict_set: ConflictSet) -> ScoringRule:
        wanted = selection[conflict_set.family]
        for r in conflict_set.rules:
            if r.id == wanted:
                return r
        raise KeyError(f"{wanted!r} not in family {conflict_set.family!r}")

    return choose


def explain(trace: ScoreTrace) -> list[str]:
    """Stable, line-oriented account of a scoring decision."""
    if not trace.fired:
        return ["no rules fired"]
    lines = []
    for fr in sorted(trace.fired, key=lambda f: f.family):
        alts = ", ".join(f"{rid}={pts:+d}@p{prob:.3f}" for rid, pts, prob in fr.alternatives)
        lines.append(
            f"{fr.family}: {fr.condition} -> {fr.rule_id} adds {fr.points:+d} points"
            f" [alternatives: {alts}]"
        )
    lines.append(f"total: {trace.total}")
    return lines


def save_kb(kb: KnowledgeBase, path) -> None:
    with open(path, "w") as fh:
        fh.write("# settlement scoring knowledge base v1\n")
        for family, cs in kb.families.items():
            fh.write(f"family {family}\n")
            for r in cs.rules:
                fh.write(f"  {r.id} {r.points}\n")


def load_kb(path) -> KnowledgeBase:
    table: dict[str, list[int]] = {}
    current: str | None = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("family "):
                current = line.split(None, 1)[1]
                table[current] = []
            else:
                if current is None:
                    raise ValueError(f"rule line before any family: {line!r}")
                _, points = line.rsplit(None, 1)
                table[current].append(int(points))
    return KnowledgeBase({f: tuple(ps) for f, ps in table.items()})


# -- trace (de)serialization for episode logs --------------------------------


def trace_to_dict(trace: ScoreTrace) -> dict:
    return {
        "total": trace.total,
        "fired": [
            {
                "family": fr.family,
                "condition": fr.condition,
                "rule_id": fr.rule_id,
                "points": fr.points,
                "alternatives": [[rid, pts, prob] for rid, pts, prob in fr.alternatives],
            }
            for fr in trace.fired
        ],
    }


def trace_from_dict(d: dict) -> ScoreTrace:
    return ScoreTrace(
        fired=tuple(
            FiredRule(
                family=fr["family"],
                condition=fr["condition"],
                rule_id=fr["rule_id"],
                points=fr["points"],
                alternatives=tuple((rid, int(pts), float(prob)) for rid, pts, prob in fr["alternatives"]),
            )
            for fr in d["fired"]
        ),
        total=d["total"],
    )
