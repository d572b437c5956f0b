"""Tabular Monte Carlo control over k-means-abstracted game states.

The continuous game state is summarized into a small numeric vector,
mapped to the nearest of k centroids (Lloyd's algorithm, 300-iteration
cap), and rule choices are resolved epsilon-greedily against running
state-action means. Every decision of an episode is credited with the
episode's final total game output; values are plain averages of those
rewards.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .engine import GameState, total_game_output
from .rulekb import ConflictSet, ScoringRule
from .world import TerrainKind, cluster_at, cluster_in_bounds

STATE_FEATURE_NAMES = (
    "turn",
    "city_count",
    "total_citizens",
    "tgo_so_far",
    "settlers_in_play",
    "mean_owned_tile_weight",
    "specials_owned",
    "coast_cities",
)


def state_features(
    state: GameState, player_id: int, names: tuple[str, ...] = STATE_FEATURE_NAMES
) -> np.ndarray:
    """Numeric summary of a game state for one player, in `names` order."""
    player = state.player(player_id)
    owned = [t for t in state.map.tiles if t.owner == player_id]
    if owned:
        mean_weight = sum(state.weights[(t.x, t.y)] for t in owned) / len(owned)
        specials_owned = sum(1 for t in owned if t.special is not None)
    else:
        mean_weight = 0.0
        specials_owned = 0
    coast = 0
    for c in player.cities:
        tiles = cluster_at(state.map, c.coord).tiles if cluster_in_bounds(state.map, c.coord) else ()
        if any(t.terrain in (TerrainKind.OCEAN, TerrainKind.DEEP_OCEAN) for t in tiles):
            coast += 1
    values = {
        "turn": float(state.turn),
        "city_count": float(len(player.cities)),
        "total_citizens": float(sum(c.citizens for c in player.cities)),
        "tgo_so_far": float(total_game_output(state, player_id, state.turn)),
        "settlers_in_play": float(len(player.settlers)),
        "mean_owned_tile_weight": float(mean_weight),
        "specials_owned": float(specials_owned),
        "coast_cities": float(coast),
    }
    try:
        return np.array([values[n] for n in names], dtype=float)
    except KeyError as exc:
        raise ValueError(f"unknown state feature {exc.args[0]!r}") from exc


# ---------------------------------------------------------------------------
# k-means state abstraction


@dataclass
class ClusterModel:
    centroids: np.ndarray  # (k, d), in normalized space
    feature_min: np.ndarray
    feature_max: np.ndarray
    inertia: float
    iterations: int
    inertia_history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def normalize(self, points: np.ndarray) -> np.ndarray:
        span = self.feature_max - self.feature_min
        out = np.zeros_like(points, dtype=float)
        nz = span != 0
        out[..., nz] = (points[..., nz] - self.feature_min[nz]) / span[nz]
        return out


def kmeans_fit(points: np.ndarray, k: int, max_iter: int = 300, seed: int = 0) -> ClusterModel:
    """Lloyd's algorithm on min-max-normalized points, k-means++ seeding.

    Iterates to an assignment fixpoint or `max_iter`, whichever first;
    the recorded inertia history is non-increasing.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = points.shape[0]
    if n < k:
        raise ValueError(f"{n} points cannot support k={k}")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")

    feature_min = points.min(axis=0)
    feature_max = points.max(axis=0)
    span = feature_max - feature_min
    x = np.zeros_like(points)
    nz = span != 0
    x[:, nz] = (points[:, nz] - feature_min[nz]) / span[nz]

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, k, rng)

    labels = None
    history: list[float] = []
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)  # ties -> lowest index
        history.append(float(d2[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)

    return ClusterModel(
        centroids=centroids,
        feature_min=feature_min,
        feature_max=feature_max,
        inertia=history[-1],
        iterations=iterations,
        inertia_history=history,
    )


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]), dtype=float)
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = x[rng.integers(n)]
        else:
            centroids[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))
    return centroids


def assign_state(model: ClusterModel, features: np.ndarray) -> int:
    """Nearest-centroid id in normalized space; ties go to the lowest index."""
    features = np.asarray(features, dtype=float)
    if features.shape != (model.centroids.shape[1],):
        raise ValueError(
            f"feature dimension {features.shape} does not match model ({model.centroids.shape[1]},)"
        )
    z = model.normalize(features)
    d2 = ((model.centroids - z) ** 2).sum(axis=1)
    return int(np.argmin(d2))


# ---------------------------------------------------------------------------
# value table and epsilon-greedy conflict resolution


@dataclass
class RunningMean:
    count: int = 0
    mean: float = 0.0

    def add(self, reward: float) -> None:
        self.count += 1
        self.mean += (reward - self.mean) / self.count


@dataclass(frozen=True)
class DecisionRecord:
    state_id: int
    family: str
    rule_id: str
    turn: int


@dataclass
class Policy:
    epsilon: float = 0.1
    seed: int = 0
    decay: float = 1.0
    min_epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.decay < 0 or not 0.0 <= self.min_epsilon <= 1.0:
            raise ValueError("invalid epsilon schedule")
        self.rng = random.Random(self.seed)
        self.current_epsilon = self.epsilon

    def advance_episode(self) -> None:
        # epsilon stays within [min_epsilon, 1] whatever the schedule
        self.current_epsilon = min(1.0, max(self.min_epsilon, self.current_epsilon * self.decay))


class ValueTable:
    """Running means of episode rewards per (state, family, rule) and per state."""

    def __init__(self, meta: dict | None = None):
        self.q: dict[tuple[int, str, str], RunningMean] = {}
        self.v: dict[int, RunningMean] = {}
        self.meta = dict(meta or {})

    def q_entry(self, state_id: int, family: str, rule_id: str) -> RunningMean | None:
        return self.q.get((state_id, family, rule_id))

    def q_mean(self, state_id: int, family: str, rule_id: str) -> float | None:
        entry = self.q.get((state_id, family, rule_id))
        return entry.mean if entry else None

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ValueTable)
            and self.q == other.q
            and self.v == other.v
            and self.meta == other.meta
        )


def greedy_rule(table: ValueTable, state_id: int, conflict_set: ConflictSet) -> ScoringRule:
    """Highest-mean rule; unvisited rules rank above all visited, ties by id."""
    best = None
    for rule in sorted(conflict_set.rules, key=lambda r: r.id):
        entry = table.q_entry(state_id, conflict_set.family, rule.id)
        q = float("inf") if entry is None else entry.mean
        if best is None or q > best[0]:
            best = (q, rule)
    assert best is not None
    return best[1]


def choose(
    table: ValueTable,
    policy: Policy,
    state_id: int,
    conflict_set: ConflictSet,
    turn: int = 0,
) -> tuple[ScoringRule, DecisionRecord]:
    """Epsilon-greedy rule selection with a decision record for credit assignment."""
    if not conflict_set.rules:
        raise ValueError(f"conflict set {conflict_set.family!r} is empty")
    eps = policy.current_epsilon
    if eps > 0 and policy.rng.random() < eps:
        rules = sorted(conflict_set.rules, key=lambda r: r.id)
        rule = rules[policy.rng.randrange(len(rules))]
    else:
        rule = greedy_rule(table, state_id, conflict_set)
    return rule, DecisionRecord(state_id=state_id, family=conflict_set.family, rule_id=rule.id, turn=turn)


def selection_probabilities(
    table: ValueTable, policy: Policy, state_id: int, conflict_set: ConflictSet
) -> dict[str, float]:
    """Probability of each alternative under the current policy."""
    n = len(conflict_set.rules)
    greedy = greedy_rule(table, state_id, conflict_set)
    eps = policy.current_epsilon
    return {
        r.id: (1.0 - eps) + eps / n if r.id == greedy.id else eps / n
        for r in conflict_set.rules
    }


def update_from_episode(table: ValueTable, records: list[DecisionRecord], reward: float) -> ValueTable:
    """Every-visit credit: each record pulls its q toward the episode reward;
    V updates once per distinct state visited."""
    if reward < 0:
        raise ValueError("episode reward must be non-negative")
    for rec in records:
        key = (rec.state_id, rec.family, rec.rule_id)
        entry = table.q.get(key)
        if entry is None:
            entry = table.q[key] = RunningMean()
        entry.add(reward)
    for state_id in sorted({rec.state_id for rec in records}):
        entry = table.v.get(state_id)
        if entry is None:
            entry = table.v[state_id] = RunningMean()
        entry.add(reward)
    return table


# ---------------------------------------------------------------------------
# value table file format


def save_table(table: ValueTable, path) -> None:
    """Line-oriented text: header metadata, V rows, Q rows, entry count."""
    with open(path, "w") as fh:
        fh.write("# value table v1\n")
        for key in sorted(table.meta):
            fh.write(f"meta {key} {table.meta[key]}\n")
        fh.write(f"entries {len(table.v) + len(table.q)}\n")
        for state_id in sorted(table.v):
            e = table.v[state_id]
            fh.write(f"V {state_id} {e.count} {e.mean!r}\n")
        for state_id, family, rule_id in sorted(table.q):
            e = table.q[(state_id, family, rule_id)]
            fh.write(f"Q {state_id} {family} {rule_id} {e.count} {e.mean!r}\n")


def load_table(path) -> ValueTable:
    table = ValueTable()
    declared = None
    seen = 0
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "meta":
                table.meta[parts[1]] = " ".join(parts[2:])
            elif parts[0] == "entries":
                declared = int(parts[1])
            elif parts[0] == "V":
                if len(parts) != 4:
                    raise ValueError(f"malformed V row: {line!r}")
                table.v[int(parts[1])] = RunningMean(count=int(parts[2]), mean=float(parts[3]))
                seen += 1
            elif parts[0] == "Q":
                if len(parts) != 6:
                    raise ValueError(f"malformed Q row: {line!r}")
                table.q[(int(parts[1]), parts[2], parts[3])] = RunningMean(
                    count=int(parts[4]), mean=float(parts[5])
                )
                seen += 1
            else:
                raise ValueError(f"unknown value-table row: {line!r}")
    if declared is None or declared != seen:
        raise ValueError(f"{path}: truncated table ({seen} rows, declared {declared})")
    return table
