"""Turn-based settlement simulation.

Cities work tiles of their 21-tile cluster, producing food/production/trade
per turn; trade is split into gold/luxury/science. A city's output over the
first T turns is

    sum_t (gold + luxury + science + food + 2*production + trade)

with turns before founding counting as zero, and the total game output (TGO)
is that sum over all of a player's cities. TGO is the episode reward and the
quantity the placement evaluators compete on.

Division of labour: the *agent* only assigns settler targets (via its
evaluator); the engine walks settlers one tile per turn and founds a city
when a settler sits on its still-legal target. Everything else (citizen
assignment, yields, growth, settler production) is fixed shared dynamics, so
the placement choice is the only evaluator-dependent behaviour.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
from dataclasses import dataclass, field

from .world import (
    GameMap,
    MapGenConfig,
    SpecialKind,
    TerrainKind,
    cluster_at,
    cluster_in_bounds,
    decode_map,
    encode_map,
    generate_map,
)


class SimulationError(RuntimeError):
    """Stepping a finished game, or an episode in an unusable state."""


@dataclass(frozen=True)
class YieldTriple:
    food: int = 0
    production: int = 0
    trade: int = 0

    def __add__(self, other: "YieldTriple") -> "YieldTriple":
        return YieldTriple(
            self.food + other.food,
            self.production + other.production,
            self.trade + other.trade,
        )


@dataclass(frozen=True)
class OutputPoints:
    gold: int = 0
    luxury: int = 0
    science: int = 0
    food: int = 0
    production: int = 0
    trade: int = 0

    def weighted_total(self) -> int:
        """Production counts double (spendable as half-gold on city projects)."""
        return self.gold + self.luxury + self.science + self.food + 2 * self.production + self.trade


@dataclass(frozen=True)
class Ruleset:
    terrain_yields: dict[TerrainKind, YieldTriple]
    special_bonuses: dict[SpecialKind, YieldTriple]
    river_trade_bonus: int = 1
    # the city center tile counts as developed; without extra center food a
    # size-1 city can never out-produce its own consumption and never grows
    center_bonus: YieldTriple = YieldTriple(food=2, production=1)


def default_ruleset() -> Ruleset:
    terrain_yields = {
        TerrainKind.GRASSLAND: YieldTriple(2, 0, 0),
        TerrainKind.PLAINS: YieldTriple(1, 1, 0),
        TerrainKind.HILLS: YieldTriple(1, 2, 0),
        TerrainKind.FOREST: YieldTriple(1, 2, 0),
        TerrainKind.MOUNTAINS: YieldTriple(0, 2, 0),
        TerrainKind.DESERT: YieldTriple(0, 1, 0),
        TerrainKind.SWAMP: YieldTriple(1, 0, 0),
        TerrainKind.JUNGLE: YieldTriple(1, 0, 0),
        TerrainKind.TUNDRA: YieldTriple(1, 0, 0),
        TerrainKind.OCEAN: YieldTriple(1, 0, 2),
        TerrainKind.DEEP_OCEAN: YieldTriple(1, 0, 1),
    }
    special_bonuses = {
        SpecialKind.BULL: YieldTriple(production=2),
        SpecialKind.OASIS: YieldTriple(food=3),
        SpecialKind.GEMS: YieldTriple(trade=3),
        SpecialKind.GOLD: YieldTriple(trade=4),
        SpecialKind.IRON: YieldTriple(production=2),
        SpecialKind.WINE: YieldTriple(trade=3),
        SpecialKind.SILK: YieldTriple(trade=2),
        SpecialKind.PHEASANT: YieldTriple(food=2),
        SpecialKind.WHEAT: YieldTriple(food=2),
        SpecialKind.HORSES: YieldTriple(production=1),
        SpecialKind.FRUIT: YieldTriple(food=2),
        SpecialKind.FURS: YieldTriple(trade=2),
        SpecialKind.DEER: YieldTriple(food=2),
        SpecialKind.PEAT: YieldTriple(production=2),
        SpecialKind.SPICE: YieldTriple(trade=3),
        SpecialKind.FISH: YieldTriple(food=2),
        # boosts two products at once, which is why players favour it
        SpecialKind.WHALES: YieldTriple(food=1, production=1),
    }
    return Ruleset(terrain_yields=terrain_yields, special_bonuses=special_bonuses)


@dataclass
class GameConfig:
    turn_limit: int = 120
    trade_split: tuple[float, float, float] = (0.5, 0.0, 0.5)  # gold, luxury, science
    growth_threshold_base: int = 6
    food_per_citizen: int = 2
    settler_production_cost: int = 10
    settler_population_cost: int = 1
    min_city_distance: int = 2
    max_cities: int = 8
    initial_settlers: int = 1
    start_position: tuple[int, int] | None = None
    max_city_size: int = 21
    ruleset: Ruleset = field(default_factory=default_ruleset)

    def __post_init__(self):
        if self.turn_limit < 1:
            raise ValueError("turn_limit must be >= 1")
        if abs(sum(self.trade_split) - 1.0) > 1e-9 or any(r < 0 for r in self.trade_split):
            raise ValueError("trade_split rates must be non-negative and sum to 1")


def tile_yield(tile, ruleset: Ruleset) -> YieldTriple:
    """Base terrain yield plus special bonus plus river trade bonus."""
    y = ruleset.terrain_yields[tile.terrain]
    if tile.special is not None:
        y = y + ruleset.special_bonuses[tile.special]
    if tile.river:
        y = y + YieldTriple(trade=ruleset.river_trade_bonus)
    return y


def tile_weight(tile, ruleset: Ruleset) -> int:
    """Per-turn contribution of a worked tile to the weighted output sum.

    food + 2*production + trade + (gold+luxury+science); the derived points
    always partition the trade, so the last term equals trade again.
    """
    y = tile_yield(tile, ruleset)
    return y.food + 2 * y.production + 2 * y.trade


def convert_trade(trade: int, rates: tuple[float, float, float]) -> tuple[int, int, int]:
    """Split trade into (gold, luxury, science): floors, remainder to science."""
    if abs(sum(rates) - 1.0) > 1e-9 or any(r < 0 for r in rates):
        raise ValueError(f"invalid trade rates {rates}")
    if trade < 0:
        raise ValueError("negative trade")
    gold = math.floor(trade * rates[0])
    luxury = math.floor(trade * rates[1])
    science = trade - gold - luxury
    return gold, luxury, science


@dataclass
class City:
    id: int
    player: int
    x: int
    y: int
    founded_turn: int
    citizens: int = 1
    worked: set[tuple[int, int]] = field(default_factory=set)
    food_store: int = 0
    production_store: int = 0
    per_turn_history: list[OutputPoints] = field(default_factory=list)

    @property
    def coord(self) -> tuple[int, int]:
        return (self.x, self.y)


@dataclass
class Settler:
    id: int
    player: int
    x: int
    y: int
    target: tuple[int, int] | None = None
    # decision payload attached by the agent at targeting time, logged on founding
    decision: dict | None = None


@dataclass
class PlayerState:
    player_id: int
    cities: list[City] = field(default_factory=list)
    settlers: list[Settler] = field(default_factory=list)


@dataclass
class FoundingRecord:
    turn: int
    player: int
    city_id: int
    x: int
    y: int
    score: float | None = None
    features: list[float] | None = None
    trace: dict | None = None
    evaluator: str | None = None
    decided_turn: int | None = None


@dataclass
class CityTurnRecord:
    city_id: int
    player: int
    x: int
    y: int
    citizens: int
    worked: list[tuple[int, int]]
    points: OutputPoints


@dataclass
class TurnRecord:
    turn: int
    cities: list[CityTurnRecord] = field(default_factory=list)
    targets: list[tuple[int, tuple[int, int]]] = field(default_factory=list)
    foundings: list[FoundingRecord] = field(default_factory=list)


@dataclass
class GameState:
    map: GameMap
    config: GameConfig
    turn: int = 1
    players: list[PlayerState] = field(default_factory=list)
    rng: random.Random = field(default_factory=random.Random)
    finished: bool = False
    next_city_id: int = 0
    next_settler_id: int = 0
    # per-episode caches/journal, rebuilt by new_game
    yields: dict[tuple[int, int], YieldTriple] = field(default_factory=dict, repr=False)
    weights: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)
    events: TurnRecord | None = field(default=None, repr=False)

    def player(self, player_id: int) -> PlayerState:
        return self.players[player_id]

    def all_cities(self):
        for p in self.players:
            yield from p.cities


def new_game(game_map: GameMap, config: GameConfig, seed: int, num_players: int = 1) -> GameState:
    state = GameState(
        map=game_map,
        config=config,
        players=[PlayerState(player_id=i) for i in range(num_players)],
        rng=random.Random(seed),
    )
    rules = config.ruleset
    for t in game_map.tiles:
        y = tile_yield(t, rules)
        state.yields[(t.x, t.y)] = y
        state.weights[(t.x, t.y)] = y.food + 2 * y.production + 2 * y.trade
    return state


def add_settler(state: GameState, player_id: int, coord: tuple[int, int]) -> Settler:
    s = Settler(id=state.next_settler_id, player=player_id, x=coord[0], y=coord[1])
    state.next_settler_id += 1
    state.player(player_id).settlers.append(s)
    return s


def default_start_position(game_map: GameMap) -> tuple[int, int]:
    """Buildable cluster-valid tile closest to the map center; ties by (y, x)."""
    cx, cy = (game_map.width - 1) / 2, (game_map.height - 1) / 2
    best = None
    for y in range(2, game_map.height - 2):
        for x in range(2, game_map.width - 2):
            if not game_map.tile(x, y).terrain.buildable:
                continue
            d = (x - cx) ** 2 + (y - cy) ** 2
            key = (d, y, x)
            if best is None or key < best[0]:
                best = (key, (x, y))
    if best is None:
        raise SimulationError("map has no buildable tile with an in-bounds cluster")
    return best[1]


def place_initial_settlers(state: GameState, player_id: int = 0) -> None:
    start = state.config.start_position or default_start_position(state.map)
    for _ in range(state.config.initial_settlers):
        add_settler(state, player_id, start)


def city_distance(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def is_legal_founding_site(state: GameState, player_id: int, coord: tuple[int, int]) -> bool:
    x, y = coord
    if not state.map.in_bounds(x, y):
        return False
    tile = state.map.tile(x, y)
    if not tile.terrain.buildable:
        return False
    if not cluster_in_bounds(state.map, coord):
        return False
    if tile.owner is not None and tile.owner != player_id:
        return False
    for c in state.all_cities():
        if city_distance(coord, c.coord) < state.config.min_city_distance:
            return False
    return True


def legal_founding_sites(state: GameState, player_id: int) -> list[tuple[int, int]]:
    """All legal centers, scanned in (y, x) order."""
    sites = []
    for y in range(2, state.map.height - 2):
        for x in range(2, state.map.width - 2):
            if is_legal_founding_site(state, player_id, (x, y)):
                sites.append((x, y))
    return sites


def found_city(state: GameState, player_id: int, coord: tuple[int, int]) -> City:
    """Found a city of one citizen working its center; consumes a settler there."""
    x, y = coord
    tile = state.map.tile(x, y)
    if not tile.terrain.buildable:
        raise ValueError(f"cannot found on {tile.terrain.value} at {coord}")
    if not cluster_in_bounds(state.map, coord):
        raise ValueError(f"cluster at {coord} leaves the map")
    if tile.owner is not None and tile.owner != player_id:
        raise ValueError(f"tile {coord} is claimed by player {tile.owner}")
    for c in state.all_cities():
        if city_distance(coord, c.coord) < state.config.min_city_distance:
            raise ValueError(f"{coord} is within {state.config.min_city_distance} of city {c.id}")
    player = state.player(player_id)
    settler = next((s for s in player.settlers if (s.x, s.y) == coord), None)
    if settler is None:
        raise ValueError(f"player {player_id} has no settler at {coord}")

    city = City(id=state.next_city_id, player=player_id, x=x, y=y, founded_turn=state.turn)
    state.next_city_id += 1
    player.cities.append(city)
    player.settlers.remove(settler)
    for t in cluster_at(state.map, coord).tiles:
        if t.owner is None:
            t.owner = player_id
    # center is worked from the founding turn on; evict any neighbour working it
    if tile.worked_by is not None:
        for other in state.all_cities():
            if other.id == tile.worked_by:
                other.worked.discard(coord)
    city.worked = {coord}
    tile.worked_by = city.id
    state.map.city_seats[coord] = player_id

    if state.events is not None:
        d = settler.decision or {}
        state.events.foundings.append(
            FoundingRecord(
                turn=state.turn,
                player=player_id,
                city_id=city.id,
                x=x,
                y=y,
                score=d.get("score"),
                features=d.get("features"),
                trace=d.get("trace"),
                evaluator=d.get("evaluator"),
                decided_turn=d.get("decided_turn"),
            )
        )
    return city


def set_settler_target(
    state: GameState, settler: Settler, target: tuple[int, int], decision: dict | None = None
) -> None:
    settler.target = target
    if decision is not None:
        decision = dict(decision)
        decision.setdefault("decided_turn", state.turn)
    settler.decision = decision
    if state.events is not None:
        state.events.targets.append((settler.id, target))


def assign_citizens(
    city: City,
    game_map: GameMap,
    ruleset: Ruleset,
    weights: dict[tuple[int, int], int] | None = None,
) -> set[tuple[int, int]]:
    """Greedy worked-set: center always, then best eligible tiles by weight.

    Eligible tiles are cluster tiles not worked by another city and not
    claimed by another player; ties break by (y, x) ascending.
    """
    cluster = cluster_at(game_map, city.coord)
    candidates = []
    for t in cluster.tiles:
        if (t.x, t.y) == city.coord:
            continue
        if t.worked_by is not None and t.worked_by != city.id:
            continue
        if t.owner is not None and t.owner != city.player:
            continue
        w = weights[(t.x, t.y)] if weights is not None else tile_weight(t, ruleset)
        candidates.append((-w, t.y, t.x))
    candidates.sort()
    worked = {city.coord}
    for _, y, x in candidates[: max(0, city.citizens - 1)]:
        worked.add((x, y))
    return worked


def _eligible_tile_count(state: GameState, city: City) -> int:
    n = 0
    for t in cluster_at(state.map, city.coord).tiles:
        if t.worked_by is not None and t.worked_by != city.id:
            continue
        if t.owner is not None and t.owner != city.player:
            continue
        n += 1
    return n


def _settler_step(state: GameState, settler: Settler) -> None:
    tx, ty = settler.target  # type: ignore[misc]
    best = None
    current = city_distance((settler.x, settler.y), (tx, ty))
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            nx, ny = settler.x + dx, settler.y + dy
            if not state.map.in_bounds(nx, ny):
                continue
            if not state.map.tile(nx, ny).terrain.buildable:
                continue
            d = city_distance((nx, ny), (tx, ty))
            if d >= current:
                continue
            key = (d, ny, nx)
            if best is None or key < best[0]:
                best = (key, (nx, ny))
    if best is not None:
        settler.x, settler.y = best[1]


def _settler_phase(state: GameState) -> None:
    for player in state.players:
        for settler in list(player.settlers):
            if settler.target is None:
                continue
            if (settler.x, settler.y) == settler.target:
                if is_legal_founding_site(state, player.player_id, settler.target):
                    found_city(state, player.player_id, settler.target)
                else:
                    settler.target = None  # agent retargets next turn
            else:
                _settler_step(state, settler)
                if (settler.x, settler.y) == settler.target and is_legal_founding_site(
                    state, player.player_id, settler.target
                ):
                    found_city(state, player.player_id, settler.target)


def _city_phase(state: GameState) -> None:
    cfg = state.config
    rules = cfg.ruleset
    cities = sorted(state.all_cities(), key=lambda c: c.id)

    # re-book non-center worked tiles each turn, oldest city first; the
    # center stays booked so no neighbour can ever claim it
    for city in cities:
        for coord in city.worked:
            if coord == city.coord:
                continue
            tile = state.map.tile(*coord)
            if tile.worked_by == city.id:
                tile.worked_by = None
    for city in cities:
        worked = assign_citizens(city, state.map, rules, weights=state.weights)
        for coord in worked:
            state.map.tile(*coord).worked_by = city.id
        city.worked = worked
        if len(worked) < city.citizens:
            city.citizens = len(worked)  # displaced citizens disband (defensive)

    for city in cities:
        total = YieldTriple()
        for coord in city.worked:
            total = total + state.yields[coord]
        total = total + rules.center_bonus
        gold, luxury, science = convert_trade(total.trade, cfg.trade_split)
        points = OutputPoints(
            gold=gold,
            luxury=luxury,
            science=science,
            food=total.food,
            production=total.production,
            trade=total.trade,
        )
        city.per_turn_history.append(points)
        if state.events is not None:
            state.events.cities.append(
                CityTurnRecord(
                    city_id=city.id,
                    player=city.player,
                    x=city.x,
                    y=city.y,
                    citizens=city.citizens,
                    worked=sorted(city.worked, key=lambda c: (c[1], c[0])),
                    points=points,
                )
            )

        city.food_store = max(0, city.food_store + total.food - cfg.food_per_citizen * city.citizens)
        population_before = city.citizens
        threshold = cfg.growth_threshold_base * city.citizens
        if (
            city.food_store >= threshold
            and city.citizens < cfg.max_city_size
            and _eligible_tile_count(state, city) > city.citizens
        ):
            city.citizens += 1
            city.food_store -= threshold

        player = state.player(city.player)
        expansion_slots = len(player.cities) + len(player.settlers) < cfg.max_cities
        if city.citizens >= 3 and expansion_slots:
            city.production_store += total.production
            if city.production_store >= cfg.settler_production_cost:
                city.production_store -= cfg.settler_production_cost
                city.citizens -= cfg.settler_population_cost
                add_settler(state, city.player, city.coord)

        if city.citizens != population_before:
            # population changed after this turn's work: rebook now so the
            # worked set always matches the head count (production applies
            # from the next turn)
            _rebook_worked(state, city)


def _rebook_worked(state: GameState, city: City) -> None:
    for coord in city.worked:
        if coord == city.coord:
            continue
        tile = state.map.tile(*coord)
        if tile.worked_by == city.id:
            tile.worked_by = None
    worked = assign_citizens(city, state.map, state.config.ruleset, weights=state.weights)
    for coord in worked:
        state.map.tile(*coord).worked_by = city.id
    city.worked = worked
    if len(worked) < city.citizens:
        city.citizens = len(worked)


def step_turn(state: GameState, agent=None) -> TurnRecord:
    """Play one turn: agent targets settlers, settlers walk/found, cities produce."""
    if state.finished:
        raise SimulationError(f"game already finished at turn {state.turn}")
    state.events = TurnRecord(turn=state.turn)
    if agent is not None:
        agent.act(state)
    _settler_phase(state)
    _city_phase(state)
    record = state.events
    state.events = None
    if state.turn >= state.config.turn_limit:
        state.finished = True
    else:
        state.turn += 1
    return record


def city_output(city: City, T: int) -> int:
    """Accumulated weighted points through turn T; pre-founding turns are zero."""
    total = 0
    for i, points in enumerate(city.per_turn_history):
        if city.founded_turn + i > T:
            break
        total += points.weighted_total()
    return total


def total_game_output(state: GameState, player_id: int, T: int | None = None) -> int:
    if T is None:
        T = state.turn
    return sum(city_output(c, T) for c in state.player(player_id).cities)


# ---------------------------------------------------------------------------
# Episode driving and the line-delimited log format


@dataclass
class EpisodeLog:
    seed: int
    map_text: str
    config: GameConfig
    evaluator: str
    player: int
    turns: list[TurnRecord]
    final_tgo: int

    def foundings(self) -> list[FoundingRecord]:
        return [f for tr in self.turns for f in tr.foundings]

    def city_points(self, city_id: int) -> list[OutputPoints]:
        """Per-turn output of one city, in turn order."""
        return [
            cr.points
            for tr in self.turns
            for cr in tr.cities
            if cr.city_id == city_id
        ]

    def city_ids(self, player: int | None = None) -> list[int]:
        ids: list[int] = []
        for tr in self.turns:
            for f in tr.foundings:
                if player is None or f.player == player:
                    ids.append(f.city_id)
        return ids


def run_episode(
    agent,
    config: GameConfig,
    seed: int,
    *,
    game_map: GameMap | None = None,
    mapgen: MapGenConfig | None = None,
    evaluator_name: str = "unknown",
    player_id: int = 0,
    on_turn=None,
) -> EpisodeLog:
    """Run one full game; the log replays to the same final TGO."""
    if game_map is not None:
        episode_map = game_map.copy()
    else:
        episode_map = generate_map(mapgen or MapGenConfig(), seed)
    map_text = encode_map(episode_map)
    state = new_game(episode_map, config, seed)
    place_initial_settlers(state, player_id)
    turns = []
    while not state.finished:
        turns.append(step_turn(state, agent))
        if on_turn is not None:
            on_turn(state)
    tgo = total_game_output(state, player_id, config.turn_limit)
    return EpisodeLog(
        seed=seed,
        map_text=map_text,
        config=config,
        evaluator=evaluator_name,
        player=player_id,
        turns=turns,
        final_tgo=tgo,
    )


class ReplayAgent:
    """Re-applies the logged settler target assignments turn by turn."""

    def __init__(self, log: EpisodeLog):
        self._by_turn = {tr.turn: tr.targets for tr in log.turns}

    def act(self, state: GameState) -> None:
        for settler_id, target in self._by_turn.get(state.turn, []):
            for player in state.players:
                for settler in player.settlers:
                    if settler.id == settler_id:
                        set_settler_target(state, settler, tuple(target))


def replay_episode(log: EpisodeLog) -> int:
    """Re-run the logged episode from its seed and decisions; returns final TGO."""
    episode_map = decode_map(log.map_text)
    state = new_game(episode_map, log.config, log.seed)
    place_initial_settlers(state, log.player)
    agent = ReplayAgent(log)
    while not state.finished:
        step_turn(state, agent)
    return total_game_output(state, log.player, log.config.turn_limit)


# -- config / log (de)serialization -----------------------------------------


def config_to_dict(config: GameConfig) -> dict:
    d = dataclasses.asdict(config)
    d["ruleset"] = {
        "terrain_yields": {
            k.value: [y.food, y.production, y.trade] for k, y in config.ruleset.terrain_yields.items()
        },
        "special_bonuses": {
            k.value: [y.food, y.production, y.trade] for k, y in config.ruleset.special_bonuses.items()
        },
        "river_trade_bonus": config.ruleset.river_trade_bonus,
        "center_bonus": [
            config.ruleset.center_bonus.food,
            config.ruleset.center_bonus.production,
            config.ruleset.center_bonus.trade,
        ],
    }
    return d


def config_from_dict(d: dict) -> GameConfig:
    d = dict(d)
    rs = d.pop("ruleset")
    ruleset = Ruleset(
        terrain_yields={TerrainKind(k): YieldTriple(*v) for k, v in rs["terrain_yields"].items()},
        special_bonuses={SpecialKind(k): YieldTriple(*v) for k, v in rs["special_bonuses"].items()},
        river_trade_bonus=rs["river_trade_bonus"],
        center_bonus=YieldTriple(*rs["center_bonus"]),
    )
    d["trade_split"] = tuple(d["trade_split"])
    if d.get("start_position") is not None:
        d["start_position"] = tuple(d["start_position"])
    return GameConfig(ruleset=ruleset, **d)


def _points_to_dict(p: OutputPoints) -> dict:
    return dataclasses.asdict(p)


def write_episode_log(log: EpisodeLog, path) -> None:
    """One JSON record per line: header, one record per turn, footer."""
    with open(path, "w") as fh:
        header = {
            "kind": "header",
            "seed": log.seed,
            "map": log.map_text,
            "evaluator": log.evaluator,
            "player": log.player,
            "config": config_to_dict(log.config),
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for tr in log.turns:
            rec = {
                "kind": "turn",
                "turn": tr.turn,
                "cities": [
                    {
                        "city_id": cr.city_id,
                        "player": cr.player,
                        "x": cr.x,
                        "y": cr.y,
                        "citizens": cr.citizens,
                        "worked": [list(c) for c in cr.worked],
                        "points": _points_to_dict(cr.points),
                    }
                    for cr in tr.cities
                ],
                "targets": [[sid, list(t)] for sid, t in tr.targets],
                "foundings": [dataclasses.asdict(f) for f in tr.foundings],
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        footer = {"kind": "footer", "final_tgo": log.final_tgo, "turns": len(log.turns)}
        fh.write(json.dumps(footer, sort_keys=True) + "\n")


def read_episode_log(path) -> EpisodeLog:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("kind") != "header" or lines[-1].get("kind") != "footer":
        raise ValueError(f"{path}: not a complete episode log")
    header, footer = lines[0], lines[-1]
    turns = []
    for rec in lines[1:-1]:
        if rec.get("kind") != "turn":
            raise ValueError(f"{path}: unexpected record kind {rec.get('kind')!r}")
        turns.append(
            TurnRecord(
                turn=rec["turn"],
                cities=[
                    CityTurnRecord(
                        city_id=c["city_id"],
                        player=c["player"],
                        x=c["x"],
                        y=c["y"],
                        citizens=c["citizens"],
                        worked=[tuple(w) for w in c["worked"]],
                        points=OutputPoints(**c["points"]),
                    )
                    for c in rec["cities"]
                ],
                targets=[(sid, tuple(t)) for sid, t in rec["targets"]],
                foundings=[FoundingRecord(**f) for f in rec["foundings"]],
            )
        )
    if footer["turns"] != len(turns):
        raise ValueError(f"{path}: footer reports {footer['turns']} turns, found {len(turns)}")
    return EpisodeLog(
        seed=header["seed"],
        map_text=header["map"],
        config=config_from_dict(header["config"]),
        evaluator=header["evaluator"],
        player=header["player"],
        turns=turns,
        final_tgo=footer["final_tgo"],
    )
