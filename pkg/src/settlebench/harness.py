"""Experiment orchestration: the two placement evaluators behind one agent.

Both arms drive the identical settlement agent; the evaluator scoring
candidate city centers is the only moving part. The rule arm resolves
rule conflicts with the learned epsilon-greedy policy and keeps learning
between episodes; the NN arm scores with a frozen regressor trained on a
bootstrap corpus of random-agent games.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import engine, features, mlp, rl, rulekb
from .engine import EpisodeLog, GameConfig, GameState
from .world import GameMap, MapGenConfig, cluster_at, decode_map, encode_map, generate_map


def episode_seed(base_seed: int, index: int, stream: str = "episode") -> int:
    """Documented derivation: first 8 bytes of sha256('<base>:<stream>:<i>')."""
    digest = hashlib.sha256(f"{base_seed}:{stream}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# evaluators


class Evaluator:
    """Scores candidate city centers. Stateless unless documented otherwise."""

    kind = "abstract"

    def begin_episode(self, state: GameState) -> None:
        pass

    def score_many(self, state: GameState, player_id: int, centers) -> list[float]:
        raise NotImplementedError

    def score(self, state: GameState, player_id: int, center) -> float:
        return self.score_many(state, player_id, [center])[0]

    def trace_for(self, center):
        """Rule trace from the most recent scoring pass, if any."""
        return None


class ConstantEvaluator(Evaluator):
    kind = "constant"

    def __init__(self, value: float = 0.0):
        self.value = value

    def score_many(self, state, player_id, centers):
        return [self.value for _ in centers]


class RandomEvaluator(Evaluator):
    """Uniform random scores; used for bootstrap corpora."""

    kind = "random"

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def score_many(self, state, player_id, centers):
        return [float(v) for v in self.rng.random(len(centers))]


class RuleEvaluator(Evaluator):
    """Knowledge-base scoring with RL conflict resolution.

    Each scoring pass resolves every conflict set once per game state and
    applies that resolution to all scored centers, so a pass ranks the
    whole map under one coherent rule combination (scores vary from game
    to game, not tile to tile). One DecisionRecord per resolved family per
    pass; the experiment credits them all with the episode's final TGO.
    """

    kind = "kb"

    def __init__(
        self,
        kb: rulekb.KnowledgeBase,
        cluster_model: rl.ClusterModel,
        table: rl.ValueTable,
        policy: rl.Policy,
    ):
        self.kb = kb
        self.cluster_model = cluster_model
        self.table = table
        self.policy = policy
        self.records: list[rl.DecisionRecord] = []
        self._traces: dict[tuple[int, int], rulekb.ScoreTrace] = {}

    def begin_episode(self, state):
        self.records = []
        self._traces = {}

    def score_many(self, state, player_id, centers):
        state_id = rl.assign_state(self.cluster_model, rl.state_features(state, player_id))
        self._traces = {}
        scores = []
        resolved: dict[str, rulekb.RuleChoice] = {}

        def chooser(conflict_set):
            choice = resolved.get(conflict_set.family)
            if choice is None:
                probs = rl.selection_probabilities(self.table, self.policy, state_id, conflict_set)
                rule, record = rl.choose(
                    self.table, self.policy, state_id, conflict_set, turn=state.turn
                )
                self.records.append(record)
                choice = resolved[conflict_set.family] = rulekb.RuleChoice(
                    rule=rule, probabilities=probs
                )
            return choice

        for center in centers:
            total, trace = rulekb.score_cluster(self.kb, cluster_at(state.map, center), chooser)
            self._traces[center] = trace
            scores.append(float(total))
        return scores

    def trace_for(self, center):
        return self._traces.get(center)


class NnEvaluator(Evaluator):
    """Frozen MLP regressor; scores are de-normalized label predictions."""

    kind = "nn"

    def __init__(self, model: mlp.MlpModel, normalization: features.MinMaxNormalization):
        self.model = model
        self.normalization = normalization

    def score_many(self, state, player_id, centers):
        if not centers:
            return []
        feats = np.asarray([features.extract_features(state.map, c, player_id) for c in centers])
        out = mlp.predict(self.model, features.minmax_apply(self.normalization, feats))
        return [float(v) for v in features.denormalize_label(self.normalization, out)]


def evaluate_placements(evaluator: Evaluator, state: GameState, player_id: int):
    """Every legal founding location scored, best first; ties by (y, x)."""
    sites = engine.legal_founding_sites(state, player_id)
    if not sites:
        return []
    scores = evaluator.score_many(state, player_id, sites)
    ranked = sorted(zip(sites, scores), key=lambda cs: (-cs[1], cs[0][1], cs[0][0]))
    return ranked


class SettlementAgent:
    """Assigns settler targets from evaluator rankings; the engine does the rest."""

    def __init__(self, evaluator: Evaluator, player_id: int = 0):
        self.evaluator = evaluator
        self.player_id = player_id

    def act(self, state: GameState) -> None:
        player = state.player(self.player_id)
        taken = {
            s.target
            for s in player.settlers
            if s.target is not None and engine.is_legal_founding_site(state, self.player_id, s.target)
        }
        ranked = None
        for settler in player.settlers:
            if settler.target is not None and engine.is_legal_founding_site(
                state, self.player_id, settler.target
            ):
                continue
            if ranked is None:
                ranked = evaluate_placements(self.evaluator, state, self.player_id)
            choice = next(((c, s) for c, s in ranked if c not in taken), None)
            if choice is None:
                settler.target = None  # nowhere left to settle; idle
                continue
            center, score = choice
            taken.add(center)
            trace = self.evaluator.trace_for(center)
            decision = {
                "score": score,
                "features": [float(v) for v in features.extract_features(state.map, center, self.player_id)],
                "trace": rulekb.trace_to_dict(trace) if trace is not None else None,
                "evaluator": self.evaluator.kind,
            }
            engine.set_settler_target(state, settler, center, decision)


# ---------------------------------------------------------------------------
# metrics


@dataclass
class RunMetrics:
    tgo: list[float] = field(default_factory=list)
    running_avg: list[float] = field(default_factory=list)
    window: int = 1

    def record(self, value: float) -> None:
        self.tgo.append(float(value))
        self.running_avg.append(float(sum(self.tgo) / len(self.tgo)))

    @property
    def improvement(self) -> float:
        """(mean of last window - mean of first window) / mean of first window."""
        if not self.tgo:
            return 0.0
        w = min(self.window, len(self.tgo))
        first = sum(self.tgo[:w]) / w
        last = sum(self.tgo[-w:]) / w
        if first == 0:
            return 0.0
        return (last - first) / first


def default_window(episodes: int) -> int:
    return max(1, episodes // 10)


def metrics_from_logs(logs: list[EpisodeLog], window: int) -> RunMetrics:
    metrics = RunMetrics(window=window)
    for log in logs:
        metrics.record(log.final_tgo)
    return metrics


def export_metrics_csv(metrics: RunMetrics, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "tgo", "running_avg"])
        for i, (tgo, avg) in enumerate(zip(metrics.tgo, metrics.running_avg)):
            writer.writerow([i, _num(tgo), repr(float(avg))])


def read_metrics_csv(path, window: int = 1) -> RunMetrics:
    metrics = RunMetrics(window=window)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["episode", "tgo", "running_avg"]:
            raise ValueError(f"{path}: unexpected metrics header {header}")
        for row in reader:
            metrics.tgo.append(float(row[1]))
            metrics.running_avg.append(float(row[2]))
    return metrics


def _num(v: float):
    return int(v) if float(v).is_integer() else repr(float(v))


# ---------------------------------------------------------------------------
# experiments


@dataclass
class RlConfig:
    k: int = 32
    warmup_episodes: int = 50
    epsilon: float = 0.1
    epsilon_decay: float = 1.0
    min_epsilon: float = 0.0
    kmeans_seed: int = 0
    max_kmeans_iter: int = 300


@dataclass
class ExperimentConfig:
    evaluator: str = "kb"  # kb | nn | random | constant
    episodes: int = 1000
    base_seed: int = 0
    fixed_map: bool = True
    game: GameConfig = field(default_factory=GameConfig)
    mapgen: MapGenConfig = field(default_factory=MapGenConfig)
    rl: RlConfig = field(default_factory=RlConfig)
    metrics_window: int | None = None
    model_path: str | None = None
    # nn arm: retrain on corpus + own logs every N episodes (0 = frozen model)
    nn_retrain_interval: int = 0

    def window(self) -> int:
        return self.metrics_window or default_window(self.episodes)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: RunMetrics
    logs: list[EpisodeLog]
    table: rl.ValueTable | None = None
    cluster_model: rl.ClusterModel | None = None


def bootstrap_corpus(
    game: GameConfig,
    mapgen: MapGenConfig,
    base_seed: int,
    episodes: int,
    game_map: GameMap | None = None,
    fixed_map: bool = True,
) -> tuple[list[EpisodeLog], np.ndarray]:
    """Random-agent episodes plus per-turn state features for k-means fitting."""
    if game_map is None and fixed_map:
        game_map = generate_map(mapgen, base_seed)
    logs = []
    points = []

    def harvest(state):
        points.append(rl.state_features(state, 0))

    for i in range(episodes):
        seed = episode_seed(base_seed, i, "warmup")
        agent = SettlementAgent(RandomEvaluator(seed))
        log = engine.run_episode(
            agent,
            game,
            seed,
            game_map=game_map,
            mapgen=mapgen,
            evaluator_name="random",
            on_turn=harvest,
        )
        logs.append(log)
    return logs, np.asarray(points)


def fit_state_clusters(points: np.ndarray, rl_config: RlConfig) -> rl.ClusterModel:
    k = min(rl_config.k, len(points))
    return rl.kmeans_fit(points, k=k, max_iter=rl_config.max_kmeans_iter, seed=rl_config.kmeans_seed)


def run_experiment(
    config: ExperimentConfig,
    *,
    game_map: GameMap | None = None,
    nn: tuple[mlp.MlpModel, features.MinMaxNormalization] | None = None,
    nn_corpus: list[EpisodeLog] | None = None,
    nn_train_config: mlp.MlpConfig | None = None,
    cluster_model: rl.ClusterModel | None = None,
    table: rl.ValueTable | None = None,
    out_dir: str | None = None,
) -> ExperimentResult:
    """Sequential episodes with between-episode learning (kb arm) and
    per-episode metrics; optionally persists logs/metrics/value table."""
    if config.episodes < 1:
        raise ValueError("episodes must be >= 1")
    if config.fixed_map and game_map is None:
        game_map = generate_map(config.mapgen, config.base_seed)

    evaluator: Evaluator
    policy = None
    if config.evaluator == "kb":
        if cluster_model is None:
            _, points = bootstrap_corpus(
                config.game,
                config.mapgen,
                config.base_seed,
                config.rl.warmup_episodes,
                game_map=game_map,
                fixed_map=config.fixed_map,
            )
            cluster_model = fit_state_clusters(points, config.rl)
        if table is None:
            table = rl.ValueTable(
                meta={
                    "k": str(cluster_model.k),
                    "features": ",".join(rl.STATE_FEATURE_NAMES),
                    "epsilon": str(config.rl.epsilon),
                }
            )
        policy = rl.Policy(
            epsilon=config.rl.epsilon,
            seed=episode_seed(config.base_seed, 0, "policy"),
            decay=config.rl.epsilon_decay,
            min_epsilon=config.rl.min_epsilon,
        )
        evaluator = RuleEvaluator(rulekb.default_kb(), cluster_model, table, policy)
    elif config.evaluator == "nn":
        if nn is None:
            if config.model_path is None:
                raise ValueError("nn arm needs a trained model (model_path or nn=)")
            nn = mlp.load_model(config.model_path)
        evaluator = NnEvaluator(*nn)
    elif config.evaluator == "random":
        evaluator = RandomEvaluator(episode_seed(config.base_seed, 0, "randeval"))
    elif config.evaluator == "constant":
        evaluator = ConstantEvaluator()
    else:
        raise ValueError(f"unknown evaluator kind {config.evaluator!r}")

    metrics = RunMetrics(window=config.window())
    logs: list[EpisodeLog] = []
    for i in range(config.episodes):
        seed = episode_seed(config.base_seed, i)
        agent = SettlementAgent(evaluator)
        log = engine.run_episode(
            agent,
            config.game,
            seed,
            game_map=game_map,
            mapgen=config.mapgen,
            evaluator_name=evaluator.kind,
        )
        if isinstance(evaluator, RuleEvaluator):
            rl.update_from_episode(evaluator.table, evaluator.records, log.final_tgo)
            evaluator.begin_episode(None)
            evaluator.policy.advance_episode()
        metrics.record(log.final_tgo)
        logs.append(log)
        if (
            isinstance(evaluator, NnEvaluator)
            and config.nn_retrain_interval > 0
            and (i + 1) % config.nn_retrain_interval == 0
            and i + 1 < config.episodes
        ):
            model, norm, _ = train_nn_from_logs(
                (nn_corpus or []) + logs, config=nn_train_config, folds=2
            )
            evaluator.model, evaluator.normalization = model, norm

    result = ExperimentResult(
        config=config,
        metrics=metrics,
        logs=logs,
        table=table,
        cluster_model=cluster_model,
    )
    if out_dir is not None:
        persist_experiment(result, out_dir, game_map)
    return result


def persist_experiment(result: ExperimentResult, out_dir: str, game_map: GameMap | None) -> None:
    os.makedirs(os.path.join(out_dir, "logs"), exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(experiment_config_to_dict(result.config), fh, indent=2, sort_keys=True)
    if game_map is not None:
        with open(os.path.join(out_dir, "map.txt"), "w") as fh:
            fh.write(encode_map(game_map))
    for i, log in enumerate(result.logs):
        engine.write_episode_log(log, os.path.join(out_dir, "logs", f"episode_{i:05d}.jsonl"))
    export_metrics_csv(result.metrics, os.path.join(out_dir, "metrics.csv"))
    if result.table is not None:
        rl.save_table(result.table, os.path.join(out_dir, "value_table.txt"))


def load_run_dir(path: str) -> tuple[RunMetrics, list[EpisodeLog], dict]:
    with open(os.path.join(path, "config.json")) as fh:
        config = json.load(fh)
    window = config.get("metrics_window") or default_window(config["episodes"])
    metrics = read_metrics_csv(os.path.join(path, "metrics.csv"), window=window)
    metrics.window = window
    log_dir = os.path.join(path, "logs")
    logs = [
        engine.read_episode_log(os.path.join(log_dir, name))
        for name in sorted(os.listdir(log_dir))
        if name.endswith(".jsonl")
    ]
    return metrics, logs, config


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ComparisonReport:
    improvement_a: float
    improvement_b: float
    metrics_a: RunMetrics
    metrics_b: RunMetrics
    center_shares: dict[str, dict[str, float]]  # arm -> terrain -> share
    occupied_shares: dict[str, dict[str, float]]

    def summary_lines(self) -> list[str]:
        lines = [
            f"arm a: episodes={len(self.metrics_a.tgo)} improvement={self.improvement_a * 100:.1f}%",
            f"arm b: episodes={len(self.metrics_b.tgo)} improvement={self.improvement_b * 100:.1f}%",
            f"improvement delta (a - b): {(self.improvement_a - self.improvement_b) * 100:.1f}%",
        ]
        for arm in ("a", "b"):
            shares = ", ".join(f"{t}={s:.3f}" for t, s in sorted(self.center_shares[arm].items()))
            lines.append(f"arm {arm} center-tile terrain: {shares}")
        for arm in ("a", "b"):
            shares = ", ".join(f"{t}={s:.3f}" for t, s in sorted(self.occupied_shares[arm].items()))
            lines.append(f"arm {arm} occupied-tile terrain: {shares}")
        return lines


def _terrain_distributions(logs: list[EpisodeLog], window: int) -> tuple[dict, dict]:
    """Center-tile and worked-tile terrain shares over the last `window` episodes."""
    tail = logs[-window:] if window < len(logs) else logs
    center_counts: dict[str, int] = {}
    occupied_counts: dict[str, int] = {}
    for log in tail:
        game_map = decode_map(log.map_text)
        for f in log.foundings():
            if f.player != log.player:
                continue
            terrain = game_map.tile(f.x, f.y).terrain.value
            center_counts[terrain] = center_counts.get(terrain, 0) + 1
        if log.turns:
            last = log.turns[-1]
            for cr in last.cities:
                if cr.player != log.player:
                    continue
                for x, y in cr.worked:
                    terrain = game_map.tile(x, y).terrain.value
                    occupied_counts[terrain] = occupied_counts.get(terrain, 0) + 1
    return _normalize(center_counts), _normalize(occupied_counts)


def _normalize(counts: dict[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    if total == 0:
        return {}
    return {k: v / total for k, v in counts.items()}


def compare(
    metrics_a: RunMetrics,
    metrics_b: RunMetrics,
    logs_a: list[EpisodeLog],
    logs_b: list[EpisodeLog],
) -> ComparisonReport:
    """Pair two completed runs; rejects runs with differing worlds or horizons."""
    if logs_a and logs_b:
        if logs_a[0].map_text != logs_b[0].map_text:
            raise ValueError("runs were played on different maps")
        if logs_a[0].config.turn_limit != logs_b[0].config.turn_limit:
            raise ValueError("runs have different turn limits")
    centers_a, occupied_a = _terrain_distributions(logs_a, metrics_a.window)
    centers_b, occupied_b = _terrain_distributions(logs_b, metrics_b.window)
    return ComparisonReport(
        improvement_a=metrics_a.improvement,
        improvement_b=metrics_b.improvement,
        metrics_a=metrics_a,
        metrics_b=metrics_b,
        center_shares={"a": centers_a, "b": centers_b},
        occupied_shares={"a": occupied_a, "b": occupied_b},
    )


def export_distribution_csv(shares: dict[str, float], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "share"])
        for category in sorted(shares):
            writer.writerow([category, repr(float(shares[category]))])


def write_comparison(report: ComparisonReport, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write("\n".join(report.summary_lines()) + "\n")
    for arm in ("a", "b"):
        export_distribution_csv(
            report.center_shares[arm], os.path.join(out_dir, f"center_terrain_{arm}.csv")
        )
        export_distribution_csv(
            report.occupied_shares[arm], os.path.join(out_dir, f"occupied_terrain_{arm}.csv")
        )
    export_metrics_csv(report.metrics_a, os.path.join(out_dir, "curve_a.csv"))
    export_metrics_csv(report.metrics_b, os.path.join(out_dir, "curve_b.csv"))


# ---------------------------------------------------------------------------
# NN training pipeline


def train_nn_from_logs(
    logs: list[EpisodeLog],
    config: mlp.MlpConfig | None = None,
    folds: int = 10,
    cv_seed: int = 0,
) -> tuple[mlp.MlpModel, features.MinMaxNormalization, mlp.TrainReport]:
    """Dataset from logs, CV assessment, final model trained on everything."""
    dataset = features.build_dataset(logs)
    if len(dataset) < 2:
        raise ValueError(f"only {len(dataset)} unique entries; not enough to train")
    config = config or mlp.MlpConfig()
    cv_report = mlp.kfold_cv(dataset, config, folds=min(folds, len(dataset)), seed=cv_seed)
    dataset.normalization = features.minmax_fit(dataset)
    model, train_report = mlp.train(dataset, config)
    train_report.fold_mses = cv_report.fold_mses
    train_report.mean_cv_mse = cv_report.mean_cv_mse
    return model, dataset.normalization, train_report


def experiment_config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "evaluator": config.evaluator,
        "episodes": config.episodes,
        "base_seed": config.base_seed,
        "fixed_map": config.fixed_map,
        "game": engine.config_to_dict(config.game),
        "mapgen": {
            "width": config.mapgen.width,
            "height": config.mapgen.height,
            "land_fraction": config.mapgen.land_fraction,
            "min_buildable_fraction": config.mapgen.min_buildable_fraction,
            "terrain_weights": [[n, w] for n, w in config.mapgen.terrain_weights],
            "special_frequency": config.mapgen.special_frequency,
            "river_frequency": config.mapgen.river_frequency,
            "continents": config.mapgen.continents,
        },
        "rl": dataclasses.asdict(config.rl),
        "metrics_window": config.metrics_window,
        "model_path": config.model_path,
    }
