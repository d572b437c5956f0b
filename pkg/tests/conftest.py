import pytest

from settlebench import engine, harness
from settlebench.world import GameMap, MapGenConfig, Tile, TerrainKind, generate_map


def flat_map(width=12, height=12, terrain=TerrainKind.GRASSLAND, seed=0) -> GameMap:
    """Uniform synthetic map for hand-checkable scenarios."""
    tiles = [Tile(x=x, y=y, terrain=terrain) for y in range(height) for x in range(width)]
    return GameMap(width=width, height=height, tiles=tiles, seed=seed)


@pytest.fixture
def grass_map():
    return flat_map()


@pytest.fixture(scope="session")
def default_map():
    return generate_map(MapGenConfig(), seed=1)


@pytest.fixture(scope="session")
def bootstrap_corpus():
    """Small random-agent corpus shared by feature/label/harness tests."""
    game = engine.GameConfig(turn_limit=60)
    logs, points = harness.bootstrap_corpus(game, MapGenConfig(), base_seed=3, episodes=40)
    return logs, points
