"""settlebench: city-placement evaluators (rule base + RL vs MLP) on a tile-map settlement simulator."""

__version__ = "0.1.0"
