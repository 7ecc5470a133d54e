"""Seeded generators for Barabási-Albert growth and Game of Life trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_model import Dataset, TemporalGraph, Trajectory

# Live cells as (row, col) offsets from the top-left of the bounding box.
PATTERNS: dict[str, tuple[tuple[int, int], ...]] = {
    "blinker": ((0, 0), (0, 1), (0, 2)),
    "beacon": ((0, 0), (0, 1), (1, 0), (1, 1), (2, 2), (2, 3), (3, 2), (3, 3)),
    "toad": ((0, 1), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2)),
    "block": ((0, 0), (0, 1), (1, 0), (1, 1)),
    "glider": ((0, 1), (1, 2), (2, 0), (2, 1), (2, 2)),
    # methuselah that settles into one block and one glider after ~105 steps
    "block_and_glider": ((0, 0), (0, 1), (1, 0), (1, 2), (2, 2), (2, 3)),
}


def pattern_shape(name: str) -> tuple[int, int]:
    cells = PATTERNS[name]
    return max(r for r, _ in cells) + 1, max(c for _, c in cells) + 1


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent 64-bit seeds from one master seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


# -- Barabási-Albert ---------------------------------------------------------


@dataclass(frozen=True)
class BaParams:
    m0: int = 3
    k: int = 2
    m: int = 27
    seed: int = 0

    def __post_init__(self):
        if self.m0 < 2:
            raise ValueError(f"m0 must be >= 2, got {self.m0}")
        if not 1 <= self.k <= self.m0:
            raise ValueError(f"k must satisfy 1 <= k <= m0, got k={self.k}, m0={self.m0}")
        if self.m <= self.m0:
            raise ValueError(f"m must exceed m0, got m={self.m}, m0={self.m0}")


def generate_ba_trajectory(p: BaParams, id: str = "ba") -> Trajectory:
    """Grow a graph from an ``m0``-clique by preferential attachment.

    Each new node links to ``k`` distinct existing nodes, drawn one after the
    other with probability proportional to their current degree (the drawn
    node is removed before the next draw). Every intermediate graph is a
    snapshot, so the trajectory has ``m - m0 + 1`` elements.
    """
    rng = np.random.default_rng(p.seed)
    degree = np.zeros(p.m, dtype=np.int64)
    edges: list[tuple[str, str]] = []
    for u in range(p.m0):
        for v in range(u + 1, p.m0):
            edges.append((str(u), str(v)))
            degree[u] += 1
            degree[v] += 1
    snapshots = [TemporalGraph([str(i) for i in range(p.m0)], edges)]
    for new in range(p.m0, p.m):
        weights = degree[:new] / degree[:new].sum()
        targets = rng.choice(new, size=p.k, replace=False, p=weights)
        for t in sorted(int(x) for x in targets):
            edges.append((str(t), str(new)))
            degree[t] += 1
            degree[new] += 1
        snapshots.append(TemporalGraph([str(i) for i in range(new + 1)], edges))
    return Trajectory(id, snapshots)


def generate_ba_dataset(
    n_trajectories: int, m0: int = 3, k: int = 2, m: int = 27, seed: int = 0
) -> Dataset:
    seeds = spawn_seeds(seed, n_trajectories)
    trajs = [
        generate_ba_trajectory(BaParams(m0, k, m, s), id=f"ba{j}")
        for j, s in enumerate(seeds)
    ]
    meta = {"generator": "barabasi_albert", "m0": m0, "k": k, "m": m, "seed": seed}
    return Dataset(trajs, meta)


# -- Game of Life ------------------------------------------------------------


NOISE_MODES = ("observation", "feedback")


@dataclass(frozen=True)
class GolParams:
    width: int = 20
    height: int = 20
    pattern: str = "glider"
    steps: int = 10
    noise_rate: float = 0.05
    seed: int = 0
    noise_mode: str = "observation"

    def __post_init__(self):
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"noise_mode must be one of {NOISE_MODES}, got {self.noise_mode!r}")
        if self.pattern not in PATTERNS:
            raise ValueError(
                f"unknown pattern {self.pattern!r}; choose from {sorted(PATTERNS)}"
            )
        h, w = pattern_shape(self.pattern)
        if h > self.height or w > self.width:
            raise ValueError(
                f"pattern {self.pattern!r} ({h}x{w}) does not fit a "
                f"{self.height}x{self.width} grid"
            )
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError(f"noise_rate must lie in [0, 1], got {self.noise_rate}")


def _neighbor_sum(grid: np.ndarray) -> np.ndarray:
    padded = np.pad(grid.astype(np.int64), 1)
    h, w = grid.shape
    total = np.zeros((h, w), dtype=np.int64)
    for dr in (0, 1, 2):
        for dc in (0, 1, 2):
            if dr == 1 and dc == 1:
                continue
            total += padded[dr : dr + h, dc : dc + w]
    return total


def gol_step(grid: np.ndarray) -> np.ndarray:
    """One synchronous Game of Life update on a grid with dead boundary.

    A cell is alive next step iff ``5 <= own + 2 * live_neighbors <= 7``,
    which is the B3/S23 rule written as a single threshold.
    """
    grid = np.asarray(grid)
    score = grid.astype(np.int64) + 2 * _neighbor_sum(grid)
    return ((score >= 5) & (score <= 7)).astype(np.uint8)


def grid_to_graph(grid: np.ndarray) -> TemporalGraph:
    """Live cells become nodes; 8-adjacent live cells are joined by an edge."""
    h, w = grid.shape
    live = [(int(r), int(c)) for r, c in zip(*np.nonzero(grid))]
    alive = set(live)
    edges = []
    for r, c in live:
        # forward half of the 8-neighbourhood so each pair is emitted once
        for dr, dc in ((0, 1), (1, -1), (1, 0), (1, 1)):
            q = (r + dr, c + dc)
            if q in alive:
                edges.append((str(r * w + c), str(q[0] * w + q[1])))
    return TemporalGraph([str(r * w + c) for r, c in live], edges)


def generate_gol_trajectory(
    p: GolParams, id: str = "gol", drop_initial: bool = False
) -> Trajectory:
    """Place a pattern uniformly at random, run ``steps`` updates with noise.

    After every rule update each dead cell turns alive with probability
    ``noise_rate`` and the noisy grid is recorded. In ``"observation"`` mode
    the rule keeps running on the noise-free grid; in ``"feedback"`` mode the
    noisy grid is the input of the next update.
    """
    rng = np.random.default_rng(p.seed)
    ph, pw = pattern_shape(p.pattern)
    top = int(rng.integers(0, p.height - ph + 1))
    left = int(rng.integers(0, p.width - pw + 1))
    grid = np.zeros((p.height, p.width), dtype=np.uint8)
    for r, c in PATTERNS[p.pattern]:
        grid[top + r, left + c] = 1
    states = [grid]
    for _ in range(p.steps):
        grid = gol_step(grid)
        observed = grid
        if p.noise_rate > 0:
            flips = rng.random(grid.shape) < p.noise_rate
            observed = np.where(flips, 1, grid).astype(np.uint8)
        if p.noise_mode == "feedback":
            grid = observed
        states.append(observed)
    if drop_initial:
        states = states[1:]
    return Trajectory(id, [grid_to_graph(s) for s in states])


def generate_gol_dataset(
    n_trajectories: int,
    width: int = 20,
    height: int = 20,
    steps: int = 10,
    noise_rate: float = 0.05,
    seed: int = 0,
    patterns: tuple[str, ...] | None = None,
    drop_initial: bool = False,
    noise_mode: str = "observation",
) -> Dataset:
    """Trajectories cycle through ``patterns`` (all six by default)."""
    patterns = tuple(patterns or PATTERNS)
    seeds = spawn_seeds(seed, n_trajectories)
    trajs = []
    for j, s in enumerate(seeds):
        params = GolParams(
            width, height, patterns[j % len(patterns)], steps, noise_rate, s, noise_mode
        )
        trajs.append(generate_gol_trajectory(params, id=f"gol{j}", drop_initial=drop_initial))
    meta = {
        "generator": "game_of_life",
        "width": width,
        "height": height,
        "steps": steps,
        "noise_rate": noise_rate,
        "seed": seed,
        "patterns": ",".join(patterns),
        "drop_initial": drop_initial,
        "noise_mode": noise_mode,
    }
    return Dataset(trajs, meta)
