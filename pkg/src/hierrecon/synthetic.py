"""Seeded synthetic hierarchies and panels for tests, demos and benchmarks."""

import numpy as np

from .hierarchy import Hierarchy, SeriesPanel, build_hierarchy

__all__ = ["seven_node_hierarchy", "nonlinear_panel", "random_hierarchy", "random_panel"]


def seven_node_hierarchy() -> Hierarchy:
    """Total -> {A, B}; A -> {AA, AB}; B -> {BA, BB}."""
    return build_hierarchy([("Total", "A"), ("Total", "B"), ("A", "AA"), ("A", "AB"), ("B", "BA"), ("B", "BB")])


def nonlinear_panel(seed: int = 0, n: int = 240, s: int = 12) -> SeriesPanel:
    """Seven-node panel whose bottom series are nonlinear in two shared latent signals.

    A seasonal wave and a persistent AR(1) factor drive every bottom series
    through products, thresholds and saturating maps, plus small noise. All
    values stay positive so proportion-based methods are defined.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    wave = np.sin(2 * np.pi * t / s)
    f = np.zeros(n)
    shocks = rng.normal(0.0, 1.0, n)
    for i in range(1, n):
        f[i] = 0.8 * f[i - 1] + 0.6 * shocks[i]
    trend = t / n
    noise = rng.normal(0.0, 0.5, (4, n))
    bottom = np.vstack([
        20 + 6 * wave * (1 + 0.5 * np.tanh(f)) + 3 * trend + noise[0],
        15 + 4 * np.maximum(f, 0.0) ** 1.5 + 2 * wave + noise[1],
        18 + 5 * np.tanh(2 * f) * (wave > 0) + 4 * trend + noise[2],
        12 + 3 * np.exp(0.3 * np.clip(f, -3, 3)) * (1 + 0.3 * wave) + noise[3],
    ])
    bottom = np.maximum(bottom, 1.0)
    h = seven_node_hierarchy()
    return SeriesPanel(h, h.S @ bottom, s)


def random_hierarchy(rng: np.random.Generator, depth: int, fanout=(2, 5)) -> Hierarchy:
    """Balanced tree with ``depth`` levels below the root; each node has ``fanout[0]..fanout[1]`` children."""
    edges = []
    frontier = ["n0"]
    counter = 1
    for _ in range(depth):
        nxt = []
        for parent in frontier:
            for _ in range(int(rng.integers(fanout[0], fanout[1] + 1))):
                child = f"n{counter}"
                counter += 1
                edges.append((parent, child))
                nxt.append(child)
        frontier = nxt
    return build_hierarchy(edges)


def random_panel(rng: np.random.Generator, h: Hierarchy, n: int = 40, s: int = 1) -> SeriesPanel:
    """Coherent panel from positive random-walk bottom series."""
    steps = rng.normal(0.0, 1.0, (h.m_k, n))
    bottom = 50.0 + rng.uniform(0, 20, (h.m_k, 1)) + np.cumsum(steps, axis=1)
    return SeriesPanel(h, h.S @ np.maximum(bottom, 1.0), s)
