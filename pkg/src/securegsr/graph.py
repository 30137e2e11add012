"""Undirected weighted graphs, Laplacians and the Erdos-Renyi generator."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import GenerationError, InvalidInputError


@dataclass(frozen=True, eq=False)
class Graph:
    """Weighted undirected graph without self-loops.

    ``weights`` is stored as a read-only copy so graphs can be shared
    between trials.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
            raise InvalidInputError(f"weights must be a non-empty square matrix, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("weights must be finite")
        if np.any(w < 0):
            raise InvalidInputError("weights must be nonnegative")
        if not np.array_equal(w, w.T):
            raise InvalidInputError("weights must be symmetric")
        if np.any(np.diag(w) != 0):
            raise InvalidInputError("self-loops are not allowed")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @cached_property
    def degrees(self) -> np.ndarray:
        d = self.weights.sum(axis=1)
        d.setflags(write=False)
        return d

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, 1)))

    def edges(self) -> list[tuple[int, int, float]]:
        i, j = np.nonzero(np.triu(self.weights, 1))
        return [(int(a), int(b), float(self.weights[a, b])) for a, b in zip(i, j)]


def laplacian(g: Graph) -> np.ndarray:
    """Combinatorial Laplacian ``diag(degrees) - weights``."""
    lap = np.diag(g.degrees) - g.weights
    lap.setflags(write=False)
    return lap


def is_connected(g: Graph) -> bool:
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        k = queue.popleft()
        for j in np.flatnonzero(g.weights[k] > 0):
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())


def closed_neighborhood(g: Graph, k: int) -> np.ndarray:
    """Sorted indices of ``k`` and its positive-weight neighbours."""
    if not 0 <= k < g.n:
        raise InvalidInputError(f"node index {k} out of range for n={g.n}")
    mask = g.weights[k] > 0
    mask = mask.copy()
    mask[k] = True
    return np.flatnonzero(mask)


def _check_er_args(n, p_link, w_lo, w_hi):
    if n < 2:
        raise InvalidInputError("need n >= 2")
    if not 0 < p_link <= 1:
        raise InvalidInputError("p_link must lie in (0, 1]")
    if not 0 < w_lo <= w_hi:
        raise InvalidInputError("need 0 < w_lo <= w_hi")


def sample_er_weights(n: int, p_link: float, w_lo: float, w_hi: float, rng: np.random.Generator) -> np.ndarray:
    """One unconditioned draw of an ER weight matrix (may be disconnected)."""
    _check_er_args(n, p_link, w_lo, w_hi)
    iu = np.triu_indices(n, 1)
    present = rng.random(iu[0].size) < p_link
    vals = rng.uniform(w_lo, w_hi, iu[0].size)
    w = np.zeros((n, n))
    w[iu] = np.where(present, vals, 0.0)
    return w + w.T


def erdos_renyi(
    n: int,
    p_link: float,
    w_lo: float,
    w_hi: float,
    rng: np.random.Generator,
    max_attempts: int = 1000,
) -> Graph:
    """Connected ER graph with i.i.d. uniform edge weights.

    Whole graphs are redrawn until connected, which keeps the law of the
    result equal to the ER law conditioned on connectivity.
    """
    _check_er_args(n, p_link, w_lo, w_hi)
    for _ in range(max_attempts):
        g = Graph(sample_er_weights(n, p_link, w_lo, w_hi, rng))
        if is_connected(g):
            return g
    raise GenerationError(
        f"no connected graph after {max_attempts} attempts (n={n}, p_link={p_link})"
    )


def write_edge_list(g: Graph, path) -> None:
    """Write ``i j w_ij`` lines (0-based, i < j, 17 significant digits); first line ``# n=<n>``."""
    lines = [f"# n={g.n}"]
    lines += [f"{i} {j} {w:.17g}" for i, j, w in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path, n: int | None = None) -> Graph:
    """Inverse of :func:`write_edge_list`.  ``n`` may come from the header or the argument."""
    edges = []
    header_n = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("n="):
                header_n = int(body[2:])
            continue
        parts = line.split()
        if len(parts) != 3:
            raise InvalidInputError(f"{path}:{lineno}: expected 'i j w', got {raw!r}")
        edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
    n = n if n is not None else header_n
    if n is None:
        n = 1 + max(max(i, j) for i, j, _ in edges) if edges else 0
    w = np.zeros((n, n))
    for i, j, wij in edges:
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise InvalidInputError(f"bad edge ({i}, {j}) for n={n}")
        w[i, j] = w[j, i] = wij
    return Graph(w)
