"""Graph Fourier transform, bandlimited synthesis, smoothness and baseline denoisers."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .graph import Graph, closed_neighborhood
from .numerics import sym_eig


@dataclass(frozen=True, eq=False)
class GftBasis:
    """Laplacian eigenbasis; column ``i`` of ``eigenvectors`` pairs with ``eigenvalues[i]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @classmethod
    def from_laplacian(cls, lap) -> "GftBasis":
        w, u = sym_eig(lap)
        w.setflags(write=False)
        u.setflags(write=False)
        return cls(w, u)

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def _signal(x, n: int, name: str = "signal") -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise InvalidInputError(f"{name} has shape {v.shape}, expected ({n},)")
    return v


def _check_bw(bw: int, n: int) -> None:
    if not 1 <= bw <= n:
        raise InvalidInputError(f"bandwidth {bw} outside [1, {n}]")


def gft(basis: GftBasis, x) -> np.ndarray:
    return basis.eigenvectors.T @ _signal(x, basis.n)


def igft(basis: GftBasis, s) -> np.ndarray:
    return basis.eigenvectors @ _signal(s, basis.n, "spectrum")


def synth_bandlimited(basis: GftBasis, bw: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm signal whose GFT is supported on the ``bw`` lowest frequencies.

    Retained coefficients are i.i.d. standard normal.
    """
    _check_bw(bw, basis.n)
    while True:
        s = np.zeros(basis.n)
        s[:bw] = rng.standard_normal(bw)
        if np.any(s):
            break
    x = basis.eigenvectors[:, :bw] @ s[:bw]
    return x / np.linalg.norm(x)


def smoothness(lap, x) -> float:
    """Laplacian quadratic form ``x^T L x``."""
    lap = np.asarray(lap)
    v = _signal(x, lap.shape[0])
    return float(v @ lap @ v)


def lowpass_project(basis: GftBasis, bw: int, x) -> np.ndarray:
    """Orthogonal projection onto the span of the first ``bw`` eigenvectors."""
    _check_bw(bw, basis.n)
    ub = basis.eigenvectors[:, :bw]
    return ub @ (ub.T @ _signal(x, basis.n))


def median_filter(g: Graph, x) -> np.ndarray:
    """Unweighted median over each closed neighbourhood."""
    v = _signal(x, g.n)
    return np.array([np.median(v[closed_neighborhood(g, k)]) for k in range(g.n)])


def write_signal(x, path) -> None:
    Path(path).write_text("".join(f"{float(val):.17g}\n" for val in np.asarray(x, dtype=float)))


def read_signal(path) -> np.ndarray:
    vals = [float(line) for line in Path(path).read_text().split() if line]
    return np.array(vals)
