"""Fixed-radius neighbour search on a uniform cell grid."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend


class StaleNeighborTable(RuntimeError):
    """A neighbour table built for an earlier step was used."""


@dataclass
class NeighborTable:
    """CSR neighbour lists.

    Row ``i`` is ``indices[offsets[i]:offsets[i+1]]`` with matching
    ``distances``; rows are sorted by neighbour index.  The relation is
    symmetric and never contains ``i`` itself.
    """

    offsets: np.ndarray
    indices: np.ndarray
    distances: np.ndarray
    radius: float
    cell_size: float
    step: int = 0
    immediate_radius: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_pairs(self) -> int:
        return len(self.indices)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.offsets[i]:self.offsets[i + 1]]

    def neighbor_distances(self, i: int) -> np.ndarray:
        return self.distances[self.offsets[i]:self.offsets[i + 1]]

    def row_index(self) -> np.ndarray:
        """Owner particle of every stored pair."""
        return np.repeat(np.arange(self.n), np.diff(self.offsets))

    def check_current(self, step: int) -> None:
        if step != self.step:
            raise StaleNeighborTable(f"table built at step {self.step}, used at step {step}")


def build(positions, radius: float, step: int = 0, backend: str | None = None) -> NeighborTable:
    """Exact neighbour lists for ``|x_i - x_j| < radius``.

    The grid cell size equals ``radius`` and the grid origin is the bounding
    box minimum, so every candidate lies in the 3**dim surrounding cells.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    pos = np.ascontiguousarray(positions, dtype=float)
    if pos.ndim == 1:
        pos = pos[:, None]
    if not np.all(np.isfinite(pos)):
        raise ValueError("non-finite particle positions")
    offsets, indices, dist = _backend.get(backend).build_pairs(pos, float(radius))
    return NeighborTable(offsets, indices, dist, float(radius), float(radius), step)
