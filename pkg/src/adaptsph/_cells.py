"""Occupied-cell bookkeeping shared by both backends.

Only occupied cells are stored, so memory stays O(n) however far apart the
particles drift.
"""
from __future__ import annotations

import itertools

import numpy as np

#: Largest per-axis cell count; keeps the linear cell key inside int64.
MAX_CELLS_PER_AXIS = 1 << 30


def cell_table(pos: np.ndarray, radius: float):
    """Bin particles into cells of side ``radius``.

    Returns ``(cell_of, order, start, stencil)``: the compact cell of each
    particle, particle indices sorted by cell, CSR starts into ``order``, and
    for every occupied cell the compact ids of its ``3**dim`` surrounding
    cells (``-1`` where unoccupied), in a fixed offset order.
    """
    n, dim = pos.shape
    lo = pos.min(axis=0)
    cells = np.floor((pos - lo) / radius).astype(np.int64)
    shape = cells.max(axis=0) + 3  # one spare cell on each side for the stencil
    if np.any(shape > MAX_CELLS_PER_AXIS):
        raise ValueError("particles are too widely spread for the cell grid")
    cells += 1
    strides = np.ones(dim, np.int64)
    for d in range(dim - 2, -1, -1):
        strides[d] = strides[d + 1] * shape[d + 1]
    key = cells @ strides
    uniq, cell_of = np.unique(key, return_inverse=True)
    cell_of = cell_of.reshape(n).astype(np.int64)
    order = np.argsort(cell_of, kind="stable").astype(np.int64)
    start = np.zeros(len(uniq) + 1, np.int64)
    start[1:] = np.cumsum(np.bincount(cell_of, minlength=len(uniq)))

    offsets = np.array(list(itertools.product((-1, 0, 1), repeat=dim)), np.int64)
    probe = uniq[:, None] + (offsets @ strides)[None, :]
    at = np.searchsorted(uniq, probe)
    hit = (at < len(uniq)) & (uniq[np.minimum(at, len(uniq) - 1)] == probe)
    stencil = np.where(hit, at, -1).astype(np.int64)
    return cell_of, order, start, np.ascontiguousarray(stencil)
