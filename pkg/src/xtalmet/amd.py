"""Periodic k-nearest-neighbor fingerprints and the continuous structural distance.

Entry j of the fingerprint is the mean, over the atoms of the cell, of the
distance to each atom's (j+1)-th nearest neighbor in the infinite crystal.
The L-infinity distance between two such vectors is the structural distance
``d_amd``. Lattice translates of a site have identical neighbor lists, so the
average over the cell as given equals the average over a primitive cell and no
reduction is performed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError
from .structures import Crystal

MAX_SEARCH_RADIUS = 1e3  # Å; beyond this the cell is pathologically sparse
DEFAULT_K = 100


@dataclass(frozen=True)
class AmdVector:
    """Length-k vector of averaged neighbor distances (Å), non-decreasing."""

    k: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if self.k < 1 or values.shape != (self.k,):
            raise ValueError("values must have shape (k,) with k >= 1")
        if values[0] <= 0:
            raise ValueError("first neighbor distance is zero: coincident atoms")
        if np.any(np.diff(values) < -1e-12):
            raise ValueError("neighbor distances must be non-decreasing")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def _lattice_points_within(basis: np.ndarray, radius: float) -> np.ndarray:
    """All lattice translate vectors with Euclidean length <= radius."""
    inv = np.linalg.inv(basis)
    bounds = np.ceil(radius * np.linalg.norm(inv, axis=0)).astype(int)
    axes = [np.arange(-b, b + 1) for b in bounds]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    translates = grid @ basis
    keep = np.einsum("ij,ij->i", translates, translates) <= radius * radius
    return translates[keep], grid[keep]


def neighbor_distances(crystal: Crystal, k: int) -> np.ndarray:
    """Per-site sorted distances to the k nearest atoms of the infinite crystal.

    Enumerates lattice translates inside an expanding ball. The ball is
    accepted once the k-th neighbor of every site lies closer than the ball
    radius minus the largest site-to-site offset, which guarantees no closer
    atom outside the ball was missed.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    basis = crystal.lattice.basis
    cart = crystal.cart_coords
    m = crystal.num_sites
    volume = crystal.lattice.volume
    max_len = float(np.linalg.norm(basis, axis=1).max())
    # max pairwise offset between sites of the home cell
    spread = float(cdist(cart, cart).max()) if m > 1 else 0.0

    radius = 2.0 * (k * volume / (4.0 * math.pi * m / 3.0)) ** (1.0 / 3.0) + max_len
    while True:
        if radius > MAX_SEARCH_RADIUS:
            raise InputError(
                f"neighbor search radius exceeds {MAX_SEARCH_RADIUS} Å; "
                f"cell too sparse for k={k}"
            )
        translates, grid = _lattice_points_within(basis, radius)
        # all atoms within the ball: site j shifted by every translate
        points = (translates[:, None, :] + cart[None, :, :]).reshape(-1, 3)
        dists = cdist(cart, points)
        home = int(np.nonzero(np.all(grid == 0, axis=1))[0][0])
        idx = np.arange(m)
        dists[idx, home * m + idx] = np.inf  # self at distance zero
        if dists.shape[1] > k:
            nearest = np.partition(dists, k - 1, axis=1)[:, :k]
            nearest.sort(axis=1)
        else:
            nearest = np.sort(dists, axis=1)
        if nearest.shape[1] >= k and float(nearest[:, k - 1].max()) <= radius - spread:
            return nearest
        radius *= 2.0


def amd_vector(crystal: Crystal, k: int = DEFAULT_K) -> AmdVector:
    """Average the per-site neighbor lists into the crystal's fingerprint."""
    return AmdVector(k=k, values=neighbor_distances(crystal, k).mean(axis=0))


def amd_distance(u: AmdVector, v: AmdVector) -> float:
    """Chebyshev (L-infinity) distance between two fingerprints of equal k."""
    if u.k != v.k:
        raise InputError(f"mismatched k: {u.k} vs {v.k}")
    return float(np.max(np.abs(u.values - v.values)))


def d_amd(a: Crystal, b: Crystal, k: int = DEFAULT_K) -> float:
    """Continuous structural distance between two crystals at a common k."""
    return amd_distance(amd_vector(a, k), amd_vector(b, k))
