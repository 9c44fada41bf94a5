"""Replication of the prevalent discrete structure-match distance.

The procedure is the two-step composition/alignment test: structures with
different reduced compositions are distance 1; otherwise both are reduced to
primitive cells and candidate lattice correspondences and translations are
searched for an alignment that puts every atom within a normalized site
tolerance of a same-element partner. The result is 0/1 — it quantifies
nothing, and it is not a pseudometric (the triangle inequality can fail; see
:func:`build_smat_chain` for the canonical counterexample generator).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .composition import composition_of
from .elements import atomic_number
from .errors import InputError
from .structures import Crystal, Lattice, Site, primitive_reduce, wrap_frac

logger = logging.getLogger(__name__)

MAX_MATCHER_SITES = 200
MAX_LATTICE_MAPPINGS = 1000
_BIG = 1e12  # assignment cost blocking cross-element pairs


@dataclass(frozen=True)
class MatchTolerances:
    """Matching thresholds.

    ``ltol``: fractional length tolerance; ``stol``: site tolerance as a
    fraction of the average free length per atom (V/m)^(1/3); ``angle_tol``
    in degrees. Defaults mirror the reference implementation.
    """

    ltol: float = 0.2
    stol: float = 0.3
    angle_tol: float = 5.0

    def __post_init__(self) -> None:
        if self.ltol <= 0 or self.stol <= 0 or self.angle_tol <= 0:
            raise ValueError("matcher tolerances must be strictly positive")


def _candidate_vectors(basis: np.ndarray, target_lengths: np.ndarray, ltol: float):
    """Integer lattice combinations of ``basis`` whose length matches a target."""
    radius = float(target_lengths.max()) * (1.0 + ltol) + 1e-9
    inv = np.linalg.inv(basis)
    bounds = np.ceil(radius * np.linalg.norm(inv, axis=0)).astype(int)
    axes = [np.arange(-b, b + 1) for b in bounds]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    grid = grid[np.any(grid != 0, axis=1)]
    vectors = grid @ basis
    lengths = np.linalg.norm(vectors, axis=1)
    matches = []
    for target in target_lengths:
        sel = np.abs(lengths - target) <= ltol * target
        matches.append(list(zip(grid[sel], vectors[sel])))
    return matches


def _angle(u: np.ndarray, v: np.ndarray) -> float:
    cosine = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.degrees(np.arccos(np.clip(cosine, -1.0, 1.0))))


def _aligned_max_displacement(
    frac_a: np.ndarray,
    frac_b: np.ndarray,
    elements_a: np.ndarray,
    elements_b: np.ndarray,
    basis: np.ndarray,
) -> float:
    """Max distance over the optimal same-element pairing of two configurations."""
    delta = frac_b[None, :, :] - frac_a[:, None, :]
    delta -= np.round(delta)
    cart = delta @ basis
    cost = np.einsum("ijk,ijk->ij", cart, cart)
    cost[elements_a[:, None] != elements_b[None, :]] = _BIG
    rows, cols = linear_sum_assignment(cost)
    worst = cost[rows, cols].max()
    if worst >= _BIG:
        return np.inf
    return float(np.sqrt(worst))


def d_smat(a: Crystal, b: Crystal, tol: MatchTolerances | None = None) -> int:
    """Discrete structure-match distance: 0 if the crystals fit, else 1."""
    tol = tol or MatchTolerances()
    if composition_of(a) != composition_of(b):
        return 1
    pa = primitive_reduce(a)
    pb = primitive_reduce(b)
    if pa.num_sites > MAX_MATCHER_SITES or pb.num_sites > MAX_MATCHER_SITES:
        raise InputError("matcher input too large: primitive cell exceeds 200 sites")
    if pa.num_sites != pb.num_sites:
        return 1

    m = pa.num_sites
    frac_a = pa.frac_coords
    elements_a = np.array([atomic_number(s.element) for s in pa.sites])
    elements_b = np.array([atomic_number(s.element) for s in pb.sites])
    lengths_a = pa.lattice.lengths
    angles_a = pa.lattice.angles
    cart_b = pb.cart_coords

    # anchor on the rarest element of a
    symbols_a = [s.element for s in pa.sites]
    rare = min(set(symbols_a), key=lambda el: (symbols_a.count(el), el))
    anchor = symbols_a.index(rare)
    anchor_targets = [j for j, s in enumerate(pb.sites) if s.element == rare]

    candidates = _candidate_vectors(pb.lattice.basis, lengths_a, tol.ltol)
    mappings_tried = 0
    for (n1, v1), (n2, v2), (n3, v3) in itertools.product(*candidates):
        det = int(round(np.linalg.det(np.array([n1, n2, n3], dtype=float))))
        if abs(det) != 1:
            continue
        if (
            abs(_angle(v2, v3) - angles_a[0]) > tol.angle_tol
            or abs(_angle(v1, v3) - angles_a[1]) > tol.angle_tol
            or abs(_angle(v1, v2) - angles_a[2]) > tol.angle_tol
        ):
            continue
        mappings_tried += 1
        if mappings_tried > MAX_LATTICE_MAPPINGS:
            logger.warning("matcher lattice-mapping cap reached; declaring no match")
            return 1
        new_basis = np.array([v1, v2, v3])
        frac_b = wrap_frac(cart_b @ np.linalg.inv(new_basis))
        # compare on a lattice averaged over both cell parameter sets
        params_b = np.concatenate(
            [np.linalg.norm(new_basis, axis=1), _basis_angles(new_basis)]
        )
        params_a = np.concatenate([lengths_a, angles_a])
        try:
            avg = Lattice.from_parameters(*((params_a + params_b) / 2.0))
        except ValueError:
            continue
        threshold = tol.stol * (avg.volume / m) ** (1.0 / 3.0)
        for target in anchor_targets:
            shift = frac_b[target] - frac_a[anchor]
            disp = _aligned_max_displacement(
                frac_a + shift, frac_b, elements_a, elements_b, avg.basis
            )
            if disp <= threshold:
                return 0
    return 1


def _basis_angles(basis: np.ndarray) -> np.ndarray:
    return np.array(
        [
            _angle(basis[1], basis[2]),
            _angle(basis[0], basis[2]),
            _angle(basis[0], basis[1]),
        ]
    )


def _move_site(crystal: Crystal, index: int, displacement: np.ndarray) -> Crystal:
    cart = crystal.cart_coords
    cart[index] = cart[index] + displacement
    frac = wrap_frac(cart @ crystal.lattice.inverse)
    sites = tuple(Site(s.element, f) for s, f in zip(crystal.sites, frac))
    return replace(crystal, sites=sites)


def _chain_attempt(
    x: Crystal, site_index: int, direction: np.ndarray, tol: MatchTolerances
) -> tuple[Crystal, Crystal, Crystal] | None:
    """Bisect the match threshold for a single-site move and verify the pattern."""

    def moved(delta: float) -> Crystal:
        return _move_site(x, site_index, delta * direction)

    guess = tol.stol * (x.lattice.volume / x.num_sites) ** (1.0 / 3.0)
    lo, hi = 0.0, 1.2 * guess
    attempts = 0
    while d_smat(x, moved(hi), tol) == 0:
        hi *= 1.4
        attempts += 1
        if attempts > 12:
            return None
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if d_smat(x, moved(mid), tol) == 0:
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        return None

    for fraction in (0.75, 0.7, 0.8, 0.65, 0.85, 0.6, 0.9):
        delta = fraction * lo
        x_plus = moved(delta)
        x_minus = moved(-delta)
        if (
            d_smat(x, x_plus, tol) == 0
            and d_smat(x, x_minus, tol) == 0
            and d_smat(x_plus, x_minus, tol) == 1
        ):
            return x, x_plus, x_minus
    return None


def build_smat_chain(
    base: Crystal, tol: MatchTolerances | None = None
) -> tuple[Crystal, Crystal, Crystal]:
    """Construct (x, x', x'') with d(x,x')=0, d(x,x'')=0 but d(x',x'')=1.

    One site of x is displaced by +delta and -delta with delta found by
    bisecting the match threshold; the cumulative 2*delta gap breaks the
    match, which is the triangle-inequality failure d_smat permits.

    When the base crystal has a symmetry operation whose orbit moves the
    chosen site, the matcher legitimately maps +delta onto -delta through
    that operation (each image atom absorbs one delta), so no straddling
    delta exists for the base as given. In that case x is a symmetry-broken
    copy of ``base``: every site jiggled by a seeded random displacement on
    the order of the match threshold. The returned triple always satisfies
    the stated distance pattern (verified by direct evaluation).
    """
    tol = tol or MatchTolerances()
    if base.num_sites < 2:
        raise InputError("chain fixture needs a base crystal with at least 2 sites")
    # move a site of the rarest element along a generic direction
    symbols = [s.element for s in base.sites]
    rare = min(set(symbols), key=lambda el: (symbols.count(el), el))
    site_index = symbols.index(rare)
    rows = base.lattice.basis / np.linalg.norm(base.lattice.basis, axis=1, keepdims=True)
    skew = 0.53 * rows[0] + 0.27 * rows[1] + 1.10 * rows[2]
    direction = skew / np.linalg.norm(skew)
    threshold = tol.stol * (base.lattice.volume / base.num_sites) ** (1.0 / 3.0)

    result = _chain_attempt(base, site_index, direction, tol)
    if result is not None:
        return result
    from .structures import perturb_sites  # deferred: structures must not import matcher

    for seed in range(8):
        jiggled = perturb_sites(base, threshold, seed=seed)
        result = _chain_attempt(jiggled, site_index, direction, tol)
        if result is not None:
            return result
    raise InputError("no threshold-straddling displacement found for this base")
