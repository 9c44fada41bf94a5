"""Shared test utilities: reference structures, random generators, independent oracles."""

from __future__ import annotations

import itertools
import math

import numpy as np

from xtalmet import Composition, Crystal, Lattice, SampleSet, Site, SymmetryRecord

# ---------------------------------------------------------------------------
# Reference structures (published experimental cell data)
# ---------------------------------------------------------------------------

def wurtzite(crystal_id: str, a: float, c: float, cation: str, anion: str, z_anion: float,
             e_hull: float | None = None) -> Crystal:
    return Crystal(
        id=crystal_id,
        lattice=Lattice.from_parameters(a, a, c, 90, 90, 120),
        sites=(
            Site(cation, np.array([1 / 3, 2 / 3, 0.0])),
            Site(cation, np.array([2 / 3, 1 / 3, 0.5])),
            Site(anion, np.array([1 / 3, 2 / 3, z_anion])),
            Site(anion, np.array([2 / 3, 1 / 3, z_anion + 0.5])),
        ),
        symmetry=SymmetryRecord(186, ("b", "b")),
        e_hull=e_hull,
    )


def wz_zno() -> Crystal:
    return wurtzite("wz-ZnO", 3.24, 5.22, "Zn", "O", 0.38)


def wz_gan() -> Crystal:
    return wurtzite("wz-GaN", 3.189, 5.185, "Ga", "N", 0.377)


def rs_zno() -> Crystal:
    """Rocksalt ZnO (high-pressure phase), conventional cubic cell, a = 4.28 Å."""
    positions = [
        ("Zn", [0, 0, 0]), ("Zn", [0, 0.5, 0.5]), ("Zn", [0.5, 0, 0.5]), ("Zn", [0.5, 0.5, 0]),
        ("O", [0.5, 0.5, 0.5]), ("O", [0.5, 0, 0]), ("O", [0, 0.5, 0]), ("O", [0, 0, 0.5]),
    ]
    return Crystal(
        id="rs-ZnO",
        lattice=Lattice(np.eye(3) * 4.28),
        sites=tuple(Site(el, np.array(f, dtype=float)) for el, f in positions),
        symmetry=SymmetryRecord(225, ("a", "b")),
    )


def bi2te3() -> Crystal:
    """Bi2Te3, rhombohedral structure in the hexagonal setting.

    a = 4.3835 Å, c = 30.487 Å; Bi on the 6c position (z = 0.4000),
    Te on 3a and 6c (z = 0.2095).
    """
    z_bi, z_te = 0.4000, 0.2095
    sites = []
    for centering in ((0, 0, 0), (2 / 3, 1 / 3, 1 / 3), (1 / 3, 2 / 3, 2 / 3)):
        base = np.array(centering, dtype=float)
        sites.append(("Te", base))
        for z in (z_te, -z_te):
            sites.append(("Te", base + np.array([0, 0, z])))
        for z in (z_bi, -z_bi):
            sites.append(("Bi", base + np.array([0, 0, z])))
    return Crystal(
        id="Bi2Te3",
        lattice=Lattice.from_parameters(4.3835, 4.3835, 30.487, 90, 90, 120),
        sites=tuple(Site(el, f) for el, f in sites),
        symmetry=SymmetryRecord(166, ("a", "c", "c")),
    )


# ---------------------------------------------------------------------------
# Random generators (seeded)
# ---------------------------------------------------------------------------

ELEMENT_POOL = ("Li", "O", "Na", "Mg", "Al", "Si", "Cl", "K", "Ca", "Ti", "Fe", "Cu", "Zn", "Ga")


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random proper rotation."""
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_lattice(rng: np.random.Generator) -> Lattice:
    lengths = rng.uniform(3.0, 7.0, size=3)
    angles = rng.uniform(75.0, 105.0, size=3)
    return Lattice.from_parameters(*lengths, *angles)


def random_crystal(
    rng: np.random.Generator,
    max_sites: int = 4,
    elements: tuple[str, ...] = ELEMENT_POOL,
    min_separation: float = 1.2,
    with_symmetry: bool = False,
    with_e_hull: bool = False,
) -> Crystal:
    """Random well-separated crystal with 1..max_sites sites."""
    lattice = random_lattice(rng)
    n = int(rng.integers(1, max_sites + 1))
    fracs: list[np.ndarray] = []
    attempts = 0
    while len(fracs) < n:
        attempts += 1
        if attempts > 500:
            lattice = random_lattice(rng)
            fracs = []
            attempts = 0
            continue
        cand = rng.uniform(0, 1, size=3)
        ok = True
        for f in fracs:
            delta = cand - f
            delta -= np.round(delta)
            if np.linalg.norm(delta @ lattice.basis) < min_separation:
                ok = False
                break
        if ok:
            fracs.append(cand)
    species = [str(rng.choice(elements)) for _ in range(n)]
    symmetry = None
    if with_symmetry:
        letters = tuple(str(rng.choice(list("abcdef"))) for _ in range(int(rng.integers(1, 4))))
        symmetry = SymmetryRecord(int(rng.integers(1, 231)), letters)
    e_hull = float(rng.uniform(0, 0.3)) if with_e_hull else None
    return Crystal(
        id=f"rand-{rng.integers(1 << 30)}",
        lattice=lattice,
        sites=tuple(Site(el, f) for el, f in zip(species, fracs)),
        symmetry=symmetry,
        e_hull=e_hull,
    )


def random_composition(rng: np.random.Generator) -> Composition:
    n = int(rng.integers(1, 5))
    elements = rng.choice(ELEMENT_POOL, size=n, replace=False)
    return Composition({str(el): int(rng.integers(1, 9)) for el in elements})


def random_sample_set(
    rng: np.random.Generator, size: int, label: str = "random", **kwargs
) -> SampleSet:
    return SampleSet(label, tuple(random_crystal(rng, **kwargs) for _ in range(size)))


# ---------------------------------------------------------------------------
# Independent oracles
# ---------------------------------------------------------------------------

def amd_oracle(crystal: Crystal, k: int) -> np.ndarray:
    """Brute-force neighbor enumeration inside a fixed generous ball.

    Independent of the production path: plain loops over a lattice-translate
    box, full sort, no expanding-ball logic.
    """
    basis = crystal.lattice.basis
    cart = crystal.cart_coords
    m = crystal.num_sites
    volume = crystal.lattice.volume
    spread = 0.0
    for i in range(m):
        for j in range(m):
            spread = max(spread, float(np.linalg.norm(cart[i] - cart[j])))
    radius = 3.0 * (k * volume / m) ** (1.0 / 3.0) + 2.0 * max(
        np.linalg.norm(basis, axis=1)
    ) + spread

    inv = np.linalg.inv(basis)
    bounds = [int(math.ceil(radius * np.linalg.norm(inv[:, i]))) + 1 for i in range(3)]
    rows = []
    for i in range(m):
        dists = []
        for n1 in range(-bounds[0], bounds[0] + 1):
            for n2 in range(-bounds[1], bounds[1] + 1):
                for n3 in range(-bounds[2], bounds[2] + 1):
                    shift = np.array([n1, n2, n3], dtype=float) @ basis
                    for j in range(m):
                        if i == j and n1 == n2 == n3 == 0:
                            continue
                        d = float(np.linalg.norm(cart[j] + shift - cart[i]))
                        if d <= radius:
                            dists.append(d)
        dists.sort()
        assert len(dists) >= k, "oracle ball too small"
        # the ball must provably contain the first k neighbors
        assert dists[k - 1] <= radius - spread
        rows.append(dists[:k])
    return np.array(rows).mean(axis=0)


def discrete_uniqueness_oracle(crystals, distance) -> float:
    """Literal double-loop evaluation of the order-dependent indicator sum."""
    n = len(crystals)
    count = 0
    for i in range(n):
        if all(distance(crystals[i], crystals[j]) != 0 for j in range(i)):
            count += 1
    return count / n


def continuous_uniqueness_oracle(crystals, distance) -> float:
    n = len(crystals)
    total = sum(
        distance(crystals[i], crystals[j]) for i, j in itertools.combinations(range(n), 2)
    )
    return total / math.comb(n, 2)


def discrete_novelty_oracle(crystals, train, distance) -> float:
    count = 0
    for x in crystals:
        if all(distance(x, y) != 0 for y in train):
            count += 1
    return count / len(crystals)


def continuous_novelty_oracle(crystals, train, distance) -> float:
    return sum(min(distance(x, y) for y in train) for x in crystals) / len(crystals)


def grouping_uniqueness_oracle(crystals, key) -> float:
    """Count equivalence classes / n; valid for equality-based pseudometrics."""
    return len({key(c) for c in crystals}) / len(crystals)
