"""Crystal data model, file ingestion, cell reductions, and geometry utilities.

Conventions used throughout the package:

* lattice bases are 3x3 matrices whose *rows* are the lattice vectors in Å,
  so Cartesian coordinates are ``frac @ basis``;
* fractional coordinates are wrapped into [0, 1) at construction time;
* all value types are immutable after construction and safe to share between
  workers.

Symmetry labels and hull energies are opaque metadata: operations carry them
through unchanged and never recompute them.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from typing import IO, Iterable, Iterator

import numpy as np

from .elements import atomic_number, is_element
from .errors import ParseError
from .symmetry import SymmetryRecord

MIN_LATTICE_DET = 1e-8       # ų; smaller cells are treated as degenerate
DUPLICATE_SITE_TOL = 1e-4    # Å; same-element sites closer than this are rejected
SUPERCELL_SITE_CAP = 10_000  # guards the O(sites²) reductions


def wrap_frac(frac: np.ndarray) -> np.ndarray:
    """Wrap fractional coordinates into [0, 1)."""
    wrapped = np.mod(frac, 1.0)
    # mod of a tiny negative rounds to exactly 1.0 in floating point
    wrapped[wrapped >= 1.0] = 0.0
    return wrapped


@dataclass(frozen=True)
class Lattice:
    """Lattice basis; rows are the lattice vectors a, b, c in Å."""

    basis: np.ndarray

    def __post_init__(self) -> None:
        basis = np.array(self.basis, dtype=float)
        if basis.shape != (3, 3) or not np.all(np.isfinite(basis)):
            raise ValueError("lattice basis must be a finite 3x3 matrix")
        if np.linalg.det(basis) < MIN_LATTICE_DET:
            raise ValueError(
                "degenerate lattice: det(basis) must be positive and exceed "
                f"{MIN_LATTICE_DET} ų"
            )
        basis.flags.writeable = False
        object.__setattr__(self, "basis", basis)

    @property
    def volume(self) -> float:
        return float(np.linalg.det(self.basis))

    @property
    def lengths(self) -> np.ndarray:
        """Vector lengths (|a|, |b|, |c|) in Å."""
        return np.linalg.norm(self.basis, axis=1)

    @property
    def angles(self) -> np.ndarray:
        """Cell angles (alpha, beta, gamma) in degrees; alpha is the b^c angle."""
        a, b, c = self.basis
        la, lb, lc = self.lengths
        cosines = np.array(
            [np.dot(b, c) / (lb * lc), np.dot(a, c) / (la * lc), np.dot(a, b) / (la * lb)]
        )
        return np.degrees(np.arccos(np.clip(cosines, -1.0, 1.0)))

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.basis)

    def parameters(self) -> tuple[float, ...]:
        return tuple(self.lengths) + tuple(self.angles)

    @classmethod
    def from_parameters(
        cls, a: float, b: float, c: float, alpha: float, beta: float, gamma: float
    ) -> "Lattice":
        """Build a basis from cell parameters using the crystallographic
        convention: a along x, b in the xy-plane."""
        al, be, ga = np.radians([alpha, beta, gamma])
        cx = c * math.cos(be)
        cy = c * (math.cos(al) - math.cos(be) * math.cos(ga)) / math.sin(ga)
        cz_sq = c * c - cx * cx - cy * cy
        if cz_sq <= 0:
            raise ValueError("cell parameters do not define a valid 3D lattice")
        basis = np.array(
            [
                [a, 0.0, 0.0],
                [b * math.cos(ga), b * math.sin(ga), 0.0],
                [cx, cy, math.sqrt(cz_sq)],
            ]
        )
        return cls(basis)


@dataclass(frozen=True)
class Site:
    """One atom: element symbol plus fractional coordinates (wrapped to [0, 1))."""

    element: str
    frac: np.ndarray

    def __post_init__(self) -> None:
        if not is_element(self.element):
            raise ValueError(f"unknown element {self.element!r}")
        frac = np.array(self.frac, dtype=float)
        if frac.shape != (3,) or not np.all(np.isfinite(frac)):
            raise ValueError("fractional coordinates must be a finite triple")
        frac = wrap_frac(frac)
        frac.flags.writeable = False
        object.__setattr__(self, "frac", frac)


@dataclass(frozen=True)
class Crystal:
    """A periodic crystal: lattice, sites, and optional metadata.

    ``symmetry`` and ``e_hull`` are carried through geometric operations
    unchanged; they come from whoever produced the structure.
    """

    id: str
    lattice: Lattice
    sites: tuple[Site, ...]
    symmetry: SymmetryRecord | None = None
    e_hull: float | None = None

    def __post_init__(self) -> None:
        sites = tuple(self.sites)
        if len(sites) == 0:
            raise ValueError("crystal must contain at least one site")
        object.__setattr__(self, "sites", sites)
        if self.e_hull is not None and not math.isfinite(self.e_hull):
            raise ValueError("e_hull must be finite")
        self._check_duplicate_sites()

    def _check_duplicate_sites(self) -> None:
        # same-element sites within DUPLICATE_SITE_TOL (min-image) are duplicates
        by_element: dict[str, list[int]] = {}
        for i, site in enumerate(self.sites):
            by_element.setdefault(site.element, []).append(i)
        basis = self.lattice.basis
        frac = self.frac_coords
        for element, idx in by_element.items():
            if len(idx) < 2:
                continue
            group = frac[idx]
            # chunk rows to bound memory for large supercells
            step = max(1, 2_000_000 // (len(idx) * 3))
            for start in range(0, len(idx), step):
                block = group[start : start + step]
                delta = block[:, None, :] - group[None, :, :]
                delta -= np.round(delta)
                dist2 = np.einsum("ijk,ijk->ij", delta @ basis, delta @ basis)
                rows = np.arange(start, start + len(block))
                dist2[np.arange(len(block)), rows] = np.inf  # self-pairs
                if np.any(dist2 < DUPLICATE_SITE_TOL**2):
                    raise ValueError(f"duplicate {element} sites closer than {DUPLICATE_SITE_TOL} Å")

    @property
    def num_sites(self) -> int:
        return len(self.sites)

    @property
    def species(self) -> tuple[str, ...]:
        return tuple(site.element for site in self.sites)

    @property
    def frac_coords(self) -> np.ndarray:
        return np.array([site.frac for site in self.sites])

    @property
    def cart_coords(self) -> np.ndarray:
        return self.frac_coords @ self.lattice.basis


@dataclass(frozen=True)
class SampleSet:
    """An ordered multiset of crystals from one source (e.g. one generative model).

    Order is generation order and is preserved through load/save round trips;
    duplicates are permitted.
    """

    label: str
    crystals: tuple[Crystal, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "crystals", tuple(self.crystals))

    def __len__(self) -> int:
        return len(self.crystals)

    def __iter__(self) -> Iterator[Crystal]:
        return iter(self.crystals)

    def __getitem__(self, i):
        return self.crystals[i]


# ---------------------------------------------------------------------------
# JSONL ingestion / serialization
# ---------------------------------------------------------------------------

def _record_to_crystal(record: dict, line_no: int) -> Crystal:
    for key in ("id", "lattice", "species", "frac_coords"):
        if key not in record:
            raise ParseError(f"missing required field {key!r} at line {line_no}")
    species = record["species"]
    coords = record["frac_coords"]
    if not isinstance(species, list) or not species:
        raise ParseError(f"species must be a non-empty list at line {line_no}")
    if not isinstance(coords, list) or len(coords) != len(species):
        raise ParseError(f"frac_coords must match species length at line {line_no}")
    for symbol in species:
        if not (isinstance(symbol, str) and is_element(symbol)):
            raise ParseError(f"unknown element at line {line_no}: {symbol!r}")
    try:
        lattice = Lattice(np.array(record["lattice"], dtype=float))
    except ValueError as exc:
        raise ParseError(f"{exc} at line {line_no}") from None
    symmetry = None
    if record.get("symmetry") is not None:
        block = record["symmetry"]
        try:
            symmetry = SymmetryRecord(
                spacegroup=block["spacegroup"], wyckoff_letters=tuple(block["wyckoff"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"invalid symmetry block at line {line_no}: {exc}") from None
    try:
        sites = tuple(Site(el, np.array(fc, dtype=float)) for el, fc in zip(species, coords))
        return Crystal(
            id=str(record["id"]),
            lattice=lattice,
            sites=sites,
            symmetry=symmetry,
            e_hull=None if record.get("e_hull") is None else float(record["e_hull"]),
        )
    except ValueError as exc:
        raise ParseError(f"{exc} at line {line_no}") from None


def parse_jsonl(stream: bytes | str | IO, label: str = "samples") -> SampleSet:
    """Parse one structure record per line into a :class:`SampleSet`.

    ``stream`` may be bytes, text, or a file-like object. Crystals appear in
    file order. Malformed lines raise :class:`ParseError` with the 1-based
    line number; an input with no records raises ``ParseError("empty sample set")``.
    """
    if hasattr(stream, "read"):
        stream = stream.read()
    if isinstance(stream, bytes):
        stream = stream.decode("utf-8")
    crystals = []
    for line_no, line in enumerate(stream.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed JSON at line {line_no}: {exc.msg}") from None
        if not isinstance(record, dict):
            raise ParseError(f"expected a JSON object at line {line_no}")
        crystals.append(_record_to_crystal(record, line_no))
    if not crystals:
        raise ParseError("empty sample set")
    return SampleSet(label=label, crystals=tuple(crystals))


def _sig12(x: float) -> float:
    # 12 significant digits, the serialization precision of the JSONL schema
    return float(f"{x:.12g}")


def crystal_to_record(crystal: Crystal) -> dict:
    record: dict = {
        "id": crystal.id,
        "lattice": [[_sig12(v) for v in row] for row in crystal.lattice.basis],
        "species": list(crystal.species),
        "frac_coords": [[_sig12(v) for v in site.frac] for site in crystal.sites],
    }
    if crystal.e_hull is not None:
        record["e_hull"] = _sig12(crystal.e_hull)
    if crystal.symmetry is not None:
        record["symmetry"] = {
            "spacegroup": crystal.symmetry.spacegroup,
            "wyckoff": list(crystal.symmetry.wyckoff_letters),
        }
    return record


def serialize_jsonl(samples: SampleSet | Iterable[Crystal]) -> str:
    """Serialize crystals to JSONL text, one record per line, in order."""
    crystals = samples.crystals if isinstance(samples, SampleSet) else tuple(samples)
    lines = [json.dumps(crystal_to_record(c), separators=(",", ":")) for c in crystals]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CIF ingestion ("lite": explicit-site files only, no symmetry expansion)
# ---------------------------------------------------------------------------

_CIF_NUMBER = re.compile(r"^[-+]?[0-9.]+(?:[eE][-+]?[0-9]+)?")
_ELEMENT_PREFIX = re.compile(r"^([A-Z][a-z]?)")


def _cif_float(token: str, tag: str) -> float:
    match = _CIF_NUMBER.match(token)  # strip "(esd)" suffixes like 3.24(2)
    if not match:
        raise ParseError(f"cannot parse numeric value {token!r} for {tag}")
    return float(match.group(0))


def _split_cif(text: str) -> list[list[str]]:
    rows = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    return rows


def parse_cif_lite(text: str, crystal_id: str | None = None) -> Crystal:
    """Parse a CIF with explicit sites (P1-style) into a :class:`Crystal`.

    Requires all six cell parameters and an ``_atom_site`` loop. Files whose
    symmetry-operation loop contains anything beyond the identity are refused:
    symmetry expansion is out of scope.
    """
    rows = _split_cif(text)
    scalars: dict[str, str] = {}
    loops: list[tuple[list[str], list[list[str]]]] = []
    data_name = None
    i = 0
    while i < len(rows):
        row = rows[i]
        if row[0].lower() == "loop_":
            tags: list[str] = []
            i += 1
            while i < len(rows) and rows[i][0].startswith("_") and len(rows[i]) == 1:
                tags.append(rows[i][0].lower())
                i += 1
            body: list[list[str]] = []
            while i < len(rows) and not rows[i][0].startswith(("_", "loop_", "data_")):
                body.append(rows[i])
                i += 1
            loops.append((tags, body))
            continue
        if row[0].lower().startswith("data_"):
            data_name = row[0][5:]
        elif row[0].startswith("_") and len(row) >= 2:
            scalars[row[0].lower()] = row[1]
        i += 1

    for op_tag in ("_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz"):
        for tags, body in loops:
            if op_tag in tags:
                col = tags.index(op_tag)
                ops = {
                    "".join(r[col:]).strip("'\"").replace(" ", "").lower() for r in body
                }
                if ops - {"x,y,z", "+x,+y,+z"}:
                    raise ParseError("symmetry-expanded CIF unsupported")

    params = []
    for tag in (
        "_cell_length_a",
        "_cell_length_b",
        "_cell_length_c",
        "_cell_angle_alpha",
        "_cell_angle_beta",
        "_cell_angle_gamma",
    ):
        if tag not in scalars:
            raise ParseError(f"missing cell parameter {tag}")
        params.append(_cif_float(scalars[tag], tag))
    lattice = Lattice.from_parameters(*params)

    site_loop = None
    for tags, body in loops:
        if "_atom_site_fract_x" in tags:
            site_loop = (tags, body)
            break
    if site_loop is None or not site_loop[1]:
        raise ParseError("missing atom_site loop")
    tags, body = site_loop
    element_col = None
    for tag in ("_atom_site_type_symbol", "_atom_site_label"):
        if tag in tags:
            element_col = tags.index(tag)
            break
    if element_col is None:
        raise ParseError("atom_site loop lacks element symbols")
    cols = [tags.index(f"_atom_site_fract_{axis}") for axis in "xyz"]
    sites = []
    for row in body:
        match = _ELEMENT_PREFIX.match(row[element_col])
        if not match or not is_element(match.group(1)):
            raise ParseError(f"unknown element in atom_site loop: {row[element_col]!r}")
        frac = [_cif_float(row[c], "_atom_site_fract") for c in cols]
        sites.append(Site(match.group(1), np.array(frac)))
    return Crystal(id=crystal_id or data_name or "cif", lattice=lattice, sites=tuple(sites))


# ---------------------------------------------------------------------------
# Cell operations
# ---------------------------------------------------------------------------

def make_supercell(crystal: Crystal, n1: int, n2: int, n3: int) -> Crystal:
    """Stack ``n1 x n2 x n3`` copies of the cell; composition ratios unchanged."""
    for n in (n1, n2, n3):
        if not isinstance(n, int) or n < 1:
            raise ValueError("supercell multipliers must be positive integers")
    total = crystal.num_sites * n1 * n2 * n3
    if total > SUPERCELL_SITE_CAP:
        raise ValueError(f"supercell would contain {total} sites, exceeding cap {SUPERCELL_SITE_CAP}")
    factors = np.array([n1, n2, n3], dtype=float)
    new_lattice = Lattice(crystal.lattice.basis * factors[:, None])
    new_sites = []
    for shift in itertools.product(range(n1), range(n2), range(n3)):
        offset = np.array(shift, dtype=float)
        for site in crystal.sites:
            new_sites.append(Site(site.element, (site.frac + offset) / factors))
    return replace(crystal, lattice=new_lattice, sites=tuple(new_sites))


# Krivy-Gruber step matrices for the lattice-swap moves (rows act on basis rows)
_SWAP_AB = np.array([[0, -1, 0], [-1, 0, 0], [0, 0, -1]])
_SWAP_BC = np.array([[-1, 0, 0], [0, 0, -1], [0, -1, 0]])


def _niggli_params(basis: np.ndarray) -> tuple[float, float, float, float, float, float]:
    a, b, c = basis
    return (
        float(a @ a),
        float(b @ b),
        float(c @ c),
        float(2.0 * (b @ c)),
        float(2.0 * (a @ c)),
        float(2.0 * (a @ b)),
    )


def niggli_reduce(lattice: Lattice, tol: float = 1e-5, max_iter: int = 1000) -> Lattice:
    """Return a Niggli-reduced basis spanning the same lattice.

    Uses the Krivy-Gruber iteration with the usual epsilon stabilization;
    raises ``RuntimeError`` if the iteration does not settle within
    ``max_iter`` steps (pathological input).
    """
    basis0 = lattice.basis
    eps = tol * lattice.volume ** (2.0 / 3.0)
    transform = np.eye(3, dtype=int)

    for _ in range(max_iter):
        basis = transform @ basis0
        big_a, big_b, big_c, xi, eta, zeta = _niggli_params(basis)

        # A1: order |a| <= |b|
        if big_a > big_b + eps or (abs(big_a - big_b) <= eps and abs(xi) > abs(eta) + eps):
            transform = _SWAP_AB @ transform
            continue
        # A2: order |b| <= |c|
        if big_b > big_c + eps or (abs(big_b - big_c) <= eps and abs(eta) > abs(zeta) + eps):
            transform = _SWAP_BC @ transform
            continue

        # A3/A4: fix the signs of (xi, eta, zeta); falls through to A5-A8
        l = 1 if xi > eps else (-1 if xi < -eps else 0)
        m = 1 if eta > eps else (-1 if eta < -eps else 0)
        n = 1 if zeta > eps else (-1 if zeta < -eps else 0)
        if l * m * n == 1:
            i, j, k = (1 if s >= 0 else -1 for s in (l, m, n))
        else:
            i, j, k = (-1 if s == 1 else 1 for s in (l, m, n))
            if i * j * k == -1:  # keep the transform proper by flipping a zero channel
                if n == 0:
                    k = -1
                elif m == 0:
                    j = -1
                elif l == 0:
                    i = -1
        sign_fix = np.diag([i, j, k])
        if not np.array_equal(sign_fix, np.eye(3, dtype=int)):
            transform = sign_fix @ transform
            basis = transform @ basis0
            big_a, big_b, big_c, xi, eta, zeta = _niggli_params(basis)

        # A5
        if (
            abs(xi) > big_b + eps
            or (abs(big_b - xi) <= eps and 2 * eta < zeta - eps)
            or (abs(big_b + xi) <= eps and zeta < -eps)
        ):
            step = np.eye(3, dtype=int)
            step[2, 1] = -1 if xi > 0 else 1
            transform = step @ transform
            continue
        # A6
        if (
            abs(eta) > big_a + eps
            or (abs(big_a - eta) <= eps and 2 * xi < zeta - eps)
            or (abs(big_a + eta) <= eps and zeta < -eps)
        ):
            step = np.eye(3, dtype=int)
            step[2, 0] = -1 if eta > 0 else 1
            transform = step @ transform
            continue
        # A7
        if (
            abs(zeta) > big_a + eps
            or (abs(big_a - zeta) <= eps and 2 * xi < eta - eps)
            or (abs(big_a + zeta) <= eps and eta < -eps)
        ):
            step = np.eye(3, dtype=int)
            step[1, 0] = -1 if zeta > 0 else 1
            transform = step @ transform
            continue
        # A8
        if xi + eta + zeta + big_a + big_b < -eps or (
            abs(xi + eta + zeta + big_a + big_b) <= eps and 2 * (big_a + eta) + zeta > eps
        ):
            step = np.eye(3, dtype=int)
            step[2, :] = 1
            transform = step @ transform
            continue
        reduced = transform @ basis0
        if np.linalg.det(reduced) < 0:
            reduced = -reduced
        return Lattice(reduced)

    raise RuntimeError(f"Niggli reduction did not converge within {max_iter} steps")


def _min_image_dist2(frac_delta: np.ndarray, basis: np.ndarray) -> np.ndarray:
    delta = frac_delta - np.round(frac_delta)
    cart = delta @ basis
    return np.einsum("...k,...k->...", cart, cart)


def _is_internal_translation(
    frac: np.ndarray, elements: np.ndarray, basis: np.ndarray, t: np.ndarray, tol: float
) -> bool:
    """True when shifting every site by fractional ``t`` maps the site set onto itself."""
    shifted = frac + t
    for z in np.unique(elements):
        group = frac[elements == z]
        moved = shifted[elements == z]
        d2 = _min_image_dist2(moved[:, None, :] - group[None, :, :], basis)
        # a true translation permutes the group: match in both directions
        if d2.min(axis=1).max() > tol * tol or d2.min(axis=0).max() > tol * tol:
            return False
    return True


def primitive_reduce(crystal: Crystal, site_tol: float = 1e-3) -> Crystal:
    """Factor out internal translations and return a Niggli-reduced primitive cell.

    Candidate translations are differences between same-element site positions;
    each candidate that maps the full site set onto itself (within ``site_tol``,
    Cartesian) is a lattice vector of the primitive cell. Falls back to the
    input cell (Niggli-reduced) when no smaller cell is found.
    """
    if site_tol <= 0:
        raise ValueError("site_tol must be positive")
    basis = crystal.lattice.basis
    frac = crystal.frac_coords
    elements = np.array([atomic_number(s.element) for s in crystal.sites])

    # anchor on the rarest element: any internal translation maps its first
    # site onto another site of the same element
    counts = Counter(elements)
    rare = min(counts, key=lambda z: (counts[z], z))
    anchor = int(np.nonzero(elements == rare)[0][0])
    candidates = frac[elements == rare] - frac[anchor]

    translations = [
        np.zeros(3)
    ] + [
        wrap_frac(t.copy())
        for t in candidates
        if np.any(np.abs(t) > 1e-12)
        and _is_internal_translation(frac, elements, basis, t, site_tol)
    ]
    order = len(translations)

    reduced_lattice = crystal.lattice
    if order > 1:
        # span the translation lattice: pick three vectors with |det| = 1/order
        pool = translations[1:] + [np.eye(3)[i] for i in range(3)]
        target = 1.0 / order
        best = None
        for triple in itertools.combinations(pool, 3):
            det = np.linalg.det(np.array(triple))
            if abs(abs(det) - target) < 0.5 * target:
                best = np.array(triple) if det > 0 else np.array(triple[::-1])
                break
        if best is not None:
            reduced_lattice = Lattice(best @ basis)
        else:
            order = 1  # tolerance pathology: keep the input cell

    reduced_lattice = niggli_reduce(reduced_lattice)
    new_basis = reduced_lattice.basis
    new_frac = wrap_frac(crystal.cart_coords @ np.linalg.inv(new_basis))

    kept_sites: list[Site] = []
    kept_frac: list[np.ndarray] = []
    kept_z: list[int] = []
    for i, site in enumerate(crystal.sites):
        is_dup = False
        for f, z in zip(kept_frac, kept_z):
            if z == elements[i] and _min_image_dist2(new_frac[i] - f, new_basis) < site_tol**2:
                is_dup = True
                break
        if not is_dup:
            kept_sites.append(Site(site.element, new_frac[i]))
            kept_frac.append(new_frac[i])
            kept_z.append(int(elements[i]))

    if order > 1 and len(kept_sites) * order != crystal.num_sites:
        # tolerance pathology: the candidate cell did not tile the sites cleanly
        lat = niggli_reduce(crystal.lattice)
        sites = tuple(
            Site(s.element, wrap_frac(cc @ np.linalg.inv(lat.basis)))
            for s, cc in zip(crystal.sites, crystal.cart_coords)
        )
        return replace(crystal, lattice=lat, sites=sites)
    return replace(crystal, lattice=reduced_lattice, sites=tuple(kept_sites))


def apply_isometry(crystal: Crystal, rotation: np.ndarray, translation: np.ndarray) -> Crystal:
    """Apply a rigid motion (Cartesian rotation + translation in Å) to a crystal.

    The rotation must be orthogonal within 1e-10. For improper rotations one
    lattice vector is negated afterwards to keep the stored basis right-handed;
    the crystal (as a point set) is unaffected.
    """
    rotation = np.asarray(rotation, dtype=float)
    translation = np.asarray(translation, dtype=float)
    if rotation.shape != (3, 3) or np.max(np.abs(rotation.T @ rotation - np.eye(3))) > 1e-10:
        raise ValueError("rotation matrix is not orthogonal within 1e-10")
    new_basis = crystal.lattice.basis @ rotation.T
    if np.linalg.det(new_basis) < 0:
        new_basis = new_basis.copy()
        new_basis[2] = -new_basis[2]
    new_lattice = Lattice(new_basis)
    cart = crystal.cart_coords @ rotation.T + translation
    new_frac = wrap_frac(cart @ new_lattice.inverse)
    sites = tuple(Site(s.element, f) for s, f in zip(crystal.sites, new_frac))
    return replace(crystal, lattice=new_lattice, sites=sites)


def perturb_sites(crystal: Crystal, eps: float, seed: int) -> Crystal:
    """Displace every site by an independent random vector of length <= ``eps`` Å.

    Directions are uniform on the sphere and lengths uniform in [0, eps];
    deterministic for a given seed.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if eps == 0:
        return crystal
    rng = np.random.default_rng(seed)
    m = crystal.num_sites
    directions = rng.normal(size=(m, 3))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    lengths = rng.uniform(0.0, eps, size=(m, 1))
    cart = crystal.cart_coords + directions / norms * lengths
    new_frac = wrap_frac(cart @ crystal.lattice.inverse)
    sites = tuple(Site(s.element, f) for s, f in zip(crystal.sites, new_frac))
    return replace(crystal, sites=sites)
