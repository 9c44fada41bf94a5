"""Compositional distances: exact-match d_comp and continuous d_magpie.

The 145-attribute fingerprint concatenates, in fixed order:

* 6 stoichiometric attributes: the 0-norm (number of distinct elements) and
  the p-norms of the element-fraction vector for p in {2, 3, 5, 7, 10};
* 132 elemental-property statistics: for each of the 22 tabulated properties,
  the {minimum, maximum, range, fraction-weighted mean, fraction-weighted
  average deviation, mode};
* 4 electronic-structure attributes: the fraction-weighted share of valence
  electrons in the s, p, d and f shells;
* 3 ionic-compound attributes: a neutral-compound feasibility indicator and
  the maximum and fraction-weighted average electronegativity-based fractional
  ionic character over element pairs.

The elemental data ships as a versioned CSV (``element_properties_v1.csv``)
assembled from standard reference sources; an alternative table can be
supplied to every function that consumes one.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from typing import Mapping

import numpy as np

from .elements import ATOMIC_NUMBER, is_element
from .errors import InputError
from .structures import Crystal

MAGPIE_PROPERTIES = (
    "Number",
    "MendeleevNumber",
    "AtomicWeight",
    "MeltingT",
    "Column",
    "Row",
    "CovalentRadius",
    "Electronegativity",
    "NsValence",
    "NpValence",
    "NdValence",
    "NfValence",
    "NValence",
    "NsUnfilled",
    "NpUnfilled",
    "NdUnfilled",
    "NfUnfilled",
    "NUnfilled",
    "GSvolume_pa",
    "GSbandgap",
    "GSmagmom",
    "SpaceGroupNumber",
)
PROPERTY_STATS = ("minimum", "maximum", "range", "mean", "avg_dev", "mode")
STOICH_NORMS = (2, 3, 5, 7, 10)
FINGERPRINT_LENGTH = 145

# the atomic-number column doubles as the "Number" property
_COLUMN_FOR_PROPERTY = {"Number": "Z"}


@dataclass(frozen=True)
class Composition:
    """Element -> amount map with a canonical reduced (integer-ratio) form."""

    amounts: Mapping[str, float]

    def __post_init__(self) -> None:
        cleaned: dict[str, float] = {}
        for symbol, amount in self.amounts.items():
            if not is_element(symbol):
                raise ValueError(f"unknown element {symbol!r}")
            amount = float(amount)
            if not math.isfinite(amount) or amount <= 0:
                raise ValueError(f"count for {symbol} must be a positive real, got {amount}")
            cleaned[symbol] = cleaned.get(symbol, 0.0) + amount
        if not cleaned:
            raise ValueError("composition must contain at least one element")
        object.__setattr__(self, "amounts", dict(cleaned))

    @property
    def elements(self) -> tuple[str, ...]:
        """Element symbols sorted by atomic number."""
        return tuple(sorted(self.amounts, key=lambda s: ATOMIC_NUMBER[s]))

    @property
    def reduced(self) -> tuple[tuple[str, int], ...]:
        """Canonical reduced form: (symbol, integer count) sorted by atomic number."""
        ratios = [Fraction(self.amounts[el]).limit_denominator(10**6) for el in self.elements]
        denom = math.lcm(*(r.denominator for r in ratios))
        counts = [int(r * denom) for r in ratios]
        g = math.gcd(*counts)
        return tuple((el, n // g) for el, n in zip(self.elements, counts))

    @property
    def reduced_formula(self) -> str:
        return "".join(f"{el}{n if n > 1 else ''}" for el, n in self.reduced)

    @property
    def fractions(self) -> np.ndarray:
        """Element fractions in ``elements`` order (from the reduced form)."""
        counts = np.array([n for _, n in self.reduced], dtype=float)
        return counts / counts.sum()

    def __eq__(self, other) -> bool:
        return isinstance(other, Composition) and self.reduced == other.reduced

    def __hash__(self) -> int:
        return hash(self.reduced)


def composition_of(crystal: Crystal) -> Composition:
    """Composition from site multiplicities."""
    counts: dict[str, int] = {}
    for site in crystal.sites:
        counts[site.element] = counts.get(site.element, 0) + 1
    return Composition(counts)


def d_comp(a: Crystal, b: Crystal) -> int:
    """Binary compositional distance: 0 iff the reduced compositions are equal."""
    return 0 if composition_of(a) == composition_of(b) else 1


# ---------------------------------------------------------------------------
# Elemental property table
# ---------------------------------------------------------------------------

class PropertyTable:
    """Elemental property lookup backed by a versioned CSV file."""

    def __init__(self, rows: dict[str, dict[str, str]], version: str):
        self.version = version
        self._rows = rows

    @classmethod
    def from_csv(cls, path, version: str | None = None) -> "PropertyTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = {row["symbol"]: row for row in reader}
        if version is None:
            version = str(path)
        return cls(rows, version)

    def get(self, symbol: str, prop: str) -> float:
        column = _COLUMN_FOR_PROPERTY.get(prop, prop)
        try:
            return float(self._rows[symbol][column])
        except KeyError:
            raise InputError(
                f"element {symbol!r} missing from property table {self.version} "
                f"(needed for {prop})"
            ) from None

    def oxidation_states(self, symbol: str) -> tuple[int, ...]:
        try:
            cell = self._rows[symbol]["OxidationStates"]
        except KeyError:
            raise InputError(
                f"element {symbol!r} missing from property table {self.version} "
                "(needed for OxidationStates)"
            ) from None
        if not cell:
            return ()
        return tuple(int(tok) for tok in cell.split("|"))


@lru_cache(maxsize=1)
def default_property_table() -> PropertyTable:
    path = resources.files("xtalmet").joinpath("data/element_properties_v1.csv")
    with resources.as_file(path) as real_path:
        return PropertyTable.from_csv(real_path, version="v1")


# ---------------------------------------------------------------------------
# Magpie fingerprint
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MagpieVector:
    """145-attribute composition feature vector; geometry-independent."""

    values: np.ndarray
    table_version: str

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.shape != (FINGERPRINT_LENGTH,):
            raise ValueError(f"fingerprint must have length {FINGERPRINT_LENGTH}")
        if not np.all(np.isfinite(values)):
            raise ValueError("fingerprint entries must be finite")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def feature_names() -> tuple[str, ...]:
    """Attribute names in fingerprint order (fixed layout, one per entry)."""
    names = ["0-norm"] + [f"{p}-norm" for p in STOICH_NORMS]
    for prop in MAGPIE_PROPERTIES:
        names.extend(f"{stat} {prop}" for stat in PROPERTY_STATS)
    names.extend(f"frac {orb} valence electrons" for orb in "spdf")
    names.extend(["compound possible", "max ionic char", "avg ionic char"])
    return tuple(names)


def _weighted_mode(values: np.ndarray, fractions: np.ndarray) -> float:
    # value of the most abundant element; ties break to the smallest value
    top = np.isclose(fractions, fractions.max(), rtol=0.0, atol=1e-12)
    return float(values[top].min())


def _compound_possible(counts: np.ndarray, ox_lists: list[tuple[int, ...]]) -> float:
    if len(ox_lists) == 1:
        return 1.0
    for states in itertools.product(*ox_lists):
        if abs(float(np.dot(states, counts))) < 1e-9:
            return 1.0
    return 0.0


def magpie_fingerprint(comp: Composition, table: PropertyTable | None = None) -> MagpieVector:
    """Compute the 145-attribute fingerprint of a composition.

    Depends only on element fractions (supercells and polymorphs of one
    composition map to the same vector).
    """
    if table is None:
        table = default_property_table()
    elements = comp.elements
    fractions = comp.fractions
    out: list[float] = []

    out.append(float(len(elements)))
    for p in STOICH_NORMS:
        out.append(float(np.sum(fractions**p) ** (1.0 / p)))

    for prop in MAGPIE_PROPERTIES:
        values = np.array([table.get(el, prop) for el in elements], dtype=float)
        vmin = float(values.min())
        vmax = float(values.max())
        mean = float(np.dot(fractions, values))
        avg_dev = float(np.dot(fractions, np.abs(values - mean)))
        out.extend([vmin, vmax, vmax - vmin, mean, avg_dev, _weighted_mode(values, fractions)])

    shell_counts = {
        orb: np.array([table.get(el, f"N{orb}Valence") for el in elements]) for orb in "spdf"
    }
    total_valence = float(
        np.dot(fractions, np.array([table.get(el, "NValence") for el in elements]))
    )
    for orb in "spdf":
        out.append(float(np.dot(fractions, shell_counts[orb])) / total_valence)

    counts = np.array([n for _, n in comp.reduced], dtype=float)
    if len(elements) == 1:
        out.extend([1.0, 0.0, 0.0])
    else:
        ox_lists = [table.oxidation_states(el) for el in elements]
        possible = _compound_possible(counts, ox_lists)
        electronegativity = np.array(
            [table.get(el, "Electronegativity") for el in elements], dtype=float
        )
        max_char = 0.0
        avg_char = 0.0
        for i, j in itertools.combinations(range(len(elements)), 2):
            char = 1.0 - math.exp(-0.25 * (electronegativity[i] - electronegativity[j]) ** 2)
            max_char = max(max_char, char)
            avg_char += fractions[i] * fractions[j] * char
        out.extend([possible, max_char, avg_char])

    return MagpieVector(np.array(out), table.version)


def magpie_distance(u: MagpieVector, v: MagpieVector) -> float:
    """Euclidean distance between two fingerprints."""
    if u.table_version != v.table_version:
        raise InputError(
            f"fingerprints come from different property tables: "
            f"{u.table_version} vs {v.table_version}"
        )
    return float(np.linalg.norm(u.values - v.values))


def d_magpie(a: Crystal, b: Crystal, table: PropertyTable | None = None) -> float:
    """Continuous compositional distance between two crystals."""
    fp_a = magpie_fingerprint(composition_of(a), table)
    fp_b = magpie_fingerprint(composition_of(b), table)
    return magpie_distance(fp_a, fp_b)
