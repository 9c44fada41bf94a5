"""Space-group / Wyckoff-letter metadata and the discrete structural distance built on it.

Symmetry labels are consumed as opaque input metadata (e.g. from the ``symmetry``
block of a JSONL record); this package never runs symmetry detection. Wyckoff
letters depend on the origin and setting chosen by whoever produced the labels,
so the distance below is only meaningful between structures labelled under one
convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import InputError

if TYPE_CHECKING:
    from .structures import Crystal


@dataclass(frozen=True)
class SymmetryRecord:
    """Space-group number plus the multiset of occupied Wyckoff letters.

    ``wyckoff_letters`` is stored sorted so that multiset equality is plain
    tuple equality.
    """

    spacegroup: int
    wyckoff_letters: tuple[str, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.spacegroup, int) or not 1 <= self.spacegroup <= 230:
            raise ValueError(f"space group must be an integer in 1..230, got {self.spacegroup!r}")
        if len(self.wyckoff_letters) == 0:
            raise ValueError("Wyckoff letter multiset must be non-empty")
        for letter in self.wyckoff_letters:
            if not (isinstance(letter, str) and len(letter) == 1 and letter.isalpha()):
                raise ValueError(f"invalid Wyckoff letter {letter!r}")
        object.__setattr__(self, "wyckoff_letters", tuple(sorted(self.wyckoff_letters)))


def d_wyckoff(a: "Crystal", b: "Crystal") -> int:
    """Binary structural distance: 0 iff space group and Wyckoff-letter multisets agree.

    Element identities are deliberately ignored; only the occupied letters are
    compared. Raises :class:`InputError` when either crystal lacks symmetry
    metadata.
    """
    if a.symmetry is None or b.symmetry is None:
        raise InputError("symmetry metadata required for d_wyckoff")
    same = (
        a.symmetry.spacegroup == b.symmetry.spacegroup
        and a.symmetry.wyckoff_letters == b.symmetry.wyckoff_letters
    )
    return 0 if same else 1
