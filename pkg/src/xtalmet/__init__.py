"""Crystal distance functions and uniqueness/novelty metrics.

Five distances between inorganic crystals — three discrete (structure match,
composition match, space-group/Wyckoff match) and two continuous (Euclidean
distance between composition fingerprints, Chebyshev distance between
periodic nearest-neighbor fingerprints) — plus the uniqueness and novelty
metrics built on them for comparing generative models, with stability
screening, permutation audits, and Pareto-front model comparison.
"""

from .amd import DEFAULT_K, AmdVector, amd_distance, amd_vector, d_amd, neighbor_distances
from .composition import (
    Composition,
    MagpieVector,
    PropertyTable,
    composition_of,
    d_comp,
    d_magpie,
    default_property_table,
    magpie_distance,
    magpie_fingerprint,
)
from .errors import CacheMismatchError, InputError, ParseError, XtalmetError
from .matcher import MatchTolerances, build_smat_chain, d_smat
from .metrics import (
    DistanceKind,
    MetricReport,
    ScreenPolicy,
    ShuffleAudit,
    continuous_novelty,
    continuous_uniqueness,
    discrete_novelty,
    discrete_uniqueness,
    novelty_report,
    pairwise_matrix,
    pareto_front,
    reports_to_csv,
    shuffle_audit,
    uniqueness_report,
)
from .structures import (
    Crystal,
    Lattice,
    SampleSet,
    Site,
    apply_isometry,
    make_supercell,
    niggli_reduce,
    parse_cif_lite,
    parse_jsonl,
    perturb_sites,
    primitive_reduce,
    serialize_jsonl,
)
from .symmetry import SymmetryRecord, d_wyckoff

__version__ = "0.1.0"

__all__ = [
    "AmdVector",
    "CacheMismatchError",
    "Composition",
    "Crystal",
    "DEFAULT_K",
    "DistanceKind",
    "InputError",
    "Lattice",
    "MagpieVector",
    "MatchTolerances",
    "MetricReport",
    "ParseError",
    "PropertyTable",
    "SampleSet",
    "ScreenPolicy",
    "ShuffleAudit",
    "Site",
    "SymmetryRecord",
    "XtalmetError",
    "amd_distance",
    "amd_vector",
    "apply_isometry",
    "build_smat_chain",
    "composition_of",
    "continuous_novelty",
    "continuous_uniqueness",
    "d_amd",
    "d_comp",
    "d_magpie",
    "d_smat",
    "d_wyckoff",
    "default_property_table",
    "discrete_novelty",
    "discrete_uniqueness",
    "magpie_distance",
    "magpie_fingerprint",
    "make_supercell",
    "neighbor_distances",
    "niggli_reduce",
    "novelty_report",
    "pairwise_matrix",
    "pareto_front",
    "parse_cif_lite",
    "parse_jsonl",
    "perturb_sites",
    "primitive_reduce",
    "reports_to_csv",
    "serialize_jsonl",
    "shuffle_audit",
    "uniqueness_report",
]
