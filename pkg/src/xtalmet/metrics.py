"""Uniqueness and novelty metrics, stability screening, shuffle audit, Pareto front.

Discrete metrics count samples whose distance to every reference sample is
nonzero; continuous metrics average pairwise (uniqueness) or minimum
(novelty) distances. Continuous aggregation uses exactly rounded summation
(``math.fsum``) over the multiset of pair distances, so results are
bit-identical under sample permutations and any worker count.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .amd import DEFAULT_K, AmdVector, amd_distance, amd_vector
from .composition import (
    MagpieVector,
    PropertyTable,
    composition_of,
    magpie_distance,
    magpie_fingerprint,
)
from .errors import InputError
from .matcher import MatchTolerances, d_smat
from .structures import Crystal, SampleSet

logger = logging.getLogger(__name__)

DISCRETE_KIND_NAMES = ("smat", "comp", "wyckoff")
CONTINUOUS_KIND_NAMES = ("magpie", "amd")
KIND_NAMES = DISCRETE_KIND_NAMES + CONTINUOUS_KIND_NAMES

_CDIST_METRIC = {"amd": "chebyshev", "magpie": "euclidean"}
_ROW_CHUNK = 512  # bounds the memory of chunked cdist calls


@dataclass(frozen=True)
class DistanceKind:
    """A crystal distance function plus its parameters.

    ``smat``, ``comp`` and ``wyckoff`` are discrete (values in {0, 1});
    ``magpie`` and ``amd`` are continuous (non-negative reals).
    """

    name: str
    k: int = DEFAULT_K
    tolerances: MatchTolerances = field(default_factory=MatchTolerances)
    table: PropertyTable | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.name not in KIND_NAMES:
            raise InputError(f"unknown distance kind {self.name!r}; expected one of {KIND_NAMES}")

    @property
    def is_discrete(self) -> bool:
        return self.name in DISCRETE_KIND_NAMES

    @property
    def is_continuous(self) -> bool:
        return self.name in CONTINUOUS_KIND_NAMES

    def params(self) -> dict:
        out: dict = {}
        if self.name == "amd":
            out["k"] = self.k
        if self.name == "smat":
            out.update(
                ltol=self.tolerances.ltol,
                stol=self.tolerances.stol,
                angle_tol=self.tolerances.angle_tol,
            )
        if self.name == "magpie" and self.table is not None:
            out["property_table"] = self.table.version
        return out

    # -- embeddings --------------------------------------------------------

    def embed(self, crystal: Crystal):
        """Per-crystal precomputation: a fingerprint vector or a comparison key."""
        if self.name == "comp":
            return composition_of(crystal)
        if self.name == "wyckoff":
            if crystal.symmetry is None:
                raise InputError("symmetry metadata required for d_wyckoff")
            return (crystal.symmetry.spacegroup, crystal.symmetry.wyckoff_letters)
        if self.name == "magpie":
            return magpie_fingerprint(composition_of(crystal), self.table)
        if self.name == "amd":
            return amd_vector(crystal, self.k)
        return crystal  # smat has no precomputation stage

    def embed_all(self, crystals: Sequence[Crystal], workers: int = 1) -> list:
        start = time.perf_counter()
        if workers > 1 and self.name in ("magpie", "amd"):
            chunk = max(1, len(crystals) // (workers * 4))
            with ProcessPoolExecutor(max_workers=workers) as pool:
                out = list(pool.map(self.embed, crystals, chunksize=chunk))
        else:
            out = [self.embed(c) for c in crystals]
        logger.info(
            "embedding stage (%s, %d crystals): %.3f s",
            self.name,
            len(crystals),
            time.perf_counter() - start,
        )
        return out

    def pair_distance(self, e_i, e_j) -> float:
        if self.name == "comp" or self.name == "wyckoff":
            return 0.0 if e_i == e_j else 1.0
        if self.name == "magpie":
            return magpie_distance(e_i, e_j)
        if self.name == "amd":
            return amd_distance(e_i, e_j)
        return float(d_smat(e_i, e_j, self.tolerances))

    # -- embedding matrices (cacheable kinds only) --------------------------

    def matrix(self, embeddings: Sequence) -> np.ndarray:
        if self.name not in ("magpie", "amd"):
            raise InputError(f"distance kind {self.name!r} has no embedding matrix")
        return np.vstack([e.values for e in embeddings])

    def embeddings_from_matrix(self, matrix: np.ndarray) -> list:
        if self.name == "amd":
            if matrix.shape[1] != self.k:
                raise InputError(f"cache has {matrix.shape[1]} columns, expected k={self.k}")
            return [AmdVector(self.k, row) for row in matrix]
        if self.name == "magpie":
            version = (self.table.version if self.table is not None else "v1")
            return [MagpieVector(row, version) for row in matrix]
        raise InputError(f"distance kind {self.name!r} has no embedding matrix")


@dataclass(frozen=True)
class ScreenPolicy:
    """Stability screening: keep samples with e_hull <= e_hull_max.

    Samples without an ``e_hull`` value are treated as unstable (removed with
    a counted warning) whenever the threshold is finite. ``denominator``
    selects n in the metric denominators: the full set size (the fixed-n
    protocol) or the post-screening count.
    """

    e_hull_max: float = 0.1
    denominator: str = "full_set"

    def __post_init__(self) -> None:
        if not self.e_hull_max >= 0:
            raise ValueError("e_hull_max must be non-negative")
        if self.denominator not in ("full_set", "filtered_set"):
            raise ValueError("denominator must be 'full_set' or 'filtered_set'")


NO_SCREENING = ScreenPolicy(e_hull_max=math.inf)


def _apply_screening(
    samples: SampleSet, policy: ScreenPolicy | None
) -> tuple[list[int], int, ScreenPolicy]:
    policy = NO_SCREENING if policy is None else policy
    crystals = samples.crystals
    if policy.e_hull_max < math.inf:
        if all(c.e_hull is None for c in crystals):
            raise InputError("screening requested but no sample carries e_hull")
        kept = [
            i
            for i, c in enumerate(crystals)
            if c.e_hull is not None and c.e_hull <= policy.e_hull_max
        ]
        missing = sum(1 for c in crystals if c.e_hull is None)
        if missing:
            logger.warning("screening removed %d samples lacking e_hull", missing)
    else:
        kept = list(range(len(crystals)))
    n = len(crystals) if policy.denominator == "full_set" else len(kept)
    return kept, n, policy


# ---------------------------------------------------------------------------
# Uniqueness
# ---------------------------------------------------------------------------

def discrete_uniqueness(
    samples: SampleSet,
    kind: DistanceKind,
    policy: ScreenPolicy | None = None,
    workers: int = 1,
    embeddings: Sequence | None = None,
) -> float:
    """Fraction of kept samples at nonzero distance from every earlier kept sample.

    Iterates in generation order; the denominator n follows the policy.
    """
    if not kind.is_discrete:
        raise InputError(f"discrete uniqueness requires a discrete distance, got {kind.name!r}")
    kept, n, _ = _apply_screening(samples, policy)
    if not kept:
        logger.warning("no samples left after screening; uniqueness is 0")
        return 0.0
    if embeddings is None:
        embeddings = kind.embed_all([samples[i] for i in kept], workers=1)
    else:
        embeddings = [embeddings[i] for i in kept]

    start = time.perf_counter()
    if kind.name in ("comp", "wyckoff"):
        # equality-based pseudometrics: first occurrence of each key is unique
        seen: set = set()
        count = 0
        for key in embeddings:
            if key not in seen:
                count += 1
                seen.add(key)
    else:
        flags = _smat_uniqueness_flags(embeddings, kind, workers)
        count = int(sum(flags))
    logger.info("pairwise stage (%s uniqueness): %.3f s", kind.name, time.perf_counter() - start)
    return count / n


def _smat_row_unique(args) -> bool:
    i, crystals, kind = args
    return all(kind.pair_distance(crystals[i], crystals[j]) != 0 for j in range(i))


def _smat_uniqueness_flags(crystals: Sequence[Crystal], kind: DistanceKind, workers: int):
    tasks = [(i, crystals, kind) for i in range(len(crystals))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_smat_row_unique, tasks, chunksize=4))
    return [_smat_row_unique(t) for t in tasks]


def _pair_distance_values(matrix: np.ndarray, metric: str) -> np.ndarray:
    """All upper-triangle pairwise distances, chunked to bound memory."""
    parts = []
    for start in range(1, len(matrix), _ROW_CHUNK):
        stop = min(start + _ROW_CHUNK, len(matrix))
        block = cdist(matrix[start:stop], matrix[:stop], metric=metric)
        for offset, i in enumerate(range(start, stop)):
            parts.append(block[offset, :i])
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def continuous_uniqueness(
    samples: SampleSet,
    kind: DistanceKind,
    policy: ScreenPolicy | None = None,
    workers: int = 1,
    embeddings: Sequence | None = None,
) -> float:
    """Mean pairwise distance over kept samples, denominator C(n, 2).

    ``embeddings``, when given, must align with ``samples`` (screening picks
    the kept rows); otherwise fingerprints are computed on the fly.
    """
    if not kind.is_continuous:
        raise InputError(
            f"continuous uniqueness requires a continuous distance, got {kind.name!r}"
        )
    kept, n, _ = _apply_screening(samples, policy)
    if n < 2:
        raise InputError("continuous uniqueness needs n >= 2")
    if embeddings is None:
        embeddings = kind.embed_all([samples[i] for i in kept], workers=workers)
    else:
        embeddings = [embeddings[i] for i in kept]

    start = time.perf_counter()
    if len(embeddings) < 2:
        total = 0.0
    else:
        values = _pair_distance_values(kind.matrix(embeddings), _CDIST_METRIC[kind.name])
        total = math.fsum(values)  # exactly rounded: permutation/worker independent
    logger.info("pairwise stage (%s uniqueness): %.3f s", kind.name, time.perf_counter() - start)
    return total / math.comb(n, 2)


# ---------------------------------------------------------------------------
# Novelty
# ---------------------------------------------------------------------------

def discrete_novelty(
    samples: SampleSet,
    train: SampleSet,
    kind: DistanceKind,
    policy: ScreenPolicy | None = None,
    workers: int = 1,
    embeddings: Sequence | None = None,
    train_embeddings: Sequence | None = None,
) -> float:
    """Fraction of kept samples at nonzero distance from every training crystal.

    Screening applies to the samples only; the training set is never filtered.
    """
    if not kind.is_discrete:
        raise InputError(f"discrete novelty requires a discrete distance, got {kind.name!r}")
    if len(train) == 0:
        raise InputError("empty train")
    kept, n, _ = _apply_screening(samples, policy)
    if not kept:
        logger.warning("no samples left after screening; novelty is 0")
        return 0.0
    if embeddings is None:
        embeddings = kind.embed_all([samples[i] for i in kept], workers=1)
    else:
        embeddings = [embeddings[i] for i in kept]
    if train_embeddings is None:
        train_embeddings = kind.embed_all(train.crystals, workers=1)

    start = time.perf_counter()
    if kind.name in ("comp", "wyckoff"):
        train_keys = set(train_embeddings)
        count = sum(1 for key in embeddings if key not in train_keys)
    else:
        count = 0
        if workers > 1:
            tasks = [(e, train_embeddings, kind) for e in embeddings]
            with ProcessPoolExecutor(max_workers=workers) as pool:
                count = sum(pool.map(_smat_row_novel, tasks, chunksize=4))
        else:
            count = sum(_smat_row_novel((e, train_embeddings, kind)) for e in embeddings)
    logger.info("pairwise stage (%s novelty): %.3f s", kind.name, time.perf_counter() - start)
    return count / n


def _smat_row_novel(args) -> bool:
    embedding, train_embeddings, kind = args
    return all(kind.pair_distance(embedding, t) != 0 for t in train_embeddings)


def continuous_novelty(
    samples: SampleSet,
    train: SampleSet,
    kind: DistanceKind,
    policy: ScreenPolicy | None = None,
    workers: int = 1,
    embeddings: Sequence | None = None,
    train_embeddings: Sequence | None = None,
) -> float:
    """Mean over kept samples of the minimum distance to any training crystal."""
    if not kind.is_continuous:
        raise InputError(f"continuous novelty requires a continuous distance, got {kind.name!r}")
    if len(train) == 0:
        raise InputError("empty train")
    kept, n, _ = _apply_screening(samples, policy)
    if n < 1:
        raise InputError("continuous novelty needs n >= 1")
    if not kept:
        logger.warning("no samples left after screening; novelty is 0")
        return 0.0
    if embeddings is None:
        embeddings = kind.embed_all([samples[i] for i in kept], workers=workers)
    else:
        embeddings = [embeddings[i] for i in kept]
    if train_embeddings is None:
        train_embeddings = kind.embed_all(train.crystals, workers=workers)

    start = time.perf_counter()
    gen_matrix = kind.matrix(embeddings)
    train_matrix = kind.matrix(train_embeddings)
    mins = []
    for begin in range(0, len(gen_matrix), _ROW_CHUNK):
        block = cdist(
            gen_matrix[begin : begin + _ROW_CHUNK], train_matrix, metric=_CDIST_METRIC[kind.name]
        )
        mins.append(block.min(axis=1))
    total = math.fsum(np.concatenate(mins))
    logger.info("pairwise stage (%s novelty): %.3f s", kind.name, time.perf_counter() - start)
    return total / n


# ---------------------------------------------------------------------------
# Shuffle audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShuffleAudit:
    """Per-seed discrete uniqueness values of a shuffled sample set."""

    kind: str
    per_seed: dict[int, float]
    mean: float
    std: float


def shuffle_audit(
    samples: SampleSet,
    kind: DistanceKind,
    seeds: Sequence[int],
    policy: ScreenPolicy | None = None,
    workers: int = 1,
) -> ShuffleAudit:
    """Recompute discrete uniqueness under seeded permutations of the samples.

    Permutations come from numpy's PCG64 generator seeded directly, so audits
    are reproducible across machines. Requires at least two seeds.
    """
    if len(seeds) < 2:
        raise InputError("shuffle audit needs at least 2 seeds")
    if not kind.is_discrete:
        raise InputError(f"shuffle audit requires a discrete distance, got {kind.name!r}")
    per_seed: dict[int, float] = {}
    for seed in seeds:
        perm = np.random.default_rng(seed).permutation(len(samples))
        shuffled = SampleSet(
            label=samples.label, crystals=tuple(samples[int(i)] for i in perm)
        )
        per_seed[int(seed)] = discrete_uniqueness(shuffled, kind, policy, workers=workers)
    values = np.array(list(per_seed.values()))
    return ShuffleAudit(
        kind=kind.name,
        per_seed=per_seed,
        mean=float(values.mean()),
        std=float(values.std()),
    )


# ---------------------------------------------------------------------------
# Reports and Pareto comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricReport:
    """Per-model metric values plus provenance."""

    label: str
    distance: str
    screened: bool
    uniqueness: float | None = None
    novelty: float | None = None
    n_total: int = 0
    n_kept: int = 0
    m_train: int | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.distance not in KIND_NAMES:
            raise InputError(f"unknown distance kind {self.distance!r}")
        discrete = self.distance in DISCRETE_KIND_NAMES
        for value in (self.uniqueness, self.novelty):
            if value is None:
                continue
            if value < 0 or (discrete and value > 1):
                raise ValueError(f"metric value {value} out of range for {self.distance}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "label": self.label,
                "distance": self.distance,
                "screened": self.screened,
                "uniqueness": self.uniqueness,
                "novelty": self.novelty,
                "n_total": self.n_total,
                "n_kept": self.n_kept,
                "m_train": self.m_train,
                "params": self.params,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        try:
            data = json.loads(text)
            return cls(**data)
        except (json.JSONDecodeError, TypeError) as exc:
            raise InputError(f"invalid metric report: {exc}") from None


def pareto_front(reports: Sequence[MetricReport]) -> tuple[str, ...]:
    """Labels of Pareto-optimal models among reports of one distance kind.

    A model is dominated when another model is at least as good in both
    uniqueness and novelty and strictly better in one; mutually equal points
    are all Pareto-optimal.
    """
    if len(reports) == 0:
        raise InputError("pareto_front needs at least one report")
    first = reports[0]
    for report in reports:
        if report.distance != first.distance or report.screened != first.screened:
            raise InputError("pareto_front requires reports of one distance kind and screening")
        if report.uniqueness is None or report.novelty is None:
            raise InputError(f"report for {report.label!r} lacks uniqueness or novelty")
    optimal = []
    for k, rk in enumerate(reports):
        dominated = any(
            rl.uniqueness >= rk.uniqueness
            and rl.novelty >= rk.novelty
            and (rl.uniqueness > rk.uniqueness or rl.novelty > rk.novelty)
            for l, rl in enumerate(reports)
            if l != k
        )
        if not dominated:
            optimal.append(rk.label)
    return tuple(optimal)


def reports_to_csv(reports: Sequence[MetricReport]) -> str:
    """Comparison table: rows are metric x distance kind, columns are models."""
    labels = []
    for report in reports:
        if report.label not in labels:
            labels.append(report.label)
    rows: dict[tuple[str, str, bool], dict[str, float]] = {}
    for report in reports:
        for metric, value in (("U", report.uniqueness), ("N", report.novelty)):
            if value is None:
                continue
            key = (metric, report.distance, report.screened)
            rows.setdefault(key, {})[report.label] = value
    lines = ["metric,distance,screened," + ",".join(labels)]
    for (metric, distance, screened), values in rows.items():
        cells = [f"{values[lab]:.6g}" if lab in values else "" for lab in labels]
        lines.append(f"{metric},{distance},{str(screened).lower()}," + ",".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Report builders (shared by the CLI and the acceptance suite)
# ---------------------------------------------------------------------------

def uniqueness_report(
    samples: SampleSet,
    kind: DistanceKind,
    policy: ScreenPolicy | None = None,
    workers: int = 1,
    embeddings: Sequence | None = None,
) -> MetricReport:
    kept, _, policy = _apply_screening(samples, policy)
    if kind.is_discrete:
        value = discrete_uniqueness(samples, kind, policy, workers, embeddings)
    else:
        value = continuous_uniqueness(samples, kind, policy, workers, embeddings)
    return MetricReport(
        label=samples.label,
        distance=kind.name,
        screened=policy.e_hull_max < math.inf,
        uniqueness=value,
        n_total=len(samples),
        n_kept=len(kept),
        params={
            **kind.params(),
            "e_hull_max": policy.e_hull_max,
            "denominator": policy.denominator,
        },
    )


def novelty_report(
    samples: SampleSet,
    train: SampleSet,
    kind: DistanceKind,
    policy: ScreenPolicy | None = None,
    workers: int = 1,
    embeddings: Sequence | None = None,
    train_embeddings: Sequence | None = None,
) -> MetricReport:
    kept, _, policy = _apply_screening(samples, policy)
    if kind.is_discrete:
        value = discrete_novelty(samples, train, kind, policy, workers, embeddings, train_embeddings)
    else:
        value = continuous_novelty(
            samples, train, kind, policy, workers, embeddings, train_embeddings
        )
    return MetricReport(
        label=samples.label,
        distance=kind.name,
        screened=policy.e_hull_max < math.inf,
        novelty=value,
        n_total=len(samples),
        n_kept=len(kept),
        m_train=len(train),
        params={
            **kind.params(),
            "e_hull_max": policy.e_hull_max,
            "denominator": policy.denominator,
        },
    )


def pairwise_matrix(
    a: Sequence[Crystal],
    b: Sequence[Crystal] | None,
    kind: DistanceKind,
    workers: int = 1,
) -> np.ndarray:
    """Raw distance matrix between two crystal sequences (b=None: a vs a)."""
    ea = kind.embed_all(a, workers=workers)
    eb = ea if b is None else kind.embed_all(b, workers=workers)
    if kind.name in ("magpie", "amd"):
        return cdist(kind.matrix(ea), kind.matrix(eb), metric=_CDIST_METRIC[kind.name])
    out = np.zeros((len(ea), len(eb)))
    for i, e_i in enumerate(ea):
        for j, e_j in enumerate(eb):
            if b is None and j < i:
                out[i, j] = out[j, i]  # symmetric; skip recomputation
            elif b is None and j == i:
                out[i, j] = 0.0
            else:
                out[i, j] = kind.pair_distance(e_i, e_j)
    return out
