"""Collective data model: block layout, masks, sampling and synthetic data.

A collective matrix stacks V source matrices side by side; all sources share
the row set (users) and source ``v`` contributes ``d_v`` columns.  Entries
are revealed independently with per-entry probabilities, and the revealed
triplets form an :class:`ObservationSet`.  This module also generates the
synthetic low-rank instances used by the benchmark harness and the
cold-start transform that zeroes part of one source's observed values.

Types are immutable after construction; generation takes explicit seeds so
trials can run concurrently.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .families import ExpFamilyModel, sample as family_sample

FACTOR_LAWS = ("gaussian", "poisson", "bernoulli")


@dataclass(frozen=True)
class BlockLayout:
    """Shape of a collective matrix: common rows plus per-source column blocks."""

    d_u: int
    d_vs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "d_vs", tuple(int(d) for d in self.d_vs))
        if self.d_u < 1 or self.V < 1 or any(d < 1 for d in self.d_vs):
            raise ValueError("layout dimensions must be positive")
        offsets = np.concatenate([[0], np.cumsum(self.d_vs)])
        object.__setattr__(self, "_offsets", offsets)

    @property
    def V(self) -> int:
        return len(self.d_vs)

    @property
    def D(self) -> int:
        return int(self._offsets[-1])

    @property
    def col_offsets(self) -> tuple[int, ...]:
        return tuple(int(o) for o in self._offsets[:-1])

    def global_col(self, v: int, j: int) -> int:
        """Map a (source, local column) pair to its global column."""
        if not 0 <= v < self.V or not 0 <= j < self.d_vs[v]:
            raise ValueError(f"(v={v}, j={j}) outside layout")
        return int(self._offsets[v] + j)

    def split_col(self, col: int) -> tuple[int, int]:
        """Inverse of :meth:`global_col`."""
        if not 0 <= col < self.D:
            raise ValueError(f"column {col} outside layout")
        v = int(np.searchsorted(self._offsets, col, side="right") - 1)
        return v, int(col - self._offsets[v])

    def block_cols(self, v: int) -> slice:
        return slice(int(self._offsets[v]), int(self._offsets[v + 1]))


@dataclass
class CollectiveMatrix:
    """Dense d_u x D parameter (or data) matrix with block structure.

    Block views alias the same storage; ``block(v)`` returns a writable
    view into ``values``.
    """

    layout: BlockLayout
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.layout.d_u, self.layout.D)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != layout {expected}")

    @classmethod
    def zeros(cls, layout: BlockLayout) -> "CollectiveMatrix":
        return cls(layout, np.zeros((layout.d_u, layout.D)))

    @classmethod
    def from_blocks(cls, blocks: list[np.ndarray]) -> "CollectiveMatrix":
        blocks = [np.asarray(b, dtype=float) for b in blocks]
        layout = BlockLayout(blocks[0].shape[0], tuple(b.shape[1] for b in blocks))
        return cls(layout, np.hstack(blocks))

    def block(self, v: int) -> np.ndarray:
        return self.values[:, self.layout.block_cols(v)]

    def copy(self) -> "CollectiveMatrix":
        return CollectiveMatrix(self.layout, self.values.copy(), dict(self.meta))

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def frob_norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class SamplingScheme:
    """Entry-revelation probabilities: uniform p or an explicit per-entry table."""

    kind: str
    p: float | None = None
    table: np.ndarray | None = None

    @classmethod
    def uniform(cls, p: float) -> "SamplingScheme":
        if not 0 < p <= 1:
            raise ValueError("uniform sampling probability must be in (0, 1]")
        return cls("uniform", p=float(p))

    @classmethod
    def per_entry(cls, table: np.ndarray) -> "SamplingScheme":
        table = np.asarray(table, dtype=float)
        if table.size == 0 or table.min() <= 0 or table.max() > 1:
            raise ValueError("per-entry probabilities must lie in (0, 1]")
        return cls("per_entry", table=table)

    def prob_matrix(self, layout: BlockLayout) -> np.ndarray:
        if self.kind == "uniform":
            return np.full((layout.d_u, layout.D), self.p)
        if self.table.shape != (layout.d_u, layout.D):
            raise ValueError("probability table does not match layout")
        return self.table


@dataclass(frozen=True)
class ObservationSet:
    """Sparse masked observations {(v, i, j, y)} over a block layout.

    Triplets are stored in canonical (v, i, j) order, each entry observed at
    most once.  ``families`` optionally tags each source with its
    distribution model; likelihood operations require the tags.
    """

    layout: BlockLayout
    v: np.ndarray
    i: np.ndarray
    j: np.ndarray
    y: np.ndarray
    families: tuple[ExpFamilyModel, ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.int64).ravel()
        i = np.asarray(self.i, dtype=np.int64).ravel()
        j = np.asarray(self.j, dtype=np.int64).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if not v.shape == i.shape == j.shape == y.shape:
            raise ValueError("observation arrays must have equal length")
        order = np.lexsort((j, i, v))
        v, i, j, y = v[order], i[order], j[order], y[order]
        if v.size:
            if v.min() < 0 or v.max() >= self.layout.V:
                raise ValueError("source index out of range")
            if i.min() < 0 or i.max() >= self.layout.d_u:
                raise ValueError("row index out of range")
            d_vs = np.asarray(self.layout.d_vs)
            if j.min() < 0 or np.any(j >= d_vs[v]):
                raise ValueError("column index out of range")
            same = (np.diff(v) == 0) & (np.diff(i) == 0) & (np.diff(j) == 0)
            if np.any(same):
                raise ValueError("duplicate (v, i, j) observation")
        for name, arr in (("v", v), ("i", i), ("j", j), ("y", y)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.families is not None:
            fams = tuple(self.families)
            if len(fams) != self.layout.V:
                raise ValueError("need one family tag per source")
            object.__setattr__(self, "families", fams)

    @property
    def n(self) -> int:
        return int(self.v.size)

    @property
    def cols(self) -> np.ndarray:
        """Global column index of every observation."""
        offsets = np.asarray(self.layout.col_offsets)
        return offsets[self.v] + self.j

    def source_slice(self, v: int) -> slice:
        lo = int(np.searchsorted(self.v, v, side="left"))
        hi = int(np.searchsorted(self.v, v, side="right"))
        return slice(lo, hi)

    def source_counts(self) -> np.ndarray:
        return np.bincount(self.v, minlength=self.layout.V)

    def dense_y(self) -> np.ndarray:
        out = np.zeros((self.layout.d_u, self.layout.D))
        out[self.i, self.cols] = self.y
        return out

    def dense_mask(self) -> np.ndarray:
        out = np.zeros((self.layout.d_u, self.layout.D), dtype=bool)
        out[self.i, self.cols] = True
        return out

    def subset(self, idx: np.ndarray) -> "ObservationSet":
        idx = np.asarray(idx)
        return ObservationSet(
            self.layout, self.v[idx], self.i[idx], self.j[idx], self.y[idx],
            self.families,
        )

    def with_y(self, y: np.ndarray) -> "ObservationSet":
        return ObservationSet(self.layout, self.v, self.i, self.j, y, self.families)

    def restrict_source(self, v: int) -> "ObservationSet":
        """Single-source observation set over the (d_u, d_v) sub-layout."""
        sl = self.source_slice(v)
        sub_layout = BlockLayout(self.layout.d_u, (self.layout.d_vs[v],))
        fams = (self.families[v],) if self.families is not None else None
        return ObservationSet(
            sub_layout,
            np.zeros(sl.stop - sl.start, dtype=np.int64),
            self.i[sl], self.j[sl], self.y[sl], fams,
        )


def mask_sample(full: CollectiveMatrix, scheme: SamplingScheme, seed,
                families: tuple[ExpFamilyModel, ...] | None = None) -> ObservationSet:
    """Reveal each entry of ``full`` independently with its scheme probability."""
    rng = np.random.default_rng(seed)
    probs = scheme.prob_matrix(full.layout)
    mask = rng.random(probs.shape) < probs
    ii, cc = np.nonzero(mask)
    offsets = np.asarray(full.layout.col_offsets + (full.layout.D,))
    vv = np.searchsorted(offsets, cc, side="right") - 1
    jj = cc - offsets[vv]
    return ObservationSet(full.layout, vv, ii, jj, full.values[ii, cc], families)


def empirical_marginals(obs: ObservationSet) -> tuple[np.ndarray, list[np.ndarray]]:
    """Observed-entry counts per (source, row) and per (source, column)."""
    row = np.zeros((obs.layout.V, obs.layout.d_u))
    np.add.at(row, (obs.v, obs.i), 1.0)
    cols = [np.zeros(dv) for dv in obs.layout.d_vs]
    for v in range(obs.layout.V):
        sl = obs.source_slice(v)
        np.add.at(cols[v], obs.j[sl], 1.0)
    return row, cols


def estimate_mu(obs: ObservationSet) -> float:
    """Plug-in bound on the sampling marginals.

    Rows accumulate across sources (a user appears in every source), columns
    are per source; the estimate is the larger of the two maxima.
    """
    row, cols = empirical_marginals(obs)
    row_max = float(row.sum(axis=0).max())
    col_max = max(float(c.max()) for c in cols)
    return max(row_max, col_max)


def weighted_frobenius_sq(a: CollectiveMatrix, scheme: SamplingScheme) -> float:
    """Squared Frobenius norm weighted by the sampling probabilities."""
    if scheme.kind == "uniform":
        return scheme.p * float(np.sum(a.values**2))
    return float(np.sum(scheme.prob_matrix(a.layout) * a.values**2))


@dataclass(frozen=True)
class SyntheticConfig:
    """Low-rank ground-truth generator settings.

    Each block is a product of factor matrices drawn from ``factor_laws``
    (normal with mean 0.5 and unit variance, Poisson(0.5) or
    Bernoulli(0.5)), then rescaled so its sup-norm equals ``gamma``.  With
    ``shared_factors`` every block reuses one common row factor, so the
    collective rank stays at ``ranks[0]`` instead of ``sum(ranks)``.
    """

    d_u: int
    d_vs: tuple[int, ...]
    ranks: tuple[int, ...]
    factor_laws: tuple[str, ...]
    gamma: float = 1.0
    seed: int = 0
    shared_factors: bool = False

    def __post_init__(self):
        object.__setattr__(self, "d_vs", tuple(int(d) for d in self.d_vs))
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        object.__setattr__(self, "factor_laws", tuple(self.factor_laws))
        if not len(self.d_vs) == len(self.ranks) == len(self.factor_laws):
            raise ValueError("d_vs, ranks and factor_laws must have equal length")
        for law in self.factor_laws:
            if law not in FACTOR_LAWS:
                raise ValueError(f"unknown factor law {law!r}")
        for dv, r in zip(self.d_vs, self.ranks):
            if not 1 <= r <= min(self.d_u, dv):
                raise ValueError("ranks must satisfy 1 <= r <= min(d_u, d_v)")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.shared_factors and len(set(self.ranks)) != 1:
            raise ValueError("shared_factors requires equal ranks")


def _draw_factor(law: str, shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    if law == "gaussian":
        return rng.normal(0.5, 1.0, shape)
    if law == "poisson":
        return rng.poisson(0.5, shape).astype(float)
    return rng.binomial(1, 0.5, shape).astype(float)


def generate_synthetic(cfg: SyntheticConfig) -> CollectiveMatrix:
    """Build the ground-truth collective matrix for one trial.

    Deterministic for a fixed seed.  An all-zero factor product (possible
    for Bernoulli/Poisson factors on tiny blocks) is redrawn from the next
    substream; redraw counts land in ``meta['resampled']``.
    """
    layout = BlockLayout(cfg.d_u, cfg.d_vs)
    shared_l = None
    if cfg.shared_factors:
        attempt = 0
        while True:
            rng = np.random.default_rng((cfg.seed, 999, attempt))
            shared_l = _draw_factor(cfg.factor_laws[0], (cfg.d_u, cfg.ranks[0]), rng)
            if np.abs(shared_l).max() > 0:
                break
            attempt += 1
    blocks = []
    resampled: dict[int, int] = {}
    for v, (dv, r, law) in enumerate(zip(cfg.d_vs, cfg.ranks, cfg.factor_laws)):
        attempt = 0
        while True:
            rng = np.random.default_rng((cfg.seed, v, attempt))
            left = shared_l if shared_l is not None else _draw_factor(law, (cfg.d_u, r), rng)
            right = _draw_factor(law, (dv, r), rng)
            m = left @ right.T
            peak = float(np.abs(m).max())
            if peak > 0:
                break
            attempt += 1
        if attempt:
            resampled[v] = attempt
        blocks.append(m * (cfg.gamma / peak))
    out = CollectiveMatrix(layout, np.hstack(blocks))
    out.meta.update({"seed": cfg.seed, "resampled": resampled})
    return out


def observe_from_model(params: CollectiveMatrix,
                       families: tuple[ExpFamilyModel, ...],
                       scheme: SamplingScheme, seed) -> ObservationSet:
    """Mask entries, then draw each revealed value from its source's family.

    The parameter matrix supplies the natural parameters; a parameter
    outside a family's domain raises :class:`~heteromc.families.DomainError`.
    """
    layout = params.layout
    families = tuple(families)
    if len(families) != layout.V:
        raise ValueError("need one family per source")
    streams = np.random.SeedSequence(seed).spawn(layout.V + 1)
    base = mask_sample(params, scheme, streams[0], families)
    y = np.array(base.y)
    cols = base.cols
    for v, model in enumerate(families):
        sl = base.source_slice(v)
        if sl.start == sl.stop:
            continue
        eta = params.values[base.i[sl], cols[sl]]
        y[sl] = family_sample(model, eta, np.random.default_rng(streams[v + 1]))
    return base.with_y(y)


def cold_start_transform(obs: ObservationSet, target_v: int) -> ObservationSet:
    """Zero the values of the first fifth of one source's observations.

    The observation list is in row-major (i, j) order within each source;
    the first ``ceil(n_v / 5)`` values of source ``target_v`` become zero
    while the mask stays unchanged.  A source with no observations is left
    alone with a warning.
    """
    if not 0 <= target_v < obs.layout.V:
        raise ValueError(f"source {target_v} outside layout")
    sl = obs.source_slice(target_v)
    n_v = sl.stop - sl.start
    if n_v == 0:
        warnings.warn(f"source {target_v} has no observations; cold-start is a no-op")
        return obs
    k = math.ceil(n_v / 5)
    y = np.array(obs.y)
    y[sl.start:sl.start + k] = 0.0
    return obs.with_y(y)
