"""Candidate pair generation: LSH banding, prefix-filtered index, brute force.

Candidate sets are (M, 2) int64 arrays of index pairs with i < j, sorted
lexicographically and deduplicated. Generators only promise a superset of
the truly similar pairs (for banding, a probabilistic one); verification
is someone else's job.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, is_cosine_mode
from .errors import GuardError, UnsupportedMeasure
from .hashing import SignatureStore

DEFAULT_CANDIDATE_BUDGET = 10_000_000
_BRUTEFORCE_GUARD = 10**8


def num_tables(eps_fn: float, t: float, b: int) -> int:
    """Tables needed so a pair at similarity t is missed with prob <= eps_fn.

    l = ceil(log(eps_fn) / log(1 - t^b)). Raises when t^b rounds to 1 and
    the miss probability cannot be driven down at all.
    """
    if not 0.0 < eps_fn < 1.0:
        raise ValueError("eps_fn must be in (0, 1)")
    if not 0.0 < t < 1.0:
        raise ValueError("t must be in (0, 1)")
    if b < 1:
        raise ValueError("band width must be >= 1")
    collide = t**b
    if 1.0 - collide <= 0.0:
        raise ValueError(f"t^b = {collide} is numerically 1; cannot size tables")
    return max(1, math.ceil(math.log(eps_fn) / math.log(1.0 - collide)))


@dataclass(frozen=True)
class BandingParams:
    """Banding layout: l tables of b consecutive hashes each."""

    band_width: int
    tables: int
    eps_fn: float

    @classmethod
    def for_threshold(cls, eps_fn: float, t: float, band_width: int) -> "BandingParams":
        return cls(band_width, num_tables(eps_fn, t, band_width), eps_fn)

    @property
    def hashes_needed(self) -> int:
        return self.band_width * self.tables


def _canonicalize(pairs: np.ndarray) -> np.ndarray:
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.asarray(pairs, dtype=np.int64)
    return np.unique(pairs, axis=0)


def lsh_banding_generate(
    store: SignatureStore,
    params: BandingParams,
    seed: int = 0,
    budget: int = DEFAULT_CANDIDATE_BUDGET,
) -> np.ndarray:
    """All pairs sharing at least one band key; duplicates removed.

    Band j covers hashes [j*b, (j+1)*b). Each band's values are folded into
    a 64-bit key by a seeded mixing hash; mixer collisions only ever add
    false positives.
    """
    b, l = params.band_width, params.tables
    needed = params.hashes_needed
    if store.hashes_available < needed:
        raise ValueError(
            f"banding needs {needed} hashes, store has {store.hashes_available}"
        )
    rng = np.random.default_rng(seed)
    chunks: list[np.ndarray] = []
    emitted = 0
    for j in range(l):
        values = store.band_values(j * b, (j + 1) * b)
        mults = rng.integers(1, 1 << 63, size=b, dtype=np.uint64) | np.uint64(1)
        keys = ((values + np.uint64(1)) * mults).sum(axis=1, dtype=np.uint64)
        order = np.argsort(keys, kind="stable")
        sorted_keys = keys[order]
        boundaries = np.nonzero(np.diff(sorted_keys))[0] + 1
        starts = np.concatenate([[0], boundaries])
        stops = np.concatenate([boundaries, [len(sorted_keys)]])
        for lo, hi in zip(starts, stops):
            size = hi - lo
            if size < 2:
                continue
            emitted += size * (size - 1) // 2
            if emitted > budget:
                raise GuardError(f"candidate generation exceeded budget of {budget} pairs")
            members = np.sort(order[lo:hi])
            ii, jj = np.triu_indices(size, k=1)
            chunks.append(np.column_stack([members[ii], members[jj]]))
    if not chunks:
        return np.zeros((0, 2), dtype=np.int64)
    return _canonicalize(np.concatenate(chunks))


class _Postings:
    """Append-only inverted index with lazily materialized numpy views."""

    __slots__ = ("ids", "weights", "_ids_arr", "_w_arr")

    def __init__(self):
        self.ids: list[int] = []
        self.weights: list[float] = []
        self._ids_arr = None
        self._w_arr = None

    def append(self, vec_id: int, weight: float) -> None:
        self.ids.append(vec_id)
        self.weights.append(weight)
        self._ids_arr = None

    def arrays(self):
        if self._ids_arr is None or len(self._ids_arr) != len(self.ids):
            self._ids_arr = np.asarray(self.ids, dtype=np.int64)
            self._w_arr = np.asarray(self.weights, dtype=np.float64)
        return self._ids_arr, self._w_arr


def allpairs_generate(corpus: Corpus, t: float) -> np.ndarray:
    """Score-accumulation candidate generation with the basic prefix bound.

    Processes features in decreasing document frequency; each vector is
    indexed only past the largest prefix whose maximum possible score stays
    below t, so any pair reaching t shares at least one indexed feature.
    Cosine modes only.
    """
    if not is_cosine_mode(corpus.mode):
        raise UnsupportedMeasure("the prefix-filtered generator supports cosine modes only")
    if not 0.0 < t < 1.0:
        raise ValueError("t must be in (0, 1)")
    n = len(corpus)
    df = np.zeros(corpus.dim, dtype=np.int64)
    maxw = np.zeros(corpus.dim, dtype=np.float64)
    for vec in corpus.vectors:
        df[vec.features] += 1
        np.maximum.at(maxw, vec.features, vec.weights)
    # global feature order: decreasing df, feature id breaking ties
    rank = np.empty(corpus.dim, dtype=np.int64)
    rank[np.lexsort((np.arange(corpus.dim), -df))] = np.arange(corpus.dim)

    index: dict[int, _Postings] = {}
    chunks: list[np.ndarray] = []
    scores = np.zeros(n, dtype=np.float64)
    for x_id, vec in enumerate(corpus.vectors):
        if len(vec) == 0:
            continue
        order = np.argsort(rank[vec.features], kind="stable")
        feats = vec.features[order]
        weights = vec.weights[order]
        touched: list[np.ndarray] = []
        for f, w in zip(feats, weights):
            postings = index.get(int(f))
            if postings is None:
                continue
            ids, ws = postings.arrays()
            scores[ids] += w * ws
            touched.append(ids)
        if touched:
            cand = np.unique(np.concatenate(touched))
            cand = cand[scores[cand] > 0.0]
            if len(cand):
                chunks.append(np.column_stack([cand, np.full(len(cand), x_id)]))
            scores[cand] = 0.0
        # index the suffix: skip the longest prefix with bound sum < t
        bound = np.cumsum(weights * maxw[feats])
        start = int(np.searchsorted(bound, t, side="left"))
        for f, w in zip(feats[start:], weights[start:]):
            index.setdefault(int(f), _Postings()).append(x_id, float(w))
    if not chunks:
        return np.zeros((0, 2), dtype=np.int64)
    return _canonicalize(np.concatenate(chunks))


def bruteforce_generate(n: int) -> np.ndarray:
    """Every pair (i, j) with i < j; guarded against quadratic blowups."""
    total = n * (n - 1) // 2
    if total > _BRUTEFORCE_GUARD:
        raise GuardError(f"{total} pairs exceeds the brute-force guard of {_BRUTEFORCE_GUARD}")
    ii, jj = np.triu_indices(n, k=1)
    return np.column_stack([ii, jj]).astype(np.int64)


_CAND_MAGIC = b"BCND"


def write_candidates(pairs: np.ndarray, path) -> None:
    """Binary candidate stream: magic + u64 count + (u32 i, u32 j) pairs."""
    pairs = np.asarray(pairs, dtype=np.int64)
    if len(pairs) and int(pairs.max()) >= 1 << 32:
        raise ValueError("indices exceed the u32 candidate format")
    with open(path, "wb") as fh:
        fh.write(_CAND_MAGIC + struct.pack("<Q", len(pairs)))
        fh.write(np.ascontiguousarray(pairs, dtype="<u4").tobytes())


def read_candidates(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CAND_MAGIC:
            raise ValueError(f"bad candidate file magic {magic!r}")
        (count,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<u4")
    if data.size != 2 * count:
        raise ValueError(f"candidate file truncated: {data.size // 2} of {count} pairs")
    return data.reshape(count, 2).astype(np.int64)
