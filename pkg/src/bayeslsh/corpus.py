"""Sparse vector collections and exact similarity measures.

A corpus is an ordered collection of sparse non-negative vectors under one
of three measure modes:

* ``cosine-weighted``: real-valued weights, L2-normalized at load time.
* ``cosine-binary``: unit input weights, L2-normalized at load time.
* ``jaccard``: sets; every stored weight is exactly 1.

The text format is one vector per line, ``id<TAB>feature:weight ...`` in
weighted mode and ``id<TAB>feature feature ...`` in the binary modes.
"""

from __future__ import annotations

import gzip
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import GuardError, ParseError

COSINE_WEIGHTED = "cosine-weighted"
COSINE_BINARY = "cosine-binary"
JACCARD = "jaccard"
MODES = (COSINE_WEIGHTED, COSINE_BINARY, JACCARD)

# Vectors whose norm is already this close to 1 are not renormalized, so a
# load -> serialize -> load round trip reproduces weights bit for bit.
_NORM_SKIP_TOL = 1e-12
_NORM_CHECK_TOL = 1e-6

# generate_synthetic refuses corpora whose brute-force truth would be huge.
_PAIR_GUARD = 10**8


def is_cosine_mode(mode: str) -> bool:
    return mode in (COSINE_WEIGHTED, COSINE_BINARY)


def measure_for_mode(mode: str) -> str:
    """Hash-family measure ('cosine' or 'jaccard') backing a corpus mode."""
    return "cosine" if is_cosine_mode(mode) else "jaccard"


@dataclass
class SparseVector:
    """Sorted sparse vector: strictly ascending features, positive weights."""

    features: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.features.ndim != 1 or self.weights.ndim != 1:
            raise ValueError("features and weights must be 1-d arrays")
        if len(self.features) != len(self.weights):
            raise ValueError("features and weights differ in length")
        if len(self.features) > 0:
            if self.features[0] < 0:
                raise ValueError("features must be non-negative")
            if np.any(np.diff(self.features) <= 0):
                raise ValueError("features must be strictly ascending")
            if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
                raise ValueError("weights must be positive and finite")

    def __len__(self) -> int:
        return len(self.features)

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.weights, self.weights)))


def _normalized(weights: np.ndarray) -> np.ndarray:
    nrm = math.sqrt(float(np.dot(weights, weights)))
    if nrm == 0.0 or abs(nrm - 1.0) <= _NORM_SKIP_TOL:
        return weights
    return weights / nrm


@dataclass
class Corpus:
    """Ordered vectors with unique string ids under one measure mode."""

    ids: list[str]
    vectors: list[SparseVector]
    mode: str
    dim: int | None = None
    _csr: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if len(self.ids) != len(self.vectors):
            raise ValueError("ids and vectors differ in length")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("vector ids must be unique")
        max_feature = -1
        for v in self.vectors:
            if len(v) > 0:
                max_feature = max(max_feature, int(v.features[-1]))
        if self.dim is None:
            self.dim = max_feature + 1
        elif self.dim <= max_feature:
            raise ValueError(f"dim {self.dim} too small for feature {max_feature}")
        if self.mode == JACCARD:
            for vid, v in zip(self.ids, self.vectors):
                if len(v) > 0 and not np.all(v.weights == 1.0):
                    raise ValueError(f"vector {vid!r}: jaccard mode requires unit weights")

    def __len__(self) -> int:
        return len(self.vectors)

    def __getitem__(self, i: int) -> SparseVector:
        return self.vectors[i]

    def to_csr(self):
        """Corpus as a scipy CSR matrix of shape (len, dim); cached."""
        if self._csr is None:
            from scipy.sparse import csr_matrix

            indptr = np.zeros(len(self) + 1, dtype=np.int64)
            for i, v in enumerate(self.vectors):
                indptr[i + 1] = indptr[i] + len(v)
            if len(self.vectors) > 0:
                indices = np.concatenate([v.features for v in self.vectors])
                data = np.concatenate([v.weights for v in self.vectors])
            else:
                indices = np.zeros(0, dtype=np.int64)
                data = np.zeros(0, dtype=np.float64)
            self._csr = csr_matrix((data, indices, indptr), shape=(len(self), self.dim))
        return self._csr


def _open_text(path, mode: str):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _parse_entries(body: str, weighted: bool, lineno: int):
    features: list[int] = []
    weights: list[float] = []
    for token in body.split():
        if weighted:
            feat_s, sep, weight_s = token.partition(":")
            if not sep:
                raise ParseError(f"token {token!r} lacks ':' separator", lineno)
        else:
            if ":" in token:
                raise ParseError(f"unexpected weight in binary-mode token {token!r}", lineno)
            feat_s, weight_s = token, "1"
        try:
            feat = int(feat_s)
        except ValueError:
            raise ParseError(f"bad feature {feat_s!r}", lineno) from None
        if feat < 0:
            raise ParseError(f"negative feature {feat}", lineno)
        try:
            weight = float(weight_s)
        except ValueError:
            raise ParseError(f"bad weight {weight_s!r}", lineno) from None
        if not math.isfinite(weight) or weight <= 0:
            raise ParseError(f"non-positive weight {weight_s!r}", lineno)
        features.append(feat)
        weights.append(weight)
    farr = np.asarray(features, dtype=np.int64)
    warr = np.asarray(weights, dtype=np.float64)
    order = np.argsort(farr, kind="stable")
    farr, warr = farr[order], warr[order]
    if len(farr) > 1 and np.any(np.diff(farr) == 0):
        dup = int(farr[np.nonzero(np.diff(farr) == 0)[0][0]])
        raise ParseError(f"duplicate feature {dup}", lineno)
    return farr, warr


def load_corpus(path, mode: str) -> Corpus:
    """Read a corpus file (gzip transparent). Cosine modes are L2-normalized."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    weighted = mode == COSINE_WEIGHTED
    ids: list[str] = []
    seen: set[str] = set()
    vectors: list[SparseVector] = []
    with _open_text(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            vid, _, body = line.partition("\t")
            if not vid:
                raise ParseError("empty vector id", lineno)
            if vid in seen:
                raise ParseError(f"duplicate vector id {vid!r}", lineno)
            seen.add(vid)
            features, weights = _parse_entries(body, weighted, lineno)
            if is_cosine_mode(mode):
                weights = _normalized(weights)
            ids.append(vid)
            vectors.append(SparseVector(features, weights))
    return Corpus(ids, vectors, mode)


def serialize_corpus(corpus: Corpus, path) -> None:
    """Write a corpus in the text format load_corpus reads."""
    weighted = corpus.mode == COSINE_WEIGHTED
    with _open_text(path, "w") as fh:
        for vid, vec in zip(corpus.ids, corpus.vectors):
            if weighted:
                body = " ".join(
                    f"{int(f)}:{w:.17g}" for f, w in zip(vec.features, vec.weights)
                )
            else:
                body = " ".join(str(int(f)) for f in vec.features)
            fh.write(f"{vid}\t{body}\n")


def tfidf_weight(corpus: Corpus) -> Corpus:
    """Reweight raw term counts by tf * ln(N/df) and renormalize.

    Features present in every vector get weight zero and are dropped.
    Only defined for cosine-weighted corpora, where weights carry counts.
    """
    if corpus.mode != COSINE_WEIGHTED:
        raise ValueError("tf-idf reweighting requires cosine-weighted mode")
    n = len(corpus)
    df = np.zeros(corpus.dim, dtype=np.int64)
    for vec in corpus.vectors:
        df[vec.features] += 1
    idf = np.zeros(corpus.dim, dtype=np.float64)
    present = df > 0
    idf[present] = np.log(n / df[present])
    emptied = 0
    vectors = []
    for vec in corpus.vectors:
        w = vec.weights * idf[vec.features]
        keep = w > 0
        if not np.all(keep):
            feats, w = vec.features[keep], w[keep]
        else:
            feats = vec.features
        if len(feats) == 0 and len(vec) > 0:
            emptied += 1
        vectors.append(SparseVector(feats, _normalized(w)))
    if emptied:
        warnings.warn(f"tf-idf emptied {emptied} vector(s) (all features have df=N)")
    return Corpus(list(corpus.ids), vectors, corpus.mode, dim=corpus.dim)


def _merge_dot(x: SparseVector, y: SparseVector) -> float:
    if len(x) == 0 or len(y) == 0:
        return 0.0
    if len(x) > len(y):
        x, y = y, x
    pos = np.searchsorted(y.features, x.features)
    pos_c = np.minimum(pos, len(y.features) - 1)
    hit = y.features[pos_c] == x.features
    return float(np.dot(x.weights[hit], y.weights[pos_c[hit]]))


def _intersection_size(x: SparseVector, y: SparseVector) -> int:
    if len(x) == 0 or len(y) == 0:
        return 0
    if len(x) > len(y):
        x, y = y, x
    pos = np.searchsorted(y.features, x.features)
    pos_c = np.minimum(pos, len(y.features) - 1)
    return int(np.count_nonzero(y.features[pos_c] == x.features))


def cosine_exact(x: SparseVector, y: SparseVector) -> float:
    """Dot product of L2-normalized vectors, clamped to [0, 1]."""
    for v in (x, y):
        if len(v) > 0 and abs(v.norm() - 1.0) > _NORM_CHECK_TOL:
            raise ValueError(f"vector norm {v.norm():.9f} deviates from 1")
    return min(1.0, max(0.0, _merge_dot(x, y)))


def jaccard_exact(x: SparseVector, y: SparseVector) -> float:
    """|intersection| / |union| of the feature sets; 0 for two empty sets."""
    for v in (x, y):
        if len(v) > 0 and not np.all(v.weights == 1.0):
            raise ValueError("jaccard similarity requires unit weights")
    inter = _intersection_size(x, y)
    union = len(x) + len(y) - inter
    if union == 0:
        return 0.0
    return inter / union


def exact_similarity(corpus: Corpus, i: int, j: int) -> float:
    if is_cosine_mode(corpus.mode):
        return cosine_exact(corpus[i], corpus[j])
    return jaccard_exact(corpus[i], corpus[j])


def similarity_matrix(corpus: Corpus) -> np.ndarray:
    """Dense all-pairs exact similarity matrix (brute-force oracle path)."""
    n = len(corpus)
    if n * (n - 1) // 2 > _PAIR_GUARD:
        raise GuardError(f"all-pairs matrix would exceed {_PAIR_GUARD} pairs")
    x = corpus.to_csr()
    if is_cosine_mode(corpus.mode):
        sims = np.asarray((x @ x.T).todense(), dtype=np.float64)
        np.clip(sims, 0.0, 1.0, out=sims)
    else:
        inter = np.asarray((x @ x.T).todense(), dtype=np.float64)
        sizes = np.asarray(x.sum(axis=1), dtype=np.float64).ravel()
        union = sizes[:, None] + sizes[None, :] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = np.where(union > 0, inter / np.maximum(union, 1e-300), 0.0)
    np.fill_diagonal(sims, 1.0)
    return sims


def _sample_support(rng: np.random.Generator, dim: int, size: int) -> np.ndarray:
    return np.sort(rng.choice(dim, size=size, replace=False))


def _positive_weights(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.gamma(2.0, 1.0, size=size) + 0.05


def _planted_cosine_pair(rng, dim, target, weighted):
    """Two vectors with exact cosine equal to target (disjoint tail support)."""
    size = int(rng.integers(max(4, min(48, dim // 16)), max(6, min(96, dim // 8)) + 1))
    if 2 * size > dim:
        raise ValueError("dim too small for disjoint pair supports")
    support = _sample_support(rng, dim, 2 * size)
    mix = rng.permutation(2 * size)
    fx = np.sort(support[mix[:size]])
    fe = np.sort(support[mix[size:]])
    wx = _positive_weights(rng, size) if weighted else np.ones(size)
    we = _positive_weights(rng, size) if weighted else np.ones(size)
    wx = wx / np.linalg.norm(wx)
    we = we / np.linalg.norm(we)
    x = SparseVector(fx, wx)
    yf = np.concatenate([fx, fe])
    yw = np.concatenate([target * wx, math.sqrt(1.0 - target * target) * we])
    order = np.argsort(yf)
    y = SparseVector(yf[order], yw[order])
    return x, y


def _planted_binary_cosine_pair(rng, dim, target):
    """Two equal-size binary vectors sharing round(target*L) features."""
    size = int(min(120, max(10, dim // 4)))
    size = int(rng.integers(max(8, size - 20), size + 21))
    shared = min(max(int(round(target * size)), 1), size - 1)
    for _ in range(4):
        if abs(shared / size - target) <= 0.02:
            break
        shared += 1 if shared / size < target else -1
        shared = min(max(shared, 1), size - 1)
    else:
        raise ValueError("could not hit cosine target on this support size")
    total = 2 * size - shared
    if total > dim:
        raise ValueError("dim too small for disjoint pair supports")
    support = rng.choice(dim, size=total, replace=False)
    fx = np.sort(np.concatenate([support[:shared], support[shared:size]]))
    fy = np.sort(np.concatenate([support[:shared], support[size:]]))
    unit = 1.0 / math.sqrt(size)
    return (
        SparseVector(fx, np.full(len(fx), unit)),
        SparseVector(fy, np.full(len(fy), unit)),
    )


def _planted_jaccard_pair(rng, dim, target):
    size = int(min(160, max(8, dim // 4)))
    size = int(rng.integers(max(6, size - 20), size + 21))
    shared = int(round(2 * size * target / (1.0 + target)))
    shared = min(max(shared, 1), size - 1)
    # nudge the overlap until the achieved similarity is close enough
    for _ in range(4):
        achieved = shared / (2 * size - shared)
        if abs(achieved - target) <= 0.02:
            break
        shared += 1 if achieved < target else -1
        shared = min(max(shared, 1), size - 1)
    else:
        raise ValueError("could not hit jaccard target on this support size")
    total = 2 * size - shared
    if total > dim:
        raise ValueError("dim too small for disjoint pair supports")
    support = rng.choice(dim, size=total, replace=False)
    common = support[:shared]
    only_x = support[shared:size]
    only_y = support[size:]
    fx = np.sort(np.concatenate([common, only_x]))
    fy = np.sort(np.concatenate([common, only_y]))
    return (
        SparseVector(fx, np.ones(len(fx))),
        SparseVector(fy, np.ones(len(fy))),
    )


def generate_synthetic(
    n: int,
    dim: int,
    planted: list[tuple[int, float]] | None = None,
    seed: int = 0,
    mode: str = COSINE_WEIGHTED,
) -> Corpus:
    """Deterministic synthetic corpus with planted similar pairs.

    ``planted`` lists (pair-count, target-similarity) groups. Each planted
    pair's exact similarity lands within 0.02 of its target; planted pairs
    occupy the first consecutive index pairs (2k, 2k+1). The remaining
    vectors are drawn with low mutual similarity. Same seed, same corpus.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    planted = list(planted or [])
    rng = np.random.default_rng(seed)
    n_planted = 2 * sum(count for count, _ in planted)
    if n_planted > n:
        raise ValueError(f"planted pairs need {n_planted} vectors, corpus has {n}")
    if n * (n - 1) // 2 > _PAIR_GUARD:
        raise GuardError(f"corpus would exceed {_PAIR_GUARD} brute-force pairs")

    vectors: list[SparseVector] = []
    for group, (count, target) in enumerate(planted):
        if not 0.0 < target < 1.0:
            raise ValueError(f"planted group {group} (target {target}): not in (0, 1)")
        for _ in range(count):
            # jitter spreads cosine targets; jaccard is already quantized by
            # the integer overlap, and jitter would eat its 0.02 tolerance
            jitter = 0.0 if mode == JACCARD else float(rng.uniform(-0.01, 0.01))
            goal = min(max(target + jitter, 0.02), 0.98)
            try:
                if mode == COSINE_WEIGHTED:
                    x, y = _planted_cosine_pair(rng, dim, goal, weighted=True)
                    achieved = cosine_exact(x, y)
                elif mode == COSINE_BINARY:
                    x, y = _planted_binary_cosine_pair(rng, dim, goal)
                    achieved = cosine_exact(x, y)
                else:
                    x, y = _planted_jaccard_pair(rng, dim, goal)
                    achieved = jaccard_exact(x, y)
            except ValueError as exc:
                raise ValueError(f"planted group {group} (target {target}): {exc}") from exc
            if abs(achieved - target) > 0.02:
                raise ValueError(
                    f"planted group {group} (target {target}): achieved {achieved:.4f}"
                )
            vectors.append(x)
            vectors.append(y)

    lo = max(4, min(50, dim // 8))
    hi = max(lo + 2, min(100, dim // 6))
    while len(vectors) < n:
        size = int(rng.integers(lo, hi + 1))
        feats = _sample_support(rng, dim, size)
        if mode == JACCARD:
            weights = np.ones(size)
        else:
            weights = _positive_weights(rng, size) if mode == COSINE_WEIGHTED else np.ones(size)
            weights = weights / np.linalg.norm(weights)
        vectors.append(SparseVector(feats, weights))

    width = max(4, len(str(n - 1)))
    ids = [f"v{i:0{width}d}" for i in range(n)]
    return Corpus(ids, vectors, mode, dim=dim)
