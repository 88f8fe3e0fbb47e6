"""End-to-end similarity search: candidate generation plus verification.

Verification strategies over a candidate list:

* ``bayeslsh``: incremental hash comparison with posterior pruning and an
  early stop once the similarity estimate is concentrated.
* ``bayeslsh-lite``: the same pruning on a fixed hash budget, then exact
  similarity for the survivors.
* ``lsh-approx``: maximum-likelihood estimates from a fixed hash count.
* ``exact``: exact similarity for every candidate.

All verifiers are parallel maps over the candidate list; output is sorted
by index pair and is independent of the worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import candidates as cand_mod
from . import corpus as corpus_mod
from . import inference
from .corpus import Corpus
from .errors import UnsupportedMeasure
from .hashing import DEFAULT_MAX_BITS, DEFAULT_MAX_INTS, SignatureStore

GENERATORS = ("lsh", "allpairs", "bruteforce")
VERIFIERS = ("bayeslsh", "bayeslsh-lite", "lsh-approx", "exact")

_MEASURE_DEFAULTS = {
    "cosine": {"lite_hashes": 128, "max_hashes": DEFAULT_MAX_BITS, "fixed_hashes": 2048, "band_width": 8},
    "jaccard": {"lite_hashes": 64, "max_hashes": DEFAULT_MAX_INTS, "fixed_hashes": 360, "band_width": 4},
}

_PRIOR_SAMPLE_CAP = 10_000


@dataclass
class SearchConfig:
    """Knobs for one search run; None fields resolve to per-measure defaults."""

    measure: str
    threshold: float
    epsilon: float = 0.03
    delta: float = 0.05
    gamma: float = 0.03
    batch_hashes: int = 32
    lite_hashes: int | None = None
    max_hashes: int | None = None
    fixed_hashes: int | None = None
    band_width: int | None = None
    fn_rate: float = 0.03
    generator: str = "lsh"
    verifier: str = "bayeslsh"
    seed: int = 0
    fresh_verification_hashes: bool = False
    parallel: int = 1

    def __post_init__(self):
        if self.measure not in _MEASURE_DEFAULTS:
            raise ValueError(f"unknown measure {self.measure!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        for name in ("epsilon", "delta", "gamma", "fn_rate"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.batch_hashes < 1:
            raise ValueError("batch size must be >= 1")
        defaults = _MEASURE_DEFAULTS[self.measure]
        for name in ("lite_hashes", "max_hashes", "fixed_hashes", "band_width"):
            if getattr(self, name) is None:
                setattr(self, name, defaults[name])
        if self.lite_hashes % self.batch_hashes != 0:
            raise ValueError("lite hash budget must be a multiple of the batch size")
        if self.max_hashes % self.batch_hashes != 0:
            raise ValueError("max hashes must be a multiple of the batch size")
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.verifier not in VERIFIERS:
            raise ValueError(f"unknown verifier {self.verifier!r}")
        if self.parallel < 1:
            raise ValueError("parallel must be >= 1")


@dataclass(frozen=True)
class OutputPair:
    """One emitted pair: indices i < j plus the similarity estimate."""

    i: int
    j: int
    estimate: float
    exact: bool
    low_confidence: bool = False


@dataclass
class PairVerdict:
    pruned: bool
    estimate: float = 0.0
    hashes_used: int = 0
    low_confidence: bool = False
    pruned_at: int = 0


@dataclass
class SearchStats:
    candidates: int = 0
    emitted: int = 0
    survivors: dict[int, int] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    prior: inference.BetaParams | None = None


class BayesVerifier:
    """Shared state for verifying candidate pairs against one store."""

    def __init__(self, store: SignatureStore, posterior, config: SearchConfig,
                 budget: int | None = None):
        self.store = store
        self.posterior = posterior
        self.config = config
        self.budget = config.max_hashes if budget is None else budget
        self.table = inference.build_minmatch_table(
            posterior, config.threshold, config.epsilon, config.batch_hashes, self.budget
        )
        self.cache = inference.ConcentrationCache(posterior, config.delta, config.gamma)

    def verify_pair(self, i: int, j: int, trace: list | None = None) -> PairVerdict:
        """Algorithm: compare one batch at a time, prune or stop early."""
        k = self.config.batch_hashes
        m = 0
        n = 0
        while n < self.budget:
            n += k
            self.store.extend(n)
            m += self.store.count_matches(i, j, n - k, n)
            min_m = self.table.min_matches(n)
            if trace is not None:
                trace.append((m, n, min_m))
            if m < min_m:
                return PairVerdict(pruned=True, hashes_used=n, pruned_at=n)
            concentrated, estimate = self.cache.lookup(m, n)
            if concentrated:
                return PairVerdict(False, estimate, n)
        _, estimate = self.cache.lookup(m, self.budget)
        return PairVerdict(False, estimate, self.budget, low_confidence=True)


def fit_candidate_prior(
    corpus: Corpus, pairs: np.ndarray, seed: int
) -> inference.BetaParams:
    """Beta prior fitted on exact similarities of sampled candidate pairs."""
    if len(pairs) == 0:
        return inference.UNIFORM_PRIOR
    rng = np.random.default_rng(seed)
    size = min(_PRIOR_SAMPLE_CAP, len(pairs))
    chosen = rng.choice(len(pairs), size=size, replace=False)
    sims = [
        corpus_mod.exact_similarity(corpus, int(i), int(j)) for i, j in pairs[chosen]
    ]
    return inference.fit_beta_mom(sims)


def _parallel_map(func, items, workers: int):
    if workers <= 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (workers * 8))))


def _survivor_counts(prune_ns: list[int], total: int, k: int, budget: int) -> dict[int, int]:
    """Candidates still alive after each batch boundary (stopped pairs stay)."""
    pruned_hist = np.zeros(budget // k + 1, dtype=np.int64)
    for n in prune_ns:
        pruned_hist[n // k] += 1
    cumulative = np.cumsum(pruned_hist)
    return {batch * k: int(total - cumulative[batch]) for batch in range(1, budget // k + 1)}


def bayeslsh_run(
    corpus: Corpus,
    pairs: np.ndarray,
    config: SearchConfig,
    store: SignatureStore | None = None,
    prior: inference.BetaParams | None = None,
    collect_stats: bool = False,
):
    """Verify candidates with posterior pruning and early-stopped estimates."""
    if store is None:
        store = SignatureStore(corpus, config.seed, config.max_hashes)
    if config.measure == "jaccard" and prior is None:
        prior = fit_candidate_prior(corpus, pairs, config.seed)
    posterior = inference.posterior_for_measure(config.measure, prior)
    verifier = BayesVerifier(store, posterior, config)
    if len(pairs):
        store.extend(min(config.batch_hashes, config.max_hashes))

    def work(pair) -> PairVerdict:
        return verifier.verify_pair(int(pair[0]), int(pair[1]))

    verdicts = _parallel_map(work, list(pairs), config.parallel)
    out = [
        OutputPair(int(p[0]), int(p[1]), v.estimate, False, v.low_confidence)
        for p, v in zip(pairs, verdicts)
        if not v.pruned
    ]
    out.sort(key=lambda o: (o.i, o.j))
    if not collect_stats:
        return out
    stats = SearchStats(candidates=len(pairs), emitted=len(out), prior=prior)
    prune_ns = [v.pruned_at for v in verdicts if v.pruned]
    stats.survivors = _survivor_counts(
        prune_ns, len(pairs), config.batch_hashes, config.max_hashes
    )
    return out, stats


def bayeslsh_lite_run(
    corpus: Corpus,
    pairs: np.ndarray,
    config: SearchConfig,
    store: SignatureStore | None = None,
    prior: inference.BetaParams | None = None,
    collect_stats: bool = False,
):
    """Prune on a fixed hash budget, then verify survivors exactly.

    A zero budget skips hashing entirely and verifies every candidate.
    Emitted pairs carry their exact similarity and must clear the threshold
    strictly.
    """
    if config.measure == "jaccard" and prior is None and config.lite_hashes > 0:
        prior = fit_candidate_prior(corpus, pairs, config.seed)
    survivors: list[tuple[int, int]]
    prune_ns: list[int] = []
    if config.lite_hashes == 0:
        survivors = [(int(p[0]), int(p[1])) for p in pairs]
    else:
        if store is None:
            store = SignatureStore(corpus, config.seed, config.max_hashes)
        posterior = inference.posterior_for_measure(config.measure, prior)
        verifier = BayesVerifier(store, posterior, config, budget=config.lite_hashes)

        def work(pair) -> PairVerdict:
            return verifier.verify_pair(int(pair[0]), int(pair[1]))

        verdicts = _parallel_map(work, list(pairs), config.parallel)
        survivors = [
            (int(p[0]), int(p[1])) for p, v in zip(pairs, verdicts) if not v.pruned
        ]
        prune_ns = [v.pruned_at for v in verdicts if v.pruned]
    out = []
    for i, j in survivors:
        sim = corpus_mod.exact_similarity(corpus, i, j)
        if sim > config.threshold:
            out.append(OutputPair(i, j, sim, True))
    out.sort(key=lambda o: (o.i, o.j))
    if not collect_stats:
        return out
    stats = SearchStats(candidates=len(pairs), emitted=len(out), prior=prior)
    if config.lite_hashes:
        stats.survivors = _survivor_counts(
            prune_ns, len(pairs), config.batch_hashes, config.lite_hashes
        )
    return out, stats


def lsh_approx_run(
    corpus: Corpus,
    pairs: np.ndarray,
    config: SearchConfig,
    store: SignatureStore | None = None,
    collect_stats: bool = False,
):
    """Fixed-hash-count maximum-likelihood estimates, no pruning."""
    if store is None:
        store = SignatureStore(corpus, config.seed, config.max_hashes)
    n = config.fixed_hashes
    store.extend(n)
    out = []
    chunk = 1 << 16
    for lo in range(0, len(pairs), chunk):
        block = np.asarray(pairs[lo : lo + chunk])
        if len(block) == 0:
            continue
        counts = store.count_matches_bulk(block, 0, n)
        for (i, j), m in zip(block, counts):
            if config.measure == "cosine":
                est = inference.cosine_map(int(m), n)
            else:
                est = inference.ml_estimate(int(m), n)
            if est >= config.threshold:
                out.append(OutputPair(int(i), int(j), est, False))
    out.sort(key=lambda o: (o.i, o.j))
    if not collect_stats:
        return out
    return out, SearchStats(candidates=len(pairs), emitted=len(out))


def exact_run(
    corpus: Corpus,
    pairs: np.ndarray,
    config: SearchConfig,
    collect_stats: bool = False,
):
    """Exact similarity for every candidate; emit strictly above threshold."""
    out = []
    for i, j in pairs:
        sim = corpus_mod.exact_similarity(corpus, int(i), int(j))
        if sim > config.threshold:
            out.append(OutputPair(int(i), int(j), sim, True))
    out.sort(key=lambda o: (o.i, o.j))
    if not collect_stats:
        return out
    return out, SearchStats(candidates=len(pairs), emitted=len(out))


def generate_candidates(
    corpus: Corpus, config: SearchConfig, store: SignatureStore | None = None
) -> np.ndarray:
    """Dispatch to the configured candidate generator."""
    if config.generator == "bruteforce":
        return cand_mod.bruteforce_generate(len(corpus))
    if config.generator == "allpairs":
        return cand_mod.allpairs_generate(corpus, config.threshold)
    # banding sizes tables from the per-hash collision probability at the
    # threshold, which for cosine hashes is c2r(t) rather than t itself
    collide_at_t = (
        inference.c2r(config.threshold) if config.measure == "cosine" else config.threshold
    )
    params = cand_mod.BandingParams.for_threshold(
        config.fn_rate, collide_at_t, config.band_width
    )
    if store is None:
        store = SignatureStore(corpus, config.seed, config.max_hashes)
    store.extend(params.hashes_needed)
    return cand_mod.lsh_banding_generate(store, params, seed=config.seed)


@dataclass
class SearchResult:
    pairs: list[OutputPair]
    stats: SearchStats
    config: SearchConfig


def run_search(corpus: Corpus, config: SearchConfig) -> SearchResult:
    """Full pipeline: signatures, candidate generation, verification."""
    expected = corpus_mod.measure_for_mode(corpus.mode)
    if config.measure != expected:
        raise UnsupportedMeasure(
            f"corpus mode {corpus.mode!r} requires measure {expected!r}, got {config.measure!r}"
        )
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    store = SignatureStore(corpus, config.seed, config.max_hashes)
    timings["signatures"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    pairs = generate_candidates(corpus, config, store)
    timings["generation"] = time.perf_counter() - t0

    if config.fresh_verification_hashes:
        verify_seed = int(
            np.random.SeedSequence(config.seed, spawn_key=(0x5EED,)).generate_state(1)[0]
        )
        verify_store = SignatureStore(corpus, verify_seed, config.max_hashes)
    else:
        verify_store = store

    t0 = time.perf_counter()
    if config.verifier == "bayeslsh":
        out, stats = bayeslsh_run(corpus, pairs, config, verify_store, collect_stats=True)
    elif config.verifier == "bayeslsh-lite":
        out, stats = bayeslsh_lite_run(corpus, pairs, config, verify_store, collect_stats=True)
    elif config.verifier == "lsh-approx":
        out, stats = lsh_approx_run(corpus, pairs, config, verify_store, collect_stats=True)
    else:
        out, stats = exact_run(corpus, pairs, config, collect_stats=True)
    timings["verification"] = time.perf_counter() - t0
    stats.timings = timings
    return SearchResult(out, stats, config)


def results_to_tsv(corpus: Corpus, result: SearchResult) -> str:
    """Render emitted pairs as TSV with '#' parameter header lines."""
    cfg = result.config
    lines = [
        "# similarity search results",
        f"# measure\t{cfg.measure}",
        f"# threshold\t{cfg.threshold:g}",
        f"# epsilon\t{cfg.epsilon:g}\tdelta\t{cfg.delta:g}\tgamma\t{cfg.gamma:g}",
        f"# generator\t{cfg.generator}\tverifier\t{cfg.verifier}",
        f"# seed\t{cfg.seed}",
        "# id_i\tid_j\testimate\texact\tlow_confidence",
    ]
    for pair in result.pairs:
        lines.append(
            f"{corpus.ids[pair.i]}\t{corpus.ids[pair.j]}\t{pair.estimate:.10g}"
            f"\t{int(pair.exact)}\t{int(pair.low_confidence)}"
        )
    return "\n".join(lines) + "\n"
