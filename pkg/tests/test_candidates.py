"""Candidate generators: banding, prefix-filtered index, brute force."""

import numpy as np
import pytest

from bayeslsh.candidates import (
    BandingParams,
    allpairs_generate,
    bruteforce_generate,
    lsh_banding_generate,
    num_tables,
    read_candidates,
    write_candidates,
)
from bayeslsh.corpus import (
    COSINE_WEIGHTED,
    JACCARD,
    Corpus,
    SparseVector,
    generate_synthetic,
    similarity_matrix,
)
from bayeslsh.errors import GuardError, UnsupportedMeasure
from bayeslsh.hashing import SignatureStore


def _pair_set(pairs: np.ndarray) -> set[tuple[int, int]]:
    return {(int(i), int(j)) for i, j in pairs}


def _assert_canonical(pairs: np.ndarray):
    assert pairs.dtype == np.int64
    assert pairs.ndim == 2 and pairs.shape[1] == 2
    assert np.all(pairs[:, 0] < pairs[:, 1])
    assert len(_pair_set(pairs)) == len(pairs)


class TestNumTables:
    def test_paper_operating_point(self):
        assert num_tables(0.03, 0.9, 10) == 9

    def test_loose_rate_single_table(self):
        assert num_tables(0.999, 0.9, 10) == 1

    def test_band_width_one(self):
        assert num_tables(0.03, 0.5, 1) == 6

    @pytest.mark.parametrize("eps_fn, t, b", [(0.0, 0.5, 4), (0.03, 1.0, 4), (0.03, 0.5, 0)])
    def test_validation(self, eps_fn, t, b):
        with pytest.raises(ValueError):
            num_tables(eps_fn, t, b)

    def test_params_hashes_needed(self):
        params = BandingParams.for_threshold(0.03, 0.9, 10)
        assert params.tables == 9
        assert params.hashes_needed == 90


class TestBanding:
    def _jaccard_pair_store(self, seed, shared=18, extra=1):
        common = list(range(shared))
        x = SparseVector(np.array(common + [100]), np.ones(shared + extra))
        y = SparseVector(np.array(common + [200]), np.ones(shared + extra))
        corpus = Corpus(["x", "y"], [x, y], JACCARD, dim=256)
        return SignatureStore(corpus, seed=seed, max_hashes=128)

    def test_identical_vectors_always_pair(self):
        v = SparseVector(np.arange(20), np.ones(20))
        corpus = Corpus(["a", "b"], [v, v], JACCARD, dim=32)
        store = SignatureStore(corpus, seed=0, max_hashes=128)
        params = BandingParams.for_threshold(0.03, 0.9, 4)
        store.extend(params.hashes_needed)
        assert _pair_set(lsh_banding_generate(store, params)) == {(0, 1)}

    def test_generation_frequency_near_closed_form(self):
        # jaccard 18/20 = 0.9 pair; b=4, l=4 -> hit prob 1-(1-0.9^4)^4 = 0.986
        params = BandingParams.for_threshold(0.03, 0.9, 4)
        assert params.tables == 4
        hits = 0
        for seed in range(100):
            store = self._jaccard_pair_store(seed)
            store.extend(params.hashes_needed)
            hits += (0, 1) in _pair_set(lsh_banding_generate(store, params))
        assert hits >= 95

    def test_dissimilar_corpus_near_empty(self):
        corpus = generate_synthetic(60, 3000, [], seed=9, mode=JACCARD)
        sims = similarity_matrix(corpus)
        iu = np.triu_indices(60, k=1)
        assert float(sims[iu].max()) < 0.1
        params = BandingParams.for_threshold(0.03, 0.9, 4)
        store = SignatureStore(corpus, seed=9, max_hashes=128)
        store.extend(params.hashes_needed)
        pairs = lsh_banding_generate(store, params)
        assert len(pairs) <= 0.01 * len(iu[0])

    def test_insufficient_hashes_names_requirement(self):
        store = self._jaccard_pair_store(0)
        store.extend(64)
        params = BandingParams(band_width=10, tables=9, eps_fn=0.03)
        with pytest.raises(ValueError, match="90"):
            lsh_banding_generate(store, params)

    def test_budget_guard(self):
        corpus = generate_synthetic(40, 200, [(20, 0.95)], seed=1, mode=JACCARD)
        store = SignatureStore(corpus, seed=1, max_hashes=64)
        params = BandingParams.for_threshold(0.5, 0.9, 4)
        store.extend(params.hashes_needed)
        with pytest.raises(GuardError, match="budget"):
            lsh_banding_generate(store, params, budget=3)

    def test_deterministic_under_seed(self):
        corpus = generate_synthetic(50, 500, [(10, 0.8)], seed=4, mode=COSINE_WEIGHTED)
        params = BandingParams.for_threshold(0.03, 0.75, 8)
        outs = []
        for _ in range(2):
            store = SignatureStore(corpus, seed=4, max_hashes=1024)
            store.extend(params.hashes_needed)
            outs.append(lsh_banding_generate(store, params, seed=4))
        np.testing.assert_array_equal(outs[0], outs[1])
        _assert_canonical(outs[0])


class TestAllpairs:
    def test_tiny_threshold_yields_all_overlapping_pairs(self):
        corpus = generate_synthetic(40, 300, [(5, 0.7)], seed=2, mode=COSINE_WEIGHTED)
        got = _pair_set(allpairs_generate(corpus, 1e-9))
        sims = similarity_matrix(corpus)
        overlapping = {
            (i, j)
            for i in range(len(corpus))
            for j in range(i + 1, len(corpus))
            if sims[i, j] > 0.0
        }
        assert got == overlapping

    def test_no_false_negatives_at_threshold(self):
        corpus = generate_synthetic(
            500, 4000, [(40, 0.75), (30, 0.85)], seed=7, mode=COSINE_WEIGHTED
        )
        t = 0.7
        cands = allpairs_generate(corpus, t)
        _assert_canonical(cands)
        sims = similarity_matrix(corpus)
        iu = np.triu_indices(len(corpus), k=1)
        above = sims[iu] >= t
        truth = set(zip(iu[0][above].tolist(), iu[1][above].tolist()))
        assert truth <= _pair_set(cands)
        assert len(cands) <= len(iu[0])

    def test_higher_threshold_prunes_more(self):
        corpus = generate_synthetic(200, 2000, [(20, 0.8)], seed=3, mode=COSINE_WEIGHTED)
        low = allpairs_generate(corpus, 0.3)
        high = allpairs_generate(corpus, 0.9)
        assert len(high) <= len(low)
        assert _pair_set(high) <= _pair_set(low)

    def test_deterministic(self):
        corpus = generate_synthetic(80, 600, [(10, 0.8)], seed=5, mode=COSINE_WEIGHTED)
        np.testing.assert_array_equal(
            allpairs_generate(corpus, 0.6), allpairs_generate(corpus, 0.6)
        )

    def test_rejects_jaccard(self):
        corpus = generate_synthetic(10, 100, [], seed=0, mode=JACCARD)
        with pytest.raises(UnsupportedMeasure):
            allpairs_generate(corpus, 0.5)

    def test_validates_threshold(self):
        corpus = generate_synthetic(10, 100, [], seed=0, mode=COSINE_WEIGHTED)
        with pytest.raises(ValueError):
            allpairs_generate(corpus, 1.0)


class TestBruteforce:
    def test_enumerates_all_pairs(self):
        pairs = bruteforce_generate(5)
        _assert_canonical(pairs)
        assert len(pairs) == 10

    def test_guard_fires_before_allocation(self):
        with pytest.raises(GuardError):
            bruteforce_generate(20_000)


class TestCandidateIO:
    def test_round_trip(self, tmp_path):
        pairs = bruteforce_generate(7)
        path = tmp_path / "cands.bin"
        write_candidates(pairs, path)
        np.testing.assert_array_equal(read_candidates(path), pairs)

    def test_empty_round_trip(self, tmp_path):
        path = tmp_path / "empty.bin"
        write_candidates(np.zeros((0, 2), dtype=np.int64), path)
        assert len(read_candidates(path)) == 0

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            read_candidates(path)

    def test_truncation_detected(self, tmp_path):
        path = tmp_path / "cands.bin"
        write_candidates(bruteforce_generate(7), path)
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(ValueError, match="truncated"):
            read_candidates(path)

    def test_oversized_indices_rejected(self, tmp_path):
        pairs = np.array([[0, 1 << 32]], dtype=np.int64)
        with pytest.raises(ValueError):
            write_candidates(pairs, tmp_path / "big.bin")
