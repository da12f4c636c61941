import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from sslanon.pool import (
    AnonymizationParams,
    EmbeddingPool,
    Gender,
    PseudoSpeakerAnonymizer,
    SpeakerEmbedding,
    anonymize_all,
    cosine_distance,
    derive_seed,
    generate_pseudo_embedding,
    sampled_candidates,
    select_far_candidates,
)
from sslanon.toy import synthetic_pool


def random_pool(rng, n, dim=6, p_female=0.5):
    return EmbeddingPool(
        SpeakerEmbedding(rng.standard_normal(dim), f"p{i}", Gender.FEMALE if rng.random() < p_female else Gender.MALE)
        for i in range(n)
    )


def brute_far(pool, src, n_far):
    rows = []
    for i, e in enumerate(pool.entries):
        if e.gender == src.gender:
            d = 1 - np.dot(e.vector, src.vector) / (np.linalg.norm(e.vector) * np.linalg.norm(src.vector))
            rows.append((-d, i))
    return [i for _, i in sorted(rows)[:n_far]]


def in_convex_hull(points, x):
    n = len(points)
    a_eq = np.vstack((points.T, np.ones(n)))
    b_eq = np.append(x, 1.0)
    res = linprog(np.zeros(n), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs")
    return res.status == 0


class TestCosineDistance:
    def test_same(self):
        assert cosine_distance([3.0, 4.0], [3.0, 4.0]) == pytest.approx(0.0, abs=1e-15)

    def test_orthogonal(self):
        assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == 1.0

    def test_antipodal(self):
        assert cosine_distance([1.0, 0.0], [-1.0, 0.0]) == 2.0

    def test_errors(self):
        with pytest.raises(ValueError):
            cosine_distance([0.0, 0.0], [1.0, 0.0])
        with pytest.raises(ValueError):
            cosine_distance([1.0, 0.0], [1.0, 0.0, 0.0])


class TestFarCandidates:
    def test_three_candidates(self):
        # Distances from src=(1,0) chosen to be 0.2, 1.4, 0.9.
        src = SpeakerEmbedding([1.0, 0.0], "src", "f")
        vecs = [[np.cos(a), np.sin(a)] for a in np.arccos([0.8, -0.4, 0.1])]
        pool = EmbeddingPool(SpeakerEmbedding(v, f"c{i}", "f") for i, v in enumerate(vecs))
        got = select_far_candidates(pool, src, AnonymizationParams(n_far=2, n_avg=1))
        np.testing.assert_array_equal(got, [1, 2])

    def test_no_same_gender(self):
        pool = EmbeddingPool([SpeakerEmbedding([1.0, 0.0], "m", "m")])
        with pytest.raises(ValueError):
            select_far_candidates(pool, SpeakerEmbedding([1.0, 1.0], "s", "f"), AnonymizationParams(1, 1))

    def test_all_same_gender_sorted(self, rng):
        pool = random_pool(rng, 30)
        src = SpeakerEmbedding(rng.standard_normal(6), "s", "f")
        n = len(pool.indices_of_gender("f"))
        got = select_far_candidates(pool, src, AnonymizationParams(n_far=n, n_avg=1))
        assert sorted(got) == list(pool.indices_of_gender("f"))
        d = [cosine_distance(pool[i].vector, src.vector) for i in got]
        assert all(a >= b for a, b in zip(d, d[1:]))

    def test_ties_by_index(self):
        pool = EmbeddingPool(SpeakerEmbedding([0.0, 1.0], f"c{i}", "m") for i in range(5))
        got = select_far_candidates(pool, SpeakerEmbedding([1.0, 0.0], "s", "m"), AnonymizationParams(3, 1))
        np.testing.assert_array_equal(got, [0, 1, 2])

    @pytest.mark.parametrize("seed", range(30))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        pool = random_pool(rng, int(rng.integers(5, 51)))
        src = pool[int(rng.integers(len(pool)))]
        n_same = len(pool.indices_of_gender(src.gender))
        n_far = int(rng.integers(1, n_same + 1))
        got = select_far_candidates(pool, src, AnonymizationParams(n_far, 1))
        assert list(got) == brute_far(pool, src, n_far)


class TestPseudoEmbedding:
    def test_single_candidate(self):
        pool = EmbeddingPool([SpeakerEmbedding([3.0, 4.0], "c", "f"), SpeakerEmbedding([1.0, 0.0], "m", "m")])
        out = generate_pseudo_embedding(pool, SpeakerEmbedding([1.0, 0.0], "s", "f"), AnonymizationParams(1, 1))
        np.testing.assert_allclose(out.vector, [0.6, 0.8])

    def test_two_candidates_mean(self):
        pool = EmbeddingPool([SpeakerEmbedding([1.0, 0.0], "a", "m"), SpeakerEmbedding([0.0, 1.0], "b", "m")])
        out = generate_pseudo_embedding(pool, SpeakerEmbedding([-1.0, -1.0], "s", "m"), AnonymizationParams(2, 2))
        np.testing.assert_allclose(out.vector, [2**-0.5, 2**-0.5])

    def test_identity_fields(self):
        pool = synthetic_pool(100, 8, seed=0)
        src = SpeakerEmbedding(np.ones(8), "spk1", "m")
        out = generate_pseudo_embedding(pool, src, AnonymizationParams(20, 5, seed=9))
        assert out.speaker_id == "pseudo:spk1:9"
        assert out.gender == Gender.MALE
        assert np.linalg.norm(out.vector) == pytest.approx(1.0, abs=1e-12)

    def test_determinism(self):
        pool = synthetic_pool(200, 16, seed=1)
        src = SpeakerEmbedding(np.arange(1.0, 17.0), "s", "f")
        a = generate_pseudo_embedding(pool, src, AnonymizationParams(40, 10, seed=3))
        b = generate_pseudo_embedding(pool, src, AnonymizationParams(40, 10, seed=3))
        c = generate_pseudo_embedding(pool, src, AnonymizationParams(40, 10, seed=4))
        np.testing.assert_array_equal(a.vector, b.vector)
        assert not np.array_equal(a.vector, c.vector)

    @pytest.mark.parametrize("seed", range(10))
    def test_mean_in_convex_hull(self, seed):
        rng = np.random.default_rng(seed)
        pool = random_pool(rng, 30, dim=4)
        src = pool[0]
        n_same = len(pool.indices_of_gender(src.gender))
        params = AnonymizationParams(n_far=min(8, n_same), n_avg=min(4, n_same), seed=seed)
        picked = sampled_candidates(pool, src, params)
        far = set(select_far_candidates(pool, src, params))
        assert set(picked) <= far
        assert len(set(picked)) == params.n_avg
        mean = pool.matrix[picked].mean(axis=0)
        assert in_convex_hull(pool.matrix[picked], mean)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            AnonymizationParams(n_far=5, n_avg=6)
        with pytest.raises(ValueError):
            AnonymizationParams(n_far=5, n_avg=0)


class TestAnonymizer:
    def setup_method(self):
        self.pool = synthetic_pool(300, 16, seed=2)
        rng = np.random.default_rng(5)
        self.sources = [SpeakerEmbedding(rng.standard_normal(16), f"u{i}", "fm"[i % 2]) for i in range(12)]

    def test_per_speaker_reuses_pseudo(self):
        anon = PseudoSpeakerAnonymizer(self.pool, AnonymizationParams(50, 10, seed=1), mode="per-speaker")
        a = anon(self.sources[0], "utt-a", speaker="spk")
        b = anon(self.sources[0], "utt-b", speaker="spk")
        np.testing.assert_array_equal(a.vector, b.vector)

    def test_per_utterance_differs(self):
        anon = PseudoSpeakerAnonymizer(self.pool, AnonymizationParams(50, 10, seed=1))
        a = anon(self.sources[0], "utt-a", speaker="spk")
        b = anon(self.sources[0], "utt-b", speaker="spk")
        assert not np.array_equal(a.vector, b.vector)

    def test_parallel_matches_serial(self):
        anon = PseudoSpeakerAnonymizer(self.pool, AnonymizationParams(50, 10, seed=1))
        serial = anonymize_all(anon, self.sources)
        threaded = anonymize_all(anon, self.sources, workers=4)
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a.vector, b.vector)
            assert a.gender == b.gender

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            PseudoSpeakerAnonymizer(self.pool, AnonymizationParams(), mode="global")

    @given(st.integers(0, 2**32 - 1), st.text(max_size=20))
    @settings(max_examples=50, deadline=None)
    def test_derive_seed_stable(self, base, key):
        s = derive_seed(base, "salt", key)
        assert s == derive_seed(base, "salt", key)
        assert 0 <= s < 2**32


class TestTypes:
    def test_gender_parse(self):
        assert Gender.parse("female") is Gender.FEMALE
        assert Gender.parse("M") is Gender.MALE
        assert Gender.parse(1) is Gender.MALE
        with pytest.raises(ValueError):
            Gender.parse("x")

    def test_embedding_validation(self):
        with pytest.raises(ValueError):
            SpeakerEmbedding([0.0, 0.0], "z", "f")
        with pytest.raises(ValueError):
            SpeakerEmbedding([np.nan, 1.0], "n", "f")

    def test_pool_dims(self):
        with pytest.raises(ValueError):
            EmbeddingPool([SpeakerEmbedding([1.0], "a", "f"), SpeakerEmbedding([1.0, 2.0], "b", "f")])
