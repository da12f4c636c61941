import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sslanon.errors import DataError
from sslanon.evaluation import (
    IdentityAnonymizer,
    MetricParams,
    Scenario,
    TrialScore,
    compute_eer,
    compute_min_dcf,
    corpus_error_rate,
    edit_distance,
    error_curve,
    error_rate,
    run_scenario,
    score_trials,
)
from sslanon.pool import AnonymizationParams, PseudoSpeakerAnonymizer, SpeakerEmbedding
from sslanon.toy import make_toy_corpus


def trials_from(targets, nontargets):
    out = [TrialScore("e", f"t{i}", s, True) for i, s in enumerate(targets)]
    out += [TrialScore("e", f"n{i}", s, False) for i, s in enumerate(nontargets)]
    return out


def oracle_metrics(scores, params=MetricParams()):
    """Exhaustive threshold enumeration with exact rational comparisons."""
    tgt = [s.score for s in scores if s.is_target]
    non = [s.score for s in scores if not s.is_target]
    thresholds = sorted({s.score for s in scores}) + [float("inf")]
    best_gap, eer = None, None
    dcfs = []
    norm = min(params.c_miss * params.p_target, params.c_fa * (1 - params.p_target))
    for t in thresholds:
        miss = sum(1 for v in tgt if v < t)
        fa = sum(1 for v in non if v >= t)
        gap = abs(Fraction(miss, len(tgt)) - Fraction(fa, len(non)))
        if best_gap is None or gap < best_gap:
            best_gap = gap
            eer = float((Fraction(miss, len(tgt)) + Fraction(fa, len(non))) / 2 * 100)
        cost = params.c_miss * params.p_target * (miss / len(tgt)) + params.c_fa * (1 - params.p_target) * (fa / len(non))
        dcfs.append(cost / norm)
    return eer, min(dcfs)


def random_trial_set(rng):
    n = int(rng.integers(2, 101))
    n_tgt = int(rng.integers(1, n))
    # Coarse grid so ties between and within classes are common.
    raw = rng.integers(0, 20, size=n) / 20.0 if rng.random() < 0.5 else rng.standard_normal(n)
    tgt = raw[:n_tgt] + (rng.random() < 0.7) * 0.5
    return trials_from(tgt, raw[n_tgt:])


class TestScoring:
    def test_identical(self):
        s = score_trials({"e": [0.6, 0.8]}, {"t": [0.6, 0.8]}, [("e", "t", True)])
        assert s[0].score == pytest.approx(1.0)

    def test_orthogonal(self):
        assert score_trials({"e": [1.0, 0.0]}, {"t": [0.0, 1.0]}, [("e", "t", False)])[0].score == 0.0

    def test_enrollment_average(self):
        s = score_trials({"e": [[1.0, 0.0], [0.0, 1.0]]}, {"t": [1.0, 0.0]}, [("e", "t", True)])
        assert s[0].score == pytest.approx(1 / np.sqrt(2))
        assert s[0].score == pytest.approx(0.7071, abs=1e-4)

    def test_unknown_id(self):
        with pytest.raises(DataError):
            score_trials({"e": [1.0]}, {"t": [1.0]}, [("e", "missing", True)])

    def test_non_finite_score(self):
        with pytest.raises(ValueError):
            TrialScore("e", "t", float("nan"), True)


class TestEer:
    def test_separated(self):
        assert compute_eer(trials_from([0.9, 0.8], [0.1, 0.2]))[0] == 0.0

    def test_inverted(self):
        assert compute_eer(trials_from([0.1, 0.2], [0.9, 0.8]))[0] == 100.0

    def test_worked_example(self):
        eer, thr = compute_eer(trials_from([0.9, 0.7, 0.6], [0.65, 0.3, 0.2]))
        assert eer == pytest.approx(100 / 3, abs=1e-12)
        assert round(eer, 2) == 33.33
        assert thr == 0.65

    def test_single_class(self):
        with pytest.raises(DataError):
            compute_eer(trials_from([0.5], []))

    def test_curve_monotone(self, rng):
        curve = error_curve(trials_from(rng.standard_normal(40), rng.standard_normal(60)))
        assert np.all(np.diff(curve.p_miss) >= 0)
        assert np.all(np.diff(curve.p_fa) <= 0)
        assert curve.p_miss[-1] == 1 and curve.p_fa[-1] == 0

    @pytest.mark.parametrize("seed", range(200))
    def test_oracle_equivalence(self, seed):
        scores = random_trial_set(np.random.default_rng(seed))
        eer, mdcf = oracle_metrics(scores)
        assert compute_eer(scores)[0] == eer
        assert compute_min_dcf(scores) == mdcf

    @given(st.integers(0, 10_000), st.sampled_from(["exp", "cube", "affine", "tanh"]))
    @settings(max_examples=60, deadline=None)
    def test_order_invariance(self, seed, fn):
        f = {"exp": np.exp, "cube": lambda v: v**3, "affine": lambda v: 3 * v + 7, "tanh": np.tanh}[fn]
        rng = np.random.default_rng(seed)
        scores = random_trial_set(rng)
        mapped = [TrialScore(s.enroll_id, s.test_id, float(f(s.score)), s.is_target) for s in scores]
        # Only strictly increasing maps that keep distinct values distinct count.
        if len({s.score for s in scores}) != len({s.score for s in mapped}):
            return
        assert compute_eer(mapped)[0] == compute_eer(scores)[0]
        assert compute_min_dcf(mapped) == compute_min_dcf(scores)


class TestMinDcf:
    def test_separated(self):
        assert compute_min_dcf(trials_from([0.9], [0.1, 0.2])) == 0.0

    def test_all_identical(self):
        assert compute_min_dcf(trials_from([0.5, 0.5], [0.5, 0.5, 0.5])) == 1.0

    def test_params(self):
        p = MetricParams()
        assert (p.c_fa, p.c_miss, p.p_target) == (1.0, 1.0, 0.01)
        with pytest.raises(ValueError):
            MetricParams(p_target=1.0)
        with pytest.raises(ValueError):
            MetricParams(c_fa=0)

    def test_custom_params_match_oracle(self, rng):
        params = MetricParams(c_fa=2.0, c_miss=1.0, p_target=0.2)
        scores = trials_from(rng.standard_normal(30) + 0.5, rng.standard_normal(50))
        assert compute_min_dcf(scores, params) == oracle_metrics(scores, params)[1]


class TestErrorRate:
    def test_identical(self):
        assert error_rate("a b c", "a b c") == 0.0

    def test_worked_example(self):
        assert error_rate("a b c", "a x c d") == pytest.approx(200 / 3)

    def test_empty_hyp(self):
        assert error_rate("a b c d", "") == 100.0

    def test_empty_ref(self):
        with pytest.raises(ValueError):
            error_rate("", "a")

    def test_char_unit(self):
        assert error_rate("ab c", "abd", unit="char") == pytest.approx(100 / 3)

    def test_corpus(self):
        refs = {"u1": "a b", "u2": "c d e f"}
        hyps = {"u1": "a", "u2": "c d e f"}
        assert corpus_error_rate(refs, hyps) == pytest.approx(100 / 6)
        with pytest.raises(DataError):
            corpus_error_rate(refs, {"u1": "a"})

    def test_matches_recursive_definition(self, rng):
        def rec(a, b):
            if not a:
                return len(b)
            if not b:
                return len(a)
            return min(rec(a[1:], b) + 1, rec(a, b[1:]) + 1, rec(a[1:], b[1:]) + (a[0] != b[0]))

        for _ in range(50):
            a = list(rng.integers(0, 3, size=rng.integers(0, 6)))
            b = list(rng.integers(0, 3, size=rng.integers(0, 6)))
            assert edit_distance(a, b) == rec(a, b)

    @given(*[st.lists(st.integers(0, 3), max_size=8)] * 3)
    @settings(max_examples=200, deadline=None)
    def test_metric_properties(self, a, b, c):
        assert edit_distance(a, b) == edit_distance(b, a)
        assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)
        assert (edit_distance(a, b) == 0) == (a == b)


class OrthogonalAnonymizer:
    """Maps every embedding onto a fixed axis unused by the fixture enrollments."""

    def __init__(self, dim):
        self.dim = dim

    def __call__(self, emb, utt_id, speaker=None, salt=""):
        v = np.zeros(self.dim)
        v[-1] = 1.0
        return SpeakerEmbedding(v, f"orth:{utt_id}", emb.gender)


@pytest.fixture(scope="module")
def corpus():
    return make_toy_corpus(n_speakers=10, dim=16, pool_size=60, seed=1)


class TestScenarios:
    def test_oo_exact_reuse(self):
        vecs = {f"s{i}": np.eye(4)[i] for i in range(4)}
        enroll = [SpeakerEmbedding(v, k, "f") for k, v in vecs.items()]
        test = [SpeakerEmbedding(v, f"{k}-u", "f") for k, v in vecs.items()]
        trials = [(e, f"{t}-u", e == t) for e in vecs for t in vecs]
        report, _ = run_scenario("OO", enroll, test, trials)
        assert report.eer == 0.0
        assert report.min_dcf == 0.0

    def test_oa_orthogonal(self):
        enroll = [SpeakerEmbedding(np.eye(5)[i], f"s{i}", "m") for i in range(4)]
        test = [SpeakerEmbedding(np.eye(5)[i], f"s{i}-u", "m") for i in range(4)]
        trials = [(f"s{i}", f"s{j}-u", i == j) for i in range(4) for j in range(4)]
        report, scores = run_scenario("OA", enroll, test, trials, OrthogonalAnonymizer(5))
        assert all(s.score == 0.0 for s in scores)
        assert report.eer >= 40.0

    def test_or_identity_equals_oo(self, corpus):
        oo, s_oo = run_scenario("OO", corpus.enroll, corpus.test, corpus.trials)
        orr, s_or = run_scenario("OR", corpus.enroll, corpus.test, corpus.trials, IdentityAnonymizer())
        assert [s.score for s in s_oo] == [s.score for s in s_or]
        d_oo, d_or = oo.to_dict(), orr.to_dict()
        d_oo.pop("scenario"), d_or.pop("scenario")
        assert d_oo == d_or

    def test_toy_privacy(self, corpus):
        anon = PseudoSpeakerAnonymizer(corpus.pool, AnonymizationParams(n_far=10, n_avg=5, seed=0))
        oo, _ = run_scenario("OO", corpus.enroll, corpus.test, corpus.trials)
        oa, _ = run_scenario("OA", corpus.enroll, corpus.test, corpus.trials, anon, utt2spk=corpus.utt2spk)
        assert oo.eer <= 5.0
        assert oa.eer >= 40.0

    @pytest.mark.parametrize("policy", ["independent", "shared"])
    def test_aa_policies(self, corpus, policy):
        anon = PseudoSpeakerAnonymizer(corpus.pool, AnonymizationParams(n_far=10, n_avg=5, seed=0), mode="per-speaker")
        a, _ = run_scenario("AA", corpus.enroll, corpus.test, corpus.trials, anon, utt2spk=corpus.utt2spk, enroll_policy=policy)
        b, _ = run_scenario("AA", corpus.enroll, corpus.test, corpus.trials, anon, utt2spk=corpus.utt2spk, enroll_policy=policy)
        assert a == b
        assert 0.0 <= a.eer <= 100.0

    def test_shared_per_speaker_links_sides(self, corpus):
        # Reusing the test-side pseudo speakers for enrollment restores linkability.
        anon = PseudoSpeakerAnonymizer(corpus.pool, AnonymizationParams(n_far=10, n_avg=5, seed=0), mode="per-speaker")
        shared, _ = run_scenario("AA", corpus.enroll, corpus.test, corpus.trials, anon, utt2spk=corpus.utt2spk, enroll_policy="shared")
        oa, _ = run_scenario("OA", corpus.enroll, corpus.test, corpus.trials, anon, utt2spk=corpus.utt2spk)
        assert shared.eer < 20.0 < oa.eer

    def test_missing_anonymizer(self, corpus):
        with pytest.raises(ValueError):
            run_scenario(Scenario.OA, corpus.enroll, corpus.test, corpus.trials)

    def test_utility_metric(self, corpus):
        refs = {"u1": "hello world"}
        report, _ = run_scenario("OO", corpus.enroll, corpus.test, corpus.trials, refs=refs, hyps={"u1": "hello word"})
        assert report.error_rate == 50.0 and report.error_unit == "word"

    def test_report_serialisation(self, corpus):
        report, _ = run_scenario("OO", corpus.enroll, corpus.test, corpus.trials)
        data = json.loads(report.to_json())
        assert data["scenario"] == "OO" and data["n_trials"] == len(corpus.trials)
        text = dict(line.split("=", 1) for line in report.to_text().splitlines())
        assert float(text["eer"]) == report.eer
        assert int(text["n_target"]) + int(text["n_nontarget"]) == int(text["n_trials"])
