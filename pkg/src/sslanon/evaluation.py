"""Privacy and utility evaluation.

Threshold conventions: a trial is accepted when ``score >= t``. Both EER and
minDCF sweep every distinct score plus ``+inf`` (reject everything). The EER
is the mean of the miss and false-alarm rates at the threshold where they
are closest (lowest such threshold on ties); no ROC interpolation is done.
minDCF is normalised by ``min(c_miss * p_target, c_fa * (1 - p_target))``.
"""
from __future__ import annotations

import enum
import json
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DataError, InvariantError
from .pool import SpeakerEmbedding


class Scenario(enum.Enum):
    OO = "OO"
    OA = "OA"
    AA = "AA"
    OR = "OR"


@dataclass(frozen=True)
class TrialScore:
    enroll_id: str
    test_id: str
    score: float
    is_target: bool

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"{self.enroll_id}/{self.test_id}: non-finite score")

    @property
    def label(self) -> str:
        return "target" if self.is_target else "nontarget"


@dataclass(frozen=True)
class MetricParams:
    c_fa: float = 1.0
    c_miss: float = 1.0
    p_target: float = 0.01

    def __post_init__(self):
        if self.c_fa <= 0 or self.c_miss <= 0:
            raise ValueError("costs must be positive")
        if not 0 < self.p_target < 1:
            raise ValueError("p_target must lie in (0, 1)")


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0:
        raise DataError("cannot score a zero embedding")
    return v / n


def enrollment_model(vectors) -> np.ndarray:
    """Mean of the (possibly several) enrollment vectors, renormalised."""
    vs = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    return _unit(vs.mean(axis=0))


def score_trials(enroll: Mapping, test: Mapping, trials) -> list[TrialScore]:
    """Cosine similarity for each ``(enroll_id, test_id, is_target)`` trial.

    ``enroll`` maps model ids to one vector or a sequence of vectors
    (averaged, then normalised); ``test`` maps utterance ids to vectors.
    """
    models, probes = {}, {}
    out = []
    for enroll_id, test_id, is_target in trials:
        if enroll_id not in enroll:
            raise DataError(f"trial references unknown enrollment id {enroll_id!r}")
        if test_id not in test:
            raise DataError(f"trial references unknown test id {test_id!r}")
        if enroll_id not in models:
            models[enroll_id] = enrollment_model(enroll[enroll_id])
        if test_id not in probes:
            probes[test_id] = _unit(test[test_id])
        score = float(np.clip(models[enroll_id] @ probes[test_id], -1.0, 1.0))
        out.append(TrialScore(enroll_id, test_id, score, bool(is_target)))
    return out


@dataclass(frozen=True)
class ErrorCurve:
    """Miss and false-alarm counts at every swept threshold (ascending)."""

    thresholds: np.ndarray
    misses: np.ndarray
    false_alarms: np.ndarray
    n_target: int
    n_nontarget: int

    @property
    def p_miss(self) -> np.ndarray:
        return self.misses / self.n_target

    @property
    def p_fa(self) -> np.ndarray:
        return self.false_alarms / self.n_nontarget


def _split(scores):
    s = np.array([t.score for t in scores], dtype=np.float64)
    lab = np.array([t.is_target for t in scores], dtype=bool)
    return s[lab], s[~lab]


def error_curve(scores: Sequence[TrialScore]) -> ErrorCurve:
    tgt, non = _split(scores)
    if len(tgt) == 0 or len(non) == 0:
        raise DataError("need at least one target and one nontarget trial")
    tgt.sort()
    non.sort()
    thresholds = np.append(np.unique(np.concatenate((tgt, non))), np.inf)
    misses = np.searchsorted(tgt, thresholds, side="left")
    fas = len(non) - np.searchsorted(non, thresholds, side="left")
    if np.any(np.diff(misses) < 0) or np.any(np.diff(fas) > 0):
        raise InvariantError("error rates are not monotone across the threshold sweep")
    return ErrorCurve(thresholds, misses, fas, len(tgt), len(non))


def compute_eer(scores: Sequence[TrialScore]) -> tuple[float, float]:
    """``(eer_percent, threshold)``."""
    curve = error_curve(scores)
    # Integer cross-multiplication keeps the tie test exact.
    gap = np.abs(curve.misses * curve.n_nontarget - curve.false_alarms * curve.n_target)
    i = int(np.argmin(gap))
    # (pm + pfa) / 2 as one correctly rounded integer division.
    num = 100 * (int(curve.misses[i]) * curve.n_nontarget + int(curve.false_alarms[i]) * curve.n_target)
    return num / (2 * curve.n_target * curve.n_nontarget), float(curve.thresholds[i])


def detection_costs(curve: ErrorCurve, params: MetricParams) -> np.ndarray:
    norm = min(params.c_miss * params.p_target, params.c_fa * (1 - params.p_target))
    cost = params.c_miss * params.p_target * curve.p_miss + params.c_fa * (1 - params.p_target) * curve.p_fa
    return cost / norm


def compute_min_dcf(scores: Sequence[TrialScore], params: MetricParams | None = None) -> float:
    return float(np.min(detection_costs(error_curve(scores), params or MetricParams())))


def edit_distance(ref: Sequence, hyp: Sequence) -> int:
    """Levenshtein distance with unit substitution/insertion/deletion costs."""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i]
        for j, h in enumerate(hyp, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h)))
        prev = cur
    return prev[-1]


def tokenize(text, unit: str = "word") -> list:
    if not isinstance(text, str):
        return list(text)
    if unit == "word":
        return text.split()
    if unit == "char":
        return [c for c in text if not c.isspace()]
    raise ValueError(f"unit must be 'word' or 'char', got {unit!r}")


def error_rate(ref, hyp, unit: str = "word") -> float:
    """Word or character error rate in percent."""
    r, h = tokenize(ref, unit), tokenize(hyp, unit)
    if not r:
        raise ValueError("reference must not be empty")
    return 100.0 * edit_distance(r, h) / len(r)


def corpus_error_rate(refs: Mapping[str, str], hyps: Mapping[str, str], unit: str = "word") -> float:
    """Total edits over total reference tokens, across all reference utterances."""
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise DataError(f"no hypothesis for {len(missing)} utterance(s), e.g. {missing[0]!r}")
    edits = total = 0
    for utt in sorted(refs):
        r = tokenize(refs[utt], unit)
        edits += edit_distance(r, tokenize(hyps[utt], unit))
        total += len(r)
    if total == 0:
        raise DataError("references contain no tokens")
    return 100.0 * edits / total


@dataclass
class ScenarioReport:
    scenario: str
    eer: float
    eer_threshold: float
    min_dcf: float
    n_trials: int
    n_target: int
    n_nontarget: int
    error_rate: float | None = None
    error_unit: str | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        if not np.isfinite(d["eer_threshold"]):
            d["eer_threshold"] = None
        return d

    def to_text(self) -> str:
        lines = OrderedDict()
        for key, value in self.to_dict().items():
            if key == "params":
                for pk, pv in sorted(value.items()):
                    lines[f"param.{pk}"] = pv
            elif value is not None:
                lines[key] = value
        return "".join(f"{k}={_fmt(v)}\n" for k, v in lines.items())

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(round(float(v), 10))
    return str(v)


class IdentityAnonymizer:
    """Passes embeddings through unchanged (resynthesis with the original speaker)."""

    def __call__(self, emb, utt_id, speaker=None, salt=""):
        return emb


Anonymizer = Callable[..., SpeakerEmbedding]


def _anonymize_side(anonymizer, entries, keys, speakers, salt):
    return [anonymizer(e, k, s, salt) for e, k, s in zip(entries, keys, speakers)]


def run_scenario(
    scenario,
    enroll: Sequence[SpeakerEmbedding],
    test: Sequence[SpeakerEmbedding],
    trials,
    anonymizer: Anonymizer | None = None,
    *,
    refs: Mapping[str, str] | None = None,
    hyps: Mapping[str, str] | None = None,
    error_unit: str = "word",
    seed: int = 0,
    enroll_policy: str = "independent",
    utt2spk: Mapping[str, str] | None = None,
    metric_params: MetricParams | None = None,
) -> tuple[ScenarioReport, list[TrialScore]]:
    """Apply the scenario's substitutions, score the trials and compute metrics.

    ``enroll`` entries are grouped by ``speaker_id`` (the enrollment model
    id); ``test`` entries are keyed by ``speaker_id`` (the test utterance
    id). OA and OR transform the test side; AA also transforms the
    enrollment side, with pseudo speakers independent of the test side
    unless ``enroll_policy == "shared"``.
    """
    scenario = Scenario(scenario)
    if scenario is not Scenario.OO and anonymizer is None:
        raise ValueError(f"scenario {scenario.value} needs an anonymizer")
    if enroll_policy not in ("independent", "shared"):
        raise ValueError("enroll_policy must be 'independent' or 'shared'")
    test_ids = [e.speaker_id for e in test]
    if len(set(test_ids)) != len(test_ids):
        raise DataError("test utterance ids must be unique")
    utt2spk = utt2spk or {}

    test_side = list(test)
    enroll_side = list(enroll)
    if scenario is not Scenario.OO:
        test_side = _anonymize_side(
            anonymizer, test_side, test_ids, [utt2spk.get(u, u) for u in test_ids], f"test:{seed}"
        )
    if scenario is Scenario.AA:
        counts: dict = {}
        keys = []
        for e in enroll_side:
            counts[e.speaker_id] = counts.get(e.speaker_id, -1) + 1
            keys.append(f"{e.speaker_id}#{counts[e.speaker_id]}")
        salt = f"test:{seed}" if enroll_policy == "shared" else f"enroll:{seed}"
        enroll_side = _anonymize_side(anonymizer, enroll_side, keys, [e.speaker_id for e in enroll_side], salt)

    enroll_map: dict = {}
    for orig, e in zip(enroll, enroll_side):
        enroll_map.setdefault(orig.speaker_id, []).append(e.vector)
    test_map = {u: e.vector for u, e in zip(test_ids, test_side)}
    scores = score_trials(enroll_map, test_map, trials)
    eer, thr = compute_eer(scores)
    mdcf = compute_min_dcf(scores, metric_params)
    n_tgt = sum(s.is_target for s in scores)
    report = ScenarioReport(
        scenario=scenario.value,
        eer=eer,
        eer_threshold=thr,
        min_dcf=mdcf,
        n_trials=len(scores),
        n_target=n_tgt,
        n_nontarget=len(scores) - n_tgt,
    )
    if refs is not None:
        if hyps is None:
            raise ValueError("reference transcripts given without hypotheses")
        report.error_rate = corpus_error_rate(refs, hyps, error_unit)
        report.error_unit = error_unit
    return report, scores
