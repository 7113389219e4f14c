"""Scoring protocol and error-rate metrics.

Conventions: attack is the positive class and larger scores are more
anomalous, so a query is declared an attack when ``score >= threshold``.
FAR is the share of attacks accepted (score below threshold), FRR the share
of real accesses rejected.  All reported rates are percentages.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from .dataset import ATTACK, DEV, REAL, TEST
from .exceptions import DataIntegrityError, ValidationError
from .registry import DetectorSpec, ModelRegistry, train_registry, with_train_fraction

FRAME = "frame"
VIDEO = "video"
GLOBAL = "global"
PER_CLIENT = "per-client"

DEFAULT_FRACTIONS = (1 / 100, 1 / 75, 1 / 50, 1 / 20, 1 / 10, 1 / 5, 1.0)


class ScoreItem(NamedTuple):
    claimed_id: str
    label: str
    attack_type: str
    video_id: str
    score: float


@dataclass(frozen=True)
class ScoreSet:
    granularity: str
    items: tuple = ()

    def __post_init__(self):
        if self.granularity not in (FRAME, VIDEO):
            raise ValidationError(f"granularity must be {FRAME!r} or {VIDEO!r}")
        items = tuple(ScoreItem(*it) for it in self.items)
        for it in items:
            if it.label not in (REAL, ATTACK):
                raise ValidationError(f"bad label {it.label!r}")
            if not math.isfinite(it.score):
                raise ValidationError(f"non-finite score for video {it.video_id}")
        if self.granularity == VIDEO:
            keys = [(it.claimed_id, it.video_id) for it in items]
            if len(set(keys)) != len(keys):
                raise DataIntegrityError("video-level score set repeats a (client, video) pair")
        object.__setattr__(self, "items", items)

    def __len__(self):
        return len(self.items)

    def split_by_label(self):
        real = np.array([it.score for it in self.items if it.label == REAL], dtype=np.float64)
        attack = np.array([it.score for it in self.items if it.label == ATTACK], dtype=np.float64)
        return real, attack

    def clients(self):
        return sorted({it.claimed_id for it in self.items})

    def for_client(self, cid):
        return ScoreSet(self.granularity, tuple(it for it in self.items if it.claimed_id == cid))

    def counts(self):
        real = sum(1 for it in self.items if it.label == REAL)
        return {"real": real, "attack": len(self.items) - real}


@dataclass(frozen=True)
class ThresholdPolicy:
    kind: str
    global_threshold: float | None = None
    per_client: dict | None = None

    def __post_init__(self):
        if self.kind == GLOBAL:
            if self.global_threshold is None or self.per_client is not None:
                raise ValidationError("a global policy carries exactly one global threshold")
        elif self.kind == PER_CLIENT:
            if self.per_client is None or self.global_threshold is not None:
                raise ValidationError("a per-client policy carries exactly a per-client map")
        else:
            raise ValidationError(f"unknown threshold policy {self.kind!r}")

    def threshold_for(self, cid):
        if self.kind == GLOBAL:
            return self.global_threshold
        try:
            return self.per_client[cid]
        except KeyError:
            raise ValidationError(f"no threshold calibrated for client {cid!r}") from None


# ---------------------------------------------------------------- metrics

def _require_both(real, attack):
    if real.size == 0 or attack.size == 0:
        raise ValidationError("score set must contain both real and attack items")


def error_rates(real, attack, threshold):
    """(FAR, FRR) as fractions for 'attack iff score >= threshold'."""
    real = np.sort(np.asarray(real, dtype=np.float64))
    attack = np.sort(np.asarray(attack, dtype=np.float64))
    _require_both(real, attack)
    t = np.asarray(threshold, dtype=np.float64)
    far = np.searchsorted(attack, t, side="left") / attack.size
    frr = (real.size - np.searchsorted(real, t, side="left")) / real.size
    return far, frr


def roc_from_arrays(real, attack):
    """ROC points and AUC with every distinct score used as a threshold.

    Points run from (0, 0) to (1, 1).  The AUC is accumulated from integer
    counts and divided once, which reproduces the Mann-Whitney statistic
    (ties counted one half) up to a single rounding.
    """
    real = np.asarray(real, dtype=np.float64)
    attack = np.asarray(attack, dtype=np.float64)
    _require_both(real, attack)
    thresholds = np.unique(np.concatenate([real, attack]))[::-1]
    rs, ats = np.sort(real), np.sort(attack)
    fp = real.size - np.searchsorted(rs, thresholds, side="left")
    tp = attack.size - np.searchsorted(ats, thresholds, side="left")
    fp = np.concatenate([[0], fp]).astype(np.int64)
    tp = np.concatenate([[0], tp]).astype(np.int64)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    auc = twice_area / (2 * int(real.size) * int(attack.size))
    points = np.column_stack([fp / real.size, tp / attack.size])
    return points, auc


def roc_auc(scores: ScoreSet):
    """``(roc_points, auc)``; AUC is a fraction in [0, 1]."""
    return roc_from_arrays(*scores.split_by_label())


def eer_from_arrays(real, attack):
    """``(threshold, eer_percent)`` minimising ``|FAR - FRR|`` over the finite candidate set.

    Candidates are ``-inf``, the midpoints between consecutive distinct
    scores, and ``+inf``; ties on the objective go to the lowest threshold.
    """
    real = np.asarray(real, dtype=np.float64)
    attack = np.asarray(attack, dtype=np.float64)
    _require_both(real, attack)
    u = np.unique(np.concatenate([real, attack]))
    cands = np.concatenate([[-np.inf], (u[:-1] + u[1:]) / 2, [np.inf]])
    n_r, n_a = int(real.size), int(attack.size)
    fa = np.searchsorted(np.sort(attack), cands, side="left").astype(np.int64)
    fr = n_r - np.searchsorted(np.sort(real), cands, side="left").astype(np.int64)
    # compare |fa/n_a - fr/n_r| exactly on the common denominator
    best = int(np.argmin(np.abs(fa * n_r - fr * n_a)))
    return float(cands[best]), float(100.0 * ((fa[best] / n_a + fr[best] / n_r) / 2))


def eer(scores: ScoreSet):
    return eer_from_arrays(*scores.split_by_label())


def hter(scores_test: ScoreSet, threshold: float) -> float:
    far, frr = error_rates(*scores_test.split_by_label(), threshold)
    return float(100.0 * ((far + frr) / 2))


def fuse_per_video(frames: ScoreSet) -> ScoreSet:
    """Average frame scores within each (claimed client, video); output sorted by that key.

    Sums use :func:`math.fsum`, so the result does not depend on frame order.
    """
    if frames.granularity != FRAME:
        raise ValidationError("fuse_per_video expects a frame-level score set")
    groups: dict = {}
    for it in frames.items:
        key = (it.claimed_id, it.video_id)
        g = groups.get(key)
        if g is None:
            groups[key] = [it.label, it.attack_type, [it.score]]
        else:
            if g[0] != it.label or g[1] != it.attack_type:
                raise DataIntegrityError(
                    f"video {it.video_id} of client {it.claimed_id} mixes labels")
            g[2].append(it.score)
    items = tuple(
        ScoreItem(cid, g[0], g[1], vid, math.fsum(g[2]) / len(g[2]))
        for (cid, vid), g in sorted(groups.items())
    )
    return ScoreSet(VIDEO, items)


def per_client_eers(scores: ScoreSet):
    """``{client: (threshold, eer_percent)}`` from each client's own items."""
    out = {}
    missing = []
    for cid in scores.clients():
        real, attack = scores.for_client(cid).split_by_label()
        if real.size == 0 or attack.size == 0:
            missing.append(cid)
            continue
        out[cid] = eer_from_arrays(real, attack)
    if missing:
        raise ValidationError(
            f"client(s) {', '.join(missing)} lack real or attack items; "
            "per-client thresholds need both")
    return out


def per_client_thresholds(scores_dev: ScoreSet) -> ThresholdPolicy:
    return ThresholdPolicy(PER_CLIENT, per_client={c: t for c, (t, _) in per_client_eers(scores_dev).items()})


def policy_error_rates(scores: ScoreSet, policy: ThresholdPolicy):
    """Pooled (FAR, FRR) fractions with each item judged by its own client's threshold."""
    fa = fr = n_attack = n_real = 0
    for it in scores.items:
        t = policy.threshold_for(it.claimed_id)
        if it.label == ATTACK:
            n_attack += 1
            fa += it.score < t
        else:
            n_real += 1
            fr += it.score >= t
    if n_attack == 0 or n_real == 0:
        raise ValidationError("score set must contain both real and attack items")
    return fa / n_attack, fr / n_real


def policy_eer(scores: ScoreSet, policy: ThresholdPolicy) -> float:
    far, frr = policy_error_rates(scores, policy)
    return 100.0 * ((far + frr) / 2)


def _five_numbers(a):
    if a.size == 0:
        return None
    return [float(v) for v in np.quantile(a, [0.0, 0.25, 0.5, 0.75, 1.0])]


def client_summaries(named_sets):
    """Box-plot statistics (min, q1, median, q3, max) of real and attack scores per client."""
    out = {}
    for split_name, scores in named_sets:
        for cid in scores.clients():
            real, attack = scores.for_client(cid).split_by_label()
            out[cid] = {
                "split": split_name,
                "real": _five_numbers(real),
                "attack": _five_numbers(attack),
                "n_real": int(real.size),
                "n_attack": int(attack.size),
            }
    return dict(sorted(out.items()))


# -------------------------------------------------------------- protocol

def score_split(reg: ModelRegistry, split) -> ScoreSet:
    """Frame-level scores of every record against its claimed client's model."""
    recs = list(split.records)
    scores = np.empty(len(recs))
    by_client: dict = {}
    for i, r in enumerate(recs):
        by_client.setdefault(r.client_id, []).append(i)
    for cid in sorted(by_client):
        idx = by_client[cid]
        X = np.vstack([recs[i].vector for i in idx])
        scores[idx] = reg.score(cid, X)
    return ScoreSet(FRAME, tuple(
        ScoreItem(r.client_id, r.label, r.attack_type, r.video_id, float(s))
        for r, s in zip(recs, scores)))


@dataclass
class EvalReport:
    granularity: str
    policy: str
    eer_dev: float
    auc_test: float
    roc_points: np.ndarray
    thresholds: ThresholdPolicy
    hter_test: float | None = None
    eer_dev_global: float | None = None
    eer_dev_weighted: float | None = None
    eer_test_per_client: float | None = None
    per_client_eer_dev: dict = field(default_factory=dict)
    per_client_summaries: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    detector: dict = field(default_factory=dict)

    def to_dict(self):
        th = {"kind": self.thresholds.kind}
        if self.thresholds.kind == GLOBAL:
            th["global"] = self.thresholds.global_threshold
        else:
            th["per_client"] = dict(sorted(self.thresholds.per_client.items()))
        out = {
            "format": "OCPAD-REPORT v1",
            "detector": self.detector,
            "granularity": self.granularity,
            "policy": self.policy,
            "eer_dev": self.eer_dev,
        }
        if self.policy == GLOBAL:
            out["hter_test"] = self.hter_test
        else:
            out["eer_dev_global"] = self.eer_dev_global
            out["eer_dev_weighted"] = self.eer_dev_weighted
            out["eer_test_per_client"] = self.eer_test_per_client
            out["per_client_eer_dev"] = dict(sorted(self.per_client_eer_dev.items()))
        out["auc_test"] = self.auc_test
        out["thresholds"] = th
        out["counts"] = self.counts
        out["per_client"] = self.per_client_summaries
        return out

    def summary_lines(self):
        lines = [f"granularity={self.granularity}", f"policy={self.policy}",
                 f"eer_dev={self.eer_dev!r}"]
        if self.hter_test is not None:
            lines.append(f"hter_test={self.hter_test!r}")
        if self.policy == PER_CLIENT:
            lines.append(f"eer_dev_global={self.eer_dev_global!r}")
            lines.append(f"eer_test_per_client={self.eer_test_per_client!r}")
        lines.append(f"auc_test={self.auc_test!r}")
        return lines


def evaluate_scores(dev_frames: ScoreSet, test_frames: ScoreSet, policy_kind=GLOBAL,
                    granularity=FRAME, detector=None) -> EvalReport:
    """Metrics from already-computed frame-level dev and test scores."""
    if granularity == VIDEO:
        dev, test = fuse_per_video(dev_frames), fuse_per_video(test_frames)
    elif granularity == FRAME:
        dev, test = dev_frames, test_frames
    else:
        raise ValidationError(f"granularity must be {FRAME!r} or {VIDEO!r}")
    roc, auc = roc_auc(test)
    t_global, eer_global = eer(dev)
    common = dict(
        granularity=granularity,
        auc_test=100.0 * auc,
        roc_points=roc,
        per_client_summaries=client_summaries([(DEV, dev), (TEST, test)]),
        counts={DEV: dev.counts(), TEST: test.counts()},
        detector=detector or {},
    )
    if policy_kind == GLOBAL:
        policy = ThresholdPolicy(GLOBAL, global_threshold=t_global)
        return EvalReport(policy=GLOBAL, eer_dev=eer_global, thresholds=policy,
                          hter_test=hter(test, t_global), **common)
    if policy_kind != PER_CLIENT:
        raise ValidationError(f"unknown threshold policy {policy_kind!r}")
    per = per_client_eers(dev)
    policy = ThresholdPolicy(PER_CLIENT, per_client={c: t for c, (t, _) in per.items()})
    n_items = {c: len(dev.for_client(c)) for c in per}
    weighted = sum(n_items[c] * e for c, (_, e) in per.items()) / sum(n_items.values())
    test_policy = per_client_thresholds(test)
    return EvalReport(
        policy=PER_CLIENT,
        eer_dev=policy_eer(dev, policy),
        thresholds=policy,
        eer_dev_global=eer_global,
        eer_dev_weighted=weighted,
        eer_test_per_client=policy_eer(test, test_policy),
        per_client_eer_dev={c: e for c, (_, e) in per.items()},
        **common,
    )


def _detector_info(reg):
    spec = reg.spec
    return {"kind": spec.kind, "mode": spec.mode, "train_fraction": spec.train_fraction,
            "params": {k: v for k, v in spec.params.items()}}


def evaluate(reg: ModelRegistry, splits, policy_kind=GLOBAL, granularity=FRAME) -> EvalReport:
    """Score the dev and test splits against ``reg`` and compute the report."""
    for name in (DEV, TEST):
        if name not in splits or len(splits[name]) == 0:
            raise ValidationError(f"evaluation needs a non-empty {name} split")
    dev = score_split(reg, splits[DEV])
    test = score_split(reg, splits[TEST])
    return evaluate_scores(dev, test, policy_kind, granularity, _detector_info(reg))


def sample_size_sweep(spec: DetectorSpec, splits, fractions: Sequence[float] = DEFAULT_FRACTIONS,
                      policy_kind=GLOBAL, granularity=FRAME, jobs=1) -> dict:
    """Retrain and evaluate once per training fraction; returns ``{fraction: report}``."""
    fractions = list(fractions)
    if not fractions:
        raise ValidationError("at least one fraction is required")
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValidationError(f"fractions must lie in (0, 1], got {f}")
    out = {}
    for f in fractions:
        reg = train_registry(with_train_fraction(spec, f), splits, jobs=jobs)
        out[f] = evaluate(reg, splits, policy_kind, granularity)
    return out


# ------------------------------------------------------------------ files

def write_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def write_roc(points, path) -> None:
    lines = ["fpr,tpr"] + [f"{fpr:.17g},{tpr:.17g}" for fpr, tpr in np.asarray(points)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_roc(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "fpr,tpr":
            raise ValidationError(f"bad ROC header {header!r}")
        return np.array([[float(v) for v in line.split(",")] for line in fh if line.strip()])


def fraction_label(f: float) -> str:
    """File-name friendly label, e.g. 0.01 -> '1_100', 1.0 -> '1_1'."""
    fr = Fraction(f).limit_denominator(1000)
    return f"{fr.numerator}_{fr.denominator}"
