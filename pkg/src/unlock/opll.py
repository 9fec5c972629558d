"""Omni pseudo-label generation.

Two passes over a prediction set: first the per-class score statistics of
the gated predictions are gathered for every branch and turned into
class-wise self-tuning (CS) thresholds; then each image is labelled with
certain objects, an uncertain region and a tri-state semantic map.
"""
from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .core import UNCERTAIN, as_mask, union
from .errors import BranchMismatch, ConfigInvalid, DimensionMismatch, EmptyDatasetWarning

EPS = 1e-7
BRANCHES = ("semantic", "instance", "amodal")


@dataclass(frozen=True, eq=False)
class InstancePrediction:
    cls: int
    score: float
    mask: np.ndarray
    seq: int = 0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        object.__setattr__(self, "mask", as_mask(self.mask))
        if not self.mask.any():
            raise ValueError("instance mask is empty")

    def with_mask(self, mask) -> "InstancePrediction":
        return InstancePrediction(self.cls, self.score, mask, self.seq)


@dataclass(eq=False)
class ImagePredictions:
    """Source-model output for one image: semantic probabilities (H, W, C)
    plus the instance and amodal instance branches."""

    image_id: str
    semantic: np.ndarray
    instance: list[InstancePrediction] = field(default_factory=list)
    amodal: list[InstancePrediction] = field(default_factory=list)
    image: np.ndarray | None = None

    @property
    def shape(self):
        return self.semantic.shape[:2]


@dataclass(eq=False)
class OmniPseudoLabel:
    instance: list[InstancePrediction]
    instance_uncertain: np.ndarray
    amodal: list[InstancePrediction]
    amodal_uncertain: np.ndarray
    semantic: np.ndarray  # u8 class ids, UNCERTAIN where not certain

    def certain(self, branch):
        return {"instance": self.instance, "amodal": self.amodal}[branch]

    def uncertain(self, branch):
        return {"instance": self.instance_uncertain, "amodal": self.amodal_uncertain}[branch]


def check_semantic(sem, num_classes=None):
    sem = np.asarray(sem, dtype=np.float64)
    if sem.ndim != 3:
        raise DimensionMismatch(f"semantic prediction must be (H, W, C), got {sem.shape}")
    if num_classes is not None and sem.shape[2] != num_classes:
        raise DimensionMismatch(f"expected {num_classes} classes, got {sem.shape[2]}")
    if sem.min() < 0 or not np.allclose(sem.sum(axis=2), 1.0, atol=1e-5):
        raise ValueError("semantic probabilities must be non-negative and sum to 1 per pixel")
    return sem


def compute_thing_mask(sem, thing_set) -> np.ndarray:
    if not thing_set:
        raise ValueError("thing set is empty")
    # np.argmax returns the first maximum, i.e. ties go to the lowest class id
    labels = np.argmax(np.asarray(sem), axis=2)
    return np.isin(labels, sorted(thing_set))


def gate_prediction(pred: InstancePrediction, thing_mask) -> InstancePrediction | None:
    """Restrict ``pred`` to thing pixels; None when nothing is left."""
    if pred.mask.shape != thing_mask.shape:
        raise DimensionMismatch(f"prediction {pred.mask.shape} vs thing mask {thing_mask.shape}")
    gated = pred.mask & thing_mask
    if not gated.any():
        return None
    return pred.with_mask(gated)


def gate_predictions(preds, thing_mask):
    out = []
    for p in preds:
        g = gate_prediction(p, thing_mask)
        if g is not None:
            out.append(g)
    return out


class ScoreStats:
    """Per-class (score, seq) samples. ``merge`` is associative and
    commutative, so per-image stats can be combined in any order."""

    def __init__(self):
        self._scores = defaultdict(list)
        self._seqs = defaultdict(list)

    def add(self, cls, scores, seqs):
        scores = np.atleast_1d(np.asarray(scores, dtype=np.float64))
        seqs = np.atleast_1d(np.asarray(seqs, dtype=np.int64))
        if scores.shape != seqs.shape:
            raise ValueError("scores and seqs must align")
        if scores.size:
            self._scores[int(cls)].append(scores)
            self._seqs[int(cls)].append(seqs)

    def merge(self, other: "ScoreStats") -> "ScoreStats":
        out = ScoreStats()
        for src in (self, other):
            for c in src._scores:
                out._scores[c].extend(src._scores[c])
                out._seqs[c].extend(src._seqs[c])
        return out

    @property
    def classes(self):
        return sorted(self._scores)

    def count(self, cls) -> int:
        return sum(a.size for a in self._scores.get(cls, ()))

    def ranked(self, cls):
        """Scores and seqs of ``cls`` sorted by descending score, ascending seq."""
        if cls not in self._scores:
            return np.empty(0), np.empty(0, dtype=np.int64)
        scores = np.concatenate(self._scores[cls])
        seqs = np.concatenate(self._seqs[cls])
        order = np.lexsort((seqs, -scores))
        return scores[order], seqs[order]

    def total(self) -> int:
        return sum(self.count(c) for c in self._scores)


def instance_stats(preds) -> ScoreStats:
    stats = ScoreStats()
    by_cls = defaultdict(list)
    for p in preds:
        by_cls[p.cls].append(p)
    for c, ps in by_cls.items():
        stats.add(c, [p.score for p in ps], [p.seq for p in ps])
    return stats


def semantic_stats(sem, seq_base=0) -> ScoreStats:
    """Per-pixel (max prob, pixel seq) samples keyed by the argmax class only."""
    sem = np.asarray(sem)
    labels = np.argmax(sem, axis=2).ravel()
    scores = sem.max(axis=2).ravel()
    seqs = seq_base + np.arange(labels.size, dtype=np.int64)
    stats = ScoreStats()
    for c in np.unique(labels):
        sel = labels == c
        stats.add(int(c), scores[sel], seqs[sel])
    return stats


def percentile_count(per, n) -> int:
    if n <= 0:
        return 0
    # guard against 0.3 * 10 == 3.0000000000000004
    return min(n, math.ceil(per * n - 1e-9))


def check_threshold_pair(fix, per, name="thresholds"):
    if not 0.0 <= fix <= 1.0:
        raise ConfigInvalid(f"{name}: fixed threshold {fix} outside [0, 1]")
    if not 0.0 < per <= 1.0:
        raise ConfigInvalid(f"{name}: percentile {per} outside (0, 1]")


@dataclass(frozen=True)
class ClassThreshold:
    winning_branch: str  # "fixed" | "percentile"
    cutoff_score: float
    admitted_count: int
    # seq of the last admitted object at the cutoff (percentile wins only)
    cutoff_seq: int | None = None

    def admits(self, score, seq):
        if self.winning_branch == "fixed":
            return score > self.cutoff_score
        return score > self.cutoff_score or (score == self.cutoff_score and seq <= self.cutoff_seq)

    def admits_many(self, scores, seqs):
        if self.winning_branch == "fixed":
            return scores > self.cutoff_score
        return (scores > self.cutoff_score) | ((scores == self.cutoff_score) & (seqs <= self.cutoff_seq))

    def to_dict(self):
        return {
            "winning_branch": self.winning_branch,
            "cutoff_score": self.cutoff_score,
            "admitted_count": self.admitted_count,
            "cutoff_seq": self.cutoff_seq,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["winning_branch"], float(d["cutoff_score"]), int(d["admitted_count"]), d.get("cutoff_seq"))


@dataclass(frozen=True)
class CsThresholds:
    branch: str
    fix: float
    per: float
    classes: dict[int, ClassThreshold]

    def admits(self, pred: InstancePrediction) -> bool:
        th = self.classes.get(pred.cls)
        return th is not None and th.admits(pred.score, pred.seq)

    def to_dict(self):
        return {
            "branch": self.branch,
            "fix": self.fix,
            "per": self.per,
            "classes": {str(c): t.to_dict() for c, t in sorted(self.classes.items())},
        }

    @classmethod
    def from_dict(cls, d):
        classes = {int(c): ClassThreshold.from_dict(t) for c, t in d["classes"].items()}
        return cls(d["branch"], float(d["fix"]), float(d["per"]), classes)


def class_threshold(scores_desc, seqs, fix, per) -> ClassThreshold:
    """CS rule for one class given its ranked scores."""
    n = len(scores_desc)
    n_fix = int(np.count_nonzero(np.asarray(scores_desc) > fix))
    k = percentile_count(per, n)
    if n_fix >= k:
        return ClassThreshold("fixed", float(fix), n_fix)
    return ClassThreshold("percentile", float(scores_desc[k - 1]), k, int(seqs[k - 1]))


def compute_cs_thresholds(stats: ScoreStats, fix, per, classes=None, branch="instance") -> CsThresholds:
    check_threshold_pair(fix, per, branch)
    if stats.total() == 0:
        warnings.warn(f"{branch}: no predictions in any class, all classes admit nothing",
                      EmptyDatasetWarning, stacklevel=2)
    wanted = set(stats.classes) | set(classes or ())
    out = {}
    for c in sorted(wanted):
        scores, seqs = stats.ranked(c)
        out[c] = class_threshold(scores, seqs, fix, per)
    return CsThresholds(branch, float(fix), float(per), out)


def select_certain_objects(gated, th: CsThresholds, branch=None):
    if th.branch == "semantic" or (branch is not None and branch != th.branch):
        raise BranchMismatch(f"thresholds for branch {th.branch!r} applied to {branch or 'instance'!r} objects")
    return [p for p in gated if th.admits(p)]


def compute_uncertain_region(gated, certain, shape) -> np.ndarray:
    certain_ids = {id(p) for p in certain}
    rejected = [p.mask for p in gated if id(p) not in certain_ids]
    return union(rejected, shape) & ~union([p.mask for p in certain], shape)


def generate_semantic_pseudo_label(sem, th: CsThresholds, seq_base=0) -> np.ndarray:
    if th.branch != "semantic":
        raise BranchMismatch(f"semantic labels need semantic thresholds, got {th.branch!r}")
    sem = np.asarray(sem)
    labels = np.argmax(sem, axis=2)
    scores = sem.max(axis=2)
    seqs = seq_base + np.arange(labels.size, dtype=np.int64).reshape(labels.shape)
    out = np.full(labels.shape, UNCERTAIN, dtype=np.uint8)
    for c, t in th.classes.items():
        sel = (labels == c) & t.admits_many(scores, seqs)
        out[sel] = c
    return out


def uncertainty_guided_bce(pred_prob, certain_target, uncertain):
    """Mean BCE over all pixels with uncertain pixels zero-weighted.

    Returns (loss, d loss / d pred_prob).
    """
    p = np.asarray(pred_prob, dtype=np.float64)
    y = np.asarray(certain_target, dtype=np.float64)
    u = np.asarray(uncertain, dtype=np.float64)
    if p.shape != y.shape or p.shape != u.shape:
        raise DimensionMismatch(f"shapes differ: {p.shape}, {y.shape}, {u.shape}")
    n = p.size
    if n == 0:
        return 0.0, np.zeros_like(p)
    p = np.clip(p, EPS, 1 - EPS)
    w = 1.0 - u
    bce = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    loss = float(np.sum(w * bce) / n)
    grad = w * (-y / p + (1 - y) / (1 - p)) / n
    return loss, grad


def masked_cross_entropy(sem, target):
    """Mean of -ln p[target] over certain pixels; (loss, d loss / d sem)."""
    sem = np.asarray(sem, dtype=np.float64)
    target = np.asarray(target)
    if sem.ndim != 3 or sem.shape[:2] != target.shape:
        raise DimensionMismatch(f"semantic {sem.shape} vs target {target.shape}")
    grad = np.zeros_like(sem)
    certain = target < sem.shape[2]
    n = int(np.count_nonzero(certain))
    if n == 0:
        return 0.0, grad
    ys, xs = np.nonzero(certain)
    cs = target[ys, xs].astype(np.int64)
    p = np.clip(sem[ys, xs, cs], EPS, None)
    loss = float(np.sum(-np.log(p)) / n)
    grad[ys, xs, cs] = -1.0 / (p * n)
    return loss, grad


# --- dataset level -------------------------------------------------------

def gate_image(preds: ImagePredictions, things):
    thing_mask = compute_thing_mask(preds.semantic, things)
    return gate_predictions(preds.instance, thing_mask), gate_predictions(preds.amodal, thing_mask)


def semantic_seq_bases(dataset):
    bases, acc = [], 0
    for p in dataset:
        bases.append(acc)
        acc += p.shape[0] * p.shape[1]
    return bases


def image_statistics(preds: ImagePredictions, things, seq_base):
    inst, amod = gate_image(preds, things)
    return {
        "semantic": semantic_stats(preds.semantic, seq_base),
        "instance": instance_stats(inst),
        "amodal": instance_stats(amod),
    }


def merge_statistics(parts):
    out = {b: ScoreStats() for b in BRANCHES}
    for part in parts:
        for b in BRANCHES:
            out[b] = out[b].merge(part[b])
    return out


def collect_statistics(dataset, things, mapper=map):
    bases = semantic_seq_bases(dataset)
    parts = mapper(lambda args: image_statistics(args[0], things, args[1]), list(zip(dataset, bases)))
    return merge_statistics(parts)


def compute_all_thresholds(stats, branch_params, classes):
    """``branch_params`` maps branch -> (fix, per)."""
    out = {}
    for b in BRANCHES:
        fix, per = branch_params[b]
        wanted = classes.things if b != "semantic" else range(classes.num_classes)
        out[b] = compute_cs_thresholds(stats[b], fix, per, classes=wanted, branch=b)
    return out


def generate_omni_pseudo_label(preds: ImagePredictions, thresholds, things, seq_base=0) -> OmniPseudoLabel:
    shape = preds.shape
    inst, amod = gate_image(preds, things)
    inst_cer = select_certain_objects(inst, thresholds["instance"], "instance")
    amod_cer = select_certain_objects(amod, thresholds["amodal"], "amodal")
    return OmniPseudoLabel(
        instance=inst_cer,
        instance_uncertain=compute_uncertain_region(inst, inst_cer, shape),
        amodal=amod_cer,
        amodal_uncertain=compute_uncertain_region(amod, amod_cer, shape),
        semantic=generate_semantic_pseudo_label(preds.semantic, thresholds["semantic"], seq_base),
    )
