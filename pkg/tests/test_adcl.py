import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unlock.adcl import (
    KEPT, REMOVED, ObjectPool, PoolObject, admit_object, build_object_pool, spatial_aware_mix,
)
from unlock.core import UNCERTAIN, area
from unlock.errors import DimensionMismatch, EmptyDatasetWarning
from unlock.opll import ImagePredictions, InstancePrediction, OmniPseudoLabel
from unlock.rng import SplitMix64

from worlds import pseudo_world

CAR, PED = 4, 5


def row(bits):
    return np.array([[int(b) for b in bits]], dtype=bool)


def empty_label(shape, sem_value=0):
    z = np.zeros(shape, bool)
    return OmniPseudoLabel([], z, [], z.copy(), np.full(shape, sem_value, np.uint8))


def pool_object(cls, full, overlap, image, score=0.99):
    po = admit_object(InstancePrediction(cls, score, full), [], image)
    return PoolObject(cls, score, full, overlap, po.pixels, po.offset, "src")


# --- random source -------------------------------------------------------

def test_splitmix_reference_vector():
    # outputs of the reference C implementation seeded with 1234567
    g = SplitMix64(1234567)
    assert [g.next_u64() for _ in range(5)] == [
        6457827717110365317, 3203168211198807973, 9817491932198370423,
        4593380528125082431, 16408922859458223821]


@given(st.integers(0, 2 ** 64 - 1), st.integers(1, 30), st.integers(0, 40))
def test_sampling_shape(seed, n, r):
    picks = SplitMix64(seed).sample(n, r)
    assert len(picks) == r
    assert all(0 <= i < n for i in picks)
    if r <= n:
        assert len(set(picks)) == r
    assert picks == SplitMix64(seed).sample(n, r)


def test_below_is_roughly_uniform():
    g = SplitMix64(3)
    counts = np.bincount([g.below(6) for _ in range(6000)], minlength=6)
    assert counts.min() > 850 and counts.max() < 1150


# --- admission -----------------------------------------------------------

def test_admit_examples():
    img = np.arange(20, dtype=np.uint8).reshape(2, 10)
    full = np.zeros((2, 10), bool)
    full[0] = True
    assert area(admit_object(InstancePrediction(CAR, 0.99, full), [], img).overlap_mask) == 0

    half = np.zeros((2, 10), bool)
    half[0, :5] = True
    assert admit_object(InstancePrediction(CAR, 0.99, full), [half], img) is None
    four = np.zeros((2, 10), bool)
    four[0, :4] = True
    po = admit_object(InstancePrediction(CAR, 0.99, full), [four | (~full & np.roll(four, 1, 0))], img)
    assert po is not None and area(po.overlap_mask) == 4


def test_admitted_crop_is_zero_outside_mask():
    img = np.full((3, 3, 3), 200, np.uint8)
    full = np.eye(3, dtype=bool)
    po = admit_object(InstancePrediction(CAR, 0.99, full), [], img)
    assert po.offset == (0, 0) and po.pixels.shape == (3, 3, 3)
    assert (po.pixels[~full] == 0).all() and (po.pixels[full] == 200).all()


def scene_with_objects(scores, image_id="a"):
    h, w = 4, 4 * len(scores)
    sem = np.zeros((h, w, 8))
    sem[..., CAR] = 1.0
    objs = []
    for k, s in enumerate(scores):
        m = np.zeros((h, w), bool)
        m[:, 4 * k:4 * k + 3] = True
        objs.append(InstancePrediction(CAR, s, m, k))
    return ImagePredictions(image_id, sem, objs, objs, np.full((h, w), 9, np.uint8))


def test_pool_truncates_to_highest_scores():
    data = [scene_with_objects([0.6, 0.9, 0.8])]
    pool = build_object_pool(data, (0.0, 1.0), 2, {CAR})
    assert [o.score for o in pool] == [0.9, 0.8]
    assert len(build_object_pool(data, (0.0, 1.0), 0, {CAR})) == 0
    with pytest.warns(EmptyDatasetWarning):
        assert len(build_object_pool([], (0.95, 0.1), 10, {CAR})) == 0
    assert build_object_pool(data, (0.0, 1.0), 10, {CAR}).histogram() == {CAR: 3}


def test_pool_uses_strict_thresholds():
    data = [scene_with_objects([0.6, 0.9, 0.96])]
    # fixed branch: one object above 0.95, percentile branch: ceil(0.1*3)=1
    assert [o.score for o in build_object_pool(data, (0.95, 0.1), 10, {CAR})] == [0.96]


# --- mixing --------------------------------------------------------------

def test_mix_single_row_example():
    base = np.array([[10, 20, 30, 40]], np.uint8)
    src = np.array([[0, 7, 7, 0]], np.uint8)
    pool = ObjectPool([pool_object(CAR, row("0110"), row("0010"), src)])
    out = spatial_aware_mix(base, empty_label((1, 4)), pool, 1, 0)
    assert out.image.tolist() == [[10, 7, 0, 40]]
    (amod,), (inst,) = out.labels.amodal, out.labels.instance
    np.testing.assert_array_equal(amod.mask, row("0110"))
    np.testing.assert_array_equal(inst.mask, row("0110"))
    assert out.labels.semantic.tolist() == [[0, CAR, UNCERTAIN, 0]]
    assert out.paste_log == [(0, KEPT)]


def test_mix_zero_r_is_identity():
    base = np.array([[10, 20, 30, 40]], np.uint8)
    label = empty_label((1, 4), 3)
    pool = ObjectPool([pool_object(CAR, row("0110"), row("0010"), base)])
    out = spatial_aware_mix(base, label, pool, 0, 5)
    assert out.image.tolist() == base.tolist() and out.paste_log == []
    np.testing.assert_array_equal(out.labels.semantic, label.semantic)
    out = spatial_aware_mix(base, label, ObjectPool(), 10, 5)
    assert out.image.tolist() == base.tolist()


def test_mix_later_paste_removes_fully_covered_one():
    base = np.zeros((1, 4), np.uint8)
    small = pool_object(PED, row("0100"), row("0000"), np.full((1, 4), 5, np.uint8))
    big = pool_object(CAR, row("1110"), row("0000"), np.full((1, 4), 9, np.uint8))
    pool = ObjectPool([small, big])
    seed = next(s for s in range(100) if SplitMix64(s).sample(2, 2) == [0, 1])
    out = spatial_aware_mix(base, empty_label((1, 4)), pool, 2, seed)
    assert out.paste_log == [(0, REMOVED), (1, KEPT)]
    assert [p.cls for p in out.labels.amodal] == [CAR]
    assert [p.cls for p in out.labels.instance] == [CAR]
    assert out.image.tolist() == [[9, 9, 9, 0]]


def test_mix_removes_fully_covered_base_objects_only():
    base = np.zeros((1, 6), np.uint8)
    covered = InstancePrediction(PED, 0.9, row("011000"), 0)
    partial = InstancePrediction(PED, 0.9, row("000011"), 1)
    covered_amodal = InstancePrediction(PED, 0.9, row("011100"), 0)
    z = np.zeros((1, 6), bool)
    label = OmniPseudoLabel([covered, partial], z, [covered_amodal, partial], z.copy(),
                            np.zeros((1, 6), np.uint8))
    pool = ObjectPool([pool_object(CAR, row("111010"), row("000000"), np.ones((1, 6), np.uint8))])
    out = spatial_aware_mix(base, label, pool, 1, 0)
    assert [p.seq for p in out.labels.instance] == [1, 2]
    assert [p.seq for p in out.labels.amodal] == [1, 2]
    # untouched partial object keeps its original mask
    np.testing.assert_array_equal(out.labels.instance[0].mask, row("000011"))


def test_mix_dimension_mismatch():
    pool = ObjectPool([pool_object(CAR, row("0110"), row("0000"), np.zeros((1, 4), np.uint8))])
    with pytest.raises(DimensionMismatch):
        spatial_aware_mix(np.zeros((1, 5), np.uint8), empty_label((1, 5)), pool, 1, 0)


@pytest.fixture(scope="module")
def world():
    return pseudo_world(11, 12)


def check_mix_invariants(base, label, pool, r, seed):
    out = spatial_aware_mix(base, label, pool, r, seed)
    picks = [k for k, _ in out.paste_log]
    pasted = np.zeros(base.shape[:2], bool)
    for k in picks:
        pasted |= pool[k].full_mask
    assert (out.image[~pasted] == base[~pasted]).all()
    later = np.zeros_like(pasted)
    for k, outcome in reversed(out.paste_log):
        o = pool[k]
        if outcome == KEPT:
            assert (out.image[o.overlap_mask & ~later] == 0).all()
        else:
            assert not (o.full_mask & ~later).any()
        later |= o.full_mask
    # pasted objects carry seqs above every base seq, in paste order
    first_new = max((q.seq for q in label.instance + label.amodal), default=-1) + 1
    new_amodal = {p.seq: p for p in out.labels.amodal if p.seq >= first_new}
    new_instance = {p.seq: p for p in out.labels.instance if p.seq >= first_new}
    kept = [pool[k] for k, o in out.paste_log if o == KEPT]
    assert sorted(new_amodal) == sorted(new_instance) == list(range(first_new, first_new + len(kept)))
    for o, s in zip(kept, sorted(new_amodal)):
        np.testing.assert_array_equal(new_amodal[s].mask, o.full_mask)
        assert not (new_instance[s].mask & ~o.full_mask).any()
    assert all(p.mask.any() for p in out.labels.instance)
    again = spatial_aware_mix(base, label, pool, r, seed)
    assert again.paste_log == out.paste_log and np.array_equal(again.image, out.image)
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 11), st.integers(0, 12), st.integers(0, 2 ** 64 - 1))
def test_mix_invariants_on_synthetic_world(world, i, r, seed):
    _, preds, labels, pool = world
    assert all(2 * area(o.overlap_mask) < area(o.full_mask) for o in pool)
    check_mix_invariants(preds[i].image, labels[i], pool, r, seed)
