import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from unlock.core import iou
from unlock.errors import ConfigInvalid
from unlock.synth import (
    DEFAULT_CLASSES, RARE_CLASS, NoiseModel, SceneConfig, generate_dataset, generate_scene, perturb_mask,
    shape_mask, simulate_predictions,
)

SMALL = SceneConfig(height=24, width=40)


def test_same_seed_same_scene():
    a, b = generate_scene(5, SMALL), generate_scene(5, SMALL)
    assert np.array_equal(a.image, b.image) and np.array_equal(a.semantic, b.semantic)
    assert [(o.cls, o.amodal.tobytes()) for o in a.objects] == [(o.cls, o.amodal.tobytes()) for o in b.objects]
    assert not np.array_equal(a.image, generate_scene(6, SMALL).image)


def test_background_only_scene():
    s = generate_scene(0, SceneConfig(height=8, width=8, min_objects=0, max_objects=0))
    assert s.objects == [] and set(np.unique(s.semantic)) <= DEFAULT_CLASSES.stuff


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_ground_truth_self_consistency(seed):
    s = generate_scene(seed, SceneConfig(height=20, width=30, min_objects=0, max_objects=8))
    covered = np.zeros(s.semantic.shape, int)
    in_front = np.zeros(s.semantic.shape, bool)
    # objects are stored back to front with depth 0 = frontmost
    for o in reversed(s.objects):
        assert o.visible.any()
        np.testing.assert_array_equal(o.visible, o.amodal & ~in_front)
        in_front |= o.amodal
        covered += o.visible
        assert (s.semantic[o.visible] == o.cls).all()
        assert ndimage.label(o.amodal)[1] == 1
    assert covered.max(initial=0) <= 1
    background = covered == 0
    assert np.isin(s.semantic[background], sorted(DEFAULT_CLASSES.stuff)).all()
    assert [o.depth for o in s.objects] == list(range(len(s.objects)))[::-1]


def test_stacked_rectangles():
    back = shape_mask("rect", 2, 2, 6, 6, 12, 12)
    front = shape_mask("rect", 4, 4, 6, 6, 12, 12)
    seed = next(k for k in range(2000) if len(generate_scene(k, SceneConfig(height=12, width=12, min_objects=2,
                                                                           max_objects=2, shapes=("rect",))).objects) == 2)
    s = generate_scene(seed, SceneConfig(height=12, width=12, min_objects=2, max_objects=2, shapes=("rect",)))
    deep, shallow = s.objects
    np.testing.assert_array_equal(deep.visible, deep.amodal & ~shallow.amodal)
    # the same rule, evaluated by hand on fixed geometry
    assert (back & ~front).sum() == 36 - 16


def test_zero_noise_predictions_equal_ground_truth():
    s = generate_scene(3, SMALL)
    p = simulate_predictions(s, NoiseModel(), 0)
    assert [q.score for q in p.instance] == [1.0] * len(s.objects)
    for q, o in zip(p.instance, s.objects):
        assert q.cls == o.cls and np.array_equal(q.mask, o.visible)
    for q, o in zip(p.amodal, s.objects):
        assert np.array_equal(q.mask, o.amodal)
    np.testing.assert_array_equal(p.semantic.argmax(2), s.semantic)
    assert p.semantic.max() == 1.0


def test_full_miss_rate_gives_no_objects():
    s = generate_scene(3, SMALL)
    p = simulate_predictions(s, NoiseModel(miss_rate=1.0), 0)
    assert p.instance == [] and p.amodal == []


def test_erosion_of_square():
    sq = shape_mask("rect", 5, 5, 10, 10, 20, 20)
    er = perturb_mask(sq, 1, 0)
    assert er.sum() == 64 and np.array_equal(er, shape_mask("rect", 6, 6, 8, 8, 20, 20))
    assert iou(er, sq) == pytest.approx(0.64)


def test_scores_follow_mask_quality():
    scenes, preds = generate_dataset(0, 30, SMALL, NoiseModel(erode=1, score_noise=0.05))
    pairs = []
    for s, p in zip(scenes, preds):
        for q in p.instance:
            best = max(iou(q.mask, o.visible) for o in s.objects)
            pairs.append((best, q.score))
    quality, score = np.array(pairs).T
    assert np.corrcoef(quality, score)[0, 1] > 0.8
    assert np.abs(score - np.clip(quality, 0, 1)).max() <= 0.05 + 1e-12


def test_rare_class_scale_keeps_scores_low():
    noise = NoiseModel(score_noise=0.02, class_score_scale={RARE_CLASS: 0.25})
    _, preds = generate_dataset(1, 10, SceneConfig(height=24, width=40, min_rare=2), noise)
    rare = [q.score for p in preds for q in p.instance if q.cls == RARE_CLASS]
    assert rare and max(rare) < 0.3


def test_semantic_probabilities_normalized():
    p = simulate_predictions(generate_scene(2, SMALL), NoiseModel(semantic_flip=0.1, softness=0.3), 4)
    np.testing.assert_allclose(p.semantic.sum(2), 1.0, atol=1e-12)


def test_dataset_seqs_and_ids():
    _, preds = generate_dataset(0, 3, SMALL)
    seqs = [q.seq for p in preds for q in p.instance]
    assert seqs == list(range(len(seqs)))
    assert [p.image_id for p in preds] == ["img0000", "img0001", "img0002"]


@pytest.mark.parametrize("kw", [dict(height=7), dict(min_objects=3, max_objects=2), dict(shapes=("star",)),
                                dict(rare_class=1), dict(min_size=0)])
def test_invalid_scene_config(kw):
    with pytest.raises(ConfigInvalid):
        generate_scene(0, SceneConfig(**kw))


def test_invalid_noise():
    with pytest.raises(ConfigInvalid):
        simulate_predictions(generate_scene(0, SMALL), NoiseModel(erode=-1))
