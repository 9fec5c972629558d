"""Small synthetic worlds shared by the tests."""
import numpy as np

from unlock.adcl import build_object_pool
from unlock.config import PipelineConfig
from unlock.opll import (
    collect_statistics, compute_all_thresholds, generate_omni_pseudo_label, semantic_seq_bases,
)
from unlock.synth import DEFAULT_CLASSES, NoiseModel, SceneConfig, generate_dataset

MILD = NoiseModel(erode=1, score_noise=0.1, spurious_rate=0.5, miss_rate=0.05,
                  semantic_flip=0.02, softness=0.2, class_score_scale={6: 0.25})
SMALL = SceneConfig(height=24, width=40, min_objects=2, max_objects=5)


def pseudo_world(seed, count, noise=MILD, scene=SMALL, cfg=PipelineConfig()):
    scenes, preds = generate_dataset(seed, count, scene, noise)
    things = DEFAULT_CLASSES.things
    ths = compute_all_thresholds(collect_statistics(preds, things), cfg.branch_params(), DEFAULT_CLASSES)
    labels = [generate_omni_pseudo_label(p, ths, things, b) for p, b in zip(preds, semantic_seq_bases(preds))]
    pool = build_object_pool(preds, (cfg.strict.fix, cfg.strict.per), cfg.capacity, things)
    return scenes, preds, labels, pool


def onehot(label_map, num_classes):
    return np.eye(num_classes)[label_map]
