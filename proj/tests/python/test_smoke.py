import json
import math
from pathlib import Path

import numpy as np
import pytest

import latsep

PRESETS = Path(__file__).resolve().parents[2] / "presets"


def test_blend_formula_matches_numpy():
    spec = latsep.make_builtin_trigger("blend", (32, 32, 3))
    x = np.random.default_rng(0).random((32, 32, 3), dtype=np.float32)
    out = latsep.apply_trigger(x, spec, 0.2)
    mask = spec.mask[:, :, None].astype(bool)
    expected = np.where(mask, 0.8 * x + 0.2 * spec.pattern, x)
    np.testing.assert_allclose(out, np.clip(expected, 0, 1), atol=1e-6)
    np.testing.assert_array_equal(latsep.apply_trigger(x, spec, 0.0), x)


def test_apply_trigger_rejects_wrong_shape():
    spec = latsep.make_builtin_trigger("badnet_patch", (32, 32, 3))
    with pytest.raises(latsep.InvalidInput):
        latsep.apply_trigger(np.zeros((16, 16, 3), np.float32), spec, 1.0)


def test_adaptive_blend_plan_counts():
    attack = latsep.preset_attack("adaptive_blend")
    labels = [i % 10 for i in range(50000)]
    plan = latsep.make_attack(attack, labels, 10, 666)
    assert (plan.payload_count, plan.cover_count) == (250, 250)
    assert latsep.expected_asr(attack) == 0.5
    payload = plan.indices("payload")
    assert latsep.elimination_rate(plan, payload[:125]) == 0.5
    clean = sorted(set(range(50000)) - {e[0] for e in plan.entries})
    assert latsep.sacrifice_rate(plan, 50000, clean[:995]) == pytest.approx(995 / 49500, abs=0)
    assert latsep.cover_removed(plan, plan.indices("cover")) == 250


def test_spectral_cleansers_recover_planted_rows():
    reps, poison = latsep.synth_latents(950, 50, 64, 10.0, 42)
    labels = [0] * len(poison)
    planted = {i for i, p in enumerate(poison) if p}
    for result in (latsep.spectral_signature(reps, labels, 0.05), latsep.spectre(reps, labels, 0.05)):
        assert len(planted & set(result.suspected_indices)) >= 0.9 * len(planted)
        assert json.loads(result.to_json())["method"] == result.method


def test_activation_clustering_silhouette_agrees_with_sklearn():
    from sklearn.metrics import silhouette_score

    reps, poison = latsep.synth_latents(950, 50, 64, 10.0, 42)
    score = latsep.separability_score(reps, poison)
    assert score["silhouette"] == pytest.approx(silhouette_score(reps, np.asarray(poison, int)), rel=1e-9)
    assert score["svm_train_accuracy"] == 1.0
    result = latsep.activation_clustering(reps, [0] * len(poison))
    assert result.flagged_classes == {0}


def test_scan_flags_the_poisoned_class():
    d = latsep.synth_multiclass_latents(10, 950, 50, 64, 10.0, 0, 200, 42)
    result = latsep.scan(d["latents"], d["labels"], d["clean_base"], d["clean_base_labels"])
    assert 0 in result.flagged_classes
    assert result.per_class_scores[0] > math.e


def test_mad_anomaly_index():
    norms = [10, 11, 9, 12, 8, 10.5, 9.5, 11.5, 8.5, 2]
    idx = latsep.mad_anomaly_indices(norms)
    med = np.median(norms)
    mad = 1.4826 * np.median(np.abs(np.array(norms) - med))
    np.testing.assert_allclose(idx, np.abs(np.array(norms) - med) / mad, rtol=1e-12)
    assert latsep.select_nc_target(norms, idx) == 9


def test_entropy_and_strip_threshold():
    assert latsep.shannon_entropy([0.1] * 10) == pytest.approx(math.log(10))
    validation = list(np.linspace(0.0, 1.0, 101))
    result = latsep.strip_cleanse([0.05, 0.5, 0.95], validation, 0.10)
    assert result.suspected_indices == [0]


def test_presets_resolve():
    desk = latsep.load_config(PRESETS / "desk_cifar10.json")
    assert desk["desk_scale"] is True
    assert desk["train"]["epochs"] == 30
    over = latsep.load_config(PRESETS / "desk_synthetic.json", ["train.epochs=2", "train.decay_epochs=[1]"])
    assert over["train"]["epochs"] == 2
    with pytest.raises(latsep.ConfigError, match="attack.bogus"):
        latsep.load_config(PRESETS / "desk_synthetic.json", ["attack.bogus=1"])
