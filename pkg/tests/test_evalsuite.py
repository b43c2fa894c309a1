import os

import numpy as np
import pytest

from didd import evalsuite, model, rng, synthworld
from didd.trainer import TrainConfig


@pytest.fixture(scope="module")
def world():
    return synthworld.World()


@pytest.fixture(scope="module")
def clf(world):
    return evalsuite.train_classifier(world, n_per_combo=512, max_steps=600)


def _param_bytes(c):
    return [p.data.tobytes() for p in c.params()]


def test_build_classifier_deterministic():
    a = evalsuite.build_classifier(5)
    b = evalsuite.build_classifier(5)
    c = evalsuite.build_classifier(6)
    assert _param_bytes(a) == _param_bytes(b)
    assert _param_bytes(a) != _param_bytes(c)


def test_classify_shape_range_and_chunking(world):
    clf = evalsuite.build_classifier(0)
    imgs = world.bank_a.batch(np.arange(10))
    p = evalsuite.classify(clf, imgs)
    assert p.shape == (10, 2)
    assert np.all(p >= 0.0) and np.all(p <= 1.0)
    q = evalsuite.classify(clf, imgs, chunk=3)
    assert np.allclose(p, q, atol=1e-6)
    single = evalsuite.classify(clf, imgs[0])
    assert single.shape == (1, 2)
    assert np.allclose(single[0], p[0], atol=1e-6)


def test_combo_set_labels_match_probes(world):
    s = evalsuite.combo_set(world, 11, "t", 64)
    assert s.images.shape == (256, 3, 32, 32)
    a = synthworld.probe_a_style(s.images) != synthworld.ABSENT
    b = synthworld.probe_b_style(s.images) != synthworld.ABSENT
    assert np.array_equal(a, s.a_present)
    assert np.array_equal(b, s.b_present)
    # every presence combination equally represented
    for wa, wb in ((0, 0), (0, 1), (1, 0), (1, 1)):
        assert np.sum((s.a_present == wa) & (s.b_present == wb)) == 64


def test_combo_set_deterministic(world):
    s1 = evalsuite.combo_set(world, 11, "t", 16)
    s2 = evalsuite.combo_set(world, 11, "t", 16)
    assert s1.images.tobytes() == s2.images.tobytes()
    assert np.array_equal(s1.a_present, s2.a_present)


def test_trained_classifier_passes_gate(clf):
    assert min(clf.holdout_accuracy) >= 0.98
    assert clf.steps >= 1


def test_train_accuracy_at_least_holdout(world, clf):
    train_set = evalsuite.combo_set(world, clf.seed, "clf.train", 512)
    tr = evalsuite.head_accuracy(clf, train_set.images, train_set.a_present,
                                 train_set.b_present)
    assert (tr[0] + tr[1]) / 2 >= (clf.holdout_accuracy[0] + clf.holdout_accuracy[1]) / 2


def test_a_region_zeroed_scores_absent(world, clf):
    imgs = world.bank_a.batch(rng.stream(3, "zeroed").integers(0, 1024, size=512)).copy()
    imgs[:, :, synthworld.RING_MASK] = -1.0
    pred = evalsuite.classify(clf, imgs) >= 0.5
    assert np.mean(~pred[:, 0]) >= 0.98


def test_label_permuted_training_is_chance(world):
    train_set = evalsuite.combo_set(world, 21, "perm.train", 256)
    holdout = evalsuite.combo_set(world, 21, "perm.holdout", 256)
    gen = rng.stream(21, "perm.shuffle")
    train_set.a_present = train_set.a_present[gen.permutation(train_set.a_present.size)]
    train_set.b_present = train_set.b_present[gen.permutation(train_set.b_present.size)]
    c = evalsuite.build_classifier(21)
    acc = evalsuite.fit_classifier(c, train_set, holdout, max_steps=200, check_every=200)
    assert abs(acc[0] - 0.5) < 0.1
    assert abs(acc[1] - 0.5) < 0.1


def test_gate_failure_aborts(world):
    with pytest.raises(RuntimeError, match="oracle gate"):
        evalsuite.train_classifier(world, n_per_combo=64, max_steps=1, gate=0.98)


def test_save_load_roundtrip(tmp_path, world, clf):
    path = str(tmp_path / "clf.ckpt")
    evalsuite.save_classifier(clf, path)
    again = str(tmp_path / "clf2.ckpt")
    evalsuite.save_classifier(clf, again)
    assert open(path, "rb").read() == open(again, "rb").read()

    loaded = evalsuite.load_classifier(path)
    assert _param_bytes(loaded) == _param_bytes(clf)
    assert loaded.holdout_accuracy == clf.holdout_accuracy
    assert loaded.steps == clf.steps
    imgs = world.bank_b.batch(np.arange(8))
    assert np.array_equal(evalsuite.classify(loaded, imgs), evalsuite.classify(clf, imgs))


def test_load_rejects_model_checkpoint(tmp_path):
    path = str(tmp_path / "m.ckpt")
    model.save_checkpoint(model.build_model("desk", seed=1), path)
    with pytest.raises(ValueError, match="kind"):
        evalsuite.load_classifier(path)


def _oracle_translate(src, guide, direction):
    zc = synthworld.probe_common(src)
    out = np.empty_like(src)
    if direction == "ab":
        style = synthworld.probe_b_style(guide)
    else:
        style = synthworld.probe_a_style(guide)
    for i in range(src.shape[0]):
        hue, px, py, size = synthworld.common_from_label(int(zc[i]))
        if direction == "ab":
            f = synthworld.FactorSpec(hue, px, py, size, b_style=int(style[i]))
        else:
            f = synthworld.FactorSpec(hue, px, py, size, a_style=int(style[i]))
        out[i] = synthworld.render(f)
    return out


def test_oracle_translator_scores_100(world, clf):
    r = evalsuite.translation_accuracy(None, clf, n_pairs=128, seed=5, world=world,
                                       translate_fn=_oracle_translate)
    assert r.a_to_b >= 98.0 and r.b_to_a >= 98.0
    assert r.strict_a_to_b >= 98.0 and r.strict_b_to_a >= 98.0
    assert r.n_pairs == 128


def test_identity_translator_scores_low(world, clf):
    identity = lambda src, guide, direction: src
    r = evalsuite.translation_accuracy(None, clf, n_pairs=128, seed=5, world=world,
                                       translate_fn=identity)
    assert r.a_to_b <= 2.0 and r.b_to_a <= 2.0
    assert r.strict_a_to_b <= 2.0 and r.strict_b_to_a <= 2.0


def test_unmarked_translator_scores_chance(world, clf):
    def unmarked(src, guide, direction):
        zc = synthworld.probe_common(src)
        out = np.empty_like(src)
        for i in range(src.shape[0]):
            hue, px, py, size = synthworld.common_from_label(int(zc[i]))
            out[i] = synthworld.render(synthworld.FactorSpec(hue, px, py, size))
        return out

    r = evalsuite.translation_accuracy(None, clf, n_pairs=128, seed=5, world=world,
                                       translate_fn=unmarked)
    # source mark removed but guide mark never added: half credit, zero strict
    assert 45.0 <= r.a_to_b <= 55.0
    assert 45.0 <= r.b_to_a <= 55.0
    assert r.strict_a_to_b <= 2.0 and r.strict_b_to_a <= 2.0


def test_translation_deterministic(world, clf):
    m = model.build_model("desk", seed=9)
    r1 = evalsuite.translation_accuracy(m, clf, n_pairs=32, seed=2, world=world)
    r2 = evalsuite.translation_accuracy(m, clf, n_pairs=32, seed=2, world=world)
    assert r1 == r2


def test_translation_validates_inputs(world, clf):
    weak = evalsuite.build_classifier(1)
    weak.holdout_accuracy = (0.95, 0.99)
    with pytest.raises(ValueError, match="oracle gate"):
        evalsuite.translation_accuracy(None, weak, n_pairs=8, world=world)
    with pytest.raises(ValueError, match="n_pairs"):
        evalsuite.translation_accuracy(None, clf, n_pairs=0, world=world)


def test_run_ablation_variants_and_failure_isolation(tmp_path, world, clf):
    seen = []

    def fake_train(cfg, progress=None):
        seen.append(cfg)
        if cfg.out_dir.endswith("no_adv"):
            raise RuntimeError("boom")
        return model.build_model("desk", seed=cfg.seed)

    cfg = TrainConfig(steps=3, batch=4, seed=13, out_dir=str(tmp_path / "abl"))
    results = evalsuite.run_ablation(cfg, clf=clf, n_pairs=16, world=world,
                                     train_fn=fake_train)
    assert [r.variant for r in results] == ["all", "no_zero", "no_adv", "no_recon"]
    failed = {r.variant: r for r in results}["no_adv"]
    assert "boom" in failed.error
    for r in results:
        if r.variant != "no_adv":
            assert r.error == ""
            assert np.isfinite(r.a_to_b) and np.isfinite(r.b_to_a)

    # identical budgets, one disabled loss each
    assert all(c.steps == 3 and c.batch == 4 and c.seed == 13 for c in seen)
    flags = [(c.disable_zero, c.disable_adv, c.disable_recon) for c in seen]
    assert flags == [(False, False, False), (True, False, False),
                     (False, True, False), (False, False, True)]

    assert os.path.exists(tmp_path / "abl" / "ablation.csv")
    text = open(tmp_path / "abl" / "ablation.txt").read()
    assert text.startswith("variant")
    csv = open(tmp_path / "abl" / "ablation.csv").read()
    assert csv.splitlines()[0] == "variant,a_to_b,b_to_a,strict_a_to_b,strict_b_to_a,error"
    assert len(csv.splitlines()) == 5


def test_ablation_table_formats():
    results = [evalsuite.AblationResult("all", 91.0, 92.5, 80.0, 81.0),
               evalsuite.AblationResult("no_adv", error="RuntimeError: x")]
    csv = evalsuite.ablation_csv(results)
    assert "all,91.0,92.5,80.0,81.0," in csv
    assert "no_adv,,,,,RuntimeError: x" in csv
    txt = evalsuite.ablation_text(results)
    lines = txt.splitlines()
    assert lines[0].split()[0] == "variant"
    assert "failed" in lines[2]


def test_translation_result_csv():
    r = evalsuite.TranslationResult(90.0, 91.5, 80.0, 82.0, 512)
    out = r.csv()
    assert out.splitlines()[0] == "a_to_b,b_to_a,strict_a_to_b,strict_b_to_a,n_pairs"
    assert out.splitlines()[1] == "90.0,91.5,80.0,82.0,512"
