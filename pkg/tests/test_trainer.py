"""Trainer tests: Adam algebra, phase partition, ablations, determinism, resume."""

import numpy as np
import pytest

from didd import model as model_mod
from didd import synthworld, trainer
from didd.autodiff import Tensor
from didd.trainer import Adam, TrainConfig


def _scalar_param(value=0.0):
    return Tensor(np.array([value], dtype=np.float32), requires_grad=True, name="theta")


def test_adam_first_step_unit_update():
    p = _scalar_param(0.0)
    opt = Adam([p])
    p.grad = np.ones(1, dtype=np.float32)
    opt.step()
    # bias correction makes the first step exactly lr / (1 + eps)
    assert abs(p.data[0] + 2e-4) < 1e-9
    assert opt.t == 1


def test_adam_zero_grad_no_move():
    p = _scalar_param(1.5)
    opt = Adam([p])
    p.grad = np.zeros(1, dtype=np.float32)
    opt.step()
    assert p.data[0] == 1.5 and opt.t == 1


def test_adam_monotone_descent_constant_grad():
    p = _scalar_param(0.0)
    opt = Adam([p])
    seen = [p.data[0]]
    for _ in range(100):
        p.grad = np.ones(1, dtype=np.float32)
        opt.step()
        seen.append(p.data[0])
    diffs = np.diff(np.array(seen, dtype=np.float64))
    assert np.all(diffs < 0)


def test_adam_missing_grad_raises():
    p = _scalar_param()
    opt = Adam([p])
    with pytest.raises(ValueError, match="missing gradient"):
        opt.step()
    with pytest.raises(ValueError, match="empty"):
        Adam([])


def test_adam_state_roundtrip():
    gen = np.random.default_rng(3)
    p1 = Tensor(gen.standard_normal(4).astype(np.float32), requires_grad=True)
    p2 = Tensor(gen.standard_normal((2, 3)).astype(np.float32), requires_grad=True)
    opt = Adam([p1, p2])
    for _ in range(5):
        p1.grad = gen.standard_normal(4).astype(np.float32)
        p2.grad = gen.standard_normal((2, 3)).astype(np.float32)
        opt.step()
    q1 = Tensor(p1.data.copy(), requires_grad=True)
    q2 = Tensor(p2.data.copy(), requires_grad=True)
    opt2 = Adam([q1, q2])
    opt2.load_state_blocks([b.copy() for b in opt.state_blocks()], opt.t)
    g1 = gen.standard_normal(4).astype(np.float32)
    g2 = gen.standard_normal((2, 3)).astype(np.float32)
    p1.grad, p2.grad, q1.grad, q2.grad = g1, g2, g1.copy(), g2.copy()
    opt.step()
    opt2.step()
    np.testing.assert_array_equal(p1.data, q1.data)
    np.testing.assert_array_equal(p2.data, q2.data)
    with pytest.raises(ValueError, match="blocks"):
        opt2.load_state_blocks([np.zeros(4, np.float32)], 1)


def test_config_validation_and_defaults():
    assert TrainConfig(steps=10).resolved_batch() == 16
    assert TrainConfig(steps=10, preset="paper").resolved_batch() == 32
    assert TrainConfig(steps=10, batch=4).resolved_batch() == 4
    with pytest.raises(ValueError, match="steps"):
        TrainConfig(steps=-1)
    with pytest.raises(ValueError, match="batch"):
        TrainConfig(steps=1, batch=0)
    with pytest.raises(ValueError, match="ckpt_every"):
        TrainConfig(steps=1, ckpt_every=0)


def _tiny_setup(seed=11, **kw):
    m = model_mod.build_model("desk", seed=seed)
    cfg = TrainConfig(steps=2, batch=2, seed=seed, out_dir="unused", **kw)
    opt_gen, opt_d = trainer._build_optimizers(m, cfg)
    world = synthworld.World()
    a = trainer.sample_batch(world, "A", seed, 1, cfg.batch)
    b = trainer.sample_batch(world, "B", seed, 1, cfg.batch)
    return m, cfg, opt_gen, opt_d, a, b


def _snap(params):
    return [p.data.copy() for p in params]


def _unchanged(before, params):
    return all(np.array_equal(x, p.data) for x, p in zip(before, params))


def test_phase_partition():
    m, cfg, opt_gen, opt_d, a, b = _tiny_setup()
    m.update_sigmas()
    ta, tb = Tensor(a), Tensor(b)

    d_before = _snap(m.d_params())
    gen_before = _snap(m.gen_params())
    comp, ca, cb = trainer.generator_phase(m, ta, tb, cfg, opt_gen)
    assert _unchanged(d_before, m.d_params())  # phase 1 never touches d
    assert not _unchanged(gen_before, m.gen_params())

    gen_after = _snap(m.gen_params())
    trainer.discriminator_phase(m, ca, cb, opt_d)
    assert _unchanged(gen_after, m.gen_params())  # phase 2 never touches encoders/G
    assert not _unchanged(d_before, m.d_params())


def test_train_step_updates_everything_by_default():
    m, cfg, opt_gen, opt_d, a, b = _tiny_setup()
    gen_before = _snap(m.gen_params())
    d_before = _snap(m.d_params())
    report = trainer.train_step(m, a, b, cfg, opt_gen, opt_d)
    assert not _unchanged(gen_before, m.gen_params())
    assert not _unchanged(d_before, m.d_params())
    for v in (report.zero_a, report.zero_b, report.adv, report.disc,
              report.recon_a, report.recon_b, report.total):
        assert np.isfinite(v) and v > 0


def test_ablation_only_recon():
    m, cfg, opt_gen, opt_d, a, b = _tiny_setup(disable_zero=True, disable_adv=True)
    d_before = _snap(m.d_params())
    report = trainer.train_step(m, a, b, cfg, opt_gen, opt_d)
    assert report.zero_a == 0.0 and report.zero_b == 0.0
    assert report.adv == 0.0 and report.disc == 0.0
    assert report.recon_a > 0 and report.total == report.recon_a + report.recon_b
    assert _unchanged(d_before, m.d_params())  # phase 2 skipped entirely


def test_ablation_only_adv_leaves_sep_and_g_alone():
    m, cfg, opt_gen, opt_d, a, b = _tiny_setup(disable_zero=True, disable_recon=True)
    sep_params = [blk.weight for blk in m.e_sep_a + m.e_sep_b]
    g_params = [blk.weight for blk in m.g]
    sep_before = _snap(sep_params)
    g_before = _snap(g_params)
    report = trainer.train_step(m, a, b, cfg, opt_gen, opt_d)
    # the adversarial path flows only through E_common and d
    assert _unchanged(sep_before, sep_params)
    assert _unchanged(g_before, g_params)
    for p in sep_params:
        assert p.grad is not None and not p.grad.any()
    assert report.recon_a == 0.0 and report.zero_a == 0.0 and report.adv > 0


def test_ablation_everything_disabled_is_a_no_op():
    m, cfg, opt_gen, opt_d, a, b = _tiny_setup(
        disable_zero=True, disable_adv=True, disable_recon=True)
    before = _snap(m.params())
    report = trainer.train_step(m, a, b, cfg, opt_gen, opt_d)
    assert _unchanged(before, m.params())
    assert report.total == 0.0


def test_nan_abort_names_component():
    m, cfg, opt_gen, opt_d, a, b = _tiny_setup()
    m.e_sep_a[0].weight.data[:] = np.nan
    with pytest.raises(FloatingPointError, match="zero_a"):
        trainer.train_step(m, a, b, cfg, opt_gen, opt_d, step=7)


def test_train_step_deterministic():
    reports = []
    for _ in range(2):
        m, cfg, opt_gen, opt_d, a, b = _tiny_setup(seed=21)
        r1 = trainer.train_step(m, a, b, cfg, opt_gen, opt_d, step=1)
        r2 = trainer.train_step(m, a, b, cfg, opt_gen, opt_d, step=2)
        reports.append((r1, r2))
    assert reports[0] == reports[1]  # dataclass equality: bit-identical floats


def test_train_end_to_end(tmp_path):
    cfg = TrainConfig(steps=3, batch=2, seed=4, ckpt_every=2,
                      out_dir=str(tmp_path / "run"))
    m = trainer.train(cfg)
    lines = (tmp_path / "run" / "loss.csv").read_text().splitlines()
    assert lines[0] == trainer.CSV_HEADER
    assert len(lines) == 1 + cfg.steps
    for i, line in enumerate(lines[1:], start=1):
        cells = line.split(",")
        assert int(cells[0]) == i
        zero_a, zero_b, adv, disc, recon_a, recon_b, total = map(float, cells[1:])
        assert total == (zero_a + zero_b) + cfg.lambda1 * adv + cfg.lambda2 * (recon_a + recon_b)
    assert (tmp_path / "run" / "checkpoint_2.ckpt").exists()
    assert (tmp_path / "run" / "model.ckpt").exists()
    manifest = dict(l.split("=", 1) for l in
                    (tmp_path / "run" / "manifest.txt").read_text().splitlines()
                    if l and not l.startswith("#"))
    assert manifest["steps"] == "3" and manifest["preset"] == "desk"
    m2 = model_mod.load_checkpoint(tmp_path / "run" / "model.ckpt")
    for p, q in zip(m.params(), m2.params()):
        np.testing.assert_array_equal(p.data, q.data)


def test_train_zero_steps(tmp_path):
    cfg = TrainConfig(steps=0, batch=2, seed=4, out_dir=str(tmp_path / "z"))
    trainer.train(cfg)
    assert (tmp_path / "z" / "loss.csv").read_text() == trainer.CSV_HEADER + "\n"
    assert (tmp_path / "z" / "model.ckpt").exists()


def test_train_runs_deterministic(tmp_path):
    cfgs = [TrainConfig(steps=2, batch=2, seed=9, out_dir=str(tmp_path / d))
            for d in ("r1", "r2")]
    trainer.train(cfgs[0])
    trainer.train(cfgs[1])
    assert (tmp_path / "r1" / "loss.csv").read_text() == (tmp_path / "r2" / "loss.csv").read_text()
    b1 = (tmp_path / "r1" / "model.ckpt").read_bytes()
    b2 = (tmp_path / "r2" / "model.ckpt").read_bytes()
    assert b1 == b2


def test_resume_bitwise(tmp_path):
    full = TrainConfig(steps=6, batch=2, seed=13, ckpt_every=3,
                       out_dir=str(tmp_path / "full"))
    trainer.train(full)
    resumed = TrainConfig(steps=6, batch=2, seed=13, ckpt_every=3,
                          out_dir=str(tmp_path / "resumed"))
    trainer.train(resumed, resume=str(tmp_path / "full" / "checkpoint_3.ckpt"))
    assert ((tmp_path / "full" / "model.ckpt").read_bytes()
            == (tmp_path / "resumed" / "model.ckpt").read_bytes())
    tail_full = (tmp_path / "full" / "loss.csv").read_text().splitlines()[4:]
    tail_res = (tmp_path / "resumed" / "loss.csv").read_text().splitlines()[1:]
    assert tail_full == tail_res


def test_resume_guards(tmp_path):
    cfg = TrainConfig(steps=1, batch=2, seed=2, out_dir=str(tmp_path / "a"))
    m = trainer.train(cfg)
    bare = tmp_path / "bare.ckpt"
    model_mod.save_checkpoint(m, bare, step=1)
    with pytest.raises(ValueError, match="optimizer state"):
        trainer.train(TrainConfig(steps=2, batch=2, seed=2,
                                  out_dir=str(tmp_path / "b")), resume=str(bare))
    with pytest.raises(ValueError, match="preset"):
        trainer.train(TrainConfig(steps=2, batch=2, seed=2, preset="paper",
                                  out_dir=str(tmp_path / "c")),
                      resume=str(tmp_path / "a" / "model.ckpt"))


def test_progress_callback(tmp_path):
    seen = []
    cfg = TrainConfig(steps=2, batch=2, seed=1, out_dir=str(tmp_path / "p"))
    trainer.train(cfg, progress=lambda step, rep: seen.append(step))
    assert seen == [1, 2]
