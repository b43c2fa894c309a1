"""Adam and the alternating two-phase training loop.

Each step runs two phases. Phase 1 forwards all enabled loss components,
backpropagates L = L_zero + lambda1 * L_adv + lambda2 * L_recon, and updates
the three encoders plus the decoder. Phase 2 recomputes the discriminator on
detached common codes, backpropagates L_d, and updates only d (skipped
entirely when the adversarial term is disabled). Spectral norms advance by
one power-iteration step at the start of every training step.

Determinism: batches, init, and every other random draw come from named
counter-based substreams keyed by (seed, name, step), so a run is a pure
function of its config and resuming from a checkpoint replays the exact
arithmetic of the uninterrupted run.
"""

import os
from dataclasses import dataclass, fields

import numpy as np

import didd

from . import autodiff as ad
from . import model as model_mod
from . import objective, synthworld
from .autodiff import Tape, Tensor
from .model import CodeTriple
from .objective import LossWeights


class Adam:
    """Bias-corrected Adam over a fixed parameter list, moments in float32."""

    def __init__(self, params, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = list(params)
        if not self.params:
            raise ValueError("Adam: empty parameter list")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self._s = [np.empty_like(p.data) for p in self.params]  # step scratch

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v, s in zip(self.params, self.m, self.v, self._s):
            if p.grad is None:
                raise ValueError(f"Adam: missing gradient for parameter {p.name or p.shape}")
            g = p.grad
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=s)
            m += s
            v *= self.beta2
            np.multiply(g, g, out=s)
            s *= 1.0 - self.beta2
            v += s
            np.divide(v, c2, out=s)
            np.sqrt(s, out=s)
            s += self.eps
            np.divide(m, s, out=s)
            s *= self.lr / c1
            p.data -= s

    def state_blocks(self):
        """Moment arrays in serialization order: m, v per parameter."""
        out = []
        for m, v in zip(self.m, self.v):
            out.append(m)
            out.append(v)
        return out

    def load_state_blocks(self, blocks, t):
        if len(blocks) != 2 * len(self.params):
            raise ValueError(
                f"Adam: expected {2 * len(self.params)} moment blocks, got {len(blocks)}")
        for i, p in enumerate(self.params):
            m = blocks[2 * i].reshape(p.data.shape).astype(np.float32)
            v = blocks[2 * i + 1].reshape(p.data.shape).astype(np.float32)
            self.m[i] = m
            self.v[i] = v
        self.t = int(t)


@dataclass
class TrainConfig:
    steps: int = 20000
    batch: int | None = None  # None resolves per preset: 16 desk, 32 paper
    seed: int = 7
    preset: str = "desk"
    sep: int | None = None
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    lambda1: float = 0.001
    lambda2: float = 1.0
    disable_zero: bool = False
    disable_adv: bool = False
    disable_recon: bool = False
    adv_b_term: bool = True
    ckpt_every: int = 5000
    out_dir: str = "runs/run"

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.batch is not None and self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.ckpt_every < 1:
            raise ValueError(f"ckpt_every must be >= 1, got {self.ckpt_every}")

    def resolved_batch(self):
        if self.batch is not None:
            return self.batch
        return 16 if self.preset == "desk" else 32

    def weights(self):
        return LossWeights(self.lambda1, self.lambda2)

    def manifest_lines(self):
        """Config echo as re-loadable key=value lines."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, bool):
                v = int(v)
            elif isinstance(v, float):
                v = repr(v)
            out.append(f"{f.name}={v}")
        return out


def sample_batch(world, domain, seed, step, n):
    idx = synthworld.sample_indices(domain, seed, step, n)
    return world.bank(domain).images[idx]


def _check_finite(value, component, step):
    if not np.isfinite(value):
        raise FloatingPointError(
            f"non-finite {component} loss ({value!r}) at step {step}; aborting")
    return value


def generator_phase(m, a, b, cfg, opt_gen, step=0):
    """Phase 1: update encoders and decoder. Returns (components, common_a, common_b).

    Disabled components contribute 0 to the report and build no graph; with
    every component disabled no backward pass or update happens at all.
    """
    w = cfg.weights()
    n = a.data.shape[0]
    zero_a = zero_b = adv = recon_a = recon_b = 0.0
    common_a = common_b = None
    terms = []
    ad.zero_grads(opt_gen.params)
    with Tape() as tape:
        if not (cfg.disable_adv and cfg.disable_recon):
            common_a = model_mod.encode_common(m, a)
            common_b = model_mod.encode_common(m, b)
        if not cfg.disable_zero:
            za_t = objective.l1_batch_mean(model_mod.encode_sep_a(m, b))
            zb_t = objective.l1_batch_mean(model_mod.encode_sep_b(m, a))
            terms.append(ad.add(za_t, zb_t))
            zero_a = _check_finite(za_t.item(), "zero_a", step)
            zero_b = _check_finite(zb_t.item(), "zero_b", step)
        if not cfg.disable_adv:
            adv_t = objective.adv_loss_encoder(
                model_mod.discriminate(m, common_a),
                model_mod.discriminate(m, common_b),
                include_b_term=cfg.adv_b_term)
            terms.append(adv_t * w.lambda1)
            adv = _check_finite(adv_t.item(), "adv", step)
        if not cfg.disable_recon:
            ra = model_mod.decode(m, CodeTriple(
                common_a, model_mod.encode_sep_a(m, a), model_mod.zero_code(m, "b", n)))
            rb = model_mod.decode(m, CodeTriple(
                common_b, model_mod.zero_code(m, "a", n), model_mod.encode_sep_b(m, b)))
            ra_t = objective.recon_loss(ra, a)
            rb_t = objective.recon_loss(rb, b)
            terms.append(ad.add(ra_t, rb_t) * w.lambda2)
            recon_a = _check_finite(ra_t.item(), "recon_a", step)
            recon_b = _check_finite(rb_t.item(), "recon_b", step)
        if terms:
            total = terms[0]
            for t in terms[1:]:
                total = ad.add(total, t)
            ad.backward(tape, total)
    if terms:
        opt_gen.step()
    components = dict(zero_a=zero_a, zero_b=zero_b, adv=adv,
                      recon_a=recon_a, recon_b=recon_b)
    return components, common_a, common_b


def discriminator_phase(m, common_a, common_b, opt_d, step=0):
    """Phase 2: update d on detached common codes. Returns the disc loss."""
    ad.zero_grads(opt_d.params)
    with Tape() as tape:
        d_t = objective.adv_loss_discriminator(
            model_mod.discriminate(m, common_a.detach()),
            model_mod.discriminate(m, common_b.detach()))
        ad.backward(tape, d_t)
    opt_d.step()
    return _check_finite(d_t.item(), "disc", step)


def train_step(m, batch_a, batch_b, cfg, opt_gen, opt_d, step=0):
    m.update_sigmas()
    a = Tensor(np.asarray(batch_a, dtype=np.float32))
    b = Tensor(np.asarray(batch_b, dtype=np.float32))
    comp, common_a, common_b = generator_phase(m, a, b, cfg, opt_gen, step)
    disc = 0.0
    if not cfg.disable_adv:
        disc = discriminator_phase(m, common_a, common_b, opt_d, step)
    return objective.make_report(comp["zero_a"], comp["zero_b"], comp["adv"], disc,
                                 comp["recon_a"], comp["recon_b"], cfg.weights())


CSV_HEADER = "step,zero_a,zero_b,adv,disc,recon_a,recon_b,total"


def csv_row(step, r):
    vals = (r.zero_a, r.zero_b, r.adv, r.disc, r.recon_a, r.recon_b, r.total)
    return str(step) + "," + ",".join(repr(float(v)) for v in vals)


def _build_optimizers(m, cfg):
    opt_gen = Adam(m.gen_params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    opt_d = Adam(m.d_params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    return opt_gen, opt_d


def _save(m, path, cfg, step, opt_gen, opt_d):
    model_mod.save_checkpoint(
        m, path, step=step, lambda1=cfg.lambda1, lambda2=cfg.lambda2,
        opt_blocks=opt_gen.state_blocks() + opt_d.state_blocks(),
        opt_meta={"opt_t_gen": opt_gen.t, "opt_t_d": opt_d.t})


def train(cfg, resume=None, progress=None):
    """Runs cfg.steps training steps and returns the final ModelBundle.

    Writes into cfg.out_dir: manifest.txt (config echo, written up front),
    loss.csv (one row per executed step), checkpoint_<step>.ckpt every
    cfg.ckpt_every steps, and model.ckpt at the end. With resume=<path>,
    picks up at the checkpoint's step counter and replays the identical
    stream of batches from there. progress, if given, is called as
    progress(step, report) after every step.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    world = synthworld.World()
    batch = cfg.resolved_batch()

    if resume is not None:
        m, manifest, opt_blocks = model_mod.load_checkpoint(resume, with_opt=True)
        if manifest["preset"] != cfg.preset:
            raise ValueError(
                f"resume: checkpoint preset {manifest['preset']!r} != config {cfg.preset!r}")
        if manifest.get("opt") != "1":
            raise ValueError(f"resume: {resume} carries no optimizer state")
        start = int(manifest["step"])
        opt_gen, opt_d = _build_optimizers(m, cfg)
        n_gen = 2 * len(opt_gen.params)
        opt_gen.load_state_blocks(opt_blocks[:n_gen], manifest["opt_t_gen"])
        opt_d.load_state_blocks(opt_blocks[n_gen:], manifest["opt_t_d"])
    else:
        m = model_mod.build_model(cfg.preset, cfg.sep, seed=cfg.seed)
        start = 0
        opt_gen, opt_d = _build_optimizers(m, cfg)

    with open(os.path.join(cfg.out_dir, "manifest.txt"), "w") as f:
        f.write(f"# didd {didd.__version__}\n")
        for line in cfg.manifest_lines():
            f.write(line + "\n")
        if resume is not None:
            f.write(f"# resumed from {resume} at step {start}\n")

    with open(os.path.join(cfg.out_dir, "loss.csv"), "w") as log:
        log.write(CSV_HEADER + "\n")
        for step in range(start + 1, cfg.steps + 1):
            batch_a = sample_batch(world, "A", cfg.seed, step, batch)
            batch_b = sample_batch(world, "B", cfg.seed, step, batch)
            report = train_step(m, batch_a, batch_b, cfg, opt_gen, opt_d, step)
            log.write(csv_row(step, report) + "\n")
            if step % cfg.ckpt_every == 0 and step < cfg.steps:
                _save(m, os.path.join(cfg.out_dir, f"checkpoint_{step}.ckpt"),
                      cfg, step, opt_gen, opt_d)
            if progress is not None:
                progress(step, report)

    _save(m, os.path.join(cfg.out_dir, "model.ckpt"), cfg, cfg.steps, opt_gen, opt_d)
    return m
