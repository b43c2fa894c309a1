"""Classifier-scored translation evaluation and the loss ablation sweep.

An AttributeClassifier with two binary heads (A-mark present, B-mark
present) is pretrained on rendered images covering all four presence
combinations, gated at 0.98 held-out accuracy per head, and then used as
the scoring oracle for translations.

Two scores per direction: the headline accuracy credits each of the two
membership conditions separately (mean of "source mark removed" and
"guide mark added", in [0, 100]), so a model that renders unmarked
images scores 50, i.e. chance. The strict score is the conjunction
(both conditions at once), reported alongside.
"""

import os
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from . import layers, model, objective, rng, synthworld, trainer
from .autodiff import Tensor

CLF_SEED = 977  # fixed default, independent of any model training seed
_CLF_FILTERS = (16, 32, 64)


class AttributeClassifier:
    """Three down blocks into a dense two-sigmoid head.

    Output column 0 scores "A mark present", column 1 "B mark present".
    """

    def __init__(self, blocks, head, seed=0):
        self.blocks = blocks
        self.head = head
        self.seed = seed
        self.holdout_accuracy = (0.0, 0.0)
        self.steps = 0

    def params(self):
        out = []
        for blk in self.blocks:
            out.extend(blk.params())
        out.extend(self.head.params())
        return out

    def forward(self, x):
        for blk in self.blocks:
            x = blk.forward(x)
        return self.head.forward(ad.reshape(x, (x.data.shape[0], -1)))


def build_classifier(seed=CLF_SEED):
    blocks = []
    ic = 3
    for i, oc in enumerate(_CLF_FILTERS):
        gen = rng.stream(seed, f"clf.init.{i}")
        w = layers.init_weight(gen, (oc, ic, 4, 4))
        blocks.append(layers.ConvBlock(w, layers.init_bias(oc), transposed=False,
                                       act="lrelu", spectral=False))
        ic = oc
    side = synthworld.RES >> len(_CLF_FILTERS)
    head = layers.dense(rng.stream(seed, "clf.init.head"), ic * side * side, 2, act="sigmoid")
    return AttributeClassifier(blocks, head, seed=seed)


def classify(clf, images, chunk=256):
    """Probabilities [n, 2] for (A mark present, B mark present)."""
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    out = np.empty((arr.shape[0], 2), dtype=np.float32)
    with ad.no_grad():
        for lo in range(0, arr.shape[0], chunk):
            out[lo:lo + chunk] = clf.forward(Tensor(arr[lo:lo + chunk])).data
    return out


def head_accuracy(clf, images, a_present, b_present):
    """Per-head 0/1 accuracy at the 0.5 threshold."""
    pred = classify(clf, images) >= 0.5
    return (float(np.mean(pred[:, 0] == a_present)),
            float(np.mean(pred[:, 1] == b_present)))


# --- classifier training set: all four presence combinations ---


@dataclass
class _LabeledSet:
    images: np.ndarray
    a_present: np.ndarray  # bool
    b_present: np.ndarray


def _render_combo(gen, n, with_a, with_b):
    out = np.empty((n, 3, synthworld.RES, synthworld.RES), dtype=np.float32)
    for i in range(n):
        f = synthworld.FactorSpec(
            int(gen.integers(synthworld.N_HUE)), int(gen.integers(synthworld.N_POS)),
            int(gen.integers(synthworld.N_POS)), int(gen.integers(synthworld.N_SIZE)),
            a_style=int(gen.integers(synthworld.N_STYLE)) if with_a else None,
            b_style=int(gen.integers(synthworld.N_STYLE)) if with_b else None)
        out[i] = synthworld.render(f)
    return out


def combo_set(world, seed, tag, n_per_combo):
    """n_per_combo samples of each presence combination, shuffled.

    Pure-domain quarters come from the world banks, mixed quarters from
    fresh renders; every image carries exact presence labels.
    """
    gen = rng.stream(seed, tag)
    n = n_per_combo
    idx_a = gen.integers(0, synthworld.N_PER_DOMAIN, size=n)
    idx_b = gen.integers(0, synthworld.N_PER_DOMAIN, size=n)
    parts = [world.bank_a.batch(idx_a), world.bank_b.batch(idx_b),
             _render_combo(gen, n, True, True), _render_combo(gen, n, False, False)]
    a_lab = np.concatenate([np.ones(n, bool), np.zeros(n, bool), np.ones(n, bool), np.zeros(n, bool)])
    b_lab = np.concatenate([np.zeros(n, bool), np.ones(n, bool), np.ones(n, bool), np.zeros(n, bool)])
    images = np.concatenate(parts, axis=0)
    perm = gen.permutation(4 * n)
    return _LabeledSet(images[perm], a_lab[perm], b_lab[perm])


def _bce_mean(p, labels):
    """Mean binary cross entropy with per-sample labels (natural log)."""
    y = labels.astype(np.float32)
    phat = ad.clamp(p, objective.P_CLAMP, 1.0 - objective.P_CLAMP)
    good = ad.add(ad.mul(Tensor(y), ad.log(phat)),
                  ad.mul(Tensor(1.0 - y), ad.log(1.0 - phat)))
    return ad.mul(ad.mean(good), -1.0)


def fit_classifier(clf, train_set, holdout_set, *, max_steps=2000, batch=64,
                   check_every=100, stop_at=0.995, lr=1e-3):
    """Adam loop with a fixed evaluation cadence; no accuracy gate.

    Stops at the first checkpoint where both held-out heads reach
    stop_at. Returns the final held-out (acc_a, acc_b).
    """
    opt = trainer.Adam(clf.params(), lr=lr, beta1=0.9)
    order = rng.stream(clf.seed, "clf.order")
    labels = np.stack([train_set.a_present, train_set.b_present], axis=1)
    for step in range(1, max_steps + 1):
        idx = order.integers(0, train_set.images.shape[0], size=batch)
        ad.zero_grads(opt.params)
        with ad.Tape() as tape:
            p = clf.forward(Tensor(train_set.images[idx]))
            loss = _bce_mean(p, labels[idx])
        ad.backward(tape, loss)
        opt.step()
        clf.steps = step
        if step % check_every == 0:
            acc = head_accuracy(clf, holdout_set.images, holdout_set.a_present,
                                holdout_set.b_present)
            if min(acc) >= stop_at:
                break
    clf.holdout_accuracy = head_accuracy(clf, holdout_set.images, holdout_set.a_present,
                                         holdout_set.b_present)
    return clf.holdout_accuracy


def train_classifier(world=None, *, seed=CLF_SEED, n_per_combo=2048, max_steps=2000,
                     batch=64, gate=0.98):
    """Pretrains the scoring oracle and enforces the 0.98 gate.

    The held-out set holds n_per_combo (default 2048) samples per
    presence combination, so each pure domain contributes at least 2k.
    """
    world = world if world is not None else synthworld.World()
    train_set = combo_set(world, seed, "clf.train", n_per_combo)
    holdout_set = combo_set(world, seed, "clf.holdout", n_per_combo)
    clf = build_classifier(seed)
    acc = fit_classifier(clf, train_set, holdout_set, max_steps=max_steps, batch=batch)
    if min(acc) < gate:
        raise RuntimeError(
            f"classifier failed the oracle gate after {clf.steps} steps: held-out "
            f"accuracy A={acc[0]:.4f} B={acc[1]:.4f}, both must reach {gate}")
    return clf


def _require_oracle(clf, gate=0.98):
    if min(clf.holdout_accuracy) < gate:
        raise ValueError(
            f"classifier below the oracle gate: held-out accuracy "
            f"{clf.holdout_accuracy}, need {gate} per head")


# --- classifier persistence (same container format as model checkpoints) ---


def _clf_blocks(clf):
    out = []
    for blk in clf.blocks:
        out.append(blk.weight.data)
        out.append(blk.bias.data)
    out.append(clf.head.weight.data)
    out.append(clf.head.bias.data)
    return out


def save_classifier(clf, path):
    manifest = {
        "format": model.FORMAT,
        "kind": "classifier",
        "seed": str(clf.seed),
        "filters": ",".join(str(c) for c in _CLF_FILTERS),
        "steps": str(clf.steps),
        "holdout_a": repr(float(clf.holdout_accuracy[0])),
        "holdout_b": repr(float(clf.holdout_accuracy[1])),
    }
    blocks = _clf_blocks(clf)
    manifest["blocks"] = str(len(blocks))
    with open(path, "wb") as f:
        for k, v in manifest.items():
            f.write(f"{k}={v}\n".encode())
        f.write(b"---\n")
        for arr in blocks:
            model._write_block(f, arr)


def load_classifier(path):
    with open(path, "rb") as f:
        manifest = model.read_manifest(f)
        if manifest.get("format") != model.FORMAT:
            raise ValueError(f"classifier checkpoint: unknown format {manifest.get('format')!r}")
        if manifest.get("kind") != "classifier":
            raise ValueError(f"classifier checkpoint: kind={manifest.get('kind')!r}, "
                             f"expected 'classifier'")
        clf = build_classifier(int(manifest.get("seed", "0")))
        slots = [(f"block[{i}]", arr) for i, arr in enumerate(_clf_blocks(clf))]
        if int(manifest["blocks"]) != len(slots):
            raise ValueError(f"classifier checkpoint: {manifest['blocks']} blocks, "
                             f"expected {len(slots)}")
        for label, proto in slots:
            arr = model._read_block(f, label)
            if arr.size != proto.size:
                raise ValueError(f"classifier checkpoint: {label} has {arr.size} floats, "
                                 f"expected {proto.size}")
            proto[...] = arr.reshape(proto.shape)
        if f.read(1):
            raise ValueError("classifier checkpoint: trailing bytes")
    clf.steps = int(manifest.get("steps", "0"))
    clf.holdout_accuracy = (float(manifest.get("holdout_a", "0")),
                            float(manifest.get("holdout_b", "0")))
    return clf


# --- translation scoring ---


@dataclass
class TranslationResult:
    a_to_b: float  # headline, per-condition mean, percent
    b_to_a: float
    strict_a_to_b: float  # conjunction: source mark absent AND guide mark present
    strict_b_to_a: float
    n_pairs: int

    def csv(self):
        head = "a_to_b,b_to_a,strict_a_to_b,strict_b_to_a,n_pairs"
        row = (f"{self.a_to_b!r},{self.b_to_a!r},{self.strict_a_to_b!r},"
               f"{self.strict_b_to_a!r},{self.n_pairs}")
        return head + "\n" + row + "\n"


def _model_translate(m, src, guide, direction, chunk):
    fn = model.translate_a_to_b if direction == "ab" else model.translate_b_to_a
    out = np.empty_like(src)
    with ad.no_grad():
        for lo in range(0, src.shape[0], chunk):
            out[lo:lo + chunk] = fn(m, Tensor(src[lo:lo + chunk]),
                                    Tensor(guide[lo:lo + chunk])).data
    return out


def _score(clf, images, want_a, want_b):
    pred = classify(clf, images) >= 0.5
    ok_a = pred[:, 0] == want_a
    ok_b = pred[:, 1] == want_b
    headline = 100.0 * float(np.mean(0.5 * ok_a + 0.5 * ok_b))
    strict = 100.0 * float(np.mean(ok_a & ok_b))
    return headline, strict


def translation_accuracy(m, clf, n_pairs=512, seed=0, world=None, chunk=64,
                         translate_fn=None):
    """Scores guided translation in both directions on held-out pairs.

    Deterministic in (m, clf, seed, n_pairs). Pairs are drawn from
    evaluation substreams disjoint from the training data streams.
    translate_fn(src, guide, direction) overrides the model's translator
    (used for oracle and null baselines).
    """
    _require_oracle(clf)
    if n_pairs < 1:
        raise ValueError(f"n_pairs must be >= 1, got {n_pairs}")
    world = world if world is not None else synthworld.World()
    fn = translate_fn if translate_fn is not None else (
        lambda src, guide, direction: _model_translate(m, src, guide, direction, chunk))
    idx_a = rng.stream(seed, "eval.pairs.a").integers(0, synthworld.N_PER_DOMAIN, size=n_pairs)
    idx_b = rng.stream(seed, "eval.pairs.b").integers(0, synthworld.N_PER_DOMAIN, size=n_pairs)
    a = world.bank_a.batch(idx_a)
    b = world.bank_b.batch(idx_b)
    ab, strict_ab = _score(clf, fn(a, b, "ab"), want_a=False, want_b=True)
    ba, strict_ba = _score(clf, fn(b, a, "ba"), want_a=True, want_b=False)
    return TranslationResult(ab, ba, strict_ab, strict_ba, n_pairs)


# --- ablation sweep ---


VARIANTS = (("all", {}),
            ("no_zero", {"disable_zero": True}),
            ("no_adv", {"disable_adv": True}),
            ("no_recon", {"disable_recon": True}))


@dataclass
class AblationResult:
    variant: str
    a_to_b: float = float("nan")
    b_to_a: float = float("nan")
    strict_a_to_b: float = float("nan")
    strict_b_to_a: float = float("nan")
    error: str = ""


def ablation_csv(results):
    lines = ["variant,a_to_b,b_to_a,strict_a_to_b,strict_b_to_a,error"]
    for r in results:
        if r.error:
            lines.append(f"{r.variant},,,,,{r.error}")
        else:
            lines.append(f"{r.variant},{r.a_to_b!r},{r.b_to_a!r},"
                         f"{r.strict_a_to_b!r},{r.strict_b_to_a!r},")
    return "\n".join(lines) + "\n"


def ablation_text(results):
    rows = [("variant", "A->B", "B->A", "strict A->B", "strict B->A")]
    for r in results:
        if r.error:
            rows.append((r.variant, "failed", "failed", "failed", r.error))
        else:
            rows.append((r.variant, f"{r.a_to_b:.1f}", f"{r.b_to_a:.1f}",
                         f"{r.strict_a_to_b:.1f}", f"{r.strict_b_to_a:.1f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    out = []
    for row in rows:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(out) + "\n"


def run_ablation(cfg, clf=None, n_pairs=512, eval_seed=0, world=None, progress=None,
                 train_fn=None):
    """Trains the four loss variants under identical budgets and scores each.

    Variant runs land in <cfg.out_dir>/<variant>; the comparison table is
    written to <cfg.out_dir>/ablation.{csv,txt}. A failed variant is
    recorded in its row and the sweep continues.
    """
    world = world if world is not None else synthworld.World()
    clf = clf if clf is not None else train_classifier(world)
    fit = train_fn if train_fn is not None else trainer.train
    os.makedirs(cfg.out_dir, exist_ok=True)
    results = []
    for name, flags in VARIANTS:
        vcfg = replace(cfg, out_dir=os.path.join(cfg.out_dir, name), **flags)
        try:
            m = fit(vcfg, progress=progress)
            score = translation_accuracy(m, clf, n_pairs, eval_seed, world)
            results.append(AblationResult(name, score.a_to_b, score.b_to_a,
                                          score.strict_a_to_b, score.strict_b_to_a))
        except Exception as e:
            results.append(AblationResult(name, error=f"{type(e).__name__}: {e}"))
    with open(os.path.join(cfg.out_dir, "ablation.csv"), "w") as f:
        f.write(ablation_csv(results))
    with open(os.path.join(cfg.out_dir, "ablation.txt"), "w") as f:
        f.write(ablation_text(results))
    return results
