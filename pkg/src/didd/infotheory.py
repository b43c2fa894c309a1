"""Plug-in information estimators and the disentanglement report.

Entropies are Shannon entropies in bits (log2, 0*log 0 := 0) of empirical
label distributions; mutual information is H(X) + H(Y) - H(X,Y) from the
joint histogram. Estimators are maximum-likelihood with no bias correction;
sample sizes are chosen so the bias stays well under decision thresholds.

Continuous learned codes are bridged to discrete labels by per-dimension
equal-frequency binning of the top-variance dimensions (quantize_codes),
an approximation noted in every report that uses it: the entropy of a
quantized continuous code upper-bounds nothing about the underlying
representation; thresholds below are calibrated for the quantized values.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from . import rng
from .autodiff import Tensor
from .synthworld import common_label


@dataclass
class DiscreteDistribution:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 1 or np.any(c < 0):
            raise ValueError("DiscreteDistribution: counts must be a 1-D non-negative array")
        self.counts = c

    @classmethod
    def from_labels(cls, labels):
        labels = np.asarray(labels)
        if labels.size == 0:
            raise ValueError("DiscreteDistribution: empty label sequence")
        _, counts = np.unique(labels, return_counts=True)
        return cls(counts)

    @property
    def n(self):
        return int(self.counts.sum())


def _entropy_bits(counts):
    counts = np.sort(np.asarray(counts, dtype=np.int64))
    counts = counts[counts > 0]
    n = counts.sum()
    if n == 0:
        raise ValueError("entropy: empty distribution")
    p = counts / n
    return float(-np.sum(p * np.log2(p)))


def entropy(d):
    """Plug-in Shannon entropy in bits of a DiscreteDistribution."""
    if isinstance(d, DiscreteDistribution):
        return _entropy_bits(d.counts)
    return _entropy_bits(np.asarray(d))


def entropy_of_labels(labels):
    return entropy(DiscreteDistribution.from_labels(labels))


def mutual_information(x_labels, y_labels):
    """Plug-in MI in bits; exactly symmetric (counts are sorted before
    summation so the float result is order-independent)."""
    x = np.asarray(x_labels)
    y = np.asarray(y_labels)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"mutual_information: label shapes differ: {x.shape} vs {y.shape}")
    if x.size == 0:
        raise ValueError("mutual_information: empty label sequences")
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    ny = int(yi.max()) + 1
    joint = np.bincount(xi * ny + yi)
    hx = _entropy_bits(np.bincount(xi))
    hy = _entropy_bits(np.bincount(yi))
    hxy = _entropy_bits(joint)
    return hx + hy - hxy


def quantize_codes(codes, k, v=4):
    """Labels codes by equal-frequency bin tuples of top-variance dims.

    codes: [n, ...] real array, flattened per sample. Each of the v highest
    variance dimensions is binned into k equal-frequency bins; the label is
    the mixed-radix encoding of the bin tuple. Constant dimensions collapse
    into a single bin (warned, since they carry no information).
    """
    arr = np.asarray(codes, dtype=np.float64).reshape(len(codes), -1)
    if k < 2:
        raise ValueError(f"quantize_codes: need k >= 2 bins, got {k}")
    if v < 1 or arr.shape[1] < 1:
        raise ValueError("quantize_codes: need at least one dimension")
    var = arr.var(axis=0)
    order = np.argsort(-var, kind="stable")[: min(v, arr.shape[1])]
    labels = np.zeros(len(arr), dtype=np.int64)
    constant = []
    for dim in order:
        x = arr[:, dim]
        if var[dim] == 0.0:
            constant.append(int(dim))
            bins = np.zeros(len(arr), dtype=np.int64)
        else:
            edges = np.quantile(x, np.arange(1, k) / k)
            bins = np.searchsorted(edges, x, side="right")
        labels = labels * k + bins
    if constant:
        warnings.warn(f"quantize_codes: constant dimensions {constant} carry no information",
                      RuntimeWarning)
    return labels


def probe_accuracy(codes, target_labels, seed=0):
    """Held-out nearest-class-centroid accuracy (80/20 split, fixed seed)."""
    arr = np.asarray(codes, dtype=np.float64).reshape(len(codes), -1)
    labels = np.asarray(target_labels)
    if len(arr) != len(labels):
        raise ValueError(f"probe_accuracy: {len(arr)} codes vs {len(labels)} labels")
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("probe_accuracy: need at least 2 classes")
    perm = rng.stream(seed, "probe.split").permutation(len(arr))
    cut = int(0.8 * len(arr))
    tr, te = perm[:cut], perm[cut:]
    missing = np.setdiff1d(classes, np.unique(labels[tr]))
    if missing.size:
        raise ValueError(f"probe_accuracy: classes {missing.tolist()} absent from training split")
    centroids = np.stack([arr[tr][labels[tr] == c].mean(axis=0) for c in classes])
    d = ((arr[te][:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    pred = classes[np.argmin(d, axis=1)]
    return float(np.mean(pred == labels[te]))


@dataclass
class DisentanglementReport:
    n: int
    mi_common_sepA: float
    normalized_mi: float
    h_common_learned: float
    h_common_true: float
    h_sepA_learned: float
    h_sepA_true: float
    probe_common_from_learned_common: float
    probe_aFactor_from_learned_common: float
    probe_chance_aFactor: float
    recon_l1_per_pixel: float
    epsilon_budget: float
    quantize_k: int
    quantize_v: int
    unreliable: bool
    checks: dict = field(default_factory=dict)

    def to_text(self):
        lines = []
        for k, v in self.as_fields():
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    def as_fields(self):
        out = []
        for name in ("n", "mi_common_sepA", "normalized_mi", "h_common_learned",
                     "h_common_true", "h_sepA_learned", "h_sepA_true",
                     "probe_common_from_learned_common", "probe_aFactor_from_learned_common",
                     "probe_chance_aFactor", "recon_l1_per_pixel", "epsilon_budget",
                     "quantize_k", "quantize_v", "unreliable"):
            v = getattr(self, name)
            out.append((name, repr(v) if isinstance(v, float) else str(v)))
        for k, v in sorted(self.checks.items()):
            out.append((f"check_{k}", str(v)))
        return out

    def csv_header(self):
        return ",".join(k for k, _ in self.as_fields())

    def csv_row(self):
        return ",".join(v for _, v in self.as_fields())


def encode_arrays(m, images, batch=256):
    """Common and sep-A codes (flattened, float32) for a stack of images."""
    commons, seps = [], []
    for lo in range(0, len(images), batch):
        x = Tensor(images[lo : lo + batch])
        commons.append(model_mod.encode_common(m, x).data.reshape(x.data.shape[0], -1))
        seps.append(model_mod.encode_sep_a(m, x).data.reshape(x.data.shape[0], -1))
    return np.concatenate(commons), np.concatenate(seps)


def verify_theorem(m, world, n=5000, *, seed=0, k=8, v=4, eps=0.5,
                   mi_threshold=0.1, probe_threshold=0.9, chance_margin=0.1,
                   recon_threshold=0.1, encode_fn=None):
    """Measures the theorem's quantities on n i.i.d. domain-A samples.

    Checks reported (thresholds are artifact decisions, reported raw):
      mi:            I(qE_c; qE_sA) / H(qE_sA) < mi_threshold
      probe_common:  nearest-centroid z_c from E_c(a) >= probe_threshold
      probe_afactor: z_a from E_c(a) <= chance + chance_margin
      entropy:       H(qE_c) >= H(e_c) - eps
      premise:       H(qE_sA) <= H(e_sA) + eps (informational; quantization
                     of a continuous code inflates this entropy)

    encode_fn(images) -> (common, sep_a) substitutes the model's encoders;
    it exists so exact oracle representations can be pushed through the
    very same measurement path.
    """
    if n < 1:
        raise ValueError("verify_theorem: need n >= 1 samples")
    bank = world.bank_a if hasattr(world, "bank_a") else world
    idx = rng.stream(seed, "verify").integers(0, len(bank.factors), size=n)
    images = bank.images[idx]
    zc = np.array([common_label(bank.factors[i]) for i in idx])
    za = np.array([bank.factors[i].a_style for i in idx])

    if encode_fn is not None:
        common, sep_a = encode_fn(images)
    else:
        common, sep_a = encode_arrays(m, images)
    q_common = quantize_codes(common, k, v)
    q_sep = quantize_codes(sep_a, k, v)

    mi = mutual_information(q_common, q_sep)
    h_c = entropy_of_labels(q_common)
    h_s = entropy_of_labels(q_sep)
    norm_mi = mi / h_s if h_s > 0 else float("inf")

    acc_c = probe_accuracy(common, zc, seed=seed)
    acc_a = probe_accuracy(common, za, seed=seed)
    chance = 1.0 / len(np.unique(za))

    h_c_true = np.log2(len(np.unique([common_label(f) for f in bank.factors])))
    h_s_true = np.log2(len(np.unique([f.a_style for f in bank.factors])))

    if m is not None:
        sub = images[: min(n, 512)]
        rec = model_mod.reconstruct_a(m, Tensor(sub))
        recon_l1 = float(np.mean(np.abs(rec.data - sub)))
    else:
        recon_l1 = float("nan")

    checks = {
        "mi": bool(norm_mi < mi_threshold),
        "probe_common": bool(acc_c >= probe_threshold),
        "probe_afactor": bool(acc_a <= chance + chance_margin),
        "entropy": bool(h_c >= float(h_c_true) - eps),
        "premise": bool(h_s <= float(h_s_true) + eps),
    }
    return DisentanglementReport(
        n=n, mi_common_sepA=mi, normalized_mi=norm_mi,
        h_common_learned=h_c, h_common_true=float(h_c_true),
        h_sepA_learned=h_s, h_sepA_true=float(h_s_true),
        probe_common_from_learned_common=acc_c,
        probe_aFactor_from_learned_common=acc_a,
        probe_chance_aFactor=chance,
        recon_l1_per_pixel=recon_l1,
        epsilon_budget=eps, quantize_k=k, quantize_v=v,
        unreliable=bool(recon_l1 > recon_threshold) if np.isfinite(recon_l1) else False,
        checks=checks,
    )
