"""Training losses and their weighted combination.

Conventions (fixed):
  - L1 terms sum absolute values over all elements of a sample's code or
    image and average over the batch.
  - bce uses natural log on probabilities clamped to [1e-7, 1 - 1e-7], so
    bce(0, 1) = bce(1, 0) = -ln(1e-7) ~= 16.118.
  - The encoder-side adversarial loss labels BOTH domains 1, verbatim; the
    B-term exerts no pressure beyond the discriminator's own objective. Set
    include_b_term=False for the variant that drops it.
  - The discriminator loss labels A-codes 0 and B-codes 1; the trainer is
    responsible for detaching codes before the discriminator phase.

The full objective is L = L_zero + lambda1 * L_adv + lambda2 * L_recon with
lambda1 = 0.001 and lambda2 = 1 by default, where L_recon is the sum of the
per-side recon_loss terms and L_zero the sum of the per-side zero terms.
"""

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import ShapeError

P_CLAMP = 1e-7


@dataclass
class LossWeights:
    lambda1: float = 0.001
    lambda2: float = 1.0

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ValueError(f"loss weights must be positive, got {self.lambda1}, {self.lambda2}")


@dataclass
class LossReport:
    zero_a: float
    zero_b: float
    adv: float
    disc: float
    recon_a: float
    recon_b: float
    total: float


def make_report(zero_a, zero_b, adv, disc, recon_a, recon_b, w):
    """Assembles a LossReport; total recomputed in float64 so the identity
    total = (zero_a+zero_b) + lambda1*adv + lambda2*(recon_a+recon_b) is exact."""
    total = (zero_a + zero_b) + w.lambda1 * adv + w.lambda2 * (recon_a + recon_b)
    return LossReport(zero_a, zero_b, adv, disc, recon_a, recon_b, total)


def _require_batch(x, op):
    if x.data.ndim < 1 or x.data.shape[0] == 0:
        raise ValueError(f"{op}: empty batch")


def l1_batch_mean(codes):
    """Mean over the batch of the per-sample L1 norm (sum of |elements|)."""
    _require_batch(codes, "l1_batch_mean")
    return ad.sum_(ad.abs_(codes)) / codes.data.shape[0]


def zero_loss(sep_a_of_b, sep_b_of_a):
    """L_zero: E_sA should vanish on B samples, E_sB on A samples."""
    return ad.add(l1_batch_mean(sep_a_of_b), l1_batch_mean(sep_b_of_a))


def bce(p, q):
    """Elementwise binary cross entropy against the constant label q."""
    if q not in (0, 1, 0.0, 1.0):
        raise ValueError(f"bce: label must be 0 or 1, got {q!r}")
    phat = ad.clamp(p, P_CLAMP, 1.0 - P_CLAMP)
    if q:
        return -ad.log(phat)
    return -ad.log(1.0 - phat)


def adv_loss_encoder(d_out_a, d_out_b, include_b_term=True):
    """Encoder side of the latent game: both domains labeled 1."""
    _require_batch(d_out_a, "adv_loss_encoder")
    _require_batch(d_out_b, "adv_loss_encoder")
    a_term = ad.mean(bce(d_out_a, 1))
    if not include_b_term:
        return a_term
    return ad.add(a_term, ad.mean(bce(d_out_b, 1)))


def adv_loss_discriminator(d_out_a, d_out_b):
    """Discriminator side: A-codes toward 0, B-codes toward 1."""
    _require_batch(d_out_a, "adv_loss_discriminator")
    _require_batch(d_out_b, "adv_loss_discriminator")
    return ad.add(ad.mean(bce(d_out_a, 0)), ad.mean(bce(d_out_b, 1)))


def recon_loss(recon, target):
    """Mean over the batch of summed absolute pixel differences (one side)."""
    if recon.data.shape != target.data.shape:
        raise ShapeError(
            f"recon_loss: shape mismatch {recon.data.shape} vs {target.data.shape}")
    _require_batch(recon, "recon_loss")
    return l1_batch_mean(ad.sub(recon, target))


def combine(zero, adv, recon, w):
    """Graph-side weighted total over scalar loss tensors."""
    return ad.add(zero, ad.add(adv * w.lambda1, recon * w.lambda2))


def total_loss(components, w):
    """Report-side weighted total (plain float arithmetic)."""
    zero = components.zero_a + components.zero_b
    recon = components.recon_a + components.recon_b
    return zero + w.lambda1 * components.adv + w.lambda2 * recon
