"""A fully known two-domain image world with discrete factors.

Common factors z_c: hue (8) x grid position (4x4) x size (2) paint a filled
disc on a black background; 256 combinations, 8 bits. Domain A additionally
draws a frame ring around the image border (4 styles, 2 bits); domain B
draws a stripe band near the bottom (4 styles). The ring and band occupy
reserved pixel regions that are disjoint from each other and from every
possible disc, so each mark is a pure function of its own factor and two
images with equal z_c agree everywhere outside the reserved regions.

Because factors are discrete and the renderer is injective per domain, the
world's true codes (e_c label in [0, 256), style labels in [0, 4)) support
exact entropy and mutual-information bookkeeping.
"""

import colorsys
import csv
import os
from dataclasses import dataclass

import numpy as np

from . import ppm, rng

RES = 32
N_HUE, N_POS, N_SIZE, N_STYLE = 8, 4, 2, 4
N_COMMON = N_HUE * N_POS * N_POS * N_SIZE  # 256
N_PER_DOMAIN = N_COMMON * N_STYLE  # 1024

_BG = -1.0
_RADII = (3, 5)
_CY = (7, 11, 15, 19)
_CX = (7, 12, 17, 22)

_FRAME_W = 2
_BAND_ROWS = slice(26, 30)
_BAND_COLS = slice(4, 28)

_WHITE = (1.0, 1.0, 1.0)
_YELLOW = (1.0, 1.0, -1.0)
_CYAN = (-1.0, 1.0, 1.0)
_MAGENTA = (1.0, -1.0, 1.0)


def _hue_rgb(i):
    r, g, b = colorsys.hsv_to_rgb(i / N_HUE, 1.0, 1.0)
    return tuple(2.0 * v - 1.0 for v in (r, g, b))


HUES = tuple(_hue_rgb(i) for i in range(N_HUE))


def _masks():
    idx = np.arange(RES)
    ring = (idx[:, None] < _FRAME_W) | (idx[:, None] >= RES - _FRAME_W) \
        | (idx[None, :] < _FRAME_W) | (idx[None, :] >= RES - _FRAME_W)
    band = np.zeros((RES, RES), dtype=bool)
    band[_BAND_ROWS, _BAND_COLS] = True
    band &= ~ring
    return ring, band


RING_MASK, BAND_MASK = _masks()
COMMON_MASK = ~(RING_MASK | BAND_MASK)


@dataclass(frozen=True)
class FactorSpec:
    hue: int
    px: int
    py: int
    size: int
    a_style: object = None  # int in [0,4) or None (absent)
    b_style: object = None

    def __post_init__(self):
        if not (0 <= self.hue < N_HUE and 0 <= self.px < N_POS and 0 <= self.py < N_POS
                and 0 <= self.size < N_SIZE):
            raise ValueError(f"common factors out of range: {self}")
        for s in (self.a_style, self.b_style):
            if s is not None and not (0 <= s < N_STYLE):
                raise ValueError(f"style out of range: {self}")

    @property
    def domain(self):
        """'A' or 'B' for the two training domains, else 'out-of-domain'."""
        if self.a_style is not None and self.b_style is None:
            return "A"
        if self.b_style is not None and self.a_style is None:
            return "B"
        return "out-of-domain"


@dataclass(frozen=True)
class SyntheticSample:
    image: np.ndarray
    factors: FactorSpec
    domain: str


def common_label(f):
    """Canonical z_c index in [0, 256)."""
    return ((f.hue * N_POS + f.px) * N_POS + f.py) * N_SIZE + f.size


def common_from_label(label):
    label, size = divmod(label, N_SIZE)
    label, py = divmod(label, N_POS)
    hue, px = divmod(label, N_POS)
    return hue, px, py, size


def ground_truth_codes(s):
    """(e_c label, e_sA label or None, e_sB label or None)."""
    f = s.factors
    return common_label(f), f.a_style, f.b_style


def _paint_ring(img, style):
    r = np.where(RING_MASK)
    if style == 0:
        color = np.array(_WHITE)[:, None]
    elif style == 1:
        color = np.array(_YELLOW)[:, None]
    elif style == 2:
        checker = (r[0] + r[1]) % 2 == 0
        color = np.where(checker[None, :], np.array(_WHITE)[:, None], _BG)
    else:
        phase = ((r[0] + r[1]) // 2) % 2 == 0
        color = np.where(phase[None, :], np.array(_YELLOW)[:, None], np.array(_CYAN)[:, None])
    img[:, RING_MASK] = color


def _paint_band(img, style):
    r = np.where(BAND_MASK)
    if style == 0:
        color = np.array(_WHITE)[:, None]
    elif style == 1:
        color = np.array(_MAGENTA)[:, None]
    elif style == 2:
        bars = (r[1] % 4) < 2
        color = np.where(bars[None, :], np.array(_WHITE)[:, None], _BG)
    else:
        rows = r[0] % 2 == 0
        color = np.where(rows[None, :], np.array(_MAGENTA)[:, None], np.array(_WHITE)[:, None])
    img[:, BAND_MASK] = color


def render(f):
    """Deterministic [3, 32, 32] float32 image in [-1, 1]."""
    img = np.full((3, RES, RES), _BG, dtype=np.float32)
    cy, cx, rad = _CY[f.py], _CX[f.px], _RADII[f.size]
    yy, xx = np.ogrid[:RES, :RES]
    disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= rad * rad
    img[:, disc] = np.array(HUES[f.hue], dtype=np.float32)[:, None]
    if f.a_style is not None:
        _paint_ring(img, f.a_style)
    if f.b_style is not None:
        _paint_band(img, f.b_style)
    return img


def enumerate_domain(domain):
    """All 1024 FactorSpecs of one domain, in canonical order
    (common_label major, style minor)."""
    if domain not in ("A", "B"):
        raise ValueError(f"domain must be 'A' or 'B', got {domain!r}")
    out = []
    for label in range(N_COMMON):
        hue, px, py, size = common_from_label(label)
        for style in range(N_STYLE):
            if domain == "A":
                out.append(FactorSpec(hue, px, py, size, a_style=style))
            else:
                out.append(FactorSpec(hue, px, py, size, b_style=style))
    return out


class DomainBank:
    """All renders of one domain, index = common_label * 4 + style."""

    def __init__(self, domain):
        self.domain = domain
        self.factors = enumerate_domain(domain)
        self.images = np.stack([render(f) for f in self.factors])

    def batch(self, idx):
        return self.images[np.asarray(idx)]


class World:
    """Both domain banks, rendered once."""

    def __init__(self):
        self.bank_a = DomainBank("A")
        self.bank_b = DomainBank("B")

    def bank(self, domain):
        return self.bank_a if domain == "A" else self.bank_b


def sample_domain(domain, gen):
    """One uniform i.i.d. sample; factors independent by construction."""
    if domain not in ("A", "B"):
        raise ValueError(f"domain must be 'A' or 'B', got {domain!r}")
    style = int(gen.integers(N_STYLE))
    f = FactorSpec(int(gen.integers(N_HUE)), int(gen.integers(N_POS)), int(gen.integers(N_POS)),
                   int(gen.integers(N_SIZE)),
                   a_style=style if domain == "A" else None,
                   b_style=style if domain == "B" else None)
    return SyntheticSample(render(f), f, domain)


def sample_indices(domain, seed, step, n):
    """Deterministic bank indices for one training batch."""
    return rng.stream(seed, f"data.{domain.lower()}", step).integers(0, N_PER_DOMAIN, size=n)


# --- renderer-region probes (exact on rendered images) ---


def _style_templates(paint, mask):
    out = []
    for style in range(N_STYLE):
        img = np.full((3, RES, RES), _BG, dtype=np.float32)
        paint(img, style)
        out.append(img[:, mask].ravel())
    out.append(np.full_like(out[0], _BG))  # absent
    return np.stack(out)


_A_TEMPLATES = _style_templates(_paint_ring, RING_MASK)
_B_TEMPLATES = _style_templates(_paint_band, BAND_MASK)


def _common_templates():
    out = []
    for label in range(N_COMMON):
        hue, px, py, size = common_from_label(label)
        img = render(FactorSpec(hue, px, py, size))
        out.append(img[:, COMMON_MASK].ravel())
    return np.stack(out)


_C_TEMPLATES = _common_templates()


def _nearest(patches, templates):
    # argmin_j sum |patch_i - template_j|, chunked to bound memory
    n = patches.shape[0]
    out = np.empty(n, dtype=np.int64)
    chunk = max(1, (1 << 22) // max(templates.size, 1))
    for lo in range(0, n, chunk):
        part = patches[lo : lo + chunk]
        d = np.abs(part[:, None, :] - templates[None, :, :]).sum(axis=2)
        out[lo : lo + chunk] = np.argmin(d, axis=1)
    return out


def _as_batch(images):
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1] != 3 or arr.shape[2:] != (RES, RES):
        raise ValueError(f"probe: expected [n, 3, {RES}, {RES}] images, got {arr.shape}")
    return arr


def probe_a_style(images):
    """Nearest-template A-mark labels; N_STYLE means 'absent'."""
    arr = _as_batch(images)
    return _nearest(arr[:, :, RING_MASK].reshape(arr.shape[0], -1), _A_TEMPLATES)


def probe_b_style(images):
    arr = _as_batch(images)
    return _nearest(arr[:, :, BAND_MASK].reshape(arr.shape[0], -1), _B_TEMPLATES)


def probe_common(images):
    """Nearest-template z_c labels over the unreserved region."""
    arr = _as_batch(images)
    return _nearest(arr[:, :, COMMON_MASK].reshape(arr.shape[0], -1), _C_TEMPLATES)


ABSENT = N_STYLE  # probe label for "no mark"


# --- dataset generation (gen-data CLI backend) ---


def generate_dataset(out_dir, n_per_domain, seed):
    """Writes <out_dir>/{aNNNNN,bNNNNN}.ppm and factors.csv; returns rows."""
    os.makedirs(out_dir, exist_ok=True)
    gen = rng.stream(seed, "gen-data")
    rows = []
    for domain in ("A", "B"):
        for i in range(n_per_domain):
            s = sample_domain(domain, gen)
            sample_id = f"{domain.lower()}{i:05d}"
            ppm.write_ppm(os.path.join(out_dir, sample_id + ".ppm"), s.image)
            f = s.factors
            rows.append({
                "sample_id": sample_id,
                "domain": domain,
                "hue": f.hue, "px": f.px, "py": f.py, "size": f.size,
                "a_style": "" if f.a_style is None else f.a_style,
                "b_style": "" if f.b_style is None else f.b_style,
            })
    with open(os.path.join(out_dir, "factors.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return rows
