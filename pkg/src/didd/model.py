"""The five networks and their persistence.

A ModelBundle holds three encoders (common E_c, separate E_sA, E_sB), one
decoder G, and a latent discriminator d. Codes are spatial maps; the channel
budget satisfies common + 2*sep = C, the decoder's input width, and the
decoder consumes the concatenation (common, sep_a, sep_b) in that order.

Presets:
  desk   4 blocks, 32x32 input, C=128, sep=8   (default everywhere)
  paper  6 blocks, 128x128 input, C=512, sep=25

Filter schedules follow one rule per network: encoders double from 32 with
the common encoder ending at (C-sep, C-2*sep) and the separate encoders
capping at 128 before their sep-channel head; the decoder halves from C down
to 32 and finishes with a 3-channel tanh block.

Checkpoint format (external interface, stable):
  UTF-8 key=value lines, one per line, terminated by a line "---", then a
  binary payload of length-prefixed blocks: u32 little-endian float count
  followed by that many little-endian float32 values. Blocks appear in a
  fixed order: for each network e_common, e_sep_a, e_sep_b, g in block
  order: weight, bias, then u and sigma for spectral blocks; then for each
  dense discriminator layer: weight, bias. Optimizer moment blocks, when
  present (manifest key opt=1), follow in parameter order: m then v for
  every generator-side parameter, then the same for the discriminator.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import layers, rng
from .autodiff import ShapeError, Tensor

FORMAT = "didd-checkpoint-v1"


@dataclass
class Preset:
    name: str
    res: int
    n_blocks: int
    c_total: int
    sep: int
    ec_filters: tuple
    es_filters: tuple
    g_filters: tuple
    d_hidden: int = 512

    @property
    def code_hw(self):
        return self.res >> self.n_blocks

    @property
    def common_channels(self):
        return self.c_total - 2 * self.sep


_BASES = {"desk": (32, 4, 128, 8), "paper": (128, 6, 512, 25)}


def make_preset(name, sep=None):
    if name not in _BASES:
        raise ValueError(f"unknown preset {name!r}, expected one of {sorted(_BASES)}")
    res, nb, c, default_sep = _BASES[name]
    sep = default_sep if sep is None else int(sep)
    if sep < 1 or 2 * sep >= c:
        raise ValueError(f"sep={sep} out of range for preset {name} (C={c})")
    if name == "desk":
        # intermediate widths tuned for the single-core step budget; the
        # bottleneck splits (c - 2*sep common, sep per side) are fixed
        ec = (24, 48, 96, c - 2 * sep)
        es = (16, 32, 64, sep)
        g = (c, 48, 32, 3)
    else:
        ec = tuple(32 << i for i in range(nb - 2)) + (c - sep, c - 2 * sep)
        es = tuple(min(32 << i, 128) for i in range(nb - 1)) + (sep,)
        g = tuple(c >> i for i in range(nb - 1)) + (3,)
    assert g[-2] == 32, "decoder schedule must end ...32, 3"
    return Preset(name, res, nb, c, sep, ec, es, g)


@dataclass
class CodeTriple:
    common: Tensor
    sep_a: Tensor
    sep_b: Tensor


class ModelBundle:
    def __init__(self, preset, e_common, e_sep_a, e_sep_b, g, d, seed=0):
        self.preset = preset
        self.e_common = e_common
        self.e_sep_a = e_sep_a
        self.e_sep_b = e_sep_b
        self.g = g
        self.d = d
        self.seed = seed

    def _conv_nets(self):
        return (("e_common", self.e_common), ("e_sep_a", self.e_sep_a),
                ("e_sep_b", self.e_sep_b), ("g", self.g))

    def gen_params(self):
        out = []
        for _, net in self._conv_nets():
            for blk in net:
                out.extend(blk.params())
        return out

    def d_params(self):
        out = []
        for layer in self.d:
            out.extend(layer.params())
        return out

    def params(self):
        return self.gen_params() + self.d_params()

    def spectral_blocks(self):
        return [b for _, net in self._conv_nets() for b in net if b.spectral]

    def update_sigmas(self):
        """One power-iteration step on every spectral block (train path)."""
        for b in self.spectral_blocks():
            b.update_sigma()

    def refresh_sigmas(self):
        """Recompute sigmas without mutating u (inference after raw builds)."""
        for b in self.spectral_blocks():
            b.current_sigma()


def _encoder(gen_streams, filters):
    blocks = []
    ic = 3
    for i, oc in enumerate(filters):
        blocks.append(layers.down_block(gen_streams(i), ic, oc))
        ic = oc
    return blocks


def build_model(preset="desk", sep=None, seed=0):
    p = preset if isinstance(preset, Preset) else make_preset(preset, sep)

    def streams(net):
        return lambda i: rng.stream(seed, f"init.{net}.{i}")

    e_common = _encoder(streams("e_common"), p.ec_filters)
    e_sep_a = _encoder(streams("e_sep_a"), p.es_filters)
    e_sep_b = _encoder(streams("e_sep_b"), p.es_filters)

    g = []
    ic = p.c_total
    for i, oc in enumerate(p.g_filters):
        final = i == len(p.g_filters) - 1
        g.append(layers.up_block(rng.stream(seed, f"init.g.{i}"), ic, oc, final=final))
        ic = oc

    flat = p.common_channels * p.code_hw * p.code_hw
    d = [layers.dense(rng.stream(seed, "init.d.0"), flat, p.d_hidden, act="lrelu"),
         layers.dense(rng.stream(seed, "init.d.1"), p.d_hidden, 1, act="sigmoid")]

    m = ModelBundle(p, e_common, e_sep_a, e_sep_b, g, d, seed=seed)
    m.refresh_sigmas()
    return m


def _run_stack(blocks, x):
    for blk in blocks:
        x = blk.forward(x)
    return x


def _check_image(m, x, what):
    want = (3, m.preset.res, m.preset.res)
    if x.data.ndim != 4 or x.data.shape[1:] != want:
        raise ShapeError(f"{what}: expected [b, {want[0]}, {want[1]}, {want[2]}] images, got {x.data.shape}")


def encode_common(m, x):
    _check_image(m, x, "encode_common")
    return _run_stack(m.e_common, x)


def encode_sep_a(m, x):
    _check_image(m, x, "encode_sep_a")
    return _run_stack(m.e_sep_a, x)


def encode_sep_b(m, x):
    _check_image(m, x, "encode_sep_b")
    return _run_stack(m.e_sep_b, x)


def encode(m, x):
    _check_image(m, x, "encode")
    return CodeTriple(_run_stack(m.e_common, x), _run_stack(m.e_sep_a, x), _run_stack(m.e_sep_b, x))


def decode(m, codes):
    x = ad.concat([codes.common, codes.sep_a, codes.sep_b], axis=1)
    if x.data.shape[1] != m.preset.c_total:
        raise ShapeError(
            f"decode: code channels {x.data.shape[1]} != decoder input {m.preset.c_total}")
    s = m.preset.code_hw
    if x.data.shape[2:] != (s, s):
        raise ShapeError(f"decode: code spatial extent {x.data.shape[2:]} != ({s}, {s})")
    return _run_stack(m.g, x)


def zero_code(m, slot, batch=1):
    if slot not in ("a", "b"):
        raise ValueError(f"slot must be 'a' or 'b', got {slot!r}")
    s = m.preset.code_hw
    return Tensor(np.zeros((batch, m.preset.sep, s, s), dtype=np.float32))


def discriminate(m, common):
    b = common.data.shape[0]
    x = ad.reshape(common, (b, -1))
    for layer in m.d:
        x = layer.forward(x)
    return x


def translate_a_to_b(m, a, b_guide):
    """G(E_c(a), 0, E_sB(b_guide)): content from a, B-style from the guide."""
    common = encode_common(m, a)
    style = encode_sep_b(m, b_guide)
    return decode(m, CodeTriple(common, zero_code(m, "a", common.data.shape[0]), style))


def translate_b_to_a(m, b, a_guide):
    """G(E_c(b), E_sA(a_guide), 0): content from b, A-style from the guide."""
    common = encode_common(m, b)
    style = encode_sep_a(m, a_guide)
    return decode(m, CodeTriple(common, style, zero_code(m, "b", common.data.shape[0])))


def reconstruct_a(m, a):
    """G(E_c(a), E_sA(a), 0)."""
    common = encode_common(m, a)
    return decode(m, CodeTriple(common, encode_sep_a(m, a), zero_code(m, "b", common.data.shape[0])))


def reconstruct_b(m, b):
    """G(E_c(b), 0, E_sB(b))."""
    common = encode_common(m, b)
    return decode(m, CodeTriple(common, zero_code(m, "a", common.data.shape[0]), encode_sep_b(m, b)))


# --- checkpoint I/O ---


def _model_blocks(m):
    """(label, array) pairs in the documented fixed order."""
    out = []
    for net_name, net in m._conv_nets():
        for i, blk in enumerate(net):
            out.append((f"{net_name}.{i}.weight", blk.weight.data))
            out.append((f"{net_name}.{i}.bias", blk.bias.data))
            if blk.spectral:
                out.append((f"{net_name}.{i}.u", blk.u))
                out.append((f"{net_name}.{i}.sigma", np.array([blk.sigma], dtype=np.float32)))
    for i, layer in enumerate(m.d):
        out.append((f"d.{i}.weight", layer.weight.data))
        out.append((f"d.{i}.bias", layer.bias.data))
    return out


def _write_block(f, arr):
    a = np.ascontiguousarray(arr, dtype="<f4")
    f.write(struct.pack("<I", a.size))
    f.write(a.tobytes())


def _read_block(f, what):
    head = f.read(4)
    if len(head) != 4:
        raise ValueError(f"checkpoint: truncated payload at {what} (missing length prefix)")
    n = struct.unpack("<I", head)[0]
    pos = f.tell()
    end = f.seek(0, 2)
    f.seek(pos)
    if 4 * n > end - pos:
        raise ValueError(f"checkpoint: truncated payload at {what} (expected {n} floats)")
    return np.frombuffer(f.read(4 * n), dtype="<f4").copy()


def save_checkpoint(m, path, *, step=0, lambda1=0.001, lambda2=1.0,
                    extra=None, opt_blocks=None, opt_meta=None):
    manifest = {
        "format": FORMAT,
        "kind": "model",
        "preset": m.preset.name,
        "sep": str(m.preset.sep),
        "seed": str(m.seed),
        "step": str(step),
        "lambda1": repr(float(lambda1)),
        "lambda2": repr(float(lambda2)),
    }
    if extra:
        manifest.update({k: str(v) for k, v in extra.items()})
    blocks = _model_blocks(m)
    n_opt = len(opt_blocks) if opt_blocks else 0
    manifest["blocks"] = str(len(blocks) + n_opt)
    if opt_blocks:
        manifest["opt"] = "1"
        if opt_meta:
            manifest.update({k: str(v) for k, v in opt_meta.items()})
    with open(path, "wb") as f:
        for k, v in manifest.items():
            f.write(f"{k}={v}\n".encode())
        f.write(b"---\n")
        for _, arr in blocks:
            _write_block(f, arr)
        for arr in opt_blocks or ():
            _write_block(f, arr)


def read_manifest(f):
    manifest = {}
    while True:
        line = f.readline()
        if not line:
            raise ValueError("checkpoint: manifest not terminated by ---")
        line = line.decode("utf-8").rstrip("\n")
        if line == "---":
            return manifest
        if "=" not in line:
            raise ValueError(f"checkpoint: malformed manifest line {line!r}")
        k, v = line.split("=", 1)
        manifest[k] = v


def load_checkpoint(path, with_opt=False):
    """Rebuilds a ModelBundle from `path`.

    With with_opt=True returns (bundle, manifest, opt_blocks) where
    opt_blocks is the list of optimizer moment arrays (empty if absent);
    otherwise returns just the bundle.
    """
    with open(path, "rb") as f:
        manifest = read_manifest(f)
        if manifest.get("format") != FORMAT:
            raise ValueError(f"checkpoint: unknown format {manifest.get('format')!r}")
        m = build_model(manifest["preset"], int(manifest["sep"]), int(manifest.get("seed", "0")))
        declared = int(manifest["blocks"])
        slots = _model_blocks(m)
        if declared < len(slots):
            raise ValueError(
                f"checkpoint: manifest declares {declared} blocks, model needs {len(slots)}")
        loaded = []
        for label, proto in slots:
            arr = _read_block(f, label)
            if arr.size != proto.size:
                raise ValueError(
                    f"checkpoint: block {label} has {arr.size} floats, expected {proto.size}")
            loaded.append((label, arr))
        opt_blocks = [_read_block(f, f"opt[{i}]") for i in range(declared - len(slots))]
        if f.read(1):
            raise ValueError("checkpoint: trailing bytes after declared blocks")

    by_label = dict(loaded)
    for net_name, net in m._conv_nets():
        for i, blk in enumerate(net):
            blk.weight.data = by_label[f"{net_name}.{i}.weight"].reshape(blk.weight.shape)
            blk.bias.data = by_label[f"{net_name}.{i}.bias"].reshape(blk.bias.shape)
            if blk.spectral:
                blk.u = by_label[f"{net_name}.{i}.u"].reshape(blk.u.shape)
                blk.sigma = float(by_label[f"{net_name}.{i}.sigma"][0])
    for i, layer in enumerate(m.d):
        layer.weight.data = by_label[f"d.{i}.weight"].reshape(layer.weight.shape)
        layer.bias.data = by_label[f"d.{i}.bias"].reshape(layer.bias.shape)
    if with_opt:
        return m, manifest, opt_blocks
    return m
