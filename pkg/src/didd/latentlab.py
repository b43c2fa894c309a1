"""Latent-space arithmetic and figure-style grid rendering.

Codes combine linearly: lerp_code blends two codes with the weight on
the first one, intersection_image decodes a common code with both
specific slots zeroed, union_image combines a common code with specific
codes taken from two other images. render_grid lays the results out as
a single PPM with a header row/column of source images, 2-pixel black
separators, and a sidecar manifest recording inputs and lattices.
"""

import numpy as np

from . import autodiff as ad
from . import model, ppm
from .autodiff import Tensor

GRID_KINDS = ("translate", "interp_common_sepA", "interp_common_sepB",
              "interp_sepA_sepB", "intersection")
_SEP = 2  # separator width, pixels


def _as_array(code):
    return code.data if isinstance(code, Tensor) else np.asarray(code, dtype=np.float32)


def lerp_code(c1, c2, alpha):
    """alpha * c1 + (1 - alpha) * c2; alpha weights the first code."""
    a = float(alpha)
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha!r}")
    x, y = _as_array(c1), _as_array(c2)
    if x.shape != y.shape:
        raise ValueError(f"lerp_code: shapes differ, {x.shape} vs {y.shape}")
    return Tensor(np.float32(a) * x + np.float32(1.0 - a) * y)


def _as_images(m, x, what):
    arr = np.asarray(x, dtype=np.float32)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    res = m.preset.res
    if arr.ndim != 4 or arr.shape[1:] != (3, res, res):
        raise ValueError(f"{what}: expected images [3, {res}, {res}] or a batch, "
                         f"got {np.asarray(x).shape}")
    return arr, single


def intersection_image(m, x):
    """G(E_c(x), 0, 0); accepts one image or a batch."""
    arr, single = _as_images(m, x, "intersection_image")
    n = arr.shape[0]
    with ad.no_grad():
        common = model.encode_common(m, Tensor(arr))
        out = model.decode(m, model.CodeTriple(common, model.zero_code(m, "a", n),
                                               model.zero_code(m, "b", n))).data
    return out[0] if single else out


def union_image(m, c_src, a_src, b_src):
    """G(E_c(c_src), E_sA(a_src), E_sB(b_src)).

    a_src or b_src may be None for an explicit zero code in that slot;
    with both None this equals intersection_image bitwise.
    """
    arr, single = _as_images(m, c_src, "union_image")
    n = arr.shape[0]
    with ad.no_grad():
        common = model.encode_common(m, Tensor(arr))
        if a_src is None:
            sa = model.zero_code(m, "a", n)
        else:
            aa, asingle = _as_images(m, a_src, "union_image")
            if asingle != single or aa.shape[0] != n:
                raise ValueError("union_image: input batches must match")
            sa = model.encode_sep_a(m, Tensor(aa))
        if b_src is None:
            sb = model.zero_code(m, "b", n)
        else:
            bb, bsingle = _as_images(m, b_src, "union_image")
            if bsingle != single or bb.shape[0] != n:
                raise ValueError("union_image: input batches must match")
            sb = model.encode_sep_b(m, Tensor(bb))
        out = model.decode(m, model.CodeTriple(common, sa, sb)).data
    return out[0] if single else out


def lattice(n):
    """n weights from 1.0 down to 0.0; [1.0] when n == 1."""
    if n < 1:
        raise ValueError(f"lattice size must be >= 1, got {n}")
    if n == 1:
        return [1.0]
    return [1.0 - i / (n - 1) for i in range(n)]


def _need(inputs, n, kind):
    if len(inputs) < n:
        raise ValueError(f"render_grid: kind {kind!r} needs {n} input images, "
                         f"got {len(inputs)}")
    return inputs[:n]


def _decode_one(m, common, sa, sb):
    return model.decode(m, model.CodeTriple(common, sa, sb)).data[0]


def _ends(img1, img2, n):
    """img1 ... img2 with empty slots between; just img1 when n == 1."""
    row = [None] * n
    row[0] = img1
    if n > 1:
        row[-1] = img2
    return row


def _grid_plan(m, kind, rows, cols, imgs, direction):
    """Computes (corner, header_row, header_col, cells) for one grid.

    Cells are decoded one at a time in a fixed order, so the same
    inputs always produce identical bytes.
    """
    alphas = lattice(cols)
    betas = lattice(rows)
    cells = []

    if kind == "translate":
        both = _need(imgs, rows + cols, kind)
        srcs, guides = both[:rows], both[rows:]
        enc_style = model.encode_sep_b if direction == "ab" else model.encode_sep_a
        commons = [model.encode_common(m, Tensor(s[None])) for s in srcs]
        styles = [enc_style(m, Tensor(g[None])) for g in guides]
        zero = model.zero_code(m, "a" if direction == "ab" else "b", 1)
        for i in range(rows):
            for j in range(cols):
                sa, sb = (zero, styles[j]) if direction == "ab" else (styles[j], zero)
                cells.append(_decode_one(m, commons[i], sa, sb))
        return None, guides, srcs, cells, alphas, betas

    if kind in ("interp_common_sepA", "interp_common_sepB"):
        x1, x2 = _need(imgs, 2, kind)
        c1 = model.encode_common(m, Tensor(x1[None]))
        c2 = model.encode_common(m, Tensor(x2[None]))
        enc = model.encode_sep_a if kind == "interp_common_sepA" else model.encode_sep_b
        s1, s2 = enc(m, Tensor(x1[None])), enc(m, Tensor(x2[None]))
        zero = model.zero_code(m, "b" if kind == "interp_common_sepA" else "a", 1)
        for beta in betas:
            sep = lerp_code(s1, s2, beta)
            for alpha in alphas:
                common = lerp_code(c1, c2, alpha)
                if kind == "interp_common_sepA":
                    cells.append(_decode_one(m, common, sep, zero))
                else:
                    cells.append(_decode_one(m, common, zero, sep))
        return None, _ends(x1, x2, cols), _ends(x1, x2, rows), cells, alphas, betas

    if kind == "interp_sepA_sepB":
        c_src, a1, a2, b1, b2 = _need(imgs, 5, kind)
        common = model.encode_common(m, Tensor(c_src[None]))
        sa1 = model.encode_sep_a(m, Tensor(a1[None]))
        sa2 = model.encode_sep_a(m, Tensor(a2[None]))
        sb1 = model.encode_sep_b(m, Tensor(b1[None]))
        sb2 = model.encode_sep_b(m, Tensor(b2[None]))
        for beta in betas:
            sb = lerp_code(sb1, sb2, beta)
            for alpha in alphas:
                cells.append(_decode_one(m, common, lerp_code(sa1, sa2, alpha), sb))
        return c_src, _ends(a1, a2, cols), _ends(b1, b2, rows), cells, alphas, betas

    # intersection: one source per cell, header row shows the first row's sources
    srcs = _need(imgs, rows * cols, kind)
    for i in range(rows):
        for j in range(cols):
            cells.append(intersection_image(m, srcs[i * cols + j]))
    return None, list(srcs[:cols]), [None] * rows, cells, [], []


def render_grid(m, kind, rows, cols, inputs, out_path, ids=None, direction="ab"):
    """Writes the composite grid PPM and its sidecar manifest.

    Layout: header row and header column of source images around the
    rows x cols generated cells; alpha varies left to right (1 -> 0,
    weighting the first input), beta top to bottom. Returns the canvas.
    """
    if kind not in GRID_KINDS:
        raise ValueError(f"render_grid: unknown kind {kind!r}, expected one of {GRID_KINDS}")
    if rows < 1 or cols < 1:
        raise ValueError(f"render_grid: rows and cols must be >= 1, got {rows}x{cols}")
    if direction not in ("ab", "ba"):
        raise ValueError(f"render_grid: direction must be 'ab' or 'ba', got {direction!r}")
    imgs = [_as_images(m, x, "render_grid")[0][0] for x in inputs]
    with ad.no_grad():
        corner, header_row, header_col, cells, alphas, betas = _grid_plan(
            m, kind, rows, cols, imgs, direction)

    res = m.preset.res
    pitch = res + _SEP
    canvas = np.full((3, (rows + 1) * res + rows * _SEP, (cols + 1) * res + cols * _SEP),
                     -1.0, dtype=np.float32)

    def paste(r, c, img):
        if img is not None:
            canvas[:, r * pitch:r * pitch + res, c * pitch:c * pitch + res] = img

    paste(0, 0, corner)
    for j, img in enumerate(header_row):
        paste(0, j + 1, img)
    for i, img in enumerate(header_col):
        paste(i + 1, 0, img)
    for i in range(rows):
        for j in range(cols):
            paste(i + 1, j + 1, cells[i * cols + j])

    ppm.write_ppm(out_path, canvas)
    names = [ids[i] if ids and i < len(ids) else f"input-{i}" for i in range(len(imgs))]
    with open(str(out_path) + ".txt", "w") as f:
        f.write(f"kind={kind}\nrows={rows}\ncols={cols}\n")
        if kind == "translate":
            f.write(f"direction={direction}\n")
        f.write(f"alpha={alphas!r}\nbeta={betas!r}\n")
        for i, name in enumerate(names):
            f.write(f"input[{i}]={name}\n")
    return canvas
