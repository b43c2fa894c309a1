import numpy as np
import pytest

from didd import latentlab, model, ppm, rng, synthworld
from didd.autodiff import Tensor


@pytest.fixture(scope="module")
def world():
    return synthworld.World()


@pytest.fixture(scope="module")
def m():
    return model.build_model("desk", seed=4)


def _cell(canvas, r, c, res=32):
    pitch = res + 2
    return canvas[:, r * pitch:r * pitch + res, c * pitch:c * pitch + res]


def _codes(seed, shape=(1, 16, 2, 2)):
    gen = rng.stream(seed, "lerp")
    return (gen.normal(size=shape).astype(np.float32),
            gen.normal(size=shape).astype(np.float32))


def test_lerp_endpoints_exact():
    c1, c2 = _codes(0)
    assert np.array_equal(latentlab.lerp_code(c1, c2, 1.0).data, c1)
    assert np.array_equal(latentlab.lerp_code(c1, c2, 0.0).data, c2)
    half = latentlab.lerp_code(np.zeros(4, np.float32), np.full(4, 2.0, np.float32), 0.5)
    assert np.array_equal(half.data, np.ones(4, np.float32))


def test_lerp_affine_identity():
    c1, c2 = _codes(1)
    s = latentlab.lerp_code(c1, c2, 0.3).data + latentlab.lerp_code(c1, c2, 0.7).data
    assert np.allclose(s, c1 + c2, atol=1e-6)


def test_lerp_accepts_tensors():
    c1, c2 = _codes(2)
    out = latentlab.lerp_code(Tensor(c1), c2, 0.25)
    assert np.allclose(out.data, 0.25 * c1 + 0.75 * c2, atol=1e-7)


def test_lerp_validation():
    c1, c2 = _codes(3)
    for bad in (-0.01, 1.01, 2):
        with pytest.raises(ValueError, match="alpha"):
            latentlab.lerp_code(c1, c2, bad)
    with pytest.raises(ValueError, match="shapes"):
        latentlab.lerp_code(c1, c2[:, :8], 0.5)


def test_lattice():
    assert latentlab.lattice(1) == [1.0]
    assert latentlab.lattice(3) == [1.0, 0.5, 0.0]
    assert latentlab.lattice(2) == [1.0, 0.0]
    with pytest.raises(ValueError):
        latentlab.lattice(0)


def test_intersection_shapes_and_determinism(world, m):
    x = world.bank_a.batch(np.arange(5))
    out = latentlab.intersection_image(m, x)
    assert out.shape == (5, 3, 32, 32)
    single = latentlab.intersection_image(m, x[0])
    assert single.shape == (3, 32, 32)
    again = latentlab.intersection_image(m, x)
    assert np.array_equal(out, again)


def test_union_zeroed_specifics_equal_intersection(world, m):
    x = world.bank_b.batch(np.arange(3))
    u = latentlab.union_image(m, x, None, None)
    i = latentlab.intersection_image(m, x)
    assert u.tobytes() == i.tobytes()


def test_union_shapes_and_validation(world, m):
    c = world.bank_a.batch(np.arange(4))
    a = world.bank_a.batch(np.arange(4, 8))
    b = world.bank_b.batch(np.arange(4))
    out = latentlab.union_image(m, c, a, b)
    assert out.shape == (4, 3, 32, 32)
    assert np.array_equal(out, latentlab.union_image(m, c, a, b))
    with pytest.raises(ValueError, match="must match"):
        latentlab.union_image(m, c, a[:2], b)
    with pytest.raises(ValueError, match="expected images"):
        latentlab.union_image(m, c[:, :, :16], a, b)


def test_grid_dimension_arithmetic(tmp_path, world, m):
    x = [world.bank_a.images[0], world.bank_a.images[37]]
    for rows, cols in ((1, 1), (2, 3), (4, 4)):
        path = str(tmp_path / f"g{rows}{cols}.ppm")
        canvas = latentlab.render_grid(m, "interp_common_sepA", rows, cols, x, path)
        want = (3, (rows + 1) * 32 + rows * 2, (cols + 1) * 32 + cols * 2)
        assert canvas.shape == want
        back = ppm.read_ppm(path)
        assert back.shape == want


def test_1x1_interp_grid_is_reconstruction(tmp_path, world, m):
    x1 = world.bank_a.images[12]
    x2 = world.bank_a.images[900]
    canvas = latentlab.render_grid(m, "interp_common_sepA", 1, 1, [x1, x2],
                                   str(tmp_path / "r.ppm"))
    recon = model.reconstruct_a(m, Tensor(x1[None])).data[0]
    assert np.array_equal(_cell(canvas, 1, 1), recon)
    # headers show the first input at both lattice starts
    assert np.array_equal(_cell(canvas, 0, 1), x1)
    assert np.array_equal(_cell(canvas, 1, 0), x1)


def test_translate_grid_layout(tmp_path, world, m):
    srcs = [world.bank_a.images[3], world.bank_a.images[700]]
    guides = [world.bank_b.images[5], world.bank_b.images[977]]
    canvas = latentlab.render_grid(m, "translate", 2, 2, srcs + guides,
                                   str(tmp_path / "t.ppm"))
    want = model.translate_a_to_b(m, Tensor(srcs[0][None]), Tensor(guides[0][None])).data[0]
    assert np.array_equal(_cell(canvas, 1, 1), want)
    assert np.array_equal(_cell(canvas, 0, 1), guides[0])
    assert np.array_equal(_cell(canvas, 0, 2), guides[1])
    assert np.array_equal(_cell(canvas, 1, 0), srcs[0])
    assert np.array_equal(_cell(canvas, 2, 0), srcs[1])
    # corner and separators stay background
    assert np.all(_cell(canvas, 0, 0) == -1.0)
    assert np.all(canvas[:, 32:34, :] == -1.0)
    assert np.all(canvas[:, :, 32:34] == -1.0)


def test_translate_grid_ba_direction(tmp_path, world, m):
    srcs = [world.bank_b.images[3]]
    guides = [world.bank_a.images[5]]
    canvas = latentlab.render_grid(m, "translate", 1, 1, srcs + guides,
                                   str(tmp_path / "t.ppm"), direction="ba")
    want = model.translate_b_to_a(m, Tensor(srcs[0][None]), Tensor(guides[0][None])).data[0]
    assert np.array_equal(_cell(canvas, 1, 1), want)


def test_sepa_sepb_grid_layout(tmp_path, world, m):
    c_src = world.bank_a.images[40]
    a1, a2 = world.bank_a.images[1], world.bank_a.images[2]
    b1, b2 = world.bank_b.images[1], world.bank_b.images[2]
    canvas = latentlab.render_grid(m, "interp_sepA_sepB", 3, 2, [c_src, a1, a2, b1, b2],
                                   str(tmp_path / "s.ppm"))
    assert np.array_equal(_cell(canvas, 0, 0), c_src)
    assert np.array_equal(_cell(canvas, 0, 1), a1)
    assert np.array_equal(_cell(canvas, 0, 2), a2)
    assert np.array_equal(_cell(canvas, 1, 0), b1)
    assert np.array_equal(_cell(canvas, 3, 0), b2)
    # top-left generated cell: alpha=1, beta=1 selects a1's and b1's codes
    want = latentlab.union_image(m, c_src, a1, b1)
    assert np.array_equal(_cell(canvas, 1, 1), want)


def test_intersection_grid(tmp_path, world, m):
    srcs = [world.bank_a.images[9], world.bank_b.images[9], world.bank_a.images[99]]
    canvas = latentlab.render_grid(m, "intersection", 1, 3, srcs, str(tmp_path / "i.ppm"))
    for j, s in enumerate(srcs):
        assert np.array_equal(_cell(canvas, 0, j + 1), s)
        assert np.array_equal(_cell(canvas, 1, j + 1), latentlab.intersection_image(m, s))


def test_grid_golden_stability_and_manifest(tmp_path, world, m):
    x = [world.bank_b.images[10], world.bank_b.images[20]]
    p1, p2 = str(tmp_path / "a.ppm"), str(tmp_path / "b.ppm")
    latentlab.render_grid(m, "interp_common_sepB", 2, 3, x, p1, ids=["left", "right"])
    latentlab.render_grid(m, "interp_common_sepB", 2, 3, x, p2, ids=["left", "right"])
    assert open(p1, "rb").read() == open(p2, "rb").read()
    manifest = open(p1 + ".txt").read().splitlines()
    assert "kind=interp_common_sepB" in manifest
    assert "rows=2" in manifest and "cols=3" in manifest
    assert "alpha=[1.0, 0.5, 0.0]" in manifest
    assert "beta=[1.0, 0.0]" in manifest
    assert "input[0]=left" in manifest and "input[1]=right" in manifest


def test_grid_validation(tmp_path, world, m):
    x = [world.bank_a.images[0], world.bank_a.images[1]]
    path = str(tmp_path / "v.ppm")
    with pytest.raises(ValueError, match="unknown kind"):
        latentlab.render_grid(m, "mosaic", 1, 1, x, path)
    with pytest.raises(ValueError, match="rows and cols"):
        latentlab.render_grid(m, "translate", 0, 1, x, path)
    with pytest.raises(ValueError, match="needs 5 input"):
        latentlab.render_grid(m, "interp_sepA_sepB", 1, 1, x, path)
    with pytest.raises(ValueError, match="needs 4 input"):
        latentlab.render_grid(m, "translate", 2, 2, x, path)
    with pytest.raises(ValueError, match="direction"):
        latentlab.render_grid(m, "translate", 1, 1, x, path, direction="xy")
