import numpy as np
import pytest

from modalformer.autograd import ShapeError, Tensor, grad_check, ops
from modalformer.modalities import CHANNELS, NAMES, extract_bundle
from modalformer.network import (
    FFN,
    MMTB,
    AuxUNet,
    CheckpointError,
    ModelConfig,
    as_tensors,
    build,
    enhance,
    load_model,
    read_tensors,
    save_model,
    write_tensors,
)


def t64(rng, *shape, grad=False):
    return Tensor(rng.standard_normal(shape), requires_grad=grad, dtype=np.float64)


def well_conditioned(module, rng):
    """Unit-gain conv weights, jittered scalars, fusion gates near 1.

    The trunc-normal(0.02) init makes every branch nearly linear and the
    modality path nearly constant, so its gradients sit at the roundoff floor.
    """
    for name, p in module.named_parameters():
        if p.ndim == 4:
            p.data = rng.standard_normal(p.shape) / np.sqrt(np.prod(p.shape[:3]))
        elif "theta" in name:
            p.data = np.asarray(3.0 + 0.5 * rng.standard_normal())
        else:
            p.data = p.data + 0.3 * rng.standard_normal(p.shape)


# -- FFN / MMTB --------------------------------------------------------------------

def test_ffn_shapes_and_expansion():
    ffn = FFN(8, np.random.default_rng(0))
    assert ffn.expand.weight.shape == (1, 1, 8, 32)
    assert ffn.depth.weight.shape == (3, 3, 32, 32)
    out = ffn(Tensor(np.random.default_rng(1).random((4, 6, 8))))
    assert out.shape == (4, 6, 8)


def test_ffn_zero_weights_give_bias():
    ffn = FFN(4, np.random.default_rng(0))
    for p in ffn.parameters():
        p.data[:] = 0
    ffn.compress.bias.data[:] = [1, 2, 3, 4]
    out = ffn(Tensor(np.random.default_rng(1).random((3, 3, 4))))
    assert np.all(out.data == np.array([1, 2, 3, 4], np.float32))


def test_ffn_channel_mismatch():
    with pytest.raises(ShapeError, match="8 channels"):
        FFN(8, np.random.default_rng(0))(Tensor(np.zeros((2, 2, 4))))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ffn_gradcheck(seed):
    rng = np.random.default_rng(seed)
    ffn = FFN(8, rng).astype(np.float64)
    well_conditioned(ffn, rng)
    x = t64(rng, 4, 4, 8, grad=True)
    w = t64(rng, 4, 4, 8)
    assert grad_check(lambda: ops.sum(ops.mul(ffn(x), w)), [x, *ffn.parameters()], eps=1e-4) < 1e-4


def test_mmtb_zero_branches_is_identity():
    rng = np.random.default_rng(0)
    blk = MMTB(8, 2, rng, n_modalities=3)
    blk.attn.w_out.weight.data[:] = 0
    blk.ffn.compress.weight.data[:] = 0
    x = Tensor(rng.standard_normal((4, 4, 8)))
    mods = [Tensor(rng.standard_normal((4, 4, 8))) for _ in range(3)]
    assert np.array_equal(blk(x, mods).data, x.data)


@pytest.mark.parametrize("h,w,c,k", [(4, 4, 8, 1), (8, 4, 16, 2), (2, 6, 4, 4)])
def test_mmtb_shape(h, w, c, k):
    rng = np.random.default_rng(0)
    blk = MMTB(c, k, rng, n_modalities=2)
    mods = [Tensor(rng.random((h, w, c))) for _ in range(2)]
    assert blk(Tensor(rng.random((h, w, c))), mods).shape == (h, w, c)


def test_mmtb_modality_shape_mismatch():
    rng = np.random.default_rng(0)
    blk = MMTB(8, 1, rng, n_modalities=1)
    with pytest.raises(ShapeError):
        blk(Tensor(np.zeros((4, 4, 8))), [Tensor(np.zeros((2, 2, 8)))])


@pytest.mark.parametrize("seed,k,n", [(0, 1, 9), (1, 2, 2), (2, 4, 3)])
def test_mmtb_gradcheck(seed, k, n):
    rng = np.random.default_rng(seed)
    blk = MMTB(8, k, rng, n_modalities=n).astype(np.float64)
    well_conditioned(blk, rng)
    x = t64(rng, 4, 4, 8, grad=True)
    mods = [t64(rng, 4, 4, 8, grad=True) for _ in range(n)]
    w = t64(rng, 4, 4, 8)
    f = lambda: ops.sum(ops.mul(blk(x, mods), w))  # noqa: E731
    err = grad_check(f, [x, *mods, *blk.parameters()], eps=1e-3, order=4, per="tensor")
    assert err < 1e-4


# -- auxiliary U-Net ---------------------------------------------------------------

def test_aux_unet_shapes_and_taps():
    rng = np.random.default_rng(0)
    net = AuxUNet(22, 8, rng)
    out, taps = net(Tensor(rng.random((32, 32, 22))))
    assert out.shape == (32, 32, 22)
    assert [t.shape for t in taps.enc] == [(32, 32, 8), (16, 16, 16), (8, 8, 32)]
    assert [t.shape for t in taps.dec] == [(32, 32, 8), (16, 16, 16), (8, 8, 32)]
    assert AuxUNet(1, 8, rng)(Tensor(rng.random((16, 8, 1))))[0].shape == (16, 8, 1)


def test_aux_unet_rejects_indivisible():
    with pytest.raises(ShapeError, match="divisible by 8"):
        AuxUNet(1, 4, np.random.default_rng(0))(Tensor(np.zeros((12, 16, 1))))


def test_aux_unets_identical_up_to_io_channels():
    m = build(base_channels=4)
    shapes = [[p.shape for p in net.parameters()] for net in m.aux]
    strip = lambda s: [x for i, x in enumerate(s) if i not in (0, len(s) - 2, len(s) - 1)]  # noqa: E731
    assert all(strip(s) == strip(shapes[0]) for s in shapes)


# -- whole model -------------------------------------------------------------------

def conv_count(k, ci, co, bias=True):
    return k * k * ci * co + (co if bias else 0)


def cmmsa_count(c, n):
    return conv_count(1, c, 3 * c, False) + 1 + n * (conv_count(1, c, 2 * c, False) + 2) + conv_count(1, c, c)


def mmtb_count(c, n):
    ffn = conv_count(1, c, 4 * c) + conv_count(3, 4 * c, 4 * c) + conv_count(1, 4 * c, c)
    return cmmsa_count(c, n) + ffn + 4 * c


def aux_count(cr, c):
    w = [c, 2 * c, 4 * c, 8 * c]
    total = conv_count(3, cr, c) + conv_count(1, c, cr)
    for i in range(3):
        total += conv_count(3, w[i], w[i + 1]) + conv_count(3, w[i + 1], w[i]) + conv_count(3, 2 * w[i], w[i])
    return total


def model_count(c, modalities):
    n = len(modalities)
    trunk = (
        conv_count(1, 3, c) + conv_count(1, c, 3)
        + conv_count(3, c, 2 * c) + conv_count(3, 2 * c, 4 * c)
        + conv_count(3, 4 * c, 2 * c) + conv_count(3, 2 * c, c)
        + conv_count(1, 4 * c, 2 * c) + conv_count(1, 2 * c, c)
        + 2 * mmtb_count(c, n) + 4 * mmtb_count(2 * c, n) + 2 * mmtb_count(4 * c, n)
    )
    return trunk + sum(aux_count(CHANNELS[m], c) for m in modalities)


@pytest.mark.parametrize("c", [4, 8, 16])
def test_parameter_count_closed_form(c):
    assert build(base_channels=c).num_parameters() == model_count(c, NAMES)


def test_parameter_count_subset_and_heads():
    subset = ("depth_map", "luminance")
    assert build(base_channels=8, modalities=subset).num_parameters() == model_count(8, subset)
    assert build(base_channels=8, heads=(2, 4, 8)).num_parameters() == model_count(8, NAMES)


@pytest.fixture(scope="module")
def small():
    rng = np.random.default_rng(0)
    img = rng.random((32, 32, 3))
    return img, extract_bundle(img, 0)


def test_model_output_shapes(small):
    img, bundle = small
    m = build(base_channels=4)
    i_hat, m_hat = m(Tensor(img), as_tensors(bundle))
    assert i_hat.shape == (32, 32, 3)
    assert list(m_hat) == list(NAMES)
    assert all(m_hat[n].shape == (32, 32, CHANNELS[n]) for n in NAMES)


def test_model_with_constant_modalities(small):
    img, bundle = small
    consts = {n: np.full_like(a, 0.5) for n, a in bundle.maps.items()}
    out, _ = enhance(build(base_channels=4), img, consts)
    assert out.shape == (32, 32, 3) and np.isfinite(out).all()
    assert out.min() >= 0 and out.max() <= 1


def test_model_forward_deterministic(small):
    img, bundle = small
    a = enhance(build(base_channels=4, seed=3), img, bundle)[0]
    b = enhance(build(base_channels=4, seed=3), img, bundle)[0]
    assert a.tobytes() == b.tobytes()


def test_model_junction_errors(small):
    img, bundle = small
    m = build(base_channels=4)
    with pytest.raises(ShapeError, match="divisible by 8"):
        m(Tensor(img[:28]), as_tensors(bundle))
    maps = as_tensors(bundle)
    del maps["luminance"]
    with pytest.raises(ShapeError, match="luminance"):
        m(Tensor(img), maps)
    maps = as_tensors({n: a[:16] for n, a in bundle.maps.items()})
    with pytest.raises(ShapeError, match="bundle"):
        m(Tensor(img), maps)


def test_baseline_mode_has_no_subnets(small):
    img, bundle = small
    m = build(base_channels=4, mode="msa")
    assert m.aux == []
    assert m(Tensor(img), {})[1] == {}


def test_config_validation():
    with pytest.raises(ValueError, match="mode"):
        ModelConfig(mode="nope")
    with pytest.raises(ValueError, match="heads"):
        ModelConfig(base_channels=4, heads=(8, 2, 4))
    with pytest.raises(ValueError, match="modalities"):
        ModelConfig(modalities=("thermal",))


# -- checkpoints ---------------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tmp_path, small):
    img, bundle = small
    m = build(base_channels=4, seed=5)
    save_model(tmp_path / "ck", m, m.config.to_dict())
    back = load_model(tmp_path / "ck")
    for (n1, p1), (n2, p2) in zip(m.named_parameters(), back.named_parameters()):
        assert n1 == n2 and p1.data.tobytes() == p2.data.tobytes() and p1.dtype == p2.dtype
    assert enhance(m, img, bundle)[0].tobytes() == enhance(back, img, bundle)[0].tobytes()


def test_checkpoint_manifest_layout(tmp_path):
    arrays = {"a": np.zeros((2, 3), np.float32), "s": np.float64(1.5), "b": np.ones(4, np.float32)}
    write_tensors(tmp_path, arrays)
    lines = (tmp_path / "manifest.txt").read_text().split("\n")
    assert lines[:3] == ["a 2x3 0 t00000.mft", "s - 6 t00001.mft", "b 4 7 t00002.mft"]
    back = read_tensors(tmp_path)
    assert back["s"].shape == () and back["s"] == 1.5


def test_checkpoint_corruption_detected(tmp_path):
    write_tensors(tmp_path, {"a": np.zeros((2, 3), np.float32)})
    (tmp_path / "manifest.txt").write_text("a 3x2 0 t00000.mft\n")
    with pytest.raises(CheckpointError, match="shape"):
        read_tensors(tmp_path)
    (tmp_path / "t00000.mft").write_bytes(b"XXXX")
    (tmp_path / "manifest.txt").write_text("a 2x3 0 t00000.mft\n")
    with pytest.raises(CheckpointError, match="magic"):
        read_tensors(tmp_path)


def test_checkpoint_architecture_mismatch(tmp_path):
    m = build(base_channels=4)
    cfg = m.config.to_dict()
    save_model(tmp_path / "ck", m, dict(cfg, base_channels=8))
    with pytest.raises(CheckpointError):
        load_model(tmp_path / "ck")
