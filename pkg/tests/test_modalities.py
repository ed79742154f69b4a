import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from modalformer.autograd import mft
from modalformer.modalities import (
    CHANNELS,
    NAMES,
    BundleError,
    DegradeParams,
    degrade,
    depth_normals_modalities,
    edges_modality,
    embedding_modality,
    extract_bundle,
    load_bundle,
    ntsc_luminance,
    palette_modality,
    save_bundle,
    segments_modality,
)
from modalformer.modalities.extractors import sobel_magnitude, unit_normals
from modalformer.modalities.kmeans import sq_dists


def psnr_np(a, b):
    mse = np.mean((a - b) ** 2)
    return 100.0 if mse < 1e-10 else 10 * np.log10(1.0 / mse)


@pytest.fixture(scope="module")
def scene():
    rng = np.random.default_rng(0)
    img = np.zeros((24, 32, 3))
    img[:] = rng.uniform(0.2, 0.8, size=3)
    img[4:12, 6:14] = [0.9, 0.1, 0.2]
    img[14:22, 18:30] = [0.1, 0.3, 0.9]
    return img + rng.normal(0, 0.02, size=img.shape).clip(-0.05, 0.05)


# -- luminance ------------------------------------------------------------------

def test_ntsc_closed_forms():
    assert ntsc_luminance(np.ones((1, 1, 3)))[0, 0, 0] == pytest.approx(1.0, abs=1e-15)
    assert ntsc_luminance(np.zeros((1, 1, 3)))[0, 0, 0] == 0.0
    assert ntsc_luminance(np.array([[[1.0, 0, 0]]]))[0, 0, 0] == pytest.approx(0.299, abs=1e-15)


def test_ntsc_matches_independent_colorimetry_references():
    from skimage.color import rgb2yiq

    rng = np.random.default_rng(1)
    img = rng.random((5, 7, 3))
    np.testing.assert_allclose(ntsc_luminance(img)[..., 0], rgb2yiq(img)[..., 0], atol=1e-12)
    # Pillow's "L" conversion is ITU-R 601-2 luma on 8-bit values
    u8 = (img * 255).round().astype(np.uint8)
    pil = np.asarray(Image.fromarray(u8, "RGB").convert("L"), dtype=np.float64)
    ours = ntsc_luminance(u8.astype(np.float64))[..., 0]
    assert np.abs(pil - ours).max() <= 0.5 + 1e-9


# -- palette ------------------------------------------------------------------------

def test_palette_constant_image():
    out = palette_modality(np.full((8, 8, 3), 0.4), seed=3)
    assert out.shape == (8, 8, 22)
    assert np.all(out[..., 3] == 1.0) and np.all(out[..., 4:8] == 0.0)
    np.testing.assert_allclose(out[..., :3], 0.4)


def test_palette_checkerboard_brute_force():
    a, b = np.array([0.9, 0.2, 0.1]), np.array([0.1, 0.5, 0.8])
    yy, xx = np.mgrid[0:8, 0:8]
    img = np.where(((yy + xx) % 2 == 0)[..., None], a, b)
    out = palette_modality(img, seed=7)
    onehot = out[..., 3:8].reshape(-1, 5)
    assert (onehot.sum(axis=0) > 0).sum() == 2
    np.testing.assert_allclose(out[..., :3], img, atol=1e-12)
    # brute force: palette colours are in channels 8.. (truncated); nearest by exhaustive search
    palette = np.concatenate([out[0, 0, 8:], [0.0]]).reshape(5, 3)[:4]
    d = sq_dists(img.reshape(-1, 3), palette)
    assert np.array_equal(palette[d.argmin(axis=1)], out[..., :3].reshape(-1, 3))


def test_palette_deterministic(scene):
    assert palette_modality(scene, 5).tobytes() == palette_modality(scene, 5).tobytes()


# -- segments ---------------------------------------------------------------------

def test_segments_two_blobs():
    img = np.zeros((16, 16, 3))
    img[:, :8] = [0.8, 0.2, 0.2]
    img[:, 8:] = [0.1, 0.3, 0.9]
    out = segments_modality(img, seed=0)
    labels = out[..., :8].argmax(axis=-1)
    assert out[..., :8].sum(axis=(0, 1)).astype(bool).sum() == 2
    # brute force: per pixel, the label's mean colour is the nearest of the two blob colours
    colors = np.array([[0.8, 0.2, 0.2], [0.1, 0.3, 0.9]])
    nearest = sq_dists(img.reshape(-1, 3), colors).argmin(axis=1).reshape(16, 16)
    assert np.array_equal(labels, nearest)
    np.testing.assert_allclose(out[..., 8:11], img, atol=1e-12)
    assert np.all(out[..., 11:] == 0)


def test_segments_constant_and_deterministic(scene):
    out = segments_modality(np.full((8, 8, 3), 0.3), seed=1)
    assert np.all(out[..., 0] == 1) and np.all(out[..., 1:8] == 0)
    assert segments_modality(scene, 2).tobytes() == segments_modality(scene, 2).tobytes()


# -- edges -------------------------------------------------------------------------

def test_edges_constant_is_zero():
    assert np.all(edges_modality(np.full((8, 8, 1), 0.7)) == 0)


def test_edges_vertical_step():
    lum = np.zeros((10, 10, 1))
    lum[:, 5:] = 1.0
    out = edges_modality(lum)
    mag = out[..., 0]
    # hand-computed Sobel x response of a unit step: 4 at both columns adjacent to the step
    raw = sobel_magnitude(lum)
    assert np.all(raw[:, 4:6] == 4.0) and np.all(raw[:, :4] == 0) and np.all(raw[:, 6:] == 0)
    assert np.all(mag[:, 4:6] == 1.0)
    assert np.all(mag[:, :4] == 0) and np.all(mag[:, 6:] == 0)
    assert np.all(out[:, 4:6, 1:10] == 1.0)


def test_edges_offset_invariant():
    lum = (np.random.default_rng(0).integers(0, 8, size=(12, 12, 1)) / 16.0)
    np.testing.assert_array_equal(edges_modality(lum), edges_modality(lum + 0.25))


# -- depth / normals --------------------------------------------------------------

def test_depth_normals_constant():
    depth, normals = depth_normals_modalities(np.full((16, 16, 1), 0.3))
    assert np.ptp(depth.reshape(-1, 22), axis=0).max() == 0
    np.testing.assert_allclose(normals[..., :3], np.broadcast_to([0.5, 0.5, 1.0], (16, 16, 3)))


def test_normals_unit_norm(scene):
    from modalformer.modalities.extractors import pseudo_depth

    n = unit_normals(pseudo_depth(ntsc_luminance(scene)))
    assert np.abs(np.linalg.norm(n, axis=-1) - 1).max() < 1e-6


def test_normals_of_ramp_have_constant_tilt():
    w = 40
    lum = np.tile(np.linspace(0, 1, w), (40, 1))[..., None]
    _, normals = depth_normals_modalities(lum)
    interior = normals[10:30, 10:30, :3] * 2 - 1
    # depth = 1 - x/(w-1) so d(depth)/du = -1 and the unit normal is (1, 0, 1)/sqrt(2)
    np.testing.assert_allclose(interior, np.broadcast_to([2 ** -0.5, 0, 2 ** -0.5], interior.shape), atol=1e-9)


# -- embeddings --------------------------------------------------------------------

def test_embedding_locality_range_determinism(scene):
    a = embedding_modality(scene, 11)
    assert a.min() >= 0 and a.max() <= 1
    assert a.tobytes() == embedding_modality(scene, 11).tobytes()
    assert not np.array_equal(a, embedding_modality(scene, 12))
    other = scene.copy()
    other[10, 15] += 0.1
    diff = np.any(a != embedding_modality(other, 11), axis=-1)
    ys, xs = np.nonzero(diff)
    assert diff.any()
    assert np.abs(ys - 10).max() <= 3 and np.abs(xs - 15).max() <= 3


# -- bundle ------------------------------------------------------------------------

def test_bundle_shapes_and_range(scene):
    b = extract_bundle(scene, seed=4)
    assert list(b.maps) == list(NAMES)
    for name, m in b.maps.items():
        assert m.shape == (24, 32, CHANNELS[name])
        assert m.min() >= 0 and m.max() <= 1
    assert sum(c == 22 for c in CHANNELS.values()) == 8


def test_bundle_gray_input():
    b = extract_bundle(np.full((16, 16, 3), 0.5), seed=0)
    assert np.ptp(b["luminance"]) == 0
    assert np.all(b["sam_edges"] == 0)
    assert np.all(b["sam_instances"][..., 0] == 1)


def test_bundle_deterministic_and_parallel_equal(scene):
    a = extract_bundle(scene, seed=9)
    b = extract_bundle(scene, seed=9, workers=4)
    for n in NAMES:
        assert a[n].tobytes() == b[n].tobytes()


def test_bundle_roundtrip(tmp_path, scene):
    b = extract_bundle(scene, seed=1)
    save_bundle(b, tmp_path / "b")
    back = load_bundle(tmp_path / "b")
    for n in NAMES:
        assert back[n].tobytes() == b[n].tobytes()
        assert back[n].dtype == b[n].dtype


def test_bundle_manifest_missing_name(tmp_path, scene):
    save_bundle(extract_bundle(scene, 1), tmp_path)
    lines = (tmp_path / "manifest.txt").read_text().splitlines()
    (tmp_path / "manifest.txt").write_text("\n".join(l for l in lines if not l.startswith("depth_map")))
    with pytest.raises(BundleError, match="depth_map"):
        load_bundle(tmp_path)


def test_bundle_channel_mismatch(tmp_path, scene):
    save_bundle(extract_bundle(scene, 1), tmp_path)
    mft.save(tmp_path / "clip_embed.mft", np.zeros((24, 32, 21), np.float32))
    with pytest.raises(BundleError, match="21"):
        load_bundle(tmp_path)


# -- degradation -------------------------------------------------------------------

def test_degrade_identity_and_gain():
    rng = np.random.default_rng(0)
    gt = rng.random((8, 8, 3))
    np.testing.assert_array_equal(degrade(gt, DegradeParams(1.0, 1.0, 0.0), 0), gt)
    np.testing.assert_allclose(degrade(np.ones((4, 4, 3)), DegradeParams(3.0, 0.2, 0.0), 0), 0.2)


@settings(max_examples=20, deadline=None)
@given(
    gamma=st.floats(2, 5), gain=st.floats(0.1, 0.5), sigma=st.floats(0, 0.05), seed=st.integers(0, 1000)
)
def test_degrade_reduces_psnr(gamma, gain, sigma, seed):
    gt = np.random.default_rng(seed).uniform(0.1, 1, size=(8, 8, 3))
    low = degrade(gt, DegradeParams(gamma, gain, sigma), seed)
    assert psnr_np(low, gt) < psnr_np(gt, gt)
    assert np.array_equal(low, degrade(gt, DegradeParams(gamma, gain, sigma), seed))


def test_degrade_monotone_in_severity():
    gt = np.random.default_rng(0).uniform(0.05, 1, size=(16, 16, 3))
    gammas, gains = [2.0, 2.5, 3.0, 4.0, 5.0], [0.5, 0.4, 0.3, 0.2, 0.1]
    table = np.array([[psnr_np(degrade(gt, DegradeParams(g, a), 0), gt) for a in gains] for g in gammas])
    assert np.all(np.diff(table, axis=0) <= 1e-12)  # larger gamma never helps
    assert np.all(np.diff(table, axis=1) <= 1e-12)  # smaller gain never helps
