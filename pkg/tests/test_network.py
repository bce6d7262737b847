import numpy as np
import pytest

from tripoint import autodiff as ad
from tripoint.autodiff import Tensor
from tripoint.ccm import canonical_views
from tripoint.errors import ConfigMismatch, ShapeMismatch, TooFewPoints
from tripoint.metrics import chamfer
from tripoint.network import CompletionNet, ModelConfig, complete
from tripoint.network.generator import CcmEncoder, CoordinateDecoder, FeatureAlignment, PointEncoder
from tripoint.network.gradcheck import run_blocks
from tripoint.network.upsampler import MultiScaleExtractor, Upsampler
from tripoint.pipeline.rng import derive_rng


def sphere(n, seed=0):
    v = np.random.default_rng(seed).normal(size=(n, 3))
    return 0.5 + 0.45 * v / np.linalg.norm(v, axis=1, keepdims=True)


def half_sphere(n, seed=0):
    pts = sphere(4 * n, seed)
    return pts[pts[:, 2] < 0.5][:n]


@pytest.fixture(scope="module")
def cfg():
    return ModelConfig.toy(c=8, n_in=64)


def test_config_validation():
    with pytest.raises(ConfigMismatch):
        ModelConfig.toy(c=8, n_in=64, heads=3)
    with pytest.raises(ConfigMismatch):
        ModelConfig.toy(c=8, n_in=64, conv1d_specs=(((3, 32, 0),), ((3, 32, 0),)))
    with pytest.raises(ConfigMismatch):
        ModelConfig.toy(c=8, n_in=64, merge_target=1000)
    default = ModelConfig()
    assert default.c == 64 and default.n_in == 2048 and default.branch_width == 96
    assert default.edgeconv_specs == ((3, 64, 16), (64, 128, 16))


# ------------------------------------------------------------------ generator


def test_point_encoder_shape_and_permutation(cfg):
    enc = PointEncoder(cfg, derive_rng(0, "t")).astype(np.float64)
    pts = sphere(64)
    out = enc(pts, np.float64)
    assert out.shape == (1, 2 * cfg.c)
    perm = np.random.default_rng(1).permutation(64)
    np.testing.assert_allclose(enc(pts[perm], np.float64).data, out.data, rtol=1e-12)
    wide = PointEncoder(cfg.with_(c=16), derive_rng(0, "t"))
    assert wide(pts, np.float32).shape == (1, 32)
    with pytest.raises(ConfigMismatch):
        enc(pts[:10], np.float64)


def test_ccm_encoder_shared_across_views(cfg):
    enc = CcmEncoder(cfg.c, derive_rng(0, "t")).astype(np.float64)
    imgs = np.random.default_rng(0).random((3, 16, 16, 3))
    out = enc(Tensor(imgs, dtype=np.float64)).data
    assert out.shape == (3, cfg.c)
    swapped = enc(Tensor(imgs[[2, 0, 1]], dtype=np.float64)).data
    np.testing.assert_allclose(swapped, out[[2, 0, 1]], rtol=1e-12)
    blank = enc(Tensor(np.zeros((3, 16, 16, 3)), dtype=np.float64)).data
    assert np.all(blank == blank[0])
    with pytest.raises(ShapeMismatch):
        enc(Tensor(np.zeros((3, 16, 16))))


def test_alignment_width_and_information_flow(cfg):
    align = FeatureAlignment(cfg, derive_rng(0, "t")).astype(np.float64)
    rng = np.random.default_rng(2)
    fp = Tensor(rng.normal(size=(1, 2 * cfg.c)), dtype=np.float64)
    fc1 = Tensor(rng.normal(size=(3, cfg.c)), dtype=np.float64)
    fc2 = Tensor(rng.normal(size=(3, cfg.c)), dtype=np.float64)
    poses = canonical_views()
    assert align(fp, fc1, poses).shape == (1, 4 * cfg.c)
    assert not np.allclose(align(fp, fc1, poses).data, align(fp, fc2, poses).data)
    # zeroing the view path makes the output independent of the CCM features
    align.view_proj.zero_()
    align.pose_embed.zero_()
    np.testing.assert_allclose(align(fp, fc1, poses).data, align(fp, fc2, poses).data, rtol=1e-12)


def test_decoder_shape_and_determinism(cfg):
    dec = CoordinateDecoder(4 * cfg.c, cfg.width, 20, 1, cfg.heads, derive_rng(0, "t"))
    f = Tensor(np.ones((1, 4 * cfg.c)))
    out = dec(f)
    assert out.shape == (20, 3)
    assert dec(f).data.tobytes() == out.data.tobytes()
    assert dec(f, 5).shape == (5, 3)
    with pytest.raises(ShapeMismatch):
        dec(f, 21)


def test_generator_output_finite(cfg):
    net = CompletionNet(cfg, seed=4)
    p0, f = net.generator(half_sphere(64))
    assert p0.shape == (cfg.n_coarse, 3) and f.shape == (1, 4 * cfg.c)
    assert np.all(np.isfinite(p0.data))


# ------------------------------------------------------------------ upsampler


def test_extractor_shapes_and_equivariance(cfg):
    ext = MultiScaleExtractor(cfg, derive_rng(0, "t")).astype(np.float64)
    pts = sphere(64, 3)
    feats = ext.features(pts, np.float64)
    (_, o1, _), (_, o2, _) = cfg.edgeconv_specs
    assert feats["fe1"].shape == (64, o1) and feats["fe2"].shape == (64, o2)
    assert feats["fe1p"].shape == (64, 96) and feats["fe2p"].shape == (64, 96)
    assert feats["fpp"].shape == (64, cfg.width)
    perm = np.random.default_rng(0).permutation(64)
    np.testing.assert_allclose(ext(pts[perm], np.float64).data, feats["fpp"].data[perm], rtol=1e-10, atol=1e-12)
    with pytest.raises(TooFewPoints):
        ext(pts[:8], np.float64)


def test_upsample_cardinality_and_residual(cfg):
    rng = np.random.default_rng(5)
    partial = half_sphere(64)
    f = Tensor(rng.normal(size=(1, 4 * cfg.c)))
    prev = Tensor(sphere(16, 6).astype(np.float32))
    for ratio in (1, 2, 3):
        up = Upsampler(cfg, ratio, derive_rng(ratio, "t"))
        assert up(prev, partial, partial, f).shape == (16 * ratio, 3)
        up.zero_offsets()
        out = up(prev, partial, partial, f)
        np.testing.assert_array_equal(out.data, np.repeat(prev.data, ratio, axis=0))


def test_residual_path_has_unit_gradient(cfg):
    up = Upsampler(cfg, 2, derive_rng(0, "t")).astype(np.float64)
    partial = half_sphere(64)
    prev = Tensor(sphere(16, 6), requires_grad=True, dtype=np.float64)
    feats = up.forward_features(prev, partial, partial, Tensor(np.zeros((1, 4 * cfg.c)), dtype=np.float64))
    # d out / d delta is the identity, so backprop from out reaches delta unchanged
    g = np.random.default_rng(0).normal(size=feats["out"].shape)
    delta_grads = []
    orig = feats["delta"].backward_fn
    feats["delta"].backward_fn = lambda gr: (delta_grads.append(gr), orig(gr))[1]
    ad.backward((feats["out"] * Tensor(g, dtype=np.float64)).sum())
    np.testing.assert_array_equal(delta_grads[0], g)


# ------------------------------------------------------------------ full model


def test_complete_cardinalities_and_determinism(cfg):
    net = CompletionNet(cfg, seed=1)
    pts = half_sphere(64)
    p0, p1, p2 = complete(pts, net, cfg)
    r1, r2 = cfg.up_ratios
    assert len(p0) == cfg.n_coarse
    assert len(p1) == cfg.merge_target * r1
    assert len(p2) == cfg.merge_target * r1 * r2 == cfg.n_out
    again = complete(pts, CompletionNet(cfg, seed=1))
    assert again[2].tobytes() == p2.tobytes()
    with pytest.raises(ConfigMismatch):
        complete(pts, net, cfg.with_(c=16))


def test_complete_permutation_invariant(cfg):
    net = CompletionNet(cfg, seed=2).astype(np.float64)
    pts = half_sphere(64)
    perm = np.random.default_rng(3).permutation(64)
    a = net(pts).clouds()[2]
    b = net(pts[perm]).clouds()[2]
    assert chamfer(a, b) < 1e-20


def test_every_parameter_gets_gradient(cfg):
    net = CompletionNet(cfg, seed=0)
    out = net(half_sphere(64))
    loss, terms = net.loss(out, sphere(256, 9))
    assert len(terms) == 3
    ad.backward(loss)
    dead = [n for n, p in net.named_parameters() if p.grad is None or not np.any(p.grad)]
    assert dead == []


def test_parameter_namespaces_and_checkpoint(tmp_path, cfg):
    net = CompletionNet(cfg, seed=0)
    names = [n for n, _ in net.named_parameters()]
    assert {n.split(".")[0] for n in names} == {"generator", "upsampler1", "upsampler2"}
    net.save(tmp_path / "a.gfck")
    back = CompletionNet.load(tmp_path / "a.gfck", cfg)
    back.save(tmp_path / "b.gfck")
    assert (tmp_path / "a.gfck").read_bytes() == (tmp_path / "b.gfck").read_bytes()


def test_ablation_flags_build(cfg):
    pts = half_sphere(64)
    for flags in ({"use_ccm": False}, {"use_alignment": False}, {"use_inception": False}):
        net = CompletionNet(cfg.with_(**flags), seed=0)
        assert net(pts).p2.shape == (cfg.n_out, 3)
    no_ccm = CompletionNet(cfg.with_(use_ccm=False), seed=0)
    assert not any(n.startswith("generator.ccm_encoder") for n, _ in no_ccm.named_parameters())


def test_blocks_pass_gradcheck():
    for check in run_blocks(seed=1, probes=20):
        assert check.passed, check.line()
