import os
import time

import numpy as np
import pytest

from densedepth.networks import (
    ConvLayerSpec,
    EncoderSpec,
    build_cpn,
    build_dcn,
    count_parameters,
    cpn_forward,
    cpn_score,
    dcn_forward,
    load_checkpoint,
    parameter_breakdown,
    reconstruction_energy,
    save_checkpoint,
)
from densedepth.tensor import Tensor, grad_check, no_grad, sum_all


def micro_cpn(eta=2, seed=0):
    d = EncoderSpec(base_channels=[4, 4], k=1.0, in_channels=1, block="plain_conv")
    i = EncoderSpec(base_channels=[4, 4], k=1.0, in_channels=3, block="plain_conv")
    return build_cpn(d, i, eta=eta, seed=seed, max_depth=80.0)


def micro_dcn(variant=False, seed=0):
    d = EncoderSpec(base_channels=[4, 8], k=0.5, in_channels=1, block="resnet_block")
    i = EncoderSpec(base_channels=[4, 8], k=1.5, in_channels=3, block="resnet_block")
    return build_dcn(d, i, unsupervised_variant=variant, seed=seed, max_depth=80.0)


def toy_inputs(h, w, b=1, seed=0):
    rng = np.random.default_rng(seed)
    d = np.abs(rng.normal(20.0, 5.0, size=(b, 1, h, w))) + 1.0
    img = rng.uniform(0, 1, size=(b, 3, h, w))
    return Tensor(d), Tensor(img)


class TestBuildCpn:
    def test_same_seed_bit_identical(self):
        a, b = micro_cpn(seed=11), micro_cpn(seed=11)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            assert np.array_equal(pa.data, pb.data)

    def test_different_seed_differs(self):
        a, b = micro_cpn(seed=1), micro_cpn(seed=2)
        assert any(not np.array_equal(pa.data, pb.data)
                   for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()))

    def test_eta_domain(self):
        with pytest.raises(ValueError, match="eta"):
            micro_cpn(eta=3)

    def test_bottleneck_must_compress(self):
        d = EncoderSpec(base_channels=[4, 4], k=1.0, in_channels=1, block="plain_conv")
        i = EncoderSpec(base_channels=[4, 4], k=1.0, in_channels=3, block="plain_conv")
        with pytest.raises(ValueError, match="compress"):
            build_cpn(d, i, eta=2, seed=0, bottleneck_ratio=1.0)

    def test_bottleneck_channels_capped(self):
        # two stride-2 stages: 16x spatial shrink, ratio 1/16 caps the last stage at 1 channel
        d = EncoderSpec(base_channels=[8, 64], k=1.0, in_channels=1, block="plain_conv")
        i = EncoderSpec(base_channels=[8, 8], k=1.0, in_channels=3, block="plain_conv")
        m = build_cpn(d, i, eta=2, seed=0, bottleneck_ratio=1.0 / 16.0)
        assert m.depth_encoder.channels[-1] == 1

    def test_desk_preset_builds_and_runs_fast(self):
        d = EncoderSpec(base_channels=[64, 128, 256], k=0.125, in_channels=1, block="plain_conv")
        i = EncoderSpec(base_channels=[64, 128, 256], k=0.125, in_channels=3, block="plain_conv")
        t0 = time.time()
        m = build_cpn(d, i, eta=2, seed=0)
        depth, img = toy_inputs(32, 32)
        out = cpn_forward(m, depth, img)
        assert time.time() - t0 < 1.0
        assert out.shape == (1, 1, 32, 32)


class TestCpnForward:
    @pytest.mark.parametrize("h,w", [(64, 192), (32, 96)])
    def test_output_shape_matches_depth(self, h, w):
        m = micro_cpn()
        depth, img = toy_inputs(h, w)
        out = cpn_forward(m, depth, img)
        assert out.shape == depth.shape

    def test_gradient_wrt_depth_input(self):
        m = micro_cpn()
        depth, img = toy_inputs(8, 8, seed=4)
        depth.requires_grad = True

        def f(d):
            return sum_all(cpn_forward(m, d, img))

        assert grad_check(f, [depth], eps=1e-5) <= 1e-4

    def test_zero_inputs_finite(self):
        m = micro_cpn()
        out = cpn_forward(m, Tensor(np.zeros((1, 1, 8, 8))), Tensor(np.zeros((1, 3, 8, 8))))
        assert np.all(np.isfinite(out.data))

    def test_misaligned_rejected(self):
        m = micro_cpn()
        with pytest.raises(ValueError, match="misaligned"):
            cpn_forward(m, Tensor(np.ones((1, 1, 8, 8))), Tensor(np.ones((1, 3, 8, 12))))

    def test_indivisible_size_rejected(self):
        m = micro_cpn()
        with pytest.raises(ValueError, match="divisible"):
            cpn_forward(m, Tensor(np.ones((1, 1, 6, 8))), Tensor(np.ones((1, 3, 6, 8))))

    def test_full_parameter_gradcheck_toy(self):
        # every parameter of a small prior net against central differences
        m = micro_cpn(seed=5)
        depth, img = toy_inputs(8, 8, seed=6)
        params = m.parameters()
        for p in params:
            p.requires_grad = True

        def f(*ps):
            return cpn_score(m, depth, img)

        assert grad_check(f, params, eps=1e-5) <= 1e-4


class TestCpnScore:
    def test_perfect_reconstruction_zero(self):
        d = Tensor(np.full((1, 1, 4, 4), 5.0))
        e = reconstruction_energy(d, Tensor(d.data.copy()), eta=2)
        assert e.item() == 0.0
        assert np.exp(-e.item()) == 1.0

    def test_residual_scaling_monotonicity(self):
        rng = np.random.default_rng(7)
        base = rng.normal(size=(1, 1, 4, 4))
        d = Tensor(np.zeros((1, 1, 4, 4)))
        for eta in (1, 2):
            e1 = reconstruction_energy(Tensor(base), d, eta).item()
            e2 = reconstruction_energy(Tensor(2 * base), d, eta).item()
            assert e2 == pytest.approx(2 ** eta * e1)

    def test_score_uses_model_eta(self):
        m = micro_cpn(eta=2)
        depth, img = toy_inputs(8, 8, seed=8)
        with no_grad():
            d_prime = cpn_forward(m, depth, img)
            expected = float(((d_prime.data - depth.data) ** 2).sum())
            assert cpn_score(m, depth, img).item() == pytest.approx(expected)


class TestBuildDcn:
    def test_same_seed_identical(self):
        a, b = micro_dcn(seed=3), micro_dcn(seed=3)
        assert a.param_bytes() == b.param_bytes()

    def test_full_size_spec_instantiates(self):
        d = EncoderSpec(base_channels=[64, 128, 256, 512, 512], k=0.25, in_channels=1, block="resnet_block")
        i = EncoderSpec(base_channels=[64, 128, 256, 512, 512], k=0.75, in_channels=3, block="resnet_block")
        m = build_dcn(d, i, unsupervised_variant=False, seed=0)
        n = count_parameters(m)
        assert n > 10_000_000

    def test_variant_toggles_stride_and_final_stage(self):
        sup = micro_dcn(variant=False)
        unsup = micro_dcn(variant=True)
        assert sup.depth_encoder.strides[0] == 1
        assert unsup.depth_encoder.strides[0] == 2
        # supervised: every decoder stage is a learned transposed conv
        assert all(st["deconv"] is not None for st in sup.up_stages)
        # variant: the final stage is parameter-free nearest-neighbor upsampling
        assert unsup.up_stages[-1]["deconv"] is None
        assert unsup.unsupervised_variant

    def test_branch_channel_multipliers(self):
        m = micro_dcn()
        assert m.depth_encoder.channels == [2, 4]
        assert m.image_encoder.channels == [6, 12]


class TestDcnForward:
    def test_strict_positivity(self):
        for variant in (False, True):
            m = micro_dcn(variant=variant, seed=9)
            rng = np.random.default_rng(10)
            z = np.zeros((2, 1, 8, 16))
            pts = rng.integers(0, 8 * 16, size=12)
            z.reshape(2, -1)[:, pts] = rng.uniform(1, 60, size=12)
            out = dcn_forward(m, Tensor(z), Tensor(rng.uniform(0, 1, size=(2, 3, 8, 16))))
            assert out.data.min() > 0.0
            assert out.shape == (2, 1, 8, 16)

    def test_different_sparse_inputs_different_outputs(self):
        m = micro_dcn(seed=11)
        rng = np.random.default_rng(12)
        img = Tensor(rng.uniform(0, 1, size=(1, 3, 8, 16)))
        z1 = np.zeros((1, 1, 8, 16))
        z2 = np.zeros((1, 1, 8, 16))
        z1[0, 0, 2, 3] = 10.0
        z2[0, 0, 5, 9] = 40.0
        out1 = dcn_forward(m, Tensor(z1), img)
        out2 = dcn_forward(m, Tensor(z2), img)
        assert not np.allclose(out1.data, out2.data)

    def test_depends_on_both_branches(self):
        m = micro_dcn(seed=13)
        rng = np.random.default_rng(14)
        z = np.abs(rng.normal(20, 5, size=(1, 1, 8, 16)))
        img = rng.uniform(0, 1, size=(1, 3, 8, 16))
        base = dcn_forward(m, Tensor(z), Tensor(img)).data
        no_depth = dcn_forward(m, Tensor(np.zeros_like(z)), Tensor(img)).data
        no_image = dcn_forward(m, Tensor(z), Tensor(np.zeros_like(img))).data
        assert not np.allclose(base, no_depth)
        assert not np.allclose(base, no_image)

    def test_deterministic_forward(self):
        m = micro_dcn(seed=15)
        depth, img = toy_inputs(8, 16, seed=16)
        a = dcn_forward(m, depth, img).data
        b = dcn_forward(m, depth, img).data
        assert np.array_equal(a, b)


class TestCountParameters:
    def test_fused_second_layer(self):
        assert count_parameters(ConvLayerSpec(64, 128)) == 73728

    def test_two_branch_second_layer(self):
        depth_branch = ConvLayerSpec(16, 32)
        image_branch = ConvLayerSpec(48, 96)
        assert count_parameters(depth_branch) == 4608
        assert count_parameters(image_branch) == 41472
        assert count_parameters([depth_branch, image_branch]) == 46080

    def test_zero_stage_spec(self):
        assert count_parameters([]) == 0

    def test_bias_counting_configurable(self):
        spec = ConvLayerSpec(4, 8)
        assert count_parameters(spec, include_bias=True) == count_parameters(spec) + 8

    def test_late_fusion_cheaper_at_every_stage(self):
        # two-branch vs fused single-conv layer arithmetic at each stage
        base = [64, 128, 256, 512, 512]
        prev_d, prev_i, prev_f = 1, 3, 4
        for c in base:
            cd, ci, cf = round(c * 0.25), round(c * 0.75), c
            two = count_parameters([ConvLayerSpec(prev_d, cd), ConvLayerSpec(prev_i, ci)])
            fused = count_parameters(ConvLayerSpec(prev_f, cf))
            assert two < fused
            prev_d, prev_i, prev_f = cd, ci, cf

    def test_breakdown_sums_to_total(self):
        m = micro_dcn()
        rows = parameter_breakdown(m)
        assert sum(n for _, n in rows) == count_parameters(m)
        assert all(name.endswith(".weight") for name, _ in rows)


class TestCheckpoints:
    def test_roundtrip_bit_exact(self, tmp_path):
        m = micro_dcn(seed=17)
        path = os.path.join(tmp_path, "model.ckpt")
        save_checkpoint(path, m, extra={"step": 42})
        loaded, extra = load_checkpoint(path)
        assert extra["step"] == "42"
        assert loaded.param_bytes() == m.param_bytes()
        assert loaded.config == m.config

    def test_cpn_roundtrip(self, tmp_path):
        m = micro_cpn(seed=18)
        path = os.path.join(tmp_path, "cpn.ckpt")
        save_checkpoint(path, m)
        loaded, _ = load_checkpoint(path)
        assert loaded.kind == "cpn"
        assert loaded.eta == m.eta
        assert loaded.param_bytes() == m.param_bytes()

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(os.path.join(tmp_path, "nope.ckpt"))

    def test_malformed_manifest_rejected(self, tmp_path):
        path = os.path.join(tmp_path, "bad.ckpt")
        with open(path, "w") as f:
            f.write("not a checkpoint\n")
        with pytest.raises(ValueError, match="not a checkpoint"):
            load_checkpoint(path)

    def test_forward_identical_after_roundtrip(self, tmp_path):
        m = micro_cpn(seed=19)
        depth, img = toy_inputs(8, 8, seed=20)
        before = cpn_forward(m, depth, img).data
        path = os.path.join(tmp_path, "cpn.ckpt")
        save_checkpoint(path, m)
        loaded, _ = load_checkpoint(path)
        after = cpn_forward(loaded, depth, img).data
        assert np.array_equal(before, after)


class TestFreeze:
    def test_freeze_blocks_parameter_grads_not_input(self):
        m = micro_cpn(seed=21)
        m.freeze()
        depth, img = toy_inputs(8, 8, seed=22)
        depth.requires_grad = True
        score = cpn_score(m, depth, img)
        score.backward()
        assert depth.grad is not None
        assert all(p.grad is None for p in m.parameters())
