import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from scaffusion.spp import KITTI_KERNELS, SPP, VOID_KERNELS, SppConfig, pool_pyramid, sparse_input


def random_sparse(h=24, w=24, density=0.05, seed=0):
    r = np.random.default_rng(seed)
    values = np.where(r.random((h, w)) < density, r.uniform(0.5, 10, (h, w)), 0.0)
    return sparse_input(torch.from_numpy(values)[None, None])


def test_config_validation():
    assert SppConfig().kernel_sizes == VOID_KERNELS
    assert KITTI_KERNELS == (5, 7, 9, 11)
    for bad in [(4, 7), (1, 3), (7, 5), (5, 5)]:
        with pytest.raises(ValueError):
            SppConfig(kernel_sizes=bad)


def test_sparse_input_channels():
    z = torch.tensor([[[[0.0, 2.0], [3.0, 0.0]]]])
    x = sparse_input(z)
    assert torch.equal(x[:, 1], torch.tensor([[[0.0, 1.0], [1.0, 0.0]]]))


def test_single_point_fills_kernel_block():
    z = torch.zeros(1, 1, 15, 15, dtype=torch.float64)
    z[0, 0, 7, 7] = 4.0
    p = pool_pyramid(sparse_input(z), (5,))
    level = p[0, 2]
    expected = torch.zeros(15, 15, dtype=torch.float64)
    expected[5:10, 5:10] = 4.0
    assert torch.equal(level, expected)
    assert p.shape[1] == 4


def test_dense_validity_stays_dense_and_empty_kernel_list():
    x = sparse_input(torch.rand(1, 1, 9, 9) + 0.1)
    p = pool_pyramid(x, VOID_KERNELS)
    assert p.shape[1] == 12
    assert torch.all(p[:, 1::2] == 1)
    assert torch.equal(pool_pyramid(x, ()), x)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.sampled_from([VOID_KERNELS, KITTI_KERNELS, (3, 9), (7,)]))
def test_cascaded_pooling_equals_direct_max_pool(seed, kernels):
    x = random_sparse(seed=seed, density=0.1)
    p = pool_pyramid(x, kernels)
    for i, k in enumerate(kernels):
        direct = F.max_pool2d(x, k, stride=1, padding=k // 2)
        assert torch.equal(p[:, 2 * (i + 1):2 * (i + 2)], direct)


def test_support_is_morphological_dilation():
    x = random_sparse(h=17, w=19, density=0.04, seed=3)
    p = pool_pyramid(x, VOID_KERNELS)
    mask = x[0, 1].numpy().astype(bool)
    for i, k in enumerate(VOID_KERNELS):
        dilated = ndimage.binary_dilation(mask, structure=np.ones((k, k), bool))
        assert np.array_equal(p[0, 2 * (i + 1) + 1].numpy().astype(bool), dilated)


def test_translation_equivariance_in_interior():
    x = random_sparse(h=32, w=32, density=0.05, seed=4)
    shifted = torch.zeros_like(x)
    shifted[..., 2:, 3:] = x[..., :-2, :-3]
    a = pool_pyramid(x, VOID_KERNELS)
    b = pool_pyramid(shifted, VOID_KERNELS)
    assert torch.equal(b[..., 2 + 8:-8, 3 + 8:-8], a[..., 8:-8 - 2, 8:-8 - 3])


class TestFuse:
    def test_zero_weights_give_zero_map(self):
        spp = SPP().double()
        for layer in spp.layers.values():
            torch.nn.init.zeros_(layer.weight)
            torch.nn.init.zeros_(layer.bias)
        assert torch.all(spp(random_sparse()) == 0)

    def test_identity_weights_pass_levels_through(self):
        spp = SPP(SppConfig(kernel_sizes=(5,), conv_channels=(4, 4, 4))).double()
        for layer in spp.layers.values():
            torch.nn.init.zeros_(layer.bias)
            with torch.no_grad():
                layer.weight.copy_(torch.eye(4, dtype=torch.float64).view(4, 4, 1, 1))
        x = random_sparse()
        assert torch.equal(spp(x), pool_pyramid(x, (5,)))

    def test_channel_mismatch(self):
        spp = SPP()
        with pytest.raises(ValueError):
            spp.fuse(torch.zeros(1, 5, 4, 4))

    def test_receptive_field_is_largest_kernel(self):
        torch.manual_seed(0)
        spp = SPP().double()
        base = torch.zeros(1, 2, 31, 31, dtype=torch.float64)
        bumped = base.clone()
        bumped[0, 0, 15, 15] = 5.0
        bumped[0, 1, 15, 15] = 1.0
        changed = (spp(bumped) != spp(base)).any(1)[0]
        ys, xs = np.nonzero(changed.numpy())
        assert ys.min() == 15 - 6 and ys.max() == 15 + 6 and xs.min() == 9 and xs.max() == 21

    def test_fused_coverage_not_below_raw_coverage(self):
        # With biases disabled and positive weights, every pixel inside the
        # pyramid support produces a nonzero feature.
        spp = SPP().double()
        for layer in spp.layers.values():
            torch.nn.init.zeros_(layer.bias)
            with torch.no_grad():
                layer.weight.abs_()
        for seed in range(5):
            x = random_sparse(density=0.02, seed=seed)
            fused = (spp(x) != 0).any(1).double().mean()
            assert fused >= x[:, 1].mean()
