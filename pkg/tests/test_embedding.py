import numpy as np
import pytest
import torch

from nncl_tllm.embedding import (PatchEmbedding, SeriesEmbedding, patch_count,
                                 patchify)


def brute_force_patches(x: np.ndarray, patch_len: int, stride: int) -> np.ndarray:
    """Independent enumerator: pad with stride replicas of the final value,
    then take every full window at the given stride."""
    padded = np.concatenate([x, np.repeat(x[-1], stride)])
    out = []
    start = 0
    while start + patch_len <= len(padded):
        out.append(padded[start:start + patch_len])
        start += stride
    return np.stack(out)


class TestPatchify:
    def test_reference_case(self):
        assert patch_count(512, 16, 8) == 64

    def test_boundary_equal_lengths(self):
        x = torch.arange(8, dtype=torch.float64)
        patches = patchify(x, 8, 8)
        assert patches.shape == (1, 2, 8)
        # second patch is entirely replicas of the final value
        np.testing.assert_array_equal(patches[0, 1].numpy(), np.full(8, 7.0))

    def test_too_short(self):
        with pytest.raises(ValueError, match="shorter"):
            patchify(torch.zeros(8), 16, 8)

    def test_formula_against_brute_force_grid(self):
        rng = np.random.default_rng(7)
        lengths = list(range(16, 513, 31)) + [16, 512]
        for T in lengths:
            for C in (4, 8, 16, 32):
                if C > T:
                    continue
                for S in range(1, C + 1):
                    x = rng.normal(size=T)
                    brute = brute_force_patches(x, C, S)
                    got = patchify(torch.as_tensor(x), C, S)[0].numpy()
                    assert got.shape[0] == (T - C) // S + 2
                    np.testing.assert_array_equal(got, brute)


class TestPatchEmbedding:
    def test_identity_map(self):
        emb = PatchEmbedding(4, 4).double()
        with torch.no_grad():
            emb.proj.weight.copy_(torch.eye(4))
            emb.proj.bias.zero_()
        patches = torch.randn(1, 3, 4, dtype=torch.float64)
        np.testing.assert_allclose(emb(patches).detach().numpy(), patches.numpy())

    def test_bias_only(self):
        emb = PatchEmbedding(3, 5).double()
        with torch.no_grad():
            emb.proj.weight.zero_()
            emb.proj.bias.copy_(torch.ones(5))
        out = emb(torch.zeros(1, 4, 3, dtype=torch.float64))
        np.testing.assert_array_equal(out.detach().numpy(), np.ones((1, 4, 5)))

    def test_matrix_product_oracle(self, rng):
        emb = PatchEmbedding(3, 4).double()
        patches = torch.as_tensor(rng.normal(size=(1, 2, 3)))
        out = emb(patches).detach().numpy()
        A = emb.proj.weight.detach().numpy()
        b = emb.proj.bias.detach().numpy()
        expect = patches.numpy() @ A.T + b
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="patch length"):
            PatchEmbedding(3, 4)(torch.zeros(1, 2, 5))

    def test_linearity(self, rng):
        emb = PatchEmbedding(4, 6).double()
        with torch.no_grad():
            emb.proj.bias.zero_()
        x = torch.as_tensor(rng.normal(size=(1, 3, 4)))
        y = torch.as_tensor(rng.normal(size=(1, 3, 4)))
        lhs = emb(2.0 * x + 3.0 * y)
        rhs = 2.0 * emb(x) + 3.0 * emb(y)
        np.testing.assert_allclose(lhs.detach().numpy(), rhs.detach().numpy(),
                                   atol=1e-12)


class TestSeriesEmbedding:
    def test_flatten_projection_case(self):
        se = SeriesEmbedding(3, 2, mode="flatten").double()
        with torch.no_grad():
            se.proj.weight.zero_()
            se.proj.weight[:, :2].copy_(torch.eye(2))   # select first patch
            se.proj.bias.zero_()
        p = torch.randn(1, 3, 2, dtype=torch.float64)
        np.testing.assert_allclose(se(p).detach().numpy(), p[:, 0].numpy())

    def test_bias_only(self):
        se = SeriesEmbedding(3, 2, mode="flatten").double()
        with torch.no_grad():
            se.proj.weight.zero_()
            se.proj.bias.copy_(torch.tensor([1.5, -2.0]))
        out = se(torch.zeros(2, 3, 2, dtype=torch.float64))
        np.testing.assert_array_equal(out.detach().numpy(), [[1.5, -2.0]] * 2)

    def test_flatten_matrix_oracle(self, rng):
        se = SeriesEmbedding(3, 2, mode="flatten").double()
        p = torch.as_tensor(rng.normal(size=(1, 3, 2)))
        L = se.proj.weight.detach().numpy()
        c = se.proj.bias.detach().numpy()
        expect = L @ p.numpy().reshape(-1) + c   # row-major flatten over patches
        np.testing.assert_allclose(se(p).detach().numpy()[0], expect, atol=1e-12)

    def test_mean_mode_oracle(self, rng):
        se = SeriesEmbedding(4, 3, mode="mean").double()
        p = torch.as_tensor(rng.normal(size=(2, 4, 3)))
        L = se.proj.weight.detach().numpy()
        c = se.proj.bias.detach().numpy()
        expect = p.numpy().mean(axis=1) @ L.T + c
        np.testing.assert_allclose(se(p).detach().numpy(), expect, atol=1e-12)

    def test_patch_count_mismatch(self):
        se = SeriesEmbedding(3, 2, mode="flatten")
        with pytest.raises(ValueError, match="patches"):
            se(torch.zeros(1, 4, 2))

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="mode"):
            SeriesEmbedding(3, 2, mode="max")


def test_embedding_gradients_match_finite_differences(rng):
    # scalar function of Z versus central differences on every parameter
    emb = PatchEmbedding(4, 3).double()
    se = SeriesEmbedding(3, 3, mode="flatten").double()
    x = torch.as_tensor(rng.normal(size=(2, 3, 4)))
    weights = torch.as_tensor(rng.normal(size=3))

    def scalar():
        return (se(emb(x)) * weights).sum()

    loss = scalar()
    loss.backward()
    eps = 1e-6
    for module in (emb, se):
        for p in module.parameters():
            grad = p.grad.clone()
            flat = p.data.view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + eps
                hi = float(scalar().detach())
                flat[i] = orig - eps
                lo = float(scalar().detach())
                flat[i] = orig
                fd = (hi - lo) / (2 * eps)
                g = float(grad.view(-1)[i])
                assert abs(fd - g) <= 1e-4 * max(1.0, abs(fd))
