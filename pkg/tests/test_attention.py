import numpy as np
import pytest

from fftattn import (
    AttentionConfig,
    DegenerateRowError,
    PRF,
    RngState,
    RpeBias,
    ShapeError,
    ToeplitzKernel,
    apply_feature_map,
    attention_scores,
    gaussian_matrix,
    kernelized_attention,
    kernelized_attention_rpe_naive,
    row_l2_normalize,
    rpe_nka,
    rpe_nka_projected,
    sample_feature_map,
    softmax_attention,
)

NO_TEMP = AttentionConfig(temperature="none")


def rel_frobenius(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def rpe_inputs(seed, n, m, d, bias_scale=0.5):
    rng = RngState(seed)
    qn = row_l2_normalize(gaussian_matrix(rng, n, d))
    kn = row_l2_normalize(gaussian_matrix(rng, n, d))
    vp = gaussian_matrix(rng, n, d)
    bias = RpeBias.gaussian(rng, n, scale=bias_scale)
    spec = sample_feature_map(PRF, m, d, rng)
    return qn, kn, vp, bias, spec


def eq8_scalar_oracle(phi_q, phi_k, v, kernel, guard=1e-6):
    """Independent scalar re-derivation of position-weighted kernelized attention."""
    n = phi_k.shape[0]
    z = np.zeros_like(v)
    for i in range(n):
        num = np.zeros(v.shape[1])
        den = 0.0
        for j in range(n):
            sim = float(phi_q[i] @ phi_k[j]) * kernel.offset(j - i)
            num += sim * v[j]
            den += sim
        if den >= 0:
            den = max(den, guard)
        else:
            den = min(den, -guard)
        z[i] = num / den
    return z


class TestSoftmaxAttention:
    def test_single_position_returns_projected_value(self):
        rng = RngState(0)
        q, k, v = (gaussian_matrix(rng, 1, 4) for _ in range(3))
        wq, wk, wv = (gaussian_matrix(rng, 4, 4) for _ in range(3))
        z = softmax_attention(q, k, v, wq, wk, wv)
        assert np.array_equal(z, v @ wv)

    def test_identical_keys_give_mean_of_values(self):
        rng = RngState(1)
        q = gaussian_matrix(rng, 5, 3)
        k = np.tile(gaussian_matrix(rng, 1, 3), (5, 1))
        v = gaussian_matrix(rng, 5, 3)
        wq, wk, wv = (gaussian_matrix(rng, 3, 3) for _ in range(3))
        z = softmax_attention(q, k, v, wq, wk, wv)
        mean_row = (v @ wv).mean(axis=0)
        assert np.allclose(z, np.tile(mean_row, (5, 1)), atol=1e-12)

    def test_strong_diagonal_bias_concentrates_attention(self):
        rng = RngState(2)
        n, d = 6, 4
        q, k = gaussian_matrix(rng, n, d), gaussian_matrix(rng, n, d)
        b = np.zeros(2 * n - 1)
        b[n - 1] = 50.0  # offset zero
        scores = attention_scores(q, k, np.eye(d), np.eye(d),
                                  bias=RpeBias.from_offsets(b))
        assert np.all(np.diag(scores) >= 0.999)

    def test_blocked_path_matches_scores_path(self):
        rng = RngState(3)
        n, d = 130, 8  # spans several softmax blocks when block size is forced tiny
        q, k, v = (gaussian_matrix(rng, n, d) for _ in range(3))
        wq, wk, wv = (gaussian_matrix(rng, d, d) for _ in range(3))
        bias = RpeBias.gaussian(rng, n, scale=0.3)
        cfg = AttentionConfig(causal=True)
        import fftattn.attention as attn_mod
        saved = attn_mod._SOFTMAX_BLOCK_ELEMENTS
        try:
            attn_mod._SOFTMAX_BLOCK_ELEMENTS = 512
            z = softmax_attention(q, k, v, wq, wk, wv, bias, cfg)
        finally:
            attn_mod._SOFTMAX_BLOCK_ELEMENTS = saved
        want = attention_scores(q, k, wq, wk, bias, cfg) @ (v @ wv)
        assert rel_frobenius(z, want) < 1e-12


class TestAttentionScores:
    def test_zero_inputs_uniform(self):
        n, d = 5, 3
        scores = attention_scores(np.zeros((n, d)), np.zeros((n, d)),
                                  np.eye(d), np.eye(d))
        assert np.allclose(scores, np.full((n, n), 1.0 / n), atol=1e-15)

    def test_rows_sum_to_one(self):
        rng = RngState(4)
        scores = attention_scores(gaussian_matrix(rng, 7, 4), gaussian_matrix(rng, 7, 4),
                                  gaussian_matrix(rng, 4, 4), gaussian_matrix(rng, 4, 4))
        assert np.max(np.abs(scores.sum(axis=1) - 1.0)) < 1e-12

    def test_hand_two_key_instance(self):
        # logits (0, ln 3) must softmax to (0.25, 0.75)
        q = np.array([[1.0, 0.0], [1.0, 0.0]])
        k = np.array([[0.0, 0.0], [np.log(3.0), 0.0]])
        scores = attention_scores(q, k, np.eye(2), np.eye(2), cfg=NO_TEMP)
        assert np.allclose(scores, [[0.25, 0.75], [0.25, 0.75]], atol=1e-14)

    def test_causal_structure(self):
        rng = RngState(5)
        scores = attention_scores(gaussian_matrix(rng, 6, 3), gaussian_matrix(rng, 6, 3),
                                  np.eye(3), np.eye(3),
                                  cfg=AttentionConfig(causal=True))
        assert np.array_equal(np.triu(scores, k=1), np.zeros((6, 6)))
        assert np.max(np.abs(scores.sum(axis=1) - 1.0)) < 1e-12

    def test_all_masked_row_raises(self):
        n = 3
        bias = RpeBias(n=n, b=np.zeros(2 * n - 1),
                       masked=np.ones(2 * n - 1, dtype=bool))
        rng = RngState(6)
        with pytest.raises(DegenerateRowError):
            attention_scores(gaussian_matrix(rng, n, 2), gaussian_matrix(rng, n, 2),
                             np.eye(2), np.eye(2), bias=bias)

    def test_normalized_rows_bound_logits(self):
        rng = RngState(7)
        q, k = gaussian_matrix(rng, 8, 4) * 50, gaussian_matrix(rng, 8, 4) * 50
        cfg = AttentionConfig(normalize_qk=True, temperature="none")
        scores = attention_scores(q, k, np.eye(4), np.eye(4), cfg=cfg)
        # unit rows keep every logit within [-1, 1], so no score can saturate
        assert scores.max() <= np.exp(2.0) / (np.exp(2.0) + (8 - 1) * np.exp(-2.0))


class TestKernelizedAttention:
    def test_single_position(self):
        rng = RngState(8)
        phi_q = np.abs(gaussian_matrix(rng, 1, 5)) + 0.1
        phi_k = np.abs(gaussian_matrix(rng, 1, 5)) + 0.1
        v = gaussian_matrix(rng, 1, 3)
        z = kernelized_attention(phi_q, phi_k, v)
        assert np.allclose(z, v, rtol=1e-12, atol=0)

    def test_constant_features_give_mean(self):
        rng = RngState(9)
        v = gaussian_matrix(rng, 6, 3)
        phi = np.full((6, 4), 0.7)
        z = kernelized_attention(phi, phi, v)
        assert np.allclose(z, np.tile(v.mean(axis=0), (6, 1)), atol=1e-12)

    def test_matches_double_loop_oracle(self):
        rng = RngState(10)
        n, m, dv = 9, 5, 3
        phi_q = np.exp(gaussian_matrix(rng, n, m))
        phi_k = np.exp(gaussian_matrix(rng, n, m))
        v = gaussian_matrix(rng, n, dv)
        want = np.zeros((n, dv))
        for i in range(n):
            num = np.zeros(dv)
            den = 0.0
            for j in range(n):
                sim = float(phi_q[i] @ phi_k[j])
                num += sim * v[j]
                den += sim
            want[i] = num / den
        assert rel_frobenius(kernelized_attention(phi_q, phi_k, v), want) < 1e-10

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            kernelized_attention(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 2)))


class TestRpeNaive:
    def test_ones_kernel_collapses_to_plain(self):
        rng = RngState(11)
        n, m, dv = 8, 4, 3
        phi_q = np.exp(gaussian_matrix(rng, n, m))
        phi_k = np.exp(gaussian_matrix(rng, n, m))
        v = gaussian_matrix(rng, n, dv)
        plain = kernelized_attention(phi_q, phi_k, v)
        with_ones = kernelized_attention_rpe_naive(phi_q, phi_k, v, ToeplitzKernel.ones(n))
        assert rel_frobenius(with_ones, plain) < 1e-12

    def test_identity_kernel_returns_values(self):
        rng = RngState(12)
        n, m, dv = 7, 4, 3
        phi_q = np.exp(gaussian_matrix(rng, n, m))
        phi_k = np.exp(gaussian_matrix(rng, n, m))
        v = gaussian_matrix(rng, n, dv)
        z = kernelized_attention_rpe_naive(phi_q, phi_k, v, ToeplitzKernel.identity(n))
        assert np.allclose(z, v, rtol=1e-12, atol=1e-14)

    def test_matches_scalar_rederivation(self):
        rng = RngState(13)
        n, m, dv = 6, 3, 2
        phi_q = np.exp(gaussian_matrix(rng, n, m))
        phi_k = np.exp(gaussian_matrix(rng, n, m))
        v = gaussian_matrix(rng, n, dv)
        kernel = ToeplitzKernel.from_offsets(np.exp(RngState(14).normal(2 * n - 1)))
        got = kernelized_attention_rpe_naive(phi_q, phi_k, v, kernel)
        want = eq8_scalar_oracle(phi_q, phi_k, v, kernel)
        assert rel_frobenius(got, want) < 1e-12


class TestRpeNka:
    @pytest.mark.parametrize("causal", [False, True])
    @pytest.mark.parametrize("n", [1, 7, 64])
    def test_matches_naive_oracle(self, n, causal):
        qn, kn, vp, bias, spec = rpe_inputs(20 + n, n, 4, 4)
        kernel = bias.to_kernel(causal=causal)
        want = kernelized_attention_rpe_naive(
            apply_feature_map(spec, qn), apply_feature_map(spec, kn), vp, kernel)
        got = rpe_nka_projected(qn, kn, vp, bias, spec, causal=causal)
        assert rel_frobenius(got, want) < 1e-8

    def test_radix2_engine_matches(self):
        qn, kn, vp, bias, spec = rpe_inputs(30, 33, 4, 4)
        a = rpe_nka_projected(qn, kn, vp, bias, spec)
        b = rpe_nka_projected(qn, kn, vp, bias, spec, engine="radix2")
        assert rel_frobenius(a, b) < 1e-12

    def test_zero_bias_no_normalize_reduces_to_kernelized(self):
        rng = RngState(31)
        n, m, d = 64, 8, 4
        q, k, v = (gaussian_matrix(rng, n, d) for _ in range(3))
        wq, wk, wv = (gaussian_matrix(rng, d, d) * 0.5 for _ in range(3))
        spec = sample_feature_map(PRF, m, d, rng)
        cfg = AttentionConfig(normalize_qk=False, temperature="none")
        got = rpe_nka(q, k, v, wq, wk, wv, RpeBias.zeros(n), spec, cfg)
        want = kernelized_attention(apply_feature_map(spec, q @ wq),
                                    apply_feature_map(spec, k @ wk), v @ wv)
        assert rel_frobenius(got, want) < 1e-10

    def test_single_position_returns_projected_value(self):
        rng = RngState(32)
        q, k, v = (gaussian_matrix(rng, 1, 4) for _ in range(3))
        wq, wk, wv = (gaussian_matrix(rng, 4, 4) for _ in range(3))
        spec = sample_feature_map(PRF, 4, 4, rng)
        z = rpe_nka(q, k, v, wq, wk, wv, RpeBias.zeros(1), spec)
        assert np.allclose(z, v @ wv, rtol=1e-12, atol=1e-14)

    def test_output_in_convex_hull_of_values(self):
        # positive features + nonnegative kernel make the implied weights a
        # distribution; verify them explicitly and reconstruct the output
        n, m, d = 12, 6, 4
        qn, kn, vp, bias, spec = rpe_inputs(33, n, m, d)
        phi_q = apply_feature_map(spec, qn)
        phi_k = apply_feature_map(spec, kn)
        kernel = bias.to_kernel()
        weights = (phi_q @ phi_k.T) * kernel.dense()
        assert np.all(weights >= 0.0)
        weights /= weights.sum(axis=1, keepdims=True)
        z = rpe_nka_projected(qn, kn, vp, bias, spec)
        assert rel_frobenius(z, weights @ vp) < 1e-8
        assert np.all(z.min(axis=0) >= vp.min(axis=0) - 1e-8)
        assert np.all(z.max(axis=0) <= vp.max(axis=0) + 1e-8)

    def test_permutation_equivariance_without_bias(self):
        n, m, d = 10, 5, 4
        qn, kn, vp, _, spec = rpe_inputs(34, n, m, d)
        perm = RngState(35).uniform(n).argsort()
        base = rpe_nka_projected(qn, kn, vp, RpeBias.zeros(n), spec)
        permuted = rpe_nka_projected(qn[perm], kn[perm], vp[perm], RpeBias.zeros(n), spec)
        assert rel_frobenius(permuted, base[perm]) < 1e-10

    def test_bias_breaks_permutation_equivariance(self):
        n, m, d = 10, 5, 4
        qn, kn, vp, bias, spec = rpe_inputs(36, n, m, d, bias_scale=1.0)
        perm = RngState(37).uniform(n).argsort()
        base = rpe_nka_projected(qn, kn, vp, bias, spec)
        permuted = rpe_nka_projected(qn[perm], kn[perm], vp[perm], bias, spec)
        assert np.linalg.norm(permuted - base[perm]) > 1e-3

    def test_causal_rows_ignore_future_positions(self):
        n, m, d = 32, 4, 4
        qn, kn, vp, bias, spec = rpe_inputs(38, n, m, d)
        base = rpe_nka_projected(qn, kn, vp, bias, spec, causal=True)
        for i in (0, 7, 20, 30):
            kn2, vp2, qn2 = kn.copy(), vp.copy(), qn.copy()
            kn2[i + 1:] += 3.0
            vp2[i + 1:] -= 5.0
            qn2[i + 1:] *= -1.0
            bumped = rpe_nka_projected(qn2, kn2, vp2, bias, spec, causal=True)
            assert np.max(np.abs(bumped[: i + 1] - base[: i + 1])) <= 1e-12

    def test_averaging_over_maps_approaches_softmax(self):
        rng = RngState(39)
        n, d = 16, 4
        q, k, v = (gaussian_matrix(rng, n, d) for _ in range(3))
        wq, wk, wv = (gaussian_matrix(rng, d, d) for _ in range(3))
        bias = RpeBias.gaussian(rng, n, scale=0.5)
        cfg = AttentionConfig(normalize_qk=True, temperature="none")
        exact = softmax_attention(q, k, v, wq, wk, wv, bias, cfg)
        errors = {}
        for m in (4, 1024):
            outputs = [
                rpe_nka(q, k, v, wq, wk, wv, bias,
                        sample_feature_map(PRF, m, d, rng.spawn(1000 * m + s)), cfg)
                for s in range(24)
            ]
            avg = np.mean(outputs, axis=0)
            errors[m] = np.abs(avg - exact).sum(axis=1).mean()
        assert errors[1024] < errors[4]

    def test_empty_input_rejected(self):
        spec = sample_feature_map(PRF, 2, 2, RngState(40))
        with pytest.raises(ShapeError):
            rpe_nka_projected(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2)),
                              RpeBias.zeros(1), spec)


class TestRpeBias:
    def test_neg_inf_entries_become_masked(self):
        b = np.array([0.0, -np.inf, 1.0])
        bias = RpeBias.from_offsets(b)
        assert bias.masked[1]
        kernel = bias.to_kernel()
        assert kernel.c[1] == 0.0
        assert np.allclose(kernel.c[[0, 2]], [1.0, np.e])

    def test_causal_kernel_zeroes_future_offsets(self):
        bias = RpeBias.zeros(4)
        kernel = bias.to_kernel(causal=True)
        assert np.array_equal(kernel.c[4:], np.zeros(3))
        assert np.array_equal(kernel.c[:4], np.ones(4))

    def test_oversized_bias_rejected(self):
        with pytest.raises(ValueError):
            RpeBias.from_offsets(np.array([0.0, 800.0, 0.0]))
