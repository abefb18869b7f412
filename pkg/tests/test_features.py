import numpy as np
import pytest

from fftattn import (
    ELU_PLUS_ONE,
    ORF,
    PRF,
    SPHERE_PRF,
    TRF,
    FeatureMapOverflowError,
    FeatureMapSpec,
    RngState,
    ShapeError,
    apply_feature_map,
    kernel_estimate,
    load_feature_map,
    prf_variance_closed_form,
    row_l2_normalize,
    sample_feature_map,
    save_feature_map,
)


def unit_pair(seed, d=8):
    rng = RngState(seed)
    x = row_l2_normalize(rng.normal(d)[None, :])[0]
    y = row_l2_normalize(rng.normal(d)[None, :])[0]
    return x, y


class TestSampling:
    def test_deterministic(self):
        a = sample_feature_map(PRF, 6, 4, RngState(1))
        b = sample_feature_map(PRF, 6, 4, RngState(1))
        assert a.w.tobytes() == b.w.tobytes()

    def test_sphere_row_norms(self):
        spec = sample_feature_map(SPHERE_PRF, 8, 16, RngState(2))
        norms = np.linalg.norm(spec.w, axis=1)
        assert np.max(np.abs(norms - 4.0)) < 1e-10

    def test_orf_gram_identity(self):
        spec = sample_feature_map(ORF, 8, 8, RngState(3))
        unit = row_l2_normalize(spec.w)
        gram = unit @ unit.T
        assert np.max(np.abs(gram - np.eye(8))) < 1e-10

    def test_elu_kind_has_no_projection(self):
        spec = sample_feature_map(ELU_PLUS_ONE, 5, 3, RngState(4))
        assert spec.w is None
        assert spec.output_dim == 3

    def test_trf_output_width(self):
        spec = sample_feature_map(TRF, 5, 3, RngState(5))
        assert spec.output_dim == 10

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            FeatureMapSpec(kind="nope", m=2, d=2, w=np.ones((2, 2)), seed=0)
        with pytest.raises(ShapeError):
            FeatureMapSpec(kind=PRF, m=2, d=2, w=np.ones((3, 2)), seed=0)


class TestApply:
    def test_prf_at_zero(self):
        spec = sample_feature_map(PRF, 4, 3, RngState(6))
        out = apply_feature_map(spec, np.zeros((2, 3)))
        assert np.array_equal(out, np.full((2, 4), 0.5))  # 1/sqrt(4)
        assert kernel_estimate(spec, np.zeros(3), np.zeros(3)) == 1.0

    def test_trf_at_zero(self):
        spec = sample_feature_map(TRF, 4, 3, RngState(7))
        out = apply_feature_map(spec, np.zeros((1, 3)))
        assert np.array_equal(out[0, :4], np.zeros(4))
        assert np.array_equal(out[0, 4:], np.full(4, 0.5))
        assert np.isclose(kernel_estimate(spec, np.zeros(3), np.zeros(3)), 1.0)

    def test_elu_plus_one_values(self):
        spec = sample_feature_map(ELU_PLUS_ONE, 3, 3, RngState(8))
        out = apply_feature_map(spec, np.array([[-1.0, 0.0, 2.0]]))
        assert np.allclose(out, [[np.exp(-1.0), 1.0, 3.0]], atol=1e-15)

    def test_elu_kernel_estimate_is_not_exponential(self):
        spec = sample_feature_map(ELU_PLUS_ONE, 4, 4, RngState(9))
        assert kernel_estimate(spec, np.zeros(4), np.zeros(4)) == 4.0

    def test_positivity(self):
        rng = RngState(10)
        x = rng.normal(20).reshape(5, 4)
        for kind in (PRF, SPHERE_PRF, ORF, ELU_PLUS_ONE):
            spec = sample_feature_map(kind, 6, 4, RngState(11))
            assert np.all(apply_feature_map(spec, x) > 0.0), kind

    def test_dimension_mismatch(self):
        spec = sample_feature_map(PRF, 4, 3, RngState(12))
        with pytest.raises(ShapeError):
            apply_feature_map(spec, np.zeros((2, 5)))

    def test_prf_overflow_guard(self):
        # a large projection row pushes w.x - |x|^2/2 past the float64 limit
        w = np.array([[1500.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        spec = FeatureMapSpec(kind=PRF, m=2, d=3, w=w, seed=0)
        with pytest.raises(FeatureMapOverflowError):
            apply_feature_map(spec, np.array([[1.0, 0.0, 0.0]]))

    def test_trf_overflow_guard(self):
        spec = sample_feature_map(TRF, 4, 3, RngState(14))
        with pytest.raises(FeatureMapOverflowError):
            apply_feature_map(spec, np.full((1, 3), 30.0))  # |x|^2/2 = 1350


class TestKernelEstimates:
    def test_prf_unbiased_monte_carlo(self):
        # mean over many independent maps approaches exp(x.y)
        x, y = unit_pair(15)
        samples = 20_000
        rng = RngState(16)
        estimates = np.array([
            kernel_estimate(sample_feature_map(PRF, 1, 8, rng), x, y)
            for _ in range(samples)
        ])
        se = estimates.std(ddof=1) / np.sqrt(samples)
        assert abs(estimates.mean() - np.exp(x @ y)) < 4 * se

    def test_trf_unbiased_monte_carlo(self):
        x, y = unit_pair(17)
        samples = 20_000
        rng = RngState(18)
        estimates = np.array([
            kernel_estimate(sample_feature_map(TRF, 1, 8, rng), x, y)
            for _ in range(samples)
        ])
        se = estimates.std(ddof=1) / np.sqrt(samples)
        assert abs(estimates.mean() - np.exp(x @ y)) < 4 * se


class TestVarianceClosedForm:
    def test_zero_at_origin(self):
        z = np.zeros(4)
        assert prf_variance_closed_form(z, z, 1) == 0.0

    def test_unit_vector_value(self):
        e1 = np.eye(4)[0]
        want = (np.exp(4.0) - 1.0) * np.exp(1.0) ** 2   # about 396.04
        assert np.isclose(prf_variance_closed_form(e1, e1, 1), want, rtol=1e-12)
        assert 396.0 < want < 396.1

    def test_doubling_m_halves(self):
        x, y = unit_pair(19)
        assert np.isclose(prf_variance_closed_form(x, y, 2),
                          prf_variance_closed_form(x, y, 1) / 2.0, rtol=1e-12)

    def test_monotone_in_scale_and_blows_up(self):
        e1 = np.eye(4)[0]
        values = [prf_variance_closed_form(r * e1, r * e1, 1)
                  for r in (0.5, 1.0, 1.5, 2.0)]
        assert all(a < b for a, b in zip(values, values[1:]))
        assert values[-1] > 1e6

    def test_matches_monte_carlo(self):
        # gentle norms keep the variance of the sample variance small
        x = 0.5 * np.eye(4)[0]
        y = 0.5 * np.eye(4)[1]
        rng = RngState(20)
        samples = 200_000
        w = rng.normal(samples * 4).reshape(samples, 4)
        estimates = np.exp(w @ (x + y) - 0.5 * (x @ x + y @ y))
        closed = prf_variance_closed_form(x, y, 1)
        assert abs(np.var(estimates, ddof=1) - closed) / closed < 0.15


def test_save_load_round_trip(tmp_path):
    for kind in (PRF, TRF, SPHERE_PRF, ORF, ELU_PLUS_ONE):
        spec = sample_feature_map(kind, 5, 3, RngState(21))
        base = str(tmp_path / f"map_{kind}")
        save_feature_map(spec, base)
        loaded = load_feature_map(base)
        assert loaded.kind == spec.kind
        assert (loaded.m, loaded.d, loaded.seed) == (spec.m, spec.d, spec.seed)
        if spec.w is None:
            assert loaded.w is None
        else:
            assert np.array_equal(loaded.w, spec.w)
