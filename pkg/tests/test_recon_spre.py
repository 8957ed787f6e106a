import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from specrecon.errors import InvalidArgumentError
from specrecon.noise_lab import NoiseModel, inject_poisson
from specrecon.recon_single import build_wf
from specrecon.recon_spatial import apply_ssw, build_ssw
from specrecon.recon_spre import (
    GuidedFilterParams,
    box_mean,
    compute_hyperspectral_noise,
    generate_guide,
    guided_filter_channel,
    mix,
    spre_pipeline,
)
from specrecon.scenes import SceneSpec, generate_scene
from specrecon.cube_io import forward_project, normalize_pair
from specrecon.spectral_model import HyperCube, MultiCube, make_spatial_covariance


def cube_with_moment(T):
    """Two-pixel cube whose second-moment matrix is exactly ``T``."""
    L = np.linalg.cholesky(T)
    return MultiCube((np.sqrt(2.0) * L.T).reshape(1, 2, -1))


def reference_guided_filter(S, G, b, theta):
    """Window-by-window guided filter with mirrored borders."""
    r = b // 2
    h, w = S.shape
    Sp = np.pad(S, r, mode="symmetric")
    Gp = np.pad(G, r, mode="symmetric")
    a = np.zeros_like(S)
    bb = np.zeros_like(S)
    for y in range(h):
        for x in range(w):
            gs = Gp[y:y + b, x:x + b]
            ss = Sp[y:y + b, x:x + b]
            mg, ms = gs.mean(), ss.mean()
            a[y, x] = ((gs * ss).mean() - mg * ms) / (((gs - mg) ** 2).mean() + theta)
            bb[y, x] = ms - a[y, x] * mg
    ap = np.pad(a, r, mode="symmetric")
    bp = np.pad(bb, r, mode="symmetric")
    out = np.zeros_like(S)
    for y in range(h):
        for x in range(w):
            out[y, x] = ap[y:y + b, x:x + b].mean() * G[y, x] + bp[y:y + b, x:x + b].mean()
    return out


class TestGuide:
    def test_analytic_two_channel(self):
        k = 2.0
        noise = NoiseModel([1.0, 2.0])
        cube = cube_with_moment(np.array([[k, k], [k, k]]) + noise.matrix)
        g = generate_guide(cube, noise)
        np.testing.assert_allclose(g.weights, [0.8, 0.2], rtol=0, atol=1e-12)

    def test_symmetric_channels(self):
        t = np.random.default_rng(0).uniform(size=(10, 10, 1))
        cube = MultiCube(np.repeat(t, 4, axis=2))
        g = generate_guide(cube, NoiseModel(np.full(4, 0.01)))
        np.testing.assert_allclose(g.weights, 0.25, rtol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_rayleigh_optimality(self, seed):
        rng = np.random.default_rng(seed)
        m = 6
        A = rng.uniform(size=(m, m))
        Kc = A @ A.T
        sig2 = rng.uniform(0.01, 0.3, size=m)
        noise = NoiseModel(np.sqrt(sig2))
        K_m = Kc + np.diag(sig2)
        L = np.linalg.cholesky(K_m)
        cube = MultiCube((np.sqrt(m) * L.T).reshape(1, m, m))
        g = generate_guide(cube, noise)
        top = linalg.eigh(Kc, np.diag(sig2), eigvals_only=True)[-1]

        def q(w):
            return (w @ Kc @ w) / (w @ (sig2 * w))

        assert abs(q(g.weights) - top) <= 1e-8 * top
        assert abs(g.quotient - top) <= 1e-8 * top
        assert abs(g.weights.sum() - 1) < 1e-10
        probes = rng.normal(size=(100, m))
        assert all(q(g.weights) >= q(p) for p in probes)
        assert all(q(g.weights) >= Kc[i, i] / sig2[i] for i in range(m))

    def test_guide_image_is_weighted_sum(self, rng):
        cube = MultiCube(rng.uniform(size=(5, 6, 3)))
        g = generate_guide(cube, NoiseModel([0.1, 0.2, 0.05]))
        np.testing.assert_array_equal(g.data, cube.data @ g.weights)

    def test_zero_noise_channel_is_floored(self, rng):
        cube = MultiCube(rng.uniform(size=(5, 6, 3)))
        g = generate_guide(cube, NoiseModel([0.0, 0.1, 0.1]))
        assert np.all(np.isfinite(g.weights))
        assert abs(g.weights.sum() - 1) < 1e-10

    def test_indefinite_moment_is_repaired(self, rng):
        # noise larger than the signal moment makes K_m - N indefinite
        cube = MultiCube(rng.uniform(0, 0.1, size=(6, 6, 3)))
        g = generate_guide(cube, NoiseModel([0.5, 0.01, 0.5]))
        assert np.all(np.isfinite(g.weights))


class TestGuidedFilter:
    def test_self_guidance_identity(self):
        S = np.random.default_rng(1).uniform(size=(32, 32))
        out = guided_filter_channel(S, S, GuidedFilterParams(5, 1e-12))
        assert np.abs(out - S).max() < 1e-6

    def test_heavy_regularisation_is_double_box(self):
        rng = np.random.default_rng(2)
        S, G = rng.uniform(size=(32, 32)), rng.uniform(size=(32, 32))
        out = guided_filter_channel(S, G, GuidedFilterParams(5, 1e12))
        assert np.abs(out - box_mean(box_mean(S, 5), 5)).max() < 1e-6

    def test_step_edge_reference(self):
        G = np.zeros((9, 9))
        G[:, 5:] = 1.0
        S = G + 0.05 * np.random.default_rng(3).normal(size=(9, 9))
        out = guided_filter_channel(S, G, GuidedFilterParams(5, 1e-3))
        np.testing.assert_allclose(out, reference_guided_filter(S, G, 5, 1e-3), rtol=0, atol=1e-10)
        assert np.all(out[:, :5] < 0.5) and np.all(out[:, 5:] > 0.5)

    @given(seed=st.integers(0, 10**6), value=st.floats(-5, 5), theta=st.floats(1e-6, 10))
    @settings(max_examples=30, deadline=None)
    def test_constant_input(self, seed, value, theta):
        G = np.random.default_rng(seed).uniform(size=(11, 11))
        out = guided_filter_channel(np.full((11, 11), value), G, GuidedFilterParams(3, theta))
        np.testing.assert_allclose(out, value, rtol=1e-9, atol=1e-9)

    def test_params_validated(self):
        with pytest.raises(InvalidArgumentError):
            GuidedFilterParams(4, 1e-3)
        with pytest.raises(InvalidArgumentError):
            GuidedFilterParams(5, 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            guided_filter_channel(np.zeros((4, 4)), np.zeros((4, 5)), GuidedFilterParams())


class TestHyperspectralNoise:
    def test_zero_noise(self, bank, prior):
        f = build_ssw(bank, prior, make_spatial_covariance(3, 0.97), NoiseModel(np.full(9, 0.1)))
        np.testing.assert_array_equal(compute_hyperspectral_noise(f, NoiseModel.zeros(9)), 0.0)

    def test_single_pixel(self, bank, prior):
        noise = NoiseModel(np.linspace(0.05, 0.1, 9))
        p = prior.with_scale(0.01)
        f = build_ssw(bank, p, make_spatial_covariance(1, 0.97), noise)
        W = build_wf(bank, p, noise).weights
        expect = W @ noise.matrix @ W.T
        np.testing.assert_allclose(compute_hyperspectral_noise(f, noise), expect, rtol=0,
                                   atol=1e-10 * np.abs(expect).max())

    def test_psd(self, bank, prior):
        noise = NoiseModel(np.linspace(0.05, 0.1, 9))
        f = build_ssw(bank, prior.with_scale(0.01), make_spatial_covariance(5, 0.97), noise)
        nhs = compute_hyperspectral_noise(f, noise)
        assert np.linalg.eigvalsh(nhs).min() > -1e-10 * np.abs(nhs).max()

    def test_monte_carlo(self, bank, prior):
        noise = NoiseModel(np.linspace(0.03, 0.12, 9))
        f = build_ssw(bank, prior.with_scale(0.01), make_spatial_covariance(5, 0.97), noise)
        nhs = compute_hyperspectral_noise(f, noise)
        rng = np.random.default_rng(77)
        sd = np.tile(noise.sigma, 25)
        acc = np.zeros_like(nhs)
        n = 0
        for _ in range(5):
            z = rng.normal(size=(20000, sd.size)) * sd
            out = z @ f.weights.T
            acc += out.T @ out
            n += out.shape[0]
        emp = acc / n
        np.testing.assert_allclose(np.diag(emp), np.diag(nhs), rtol=0.05)
        assert np.linalg.norm(emp - nhs) <= 0.05 * np.linalg.norm(nhs)


class TestMix:
    def test_identical_inputs(self, rng):
        S = HyperCube(rng.uniform(size=(4, 4, 3)))
        out, z = mix(S, S, np.eye(3))
        np.testing.assert_array_equal(out.data, S.data)
        np.testing.assert_array_equal(z, 0.0)

    def test_zero_noise_keeps_ssw(self, rng):
        S, G = HyperCube(rng.uniform(size=(4, 4, 3))), HyperCube(rng.uniform(size=(4, 4, 3)))
        out, z = mix(S, G, np.zeros((3, 3)))
        np.testing.assert_array_equal(z, 1.0)
        np.testing.assert_array_equal(out.data, S.data)

    def test_large_noise_keeps_filtered(self, rng):
        S, G = HyperCube(rng.uniform(size=(4, 4, 3))), HyperCube(rng.uniform(size=(4, 4, 3)))
        power = np.mean((S.data - G.data) ** 2, axis=(0, 1))
        out, z = mix(S, G, np.diag(power * np.array([1.0, 2.0, 10.0])))
        np.testing.assert_array_equal(z, 0.0)
        np.testing.assert_array_equal(out.data, G.data)

    def test_formula(self, rng):
        S, G = HyperCube(rng.uniform(size=(5, 5, 2))), HyperCube(rng.uniform(size=(5, 5, 2)))
        power = np.mean((S.data - G.data) ** 2, axis=(0, 1))
        nhs = np.diag([0.25 * power[0], 0.64 * power[1]])
        out, z = mix(S, G, nhs)
        np.testing.assert_allclose(z, [0.5, 0.2], rtol=1e-12)
        np.testing.assert_allclose(out.data, G.data + z * (S.data - G.data), rtol=1e-12)

    @given(seed=st.integers(0, 10**6), scale=st.floats(0, 2))
    @settings(max_examples=30, deadline=None)
    def test_convex_combination(self, seed, scale):
        rng = np.random.default_rng(seed)
        S, G = HyperCube(rng.uniform(size=(4, 4, 3))), HyperCube(rng.uniform(size=(4, 4, 3)))
        out, z = mix(S, G, scale * np.diag(rng.uniform(size=3)) * 0.1)
        assert np.all((z >= 0) & (z <= 1))
        lo, hi = np.minimum(S.data, G.data), np.maximum(S.data, G.data)
        assert np.all(out.data >= lo - 1e-15) and np.all(out.data <= hi + 1e-15)


def noisy_scene(bank, level, seed=0, size=24):
    hyper = generate_scene(SceneSpec(size, size, bank.wavelengths, seed=seed))
    _, clean = normalize_pair(hyper, forward_project(hyper, bank))
    if np.isinf(level):
        return clean
    return inject_poisson(clean, np.full(bank.num_channels, level), seed)


class TestPipeline:
    def test_zero_noise_equals_ssw(self, bank, prior):
        cube = noisy_scene(bank, np.inf)
        spatial = make_spatial_covariance(5, 0.97)
        p = prior.with_scale(0.01)
        res = spre_pipeline(cube, bank, p, spatial, NoiseModel.zeros(9))
        ssw = apply_ssw(build_ssw(bank, p, spatial, NoiseModel.zeros(9)), cube).data
        assert np.abs(res.cube.data - ssw).max() < 1e-8
        np.testing.assert_array_equal(res.mixing.z, 1.0)

    def test_textured_scene_mixes_inside_unit_interval(self, bank):
        from scipy.ndimage import gaussian_filter

        from specrecon.noise_lab import build_noise_model
        from specrecon.pipeline import ReconConfig, fitted_prior
        from specrecon.scenes import random_spectrum

        rng = np.random.default_rng(0)
        s1, s2 = random_spectrum(rng, bank.wavelengths), random_spectrum(rng, bank.wavelengths)
        t = gaussian_filter(rng.uniform(size=(64, 64)), 0.7)
        t = ((t - t.min()) / np.ptp(t))[..., None]
        hyper = HyperCube(t * s1 + (1 - t) * 0.6 * s2)
        _, clean = normalize_pair(hyper, forward_project(hyper, bank))
        cube = inject_poisson(clean, np.full(9, 1000.0), 0)
        noise = build_noise_model(cube)
        res = spre_pipeline(cube, bank, fitted_prior(cube, bank, noise, ReconConfig()),
                            make_spatial_covariance(5, 0.97), noise)
        inside = (res.mixing.z > 0) & (res.mixing.z < 1)
        assert inside.mean() > 0.5

    def test_z_invariant_to_common_scale(self, bank, prior):
        cube = noisy_scene(bank, 100.0)
        noise = NoiseModel(np.full(9, 0.02))
        spatial = make_spatial_covariance(3, 0.97)
        p = prior.with_scale(0.01)
        a = 3.0
        base = spre_pipeline(cube, bank, p, spatial, noise, GuidedFilterParams(5, 1e-3))
        scaled = spre_pipeline(MultiCube(a * cube.data), bank, p.with_scale(0.01 * a**2), spatial,
                               noise.scaled(a), GuidedFilterParams(5, 1e-3 * a**2))
        np.testing.assert_allclose(scaled.mixing.z, base.mixing.z, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(scaled.cube.data, a * base.cube.data, rtol=0,
                                   atol=1e-9 * np.abs(scaled.cube.data).max())

    def test_estimates_noise_when_missing(self, bank, prior):
        cube = noisy_scene(bank, 100.0)
        res = spre_pipeline(cube, bank, prior.with_scale(0.01), make_spatial_covariance(3, 0.9))
        assert res.cube.data.shape == (24, 24, 49)
