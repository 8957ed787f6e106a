import numpy as np
import pytest

from specrecon.errors import InvalidArgumentError
from specrecon.scenes import SceneSpec, demo_scenes, generate_scene
from specrecon.spectral_model import make_difference_matrix


def test_deterministic():
    np.testing.assert_array_equal(generate_scene(SceneSpec(seed=4)).data, generate_scene(SceneSpec(seed=4)).data)


def test_seed_matters():
    assert not np.array_equal(generate_scene(SceneSpec(seed=1)).data, generate_scene(SceneSpec(seed=2)).data)


def test_two_stripes_two_spectra():
    s = generate_scene(SceneSpec(16, 16, layout="stripes", regions=2, gradients=False))
    assert np.unique(s.data.reshape(-1, s.bands), axis=0).shape[0] == 2


def test_range_and_shape():
    s = generate_scene(SceneSpec(32, 40))
    assert s.data.shape == (32, 40, 49)
    assert s.data.min() >= 0 and s.data.max() <= 1


def test_has_step_edges_and_flat_regions():
    s = generate_scene(SceneSpec(64, 64, gradients=False)).data
    jumps = np.abs(np.diff(s, axis=1)).sum(axis=-1)
    assert np.count_nonzero(jumps > 1e-3) > 0
    assert np.count_nonzero(jumps == 0) > jumps.size // 2


def test_spectra_are_smooth():
    D = make_difference_matrix(2, 49)
    s = generate_scene(SceneSpec(32, 32)).data.reshape(-1, 49)
    s = s[np.linalg.norm(s, axis=1) > 0]
    scene_ratio = np.mean(np.sum((s @ D.T) ** 2, axis=1) / np.sum(s**2, axis=1))
    w = np.random.default_rng(0).uniform(size=(500, 49))
    noise_ratio = np.mean(np.sum((w @ D.T) ** 2, axis=1) / np.sum(w**2, axis=1))
    assert scene_ratio * 10 <= noise_ratio


def test_demo_scenes_distinct():
    a, b = demo_scenes(2, 16)
    assert a.data.shape == (16, 16, 49)
    assert not np.array_equal(a.data, b.data)


def test_rejects_bad_layout():
    with pytest.raises(InvalidArgumentError):
        generate_scene(SceneSpec(layout="spiral"))
    with pytest.raises(InvalidArgumentError):
        generate_scene(SceneSpec(4, 4, layout="stripes", regions=9))
