import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import ndimage

from pdtomo.core import ProjectionGeometry, Sinogram, pixel_centers
from pdtomo.phantoms import MODELS, PhantomSpec, add_noise_snr, level_set_generator, make_phantom


@pytest.mark.parametrize("model", MODELS)
def test_value_ranges_and_composition(model):
    spec = PhantomSpec(model, 128)
    u, mask, u0 = make_phantom(spec)
    assert u0.values.min() >= 0 and u0.values.max() <= spec.bmax + 1e-15
    assert np.all(u.values[mask] == 1.0)
    np.testing.assert_array_equal(u.values[~mask], u0.values[~mask])
    assert 0.03 < mask.mean() < 0.4


@pytest.mark.parametrize("model", MODELS)
def test_anomaly_is_one_connected_region(model):
    _, mask, _ = make_phantom(PhantomSpec(model, 128))
    _, n = ndimage.label(mask.reshape(128, 128))
    assert n == 1


@pytest.mark.parametrize("model", MODELS)
def test_mask_is_generator_positive_set(model):
    spec = PhantomSpec(model, 64)
    _, mask, _ = make_phantom(spec)
    x, y = pixel_centers(spec.grid).T
    np.testing.assert_array_equal(mask, level_set_generator(model, spec.seed)(x, y) > 0)


def test_boundary_resolution_stable():
    # the same generator sampled at two resolutions agrees up to boundary pixels
    _, m128, _ = make_phantom(PhantomSpec("C", 128))
    _, m256, _ = make_phantom(PhantomSpec("C", 256))
    coarse = m256.reshape(128, 2, 128, 2).mean(axis=(1, 3))
    assert np.mean(np.abs(coarse - m128.reshape(128, 128)) > 0.5) < 0.01


def test_model_a_at_256():
    u, mask, u0 = make_phantom(PhantomSpec("A", 256))
    assert u0.values.max() <= 0.5 and u0.values.max() > 0.45
    assert np.all(u.values[mask] == 1.0)


def test_binary_demo_is_binary():
    u, mask, u0 = make_phantom(PhantomSpec("BinaryDemo", 64))
    assert np.all(u0.values == 0)
    assert set(np.unique(u.values)) == {0.0, 1.0}


def test_high_contrast_models():
    assert PhantomSpec("C").bmax == 0.8 and PhantomSpec("D").bmax == 0.8
    assert PhantomSpec("B").bmax == 0.5
    assert PhantomSpec("A", background_max=0.3).bmax == 0.3


def test_deterministic_and_seeded():
    a = make_phantom(PhantomSpec("B", 64, seed=3))
    b = make_phantom(PhantomSpec("B", 64, seed=3))
    c = make_phantom(PhantomSpec("B", 64, seed=4))
    np.testing.assert_array_equal(a[0].values, b[0].values)
    assert not np.array_equal(a[0].values, c[0].values)


def test_spec_validation():
    with pytest.raises(ValueError):
        PhantomSpec("E")
    with pytest.raises(ValueError):
        PhantomSpec("A", 16)


def sino(seed=0):
    geo = ProjectionGeometry.uniform(4, 10)
    return Sinogram(geo, np.random.default_rng(seed).uniform(0.5, 2.0, 40))


def test_infinite_snr_is_identity():
    p = sino()
    np.testing.assert_array_equal(add_noise_snr(p, np.inf, 0).values, p.values)


@settings(max_examples=30, deadline=None)
@given(st.floats(-10, 60), st.integers(0, 2**31))
def test_realized_snr_is_exact(snr_db, seed):
    p = sino(seed % 7)
    noisy = add_noise_snr(p, snr_db, seed)
    eta = noisy.values - p.values
    ratio = (eta @ eta) / (p.values @ p.values)
    assert ratio == pytest.approx(10 ** (-snr_db / 10), rel=1e-10)


def test_ten_db():
    p = sino()
    eta = add_noise_snr(p, 10.0, 5).values - p.values
    assert (eta @ eta) / (p.values @ p.values) == pytest.approx(0.1, rel=1e-12)


def test_noise_reproducible_and_plain_arrays():
    p = sino()
    a = add_noise_snr(p, 10.0, 1)
    b = add_noise_snr(p.values, 10.0, 1)
    assert isinstance(a, Sinogram) and isinstance(b, np.ndarray)
    np.testing.assert_array_equal(a.values, b)
    assert not np.array_equal(add_noise_snr(p, 10.0, 2).values, a.values)


def test_zero_data_rejected():
    with pytest.raises(ValueError):
        add_noise_snr(np.zeros(5), 10.0)
