import numpy as np
import pytest

from tskfuzz.data import Dataset
from tskfuzz.errors import ConfigError
from tskfuzz.initializers import InitSpec, init_model, kmeans_centers
from tskfuzz.model import SIGMA_MIN, Defuzz


def blob_dataset(seed=0, n_per=500, d=3, gap=5.0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0, 1, (n_per, d))
    b = rng.normal(0, 1, (n_per, d))
    a[:, 0] += gap
    b[:, 0] -= gap
    x = np.vstack([a, b])
    y = np.array([0] * n_per + [1] * n_per)
    return Dataset(x, y, 2), a.mean(axis=0), b.mean(axis=0)


def inertia_of(x, centers):
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d2.min(axis=1).sum()


# ---- k-means ---------------------------------------------------------------


def test_kmeans_recovers_two_blobs():
    ds, mean_a, mean_b = blob_dataset()
    centers = kmeans_centers(ds, 2, InitSpec(seed=4))
    # with blobs 10 sigma apart the optimum is the pair of blob sample means
    order = np.argsort(centers[:, 0])[::-1]
    assert np.max(np.abs(centers[order[0]] - mean_a)) < 0.1
    assert np.max(np.abs(centers[order[1]] - mean_b)) < 0.1


def test_kmeans_one_center_per_point():
    rng = np.random.default_rng(1)
    x = rng.normal(0, 1, (12, 4))
    ds = Dataset(x, np.zeros(12, int), 1)
    centers = kmeans_centers(ds, 12, InitSpec(seed=0, kmeans_restarts=2))
    assert inertia_of(x, centers) < 1e-20
    # every point is its own center (up to row order)
    assert {tuple(r) for r in centers} == {tuple(r) for r in x}


def test_kmeans_deterministic():
    ds, _, _ = blob_dataset(seed=2)
    a = kmeans_centers(ds, 5, InitSpec(seed=11))
    b = kmeans_centers(ds, 5, InitSpec(seed=11))
    np.testing.assert_array_equal(a, b)


def test_kmeans_restarts_never_hurt():
    rng = np.random.default_rng(3)
    x = rng.normal(0, 1, (200, 6))
    ds = Dataset(x, np.zeros(200, int), 1)
    one = kmeans_centers(ds, 8, InitSpec(seed=5, kmeans_restarts=1))
    many = kmeans_centers(ds, 8, InitSpec(seed=5, kmeans_restarts=8))
    # restart 0 of both runs is the same stream, so best-of-8 can only improve
    assert inertia_of(x, many) <= inertia_of(x, one) + 1e-9


def test_kmeans_more_rules_than_samples():
    ds, _, _ = blob_dataset(n_per=3)
    with pytest.raises(ConfigError):
        kmeans_centers(ds, 7, InitSpec())
    with pytest.raises(ConfigError):
        kmeans_centers(ds, 0, InitSpec())


# ---- width and consequent draws --------------------------------------------


def test_width_draws_center_on_h():
    ds, _, _ = blob_dataset(n_per=200, d=100)
    model = init_model(ds, 100, Defuzz.VANILLA, InitSpec(h=5.0, sigma_spread=0.2, seed=8,
                                                         kmeans_iters=2, kmeans_restarts=1))
    assert model.widths.shape == (100, 100)
    assert abs(model.widths.mean() - 5.0) < 0.02  # 1e4 draws of N(5, 0.2^2)
    assert abs(model.widths.std() - 0.2) < 0.01


def test_zero_spread_gives_exact_h():
    ds, _, _ = blob_dataset(n_per=50)
    model = init_model(ds, 4, Defuzz.HTSK, InitSpec(h=1.5, sigma_spread=0.0, seed=0,
                                                    kmeans_restarts=1))
    assert np.all(model.widths == 1.5)


def test_width_draws_clamped_from_below():
    ds, _, _ = blob_dataset(n_per=50)
    model = init_model(ds, 4, Defuzz.HTSK, InitSpec(h=1e-9, sigma_spread=0.0, seed=0,
                                                    kmeans_restarts=1))
    assert np.all(model.widths == SIGMA_MIN)


def test_consequent_scale():
    d = 199
    rng = np.random.default_rng(13)
    ds = Dataset(rng.normal(0, 1, (300, d)), rng.integers(0, 2, 300), 2)
    model = init_model(ds, 50, Defuzz.HTSK, InitSpec(seed=21, kmeans_iters=1,
                                                     kmeans_restarts=1))
    expected = np.sqrt(2.0 / (d + 1))
    assert abs(model.consequents.std() - expected) < 0.005
    assert abs(model.consequents.mean()) < 0.005


def test_init_model_deterministic_and_variant():
    ds, _, _ = blob_dataset(seed=6)
    spec = InitSpec(seed=31, kmeans_restarts=2)
    a = init_model(ds, 3, Defuzz.LOGTSK, spec)
    b = init_model(ds, 3, Defuzz.LOGTSK, spec)
    np.testing.assert_array_equal(a.centers, b.centers)
    np.testing.assert_array_equal(a.widths, b.widths)
    np.testing.assert_array_equal(a.consequents, b.consequents)
    assert a.variant == Defuzz.LOGTSK
    assert a.num_classes == 2


def test_init_spec_validation():
    with pytest.raises(ConfigError):
        InitSpec(h=0.0)
    with pytest.raises(ConfigError):
        InitSpec(sigma_spread=-0.1)
    with pytest.raises(ConfigError):
        InitSpec(kmeans_iters=0)
    with pytest.raises(ConfigError):
        InitSpec(kmeans_restarts=0)
