import numpy as np
import pytest

from ccalign.errors import ValidationError
from ccalign.pca import fit_pca, project, read_pca_model, write_pca_model


def test_rank_one_data_recovers_line():
    rng = np.random.default_rng(0)
    direction = np.array([1.0, 2.0, -2.0])
    direction /= np.linalg.norm(direction)
    t = rng.normal(size=500) * 3.0
    x = np.outer(direction, t) + np.array([[1.0], [0.0], [5.0]])
    model = fit_pca(x, 1)
    assert abs(model.components[0] @ direction) >= 1 - 1e-8
    assert model.variances[0] == pytest.approx(t.var(ddof=1), rel=1e-10)


def test_diagonal_cov_monte_carlo():
    rng = np.random.default_rng(1)
    x = np.diag([3.0, 2.0, 1.0]) @ rng.normal(size=(3, 40_000))
    model = fit_pca(x, 2)
    assert model.variances == pytest.approx([9.0, 4.0], abs=0.3)
    assert abs(model.components[0] @ np.array([1.0, 0.0, 0.0])) > 0.99
    assert abs(model.components[1] @ np.array([0.0, 1.0, 0.0])) > 0.99


def test_full_rank_projection_is_isometry():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 60))
    model = fit_pca(x, 4)
    proj = project(model, x)
    for i in (0, 17, 39):
        for j in (3, 25, 59):
            orig = np.linalg.norm(x[:, i] - x[:, j])
            new = np.linalg.norm(proj[:, i] - proj[:, j])
            assert new == pytest.approx(orig, abs=1e-8)
    total = x.var(axis=1, ddof=1).sum()
    assert proj.var(axis=1, ddof=1).sum() == pytest.approx(total, rel=1e-8)


def test_projection_of_mean_is_zero():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 40))
    model = fit_pca(x, 3)
    const = np.tile(model.mean[:, None], (1, 6))
    assert np.abs(project(model, const)).max() == 0.0


def test_projected_variance_equals_top_k_sum():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(6, 300)) * np.arange(1, 7)[:, None]
    model = fit_pca(x, 4)
    proj = project(model, x)
    assert proj.var(axis=1, ddof=1).sum() == pytest.approx(model.variances.sum(), rel=1e-8)


def test_projected_covariance_is_diagonal_of_variances():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(5, 5))
    x = a @ rng.normal(size=(5, 2000))
    model = fit_pca(x, 3)
    proj = project(model, x)
    proj = proj - proj.mean(axis=1, keepdims=True)
    cov = proj @ proj.T / (proj.shape[1] - 1)
    assert np.abs(cov - np.diag(model.variances)).max() < 1e-8 * model.variances[0]


def test_reconstruction_beats_random_frames():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(8, 8))
    x = a @ rng.normal(size=(8, 400))
    k = 3
    model = fit_pca(x, k)
    centered = x - x.mean(axis=1, keepdims=True)

    def mse(frame):
        recon = frame.T @ (frame @ centered)
        return float(np.mean((centered - recon) ** 2))

    best = mse(model.components)
    for trial in range(100):
        q, _ = np.linalg.qr(np.random.default_rng(100 + trial).normal(size=(8, k)))
        assert best <= mse(q.T) + 1e-12


def test_components_orthonormal_and_ordered():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(9, 500))
    model = fit_pca(x, 6)
    assert np.abs(model.components @ model.components.T - np.eye(6)).max() < 1e-8
    assert np.all(np.diff(model.variances) <= 0)
    anchors = np.argmax(np.abs(model.components), axis=1)
    assert np.all(model.components[np.arange(6), anchors] > 0)


def test_k_bounds():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(5, 4))  # rank at most 3
    with pytest.raises(ValidationError):
        fit_pca(x, 4)
    with pytest.raises(ValidationError):
        fit_pca(x, 0)
    fit_pca(x, 3)


def test_project_dim_mismatch():
    rng = np.random.default_rng(9)
    model = fit_pca(rng.normal(size=(5, 50)), 2)
    with pytest.raises(ValidationError):
        project(model, np.ones((4, 3)))


def test_pca1_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    x = rng.normal(size=(6, 80))
    model = fit_pca(x, 4)
    write_pca_model(model, tmp_path / "m.pca1")
    back = read_pca_model(tmp_path / "m.pca1")
    assert np.array_equal(back.mean, model.mean)
    assert np.array_equal(back.components, model.components)
    assert np.array_equal(back.variances, model.variances)
