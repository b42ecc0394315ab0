import json

import numpy as np
import pytest

from cyclegen import evaluate, rcgan
from cyclegen.errors import MissingArtifactError
from cyclegen.evaluate import Projection2D, overlap_score, pca_project, tsne_project


def _proj(real_pts, synth_pts):
    pts = np.vstack([real_pts, synth_pts])
    labels = np.array(["real"] * len(real_pts) + ["synthetic"] * len(synth_pts))
    return Projection2D(pts, labels, "test")


def test_overlap_duplicates_zero(rng):
    x = rng.normal(size=(25, 2))
    assert overlap_score(_proj(x, x.copy())) == 0.0


def test_overlap_disjoint_one(rng):
    a = rng.normal(size=(20, 2))
    assert overlap_score(_proj(a, a + 100.0)) == 1.0


def test_overlap_tie_goes_to_real():
    # point 0 (synthetic) is equidistant from a real and a synthetic point
    proj = Projection2D(np.array([[0.0, 0], [1, 0], [-1, 0]]),
                        np.array(["synthetic", "real", "synthetic"]), "t")
    # 0 -> tie -> real (wrong); 1 -> nearest 0 -> synthetic (wrong); 2 -> nearest 0 (right)
    assert overlap_score(proj) == pytest.approx(1 / 3)


def test_overlap_needs_two_labels(rng):
    with pytest.raises(ValueError):
        overlap_score(_proj(rng.normal(size=(5, 2)), np.empty((0, 2))))


@pytest.mark.slow
def test_overlap_same_distribution_near_half():
    rng = np.random.default_rng(0)
    scores = [overlap_score(_proj(rng.normal(size=(100, 2)), rng.normal(size=(100, 2))))
              for _ in range(1000)]
    assert 0.4 <= np.mean(scores) <= 0.6


def test_pca_matches_eigendecomposition(rng):
    X = rng.normal(size=(30, 6)) @ np.diag([5, 3, 1, 0.5, 0.2, 0.1])
    proj = pca_project(X[:20], X[20:])
    Xc = X - X.mean(0)
    w, V = np.linalg.eigh(np.cov(Xc.T))
    order = np.argsort(w)[::-1][:2]
    np.testing.assert_allclose(proj.explained_variance, w[order], rtol=1e-10)
    for j, k in enumerate(order):
        v = V[:, k] * np.sign(V[np.argmax(np.abs(V[:, k])), k])
        np.testing.assert_allclose(proj.points[:, j], Xc @ v, atol=1e-10)
    assert list(proj.labels[:20]) == ["real"] * 20


def test_pca_needs_three_points(rng):
    with pytest.raises(ValueError):
        pca_project(rng.normal(size=(1, 4)), rng.normal(size=(1, 4)))


def test_pca_rank_one():
    X = np.outer(np.arange(4.0), [1.0, 2.0])
    proj = pca_project(X[:2], X[2:])
    assert proj.points.shape == (4, 2)
    np.testing.assert_allclose(proj.points[:, 1], 0, atol=1e-12)


def test_tsne_deterministic_and_separates(rng):
    a = rng.normal(size=(20, 10))
    b = rng.normal(size=(20, 10)) + 15
    p1 = tsne_project(a, b, perplexity=5, seed=3, n_iter=1000)
    p2 = tsne_project(a, b, perplexity=5, seed=3, n_iter=1000)
    np.testing.assert_array_equal(p1.points, p2.points)
    # t-SNE keeps local structure only; a stray point may land in the other cloud
    assert overlap_score(p1) >= 0.9
    with pytest.raises(ValueError):
        tsne_project(a[:3], b[:3], perplexity=5)


def test_cycle_ids(small_split):
    train, _ = small_split
    proj = pca_project(train[:5], train[5:8])
    assert proj.cycles[:2] == ("1", "2")


def test_build_report(tmp_path, small_split):
    train, _ = small_split
    hist = rcgan.TrainHistory([1, 2, 3], ["G", "G", "D"], [-1.3, -1.4, -1.35],
                              [-0.7, -0.69, -0.7])
    proj = pca_project(train[:8], train[8:])
    rows = [{"battery": "B", "model": "GRU", "dataset": "original", "rmse": 0.1, "mae": 0.05}]
    written = evaluate.build_report(tmp_path, hist, {"pca": proj}, {"pca": 0.5}, rows,
                                    {"seed": 0}, predictions=[{"cycle": 1, "gru": 1.5}])
    for name in ("loss_curves.csv", "pca.csv", "metrics.csv", "manifest.json",
                 "overlap.json", "predictions.csv", "loss_curves.svg", "pca.svg"):
        assert (tmp_path / name).exists(), name
    assert (tmp_path / "metrics.csv").read_text().splitlines() == [
        "battery,model,dataset,rmse,mae", "B,GRU,original,0.1,0.05"]
    assert (tmp_path / "pca.csv").read_text().splitlines()[0] == "x,y,label,cycle"
    assert json.loads((tmp_path / "overlap.json").read_text()) == {"pca": 0.5}
    assert set(written) >= {"loss_curves", "pca", "metrics", "overlap", "manifest"}

    svg = (tmp_path / "pca.svg").read_bytes()
    evaluate.build_report(tmp_path, hist, {"pca": proj}, {"pca": 0.5}, rows, {"seed": 0})
    assert (tmp_path / "pca.svg").read_bytes() == svg


def test_build_report_missing(tmp_path):
    with pytest.raises(MissingArtifactError, match="projections"):
        evaluate.build_report(tmp_path, rcgan.TrainHistory(), None, {}, [], {})
