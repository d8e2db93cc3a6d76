import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _synth import planted_grid
from densecorr.gridgeom import FeatureGrid, GridGeometry, cell_centers, nearest_cell
from densecorr.keypoints import KeypointSet
from densecorr.parts import (
    DetectorConfig,
    LinearModel,
    build_training_set,
    classify_keypoint,
    cross_validate,
    fuse_scores,
    predict_keypoint,
    prior_score,
    squash,
    stack_neighborhood,
    train_detector,
    train_one_vs_all,
)
from densecorr.parts.detector import log_squash

GEO = GridGeometry(16, 40, 8)


def test_default_config():
    cfg = DetectorConfig()
    assert (cfg.c, cfg.eta, cfg.sigma) == (1e-6, 0.1, 22.0)
    assert (cfg.neighborhood, cfg.positives_per_keypoint, cfg.canonical_box) == (3, 10, 500)
    with pytest.raises(ValueError):
        DetectorConfig(neighborhood=2)
    with pytest.raises(ValueError):
        DetectorConfig(eta=1.5)


def test_stack_neighborhood():
    data = np.arange(4 * 5 * 2, dtype=float).reshape(4, 5, 2)
    g = FeatureGrid(data, GEO)
    assert np.array_equal(stack_neighborhood(g, (2, 3), 1), data[2, 3])
    v = stack_neighborhood(g, (1, 1), 3)
    assert np.array_equal(v, data[0:3, 0:3].reshape(-1))     # row-major blocks
    corner = stack_neighborhood(g, (0, 0), 3).reshape(9, 2)
    assert sum(not b.any() for b in corner) == 5
    big = FeatureGrid(np.ones((3, 3, 256)), GEO)
    assert stack_neighborhood(big, (1, 1), 3).size == 2304


def _dataset(points, shape=(9, 11), geo=GEO):
    rng = np.random.default_rng(0)
    out = []
    for k, (x, y) in enumerate(points):
        g = FeatureGrid(rng.normal(size=shape + (4,)), geo)
        out.append((g, KeypointSet(f"im{k}", (0, 0, 200, 200), {"nose": (x, y, True)})))
    return out


def test_training_set_positives_and_negatives():
    cfg = DetectorConfig()
    data = _dataset([(8 + 16 * 4, 8 + 16 * 3)])
    ts = build_training_set(data, "nose", cfg)
    assert ts.positive_provenance[0] == ("im0", (3, 4))
    assert len(ts.positives) == 10
    # brute-force rf containment for the 3x3 stacked feature: rf 40 + 2 * 16
    xs, ys = cell_centers(GEO, (9, 11))
    half = (40 + 32) / 2
    outside = {(i, j) for i in range(9) for j in range(11)
               if abs(xs[i, j] - 72) > half or abs(ys[i, j] - 56) > half}
    assert {c for _, c in ts.negative_provenance} == outside
    pos = {c for _, c in ts.positive_provenance}
    assert not pos & outside
    assert ts.positives.shape[1] == 9 * 4


def test_positive_ties_go_to_smaller_cell():
    ts = build_training_set(_dataset([(16.0, 16.0)]),  "nose",
                            DetectorConfig(positives_per_keypoint=4))
    assert [c for _, c in ts.positive_provenance] == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_small_grid_with_central_keypoint_has_no_negatives():
    # 3x3 cells of rf 195 at stride 32: every rf contains the middle center
    geo = GridGeometry(32, 195, 33)
    xs, ys = cell_centers(geo, (3, 3))
    assert np.all(np.abs(xs - 65) <= 97.5) and np.all(np.abs(ys - 65) <= 97.5)
    ts = build_training_set(_dataset([(65.0, 65.0)], (3, 3), geo), "nose",
                            DetectorConfig(neighborhood=1))
    assert len(ts.negatives) == 0
    # on a full 14x14 grid the corner rf misses the box center
    far = math.hypot(0, 250 - 33)
    assert far > 97.5


def test_hand_crafted_thresholds():
    cfg = DetectorConfig(bin_size=8.0)
    ts = build_training_set(_dataset([(72.0, 56.0)]), "nose", cfg)
    xs, ys = cell_centers(GEO, (9, 11))
    d = np.hypot(xs - 72, ys - 56)
    assert len(ts.positives) == int((d <= 16).sum())
    assert len(ts.negatives) == int((d >= 32).sum())


def test_invisible_everywhere_raises():
    g = FeatureGrid(np.zeros((3, 3, 2)), GEO)
    ks = KeypointSet("a", (0, 0, 10, 10), {"nose": (np.nan, np.nan, False)})
    with pytest.raises(ValueError):
        build_training_set([(g, ks)], "nose")
    with pytest.raises(ValueError):
        build_training_set([(g, ks)], "tail")


def test_classify_keypoint():
    m = {"b": LinearModel([1.0, 0.0], 0.0, "b"), "a": LinearModel([0.0, 1.0], 0.0, "a")}
    assert classify_keypoint(m, [2.0, 1.0])[0] == "b"
    assert classify_keypoint(m, [1.0, 1.0])[0] == "a"          # tie
    assert classify_keypoint({"z": m["b"]}, [-5.0, 0.0])[0] == "b"
    biased = [LinearModel([1.0, 1.0], 0.2, "x"), LinearModel([5.0, 5.0], 0.1, "y")]
    assert classify_keypoint(biased, [0.0, 0.0])[0] == "x"
    with pytest.raises(ValueError):
        classify_keypoint(m, [1.0, 2.0, 3.0])


def test_one_vs_all_on_prototypes():
    rng = np.random.default_rng(1)
    protos = {"a": np.r_[5.0, 0, 0], "b": np.r_[0, 5.0, 0], "c": np.r_[0, 0, 5.0]}
    X = np.vstack([p + rng.normal(0, 0.3, (8, 3)) for p in protos.values()])
    y = [n for n in protos for _ in range(8)]
    models = train_one_vs_all(X, y, c=1.0)
    for name, p in protos.items():
        assert classify_keypoint(models, p)[0] == name
    with pytest.raises(ValueError):
        train_one_vs_all(X[:3], ["a"] * 3)
    curve = cross_validate(X, y, [1e-2, 1.0], folds=3)
    assert [c for c, _ in curve] == [1e-2, 1.0]
    assert curve[1][1] == 1.0


def test_prior_score_values():
    assert prior_score((3, 4), (3, 4), 22) == 1.0
    assert prior_score((22, 0), (0, 0), 22) == pytest.approx(math.exp(-0.5))
    assert prior_score((0, 44), (0, 0), 22) == pytest.approx(math.exp(-2))
    with pytest.raises(ValueError):
        prior_score((0, 0), (0, 0), 0)


probs = st.floats(1e-6, 1.0)


@given(probs, probs, st.floats(0, 1))
def test_fuse_identities(s, p, eta):
    assert fuse_scores(s, p, 0.0) == pytest.approx(s)
    assert fuse_scores(s, p, 1.0) == pytest.approx(p)
    assert fuse_scores(s, s, eta) == pytest.approx(s)


@given(probs, probs, probs, st.floats(0.01, 0.99))
def test_fuse_strictly_increasing(s1, s2, p, eta):
    if s1 < s2 * (1 - 1e-9):
        assert fuse_scores(s1, p, eta) < fuse_scores(s2, p, eta)
        assert fuse_scores(p, s1, eta) < fuse_scores(p, s2, eta)


def test_fuse_rejects_non_positive():
    with pytest.raises(ValueError):
        fuse_scores(0.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        fuse_scores(0.5, -1.0, 0.1)


def test_log_squash_is_stable():
    assert np.allclose(np.exp(log_squash([-3.0, 0.0, 3.0])), squash([-3.0, 0.0, 3.0]))
    assert np.isfinite(log_squash(-1e6))


def _planted_model(sig, n=3, dim=6):
    w = np.zeros(n * n * dim)
    mid = (n * n) // 2
    w[mid * dim:(mid + 1) * dim] = sig
    return LinearModel(w, -1.0)


def test_planted_detector_flat_prior():
    rng = np.random.default_rng(2)
    for _ in range(20):
        sig = rng.normal(size=6)
        g, cell = planted_grid(rng, signature=3 * sig / np.linalg.norm(sig))
        d = predict_keypoint(g, _planted_model(sig), None, DetectorConfig())
        assert d.cell == cell
        assert (d.x, d.y) == (8 + 16 * cell[1], 8 + 16 * cell[0])


def test_peaked_prior_dominates():
    rng = np.random.default_rng(3)
    g, _ = planted_grid(rng)
    m = _planted_model(np.ones(6))
    mu = (100.3, 37.9)
    d = predict_keypoint(g, m, mu, DetectorConfig(sigma=1e-3))
    assert d.cell == nearest_cell(GEO, mu, g.shape)
    flat = LinearModel(np.zeros(54), 0.0)
    assert predict_keypoint(g, flat, mu, DetectorConfig()).cell == nearest_cell(GEO, mu, g.shape)


def test_eta_zero_is_detector_only():
    rng = np.random.default_rng(4)
    g, _ = planted_grid(rng, noise=1.0)
    m = LinearModel(rng.normal(size=54), 0.3)
    a = predict_keypoint(g, m, (0.0, 0.0), DetectorConfig(eta=0.0))
    b = predict_keypoint(g, m, None, DetectorConfig())
    assert a.cell == b.cell


def test_argmax_invariant_to_score_scaling():
    rng = np.random.default_rng(5)
    g, _ = planted_grid(rng, noise=1.0)
    m = LinearModel(rng.normal(size=54), 0.0)
    d = predict_keypoint(g, m, (60.0, 50.0), DetectorConfig(eta=0.3))
    # halving every squashed score adds a constant in the log domain
    shifted = d.log_scores + (1 - 0.3) * math.log(0.5)
    assert np.unravel_index(np.argmax(shifted), shifted.shape) == d.cell


def test_argmax_ties_go_to_smaller_cell():
    g = FeatureGrid(np.zeros((4, 4, 1)), GEO)
    d = predict_keypoint(g, LinearModel(np.zeros(9), 0.0), None, DetectorConfig())
    assert d.cell == (0, 0)


def test_train_detector_finds_planted_part():
    rng = np.random.default_rng(6)
    sig = np.r_[3.0, 0, 0, 0, 0, 0]
    data = []
    for k in range(6):
        g, cell = planted_grid(rng, signature=sig)
        x, y = 8 + 16 * cell[1], 8 + 16 * cell[0]
        data.append((g, KeypointSet(f"i{k}", (0, 0, 200, 200), {"nose": (x, y, True)})))
    cfg = DetectorConfig(c=1.0, positives_per_keypoint=1, hnm_batch=50)
    res = train_detector(build_training_set(data, "nose", cfg), cfg, seed=0)
    for _ in range(10):
        g, cell = planted_grid(rng, signature=sig)
        assert predict_keypoint(g, res.model, None, cfg).cell == cell
