import math
import os
import tempfile

import numpy as np
import pytest

import topomix


def synth(n=200, std=0.2, seed=11):
    times, values, names = topomix.synth_mixed(n, 4 * math.pi, std, seed)
    return np.asarray(times), np.asarray(values), names


def test_synth_shapes_and_determinism():
    times, values, names = synth()
    assert times.shape == (200,)
    assert values.shape == (3, 200)
    assert names == ["f1", "f2", "f3"]
    t2, v2, _ = synth()
    assert np.array_equal(times, t2)
    assert np.array_equal(values, v2)
    t3, v3, _ = synth(seed=12)
    assert not np.array_equal(values, v3)


def test_mixed_coordinates_classifies_the_synthetic_mixture():
    times, values, _ = synth()
    mix = topomix.mixed_coordinates(times, values, detrend=False, seed=5)
    assert (mix["n_ell"], mix["n_c"], mix["n_n"]) == (1, 1, 1)
    assert abs(mix["tau"][0]) >= 0.5
    circ = np.asarray(mix["circular"][0])
    assert circ.shape == (200,)
    assert np.all((0.0 <= circ) & (circ < 1.0))
    assert mix["provenance"][0]["periodic"] or mix["provenance"][1]["periodic"]


def test_kendall_tau_matches_naive_counting():
    rng = np.random.default_rng(3)
    t = rng.normal(size=60)
    x = rng.normal(size=60)
    conc = 0
    for i in range(60):
        for j in range(i + 1, 60):
            conc += np.sign(t[i] - t[j]) * np.sign(x[i] - x[j])
    naive = conc / (60 * 59 / 2)
    assert topomix.kendall_tau(t, x) == pytest.approx(naive, abs=1e-12)
    assert topomix.kendall_tau(t, 2.0 * t + 1.0) == pytest.approx(1.0)


def test_rips_diagram_unit_square():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    ones = [p for p in topomix.rips_diagram(square, max_scale=2.0) if p[2] == 1]
    assert len(ones) == 1
    birth, death, _ = ones[0]
    assert birth == pytest.approx(1.0, abs=1e-12)
    assert death == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_circle_map_recovers_the_angle():
    angles = np.linspace(0.0, 2 * math.pi, 40, endpoint=False)
    pts = np.c_[np.cos(angles), np.sin(angles)]
    got = topomix.circle_map(pts)
    assert got is not None
    coord, persistence = got
    assert persistence > 0.5
    # aligned up to rotation and direction
    ref = angles / (2 * math.pi)

    def circ_err(cand):
        delta = (np.asarray(cand) - ref) % 1.0
        d = (delta - delta[0]) % 1.0
        return np.max(np.minimum(d, 1.0 - d))

    assert min(circ_err(coord), circ_err(1.0 - np.asarray(coord))) < 0.05

    noise = np.random.default_rng(0).normal(size=(40, 2)) * 0.01
    assert topomix.circle_map(noise) is None


def test_phi_is_invariant_to_winding_direction():
    c = (np.linspace(0.0, 2.0, 128) + 0.3) % 1.0
    mirrored = (2 * c[0] - c) % 1.0
    assert topomix.phi(c, mirrored) <= 1e-9
    shifted = (c + 5.0) % 1.0  # integer turns cost nothing
    assert topomix.phi(c, shifted) <= 1e-9


def test_distance_matrix_and_clustering_round_trip():
    c = (np.linspace(0.0, 3.0, 100)) % 1.0
    trends = np.array([[1.0, 0.0], [1.01, 0.0], [-2.0, 3.0], [-2.01, 3.0]])
    circulars = [c, c, None, None]
    D = np.asarray(topomix.distance_matrix(trends, circulars))
    assert D.shape == (4, 4)
    assert np.allclose(D, D.T)
    assert np.all(np.diag(D) == 0.0)
    assignments, sizes = topomix.hcluster(D, 2)
    assert assignments[0] == assignments[1]
    assert assignments[2] == assignments[3]
    assert assignments[0] != assignments[2]
    assert sorted(sizes) == [2, 2]


def test_task_matrix_worked_example():
    B = np.asarray(topomix.task_matrix([0, 0], 1, 2.0, 1.0))
    assert np.allclose(B, [[0.75, 0.25], [0.25, 0.75]], atol=0)
    B2 = np.asarray(topomix.task_matrix([0, 1], 2, 2.0, 1.0))
    assert np.allclose(B2, np.eye(2), atol=0)  # singletons decouple


def test_gp_fit_predict_denoises_a_sine():
    rng = np.random.default_rng(7)
    times = np.linspace(0.0, 4.0, 60)
    clean = np.sin(2.0 * times)
    values = np.vstack([clean + 0.1 * rng.normal(size=60) for _ in range(2)])
    model = topomix.gp_fit(
        times, values, [0, 0], 1, lambda1=0.5, lambda2=1.0,
        variances=[1.0], length_scales=[1.0], noise_variances=[0.01],
    )
    assert model.grid_index == 0
    assert math.isfinite(model.log_marginal)
    mean, var = model.predict(times, 0)
    assert np.sqrt(np.mean((np.asarray(mean) - clean) ** 2)) < 0.1
    assert np.all(np.asarray(var) > 0.0)
    assert np.asarray(model.B).shape == (2, 2)


def test_regularizer_prefers_tight_clusters():
    base = np.vstack([np.ones(10), np.ones(10)])
    spread = np.vstack([np.zeros(10), 2.0 * np.ones(10)])
    tight = topomix.regularizer(base, [0, 0], 1, 1.0, 1.0)
    loose = topomix.regularizer(spread, [0, 0], 1, 1.0, 1.0)
    assert loose > tight


def test_run_produces_artifacts_and_a_report():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "job.cfg")
        with open(cfg, "w") as f:
            f.write(
                "[input]\nsynth = 160, 12.566, 0.2, 11\ndetrend = false\n"
                "[gp]\nvariances = 1\nlength_scales = 1\nnoise_variances = 0.1\n"
                "[run]\nseed = 5\n"
            )
        out = os.path.join(tmp, "out")
        report = topomix.run(cfg, out_dir=out, seed=5)
        assert (report["n_ell"], report["n_c"], report["n_n"]) == (1, 1, 1)
        assert report["curve_names"] == ["f1", "f2", "f3"]
        for name in (
            "input.csv", "decomposition.json", "coords.csv", "distmatrix.csv",
            "clusters.json", "model.json", "predictions.csv", "report.json",
        ):
            assert os.path.exists(os.path.join(out, name)), name


def test_errors_surface_as_python_exceptions():
    with pytest.raises(ValueError):
        topomix.hcluster(np.zeros((3, 3)), 5)  # more clusters than curves
    with pytest.raises(ValueError):
        topomix.task_matrix([0, 2], 2, 1.0, 1.0)  # cluster 1 empty
    with pytest.raises(ValueError):
        topomix.synth_mixed(2, 1.0, 0.1, 0)  # too short to embed
