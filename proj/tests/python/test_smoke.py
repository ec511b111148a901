import io
import os

import numpy as np
import pytest

import iprop


def random_image(rng, h, w):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def test_default_k():
    assert iprop.default_k(299, 299) == 9
    assert iprop.default_k(12, 12) == 1


def test_lab_reference_values():
    lab = iprop.rgb_to_lab(np.array([[[255, 255, 255], [128, 128, 128]]] * 2, dtype=np.uint8))
    assert lab.shape == (2, 2, 3)
    assert lab[0, 0, 0] == pytest.approx(100.0, abs=1e-9)
    assert lab[0, 1, 0] == pytest.approx(53.585013452169, abs=1e-9)
    assert abs(lab[0, 1, 1]) < 1e-6 and abs(lab[0, 1, 2]) < 1e-6


def test_decode_png_bytes():
    pil = pytest.importorskip("PIL.Image")
    pixels = random_image(np.random.default_rng(0), 5, 7)
    buf = io.BytesIO()
    pil.fromarray(pixels).save(buf, format="PNG")
    np.testing.assert_array_equal(iprop.decode_image(buf.getvalue()), pixels)
    with pytest.raises(iprop.Error):
        iprop.decode_image(b"definitely not an image")


def test_transition_rows_are_stochastic():
    image = random_image(np.random.default_rng(1), 9, 8)
    indptr, indices, data = iprop.transition_matrix(image, k=2)
    assert len(indptr) == 73
    sums = np.add.reduceat(data, indptr[:-1])
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)
    assert np.all(indices[indptr[0]:indptr[1]] != 0)


def test_two_node_value_iteration():
    result = iprop.value_iterate([0, 1, 2], [1, 0], [1.0, 1.0], np.array([[1.0, 0.0]]), gamma=0.5, tol=1e-24)
    assert result.converged
    np.testing.assert_allclose(result.refined, [[4 / 3, 2 / 3]], atol=1e-10)


def test_refine_matches_closed_form():
    rng = np.random.default_rng(2)
    image = random_image(rng, 10, 10)
    am = rng.uniform(-1, 1, size=(10, 10))
    refined = iprop.refine(image, am, k=2, gamma=0.9, tol=1e-24).refined
    exact = iprop.closed_form(image, am, k=2, gamma=0.9)
    np.testing.assert_allclose(refined, exact, atol=1e-9)

    same = iprop.refine(image, am, gamma=0.0)
    assert same.refined.tobytes() == am.tobytes()

    flat = iprop.refine(image, np.full((10, 10), 2.0), gamma=0.99, tol=1e-10).refined
    np.testing.assert_allclose(flat, 200.0, rtol=1e-4)

    with pytest.raises(iprop.Error):
        iprop.refine(image, np.zeros((4, 4)))


def test_metrics():
    am = np.array([[0.9, 0.1, 0.8, 0.2]])
    mask = np.array([[1, 1, 0, 0]])
    assert iprop.roc_auc(am, mask) == pytest.approx(0.5)
    assert iprop.pointing_game(am, mask)
    assert iprop.spearman_abs(np.array([[1.0, 2, 3, 4]]), np.array([[2.0, 1, 3, 4]])) == pytest.approx(0.8)
    assert iprop.deletion_insertion_ratio(0.8, 0.2) == 0.25


def test_curves_with_python_scorer():
    rng = np.random.default_rng(3)
    image = random_image(rng, 6, 6)
    am = rng.normal(size=(6, 6))
    seen = []

    def scorer(img, class_index):
        seen.append(img.copy())
        return 0.3

    ins = iprop.insertion_curve(image, am, scorer, steps=5)
    assert ins["auc"] == pytest.approx(0.3)
    assert len(ins["fractions"]) == 5
    assert not seen[0].any()
    np.testing.assert_array_equal(seen[-1], image)


@pytest.mark.skipif("IPROP_PREDICTOR" not in os.environ, reason="synthetic predictor path not provided")
def test_subprocess_predictor():
    with iprop.Predictor([os.environ["IPROP_PREDICTOR"], "--mode", "constant", "--value", "0.7"]) as predictor:
        image = random_image(np.random.default_rng(4), 5, 5)
        assert predictor.score(image, 2) == pytest.approx(0.7)
        curve = iprop.deletion_curve(image, np.ones((5, 5)), predictor, steps=4)
        assert curve["auc"] == pytest.approx(0.7)


def test_attribution_round_trip(tmp_path):
    am = np.array([[0.5, -2.0], [1.25, 3.0]])
    iprop.save_attribution(am, tmp_path / "m.ipam")
    np.testing.assert_array_equal(iprop.load_attribution(tmp_path / "m.ipam"), am)
    iprop.save_attribution(am, tmp_path / "m.csv", format="csv")
    np.testing.assert_allclose(iprop.load_attribution(tmp_path / "m.csv"), am, atol=1e-6)
