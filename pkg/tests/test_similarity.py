import numpy as np
import pytest

from send_diar import autodiff as ad
from send_diar.autodiff import Parameter
from send_diar.similarity import (
    SCALAR_METRICS,
    cosine_sim,
    dot_sim,
    sigma_dot_sim,
    similarity_graph,
    similarity_matrix,
)


def test_dot_examples():
    assert dot_sim([1, 1], [1, 1]) == 2
    assert dot_sim([1, 0], [0, 3]) == 0
    assert dot_sim([2, 0], [3, 0]) == 6


def test_sigma_dot_examples():
    d = 7
    assert sigma_dot_sim(np.zeros(d), np.zeros(d)) == 0
    assert sigma_dot_sim(np.full(d, 1000.0), np.full(d, 1000.0)) == pytest.approx(d, abs=1e-6)
    assert sigma_dot_sim(np.full(d, 1000.0), np.full(d, -1000.0)) == pytest.approx(-d, abs=1e-6)


def test_cosine_examples(rng):
    h = rng.standard_normal(5)
    assert cosine_sim(h, h) == pytest.approx(1.0)
    assert cosine_sim([1, 0], [0, 2]) == 0
    assert cosine_sim(h, 5 * h) == pytest.approx(1.0)


def test_cosine_zero_vector_is_flagged():
    assert cosine_sim([0, 0], [1, 2], return_flag=True) == (0.0, True)
    assert cosine_sim([1, 0], [1, 2], return_flag=True)[1] is False


def test_cosine_scale_invariance(rng):
    h, e = rng.standard_normal((2, 6))
    assert cosine_sim(3.0 * h, 0.2 * e) == pytest.approx(cosine_sim(h, e), abs=1e-12)


@pytest.mark.parametrize("fn", [dot_sim, sigma_dot_sim, cosine_sim])
def test_dimension_mismatch(fn):
    with pytest.raises(ValueError):
        fn([1, 2], [1, 2, 3])


@pytest.mark.parametrize("metric", sorted(SCALAR_METRICS))
def test_symmetric(metric, rng):
    for _ in range(50):
        h, e = rng.standard_normal((2, 4)) * 3
        assert SCALAR_METRICS[metric](h, e) == pytest.approx(SCALAR_METRICS[metric](e, h), abs=1e-12)


@pytest.mark.parametrize("metric", sorted(SCALAR_METRICS))
def test_matrix_matches_loop(metric, rng):
    H = rng.standard_normal((4, 8))
    E = rng.standard_normal((3, 8))
    values = similarity_matrix(H, E, metric).values
    loop = np.array([[SCALAR_METRICS[metric](h, e) for e in E] for h in H])
    np.testing.assert_allclose(values, loop, atol=1e-12)


def test_single_pair_reduces_to_scalar(rng):
    h, e = rng.standard_normal((2, 3))
    assert similarity_matrix(h[None], e[None], "sigma_dot").values[0, 0] == pytest.approx(sigma_dot_sim(h, e))


def test_duplicated_speaker_gives_duplicated_column(rng):
    H = rng.standard_normal((5, 4))
    E = rng.standard_normal((2, 4))[[0, 1, 0]]
    values = similarity_matrix(H, E, "cosine").values
    np.testing.assert_array_equal(values[:, 0], values[:, 2])


def test_matrix_bounds_and_degenerate_flags(rng):
    H = rng.standard_normal((6, 5)) * 10
    E = rng.standard_normal((3, 5))
    E[1] = 0
    cos = similarity_matrix(H, E, "cosine")
    assert np.all(np.abs(cos.values) <= 1)
    np.testing.assert_array_equal(cos.degenerate[:, 1], True)
    np.testing.assert_array_equal(cos.values[:, 1], 0)
    assert np.all(np.abs(similarity_matrix(H, E, "sigma_dot").values) <= 5)


def test_matrix_dimension_mismatch():
    with pytest.raises(ValueError):
        similarity_matrix(np.ones((2, 3)), np.ones((2, 4)), "dot")
    with pytest.raises(ValueError):
        similarity_matrix(np.ones((2, 3)), np.ones((2, 3)), "euclid")


@pytest.mark.parametrize("metric", sorted(SCALAR_METRICS))
def test_graph_matches_numpy_and_gradients(metric):
    for seed in range(10):
        rng = np.random.default_rng(seed)
        H = Parameter(rng.standard_normal((5, 4)))
        E = Parameter(rng.standard_normal((3, 4)))
        np.testing.assert_allclose(similarity_graph(H, E, metric).data,
                                   similarity_matrix(H.data, E.data, metric).values, atol=1e-12)
        weights = rng.standard_normal((5, 3))
        assert ad.grad_check(lambda: ad.sum(similarity_graph(H, E, metric) * weights), [H, E]) < 1e-4
