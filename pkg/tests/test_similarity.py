import numpy as np
import pytest

from leadlag.core import extract_subsequences, TimeSeriesPanel
from leadlag.similarity import (
    distance_correlation,
    gaussian_kernel,
    knn_graph,
    pearson,
    similarity_matrix,
)
from propcfg import N_CASES, case_rng


def universe_from(rows):
    rows = np.asarray(rows, dtype=np.float64)
    panel = TimeSeriesPanel([f"s{i}" for i in range(rows.shape[0])], range(rows.shape[1]), rows)
    return extract_subsequences(panel, q=rows.shape[1], s=1)


# -------------------------------------------------------------- pearson


def test_pearson_perfect_and_affine():
    for case in range(N_CASES):
        rng = case_rng(31, case)
        x = rng.normal(size=int(rng.integers(2, 30)))
        if x.std() == 0:
            continue
        assert pearson(x, x) == pytest.approx(1.0)
        assert pearson(x, -x) == pytest.approx(-1.0)
        a = float(rng.uniform(0.1, 3.0))
        b = float(rng.normal())
        y = rng.normal(size=x.size)
        if y.std() == 0:
            continue
        r = pearson(x, y)
        assert -1.0 <= r <= 1.0
        assert pearson(a * x + b, y) == pytest.approx(r)
        assert pearson(-a * x + b, y) == pytest.approx(-r)


def test_pearson_matches_corrcoef():
    for case in range(N_CASES):
        rng = case_rng(32, case)
        m = int(rng.integers(2, 25))
        x = rng.normal(size=m)
        y = x * rng.normal() + rng.normal(size=m) * rng.uniform(0.1, 2.0)
        if x.std() == 0 or y.std() == 0:
            continue
        assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_pearson_input_errors():
    with pytest.raises(ValueError):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        pearson([1.0], [2.0])
    with pytest.raises(ValueError):
        pearson([3.0, 3.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        pearson([[1.0, 2.0]], [[3.0, 4.0]])


# ------------------------------------------------- distance correlation


def dcor_oracle(x, y):
    """Biased-statistic distance correlation written out longhand."""
    m = len(x)
    ax = np.empty((m, m))
    ay = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            ax[i, j] = abs(x[i] - x[j])
            ay[i, j] = abs(y[i] - y[j])

    def center(d):
        out = np.empty_like(d)
        for i in range(m):
            for j in range(m):
                out[i, j] = d[i, j] - d[i].mean() - d[:, j].mean() + d.mean()
        return out

    a = center(ax)
    b = center(ay)
    dcov2 = (a * b).mean()
    dvx = (a * a).mean()
    dvy = (b * b).mean()
    if dvx == 0.0 or dvy == 0.0:
        return 0.0
    return np.sqrt(max(dcov2, 0.0) / np.sqrt(dvx * dvy))


def test_distance_correlation_matches_longhand():
    for case in range(N_CASES):
        rng = case_rng(33, case)
        m = int(rng.integers(2, 9))
        x = rng.normal(size=m)
        y = rng.normal(size=m)
        assert distance_correlation(x, y) == pytest.approx(dcor_oracle(x, y), abs=1e-10)


def test_distance_correlation_reference_example():
    got = distance_correlation([1.0, 2.0, 3.0], [1.0, 4.0, 9.0])
    assert got == pytest.approx(dcor_oracle([1.0, 2.0, 3.0], [1.0, 4.0, 9.0]))
    assert 0.9 < got <= 1.0


def test_distance_correlation_invariances():
    for case in range(N_CASES):
        rng = case_rng(34, case)
        m = int(rng.integers(3, 15))
        x = rng.normal(size=m)
        y = rng.normal(size=m)
        d = distance_correlation(x, y)
        assert 0.0 <= d <= 1.0
        assert distance_correlation(y, x) == pytest.approx(d)
        # affine copies are perfectly dependent
        a = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 3.0))
        assert distance_correlation(x, a * x + 1.0) == pytest.approx(1.0)


def test_distance_correlation_constant_and_errors():
    assert distance_correlation([2.0, 2.0, 2.0], [1.0, 5.0, 9.0]) == 0.0
    assert distance_correlation([1.0, 5.0], [3.0, 3.0]) == 0.0
    with pytest.raises(ValueError):
        distance_correlation([1.0], [2.0])
    with pytest.raises(ValueError):
        distance_correlation([1.0, 2.0], [1.0, 2.0, 3.0])


# ------------------------------------------------------------ knn graph


def test_knn_graph_complete_when_k_is_max():
    uni = universe_from(np.arange(5.0)[:, None] * np.ones(3))
    g = knn_graph(uni, k_nn=4)
    dense = g.to_dense()
    assert np.array_equal(dense > 0, ~np.eye(5, dtype=bool))
    assert g.n_edges == 10
    assert np.all(g.weights == 1.0)


def test_knn_graph_union_can_exceed_k():
    # points 0, 1, 3 on a line: the middle point is everyone's neighbour
    uni = universe_from([[0.0], [1.0], [3.0]])
    g = knn_graph(uni, k_nn=1)
    dense = g.to_dense()
    assert dense[0, 1] and dense[1, 2]
    assert not dense[0, 2]
    assert dense[1].sum() == 2.0


def test_knn_graph_tie_breaks_toward_lower_index():
    # vertex 2 is equidistant from the two duplicates and must pick vertex 0
    uni = universe_from([[5.0], [5.0], [9.0]])
    g = knn_graph(uni, k_nn=1)
    dense = g.to_dense()
    assert dense[0, 2] == 1.0
    assert dense[1, 2] == 0.0
    assert dense[0, 1] == 1.0


def test_knn_graph_default_neighbour_count():
    rng = case_rng(35, 0)
    uni = universe_from(rng.normal(size=(10, 4)))
    auto = knn_graph(uni)
    explicit = knn_graph(uni, k_nn=int(np.ceil(np.sqrt(10))))
    assert np.array_equal(auto.to_dense(), explicit.to_dense())


def test_knn_graph_structure_properties():
    """Symmetric, no self loops, and every vertex keeps its nearest picks."""
    for case in range(N_CASES):
        rng = case_rng(36, case)
        n = int(rng.integers(3, 12))
        q = int(rng.integers(1, 5))
        pts = rng.normal(size=(n, q))
        k_nn = int(rng.integers(1, n))
        g = knn_graph(universe_from(pts), k_nn=k_nn)
        dense = g.to_dense()
        assert np.array_equal(dense, dense.T)
        assert not dense.diagonal().any()
        deg = (dense > 0).sum(axis=1)
        assert np.all(deg >= k_nn)

        v = int(rng.integers(0, n))
        d = ((pts - pts[v]) ** 2).sum(axis=1)
        order = sorted((dist, i) for i, dist in enumerate(d) if i != v)
        for _, i in order[:k_nn]:
            assert dense[v, i] == 1.0


def test_knn_graph_parameter_errors():
    uni = universe_from([[0.0], [1.0], [2.0]])
    with pytest.raises(ValueError):
        knn_graph(uni, k_nn=3)
    with pytest.raises(ValueError):
        knn_graph(uni, k_nn=0)
    single = universe_from([[0.0]])
    with pytest.raises(ValueError):
        knn_graph(single)


# ------------------------------------------------------ gaussian kernel


def test_gaussian_kernel_reference_weight():
    uni = universe_from([[0.0], [1.0]])
    g = gaussian_kernel(knn_graph(uni, k_nn=1), uni, sigma_kernel=1.0)
    assert np.allclose(g.weights, np.exp(-0.5))


def test_gaussian_kernel_identical_windows_weight_one():
    uni = universe_from([[2.0, 3.0], [2.0, 3.0], [9.0, 9.0]])
    g = gaussian_kernel(knn_graph(uni, k_nn=1), uni, sigma_kernel=0.5)
    assert g.to_dense()[0, 1] == 1.0


def test_gaussian_kernel_default_bandwidth_and_floor():
    rng = case_rng(37, 0)
    uni = universe_from(rng.normal(size=(66, 3)))
    graph = knn_graph(uni)
    auto = gaussian_kernel(graph, uni)
    explicit = gaussian_kernel(graph, uni, sigma_kernel=1.0 / 66)
    assert np.array_equal(auto.weights, explicit.weights)
    # 1/N is tiny, distinct windows underflow onto the common floor
    distinct = auto.rows != auto.cols
    d2 = ((uni.windows[auto.rows] - uni.windows[auto.cols]) ** 2).sum(axis=1)
    # exp(-d2 * 66^2 / 2) drops below the 1e-300 floor once d2 > ~0.32
    far = distinct & (d2 > 0.35)
    assert far.any()
    assert np.all(auto.weights[far] == 1e-300)
    assert np.all(auto.weights > 0)


def test_gaussian_kernel_matches_formula():
    for case in range(N_CASES):
        rng = case_rng(38, case)
        n = int(rng.integers(3, 10))
        pts = rng.normal(size=(n, int(rng.integers(1, 5))))
        uni = universe_from(pts)
        sigma = float(rng.uniform(0.05, 3.0))
        g = gaussian_kernel(knn_graph(uni, k_nn=int(rng.integers(1, n))), uni, sigma)
        e = int(rng.integers(0, g.rows.size))
        i, j = g.rows[e], g.cols[e]
        d2 = float(((pts[i] - pts[j]) ** 2).sum())
        expect = max(np.exp(-d2 / (2.0 * sigma * sigma)), 1e-300)
        assert g.weights[e] == pytest.approx(expect, rel=1e-12)
        # weights never grow with distance
        d2_all = ((pts[g.rows] - pts[g.cols]) ** 2).sum(axis=1)
        order = np.argsort(d2_all)
        assert np.all(np.diff(g.weights[order]) <= 1e-15)


def test_gaussian_kernel_parameter_errors():
    uni = universe_from([[0.0], [1.0], [2.0]])
    graph = knn_graph(uni, k_nn=1)
    with pytest.raises(ValueError):
        gaussian_kernel(graph, uni, sigma_kernel=0.0)
    with pytest.raises(ValueError):
        gaussian_kernel(graph, uni, sigma_kernel=-1.0)
    other = universe_from([[0.0], [1.0]])
    with pytest.raises(ValueError):
        gaussian_kernel(graph, other)


# ---------------------------------------------------- similarity matrix


def test_similarity_matrix_pearson_matches_corrcoef():
    rng = case_rng(39, 0)
    uni = universe_from(rng.normal(size=(6, 8)))
    got = similarity_matrix(uni, "pearson")
    assert np.allclose(got, np.corrcoef(uni.windows))


def test_similarity_matrix_distance_variant():
    rng = case_rng(39, 1)
    uni = universe_from(rng.normal(size=(4, 5)))
    got = similarity_matrix(uni, "distance")
    assert np.allclose(got, got.T)
    assert np.allclose(np.diag(got), 1.0)
    assert got[0, 2] == pytest.approx(distance_correlation(uni.windows[0], uni.windows[2]))


def test_similarity_matrix_errors():
    uni = universe_from([[1.0, 1.0], [0.0, 2.0]])
    with pytest.raises(ValueError):
        similarity_matrix(uni, "pearson")
    good = universe_from([[1.0, 2.0], [0.0, 2.0]])
    with pytest.raises(ValueError):
        similarity_matrix(good, "cosine")
