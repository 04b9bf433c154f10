import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse

from bifid.dataset import Dataset
from bifid.errors import DegenerateDataError, ParameterError, StateError
from bifid.graph import (
    KernelSpec,
    build_adjacency,
    build_laplacian,
    dump_matrix,
    graph_laplacian,
    kernel_value,
    load_matrix,
    self_tuned_sigmas,
)
from bifid.oracles import naive_adjacency, naive_laplacian, naive_self_tuned_sigmas, quadratic_form_sum

from conftest import scaled


def test_kernel_at_zero():
    for s in (0.1, 1.0, 7.0):
        assert kernel_value(0.0, s) == 1.0


def test_kernel_at_sigma():
    assert kernel_value(2.0, 2.0) == pytest.approx(math.exp(-1))
    assert kernel_value(0.25, 0.25) == pytest.approx(0.36787944117144233, rel=1e-15)


def test_kernel_rejects_bad_sigma():
    with pytest.raises(ParameterError):
        kernel_value(1.0, 0.0)
    with pytest.raises(ParameterError):
        kernel_value(1.0, -1.0)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0.05, 5))
def test_kernel_monotone(r1, r2, s):
    if r1 < r2 and kernel_value(r2, s) > 0:
        assert kernel_value(r1, s) >= kernel_value(r2, s)
    if r1 < r2 and (r2**2 - r1**2) / s**2 > 1e-9 and kernel_value(r1, s) > 1e-300:
        assert kernel_value(r1, s) > kernel_value(r2, s)


def test_self_tuned_collinear():
    X = np.array([[0.0], [1.0], [3.0]])
    assert self_tuned_sigmas(X, 1).tolist() == [1.0, 1.0, 2.0]
    assert self_tuned_sigmas(X, 2).tolist() == [3.0, 2.0, 3.0]
    assert np.array_equal(self_tuned_sigmas(X, 1), naive_self_tuned_sigmas(X, 1))
    assert np.array_equal(self_tuned_sigmas(X, 2), naive_self_tuned_sigmas(X, 2))


def test_self_tuned_equilateral():
    s = 1.7
    X = np.array([[0, 0], [s, 0], [s / 2, s * math.sqrt(3) / 2]])
    assert np.allclose(self_tuned_sigmas(X, 1), s, rtol=1e-14)


def test_self_tuned_random_matches_oracle(rng):
    X = rng.normal(size=(30, 3))
    for k in (1, 4, 7):
        assert np.allclose(self_tuned_sigmas(X, k), naive_self_tuned_sigmas(X, k), rtol=1e-14)


def test_self_tuned_duplicates_clamped():
    X = np.array([[0.0], [0.0], [2.0], [5.0]])
    sig = self_tuned_sigmas(X, 1)
    assert sig[0] == sig[1] == 2.0  # smallest positive pairwise distance


def test_self_tuned_identical_points():
    with pytest.raises(DegenerateDataError):
        self_tuned_sigmas(np.ones((4, 2)), 1)


def test_self_tuned_rank_bounds():
    with pytest.raises(ParameterError):
        self_tuned_sigmas(np.arange(3.0).reshape(3, 1), 3)


def test_adjacency_two_points_at_sigma():
    ds = scaled([[-1.0], [1.0]])
    W = build_adjacency(ds, KernelSpec.fixed(2.0))
    assert W[0, 1] == pytest.approx(math.exp(-1), rel=1e-15)


def test_adjacency_symmetric_unit_diagonal(rng):
    ds = scaled(rng.normal(size=(25, 3)))
    for k in (KernelSpec.fixed(0.3), KernelSpec.self_tuned(5)):
        W = build_adjacency(ds, k)
        assert np.array_equal(W, W.T)
        assert np.all(np.diag(W) == 1.0)
        assert np.all((W > 0) & (W <= 1))


def test_adjacency_matches_double_loop(rng):
    ds = scaled(rng.normal(size=(5, 2)))
    W = build_adjacency(ds, KernelSpec.fixed(0.7))
    assert np.max(np.abs(W - naive_adjacency(ds.points, sigma=0.7))) <= 1e-15
    sig = naive_self_tuned_sigmas(ds.points, 2)
    W2 = build_adjacency(ds, KernelSpec.self_tuned(2))
    assert np.max(np.abs(W2 - naive_adjacency(ds.points, sigmas=sig))) <= 1e-15


def test_adjacency_requires_scaled():
    with pytest.raises(StateError):
        build_adjacency(Dataset(np.zeros((3, 2))), KernelSpec())


def test_adjacency_sparse_threshold(rng):
    ds = scaled(rng.normal(size=(40, 2)))
    dense = build_adjacency(ds, KernelSpec.fixed(0.1))
    sp = build_adjacency(ds, KernelSpec.fixed(0.1), sparse_threshold=1e-12)
    assert sparse.issparse(sp)
    expect = np.where(dense < 1e-12, 0.0, dense)
    assert np.array_equal(sp.toarray(), expect)


def test_unnormalized_laplacian_row_sums(rng):
    ds = scaled(rng.normal(size=(30, 2)))
    b = build_laplacian(build_adjacency(ds, KernelSpec.fixed(0.4)), 0, 0)
    assert np.max(np.abs(b.L.sum(axis=1))) <= 1e-10


def test_normalized_laplacian_null_vector(rng):
    ds = scaled(rng.normal(size=(30, 2)))
    b = build_laplacian(build_adjacency(ds, KernelSpec.fixed(0.4)), 0.5, 0.5)
    assert np.max(np.abs(b.L - b.L.T)) <= 1e-12
    x = np.sqrt(b.deg)
    x /= np.linalg.norm(x)
    assert np.max(np.abs(b.L @ x)) <= 1e-10
    assert abs(x @ b.L @ x) <= 1e-10


def test_laplacian_matches_triple_product(rng):
    ds = scaled(rng.normal(size=(4, 2)))
    W = build_adjacency(ds, KernelSpec.fixed(0.5))
    for p, q in ((0.5, 0.5), (0.0, 0.0), (1.0, 0.0), (0.3, 0.7)):
        L = build_laplacian(W, p, q).L
        assert np.max(np.abs(L - naive_laplacian(W, p, q))) <= 1e-14


def test_zero_degree():
    with pytest.raises(DegenerateDataError):
        build_laplacian(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_quadratic_form_identity(rng):
    ds = scaled(rng.normal(size=(40, 3)))
    b = build_laplacian(build_adjacency(ds, KernelSpec.fixed(0.5)), 0, 0)
    for _ in range(5):
        x = rng.normal(size=40)
        exact = quadratic_form_sum(b.W, x)
        assert abs(x @ b.L @ x - exact) <= 1e-10 * abs(exact)


@given(st.integers(0, 2**32 - 1))
def test_positive_semidefinite(seed):
    r = np.random.default_rng(seed)
    ds = scaled(r.normal(size=(15, 2)))
    b = graph_laplacian(ds, KernelSpec.fixed(0.5))
    for _ in range(3):
        x = r.normal(size=15)
        assert x @ b.L @ x >= -1e-10


def test_matrix_dump_round_trip(tmp_path, rng):
    M = rng.normal(size=(4, 3))
    dump_matrix(M, tmp_path / "m.bin", "laplacian")
    back, hdr = load_matrix(tmp_path / "m.bin")
    assert hdr == {"rows": 4, "cols": 3, "kind": "laplacian"}
    assert np.array_equal(back, M)
    assert (tmp_path / "m.bin").read_bytes() == M.astype("<f8").tobytes()


def test_dense_limit(monkeypatch):
    import bifid.graph as g

    monkeypatch.setattr(g, "DENSE_LIMIT", 5)
    with pytest.raises(ParameterError):
        graph_laplacian(scaled(np.random.default_rng(0).normal(size=(6, 2))), KernelSpec())


def test_adjacency_deterministic(rng):
    ds = scaled(rng.normal(size=(50, 2)))
    a = build_adjacency(ds, KernelSpec.self_tuned())
    b = build_adjacency(ds, KernelSpec.self_tuned())
    assert a.tobytes() == b.tobytes()
