import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypermeta import autodiff as ad
from hypermeta.autodiff import ParamSet, ShapeError
from hypermeta.hypergraph import (
    CoefficientBank,
    ProjectionParams,
    build_incidence,
    build_snapshot,
    candidate_sets,
    candidate_tables,
    edge_weights,
    hyperedge_embedding,
    pair_nodes,
    reconstruction_error,
    reconstruction_loss,
)

from oracles import elastic_net_objective, naive_embedding


def random_bank(rng, N, scale=1.0):
    return CoefficientBank(rng.normal(scale=scale, size=(2 * N, N - 1)), rng.normal(scale=scale, size=(2 * N, N)))


def random_proj(rng, d, dp, lam=1.0, gamma=0.1):
    return ProjectionParams(rng.normal(size=(d, dp)), rng.normal(size=(d, dp)), lam, gamma)


# candidate sets


def test_candidate_sets_examples():
    spa, tem = candidate_sets(0, 3)
    assert spa.tolist() == [1, 2] and tem.tolist() == [3, 4, 5]
    spa, tem = candidate_sets(3, 2)
    assert spa.tolist() == [2] and tem.tolist() == [0, 1]


@pytest.mark.parametrize("N", range(2, 7))
def test_candidate_set_sizes_and_exclusion(N):
    for m in range(2 * N):
        spa, tem = candidate_sets(m, N)
        assert len(spa) == N - 1 and len(tem) == N
        assert m not in spa and m not in tem
        assert list(spa) == sorted(spa) and list(tem) == sorted(tem)
        own = m // N
        assert all(v // N == own for v in spa) and all(v // N != own for v in tem)


def test_candidate_sets_out_of_range():
    with pytest.raises(IndexError):
        candidate_sets(6, 3)
    with pytest.raises(IndexError):
        candidate_sets(-1, 3)


# reconstruction


def test_reconstruction_error_examples():
    x = np.array([1.0, 2.0])
    assert reconstruction_error(x, [0.0, 1.0], np.array([[5.0, 5.0], [1.0, 2.0]]), np.eye(2)).item() == 0.0
    assert reconstruction_error([1.0, 0.0], [0.0], np.array([[0.0, 1.0]]), np.eye(2)).item() == 1.0


def test_reconstruction_error_matches_least_squares(rng):
    for _ in range(20):
        x, X, th = rng.normal(size=4), rng.normal(size=(3, 4)), rng.normal(size=(4, 5))
        y, A = x @ th, X @ th
        p, *_ = np.linalg.lstsq(A.T, y, rcond=None)
        oracle = float(np.sum((y - p @ A) ** 2))
        assert abs(reconstruction_error(x, p, X, th).item() - oracle) <= 1e-9


def test_reconstruction_error_shape_errors():
    with pytest.raises(ShapeError):
        reconstruction_error(np.ones(3), np.ones(2), np.ones((2, 4)), np.eye(3))
    with pytest.raises(ShapeError):
        reconstruction_error(np.ones(3), np.ones(2), np.ones((2, 3)), np.eye(4))


def test_loss_with_zero_bank(rng):
    N, d = 3, 2
    nodes = rng.normal(size=(2 * N, d))
    proj = random_proj(rng, d, 3, lam=0.7)
    bank = CoefficientBank(np.zeros((2 * N, N - 1)), np.zeros((2 * N, N)))
    expect = 0.7 * sum(np.sum((x @ proj.theta_spa) ** 2) + np.sum((x @ proj.theta_tem) ** 2) for x in nodes)
    assert np.isclose(reconstruction_loss(nodes, bank, proj).item(), expect, rtol=1e-12)


def test_loss_without_fit_terms_is_l1(rng):
    N = 3
    bank = random_bank(rng, N)
    proj = ProjectionParams(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)), 1e-300, 0.0)
    got = reconstruction_loss(rng.normal(size=(2 * N, 2)), bank, proj).item()
    assert np.isclose(got, np.abs(bank.p_spa).sum() + np.abs(bank.p_tem).sum(), rtol=1e-12)


def test_loss_is_sum_of_per_row_elastic_net_objectives(rng):
    N, d = 4, 3
    nodes = rng.normal(size=(2 * N, d))
    bank, proj = random_bank(rng, N), random_proj(rng, d, 2, lam=1.3, gamma=0.2)
    spa, tem = candidate_tables(N)
    expect = 0.0
    for th, P, tab in ((proj.theta_spa, bank.p_spa, spa), (proj.theta_tem, bank.p_tem, tem)):
        Y = nodes @ th
        for m in range(2 * N):
            expect += elastic_net_objective(P[m], Y[m], Y[tab[m]], 1.3, 0.2)
    assert np.isclose(reconstruction_loss(nodes, bank, proj).item(), expect, rtol=1e-12)


def test_loss_nonnegative_and_positive_with_l2(rng):
    for _ in range(20):
        N = int(rng.integers(2, 5))
        bank = random_bank(rng, N)
        val = reconstruction_loss(rng.normal(size=(2 * N, 2)), bank, random_proj(rng, 2, 2, gamma=0.1)).item()
        assert val > 0


def test_recon_gradient_matches_finite_differences(rng):
    N, d = 3, 2
    nodes = rng.normal(size=(2 * N, d))
    params = ParamSet(
        p_spa=rng.uniform(0.2, 1.0, size=(2 * N, N - 1)) * rng.choice([-1, 1], size=(2 * N, N - 1)),
        p_tem=rng.uniform(0.2, 1.0, size=(2 * N, N)) * rng.choice([-1, 1], size=(2 * N, N)),
        theta_spa=rng.normal(size=(d, 3)),
        theta_tem=rng.normal(size=(d, 3)),
    )

    def f(p):
        return reconstruction_loss(nodes, CoefficientBank(p["p_spa"], p["p_tem"]),
                                   ProjectionParams(p["theta_spa"], p["theta_tem"], 1.0, 0.1))

    _, tape = ad.eval_with_tape(f, params)
    g = ad.gradient(tape)
    fd = ad.finite_difference_gradient(f, params, 1e-6)
    for name in params:
        assert ad.relative_error(g[name], fd[name]) <= 1e-5, name


def test_gradient_descent_on_coefficients_is_monotone(rng):
    N, d = 3, 3
    nodes = rng.normal(size=(2 * N, d))
    proj = random_proj(rng, d, d)
    params = ParamSet(p_spa=np.full((2 * N, N - 1), 0.01), p_tem=np.full((2 * N, N), 0.01))

    def f(p):
        return reconstruction_loss(nodes, CoefficientBank(p["p_spa"], p["p_tem"]), proj)

    prev = np.inf
    for _ in range(50):
        val, tape = ad.eval_with_tape(f, params)
        assert val <= prev + 1e-12
        prev = val
        params = params.axpy(-1e-3, ad.gradient(tape))


# incidence


def test_negative_bank_gives_master_only_edges():
    N = 3
    bank = CoefficientBank(-np.ones((2 * N, N - 1)), -np.ones((2 * N, N)))
    H = build_incidence(np.zeros((2 * N, 1)), bank).incidence.data
    assert H.shape == (2 * N, 4 * N)
    np.testing.assert_array_equal(H, np.hstack([np.eye(2 * N), np.eye(2 * N)]))


def test_incidence_column_example():
    # N=2: spatial hyperedge of node 3 has one candidate (node 2); temporal edge of node 0 has nodes 2, 3
    N = 2
    p_spa = np.zeros((4, 1))
    p_tem = np.zeros((4, 2))
    p_tem[0] = [0.5, -0.2]
    H = build_incidence(np.zeros((4, 1)), CoefficientBank(p_spa, p_tem)).incidence.data
    np.testing.assert_array_equal(H[:, 2 * N + 0], [1.0, 0.0, 0.5, 0.0])


def check_incidence_invariants(H, bank, N):
    spa, tem = candidate_tables(N)
    n = 2 * N
    assert H.shape == (n, 2 * n)
    assert np.all(H >= 0)
    for e in range(2 * n):
        m = e % n
        table, P = (spa, bank.p_spa) if e < n else (tem, bank.p_tem)
        assert H[m, e] == 1.0
        assert np.sum(H[:, e] == 1.0) >= 1
        support = set(np.flatnonzero(H[:, e]))
        assert support == {m} | {int(v) for v, p in zip(table[m], P[m]) if p > 0}
        for v, p in zip(table[m], P[m]):
            assert H[v, e] == max(p, 0.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), N=st.integers(2, 6))
def test_incidence_support_predicate(seed, N):
    rng = np.random.default_rng(seed)
    bank = random_bank(rng, N)
    H = build_incidence(np.zeros((2 * N, 1)), bank).incidence.data
    check_incidence_invariants(H, bank, N)


# embeddings


def test_embedding_examples():
    N = 2
    nodes = np.array([[2.0], [7.0], [0.0], [9.0]])
    p_tem = np.full((4, 2), -1.0)
    p_tem[0] = [1.0, -1.0]
    snap = build_incidence(nodes, CoefficientBank(-np.ones((4, 1)), p_tem))
    np.testing.assert_array_equal(hyperedge_embedding(snap, 1).data, [7.0])
    np.testing.assert_array_equal(hyperedge_embedding(snap, 2 * N).data, [1.0])


def test_embedding_matches_naive_loop(rng):
    for _ in range(10):
        N, d = int(rng.integers(2, 6)), int(rng.integers(1, 5))
        nodes = rng.normal(size=(2 * N, d))
        snap = build_incidence(nodes, random_bank(rng, N))
        H = snap.incidence.data
        W = edge_weights(snap).data
        for e in range(4 * N):
            ref = naive_embedding(H, nodes, e)
            np.testing.assert_allclose(hyperedge_embedding(snap, e).data, ref, rtol=0, atol=1e-12)
            np.testing.assert_allclose(W[:, e] @ nodes, ref, rtol=0, atol=1e-12)


def test_embedding_scale_invariance(rng):
    N, d = 3, 4
    nodes = rng.normal(size=(2 * N, d))
    snap = build_incidence(nodes, random_bank(rng, N))
    H = snap.incidence.data
    for e in range(4 * N):
        c = rng.uniform(0.01, 100)
        ref = naive_embedding(H, nodes, e)
        Hc = H.copy()
        Hc[:, e] *= c
        np.testing.assert_allclose(naive_embedding(Hc, nodes, e), ref, atol=1e-12)
        np.testing.assert_allclose(hyperedge_embedding(snap, e).data, ref, atol=1e-12)


# snapshots


def test_snapshot_hand_fixture():
    X = np.array([[[1.0], [2.0]], [[3.0], [4.0]]])
    rng = np.random.default_rng(0)
    snap, recon = build_snapshot(X, random_bank(rng, 2), random_proj(rng, 1, 1))
    assert snap.n_nodes == 4 and snap.n_edges == 8
    np.testing.assert_array_equal(snap.nodes.data[:, 0], [1, 2, 3, 4])
    assert recon.item() >= 0


def test_snapshot_shape_mismatch(rng):
    with pytest.raises(ShapeError):
        build_snapshot(rng.normal(size=(2, 3, 2)), random_bank(rng, 4), random_proj(rng, 2, 2))
    with pytest.raises(ShapeError):
        pair_nodes(np.zeros((3, 2, 2)))


def test_duplicate_slices_give_symmetric_errors(rng):
    N, d = 3, 2
    x = rng.normal(size=(N, d))
    nodes = pair_nodes(np.stack([x, x]))
    th = rng.normal(size=(d, 2))
    spa, tem = candidate_tables(N)
    # a bank mirrored between slices: master i and its counterpart N+i use the same coefficients
    p_spa = rng.normal(size=(N, N - 1))
    p_tem = rng.normal(size=(N, N))
    for i in range(N):
        a = reconstruction_error(nodes[i], p_spa[i], nodes[spa[i]], th).item()
        b = reconstruction_error(nodes[N + i], p_spa[i], nodes[spa[N + i]], th).item()
        assert a == pytest.approx(b, rel=1e-12)
        # a temporal hyperedge over a duplicated slice sees the same candidates as a full spatial one
        c = reconstruction_error(nodes[i], p_tem[i], nodes[tem[i]], th).item()
        e = reconstruction_error(nodes[N + i], p_tem[i], nodes[tem[N + i]], th).item()
        assert c == pytest.approx(e, rel=1e-12)


def _permute_bank(bank, perm, N):
    """Bank for channel-permuted input: new channel j is old channel perm[j]."""
    node_perm = np.concatenate([perm, N + perm])
    inv = np.argsort(node_perm)
    spa, tem = candidate_tables(N)
    p_spa = np.zeros_like(bank.p_spa)
    p_tem = np.zeros_like(bank.p_tem)
    for new_m in range(2 * N):
        old_m = node_perm[new_m]
        old_spa = dict(zip(spa[old_m], bank.p_spa[old_m]))
        old_tem = dict(zip(tem[old_m], bank.p_tem[old_m]))
        p_spa[new_m] = [old_spa[node_perm[v]] for v in spa[new_m]]
        p_tem[new_m] = [old_tem[node_perm[v]] for v in tem[new_m]]
    return CoefficientBank(p_spa, p_tem), node_perm, inv


def test_channel_permutation_equivariance(rng):
    N, d = 4, 3
    X = rng.normal(size=(2, N, d))
    bank, proj = random_bank(rng, N), random_proj(rng, d, 2)
    snap, recon = build_snapshot(X, bank, proj)
    perm = rng.permutation(N)
    pbank, node_perm, _ = _permute_bank(bank, perm, N)
    psnap, precon = build_snapshot(X[:, perm], pbank, proj)
    edge_perm = np.concatenate([node_perm, 2 * N + node_perm])
    np.testing.assert_array_equal(psnap.nodes.data, snap.nodes.data[node_perm])
    np.testing.assert_array_equal(psnap.incidence.data, snap.incidence.data[np.ix_(node_perm, edge_perm)])
    assert precon.item() == pytest.approx(recon.item(), rel=1e-12)
