import json

import numpy as np
import pytest
import scipy.sparse as sp

from dfnmf import deep
from dfnmf.deep import DeepModel, LayerSchedule, default_schedule
from dfnmf.fairness import build_fairness_matrix, fairness_matrix_from_labels, fairness_penalty
from dfnmf.metrics import ari
from dfnmf.nmtf import init_factors, nmtf_fit, shallow_fair_fit
from dfnmf.updates import NumericalError, as_operator, fine_tune, membership_step

from conftest import random_graph, two_cliques


def random_model(sizes, rng):
    layers = [rng.random((a, b)) for a, b in zip(sizes, sizes[1:])]
    U = rng.random((sizes[-1], sizes[-1]))
    return DeepModel.from_factors(layers, U + U.T)


# dense reimplementation used as the oracle

def dense_objective(A, Psi, W, F, lam):
    R = A - Psi @ W @ Psi.T
    return np.sum(R * R) + lam * np.sum((F.T @ Psi) ** 2)


def dense_sweep(A, layers, W, F, lam, eps=1e-12):
    """Reference sweep: product-split step, kept only if the fixed-W objective does not rise."""
    layers = [H.copy() for H in layers]
    P = F @ F.T
    Pp, Pn = np.maximum(P, 0), np.maximum(-P, 0)
    p = len(layers)

    def prod(L):
        return np.linalg.multi_dot(L) if len(L) > 1 else L[0]

    for i in range(p):
        Psi = prod(layers)
        left = prod(layers[:i]) if i else None
        right = prod(layers[i + 1:]) if i < p - 1 else None
        S = Psi.T @ Psi
        G = P @ Psi
        base = dense_objective(A, Psi, W, F, lam)
        candidates = [(np.maximum(G, 0), np.maximum(-G, 0)), (Pp @ Psi, Pn @ Psi)]
        for pos, neg in candidates if lam else candidates[1:]:
            N = A.T @ Psi @ W + A @ Psi @ W.T + lam * neg
            D = Psi @ W.T @ S @ W + Psi @ W @ S @ W.T + lam * pos
            if left is not None:
                N, D = left.T @ N, left.T @ D
            if right is not None:
                N, D = N @ right.T, D @ right.T
            Hi = layers[i] * (N / np.maximum(D, eps)) ** 0.25
            trial = layers[:i] + [Hi] + layers[i + 1:]
            if dense_objective(A, prod(trial), W, F, lam) <= base:
                break
        layers = trial
        Psi = prod(layers)
        S = Psi.T @ Psi
        W = W * (Psi.T @ A @ Psi) / np.maximum(S @ W @ S, eps)
    return layers, W


def test_schedule_validation():
    s = LayerSchedule((100, 64, 16, 5))
    assert (s.n, s.k, s.depth) == (100, 5, 3)
    with pytest.raises(ValueError):
        LayerSchedule((100, 16, 64, 5))
    with pytest.raises(ValueError):
        LayerSchedule((100,))
    with pytest.raises(ValueError):
        LayerSchedule((100, 0))
    assert default_schedule(2000, 5).sizes == (2000, 64, 5)
    assert default_schedule(20000, 5).sizes == (20000, 256, 64, 5)
    assert default_schedule(30, 5).sizes == (30, 30, 5)


def test_pretrain_depth_one_is_nmtf():
    g = random_graph(60, 0.1, 0)
    model = deep.pretrain(g.adjacency, (60, 4), seed=3)
    ref = nmtf_fit(g.adjacency, 4, seed=3)
    assert np.array_equal(model.layers[0], ref.H) and np.array_equal(model.Psi, ref.H)
    assert np.array_equal(model.W, ref.W)


def test_pretrain_shapes():
    g = random_graph(150, 0.08, 1)
    model = deep.pretrain(g.adjacency, (150, 64, 16, 5), seed=0, max_iter=50)
    assert [H.shape for H in model.layers] == [(150, 64), (64, 16), (16, 5)]
    assert model.W.shape == (5, 5)
    assert np.allclose(model.Psi, model.layers[0] @ model.layers[1] @ model.layers[2], rtol=1e-10)
    assert all(np.all(H >= 0) for H in model.layers)


def test_update_hi_reduces_to_shallow_step():
    rng = np.random.default_rng(0)
    g = random_graph(30, 0.2, 0)
    model = random_model((30, 3), rng)
    new = deep.update_Hi(model, 1, g.adjacency)
    A = g.adjacency.toarray()
    H, W = model.layers[0], model.W
    S = H.T @ H
    want = H * ((A @ H @ W + A @ H @ W.T) / (H @ W.T @ S @ W + H @ W @ S @ W.T)) ** 0.25
    assert np.allclose(new.layers[0], want, rtol=1e-12)


def test_update_hi_does_not_increase_objective():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        g = random_graph(8, 0.5, seed)
        F = build_fairness_matrix(g)
        model = random_model((8, 4, 2), rng)
        for lam in (0.0, 1.0, 50.0):
            for i in (1, 2):
                before = deep.objective(g.adjacency, model, F, lam)[0]
                after = deep.objective(g.adjacency, deep.update_Hi(model, i, g.adjacency, F, lam), F, lam)[0]
                assert after <= before * (1 + 1e-9)


def test_update_hi_fixed_point():
    # A = H W H^T exactly makes numerator and denominator equal
    rng = np.random.default_rng(1)
    H = rng.random((12, 3))
    U = rng.random((3, 3))
    W = U + U.T
    A = sp.csr_matrix(H @ W @ H.T)
    model = DeepModel.from_factors([H], W)
    new = deep.update_Hi(model, 1, A)
    assert np.allclose(new.layers[0], H, rtol=1e-12)


def test_update_hi_index_and_nan():
    rng = np.random.default_rng(2)
    g = random_graph(10, 0.4, 2)
    model = random_model((10, 2), rng)
    with pytest.raises(IndexError):
        deep.update_Hi(model, 2, g.adjacency)
    W = model.W.copy()
    W[0, 0] = np.nan
    with pytest.raises(NumericalError):
        membership_step(model.layers[0], None, None, model.Psi, model.Psi, model.Psi, W)


def test_update_wp_fixed_point_and_zero():
    Psi = np.zeros((6, 2))
    Psi[:3, 0] = 1 / np.sqrt(3)
    Psi[3:, 1] = 1 / np.sqrt(3)  # orthonormal columns, S = I
    W = np.array([[2.0, 0.5], [0.5, 1.0]])
    A = sp.csr_matrix(Psi @ W @ Psi.T)
    model = DeepModel.from_factors([Psi], W)
    assert np.allclose(deep.update_Wp(model, A).W, W, rtol=1e-12)
    zero = DeepModel.from_factors([Psi], np.zeros((2, 2)))
    assert np.array_equal(deep.update_Wp(zero, A).W, np.zeros((2, 2)))


def test_update_wp_does_not_increase_utility():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        g = random_graph(20, 0.3, seed)
        model = random_model((20, 5, 3), rng)
        before = deep.objective(g.adjacency, model)[1]
        after = deep.objective(g.adjacency, deep.update_Wp(model, g.adjacency))[1]
        assert after <= before * (1 + 1e-9)
        assert np.all(deep.update_Wp(model, g.adjacency).W >= 0)


def test_objective_identities():
    rng = np.random.default_rng(3)
    model = random_model((15, 4, 2), rng)
    A = sp.csr_matrix(model.Psi @ model.W @ model.Psi.T)
    total, util, pen = deep.objective(A, model)
    assert abs(total) <= 1e-9 * np.sum(A.toarray() ** 2)
    g = random_graph(15, 0.3, 3)
    F = build_fairness_matrix(g)
    t0 = deep.objective(g.adjacency, model, F, 0.0)[0]
    t1, u1, p1 = deep.objective(g.adjacency, model, F, 1.0)
    assert t1 == u1 + p1
    assert t1 - t0 == pytest.approx(fairness_penalty(F, model.Psi), rel=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 20 + 3 * seed
    g = random_graph(n, 0.2, seed, groups=3)
    F = build_fairness_matrix(g)
    model = random_model((n, 6, 3), rng)
    A = g.adjacency.toarray()
    lam = 2.0
    want = dense_objective(A, model.Psi, model.W, F.F, lam)
    got = deep.objective(g.adjacency, model, F, lam)[0]
    assert got == pytest.approx(want, rel=1e-8)
    res = fine_tune(g.adjacency, model.layers, model.W, F, lam, tol=0, max_iter=1)
    layers, W = dense_sweep(A, model.layers, model.W, F.F, lam)
    for a, b in zip(res["layers"], layers):
        assert np.allclose(a, b, rtol=1e-8, atol=0)
    assert np.allclose(res["W"], W, rtol=1e-8, atol=0)
    assert res["objective_trace"][0] == pytest.approx(dense_objective(A, res["Psi"], W, F.F, lam), rel=1e-8)


def test_fit_two_cliques():
    g = two_cliques(6)
    F = build_fairness_matrix(g)
    for seed in range(3):
        rep = deep.fit(g.adjacency, F, (12, 4, 2), 0.0, seed=seed)
        assert ari(rep.hard_assignment, g.planted_clusters) == 1.0
        assert rep.iterations == len(rep.objective_trace) == len(rep.penalty_trace)
        assert rep.hard_assignment.min() >= 0 and rep.hard_assignment.max() < 2


@pytest.mark.parametrize("n", [50, 200])
def test_monotone_descent(n):
    for seed in range(20):
        g = random_graph(n, 0.1, seed)
        F = build_fairness_matrix(g)
        for lam in (0.0, 1.0, 100.0):
            rep = deep.fit(g.adjacency, F, (n, 8, 4), lam, seed=seed, max_iter=60, tol=0)
            tr = [rep.initial_objective, *rep.objective_trace]
            assert all(b <= a * (1 + 1e-9) for a, b in zip(tr, tr[1:]))
            assert all(np.all(H >= 0) for H in rep.model.layers) and np.all(rep.model.W >= 0)


def _penalty_fd(F, layers, i, lam, h=1e-6):
    """Central differences of lam ||F^T Psi||^2 with respect to layer i."""
    H = layers[i]
    G = np.zeros_like(H)
    for idx in np.ndindex(H.shape):
        vals = []
        for step in (h, -h):
            L = [M.copy() for M in layers]
            L[i][idx] += step
            Psi = np.linalg.multi_dot(L) if len(L) > 1 else L[0]
            vals.append(lam * np.sum((F.T @ Psi) ** 2))
        G[idx] = (vals[0] - vals[1]) / (2 * h)
    return G


def test_penalty_gradient_check():
    from dfnmf.fairness import penalty_gradient_parts
    rng = np.random.default_rng(4)
    labels = rng.integers(0, 3, 12)
    Fm = fairness_matrix_from_labels(labels)
    lam = 0.7
    for _ in range(5):
        layers = [rng.random((12, 5)), rng.random((5, 3))]
        Psi = layers[0] @ layers[1]
        pos, neg = penalty_gradient_parts(Fm, Psi)
        for i, (left, right) in enumerate([(None, layers[1]), (layers[0], None)]):
            g = pos - neg
            g = g if left is None else left.T @ g
            g = g if right is None else g @ right.T
            analytic = 2 * lam * g
            fd = _penalty_fd(Fm.F, layers, i, lam)
            assert np.allclose(analytic, fd, rtol=1e-5, atol=1e-7 * np.abs(fd).max())


def test_reduction_p1_matches_shallow():
    g = random_graph(50, 0.1, 5)
    F = build_fairness_matrix(g)
    for seed in range(3):
        # full pipeline: pretraining is the plain tri-factorization
        a = deep.fit(g.adjacency, F, (50, 3), 2.0, seed=seed)
        pre = nmtf_fit(g.adjacency, 3, seed=seed)
        b = shallow_fair_fit(g.adjacency, 3, F, 2.0, init=(pre.H, pre.W))
        assert np.array_equal(a.model.layers[0], b.H) and np.array_equal(a.model.W, b.W)
        assert a.objective_trace == b.objective_trace
        # shared seeded start, no pretraining
        c = shallow_fair_fit(g.adjacency, 3, F, 2.0, seed=seed)
        H0, W0 = init_factors(as_operator(g.adjacency), 3, seed)
        d = deep.fit(g.adjacency, F, (50, 3), 2.0, init=DeepModel.from_factors([H0], W0))
        assert np.array_equal(c.H, d.model.layers[0]) and c.objective_trace == d.objective_trace


def test_fit_validation():
    g = random_graph(20, 0.3, 6)
    F = build_fairness_matrix(g)
    with pytest.raises(ValueError):
        deep.fit(g.adjacency, F, (20, 2), -1.0)
    with pytest.raises(ValueError):
        deep.fit(g.adjacency, fairness_matrix_from_labels([0, 1] * 5), (20, 2), 1.0)
    with pytest.raises(ValueError):
        deep.fit(g.adjacency, F, (21, 2), 1.0)


def test_fit_report_json():
    g = two_cliques(4)
    F = build_fairness_matrix(g)
    rep = deep.fit(g.adjacency, F, (8, 2), 0.5, seed=1)
    doc = json.loads(rep.to_json())
    for key in ("lambda", "schedule", "seed", "iterations", "final", "metrics",
                "hard_assignment", "objective_trace", "utility_trace", "penalty_trace"):
        assert key in doc
    assert doc["iterations"] == len(doc["objective_trace"])
    assert doc["final"]["total"] == rep.objective_trace[-1]
    assert doc["final"]["total"] == pytest.approx(doc["final"]["utility"] + 0.5 * doc["final"]["penalty"])


def test_stochastic_psi_is_a_copy():
    rng = np.random.default_rng(7)
    model = random_model((10, 3), rng)
    before = model.Psi.copy()
    Q = model.stochastic_psi()
    assert np.allclose(Q.sum(axis=0), 1.0)
    assert np.array_equal(model.Psi, before)
    assert np.array_equal(Q.argmax(axis=1) >= 0, np.ones(10, bool))


@pytest.mark.slow
def test_pretrain_beats_random_start(sbm2000, sbm2000_pretrained):
    wins = 0
    for seed in range(10):
        pre = sbm2000_pretrained(seed)
        rnd = deep.random_init(sbm2000.adjacency, pre.schedule, seed)
        a = deep.objective(sbm2000.adjacency, pre)[0]
        b = deep.objective(sbm2000.adjacency, rnd)[0]
        assert np.isfinite(a)
        wins += a < b
    assert wins >= 8
