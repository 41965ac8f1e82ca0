import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rapidsim.channel import candidate_angles, channel_from_params, codebook, project_virtual
from rapidsim.measurement import assemble_cs, draw_schedule, es_schedule, observe
from rapidsim.sparse_recovery import (
    RecoveryConfig, default_gamma, dominant_entries, lasso_objective, lex_argmax, recover,
)


def small_record(seed, N_bs=8, N_ue=4, T=16, R_ue=2, R_bs=4, P=1.0, N0=0.0, V=None):
    rng = np.random.default_rng(seed)
    W, F = codebook(N_bs), codebook(N_ue)
    if V is None:
        V = np.zeros((N_bs, N_ue), complex)
        idx = rng.choice(N_bs * N_ue, 2, replace=False)
        V.flat[idx] = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    H = np.sqrt(N_bs * N_ue) * W @ V @ F.conj().T
    sched = draw_schedule(seed, T, N_ue, N_bs, R_ue, R_bs, 1)
    y = observe(H, sched, 0, W, F, P, N0, rng)
    return assemble_cs(sched, 0, y, P, N0), V


class TestConfig:
    def test_rejects(self):
        for bad in (dict(solver="amp"), dict(sparsity_k=0), dict(gamma=-1.0),
                    dict(tol=0.0), dict(max_iters=0)):
            with pytest.raises(ValueError):
                RecoveryConfig(**bad)

    def test_from_dict_ignores_extra(self):
        cfg = RecoveryConfig.from_dict({"solver": "ista", "gamma": 0.1, "other": 3})
        assert cfg.solver == "ista" and cfg.gamma == 0.1

    def test_default_gamma(self):
        assert default_gamma(2.0, 100) == pytest.approx(2.0 * np.sqrt(2 * np.log(100)))


class TestLexArgmax:
    def test_ties_go_to_smallest_pair(self):
        vals = np.zeros(12)
        vals[[5, 2]] = 1.0  # column-major on a 4x3 grid: 5 -> (1, 1), 2 -> (2, 0)
        assert lex_argmax(vals, 4, 3) == 5


class TestOmp:
    @given(st.integers(0, 2**31))
    @settings(max_examples=20, deadline=None)
    def test_k1_matches_exhaustive(self, seed):
        rec, _ = small_record(seed, N0=0.01)
        rec.y = rec.y + 0.05 * np.random.default_rng(seed).standard_normal(rec.y.shape)
        a = recover(rec, RecoveryConfig("omp", 1))
        b = recover(rec, RecoveryConfig("oracle", 1))
        assert np.allclose(a.V, b.V, atol=1e-10)

    def test_exact_recovery_es(self):
        # exhaustive sweep with one UE beam per slot: columns are orthogonal
        N_bs, N_ue = 32, 16
        ch = channel_from_params(0.2 + 0.1j, candidate_angles(N_bs)[7],
                                 candidate_angles(N_ue)[9], N_bs, N_ue)
        W, F = codebook(N_bs), codebook(N_ue)
        sched = es_schedule(N_ue, N_bs, 8, 1)
        y = observe(ch.H, sched, 0, W, F, 1.0, 0.0, np.random.default_rng(0))
        est = recover(assemble_cs(sched, 0, y, 1.0, 0.0), RecoveryConfig("omp", 1))
        assert np.allclose(est.V, project_virtual(ch.H, W, F), atol=1e-12)
        assert est.support == [(7, 9)]

    def test_zero_observation(self):
        rec, _ = small_record(0, V=np.zeros((8, 4)))
        est = recover(rec, RecoveryConfig("omp", 3))
        assert not np.any(est.V) and est.residual_norm == 0.0

    def test_residual_decreases_with_k(self):
        rec, _ = small_record(4, N0=0.1)
        res = [recover(rec, RecoveryConfig("omp", k)).residual_norm for k in (1, 2, 3, 4)]
        assert all(a >= b - 1e-12 for a, b in zip(res, res[1:]))


class TestOracle:
    def test_k2_is_least_squares_optimum(self):
        rec, _ = small_record(3, N0=0.05)
        est = recover(rec, RecoveryConfig("oracle", 2))
        # any other 2-sparse candidate (here OMP's) cannot fit better
        omp = recover(rec, RecoveryConfig("omp", 2))
        assert est.residual_norm <= omp.residual_norm + 1e-12

    def test_k3_rejected(self):
        rec, _ = small_record(3)
        with pytest.raises(ValueError):
            recover(rec, RecoveryConfig("oracle", 3))


class TestIsta:
    def test_objective_monotone(self):
        from rapidsim.sparse_recovery import _ista

        rec, _ = small_record(5, N0=0.01)
        trace = []
        _ista(rec, RecoveryConfig("ista", gamma=0.05, max_iters=300), trace)
        assert np.all(np.diff(trace) <= 1e-12 * max(trace))

    def test_small_gamma_fits_noise_free(self):
        # 16 slots x 4 BS beams = 64 rows >= 32 unknowns, so the system is determined
        rec, V = small_record(6, T=16)
        est = recover(rec, RecoveryConfig("ista", gamma=1e-9, max_iters=20000, tol=1e-12))
        assert lasso_objective(est.V.reshape(-1, order="F"), rec, 0.0) <= 1e-8 * np.vdot(rec.y, rec.y).real

    def test_large_gamma_gives_zero(self):
        rec, _ = small_record(7)
        est = recover(rec, RecoveryConfig("ista", gamma=1e6))
        assert not np.any(est.V)


class TestDominantEntries:
    def test_order_and_ties(self):
        V = np.array([[1.0, -2.0], [2.0, 0.0]])
        assert [(i, j) for i, j, _ in dominant_entries(V, 3)] == [(0, 1), (1, 0), (0, 0)]

    def test_zero_never_shared(self):
        V = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert len(dominant_entries(V, 4)) == 1

    def test_row_mask(self):
        V = np.array([[5.0, 1.0], [2.0, 3.0]])
        out = dominant_entries(V, 2, np.array([False, True]))
        assert [(i, j) for i, j, _ in out] == [(1, 1), (1, 0)]

    def test_bad_count(self):
        with pytest.raises(ValueError):
            dominant_entries(np.ones((2, 2)), 0)
