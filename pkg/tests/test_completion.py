import math

import numpy as np
import pytest

from tenfact.completion import (
    CompletionProblem,
    complete_masked,
    missing_entry_error,
    sample_completion_problem,
)
from tenfact.decompose import DecompConfig, hybrid_run
from tenfact.errors import InvalidConfigError
from tenfact.tensors import CpModel, DenseTensor3, SparseTensor3, cp_reconstruct, residual_ratio

from conftest import diagonal_tensor, random_model


def full_problem(tensor):
    return sample_completion_problem(tensor, 1.0, seed=0)


class TestCompletionProblem:
    def test_rejects_duplicate_indices(self):
        obs = SparseTensor3.from_entries((2, 2, 2), [(0, 0, 0, 1.0)])
        with pytest.raises(ValueError):
            CompletionProblem(dims=(2, 2, 2), observed=obs, zero_entries=np.array([[0, 0, 0]]))

    def test_zero_entries_tracked_separately(self, rng):
        t = cp_reconstruct(random_model(rng, (3, 3, 3), 1))
        arr = np.array(t.array)
        arr[0, 0, 0] = 0.0
        t = DenseTensor3(arr)
        prob = sample_completion_problem(t, 1.0, seed=0)
        assert prob.zero_entries.shape[0] == 1
        assert prob.n_observed == 27
        assert prob.observed_mask().all()

    def test_sampling_probability_validated(self, rng):
        t = cp_reconstruct(random_model(rng, (3, 3, 3), 1))
        with pytest.raises(ValueError):
            sample_completion_problem(t, 0.0)


class TestCompleteMasked:
    def test_full_observation_reduces_to_decomposition(self):
        model, t = diagonal_tensor([3.0, 2.0, 1.0], 8)
        prob = full_problem(t)
        out = complete_masked(prob, 3)  # default hybrid policy
        assert residual_ratio(t, out) < 1e-6

    def test_single_entry_rank1(self):
        obs = SparseTensor3.from_entries((3, 3, 3), [(1, 2, 0, 4.0)])
        prob = CompletionProblem(dims=(3, 3, 3), observed=obs)
        out = complete_masked(prob, 1, DecompConfig(rank=1, max_iters=30, seed=1))
        recon = cp_reconstruct(out)
        assert recon.array[1, 2, 0] == pytest.approx(4.0, abs=1e-6)

    def test_matches_hybrid_run_at_full_observation(self):
        m = random_model(np.random.default_rng(3), (8, 8, 8), 2, weights=np.ones(2))
        t = cp_reconstruct(m)
        prob = full_problem(t)
        cfg = DecompConfig(rank=2, max_iters=40, tol=1e-8, orth_mode="first_s", orth_steps=5, seed=12)
        completed = complete_masked(prob, 2, cfg, ridge=0.0)
        direct = hybrid_run(t, cfg)
        r1 = residual_ratio(t, completed)
        r2 = residual_ratio(t, direct.model)
        assert abs(r1 - r2) < 1e-6

    def test_unconstrained_row_left_at_init(self, rng, caplog):
        import logging

        # No observation ever touches mode-1 row 2.
        entries = [(0, 0, 0, 1.0), (1, 1, 1, 2.0), (1, 0, 1, 0.5), (0, 1, 0, 1.5)]
        obs = SparseTensor3.from_entries((3, 2, 2), entries)
        prob = CompletionProblem(dims=(3, 2, 2), observed=obs)
        with caplog.at_level(logging.WARNING, logger="tenfact.completion"):
            out = complete_masked(prob, 1, DecompConfig(rank=1, max_iters=20, seed=2))
        assert any("no observations" in r.message for r in caplog.records)
        assert out.k == 1

    def test_svd_init_rejected(self):
        model, t = diagonal_tensor([1.0], 4)
        prob = full_problem(t)
        with pytest.raises(InvalidConfigError):
            complete_masked(prob, 1, DecompConfig(rank=1, init="svd", given=None))

    def test_error_decreases_with_more_data(self):
        # Desk-scale version of the sampling trend.
        m = random_model(np.random.default_rng(8), (15, 15, 15), 3, weights=np.ones(3))
        t = cp_reconstruct(m)
        errors = []
        for p in (0.2, 0.5, 0.9):
            errs = []
            for trial in range(3):
                prob = sample_completion_problem(t, p, seed=(trial, int(p * 10)))
                cfg = DecompConfig(rank=3, max_iters=40, tol=1e-6, orth_mode="first_s", orth_steps=5, seed=trial)
                out = complete_masked(prob, 3, cfg)
                errs.append(missing_entry_error(t, prob, out))
            errors.append(np.mean(errs))
        assert errors[0] > errors[1] > errors[2]


class TestMissingEntryError:
    def test_exact_model_zero_error(self, rng):
        m = random_model(rng, (4, 4, 4), 2)
        t = cp_reconstruct(m)
        prob = sample_completion_problem(t, 0.5, seed=3)
        assert missing_entry_error(t, prob, m) == pytest.approx(0.0, abs=1e-12)

    def test_zero_model_unit_error(self, rng):
        m = random_model(rng, (4, 4, 4), 2)
        t = cp_reconstruct(m)
        prob = sample_completion_problem(t, 0.5, seed=4)
        zero = CpModel(np.zeros(2), m.A, m.B, m.C)
        assert missing_entry_error(t, prob, zero) == pytest.approx(1.0)

    def test_no_missing_entries_is_zero(self, rng):
        m = random_model(rng, (3, 3, 3), 1)
        t = cp_reconstruct(m)
        assert missing_entry_error(t, full_problem(t), m) == 0.0

    def test_hand_case_oracle(self):
        arr = np.zeros((2, 2, 2))
        arr[0, 0, 0] = 2.0
        arr[1, 1, 1] = 4.0
        t = DenseTensor3(arr)
        obs = SparseTensor3.from_entries((2, 2, 2), [(0, 0, 0, 2.0)])
        prob = CompletionProblem(dims=(2, 2, 2), observed=obs)
        e1 = np.eye(2)[:, :1]
        model = CpModel([2.0], e1, e1, e1)  # reconstructs the observed entry only
        missing = ~prob.observed_mask()
        diff = t.array[missing] - cp_reconstruct(model).array[missing]
        expect = math.sqrt(np.mean(diff**2)) / math.sqrt(np.mean(t.array[missing] ** 2))
        assert missing_entry_error(t, prob, model) == pytest.approx(expect)

    def test_invariant_under_column_permutation_and_sign(self, rng):
        m = random_model(rng, (4, 4, 4), 3)
        t = cp_reconstruct(random_model(rng, (4, 4, 4), 3))
        prob = sample_completion_problem(t, 0.4, seed=9)
        base = missing_entry_error(t, prob, m)
        perm = np.array([2, 0, 1])
        signs = np.array([-1.0, 1.0, -1.0])
        m2 = CpModel(m.weights[perm] * signs, m.A[:, perm] * signs, m.B[:, perm], m.C[:, perm])
        assert missing_entry_error(t, prob, m2) == pytest.approx(base, abs=1e-12)
