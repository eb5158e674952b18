"""Tensor completion by alternating least squares restricted to observed entries.

A :class:`CompletionProblem` stores the revealed entries of an otherwise
unknown tensor.  Structural missingness is distinct from an observed zero:
nonzero observations live in a sparse tensor, observed zeros in a dedicated
index list.  ``complete_masked`` fits a CP model by solving one small ridge
least-squares problem per factor row per sweep, with the factor matrices
orthogonalized for the first few sweeps (the hybrid policy).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .decompose import (
    DecompConfig,
    _initial_factors,
    _orthogonalize_with_retry,
)
from .errors import InvalidConfigError
from .tensors import CpModel, SparseTensor3, cp_reconstruct, normalize_columns

__all__ = [
    "CompletionProblem",
    "sample_completion_problem",
    "complete_masked",
    "missing_entry_error",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CompletionProblem:
    """Observed entries of a partially revealed third-order tensor.

    ``observed`` holds the nonzero observations; ``zero_entries`` is an
    (m, 3) index array of positions observed to be exactly zero.  ``p`` is
    the sampling probability used to generate the problem, kept as metadata.
    """

    dims: tuple
    observed: SparseTensor3
    zero_entries: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=np.int64))
    p: float | None = None

    def __post_init__(self):
        zeros = np.asarray(self.zero_entries, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "zero_entries", zeros)
        if self.observed.dims != tuple(self.dims):
            raise ValueError("observed tensor dims disagree with problem dims")
        if zeros.size:
            if zeros.min() < 0 or (zeros >= np.array(self.dims)).any():
                raise ValueError("zero-entry index out of range")
        self._check_no_duplicates()

    def _check_no_duplicates(self):
        idx = self.all_indices()
        if idx.shape[0] < 2:
            return
        order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
        s = idx[order]
        if (s[1:] == s[:-1]).all(axis=1).any():
            raise ValueError("duplicate observed index")

    def all_indices(self):
        """Every observed position, nonzero observations first."""
        return np.vstack([self.observed.indices, self.zero_entries])

    def all_values(self):
        return np.concatenate([self.observed.values, np.zeros(self.zero_entries.shape[0])])

    @property
    def n_observed(self):
        return self.observed.nnz + self.zero_entries.shape[0]

    def observed_mask(self):
        mask = np.zeros(self.dims, dtype=bool)
        idx = self.all_indices()
        if idx.size:
            mask[idx[:, 0], idx[:, 1], idx[:, 2]] = True
        return mask


def sample_completion_problem(tensor, p, seed=0):
    """Reveal each entry of a dense tensor independently with probability p."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    rng = np.random.default_rng(seed)
    mask = rng.random(tensor.dims) < p
    idx = np.argwhere(mask)
    vals = tensor.array[mask]
    nonzero = vals != 0.0
    observed = SparseTensor3(tensor.dims, idx[nonzero], vals[nonzero])
    return CompletionProblem(
        dims=tensor.dims, observed=observed, zero_entries=idx[~nonzero], p=p
    )


class _RowSolver:
    """Per-mode grouped ridge least squares over the observed entries."""

    def __init__(self, indices, values, dims):
        self.values = values
        self.dims = dims
        self.by_mode = []
        for mode in range(3):
            order = np.argsort(indices[:, mode], kind="stable")
            rows_sorted = indices[order, mode]
            present, starts = np.unique(rows_sorted, return_index=True)
            other = [0, 1, 2]
            other.remove(mode)
            self.by_mode.append(
                {
                    "order": order,
                    "rows": present,
                    "starts": starts,
                    "p_idx": indices[order, other[0]],
                    "q_idx": indices[order, other[1]],
                    "vals": values[order],
                }
            )
        missing_rows = [
            np.setdiff1d(np.arange(dims[m]), self.by_mode[m]["rows"]) for m in range(3)
        ]
        for m, rows in enumerate(missing_rows):
            if rows.size:
                logger.warning(
                    "completion: mode-%d rows %s have no observations and stay at "
                    "their initialization",
                    m + 1,
                    rows.tolist(),
                )

    def solve_mode(self, mode, p, q, current, ridge):
        """Update the mode's factor rows that have observations; keep the rest."""
        view = self.by_mode[mode - 1]
        e = p[view["p_idx"]] * q[view["q_idx"]]
        k = e.shape[1]
        grams = np.add.reduceat(
            np.einsum("na,nb->nab", e, e, optimize=True), view["starts"], axis=0
        )
        rhs = np.add.reduceat(e * view["vals"][:, None], view["starts"], axis=0)
        grams = grams + ridge * np.eye(k)[None, :, :]
        try:
            sols = np.linalg.solve(grams, rhs[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            sols = np.stack(
                [np.linalg.lstsq(g, r, rcond=1e-12)[0] for g, r in zip(grams, rhs)]
            )
        out = np.array(current)
        out[view["rows"]] = sols
        return out


def complete_masked(problem, rank, cfg=None, ridge=1e-8):
    """Fit a rank-``rank`` CP model to the observed entries.

    Every factor row is updated by ridge-regularized least squares over that
    row's observations.  The factor matrices are orthogonalized for the first
    ``cfg.orth_steps`` sweeps (default 5); pass a config with
    ``orth_mode='none'`` for the plain-ALS baseline.  Stops when the relative
    change of the observed-entry RMSE drops below ``cfg.tol``.  Rows without
    observations keep their initialization (logged at problem setup).
    """
    if cfg is None:
        cfg = DecompConfig(rank=rank, orth_mode="first_s", orth_steps=5)
    elif cfg.rank != rank:
        cfg = replace(cfg, rank=rank)
    if cfg.init == "svd":
        raise InvalidConfigError("completion supports init='random' or 'given'")
    if problem.n_observed == 0:
        raise ValueError("completion problem has no observed entries")
    orth_active = cfg.orth_mode == "always" or (
        cfg.orth_mode == "first_s" and cfg.orth_steps > 0
    )
    if orth_active and rank > min(problem.dims):
        raise InvalidConfigError(
            f"rank {rank} exceeds min(dims)={min(problem.dims)} with orthogonalization on"
        )

    indices = problem.all_indices()
    values = problem.all_values()
    solver = _RowSolver(indices, values, problem.dims)
    stub = SparseTensor3.empty(problem.dims)
    rng = np.random.default_rng(cfg.seed)
    a, b, c = _initial_factors(stub, cfg, rng)

    ii, jj, kk = indices[:, 0], indices[:, 1], indices[:, 2]

    def rmse(w, fa, fb, fc):
        recon = np.einsum("nr,r->n", fa[ii] * fb[jj] * fc[kk], w, optimize=True)
        return float(np.sqrt(np.mean((recon - values) ** 2)))

    prev = None
    weights = np.zeros(rank)
    for t in range(1, cfg.max_iters + 1):
        orth_now = cfg.orth_mode == "always" or (
            cfg.orth_mode == "first_s" and t <= cfg.orth_steps
        )
        if orth_now:
            if t > 1:
                order = np.argsort(-np.abs(weights), kind="stable")
                a, b, c = a[:, order], b[:, order], c[:, order]
            a = _orthogonalize_with_retry(a, rng, "mode-1 factors")
            b = _orthogonalize_with_retry(b, rng, "mode-2 factors")
            c = _orthogonalize_with_retry(c, rng, "mode-3 factors")
        a1 = solver.solve_mode(1, b, c, a, ridge)
        b1 = solver.solve_mode(2, a1, c, b, ridge)
        c1 = solver.solve_mode(3, a1, b1, c, ridge)
        a, na = normalize_columns(a1)
        b, nb = normalize_columns(b1)
        c, nc = normalize_columns(c1)
        weights = na * nb * nc
        cur = rmse(weights, a, b, c)
        if prev is not None and abs(prev - cur) <= cfg.tol * max(prev, 1e-300):
            break
        prev = cur
    return CpModel(weights, a, b, c).canonical()


def missing_entry_error(truth, problem, model):
    """Relative RMS error of the reconstruction over the unobserved entries.

    Defined as 0 when nothing is missing; returns ``inf`` when the truth is
    identically zero on the missing set but the reconstruction is not.
    """
    if truth.dims != tuple(problem.dims) or truth.dims != model.dims:
        raise ValueError("dims of truth, problem and model must agree")
    missing = ~problem.observed_mask()
    if not missing.any():
        return 0.0
    diff = truth.array[missing] - cp_reconstruct(model).array[missing]
    rms_diff = float(np.sqrt(np.mean(diff**2)))
    rms_truth = float(np.sqrt(np.mean(truth.array[missing] ** 2)))
    if rms_truth == 0.0:
        return 0.0 if rms_diff == 0.0 else math.inf
    return rms_diff / rms_truth
