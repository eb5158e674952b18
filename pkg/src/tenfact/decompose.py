"""CP decomposition algorithms and convergence diagnostics.

The ALS family (plain, orthogonalized, hybrid) shares one driver.  Every
iteration is a sequential exact least-squares sweep in mode order 1, 2, 3,
each solve using the freshest versions of the other two factors.  An
orthogonalized iteration additionally sorts the columns by decreasing weight
estimate and replaces each factor matrix by the Q of its QR factorization
before the sweep; the sort keeps the heaviest (earliest-converging) factors
anchored at the front, where Gram-Schmidt leaves them untouched.  Because the
Khatri-Rao Gram of orthonormal factors is the identity, the first mode update
after orthogonalization reduces to the bare MTTKRP with no pseudoinverse.

The tensor power method is the rank-1 special case with simultaneous mode
updates; ``tpm_multi`` runs many random restarts and clusters the results,
``orth_tpm_run`` instead projects each fresh initialization orthogonal to the
factors already recovered.  ``simdiag`` is the classical eigendecomposition
approach from two random contractions.  ``beta_bound`` and
``tpm_correlation_trace`` are diagnostic tools for studying convergence
against a known ground-truth model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateInputError,
    InvalidConfigError,
    NumericalFailureError,
)
from .linalg import eig_nonsym, ls_solve_kr, orth_step
from .tensors import (
    CpModel,
    DenseTensor3,
    contract3,
    contract_mode3,
    khatri_rao,
    matricize,
    mttkrp,
    normalize_columns,
)

__all__ = [
    "DecompConfig",
    "DecompResult",
    "TraceRecord",
    "als_sweep",
    "als_run",
    "orth_als_run",
    "hybrid_run",
    "tpm_run",
    "tpm_multi",
    "orth_tpm_run",
    "svd_init",
    "simdiag",
    "beta_bound",
    "tpm_correlation_trace",
]

logger = logging.getLogger(__name__)

_INIT_MODES = ("random", "svd", "given")
_ORTH_MODES = ("none", "always", "first_s")

# Residuals below this level are recomputed from an explicit reconstruction:
# the Gram-identity shortcut loses accuracy to cancellation near zero.
_EXPLICIT_REFINE_LEVEL = 1e-5
# Tensors at most this large always get the explicit (exact) residual.
_EXPLICIT_SIZE_LIMIT = 40_000
# Relative residual at which a fit counts as exact regardless of tol.
_RESIDUAL_FLOOR = 1e-13


@dataclass(frozen=True)
class DecompConfig:
    """Configuration shared by the alternating-update drivers.

    ``orth_mode`` selects the orthogonalization policy: ``none`` (plain ALS),
    ``always``, or ``first_s`` (orthogonalize for the first ``orth_steps``
    iterations, then plain sweeps).  ``rerandomize_period`` optionally redraws
    the trailing columns on a fixed schedule: at iteration ``i * period`` all
    but the first ``i`` columns are re-randomized.
    """

    rank: int
    max_iters: int = 100
    tol: float = 1e-6
    init: str = "random"
    orth_mode: str = "none"
    orth_steps: int = 5
    rerandomize_period: int | None = None
    seed: int = 0
    record_trace: bool = False
    given: tuple | None = None

    def __post_init__(self):
        if self.rank < 1:
            raise InvalidConfigError(f"rank must be >= 1, got {self.rank}")
        if self.max_iters < 1:
            raise InvalidConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise InvalidConfigError(f"tol must be positive, got {self.tol}")
        if self.orth_steps < 0:
            raise InvalidConfigError(f"orth_steps must be >= 0, got {self.orth_steps}")
        if self.init not in _INIT_MODES:
            raise InvalidConfigError(f"init must be one of {_INIT_MODES}, got {self.init!r}")
        if self.orth_mode not in _ORTH_MODES:
            raise InvalidConfigError(
                f"orth_mode must be one of {_ORTH_MODES}, got {self.orth_mode!r}"
            )
        if self.rerandomize_period is not None and self.rerandomize_period < 1:
            raise InvalidConfigError("rerandomize_period must be >= 1 when set")
        if self.init == "given" and self.given is None:
            raise InvalidConfigError("init='given' requires the given factor triple")


@dataclass
class DecompResult:
    """Outcome of a decomposition run.

    ``residual_trace`` holds the per-iteration relative residual and is
    present iff the config asked for it; its length equals
    ``iterations_used``.  ``factor_convergence_steps[r]`` is the first
    iteration after which column r stopped moving (-1 if it was still moving
    at termination); recorded only alongside the trace.
    """

    model: CpModel
    iterations_used: int
    converged: bool
    residual_trace: np.ndarray | None = None
    factor_convergence_steps: np.ndarray | None = None


class _Workspace:
    """Per-run cache of matricizations / sparse access paths."""

    def __init__(self, tensor):
        self.tensor = tensor
        self.dims = tensor.dims
        self.size = self.dims[0] * self.dims[1] * self.dims[2]
        self.tnorm = tensor.norm()
        self.tnorm_sq = self.tnorm**2
        self.dense = isinstance(tensor, DenseTensor3)
        if self.dense:
            self.mats = tuple(matricize(tensor, m) for m in (1, 2, 3))
        else:
            # Nonzeros sorted by output row once per mode, so every MTTKRP
            # is a contiguous segment reduction.
            self.views = []
            idx = tensor.indices
            for mode in range(3):
                order = np.argsort(idx[:, mode], kind="stable")
                rows, starts = np.unique(idx[order, mode], return_index=True)
                other = [0, 1, 2]
                other.remove(mode)
                self.views.append(
                    {
                        "rows": rows,
                        "starts": starts,
                        "p_idx": idx[order, other[0]],
                        "q_idx": idx[order, other[1]],
                        "vals": tensor.values[order],
                    }
                )

    def mttkrp(self, mode, p, q):
        if self.dense:
            return self.mats[mode - 1] @ khatri_rao(q, p)
        view = self.views[mode - 1]
        k = p.shape[1]
        out = np.zeros((self.dims[mode - 1], k))
        vals = view["vals"][:, None]
        # Column blocks bound peak memory at nnz * block floats.
        block = max(1, min(k, (1 << 22) // max(1, vals.shape[0])))
        for lo in range(0, k, block):
            hi = min(lo + block, k)
            e = p[view["p_idx"], lo:hi] * q[view["q_idx"], lo:hi] * vals
            out[view["rows"], lo:hi] = np.add.reduceat(e, view["starts"], axis=0)
        return out

    def ls_update(self, mode, p, q, rcond=1e-12):
        """Exact least-squares factor update; also returns the MTTKRP."""
        mtt = self.mttkrp(mode, p, q)
        gram = (q.T @ q) * (p.T @ p)
        return mtt @ np.linalg.pinv(gram, rcond=rcond), mtt

    def ratio_from_sq(self, inner, model_sq):
        res_sq = max(self.tnorm_sq - 2.0 * inner + model_sq, 0.0)
        if self.tnorm == 0.0:
            return 0.0 if res_sq == 0.0 else math.inf
        return math.sqrt(res_sq) / self.tnorm

    def explicit_ratio(self, w, a, b, c):
        recon = (a * w) @ khatri_rao(c, b).T
        rnorm = float(np.linalg.norm(self.mats[0] - recon))
        if self.tnorm == 0.0:
            return 0.0 if rnorm == 0.0 else math.inf
        return rnorm / self.tnorm

    def refine_ratio(self, ratio, w, a, b, c):
        """Swap in the exact residual where cancellation would dominate."""
        if self.dense and (self.size <= _EXPLICIT_SIZE_LIMIT or ratio < _EXPLICIT_REFINE_LEVEL):
            return self.explicit_ratio(w, a, b, c)
        return ratio


def _expand_factors(mode, p, q):
    if mode == 1:
        return (None, p, q)
    if mode == 2:
        return (p, None, q)
    return (p, q, None)


def _random_unit_columns(rng, d, k):
    cols = rng.standard_normal((d, k))
    return normalize_columns(cols)[0]


def _initial_factors(tensor, cfg, rng):
    d1, d2, d3 = tensor.dims
    if cfg.init == "random":
        return (
            _random_unit_columns(rng, d1, cfg.rank),
            _random_unit_columns(rng, d2, cfg.rank),
            _random_unit_columns(rng, d3, cfg.rank),
        )
    if cfg.init == "svd":
        return svd_init(tensor, cfg.rank, rng=rng)
    a0, b0, c0 = cfg.given
    return (
        normalize_columns(np.asarray(a0, dtype=np.float64))[0],
        normalize_columns(np.asarray(b0, dtype=np.float64))[0],
        normalize_columns(np.asarray(c0, dtype=np.float64))[0],
    )


def _orthogonalize_with_retry(m, rng, label):
    """QR with up to 3 re-randomizations of degenerate columns."""
    for attempt in range(3):
        try:
            return orth_step(m)
        except DegenerateInputError as exc:
            logger.warning(
                "QR degeneracy in %s (attempt %d): re-randomizing columns %s",
                label,
                attempt + 1,
                list(exc.columns),
            )
            m = np.array(m)
            m[:, list(exc.columns)] = _random_unit_columns(rng, m.shape[0], len(exc.columns))
    raise NumericalFailureError(
        f"orthogonalization of {label} failed after 3 re-randomizations"
    )


def als_sweep(tensor, a, b, c):
    """One full sweep of exact least-squares updates in mode order 1, 2, 3.

    Each mode solve uses the freshest versions of the other two factors.
    Columns are returned unnormalized; the scale bookkeeping belongs to the
    calling driver.
    """
    a1 = ls_solve_kr(matricize(tensor, 1), b, c)
    b1 = ls_solve_kr(matricize(tensor, 2), a1, c)
    c1 = ls_solve_kr(matricize(tensor, 3), a1, b1)
    return a1, b1, c1


def _driver(tensor, cfg):
    needs_orth = cfg.orth_mode == "always" or (
        cfg.orth_mode == "first_s" and cfg.orth_steps > 0
    )
    if needs_orth and cfg.rank > min(tensor.dims):
        raise InvalidConfigError(
            f"rank {cfg.rank} exceeds min(dims)={min(tensor.dims)}: orthogonalization "
            "requires rank <= dimension; use deflate_overcomplete for higher ranks"
        )
    ws = _Workspace(tensor)
    rng = np.random.default_rng(cfg.seed)
    a, b, c = _initial_factors(tensor, cfg, rng)
    k = cfg.rank

    trace = []
    last_move = np.zeros(k, dtype=np.int64)
    prev_res = None
    converged = False
    last_orth = False
    iterations = 0
    weights = np.zeros(k)

    for t in range(1, cfg.max_iters + 1):
        if (
            cfg.rerandomize_period is not None
            and t > 1
            and (t - 1) % cfg.rerandomize_period == 0
        ):
            keep = (t - 1) // cfg.rerandomize_period
            if keep < k:
                a = np.array(a)
                b = np.array(b)
                c = np.array(c)
                a[:, keep:] = _random_unit_columns(rng, a.shape[0], k - keep)
                b[:, keep:] = _random_unit_columns(rng, b.shape[0], k - keep)
                c[:, keep:] = _random_unit_columns(rng, c.shape[0], k - keep)

        orth_now = cfg.orth_mode == "always" or (
            cfg.orth_mode == "first_s" and t <= cfg.orth_steps
        )
        if orth_now and t > 1:
            # Keep the heaviest factors first so Gram-Schmidt anchors on them.
            order = np.argsort(-np.abs(weights), kind="stable")
            a, b, c = a[:, order], b[:, order], c[:, order]
            last_move = last_move[order]
        prev_factors = (a, b, c) if cfg.record_trace else None
        if orth_now:
            a = _orthogonalize_with_retry(a, rng, "mode-1 factors")
            b = _orthogonalize_with_retry(b, rng, "mode-2 factors")
            c = _orthogonalize_with_retry(c, rng, "mode-3 factors")
        a1, _ = ws.ls_update(1, b, c)
        b1, _ = ws.ls_update(2, a1, c)
        c1, m3 = ws.ls_update(3, a1, b1)
        inner = float(np.sum(c1 * m3))
        model_sq = float(((a1.T @ a1) * (b1.T @ b1) * (c1.T @ c1)).sum())
        res = ws.ratio_from_sq(inner, model_sq)
        a, na = normalize_columns(a1)
        b, nb = normalize_columns(b1)
        c, nc = normalize_columns(c1)
        weights = na * nb * nc
        res = ws.refine_ratio(res, weights, a, b, c)

        iterations = t
        last_orth = orth_now
        trace.append(res)
        if cfg.record_trace:
            moved = _columns_moved(prev_factors, (a, b, c))
            last_move[moved] = t
        if res < _RESIDUAL_FLOOR:
            # Exact fit up to roundoff; the relative-change rule can never
            # trigger on floating-point noise at this level.
            converged = True
            break
        if prev_res is not None:
            if abs(prev_res - res) <= cfg.tol * max(prev_res, 1e-300):
                converged = True
                break
        prev_res = res

    if last_orth:
        # Weight re-estimation by full contraction against the tensor, the
        # final step of the orthogonalized algorithm.
        m1 = ws.mttkrp(1, b, c)
        weights = np.einsum("ir,ir->r", a, m1)
    model = CpModel(weights, a, b, c).canonical()
    steps = None
    if cfg.record_trace:
        steps = np.where(last_move < iterations, last_move + 1, -1)
    return DecompResult(
        model=model,
        iterations_used=iterations,
        converged=converged,
        residual_trace=np.asarray(trace) if cfg.record_trace else None,
        factor_convergence_steps=steps,
    )


def _columns_moved(old, new, corr_tol=1e-9):
    moved = np.zeros(old[0].shape[1], dtype=bool)
    for o, n in zip(old, new):
        corr = np.abs(np.einsum("ir,ir->r", o, n))
        moved |= corr < 1.0 - corr_tol
    return moved


def als_run(tensor, cfg):
    """Plain ALS: sequential least-squares sweeps with per-iteration
    normalization and weight re-estimation."""
    return _driver(tensor, replace(cfg, orth_mode="none"))


def orth_als_run(tensor, cfg):
    """ALS with per-iteration QR orthogonalization of all three factors."""
    return _driver(tensor, replace(cfg, orth_mode="always"))


def hybrid_run(tensor, cfg):
    """Orthogonalized iterations for the first ``cfg.orth_steps`` sweeps
    (default 5), plain ALS afterwards."""
    return _driver(tensor, replace(cfg, orth_mode="first_s"))


def _rank1_update(tensor, mode, u, v):
    """Rank-1 MTTKRP: contract every mode except ``mode`` with one vector."""
    if isinstance(tensor, DenseTensor3):
        arr = tensor.array
        if mode == 1:
            return (arr @ v) @ u
        if mode == 2:
            return (arr @ v).T @ u
        return np.tensordot(u, arr, axes=(0, 0)).T @ v
    out = mttkrp(tensor, _expand_factors(mode, u[:, None], v[:, None]), mode)
    return out[:, 0]


def _require_unit(vec, name, tol=1e-9):
    v = np.asarray(vec, dtype=np.float64).reshape(-1)
    n = np.linalg.norm(v)
    if abs(n - 1.0) > tol:
        raise ValueError(f"{name} must be unit-norm, got norm {n!r}")
    return v


def tpm_run(tensor, x0, y0, z0, iters):
    """Rank-1 alternating power updates from given unit initializations.

    Runs ``iters`` simultaneous mode updates with per-step normalization and
    returns ``(weight, x, y, z)`` where the weight is the full trilinear
    contraction against the converged triple.
    """
    x = _require_unit(x0, "x0")
    y = _require_unit(y0, "y0")
    z = _require_unit(z0, "z0")
    for _ in range(iters):
        x1 = _rank1_update(tensor, 1, y, z)
        y1 = _rank1_update(tensor, 2, x, z)
        z1 = _rank1_update(tensor, 3, x, y)
        nx, ny, nz = np.linalg.norm(x1), np.linalg.norm(y1), np.linalg.norm(z1)
        if nx == 0.0 or ny == 0.0 or nz == 0.0:
            raise NumericalFailureError(
                "power update vanished: iterate is orthogonal to every component"
            )
        x, y, z = x1 / nx, y1 / ny, z1 / nz
    return float(contract3(tensor, x, y, z)), x, y, z


def tpm_multi(
    tensor,
    n_inits,
    iters,
    rank,
    seed=0,
    init="random",
    cluster_threshold=0.9,
    inits=None,
):
    """Tensor power method with many restarts, clustered down to ``rank``.

    Each of the ``n_inits`` restarts gets an independent RNG stream derived
    from ``seed``, so results do not depend on execution order.  Restart
    results are sorted by decreasing ``|weight|``; a triple joins the first
    cluster whose representative correlates at least ``cluster_threshold``
    with it in every mode, otherwise it seeds a new cluster.  The model holds
    the representatives of the ``rank`` heaviest clusters (fewer if fewer
    clusters formed, which is logged).
    """
    if n_inits < rank:
        raise ValueError(f"need at least rank={rank} initializations, got {n_inits}")
    d1, d2, d3 = tensor.dims
    if inits is None:
        streams = np.random.SeedSequence(seed).spawn(n_inits)
        triples = [_draw_tpm_init(tensor, np.random.default_rng(s), init) for s in streams]
    else:
        if len(inits) != n_inits:
            raise ValueError("explicit inits must match n_inits")
        triples = [tuple(np.asarray(v, dtype=np.float64) for v in t) for t in inits]
    xs = np.column_stack([t[0] for t in triples])
    ys = np.column_stack([t[1] for t in triples])
    zs = np.column_stack([t[2] for t in triples])

    ws = _Workspace(tensor)
    alive = np.ones(n_inits, dtype=bool)
    for _ in range(iters):
        x1 = ws.mttkrp(1, ys, zs)
        y1 = ws.mttkrp(2, xs, zs)
        z1 = ws.mttkrp(3, xs, ys)
        xs, nx = normalize_columns(x1)
        ys, ny = normalize_columns(y1)
        zs, nz = normalize_columns(z1)
        alive &= (nx > 0) & (ny > 0) & (nz > 0)
    weights = np.einsum("ir,ir->r", xs, ws.mttkrp(1, ys, zs))
    dead = np.flatnonzero(~alive)
    if dead.size:
        logger.warning("tpm_multi: %d restarts degenerated and were dropped", dead.size)

    order = [i for i in np.argsort(-np.abs(weights), kind="stable") if alive[i]]
    rep_idx = []
    for i in order:
        joined = False
        for j in rep_idx:
            corr = min(
                abs(float(xs[:, i] @ xs[:, j])),
                abs(float(ys[:, i] @ ys[:, j])),
                abs(float(zs[:, i] @ zs[:, j])),
            )
            if corr >= cluster_threshold:
                joined = True
                break
        if not joined:
            rep_idx.append(i)
    if len(rep_idx) < rank:
        logger.warning(
            "tpm_multi: only %d clusters found for requested rank %d",
            len(rep_idx),
            rank,
        )
    rep_idx = rep_idx[:rank]
    model = CpModel(weights[rep_idx], xs[:, rep_idx], ys[:, rep_idx], zs[:, rep_idx])
    return model.canonical()


def _draw_tpm_init(tensor, rng, init):
    d1, d2, d3 = tensor.dims
    if init == "random":
        return (
            _random_unit_columns(rng, d1, 1)[:, 0],
            _random_unit_columns(rng, d2, 1)[:, 0],
            _random_unit_columns(rng, d3, 1)[:, 0],
        )
    if init != "svd":
        raise ValueError(f"unknown TPM init {init!r}")
    v = _random_unit_columns(rng, d3, 1)[:, 0]
    m = contract_mode3(tensor, v)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    x0, y0 = u[:, 0], vh[0]
    z0 = _rank1_update(tensor, 3, x0, y0)
    n = np.linalg.norm(z0)
    if n == 0.0:
        z0 = _random_unit_columns(rng, d3, 1)[:, 0]
    else:
        z0 = z0 / n
    return x0, y0, z0


def orth_tpm_run(tensor, rank, iters, seed=0):
    """Sequential power-method recovery with orthogonally projected restarts.

    For each factor in turn, a fresh random initialization is projected
    orthogonal to the factors already recovered (at initialization only, per
    mode), then plain power iterations run to convergence.  Projections that
    annihilate the draw are retried up to 3 times.
    """
    d1, d2, d3 = tensor.dims
    if rank > min(tensor.dims):
        raise ValueError(f"rank {rank} exceeds min(dims)={min(tensor.dims)}")
    rng = np.random.default_rng(seed)
    bases = [np.zeros((d, 0)) for d in (d1, d2, d3)]
    cols = [[], [], []]
    weights = []
    for i in range(rank):
        triple = None
        for attempt in range(3):
            draw = [
                _random_unit_columns(rng, d, 1)[:, 0] for d in (d1, d2, d3)
            ]
            projected = []
            ok = True
            for v, basis in zip(draw, bases):
                res = v - basis @ (basis.T @ v)
                n = np.linalg.norm(res)
                if n < 1e-8:
                    ok = False
                    break
                projected.append(res / n)
            if ok:
                triple = projected
                break
            logger.warning(
                "orth_tpm_run: projected initialization %d vanished (attempt %d)",
                i,
                attempt + 1,
            )
        if triple is None:
            raise DegenerateInputError(
                f"could not draw an initialization orthogonal to the first {i} factors"
            )
        w, x, y, z = tpm_run(tensor, *triple, iters)
        weights.append(w)
        for mode, v in enumerate((x, y, z)):
            cols[mode].append(v)
            basis = bases[mode]
            res = v - basis @ (basis.T @ v)
            n = np.linalg.norm(res)
            if n > 1e-10:
                bases[mode] = np.column_stack([basis, res / n])
    model = CpModel(
        np.asarray(weights),
        np.column_stack(cols[0]),
        np.column_stack(cols[1]),
        np.column_stack(cols[2]),
    )
    return model.canonical()


def svd_init(tensor, rank, seed=None, *, rng=None):
    """Factor initialization from the singular vectors of a random projection.

    Contracts the third mode with a random unit vector, takes the top
    ``rank`` left/right singular vectors as the mode-1/mode-2 starts, and
    bootstraps the mode-3 start with one least-squares update.  If the
    projection has numerical rank below ``rank``, the missing columns are
    padded with random unit vectors (logged).
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    d1, d2, d3 = tensor.dims
    if rank > min(d1, d2):
        raise ValueError(f"rank {rank} exceeds min(d1, d2)={min(d1, d2)}")
    v = _random_unit_columns(rng, d3, 1)[:, 0]
    m = contract_mode3(tensor, v)
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    numerical_rank = int(np.sum(s > 1e-12 * s[0])) if s.size and s[0] > 0 else 0
    a0 = np.array(u[:, :rank])
    b0 = np.array(vh[:rank].T)
    if numerical_rank < rank:
        logger.warning(
            "svd_init: projection rank %d < requested %d; padding with random columns",
            numerical_rank,
            rank,
        )
        a0[:, numerical_rank:] = _random_unit_columns(rng, d1, rank - numerical_rank)
        b0[:, numerical_rank:] = _random_unit_columns(rng, d2, rank - numerical_rank)
    c0 = ls_solve_kr(matricize(tensor, 3), a0, b0)
    return a0, b0, normalize_columns(c0)[0]


def simdiag(tensor, rank, seed=0):
    """Simultaneous diagonalization from two random mode-3 contractions.

    Eigenvectors of ``M1 M2^+`` give the mode-1 factors and eigenvectors of
    ``(M2^+ M1)^T`` the mode-2 factors, paired by eigenvalue; the mode-3
    factors and weights come from one least-squares solve.  Exact for
    noiseless tensors with linearly independent factors, and deliberately
    strict about its own failure modes: near-equal eigenvalues, numerically
    singular projections, or complex eigenvector residue trigger one redraw
    of the projection vectors, then :class:`NumericalFailureError`.
    """
    d1, d2, d3 = tensor.dims
    if rank > min(tensor.dims):
        raise ValueError(f"rank {rank} exceeds min(dims)={min(tensor.dims)}")
    rng = np.random.default_rng(seed)
    last_error = None
    for attempt in range(2):
        u = _random_unit_columns(rng, d3, 1)[:, 0]
        v = _random_unit_columns(rng, d3, 1)[:, 0]
        try:
            return _simdiag_from_projections(tensor, u, v, rank)
        except NumericalFailureError as exc:
            last_error = exc
            logger.warning("simdiag attempt %d failed: %s", attempt + 1, exc)
    raise NumericalFailureError(f"simdiag failed after one redraw: {last_error}")


def _simdiag_from_projections(tensor, u, v, rank, rcond=1e-8, gap_rtol=1e-8):
    m1 = contract_mode3(tensor, u)
    m2 = contract_mode3(tensor, v)
    s2 = np.linalg.svd(m2, compute_uv=False)
    if s2.size == 0 or s2[0] == 0.0 or (rank <= s2.size and s2[rank - 1] <= rcond * s2[0]):
        raise NumericalFailureError("second projection is numerically singular")
    m2p = np.linalg.pinv(m2, rcond=rcond)
    vals_a, vecs_a = eig_nonsym(m1 @ m2p)
    vals_b, vecs_b = eig_nonsym((m2p @ m1).T)
    sel_a = np.argsort(-np.abs(vals_a), kind="stable")[:rank]
    sel_b = np.argsort(-np.abs(vals_b), kind="stable")[:rank]
    lam = vals_a[sel_a]
    gaps = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() < gap_rtol * np.abs(lam).max():
        raise NumericalFailureError("eigenvalue gap below tolerance; factors not separable")
    # Pair mode-2 eigenvectors to mode-1 ones through their shared eigenvalues.
    lam_b = vals_b[sel_b]
    used = np.zeros(rank, dtype=bool)
    pair = np.zeros(rank, dtype=np.int64)
    for i in range(rank):
        dist = np.abs(lam_b - lam[i])
        dist[used] = np.inf
        j = int(np.argmin(dist))
        used[j] = True
        pair[i] = sel_b[j]
    a = _realize_eigvecs(vecs_a[:, sel_a])
    b = _realize_eigvecs(vecs_b[:, pair])
    c_raw = ls_solve_kr(matricize(tensor, 3), a, b)
    c, w = normalize_columns(c_raw)
    return CpModel(w, a, b, c).canonical()


def _realize_eigvecs(vecs, imag_tol=1e-6):
    """Phase-align eigenvectors and take real parts; reject complex residue."""
    out = np.empty(vecs.shape)
    for r in range(vecs.shape[1]):
        col = vecs[:, r]
        lead = col[int(np.argmax(np.abs(col)))]
        phase = lead / abs(lead) if lead != 0 else 1.0
        aligned = col / phase
        if np.linalg.norm(aligned.imag) > imag_tol * np.linalg.norm(aligned):
            raise NumericalFailureError(
                f"eigenvector {r} has complex residue beyond tolerance"
            )
        out[:, r] = aligned.real
    return normalize_columns(out)[0]


def beta_bound(beta0, gamma, k, c_max, steps):
    """Deterministic envelope recursion for weighted correlation ratios.

    Iterates ``b <- gamma * c_max + b^2 + 3 * gamma * k * c_max * b^2`` from
    ``beta0`` and returns the trajectory of length ``steps + 1``.  With
    ``c_max = 0`` this reduces to pure repeated squaring.
    """
    beta0, gamma, c_max = float(beta0), float(gamma), float(c_max)
    if not 0.0 <= beta0 < 1.0:
        raise ValueError(f"beta0 must lie in [0, 1), got {beta0}")
    if gamma < 1.0:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    if c_max < 0.0:
        raise ValueError(f"c_max must be >= 0, got {c_max}")
    out = np.empty(steps + 1)
    b = beta0
    out[0] = b
    boost = 1.0 + 3.0 * gamma * k * c_max
    # The recursion may diverge; inf is a legitimate (vacuous) upper envelope.
    for t in range(1, steps + 1):
        b = gamma * c_max + b * b * boost
        out[t] = b
    return out


@dataclass(frozen=True)
class TraceRecord:
    """Per-step correlation ratios of a symmetric power iteration against a
    known model.

    ``ratios[t, i]`` is the mode-1 correlation of truth column i with the
    iterate at step t, divided by the correlation of the ``target`` column
    (the one with the largest initial weighted correlation).
    ``weighted_ratios`` multiplies in ``w_i / w_target``.  Steps where the
    target correlation fell below the floor are marked undefined.
    """

    target: int
    ratios: np.ndarray
    weighted_ratios: np.ndarray
    defined: np.ndarray


def tpm_correlation_trace(tensor, truth, steps, seed=0, x0=None, denom_floor=1e-13):
    """Run a symmetric power iteration and record correlation ratios.

    The iterate is shared across modes (x = y = z), matching the symmetric
    analysis setting; use symmetric tensors.  Returns a :class:`TraceRecord`
    with ``steps + 1`` rows (step 0 is the initialization).
    """
    d = truth.A.shape[0]
    rng = np.random.default_rng(seed)
    if x0 is None:
        x = _random_unit_columns(rng, d, 1)[:, 0]
    else:
        x = _require_unit(x0, "x0")
    w = truth.weights
    corr = truth.A.T @ x
    target = int(np.argmax(np.abs(w * corr)))
    k = truth.k

    ratios = np.full((steps + 1, k), np.nan)
    defined = np.zeros(steps + 1, dtype=bool)
    hat_w = w / w[target]

    def record(row, corr_vec):
        denom = corr_vec[target]
        if abs(denom) > denom_floor:
            ratios[row] = corr_vec / denom
            defined[row] = True

    record(0, corr)
    for t in range(1, steps + 1):
        x1 = _rank1_update(tensor, 1, x, x)
        n = np.linalg.norm(x1)
        if n == 0.0:
            raise NumericalFailureError("power update vanished during trace")
        x = x1 / n
        record(t, truth.A.T @ x)
    weighted = ratios * hat_w[None, :]
    return TraceRecord(target=target, ratios=ratios, weighted_ratios=weighted, defined=defined)
