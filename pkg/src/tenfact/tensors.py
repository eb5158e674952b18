"""Third-order tensor types and the algebraic kernels everything else consumes.

Tensors come in two flavors: :class:`DenseTensor3` (row-major numpy storage)
and :class:`SparseTensor3` (sorted, deduplicated COO triplets).  A low-rank
model is a :class:`CpModel`: weights plus three unit-column factor matrices,
so that ``T[i, j, k] = sum_r w[r] * A[i, r] * B[j, r] * C[k, r]``.  Factor
matrices are plain ``(d, k)`` float arrays throughout.

The flattening conventions are the single source of truth for the whole
package and are pinned by one algebraic identity: for every model,

    ``matricize(cp_reconstruct(m), 1) == m.A @ diag(w) @ khatri_rao(m.C, m.B).T``

and cyclically for modes 2 and 3.  Concretely, mode-1 matricization sends
entry ``(i, j, k)`` to row ``i``, column ``j + k * d2``, and
``khatri_rao(X, Y)`` places ``X[a] * Y[b]`` at row ``a * dY + b``.

All types are immutable after construction and all operations are pure
functions, so values can be shared freely across threads.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse

__all__ = [
    "DenseTensor3",
    "SparseTensor3",
    "CpModel",
    "matricize",
    "khatri_rao",
    "contract3",
    "contract_mode3",
    "mttkrp",
    "cp_reconstruct",
    "residual_ratio",
    "incoherence",
    "normalize_columns",
]

# Chunk size for streaming kernels over sparse entries; bounds peak memory
# at roughly chunk * rank floats.
_SPARSE_CHUNK = 1 << 18


class DenseTensor3:
    """Dense third-order tensor, row-major storage, all entries finite."""

    __slots__ = ("array",)

    def __init__(self, array):
        arr = np.ascontiguousarray(array, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-d array, got ndim={arr.ndim}")
        if arr.size and not np.isfinite(arr).all():
            raise ValueError("tensor entries must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "array", arr)

    def __setattr__(self, name, value):
        raise AttributeError("DenseTensor3 is immutable")

    @classmethod
    def zeros(cls, dims):
        return cls(np.zeros(dims, dtype=np.float64))

    @classmethod
    def from_flat(cls, dims, data):
        """Build from the flat row-major layout index(i,j,k) = i*d2*d3 + j*d3 + k."""
        d1, d2, d3 = dims
        flat = np.asarray(data, dtype=np.float64)
        if flat.size != d1 * d2 * d3:
            raise ValueError(
                f"flat data has {flat.size} entries, dims {dims} need {d1 * d2 * d3}"
            )
        return cls(flat.reshape(d1, d2, d3))

    @property
    def dims(self):
        return self.array.shape

    @property
    def data(self):
        """Flat row-major view of the entries."""
        return self.array.reshape(-1)

    @property
    def size(self):
        return self.array.size

    def norm(self):
        return float(np.linalg.norm(self.array))

    def __repr__(self):
        return f"DenseTensor3(dims={self.dims})"


class SparseTensor3:
    """COO third-order tensor: sorted, deduplicated, no stored zeros."""

    __slots__ = ("dims", "indices", "values")

    def __init__(self, dims, indices, values):
        d1, d2, d3 = (int(d) for d in dims)
        if min(d1, d2, d3) < 1:
            raise ValueError(f"dims must be positive, got {dims}")
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
        vals = np.asarray(values, dtype=np.float64).reshape(-1)
        if idx.shape[0] != vals.shape[0]:
            raise ValueError("indices and values disagree on entry count")
        if vals.size and not np.isfinite(vals).all():
            raise ValueError("tensor entries must be finite")
        if idx.size:
            lo = idx.min(axis=0)
            hi = idx.max(axis=0)
            if (lo < 0).any() or (hi >= np.array([d1, d2, d3])).any():
                raise ValueError("entry index out of range for dims")
        idx, vals = _canonical_coo(idx, vals)
        idx.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "dims", (d1, d2, d3))
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    def __setattr__(self, name, value):
        raise AttributeError("SparseTensor3 is immutable")

    @classmethod
    def from_entries(cls, dims, entries):
        """Build from an iterable of (i, j, k, value) tuples."""
        entries = list(entries)
        if not entries:
            return cls(dims, np.empty((0, 3), dtype=np.int64), np.empty(0))
        arr = np.asarray(entries, dtype=np.float64).reshape(-1, 4)
        return cls(dims, arr[:, :3].astype(np.int64), arr[:, 3])

    @classmethod
    def empty(cls, dims):
        return cls(dims, np.empty((0, 3), dtype=np.int64), np.empty(0))

    @property
    def nnz(self):
        return self.values.size

    def to_dense(self):
        arr = np.zeros(self.dims, dtype=np.float64)
        if self.nnz:
            arr[self.indices[:, 0], self.indices[:, 1], self.indices[:, 2]] = self.values
        return DenseTensor3(arr)

    def norm(self):
        return float(np.linalg.norm(self.values))

    def __repr__(self):
        return f"SparseTensor3(dims={self.dims}, nnz={self.nnz})"


def _canonical_coo(idx, vals):
    """Sort lexicographically by (i, j, k), sum duplicates, drop zeros."""
    if idx.shape[0] == 0:
        return idx.astype(np.int64), vals.astype(np.float64)
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
    idx = idx[order]
    vals = vals[order]
    new_group = np.empty(idx.shape[0], dtype=bool)
    new_group[0] = True
    new_group[1:] = (idx[1:] != idx[:-1]).any(axis=1)
    starts = np.flatnonzero(new_group)
    summed = np.add.reduceat(vals, starts)
    idx = idx[starts]
    keep = summed != 0.0
    return np.ascontiguousarray(idx[keep]), np.ascontiguousarray(summed[keep])


class CpModel:
    """Rank-k CP model: weights plus unit-column factor matrices A, B, C."""

    __slots__ = ("weights", "A", "B", "C")

    _NORM_TOL = 1e-12

    def __init__(self, weights, A, B, C):
        w = np.array(weights, dtype=np.float64).reshape(-1)
        A = np.array(A, dtype=np.float64)
        B = np.array(B, dtype=np.float64)
        C = np.array(C, dtype=np.float64)
        k = w.size
        for name, f in (("A", A), ("B", B), ("C", C)):
            if f.ndim != 2 or f.shape[1] != k:
                raise ValueError(f"factor {name} must have shape (d, {k})")
            if f.size and not np.isfinite(f).all():
                raise ValueError(f"factor {name} has non-finite entries")
            norms = np.linalg.norm(f, axis=0)
            if k and np.abs(norms - 1.0).max() > self._NORM_TOL:
                bad = int(np.abs(norms - 1.0).argmax())
                raise ValueError(
                    f"factor {name} column {bad} has norm {norms[bad]!r}, expected 1"
                )
        if not np.isfinite(w).all():
            raise ValueError("weights must be finite")
        for arr in (w, A, B, C):
            arr.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    def __setattr__(self, name, value):
        raise AttributeError("CpModel is immutable")

    @property
    def k(self):
        return self.weights.size

    @property
    def dims(self):
        return (self.A.shape[0], self.B.shape[0], self.C.shape[0])

    @property
    def factors(self):
        return (self.A, self.B, self.C)

    def canonical(self):
        """Sign-normalized copy: first nonzero of each A and B column positive,
        weights non-negative with the residual sign pushed into C."""
        if self.k == 0:
            return self
        sa = _leading_signs(self.A)
        sb = _leading_signs(self.B)
        w = self.weights * sa * sb
        sc = np.where(w < 0, -1.0, 1.0)
        return CpModel(w * sc, self.A * sa, self.B * sb, self.C * sc)

    def permuted(self, order):
        order = np.asarray(order, dtype=np.int64)
        return CpModel(
            self.weights[order], self.A[:, order], self.B[:, order], self.C[:, order]
        )

    def __repr__(self):
        return f"CpModel(dims={self.dims}, k={self.k})"


def _leading_signs(factor):
    """Sign of the first nonzero coordinate of each column (+1 for zero columns)."""
    d, k = factor.shape
    signs = np.ones(k)
    for r in range(k):
        nz = np.flatnonzero(factor[:, r])
        if nz.size:
            signs[r] = math.copysign(1.0, factor[nz[0], r])
    return signs


def normalize_columns(matrix, zero_tol=0.0):
    """Scale columns to unit norm.

    Returns ``(unit, norms)``.  Columns with norm <= ``zero_tol`` are replaced
    by the first coordinate vector and their norm reported as 0, so the pair
    always reconstructs ``matrix`` as ``unit * norms``.
    """
    m = np.array(matrix, dtype=np.float64)
    norms = np.linalg.norm(m, axis=0)
    dead = norms <= zero_tol
    safe = np.where(dead, 1.0, norms)
    m /= safe
    if dead.any():
        m[:, dead] = 0.0
        m[0, dead] = 1.0
        norms = np.where(dead, 0.0, norms)
    return m, norms


def matricize(tensor, mode):
    """Mode-n matricization.

    Mode 1 maps entry ``(i, j, k)`` to ``(i, j + k*d2)``, mode 2 to
    ``(j, i + k*d1)``, mode 3 to ``(k, i + j*d1)``; this is the ordering under
    which ``T_(1) = A diag(w) khatri_rao(C, B).T`` holds exactly for CP
    tensors.  Dense input yields a dense array, sparse input a CSR matrix.
    """
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    d1, d2, d3 = tensor.dims
    if isinstance(tensor, DenseTensor3):
        a = tensor.array
        if mode == 1:
            return np.ascontiguousarray(a.transpose(0, 2, 1).reshape(d1, d2 * d3))
        if mode == 2:
            return np.ascontiguousarray(a.transpose(1, 2, 0).reshape(d2, d1 * d3))
        return np.ascontiguousarray(a.transpose(2, 1, 0).reshape(d3, d1 * d2))
    i, j, k = tensor.indices[:, 0], tensor.indices[:, 1], tensor.indices[:, 2]
    if mode == 1:
        rows, cols, shape = i, j + k * d2, (d1, d2 * d3)
    elif mode == 2:
        rows, cols, shape = j, i + k * d1, (d2, d1 * d3)
    else:
        rows, cols, shape = k, i + j * d1, (d3, d1 * d2)
    return scipy.sparse.coo_matrix((tensor.values, (rows, cols)), shape=shape).tocsr()


def khatri_rao(x, y):
    """Columnwise Kronecker product: column r is ``kron(x[:, r], y[:, r])``.

    Row ``a * dY + b`` of the result holds ``x[a, r] * y[b, r]``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if x.shape[1] != y.shape[1]:
        raise ValueError(
            f"column counts differ: {x.shape[1]} vs {y.shape[1]}"
        )
    dx, k = x.shape
    dy = y.shape[0]
    return (x[:, None, :] * y[None, :, :]).reshape(dx * dy, k)


def contract3(tensor, a, b, c):
    """Full trilinear contraction ``sum_ijk T[i,j,k] a[i] b[j] c[k]``."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    c = np.asarray(c, dtype=np.float64).reshape(-1)
    d1, d2, d3 = tensor.dims
    if (a.size, b.size, c.size) != (d1, d2, d3):
        raise ValueError(
            f"vector lengths {(a.size, b.size, c.size)} do not match dims {tensor.dims}"
        )
    if isinstance(tensor, DenseTensor3):
        return float(np.einsum("ijk,i,j,k->", tensor.array, a, b, c, optimize=True))
    idx, vals = tensor.indices, tensor.values
    if vals.size == 0:
        return 0.0
    return float(np.sum(vals * a[idx[:, 0]] * b[idx[:, 1]] * c[idx[:, 2]]))


def contract_mode3(tensor, v):
    """Contract the third mode with a vector: ``M[i, j] = sum_k T[i,j,k] v[k]``."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    d1, d2, d3 = tensor.dims
    if v.size != d3:
        raise ValueError(f"vector length {v.size} does not match d3={d3}")
    if isinstance(tensor, DenseTensor3):
        return tensor.array @ v
    idx, vals = tensor.indices, tensor.values
    out = np.zeros(d1 * d2)
    if vals.size:
        flat = idx[:, 0] * d2 + idx[:, 1]
        out = np.bincount(flat, weights=vals * v[idx[:, 2]], minlength=d1 * d2)
    return out.reshape(d1, d2)


def mttkrp(tensor, factors, mode):
    """Matricized tensor times Khatri-Rao product of the other two factors.

    For ``factors = (A, B, C)``: mode 1 computes ``T_(1) (C ⊙ B)``, mode 2
    ``T_(2) (C ⊙ A)``, mode 3 ``T_(3) (B ⊙ A)``.  This is the core kernel of
    every alternating update.  Sparse tensors are streamed row-wise, so the
    full Khatri-Rao product is never materialized.
    """
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    A, B, C = factors
    if mode == 1:
        p, q = B, C
    elif mode == 2:
        p, q = A, C
    else:
        p, q = A, B
    if isinstance(tensor, DenseTensor3):
        return matricize(tensor, mode) @ khatri_rao(q, p)
    out_idx = tensor.indices[:, mode - 1]
    other = [0, 1, 2]
    other.remove(mode - 1)
    p_idx = tensor.indices[:, other[0]]
    q_idx = tensor.indices[:, other[1]]
    return _sparse_mttkrp(
        out_idx, p_idx, q_idx, tensor.values, tensor.dims[mode - 1], p, q
    )


def _sparse_mttkrp(out_idx, p_idx, q_idx, vals, out_dim, p, q):
    k = p.shape[1]
    out = np.zeros((out_dim, k))
    for lo in range(0, vals.size, _SPARSE_CHUNK):
        hi = min(lo + _SPARSE_CHUNK, vals.size)
        chunk = p[p_idx[lo:hi]] * q[q_idx[lo:hi]] * vals[lo:hi, None]
        rows = out_idx[lo:hi]
        for r in range(k):
            out[:, r] += np.bincount(rows, weights=chunk[:, r], minlength=out_dim)
    return out


def cp_reconstruct(model):
    """Dense tensor ``sum_r w[r] A[:,r] ⊗ B[:,r] ⊗ C[:,r]``."""
    d1, d2, d3 = model.dims
    if model.k == 0:
        return DenseTensor3.zeros((d1, d2, d3))
    arr = np.einsum(
        "r,ir,jr,kr->ijk", model.weights, model.A, model.B, model.C, optimize=True
    )
    return DenseTensor3(arr)


def residual_ratio(tensor, model):
    """Relative Frobenius reconstruction error ``||T - T_hat|| / ||T||``.

    A zero tensor yields 0.0 when the model also reconstructs zero and
    ``math.inf`` otherwise, so callers can branch deterministically.
    """
    if tensor.dims != model.dims:
        raise ValueError(f"tensor dims {tensor.dims} != model dims {model.dims}")
    tnorm = tensor.norm()
    if isinstance(tensor, DenseTensor3):
        diff = tensor.array - cp_reconstruct(model).array
        rnorm = float(np.linalg.norm(diff))
    else:
        rnorm = math.sqrt(max(_sparse_residual_sq(tensor, model), 0.0))
    if tnorm == 0.0:
        return 0.0 if rnorm == 0.0 else math.inf
    return rnorm / tnorm


def _sparse_residual_sq(tensor, model):
    """||T - T_hat||_F^2 for sparse T without densifying."""
    w, A, B, C = model.weights, model.A, model.B, model.C
    idx, vals = tensor.indices, tensor.values
    tnorm_sq = float(vals @ vals)
    if model.k == 0:
        return tnorm_sq
    inner = 0.0
    for lo in range(0, vals.size, _SPARSE_CHUNK):
        hi = min(lo + _SPARSE_CHUNK, vals.size)
        recon = np.einsum(
            "nr,r->n",
            A[idx[lo:hi, 0]] * B[idx[lo:hi, 1]] * C[idx[lo:hi, 2]],
            w,
        )
        inner += float(vals[lo:hi] @ recon)
    gram = (A.T @ A) * (B.T @ B) * (C.T @ C)
    model_sq = float(w @ gram @ w)
    return tnorm_sq - 2.0 * inner + model_sq


def incoherence(factor, norm_tol=1e-9):
    """Maximum absolute inner product between distinct unit-norm columns."""
    f = np.asarray(factor, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("expected a factor matrix")
    k = f.shape[1]
    if k == 0:
        raise ValueError("factor matrix has no columns")
    norms = np.linalg.norm(f, axis=0)
    if np.abs(norms - 1.0).max() > norm_tol:
        bad = int(np.abs(norms - 1.0).argmax())
        raise ValueError(f"column {bad} has norm {norms[bad]!r}; unit columns required")
    if k == 1:
        return 0.0
    gram = np.abs(f.T @ f)
    np.fill_diagonal(gram, 0.0)
    return float(gram.max())
