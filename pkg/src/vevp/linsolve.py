"""Sparse symmetric positive definite direct solver.

Up-looking sparse Cholesky (elimination tree + row reach, as in CSparse)
after a fill-reducing nested-dissection ordering built from BFS level
structures. Everything is deterministic: identical input gives a
bit-identical factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.sparse as sp


class NotSPDError(np.linalg.LinAlgError):
    """Raised when a non-positive pivot is met during factorization."""

    def __init__(self, index: int, pivot: float):
        super().__init__(f"matrix is not positive definite: pivot {pivot!r} at index {index}")
        self.index = index
        self.pivot = pivot


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class SparseSymmetric:
    """Lower triangle of a symmetric matrix in CSR form (sorted columns)."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @classmethod
    def from_scipy(cls, A, check: bool = True, tol: float = 1e-14) -> "SparseSymmetric":
        A = sp.csr_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix is not square: {A.shape}")
        if check:
            diff = abs(A - A.T)
            scale = abs(A).max() if A.nnz else 0.0
            if diff.nnz and diff.max() > tol * max(scale, 1e-300):
                raise ValueError("matrix is not symmetric")
        low = sp.tril(A, format="csr")
        low.sum_duplicates()
        low.sort_indices()
        return cls(A.shape[0], low.indptr.astype(np.int64), low.indices.astype(np.int64), low.data.copy())

    @classmethod
    def from_triplets(cls, rows, cols, vals, n: int) -> "SparseSymmetric":
        return cls.from_scipy(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))

    def to_scipy(self) -> sp.csr_matrix:
        low = sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))
        return (low + sp.tril(low, k=-1).T).tocsr()


# ---------------------------------------------------------------------------
# ordering


@nb.njit(cache=True)
def _bfs(adj_ptr, adj_idx, root, tag, cur, level, order):
    """BFS inside nodes with ``tag == cur``; returns (count, n_levels)."""
    head = 0
    tail = 1
    order[0] = root
    level[root] = 0
    stamp = cur + 1  # visited marker; caller retags afterwards
    tag[root] = stamp
    nlev = 1
    while head < tail:
        v = order[head]
        head += 1
        lv = level[v]
        for p in range(adj_ptr[v], adj_ptr[v + 1]):
            w = adj_idx[p]
            if tag[w] == cur:
                tag[w] = stamp
                level[w] = lv + 1
                if lv + 2 > nlev:
                    nlev = lv + 2
                order[tail] = w
                tail += 1
    for i in range(tail):
        tag[order[i]] = cur
    return tail, nlev


@nb.njit(cache=True)
def _nested_dissection(adj_ptr, adj_idx, n, leaf):
    buf = np.arange(n)
    tag = np.zeros(n, dtype=np.int64)
    level = np.zeros(n, dtype=np.int64)
    order = np.zeros(n, dtype=np.int64)
    tmp = np.zeros(n, dtype=np.int64)
    stack_lo = np.zeros(2 * n + 2, dtype=np.int64)
    stack_hi = np.zeros(2 * n + 2, dtype=np.int64)
    stack_lo[0] = 0
    stack_hi[0] = n
    sp_ = 1
    counter = 2
    while sp_ > 0:
        sp_ -= 1
        lo = stack_lo[sp_]
        hi = stack_hi[sp_]
        m = hi - lo
        if m <= leaf:
            continue
        cur = counter
        counter += 2
        for i in range(lo, hi):
            tag[buf[i]] = cur
        cnt, nlev = _bfs(adj_ptr, adj_idx, buf[lo], tag, cur, level, order)
        if cnt < m:
            # disconnected: split off the component found
            for i in range(cnt):
                tag[order[i]] = cur + 1
            a = lo
            b = lo + cnt
            for i in range(lo, hi):
                v = buf[i]
                if tag[v] == cur + 1:
                    tmp[a] = v
                    a += 1
                else:
                    tmp[b] = v
                    b += 1
            for i in range(lo, hi):
                buf[i] = tmp[i]
            stack_lo[sp_] = lo
            stack_hi[sp_] = lo + cnt
            sp_ += 1
            stack_lo[sp_] = lo + cnt
            stack_hi[sp_] = hi
            sp_ += 1
            continue
        # pseudo-peripheral root
        for _ in range(4):
            last = order[cnt - 1]
            best = last
            bestdeg = n + 1
            for i in range(cnt - 1, -1, -1):
                v = order[i]
                if level[v] != nlev - 1:
                    break
                deg = 0
                for p in range(adj_ptr[v], adj_ptr[v + 1]):
                    if tag[adj_idx[p]] == cur:
                        deg += 1
                if deg < bestdeg:
                    bestdeg = deg
                    best = v
            cnt, nlev2 = _bfs(adj_ptr, adj_idx, best, tag, cur, level, order)
            grew = nlev2 > nlev
            nlev = nlev2
            if not grew:
                break
        if nlev < 3:
            continue
        sizes = np.zeros(nlev, dtype=np.int64)
        for i in range(cnt):
            sizes[level[order[i]]] += 1
        below = 0
        sep = -1
        sepsize = n + 1
        for lv in range(nlev):
            if lv >= 1 and lv <= nlev - 2 and 0.3 * m <= below <= 0.7 * m:
                if sizes[lv] < sepsize:
                    sepsize = sizes[lv]
                    sep = lv
            below += sizes[lv]
        if sep < 0:
            sep = nlev // 2
            sepsize = sizes[sep]
        n1 = 0
        for lv in range(sep):
            n1 += sizes[lv]
        n2 = m - n1 - sepsize
        a = lo
        b = lo + n1
        c = lo + n1 + n2
        for i in range(cnt):
            v = order[i]
            lv = level[v]
            if lv < sep:
                buf[a] = v
                a += 1
            elif lv > sep:
                buf[b] = v
                b += 1
            else:
                buf[c] = v
                c += 1
        stack_lo[sp_] = lo
        stack_hi[sp_] = lo + n1
        sp_ += 1
        stack_lo[sp_] = lo + n1
        stack_hi[sp_] = lo + n1 + n2
        sp_ += 1
    return buf


def nested_dissection(A, leaf: int = 48) -> np.ndarray:
    """Fill-reducing permutation ``p`` (new index k <- old index p[k])."""
    G = sp.csr_matrix(A)
    G = (abs(G) + abs(G).T).tocsr()
    G.setdiag(0)
    G.eliminate_zeros()
    G.sort_indices()
    return _nested_dissection(G.indptr.astype(np.int64), G.indices.astype(np.int64), G.shape[0], leaf)


# ---------------------------------------------------------------------------
# factorization


@nb.njit(cache=True)
def _etree(Cp, Ci, n):
    parent = -np.ones(n, dtype=np.int64)
    ancestor = -np.ones(n, dtype=np.int64)
    for k in range(n):
        for p in range(Cp[k], Cp[k + 1]):
            i = Ci[p]
            while i != -1 and i < k:
                nxt = ancestor[i]
                ancestor[i] = k
                if nxt == -1:
                    parent[i] = k
                i = nxt
    return parent


@nb.njit(cache=True)
def _ereach(Cp, Ci, k, parent, s, w):
    n = parent.shape[0]
    top = n
    w[k] = k
    for p in range(Cp[k], Cp[k + 1]):
        i = Ci[p]
        if i > k:
            continue
        ln = 0
        while w[i] != k:
            s[ln] = i
            ln += 1
            w[i] = k
            i = parent[i]
        while ln > 0:
            top -= 1
            ln -= 1
            s[top] = s[ln]
    return top


@nb.njit(cache=True)
def _colcounts(Cp, Ci, parent):
    n = parent.shape[0]
    counts = np.ones(n, dtype=np.int64)
    s = np.empty(n, dtype=np.int64)
    w = -np.ones(n, dtype=np.int64)
    for k in range(n):
        top = _ereach(Cp, Ci, k, parent, s, w)
        for t in range(top, n):
            counts[s[t]] += 1
    return counts


@nb.njit(cache=True)
def _chol_numeric(Cp, Ci, Cx, parent, Lp):
    n = parent.shape[0]
    Li = np.empty(Lp[n], dtype=np.int64)
    Lx = np.empty(Lp[n], dtype=np.float64)
    c = Lp[:n].copy()
    s = np.empty(n, dtype=np.int64)
    w = -np.ones(n, dtype=np.int64)
    x = np.zeros(n)
    for k in range(n):
        top = _ereach(Cp, Ci, k, parent, s, w)
        x[k] = 0.0
        for p in range(Cp[k], Cp[k + 1]):
            if Ci[p] <= k:
                x[Ci[p]] = Cx[p]
        d = x[k]
        x[k] = 0.0
        for t in range(top, n):
            i = s[t]
            lki = x[i] / Lx[Lp[i]]
            x[i] = 0.0
            for p in range(Lp[i] + 1, c[i]):
                x[Li[p]] -= Lx[p] * lki
            d -= lki * lki
            p = c[i]
            c[i] += 1
            Li[p] = k
            Lx[p] = lki
        if not d > 0.0:
            return Li, Lx, k, d
        p = c[k]
        c[k] += 1
        Li[p] = k
        Lx[p] = np.sqrt(d)
    return Li, Lx, -1, 0.0


@nb.njit(cache=True)
def _lsolve(Lp, Li, Lx, x):
    n = Lp.shape[0] - 1
    for j in range(n):
        xj = x[j] / Lx[Lp[j]]
        x[j] = xj
        for p in range(Lp[j] + 1, Lp[j + 1]):
            x[Li[p]] -= Lx[p] * xj


@nb.njit(cache=True)
def _ltsolve(Lp, Li, Lx, x):
    n = Lp.shape[0] - 1
    for j in range(n - 1, -1, -1):
        acc = x[j]
        for p in range(Lp[j] + 1, Lp[j + 1]):
            acc -= Lx[p] * x[Li[p]]
        x[j] = acc / Lx[Lp[j]]


@dataclass(frozen=True, eq=False)
class CholeskyFactor:
    """``P A P^T = L L^T`` with ``L`` in CSC form (diagonal first per column).

    ``perm[k]`` is the original index placed at position ``k``.
    """

    n: int
    perm: np.ndarray
    Lp: np.ndarray
    Li: np.ndarray
    Lx: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.Lp[-1])

    def L(self) -> sp.csc_matrix:
        return sp.csc_matrix((self.Lx, self.Li, self.Lp), shape=(self.n, self.n))

    def solve(self, b: np.ndarray) -> np.ndarray:
        return solve(self, b)


def factorize(A, perm: np.ndarray | None = None) -> CholeskyFactor:
    """Cholesky factorization of an SPD matrix.

    ``A`` may be a :class:`SparseSymmetric` or any scipy/numpy matrix
    (symmetry is checked). Raises :class:`NotSPDError` with the failing
    original index on a non-positive pivot.
    """
    if isinstance(A, SparseSymmetric):
        full = A.to_scipy()
    else:
        full = SparseSymmetric.from_scipy(A).to_scipy()
    n = full.shape[0]
    if perm is None:
        perm = nested_dissection(full)
    perm = np.asarray(perm, dtype=np.int64)
    C = sp.triu(full[perm][:, perm], format="csc")
    C.sort_indices()
    Cp = C.indptr.astype(np.int64)
    Ci = C.indices.astype(np.int64)
    parent = _etree(Cp, Ci, n)
    counts = _colcounts(Cp, Ci, parent)
    Lp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=Lp[1:])
    Li, Lx, bad, pivot = _chol_numeric(Cp, Ci, C.data.astype(np.float64), parent, Lp)
    if bad >= 0:
        raise NotSPDError(int(perm[bad]), float(pivot))
    return CholeskyFactor(n, perm, Lp, Li, Lx)


def solve(factor: CholeskyFactor, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for one right-hand side or a column stack."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != factor.n:
        raise ValueError(f"right-hand side has length {b.shape[0]}, factor has order {factor.n}")
    if b.ndim == 2:
        return np.column_stack([solve(factor, b[:, j]) for j in range(b.shape[1])])
    x = b[factor.perm].copy()
    _lsolve(factor.Lp, factor.Li, factor.Lx, x)
    _ltsolve(factor.Lp, factor.Li, factor.Lx, x)
    out = np.empty_like(x)
    out[factor.perm] = x
    return out


def dense_solve(A, b) -> np.ndarray:
    """Gaussian elimination with partial pivoting (test oracle)."""
    A = np.array(A.toarray() if sp.issparse(A) else A, dtype=float)
    x = np.array(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or x.shape[0] != n:
        raise ValueError("dimension mismatch")
    scale = np.abs(A).max() if n else 0.0
    for j in range(n):
        piv = j + int(np.argmax(np.abs(A[j:, j])))
        if abs(A[piv, j]) <= 1e-14 * scale or scale == 0.0:
            raise SingularMatrixError(f"matrix is singular at column {j}")
        if piv != j:
            A[[j, piv]] = A[[piv, j]]
            x[[j, piv]] = x[[piv, j]]
        f = A[j + 1:, j] / A[j, j]
        A[j + 1:, j:] -= np.outer(f, A[j, j:])
        x[j + 1:] -= np.multiply.outer(f, x[j]) if x.ndim > 1 else f * x[j]
    for j in range(n - 1, -1, -1):
        x[j] = (x[j] - A[j, j + 1:] @ x[j + 1:]) / A[j, j]
    return x


def relative_residual(A, x, b) -> float:
    nb_ = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / nb_ if nb_ > 0 else r
