"""Exact empirical Wasserstein-1 and cheap companions.

``emd_exact`` solves the discrete transportation problem with a primal
network simplex (block-search pricing, strongly feasible spanning trees,
big-M artificial root) compiled with numba.
"""

import csv
import math
import time
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .errors import EmptyBatchError, NumericError, ShapeError

REPORT_FIELDS = ("experiment_id", "seed", "repeat", "m", "n", "w1", "elapsed_s")


@dataclass
class W1Report:
    value: float
    m: int
    n: int
    seed: int | None = None
    repeat_index: int = 0
    elapsed: float = 0.0
    experiment_id: str = ""

    def row(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "seed": "" if self.seed is None else self.seed,
            "repeat": self.repeat_index,
            "m": self.m,
            "n": self.n,
            "w1": repr(float(self.value)),
            "elapsed_s": f"{self.elapsed:.6f}",
        }


def write_reports_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
        writer.writeheader()
        for r in reports:
            writer.writerow(r.row())


def _values(x) -> np.ndarray:
    arr = getattr(x, "values", x)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def cost_matrix(a, b) -> np.ndarray:
    """Pairwise Euclidean distances, ``C[i, j] = ||a_i - b_j||_2``."""
    A, B = _values(a), _values(b)
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    m, n, d = A.shape[0], B.shape[0], A.shape[1]
    out = np.empty((m, n))
    # explicit differences (no |a|^2 + |b|^2 - 2ab cancellation), in row blocks
    block = max(1, (1 << 22) // max(1, n * d))
    for s in range(0, m, block):
        diff = A[s:s + block, None, :] - B[None, :, :]
        out[s:s + block] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


@njit(cache=True)
def _unlink(u, parent, first_child, next_sib, prev_sib):
    p = parent[u]
    if prev_sib[u] != -1:
        next_sib[prev_sib[u]] = next_sib[u]
    else:
        first_child[p] = next_sib[u]
    if next_sib[u] != -1:
        prev_sib[next_sib[u]] = prev_sib[u]
    next_sib[u] = -1
    prev_sib[u] = -1


@njit(cache=True)
def _link(u, p, first_child, next_sib, prev_sib):
    head = first_child[p]
    next_sib[u] = head
    prev_sib[u] = -1
    if head != -1:
        prev_sib[head] = u
    first_child[p] = u


@njit(cache=True)
def _network_simplex(C, supply, demand, max_iter):
    m, n = C.shape
    A = m * n
    N = m + n + 1
    root = m + n
    maxc = 0.0
    for i in range(m):
        for j in range(n):
            if abs(C[i, j]) > maxc:
                maxc = abs(C[i, j])
    art = (maxc + 1.0) * N
    eps = 64.0 * 2.220446049250313e-16 * art

    flow = np.zeros(A + N - 1)
    art_up = np.zeros(N - 1, dtype=np.bool_)
    parent = np.full(N, -1, dtype=np.int64)
    pred = np.full(N, -1, dtype=np.int64)
    up = np.zeros(N, dtype=np.bool_)
    pi = np.zeros(N)
    first_child = np.full(N, -1, dtype=np.int64)
    next_sib = np.full(N, -1, dtype=np.int64)
    prev_sib = np.full(N, -1, dtype=np.int64)
    mark = np.zeros(N, dtype=np.int64)
    stack = np.empty(N, dtype=np.int64)

    # strongly feasible star: supply nodes point up to the root at cost 0,
    # demand nodes hang below it through arcs of cost `art`
    for u in range(N - 1):
        b = supply[u] if u < m else -demand[u - m]
        parent[u] = root
        pred[u] = A + u
        if b >= 0.0:
            art_up[u] = True
            up[u] = True
            flow[A + u] = b
            pi[u] = 0.0
        else:
            up[u] = False
            flow[A + u] = -b
            pi[u] = art
        _link(u, root, first_child, next_sib, prev_sib)

    block = max(10, int(math.sqrt(A)))
    next_arc = 0
    it = 0
    stamp = 0
    while True:
        # block-search pricing over the real arcs
        best = -eps
        e_in = -1
        cnt = block
        e = next_arc
        i = e // n
        j = e - i * n
        scanned = 0
        while scanned < A:
            rc = C[i, j] + pi[i] - pi[m + j]
            if rc < best:
                best = rc
                e_in = e
            scanned += 1
            e += 1
            j += 1
            if j == n:
                j = 0
                i += 1
                if e == A:
                    e = 0
                    i = 0
            cnt -= 1
            if cnt == 0:
                if e_in != -1:
                    break
                cnt = block
        if e_in == -1:
            break
        next_arc = e
        it += 1
        if it > max_iter:
            return flow[:A].copy(), it, 1

        first = e_in // n
        second = m + (e_in - first * n)

        stamp += 1
        u = first
        while u != -1:
            mark[u] = stamp
            u = parent[u]
        join = second
        while mark[join] != stamp:
            join = parent[join]

        # leaving arc; ties go to the last blocking arc (second side <=)
        delta = np.inf
        u_out = -1
        result = 0
        u = first
        while u != join:
            if up[u]:
                d = flow[pred[u]]
                if d < delta:
                    delta = d
                    u_out = u
                    result = 1
            u = parent[u]
        u = second
        while u != join:
            if not up[u]:
                d = flow[pred[u]]
                if d <= delta:
                    delta = d
                    u_out = u
                    result = 2
            u = parent[u]
        if result == 0:
            return flow[:A].copy(), it, 2

        if delta > 0.0:
            flow[e_in] += delta
            u = first
            while u != join:
                if up[u]:
                    flow[pred[u]] -= delta
                else:
                    flow[pred[u]] += delta
                u = parent[u]
            u = second
            while u != join:
                if up[u]:
                    flow[pred[u]] += delta
                else:
                    flow[pred[u]] -= delta
                u = parent[u]

        if result == 1:
            u_in = first
            v_in = second
        else:
            u_in = second
            v_in = first

        # re-hang the cut subtree: reverse the path u_in -> u_out
        u = u_in
        new_par = v_in
        new_arc = e_in
        while True:
            old_par = parent[u]
            old_arc = pred[u]
            _unlink(u, parent, first_child, next_sib, prev_sib)
            parent[u] = new_par
            pred[u] = new_arc
            if new_arc < A:
                up[u] = (new_arc // n) == u
            else:
                up[u] = art_up[new_arc - A]
            _link(u, new_par, first_child, next_sib, prev_sib)
            if u == u_out:
                break
            new_par = u
            new_arc = old_arc
            u = old_par

        # potentials of the moved subtree, recomputed from tree arcs
        top = 0
        stack[0] = u_in
        top = 1
        while top > 0:
            top -= 1
            x = stack[top]
            a = pred[x]
            if a < A:
                ca = C[a // n, a - (a // n) * n]
            else:
                ca = 0.0 if art_up[a - A] else art
            if up[x]:
                pi[x] = pi[parent[x]] - ca
            else:
                pi[x] = pi[parent[x]] + ca
            c = first_child[x]
            while c != -1:
                stack[top] = c
                top += 1
                c = next_sib[c]

    residual = 0.0
    for k in range(N - 1):
        residual += flow[A + k]
    if residual > 1e-9 * (1.0 + np.abs(supply).sum()):
        return flow[:A].copy(), it, 3
    return flow[:A].copy(), it, 0


def _normalize_weights(w, k, name):
    if w is None:
        return np.full(k, 1.0 / k)
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.shape != (k,):
        raise ShapeError(f"{name} has {w.size} entries, expected {k}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError(f"{name} must be finite and nonnegative")
    s = w.sum()
    if s <= 0:
        raise ValueError(f"{name} sums to zero")
    if abs(s - 1.0) > 1e-9:
        raise ValueError(f"{name} sums to {s!r}, expected 1")
    return w


def emd_exact(c, weights_a=None, weights_b=None, max_iter=None):
    """Optimal transport cost and plan for cost matrix ``c``.

    Weights default to uniform. Returns ``(value, plan)`` with
    ``plan.sum(1) == weights_a`` and ``plan.sum(0) == weights_b``.
    """
    C = np.ascontiguousarray(c, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] == 0 or C.shape[1] == 0:
        raise ShapeError(f"cost matrix must be a nonempty 2-d array, got {C.shape}")
    if not np.all(np.isfinite(C)):
        raise NumericError("cost matrix has non-finite entries")
    m, n = C.shape
    a = _normalize_weights(weights_a, m, "weights_a")
    b = _normalize_weights(weights_b, n, "weights_b")
    uniform = np.all(a == a[0]) and np.all(b == b[0]) and abs(a[0] * m - 1) < 1e-12 \
        and abs(b[0] * n - 1) < 1e-12
    if uniform:
        # integer supplies keep every pivot's flow arithmetic exact
        supply = np.full(m, float(n))
        demand = np.full(n, float(m))
        total = float(m * n)
    else:
        supply = a.copy()
        demand = b * (a.sum() / b.sum())
        total = 1.0
    if max_iter is None:
        max_iter = 50 * (m + n) ** 2
    flow, iters, status = _network_simplex(C, supply, demand, int(max_iter))
    if status == 1:
        raise NumericError(f"network simplex hit the iteration cap ({max_iter}) on a {m}x{n} problem")
    if status == 2:
        raise NumericError(f"network simplex found no leaving arc after {iters} pivots (unbounded cycle)")
    if status == 3:
        raise NumericError(f"network simplex ended with flow on artificial arcs after {iters} pivots")
    plan = flow.reshape(m, n) / total
    value = float((plan * C).sum())
    return max(value, 0.0), plan


def w1_1d_sorted(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size != b.size:
        raise ShapeError(f"w1_1d_sorted needs equal counts, got {a.size} and {b.size}")
    if a.size == 0:
        raise EmptyBatchError("empty samples")
    return float(np.abs(a - b).mean())


def exact_w1(a, b) -> float:
    """W1 between two uniform empirical measures (ground cost l2)."""
    A, B = _values(a), _values(b)
    if A.shape[1] == 1 and A.shape[0] == B.shape[0]:
        return w1_1d_sorted(A, B)
    value, _ = emd_exact(cost_matrix(A, B))
    return value


def timed_w1(a, b, seed=None, repeat_index=0, experiment_id="") -> W1Report:
    A, B = _values(a), _values(b)
    t0 = time.perf_counter()
    value = exact_w1(A, B)
    return W1Report(value, A.shape[0], B.shape[0], seed, repeat_index,
                    time.perf_counter() - t0, experiment_id)


def sliced_w1(a, b, projections: int, rng: np.random.Generator) -> float:
    """Mean 1-d W1 over random unit projection directions."""
    A, B = _values(a), _values(b)
    if A.shape[1] != B.shape[1]:
        raise ShapeError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[0] != B.shape[0]:
        raise ShapeError("sliced_w1 needs equal sample counts")
    d = A.shape[1]
    dirs = rng.standard_normal((projections, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = np.sort(A @ dirs.T, axis=0)
    pb = np.sort(B @ dirs.T, axis=0)
    return float(np.abs(pa - pb).mean())


def tail_prob_diagnostic(batch, m_tilde: float) -> float:
    """Fraction of samples with l2 norm >= m_tilde."""
    if not m_tilde > 0:
        raise ValueError("threshold must be > 0")
    X = _values(batch)
    if X.shape[0] == 0:
        raise EmptyBatchError("tail diagnostic of an empty batch")
    return float(np.mean(np.linalg.norm(X, axis=1) >= m_tilde))
