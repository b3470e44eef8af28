"""Per-query linear program assigning classifier weights.

For the multiset of validation samples a query's leaves return, find
weights w in [0, 100] summing to 100 such that, for every sample, the
support of its true class beats every other class by at least gamma;
violations are bought off with penalties g (margin shortfall below
gamma) and f (shortfall below 1), minimizing sum_i m_i * (g_i + 2 f_i).

The solver is a dense two-phase simplex. Candidate columns follow the
largest-reduced-cost rule and switch to Bland's rule after a fixed
number of pivots so degenerate instances cannot cycle. Instances are
shrunk before solving by merging samples with identical (truth, label
row) and by collapsing duplicate unsupported-class constraints; both
reductions preserve the optimum exactly.

Cost scales with the merged tableau: structured bundles (the intended
regime) solve in microseconds to milliseconds, while label-noise data
can push hundreds of distinct label patterns into one bundle and costs
a few hundred milliseconds per query; callers reuse solutions through
the bundle-content cache.
"""

from dataclasses import dataclass

import numpy as np


class LpSolverError(RuntimeError):
    """Raised when the simplex fails; carries a dump of the instance."""


@dataclass
class LpInstance:
    n: int
    n_classes: int
    m: np.ndarray  # (k,) multiplicities
    y: np.ndarray  # (k,) true classes
    L: np.ndarray  # (k, n) validation-time labels per classifier
    gamma: float = 80.0

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.L = np.asarray(self.L, dtype=np.int64)
        if self.m.min() < 1:
            raise ValueError("multiplicities must be >= 1")
        if self.L.shape != (self.k, self.n):
            raise ValueError("label matrix shape mismatch")

    @property
    def k(self):
        return self.m.size

    def constraint_count(self):
        """Nominal size: two penalty rows per (sample, wrong class) plus
        the weight-sum equality."""
        return 2 * self.k * (self.n_classes - 1) + 1


@dataclass
class LpSolution:
    w: np.ndarray
    g: np.ndarray
    f: np.ndarray
    objective: float


def build_instance(bundle, cm, gamma):
    """LP data for one query: the bundle's unique rows with multiplicities,
    labels taken from the validation-time prediction matrix."""
    return LpInstance(
        n=cm.n_classifiers,
        n_classes=cm.class_count(),
        m=np.rint(bundle.mult).astype(np.int64),
        y=cm.truth[bundle.rows],
        L=cm.predicted[bundle.rows],
        gamma=gamma,
    )


def instance_dump(inst):
    lines = ["n=%d classes=%d k=%d gamma=%g" % (inst.n, inst.n_classes, inst.k,
                                                inst.gamma)]
    for i in range(inst.k):
        lines.append("m=%d y=%d labels=%s"
                     % (inst.m[i], inst.y[i], inst.L[i].tolist()))
    return "\n".join(lines)


def solution_dump(sol):
    return "w=%s\ng=%s\nf=%s\nobjective=%.9f" % (
        sol.w.tolist(), sol.g.tolist(), sol.f.tolist(), sol.objective)


def penalties_given_weights(inst, w):
    """Closed-form optimal (g, f) for fixed weights.

    For sample i the binding class is the wrong class with the largest
    support; g_i = max(0, gamma - margin), f_i = max(0, 1 - margin).
    Used as the independent oracle and for feasibility checking.
    """
    w = np.asarray(w, dtype=np.float64)
    g = np.empty(inst.k)
    f = np.empty(inst.k)
    for i in range(inst.k):
        support = np.bincount(inst.L[i], weights=w, minlength=inst.n_classes)
        correct = support[inst.y[i]]
        support[inst.y[i]] = -np.inf
        margin = correct - support.max()
        g[i] = max(0.0, inst.gamma - margin)
        f[i] = max(0.0, 1.0 - margin)
    objective = float((inst.m * (g + 2.0 * f)).sum())
    return objective, g, f


def _merge_equivalent(inst):
    """Group samples sharing (truth, label row); multiplicities add."""
    keys = {}
    order = []
    merged_m = []
    group_of = np.empty(inst.k, dtype=np.int64)
    for i in range(inst.k):
        key = (int(inst.y[i]),) + tuple(int(v) for v in inst.L[i])
        if key not in keys:
            keys[key] = len(order)
            order.append(i)
            merged_m.append(0)
        gid = keys[key]
        group_of[i] = gid
        merged_m[gid] += int(inst.m[i])
    rows = np.asarray(order, dtype=np.int64)
    return (np.asarray(merged_m, dtype=np.int64), inst.y[rows], inst.L[rows],
            group_of)


def _build_standard_form(inst):
    """Rows: weight-sum equality, then (g, f) margin rows per merged
    sample and constrained class. Returns (A, b, cost, slices)."""
    m, y, L, group_of = _merge_equivalent(inst)
    kk = m.size
    n = inst.n
    row_specs = []  # (sample, class-support-vector)
    for i in range(kk):
        wrong = np.unique(L[i][L[i] != y[i]])
        supports = []
        for c in wrong:
            supports.append((L[i] == c).astype(np.float64))
        if wrong.size < inst.n_classes - 1:
            supports.append(np.zeros(n))  # one row covers all unvoted classes
        correct_vec = (L[i] == y[i]).astype(np.float64)
        for sup in supports:
            row_specs.append((i, correct_vec - sup))
    n_pen_rows = len(row_specs)
    n_rows = 1 + 2 * n_pen_rows
    n_cols = n + 2 * kk + 2 * n_pen_rows
    A = np.zeros((n_rows, n_cols))
    b = np.zeros(n_rows)
    A[0, :n] = 1.0
    b[0] = 100.0
    for r, (i, coeff) in enumerate(row_specs):
        gr = 1 + 2 * r
        fr = gr + 1
        A[gr, :n] = coeff
        A[gr, n + i] = 1.0
        A[gr, n + 2 * kk + 2 * r] = -1.0
        b[gr] = inst.gamma
        A[fr, :n] = coeff
        A[fr, n + kk + i] = 1.0
        A[fr, n + 2 * kk + 2 * r + 1] = -1.0
        b[fr] = 1.0
    cost = np.zeros(n_cols)
    cost[n:n + kk] = m
    cost[n + kk:n + 2 * kk] = 2.0 * m
    return A, b, cost, kk, group_of


def _pivot(T, basis, r, j):
    """Eliminate column j from every row except r; row r is scaled to 1.

    The reduced-cost row rides along as the last tableau row. Sparse
    columns update row-by-row; dense ones as one broadcast rank-1 op.
    """
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    hit = np.nonzero(col)[0]
    if hit.size * 4 < T.shape[0]:
        T[hit] -= col[hit, None] * T[r]
    else:
        T -= col[:, None] * T[r]
    basis[r] = j


def _run_pivots(T, basis, allowed_cols, it, max_iter, bland_after, tol):
    """Iterate until the maintained cost row has no improving column."""
    n_rows = basis.size
    while True:
        reduced = T[-1, :allowed_cols]
        if it < bland_after:
            j = int(np.argmin(reduced))
            if reduced[j] >= -tol:
                return it, 0
        else:  # Bland's rule: first improving column
            neg = np.nonzero(reduced < -tol)[0]
            if neg.size == 0:
                return it, 0
            j = int(neg[0])
        col = T[:n_rows, j]
        pos = col > tol
        if not pos.any():
            return it, 3
        ratios = np.full(n_rows, np.inf)
        ratios[pos] = T[:n_rows, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + tol)[0]
        r = int(ties[np.argmin(basis[ties])])
        _pivot(T, basis, r, j)
        it += 1
        if it >= max_iter:
            return it, 1


def _set_cost_row(T, basis, cvec):
    """Reduced costs for the current basis: c - c_B B^-1 A."""
    n_rows = basis.size
    T[-1, :-1] = cvec
    T[-1, -1] = 0.0
    cb = cvec[basis]
    hit = np.nonzero(cb)[0]
    if hit.size:
        T[-1] -= cb[hit] @ T[hit]


def _simplex(A, b, cost, max_iter, bland_after, tol=1e-9):
    """min cost.x s.t. Ax = b, x >= 0 (b >= 0). Returns x or a status code.

    Two-phase dense tableau with the reduced-cost row maintained in
    place. Status: 0 ok, 1 iteration limit, 2 infeasible, 3 unbounded.
    """
    n_rows, n_real = A.shape
    T = np.zeros((n_rows + 1, n_real + n_rows + 1))
    T[:n_rows, :n_real] = A
    T[:n_rows, n_real:-1] = np.eye(n_rows)
    T[:n_rows, -1] = b
    basis = np.arange(n_real, n_real + n_rows)

    # phase 1: minimize the artificial sum
    cost1 = np.zeros(n_real + n_rows)
    cost1[n_real:] = 1.0
    _set_cost_row(T, basis, cost1)
    it, status = _run_pivots(T, basis, n_real + n_rows, 0, max_iter,
                             bland_after, tol)
    if status:
        return None, status
    if cost1[basis] @ T[:n_rows, -1] > 1e-7:
        return None, 2
    # pivot leftover zero-level artificials out where a real column allows
    for r in range(n_rows):
        if basis[r] >= n_real:
            j = int(np.argmax(np.abs(T[r, :n_real])))
            if abs(T[r, j]) > tol:
                _pivot(T, basis, r, j)
    # drop artificial columns that left the basis; they never re-enter
    kept_art = sorted({int(jb) for jb in basis if jb >= n_real})
    keep = np.concatenate([np.arange(n_real), np.asarray(kept_art, dtype=int),
                           [n_real + n_rows]]).astype(int)
    remap = {old: n_real + i for i, old in enumerate(kept_art)}
    basis = np.asarray([remap.get(int(jb), int(jb)) for jb in basis])
    T = np.ascontiguousarray(T[:, keep])
    # phase 2 on the real columns only
    _set_cost_row(T, basis, np.concatenate([cost, np.zeros(len(kept_art))]))
    it, status = _run_pivots(T, basis, n_real, it, max_iter, bland_after, tol)
    if status:
        return None, status
    x = np.zeros(n_real)
    for r, jb in enumerate(basis):
        if jb < n_real:
            x[jb] = T[r, -1]
    return x, 0


def solve(inst, max_iter=None):
    """Optimal weights and penalties for one instance.

    Always feasible (uniform weights with large penalties), so failures
    are solver breakdowns and raise LpSolverError with the instance.
    """
    A, b, cost, kk, group_of = _build_standard_form(inst)
    if max_iter is None:
        max_iter = 200 * (A.shape[0] + A.shape[1]) + 2000
    bland_after = 20 * (A.shape[0] + A.shape[1]) + 200
    x, status = _simplex(A, b, cost, max_iter, bland_after)
    if status:
        reason = {1: "iteration limit exceeded", 2: "reported infeasible",
                  3: "reported unbounded"}[status]
        raise LpSolverError("simplex %s\n%s" % (reason, instance_dump(inst)))
    n = inst.n
    w = np.clip(x[:n], 0.0, None)
    g_merged = np.clip(x[n:n + kk], 0.0, None)
    f_merged = np.clip(x[n + kk:n + 2 * kk], 0.0, None)
    g = g_merged[group_of]
    f = f_merged[group_of]
    sol = LpSolution(w=w, g=g, f=f,
                     objective=float((inst.m * (g + 2.0 * f)).sum()))
    _verify(inst, sol)
    return sol


def _verify(inst, sol, tol=1e-6):
    if abs(sol.w.sum() - 100.0) > tol or sol.w.min() < -tol or sol.w.max() > 100 + tol:
        raise LpSolverError("weight vector violates bounds: %s\n%s"
                            % (sol.w, instance_dump(inst)))
    _, g_min, f_min = penalties_given_weights(inst, sol.w)
    if (sol.g - g_min).min() < -tol or (sol.f - f_min).min() < -tol:
        raise LpSolverError("penalties below feasible minimum\n%s"
                            % instance_dump(inst))
