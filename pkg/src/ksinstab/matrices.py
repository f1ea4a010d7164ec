"""Sign-pattern and graph predicates for small dense matrices.

Graph convention: ``G(A)`` has an edge ``i -> j`` iff ``A[i, j] != 0``
(exact zero test).  Class decompositions order the strongly connected
components so that ``A[perm][:, perm]`` is block *lower* triangular.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

M_MATRIX_SLACK = 1e-12
SINGULAR_COND = 1e12


@dataclass(frozen=True)
class DirectedGraph:
    n: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        edges = frozenset((int(i), int(j)) for i, j in self.edges)
        for i, j in edges:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) outside vertex range 0..{self.n - 1}")
        object.__setattr__(self, "edges", edges)

    def successors(self, i: int) -> list[int]:
        return sorted(j for a, j in self.edges if a == i)

    def adjacency_lists(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            adj[i].append(j)
        return adj

    def transpose(self) -> "DirectedGraph":
        return DirectedGraph(self.n, frozenset((j, i) for i, j in self.edges))


@dataclass(frozen=True)
class ClassDecomposition:
    """Strongly connected components in block-lower-triangular order.

    ``permutation[k]`` is the original index placed at position ``k``;
    ``condensation_edges`` holds ``(p, q)`` when some vertex of class
    ``p`` has an edge into class ``q`` (always ``p > q``).
    """

    classes: tuple[tuple[int, ...], ...]
    permutation: tuple[int, ...]
    condensation_edges: frozenset[tuple[int, int]]

    def permutation_matrix(self) -> np.ndarray:
        n = len(self.permutation)
        P = np.zeros((n, n))
        P[np.arange(n), self.permutation] = 1.0
        return P

    def block_slices(self) -> list[slice]:
        out, start = [], 0
        for c in self.classes:
            out.append(slice(start, start + len(c)))
            start += len(c)
        return out


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return A


def digraph(A) -> DirectedGraph:
    A = _square(A)
    rows, cols = np.nonzero(A)
    return DirectedGraph(A.shape[0], frozenset(zip(rows.tolist(), cols.tolist())))


def strongly_connected_components(G: DirectedGraph) -> ClassDecomposition:
    """Tarjan's algorithm, iterative.

    Tarjan emits a component only after every component reachable from
    it, i.e. sinks first, which is exactly the lower-triangular order.
    """
    adj = G.adjacency_lists()
    index = [-1] * G.n
    low = [0] * G.n
    on_stack = [False] * G.n
    stack: list[int] = []
    comps: list[tuple[int, ...]] = []
    counter = 0

    for root in range(G.n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, pos = work[-1]
            if pos < len(adj[v]):
                work[-1] = (v, pos + 1)
                w = adj[v][pos]
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(tuple(sorted(comp)))

    owner = [0] * G.n
    for p, comp in enumerate(comps):
        for v in comp:
            owner[v] = p
    cond = frozenset((owner[i], owner[j]) for i, j in G.edges if owner[i] != owner[j])
    perm = tuple(v for comp in comps for v in comp)
    return ClassDecomposition(tuple(comps), perm, cond)


def is_irreducible(A) -> bool:
    """True iff ``G(A)`` is strongly connected; 1x1 matrices count as irreducible."""
    A = _square(A)
    if A.shape[0] == 0:
        raise ValueError("irreducibility undefined for an empty matrix")
    if A.shape[0] == 1:
        return True
    return len(strongly_connected_components(digraph(A)).classes) == 1


def is_metzler(A) -> bool:
    A = _square(A)
    off = A[~np.eye(A.shape[0], dtype=bool)]
    return bool(np.all(off >= 0))


def m_matrix_failure(A) -> str | None:
    """Why ``A`` is not a nonsingular M-matrix, or ``None`` if it is.

    Uses the inverse-nonnegativity characterization: off-diagonals
    ``<= 0``, numerically nonsingular, and ``inv(A) >= -1e-12``.
    """
    A = _square(A)
    n = A.shape[0]
    if np.any(A[~np.eye(n, dtype=bool)] > 0):
        return "sign pattern: positive off-diagonal entry"
    if n == 0:
        return None
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        return "singular matrix"
    inv = np.linalg.inv(A)
    if np.any(inv < -M_MATRIX_SLACK):
        return "inverse has negative entries"
    return None


def is_nonsingular_m_matrix(A) -> bool:
    return m_matrix_failure(A) is None


def _require_nonnegative(A) -> np.ndarray:
    A = _square(A)
    if np.any(A < 0) or not np.all(np.isfinite(A)):
        raise ValueError("matrix must be entrywise nonnegative and finite")
    return A


def row_sum_bounds(A) -> tuple[float, float]:
    """``(min row sum, max row sum)``, which bracket the spectral radius."""
    A = _require_nonnegative(A)
    sums = A.sum(axis=1)
    return float(sums.min()), float(sums.max())


def perron_root(A, *, max_iter: int = 100_000, tol: float = 1e-12):
    """Spectral radius and positive Perron vector of an irreducible ``A >= 0``.

    Power iteration on ``A + c I`` with ``c = max(diag) + 1`` (primitive,
    so the iteration converges).  Stops when the Collatz-Wielandt bounds
    ``min (Bx)_i / x_i <= rho(B) <= max (Bx)_i / x_i`` pin ``rho(A)`` to
    ``tol`` relative; falls back to a dense eigensolve if that never happens.

    Returns
    -------
    rho : float
    x : ndarray, positive, scaled to unit max-norm
    """
    A = _require_nonnegative(A)
    if not is_irreducible(A):
        raise ValueError("perron_root needs an irreducible matrix")
    n = A.shape[0]
    lo_bound, hi_bound = row_sum_bounds(A)
    shift = float(np.max(np.diag(A))) + 1.0
    B = A + shift * np.eye(n)
    x = np.ones(n)
    rho = None
    for _ in range(max_iter):
        y = B @ x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        x = y / y.max()
        estimate = 0.5 * (lo + hi) - shift
        if hi - lo <= tol * abs(estimate):
            rho = estimate
            break
    if rho is None:
        w, V = np.linalg.eig(A)
        k = int(np.argmax(w.real))
        rho = float(w[k].real)
        x = np.abs(V[:, k].real)
        x = x / x.max()
    rho = float(min(max(rho, lo_bound), hi_bound))
    return rho, x


def block_triangularize(A):
    """Symmetric permutation ``T = P A P^T`` that is block lower triangular.

    Diagonal blocks correspond to the classes (strongly connected
    components) of ``G(A)`` and are irreducible.
    """
    A = _square(A)
    dec = strongly_connected_components(digraph(A))
    p = list(dec.permutation)
    T = A[np.ix_(p, p)]
    return T, dec


def has_path(G: DirectedGraph, i: int, j: int) -> bool:
    """Reachability from ``i`` to ``j``; a vertex always reaches itself."""
    for v in (i, j):
        if not 0 <= v < G.n:
            raise IndexError(f"vertex {v} outside 0..{G.n - 1}")
    if i == j:
        return True
    adj = G.adjacency_lists()
    seen = {i}
    queue = deque([i])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w == j:
                return True
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return False
