"""Directed communication graphs and their column-stochastic mixing matrices.

Edges are directed j -> i, meaning node j pushes messages to node i.  Every
node always has an implicit self-loop; reported out-neighbor lists contain
only the true (non-self) edges, which is also what bit accounting charges.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

GRAPH_KINDS = ("ring", "complete", "exponential")


class TopologyError(ValueError):
    """Invalid graph construction or a mixing estimate that failed."""


@dataclass(frozen=True)
class DirectedGraph:
    """Immutable directed graph over nodes 0..n-1, self-loops implicit."""

    n: int
    out_neighbors: tuple[tuple[int, ...], ...]
    in_neighbors: tuple[tuple[int, ...], ...]
    kind: str = "custom"

    @property
    def num_true_edges(self) -> int:
        return sum(len(out) for out in self.out_neighbors)

    def in_including_self(self, i: int) -> tuple[int, ...]:
        """Sorted in-neighbor ids with the self-loop included."""
        return tuple(sorted((*self.in_neighbors[i], i)))


def _graph_from_edge_set(n: int, edges: set[tuple[int, int]], kind: str) -> DirectedGraph:
    outs: list[list[int]] = [[] for _ in range(n)]
    ins: list[list[int]] = [[] for _ in range(n)]
    for j, i in sorted(edges):
        outs[j].append(i)
        ins[i].append(j)
    return DirectedGraph(
        n=n,
        out_neighbors=tuple(tuple(sorted(o)) for o in outs),
        in_neighbors=tuple(tuple(sorted(s)) for s in ins),
        kind=kind,
    )


def build_graph(kind: str, n: int) -> DirectedGraph:
    """Construct a named topology.

    ring: i -> (i+1) mod n.  complete: all ordered pairs.  exponential:
    i -> (i + 2**m) mod n for m = 0, 1, ... while 2**m < n; offsets that
    wrap back onto i itself are dropped.
    """
    if n < 1:
        raise TopologyError(f"need at least one node, got n={n}")
    if kind not in GRAPH_KINDS:
        raise TopologyError(f"unknown graph kind {kind!r}, expected one of {GRAPH_KINDS}")
    edges: set[tuple[int, int]] = set()
    if kind == "ring":
        edges = {(i, (i + 1) % n) for i in range(n) if (i + 1) % n != i}
    elif kind == "complete":
        edges = {(j, i) for j in range(n) for i in range(n) if i != j}
    else:
        for i in range(n):
            m = 0
            while 2**m < n:
                tgt = (i + 2**m) % n
                if tgt != i:
                    edges.add((i, tgt))
                m += 1
    return _graph_from_edge_set(n, edges, kind)


def graph_from_edges(edges: list[tuple[int, int]], n: int | None = None) -> DirectedGraph:
    """Build a custom graph from directed (j, i) pairs.

    Duplicate edges collapse, self-edges are dropped (the self-loop is
    implicit anyway).  Rejects graphs that are not strongly connected,
    since push-sum weights would otherwise lose mass permanently.
    """
    if n is None:
        if not edges:
            raise TopologyError("empty edge list and no node count given")
        n = max(max(j, i) for j, i in edges) + 1
    if n < 1:
        raise TopologyError(f"need at least one node, got n={n}")
    clean: set[tuple[int, int]] = set()
    for j, i in edges:
        if not (0 <= j < n and 0 <= i < n):
            raise TopologyError(f"edge ({j}, {i}) out of range for n={n}")
        if j != i:
            clean.add((j, i))
    g = _graph_from_edge_set(n, clean, "custom")
    if not is_strongly_connected(g):
        raise TopologyError("custom graph is not strongly connected")
    return g


def load_edge_list(path: str, n: int | None = None) -> DirectedGraph:
    """Read 'j i' pairs (0-indexed, one per line, # comments allowed)."""
    edges: list[tuple[int, int]] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise TopologyError(f"{path}:{lineno}: expected 'j i', got {raw!r}")
            edges.append((int(parts[0]), int(parts[1])))
    return graph_from_edges(edges, n=n)


def is_strongly_connected(graph: DirectedGraph) -> bool:
    if graph.n == 1:
        return True

    def reaches_all(neighbors: tuple[tuple[int, ...], ...]) -> bool:
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in neighbors[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == graph.n

    return reaches_all(graph.out_neighbors) and reaches_all(graph.in_neighbors)


@dataclass(frozen=True)
class MixingMatrix:
    """Column-stochastic weights: column j spreads 1/(out-degree+1) mass."""

    graph: DirectedGraph
    A: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.graph.n


def build_mixing(graph: DirectedGraph) -> MixingMatrix:
    """Uniform column weights a_ij = 1 / (true out-degree of j + 1)."""
    n = graph.n
    A = np.zeros((n, n))
    for j in range(n):
        w = 1.0 / (len(graph.out_neighbors[j]) + 1)
        A[j, j] = w
        for i in graph.out_neighbors[j]:
            A[i, j] = w
    return MixingMatrix(graph=graph, A=A)


@dataclass(frozen=True)
class SpectralConstants:
    """Mixing-rate constants: ||A^k - phi 1^T|| <= C lam^k and [A^k 1]_i >= beta."""

    lam: float
    C: float
    beta: float
    gamma: float
    phi: np.ndarray = field(repr=False)
    horizon: int
    fit_ks: tuple[int, ...] = field(repr=False, default=())
    residuals: np.ndarray = field(repr=False, default=None)


# Below this, measured residuals are float rounding, not signal, and must be
# excluded from the geometric fit.
_RESIDUAL_FLOOR = 1e-13


def _stationary_vector(A: np.ndarray, tol: float = 1e-13, max_iters: int = 200_000) -> np.ndarray:
    n = A.shape[0]
    v = np.full(n, 1.0 / n)
    for _ in range(max_iters):
        nxt = A @ v
        nxt /= nxt.sum()
        if np.abs(nxt - v).sum() <= tol:
            v = nxt
            break
        v = nxt
    if np.linalg.norm(A @ v - v) > 1e-10:
        raise TopologyError("stationary vector iteration did not converge")
    return v


def _spectral_norm_power_iter(M: np.ndarray, iters: int = 2000) -> float:
    """Largest singular value of M via power iteration on M^T M."""
    B = M.T @ M
    rng = np.random.Generator(np.random.PCG64(12345))
    v = rng.standard_normal(M.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = B @ v
        norm = np.linalg.norm(w)
        if norm <= 1e-300:
            return 0.0
        v = w / norm
        new_est = float(v @ (B @ v))
        if abs(new_est - est) <= 1e-15 * max(1.0, abs(new_est)):
            est = new_est
            break
        est = new_est
    return math.sqrt(max(est, 0.0))


def estimate_constants(mixing: MixingMatrix, horizon: int = 200) -> SpectralConstants:
    """Estimate (lam, C, beta, gamma, phi) from powers of A.

    lam comes from a least-squares fit of log ||A^k - phi 1^T|| against k,
    restricted to residuals above the float noise floor; C is the smallest
    constant covering every sampled k including k=0; beta is the observed
    minimum of [A^k 1]_i over 1 <= k <= horizon.

    Raises TopologyError when the residual has not decayed below 1e-6 of
    its k=1 value by the end of the horizon (mixing too slow to calibrate).
    """
    if horizon < 2:
        raise TopologyError(f"horizon must be at least 2, got {horizon}")
    A = mixing.A
    n = mixing.n
    phi = _stationary_vector(A)
    ones = np.ones(n)
    target = np.outer(phi, ones)

    residuals = np.empty(horizon + 1)
    residuals[0] = np.linalg.norm(np.eye(n) - target, 2)
    beta = math.inf
    Ak = np.eye(n)
    for k in range(1, horizon + 1):
        Ak = A @ Ak
        residuals[k] = np.linalg.norm(Ak - target, 2)
        beta = min(beta, float((Ak @ ones).min()))

    floor = max(_RESIDUAL_FLOOR, residuals[1] * 1e-12)
    if residuals[horizon] > 1e-6 * residuals[1] and residuals[horizon] > floor:
        raise TopologyError(
            f"residual {residuals[horizon]:.3e} at k={horizon} has not decayed below "
            f"1e-6 of its k=1 value {residuals[1]:.3e}; increase the horizon"
        )

    fit_ks = tuple(k for k in range(1, horizon + 1) if residuals[k] > floor)
    if len(fit_ks) >= 2:
        ks = np.array(fit_ks, dtype=float)
        slope = np.polyfit(ks, np.log(residuals[list(fit_ks)]), 1)[0]
        lam = float(math.exp(slope))
    elif len(fit_ks) == 1:
        k = fit_ks[0]
        lam = float(residuals[k] ** (1.0 / k))
    else:
        # A^k is rank-one at machine precision from k=1 on (e.g. complete graph).
        lam = float(np.finfo(float).eps)
    lam = min(max(lam, float(np.finfo(float).eps)), 1.0 - 1e-12)

    sampled = (0, *fit_ks)
    C = max(float(residuals[k] / lam**k) for k in sampled)

    if beta <= 0.0:
        raise TopologyError(f"push-sum weight floor must be positive, got beta={beta}")

    gamma = _spectral_norm_power_iter(A - np.eye(n))
    return SpectralConstants(
        lam=lam,
        C=C,
        beta=float(beta),
        gamma=float(gamma),
        phi=phi,
        horizon=horizon,
        fit_ks=fit_ks,
        residuals=residuals,
    )
