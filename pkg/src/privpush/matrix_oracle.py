"""Stacked-matrix reference implementation of the same recursion.

Instead of simulating per-node message passing, this advances the whole
network state as n x d matrices:

    Q^t     = Q(X^t - Xhat^t)          (row-wise, per-node streams)
    Xhat    <- Xhat + Q^t
    W       = X + (A - I) Xhat
    y       <- A y
    Z       = diag(y)^-1 W
    X       <- W - eta * (grad(Z) + noise)

It shares only the leaf primitives (compressor, objective, clipping, noise,
stream construction) with the node-local engine; all state bookkeeping is
its own.  The A-products accumulate column by column in ascending order,
restricted to each column's support, matching the engine's documented
reduction order so trajectories agree bitwise.
"""
from __future__ import annotations

import numpy as np

from .engine import EngineConfig, Trajectory, _validate, resolve_compressor
from .compression import compress
from .privacy import clip_gradient, draw_noise, effective_sigma_sq
from .problems import sample_index
from .rng import make_node_streams


def matrix_oracle(config: EngineConfig) -> Trajectory:
    """Full trajectory (X, Y, Z) of the matrix-form recursion."""
    _validate(config)
    spec = resolve_compressor(config)
    A = config.mixing.A
    graph = config.mixing.graph
    n = graph.n
    d = config.problem.objective.dim
    sig_sq = effective_sigma_sq(config.privacy)
    clip_G = config.privacy.G if (config.privacy is not None and config.clip_enabled) else None
    streams = make_node_streams(config.seed, n)
    J = config.problem.J
    obj = config.problem.objective

    # column support: receivers of column j, self included, ascending
    col_rows = [np.array(sorted((*graph.out_neighbors[j], j))) for j in range(n)]

    if config.init_x is None:
        X = np.zeros((n, d))
    else:
        X = config.init_x.astype(float).copy()
    Xhat = np.zeros((n, d))
    y = np.ones(n)

    xs = [X.copy()]
    ys = [y.copy()]
    zs = []

    for _ in range(config.T):
        Q = np.empty((n, d))
        for i in range(n):
            Q[i] = compress(spec, X[i] - Xhat[i], streams[i].compression).payload
        Xhat = Xhat + Q

        W = X - Xhat
        y_new = np.zeros(n)
        for j in range(n):
            rows = col_rows[j]
            W[rows] = W[rows] + A[rows, j][:, None] * Xhat[j]
            y_new[rows] = y_new[rows] + A[rows, j] * y[j]
        y = y_new

        Z = W / y[:, None]

        X_next = np.empty_like(X)
        for i in range(n):
            idx = sample_index(J, streams[i].sampling)
            g = obj.grad(Z[i], config.problem.locals[i].sample(idx))
            if clip_G is not None:
                g = clip_gradient(g, clip_G)
            noise = draw_noise(sig_sq, d, streams[i].noise)
            X_next[i] = W[i] - config.eta * (g + noise)
        X = X_next

        xs.append(X.copy())
        ys.append(y.copy())
        zs.append(Z.copy())

    return Trajectory(X=np.stack(xs), Y=np.stack(ys), Z=np.stack(zs))
