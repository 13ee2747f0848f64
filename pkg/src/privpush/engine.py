"""Node-local simulation engine for compressed, noised push-sum SGD.

One synchronous iteration, per node i (all reads use pre-step snapshots):

  1. q_i = Q(x_i - xhat_i), from node i's compression stream
  2. broadcast (q_i, y_i) to out-neighbors; bits charged per true out-edge
  3. every holder of a replica of xhat_i (including i itself) adds q_i
  4. w_i = x_i - xhat_i + sum_j a_ij xhat_j over in-neighbors incl. self
  5. y_i <- sum_j a_ij y_j, using pre-step y values
  6. z_i = w_i / y_i
  7. pick a local sample, take the (optionally clipped) stochastic
     gradient at z_i, add Gaussian noise from the node's noise stream
  8. x_i <- w_i - eta * (gradient + noise)

Floating-point contract: the sums in 4 and 5 accumulate in ascending
neighbor id, one fused product-and-add at a time.  The stacked-matrix
reference implementation follows the same order, so both produce bitwise
identical trajectories from identical seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .compression import CompressorSpec, compress, omega_sq, payload_bits
from .privacy import PrivacySpec, check_budget_admissible, clip_gradient, draw_noise, effective_sigma_sq
from .problems import Problem, sample_index
from .rng import make_node_streams
from .topology import MixingMatrix, SpectralConstants, estimate_constants

ALGORITHMS = ("dp-csgp", "exact-sgp-baseline")


class SimulationError(RuntimeError):
    """A run failed mid-flight; partial records are still returned."""


class DivergenceError(SimulationError):
    pass


class InvariantError(SimulationError):
    pass


@dataclass(frozen=True)
class RunRecord:
    """Omniscient per-iteration diagnostics (not visible to any node)."""

    t: int
    grad_norm_sq_avg: float
    consensus_err: float
    U_t: float
    bits_cum: int
    bits_paper_convention: int
    loss_avg: float
    test_acc: float | None


@dataclass
class EngineConfig:
    mixing: MixingMatrix
    problem: Problem
    compressor: CompressorSpec
    privacy: PrivacySpec | None
    eta: float
    T: int
    seed: int
    algorithm: str = "dp-csgp"
    clip_enabled: bool = True
    overflow_guard: float = 1e12
    enforce_omega_bound: bool = False
    constants: SpectralConstants | None = None
    init_x: np.ndarray | None = None  # gossip test mode only; default all zeros


@dataclass
class Trajectory:
    """Stacked state snapshots: X[t], Y[t] for t = 0..T, Z[t] per step."""

    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray


@dataclass
class RunResult:
    records: list[RunRecord]
    failure: str | None = None
    meta: dict = field(default_factory=dict)
    trajectory: Trajectory | None = None

    @property
    def completed(self) -> bool:
        return self.failure is None


@dataclass(frozen=True)
class AdmissibilityCheck:
    ok: bool
    rho: float
    threshold: float
    ratio: float


def check_omega_admissible(spec: CompressorSpec, consts: SpectralConstants) -> AdmissibilityCheck:
    """rho = omega^2 (1 + gamma^2) against 1 / (10 + 40 C^2 / (1-lam)^2), boundary inclusive."""
    rho = omega_sq(spec) * (1.0 + consts.gamma**2)
    threshold = 1.0 / (10.0 + 40.0 * consts.C**2 / (1.0 - consts.lam) ** 2)
    return AdmissibilityCheck(
        ok=rho <= threshold,
        rho=rho,
        threshold=threshold,
        ratio=rho / threshold,
    )


def resolve_compressor(config: EngineConfig) -> CompressorSpec:
    """The exact baseline is the same loop with compression forced off."""
    if config.algorithm == "exact-sgp-baseline":
        return CompressorSpec(
            kind="identity", d=config.compressor.d, float_width=config.compressor.float_width
        )
    return config.compressor


def _validate(config: EngineConfig) -> None:
    if config.algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {config.algorithm!r}, expected one of {ALGORITHMS}")
    if config.T < 1:
        raise ValueError(f"iteration count T must be >= 1, got {config.T}")
    if config.eta <= 0.0:
        raise ValueError(f"step size eta must be positive, got {config.eta}")
    if config.overflow_guard <= 0.0:
        raise ValueError("overflow_guard must be positive")
    dim = config.problem.objective.dim
    if config.compressor.d != dim:
        raise ValueError(
            f"compressor is pinned to d={config.compressor.d}, objective has dim {dim}"
        )
    if config.mixing.n != config.problem.n:
        raise ValueError(
            f"mixing matrix has n={config.mixing.n}, problem has {config.problem.n} nodes"
        )
    if config.init_x is not None and config.init_x.shape != (config.mixing.n, dim):
        raise ValueError(
            f"init_x must have shape ({config.mixing.n}, {dim}), got {config.init_x.shape}"
        )


class Engine:
    """Per-node state machine; run() drives it and collects records."""

    def __init__(self, config: EngineConfig):
        _validate(config)
        self.config = config
        self.spec = resolve_compressor(config)
        self.A = config.mixing.A
        self.graph = config.mixing.graph
        self.n = config.mixing.n
        self.dim = config.problem.objective.dim
        self.sigma_sq = effective_sigma_sq(config.privacy)
        self.clip_G = (
            config.privacy.G if (config.privacy is not None and config.clip_enabled) else None
        )
        self.streams = make_node_streams(config.seed, self.n)
        self.in_incl_self = [self.graph.in_including_self(i) for i in range(self.n)]

        if config.init_x is None:
            self.x = [np.zeros(self.dim) for _ in range(self.n)]
        else:
            self.x = [config.init_x[i].astype(float).copy() for i in range(self.n)]
        self.xhat_self = [np.zeros(self.dim) for _ in range(self.n)]
        # replicas are honest copies, one per (holder, owner) pair
        self.xhat_in = [
            {j: np.zeros(self.dim) for j in self.graph.in_neighbors[i]} for i in range(self.n)
        ]
        self.y = [np.float64(1.0) for _ in range(self.n)]
        self.z = [self.x[i] / self.y[i] for i in range(self.n)]
        self.t = 0

        per_edge = payload_bits(self.spec) + self.spec.float_width
        per_edge_paper = payload_bits(self.spec, paper_convention=True) + self.spec.float_width
        self.bits_per_round = self.graph.num_true_edges * per_edge
        self.bits_per_round_paper = self.graph.num_true_edges * per_edge_paper

    def step(self) -> dict:
        """One synchronous round; returns in-step diagnostics."""
        cfg = self.config
        n, A = self.n, self.A
        self.t += 1

        # 1: compress against the pre-step auxiliary estimate
        q = [
            compress(self.spec, self.x[i] - self.xhat_self[i], self.streams[i].compression).payload
            for i in range(n)
        ]

        # 3: every replica of xhat_j advances by the same q_j
        for i in range(n):
            self.xhat_self[i] = self.xhat_self[i] + q[i]
        for i in range(n):
            for j in self.graph.in_neighbors[i]:
                self.xhat_in[i][j] = self.xhat_in[i][j] + q[j]

        for i in range(n):
            for j in self.graph.in_neighbors[i]:
                if not np.array_equal(self.xhat_in[i][j], self.xhat_self[j]):
                    raise InvariantError(
                        f"t={self.t}: node {i}'s replica of xhat_{j} diverged from the original"
                    )

        # pre-step x still lives in self.x; xhat is now the post-step estimate
        U_t = 0.0
        for i in range(n):
            diff = self.x[i] - self.xhat_self[i]
            U_t += float(diff @ diff)

        # 4: w_i accumulates in ascending neighbor id (bitwise contract)
        w = []
        for i in range(n):
            acc = self.x[i] - self.xhat_self[i]
            for j in self.in_incl_self[i]:
                rep = self.xhat_self[i] if j == i else self.xhat_in[i][j]
                acc = acc + A[i, j] * rep
            w.append(acc)

        # 5: push-sum weights from pre-step values, ascending neighbor id
        y_old = self.y
        y_new = []
        for i in range(n):
            s = np.float64(0.0)
            for j in self.in_incl_self[i]:
                s = s + A[i, j] * y_old[j]
            y_new.append(s)

        total = float(np.sum(np.array(y_new, dtype=float)))
        weight_residual = abs(total - n) / n
        if weight_residual > 1e-12:
            raise InvariantError(
                f"t={self.t}: push-sum weights sum to {total!r}, drifted from n={n}"
            )
        for i in range(n):
            if not y_new[i] > 0.0:
                raise InvariantError(f"t={self.t}: node {i} weight y={y_new[i]!r} not positive")
        self.y = y_new

        # 6
        self.z = [w[i] / y_new[i] for i in range(n)]

        # 7-8
        grad_noise_sum = np.zeros(self.dim)
        J = cfg.problem.J
        for i in range(n):
            idx = sample_index(J, self.streams[i].sampling)
            g = cfg.problem.objective.grad(self.z[i], cfg.problem.locals[i].sample(idx))
            if self.clip_G is not None:
                g = clip_gradient(g, self.clip_G)
            noise = draw_noise(self.sigma_sq, self.dim, self.streams[i].noise)
            update = g + noise
            grad_noise_sum += update
            self.x[i] = w[i] - cfg.eta * update

        for i in range(n):
            norm = float(np.linalg.norm(self.x[i]))
            if not math.isfinite(norm) or norm > cfg.overflow_guard:
                raise DivergenceError(
                    f"t={self.t}: node {i} iterate norm {norm:.3e} exceeded the overflow "
                    f"guard {cfg.overflow_guard:.3e}"
                )

        return {
            "U_t": U_t,
            "grad_noise_sum": grad_noise_sum,
            "weight_residual": weight_residual,
        }

    def xbar(self) -> np.ndarray:
        return np.mean(np.stack(self.x), axis=0)


def run(config: EngineConfig, collect_trajectory: bool = False) -> RunResult:
    """Execute T iterations, recording omniscient diagnostics each round.

    Mid-flight failures (divergence, invariant violations) do not raise;
    the partial records and the failure reason come back in the result.
    """
    engine = Engine(config)
    spec = engine.spec

    omega_check = None
    if config.constants is not None or config.enforce_omega_bound:
        consts = config.constants or estimate_constants(config.mixing)
        omega_check = check_omega_admissible(spec, consts)
        if config.enforce_omega_bound and not omega_check.ok:
            raise ValueError(
                f"compressor {spec.label} has rho={omega_check.rho:.4g} above the "
                f"admissible threshold {omega_check.threshold:.4g} for this topology"
            )

    budget = check_budget_admissible(config.privacy) if config.privacy is not None else None

    meta = {
        "algorithm": config.algorithm,
        "compressor": spec.label,
        "seed": config.seed,
        "eta": config.eta,
        "T": config.T,
        "n": engine.n,
        "dim": engine.dim,
        "objective": config.problem.kind or config.problem.objective.name,
        "sigma_sq": engine.sigma_sq,
        "non_private": engine.sigma_sq == 0.0,
        "clip_G": engine.clip_G,
        "bits_per_round": engine.bits_per_round,
        "epsilon": config.privacy.epsilon if config.privacy else None,
        "delta": config.privacy.delta if config.privacy else None,
        "omega_check": None if omega_check is None else vars(omega_check),
        "budget_check": None if budget is None else vars(budget),
        "max_weight_residual": 0.0,
        "max_avg_identity_residual": 0.0,
        "schedule_source": "manual",
    }

    records: list[RunRecord] = []
    failure: str | None = None
    xs = [np.stack(engine.x)] if collect_trajectory else []
    ys = [np.array(engine.y, dtype=float)] if collect_trajectory else []
    zs: list[np.ndarray] = []

    bits_cum = 0
    bits_cum_paper = 0
    for t in range(1, config.T + 1):
        xbar_pre = engine.xbar()
        gbar = config.problem.global_grad(xbar_pre)
        loss = config.problem.global_loss(xbar_pre)
        acc = config.problem.test_accuracy(xbar_pre)
        try:
            out = engine.step()
        except SimulationError as exc:
            failure = f"{type(exc).__name__}: {exc}"
            break

        bits_cum += engine.bits_per_round
        bits_cum_paper += engine.bits_per_round_paper
        consensus = max(
            float((engine.z[i] - xbar_pre) @ (engine.z[i] - xbar_pre)) for i in range(engine.n)
        )

        xbar_post = engine.xbar()
        predicted = xbar_pre - (config.eta / engine.n) * out["grad_noise_sum"]
        scale = max(1.0, float(np.linalg.norm(xbar_pre)), float(np.linalg.norm(xbar_post)))
        identity_residual = float(np.linalg.norm(xbar_post - predicted)) / scale
        meta["max_weight_residual"] = max(meta["max_weight_residual"], out["weight_residual"])
        meta["max_avg_identity_residual"] = max(
            meta["max_avg_identity_residual"], identity_residual
        )
        if identity_residual > 1e-10:
            failure = (
                f"InvariantError: t={t}: average-iterate identity residual "
                f"{identity_residual:.3e} exceeds 1e-10"
            )
            break

        records.append(
            RunRecord(
                t=t,
                grad_norm_sq_avg=float(gbar @ gbar),
                consensus_err=consensus,
                U_t=out["U_t"],
                bits_cum=bits_cum,
                bits_paper_convention=bits_cum_paper,
                loss_avg=loss,
                test_acc=acc,
            )
        )
        if collect_trajectory:
            xs.append(np.stack(engine.x))
            ys.append(np.array(engine.y, dtype=float))
            zs.append(np.stack(engine.z))

    meta["T_completed"] = len(records)
    trajectory = (
        Trajectory(X=np.stack(xs), Y=np.stack(ys), Z=np.stack(zs)) if collect_trajectory else None
    )
    return RunResult(records=records, failure=failure, meta=meta, trajectory=trajectory)


def baseline_exact_sgp(config: EngineConfig, collect_trajectory: bool = False) -> RunResult:
    """Uncompressed reference: identical loop with the identity operator."""
    from dataclasses import replace

    return run(replace(config, algorithm="exact-sgp-baseline"), collect_trajectory)


@dataclass(frozen=True)
class ErrorFeedbackReport:
    zeta: float
    bound: float
    max_U: float
    max_ratio: float
    argmax_t: int
    ok: bool


# With an exact compressor the residual X - Xhat is pure float dust; anything
# below this floor counts as zero for the bounded-drift check.
_U_FLOOR = 1e-24


def error_feedback_diagnostic(
    result: RunResult, config: EngineConfig, consts: SpectralConstants
) -> ErrorFeedbackReport:
    """Check the compression-residual energy against its theoretical ceiling.

    zeta = 10 rho (n (G^2 + d sigma^2) + 4 C^2 n (G^2 + d sigma^2) / (1-lam)^2),
    and every recorded U_t must stay below zeta * eta^2.  Requires clipping
    to be active, otherwise no G bound holds and the ceiling is vacuous.
    """
    if config.privacy is None or not config.clip_enabled:
        raise ValueError("the drift ceiling needs active clipping (a G bound on gradients)")
    spec = resolve_compressor(config)
    rho = omega_sq(spec) * (1.0 + consts.gamma**2)
    n = config.mixing.n
    d = config.problem.objective.dim
    G = config.privacy.G
    sig_sq = effective_sigma_sq(config.privacy)
    energy = n * (G**2 + d * sig_sq)
    zeta = 10.0 * rho * (energy + 4.0 * consts.C**2 * energy / (1.0 - consts.lam) ** 2)
    bound = zeta * config.eta**2

    max_U = 0.0
    argmax_t = 0
    for rec in result.records:
        if rec.U_t > max_U:
            max_U, argmax_t = rec.U_t, rec.t
    if bound > 0.0:
        max_ratio = max_U / bound
        ok = max_ratio <= 1.0
    else:
        max_ratio = 0.0 if max_U <= _U_FLOOR else math.inf
        ok = max_U <= _U_FLOOR
    return ErrorFeedbackReport(
        zeta=zeta, bound=bound, max_U=max_U, max_ratio=max_ratio, argmax_t=argmax_t, ok=ok
    )
