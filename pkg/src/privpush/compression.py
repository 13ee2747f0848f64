"""Message compression operators with contraction guarantees.

Every operator Q satisfies E||Q(v) - v||^2 <= omega2 * ||v||^2 with
omega2 < 1, the contraction property the error-feedback recursion needs.
Payload vectors keep full float64 precision in the simulator; the wire
cost is charged separately through `payload_bits`, using `float_width`
bits per transmitted float.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

COMPRESSOR_KINDS = ("identity", "rand", "gsgd")


class CompressionError(ValueError):
    """Invalid compressor parameters."""


@dataclass(frozen=True)
class CompressorSpec:
    """Operator family plus its parameters, pinned to a vector length d.

    kind 'identity' sends v unchanged; 'rand' keeps floor(a*d) coordinates
    chosen uniformly without replacement and zeros the rest; 'gsgd' sends
    sign, per-coordinate dithered b-bit magnitude, and the norm.
    """

    kind: str
    d: int
    a: float | None = None
    b: int | None = None
    float_width: int = 32

    def __post_init__(self) -> None:
        if self.kind not in COMPRESSOR_KINDS:
            raise CompressionError(f"unknown compressor kind {self.kind!r}")
        if self.d < 1:
            raise CompressionError(f"vector length must be positive, got d={self.d}")
        if self.float_width < 1:
            raise CompressionError(f"float_width must be positive, got {self.float_width}")
        if self.kind == "rand":
            if self.a is None or not (0.0 < self.a <= 1.0):
                raise CompressionError(f"rand requires a in (0, 1], got a={self.a}")
        if self.kind == "gsgd":
            if self.b is None or self.b < 2:
                raise CompressionError(f"gsgd requires integer b >= 2, got b={self.b}")
            w2 = _gsgd_omega_sq(self.d, self.b)
            if w2 >= 1.0:
                raise CompressionError(
                    f"gsgd with d={self.d}, b={self.b} has omega2={w2:.4g} >= 1; "
                    "not a contraction"
                )

    @property
    def label(self) -> str:
        if self.kind == "rand":
            return f"rand_{self.a:g}"
        if self.kind == "gsgd":
            return f"gsgd_{self.b}"
        return "identity"


@dataclass(frozen=True)
class CompressedMessage:
    payload: np.ndarray = field(repr=False)
    bits: int
    bits_paper_convention: int
    rng_draws: int


def rand_kept_count(spec: CompressorSpec) -> int:
    # floor(a*d) with a dust guard so decimal fractions like 0.3*10 do not
    # land one coordinate short of the mathematical floor.
    return int(math.floor(spec.a * spec.d + 1e-9))


def _gsgd_omega_sq(d: int, b: int) -> float:
    return min(d / 2 ** (2 * (b - 1)), math.sqrt(d) / 2 ** (b - 1))


def omega_sq(spec: CompressorSpec) -> float:
    """Contraction coefficient omega^2 of the operator."""
    if spec.kind == "identity":
        return 0.0
    if spec.kind == "rand":
        return 1.0 - spec.a
    return _gsgd_omega_sq(spec.d, spec.b)


def payload_bits(spec: CompressorSpec, paper_convention: bool = False) -> int:
    """Wire bits for one compressed vector (positions ride on shared seeds).

    The two accountings differ only for gsgd: the default charges the
    transmitted norm at float_width bits, paper_convention=True drops it.
    """
    if spec.kind == "identity":
        return spec.float_width * spec.d
    if spec.kind == "rand":
        return spec.float_width * rand_kept_count(spec)
    bits = spec.d * spec.b
    if not paper_convention:
        bits += spec.float_width
    return bits


def compress(spec: CompressorSpec, v: np.ndarray, rng: np.random.Generator) -> CompressedMessage:
    """Apply Q to v, drawing any randomness from rng.

    Deterministic given (spec, v, rng state): identical payload bits and
    identical draw counts on replay, which is what makes the node-local
    engine and the stacked-matrix reference comparable bit for bit.
    """
    if v.shape != (spec.d,):
        raise CompressionError(f"expected shape ({spec.d},), got {v.shape}")
    bits = payload_bits(spec)
    bits_paper = payload_bits(spec, paper_convention=True)
    if spec.kind == "identity":
        return CompressedMessage(v.copy(), bits, bits_paper, 0)
    if spec.kind == "rand":
        kept = rng.permutation(spec.d)[: rand_kept_count(spec)]
        payload = np.zeros_like(v)
        payload[kept] = v[kept]
        return CompressedMessage(payload, bits, bits_paper, spec.d)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        # Q(0) = 0 by convention, no dither draws consumed.
        return CompressedMessage(np.zeros_like(v), bits, bits_paper, 0)
    levels = float(2 ** (spec.b - 1))
    u = rng.random(spec.d)
    quantized = np.floor(levels * np.abs(v) / norm + u)
    signs = np.where(v >= 0.0, 1.0, -1.0)  # sig(0) = +1
    payload = norm * signs * quantized / levels
    return CompressedMessage(payload, bits, bits_paper, spec.d)


def contraction_report(
    spec: CompressorSpec, samples: int, rng: np.random.Generator
) -> dict[str, tuple[float, float]]:
    """Mean and standard error of ||Q(x)-x||^2 / ||x||^2 per test-vector family."""
    if samples < 1000:
        raise CompressionError(f"need at least 1000 samples, got {samples}")
    d = spec.d

    def gaussian(_: int) -> np.ndarray:
        return rng.standard_normal(d)

    def sparse(_: int) -> np.ndarray:
        x = np.zeros(d)
        k = max(1, d // 10)
        idx = rng.permutation(d)[:k]
        x[idx] = rng.standard_normal(k)
        return x

    constant = np.ones(d)
    spike = np.zeros(d)
    spike[0] = 1.0
    families = {
        "gaussian": gaussian,
        "sparse": sparse,
        "constant": lambda _: constant,
        "spike": lambda _: spike,
    }
    report: dict[str, tuple[float, float]] = {}
    for name, make in families.items():
        ratios = np.empty(samples)
        for s in range(samples):
            x = make(s)
            nsq = float(x @ x)
            err = compress(spec, x, rng).payload - x
            ratios[s] = float(err @ err) / nsq
        mean = float(ratios.mean())
        se = float(ratios.std(ddof=1) / math.sqrt(samples))
        report[name] = (mean, se)
    return report


def empirical_contraction(spec: CompressorSpec, samples: int, rng: np.random.Generator) -> float:
    """Worst mean contraction ratio across the test-vector battery."""
    report = contraction_report(spec, samples, rng)
    return max(mean for mean, _ in report.values())
