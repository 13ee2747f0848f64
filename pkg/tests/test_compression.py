"""Compressor operators: contraction factors, payloads, bit charges, rng use.

Expected omega^2 values were computed by hand from the operator definitions
before running anything here (rand: 1-a; gsgd: min(d/4^(b-1), sqrt(d)/2^(b-1))).
"""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from privpush.compression import (
    CompressionError,
    CompressorSpec,
    compress,
    contraction_report,
    empirical_contraction,
    omega_sq,
    payload_bits,
    rand_kept_count,
)
from privpush.rng import PURPOSE_COMPRESSION, node_stream


def stream(seed=7, node=0):
    return node_stream(seed, node, PURPOSE_COMPRESSION)


def test_omega_sq_values():
    assert omega_sq(CompressorSpec("identity", 8)) == 0.0
    assert omega_sq(CompressorSpec("rand", 8, a=0.5)) == 0.5
    assert omega_sq(CompressorSpec("rand", 8, a=1.0)) == 0.0
    # d=4, b=3: min(4/16, 2/4) = 0.25.
    assert omega_sq(CompressorSpec("gsgd", 4, b=3)) == 0.25
    # d=100, b=8: min(100/16384, 10/128) = 100/16384.
    assert omega_sq(CompressorSpec("gsgd", 100, b=8)) == 100 / 16384


def test_invalid_specs_rejected():
    with pytest.raises(CompressionError):
        CompressorSpec("topk", 8)
    with pytest.raises(CompressionError):
        CompressorSpec("rand", 8, a=0.0)
    with pytest.raises(CompressionError):
        CompressorSpec("rand", 8, a=1.5)
    with pytest.raises(CompressionError):
        CompressorSpec("gsgd", 8, b=1)
    # d=4, b=2 gives omega2 = min(4/4, 2/2) = 1: not a contraction.
    with pytest.raises(CompressionError):
        CompressorSpec("gsgd", 4, b=2)
    with pytest.raises(CompressionError):
        CompressorSpec("identity", 0)


def test_labels():
    assert CompressorSpec("identity", 4).label == "identity"
    assert CompressorSpec("rand", 4, a=0.5).label == "rand_0.5"
    assert CompressorSpec("gsgd", 4, b=8).label == "gsgd_8"


def test_rand_kept_count_dust_guard():
    # 0.3 * 10 is 2.9999999999999996 in floats; the guard restores floor 3.
    assert rand_kept_count(CompressorSpec("rand", 10, a=0.3)) == 3
    assert rand_kept_count(CompressorSpec("rand", 5, a=0.5)) == 2
    assert rand_kept_count(CompressorSpec("rand", 7, a=1.0)) == 7


def test_payload_bits():
    assert payload_bits(CompressorSpec("identity", 100)) == 3200
    assert payload_bits(CompressorSpec("rand", 100, a=0.5)) == 1600
    assert payload_bits(CompressorSpec("gsgd", 100, b=8)) == 832
    assert payload_bits(CompressorSpec("gsgd", 100, b=8), paper_convention=True) == 800
    assert payload_bits(CompressorSpec("identity", 100, float_width=64)) == 6400


def test_identity_roundtrip():
    v = np.linspace(-2.0, 3.0, 9)
    msg = compress(CompressorSpec("identity", 9), v, stream())
    assert np.array_equal(msg.payload, v)
    assert msg.payload is not v
    assert msg.rng_draws == 0


def test_rand_full_keep_is_identity():
    v = np.linspace(-1.0, 1.0, 6)
    msg = compress(CompressorSpec("rand", 6, a=1.0), v, stream())
    assert np.array_equal(msg.payload, v)
    assert msg.rng_draws == 6


def test_rand_half_on_ones_always_drops_exactly_half_energy():
    spec = CompressorSpec("rand", 4, a=0.5)
    v = np.ones(4)
    gen = stream()
    for _ in range(50):
        msg = compress(spec, v, gen)
        err = msg.payload - v
        assert float(err @ err) == 2.0
        assert int((msg.payload != 0).sum()) == 2
        assert np.all(np.isin(msg.payload, (0.0, 1.0)))


def test_rand_payload_is_masked_original():
    spec = CompressorSpec("rand", 12, a=0.4)
    v = np.arange(1.0, 13.0)
    msg = compress(spec, v, stream())
    kept = msg.payload != 0
    assert int(kept.sum()) == 4
    assert np.array_equal(msg.payload[kept], v[kept])


def test_gsgd_zero_vector_short_circuit():
    spec = CompressorSpec("gsgd", 6, b=4)
    gen = stream()
    before = gen.bit_generator.state["state"]["state"]
    msg = compress(spec, np.zeros(6), gen)
    after = gen.bit_generator.state["state"]["state"]
    assert np.array_equal(msg.payload, np.zeros(6))
    assert msg.rng_draws == 0
    assert before == after


def test_gsgd_single_spike_is_exact():
    # One nonzero coordinate: |v_i|/||v|| = 1, so floor(levels + u) = levels
    # and the reconstruction returns v bit for bit.
    spec = CompressorSpec("gsgd", 8, b=5)
    v = np.zeros(8)
    v[3] = -2.75
    msg = compress(spec, v, stream())
    assert np.array_equal(msg.payload, v)
    assert msg.rng_draws == 8


def test_gsgd_bounds_and_signs():
    spec = CompressorSpec("gsgd", 16, b=4)
    gen = stream(3)
    for _ in range(30):
        v = gen.standard_normal(16)
        msg = compress(spec, v, gen)
        norm = np.linalg.norm(v)
        assert np.all(np.abs(msg.payload) <= norm * (1 + 1e-12))
        nz = msg.payload != 0
        assert np.all(np.sign(msg.payload[nz]) == np.sign(v[nz]))
        # Quantized magnitudes are multiples of norm / 2^(b-1).
        steps = np.abs(msg.payload) * 8.0 / norm
        assert np.allclose(steps, np.round(steps), atol=1e-9)


def test_wrong_shape_rejected():
    with pytest.raises(CompressionError):
        compress(CompressorSpec("rand", 4, a=0.5), np.zeros(5), stream())


@pytest.mark.parametrize(
    "spec",
    [
        CompressorSpec("identity", 10),
        CompressorSpec("rand", 10, a=0.5),
        CompressorSpec("gsgd", 10, b=6),
    ],
    ids=lambda s: s.label,
)
def test_replay_determinism(spec):
    v = node_stream(99, 1, PURPOSE_COMPRESSION).standard_normal(10)
    a = compress(spec, v, stream(11, 2))
    b = compress(spec, v, stream(11, 2))
    assert a.payload.tobytes() == b.payload.tobytes()
    assert a.rng_draws == b.rng_draws
    assert a.bits == b.bits == payload_bits(spec)


@given(
    arrays(
        np.float64,
        st.integers(2, 12),
        elements=st.floats(-100, 100, allow_nan=False, width=64),
    ),
    st.integers(0, 2**31 - 1),
)
def test_rand_support_property(v, seed):
    d = v.shape[0]
    spec = CompressorSpec("rand", d, a=0.5)
    msg = compress(spec, v, stream(seed))
    on_support = msg.payload != 0.0
    assert np.array_equal(msg.payload[on_support], v[on_support])
    assert int(on_support.sum()) <= rand_kept_count(spec)
    assert msg.rng_draws == d


@given(
    arrays(
        np.float64,
        st.integers(4, 12),
        elements=st.floats(-50, 50, allow_nan=False, width=64),
    ),
    st.integers(0, 2**31 - 1),
)
def test_gsgd_error_within_deterministic_bound(v, seed):
    # Per-coordinate dither error is < norm/2^(b-1), so the squared error is
    # strictly below d * norm^2 / 4^(b-1) for every single draw.
    d = v.shape[0]
    spec = CompressorSpec("gsgd", d, b=6)
    msg = compress(spec, v, stream(seed))
    nsq = float(v @ v)
    err = msg.payload - v
    assert float(err @ err) <= d / 4 ** (6 - 1) * nsq + 1e-15


def test_contraction_report_rand_constant_family_exact():
    # rand on the all-ones vector drops exactly (d - kept)/d of the energy.
    spec = CompressorSpec("rand", 10, a=0.5)
    report = contraction_report(spec, 1000, stream(5))
    mean, se = report["constant"]
    assert mean == 0.5
    assert se == 0.0


def test_contraction_report_identity_all_zero():
    report = contraction_report(CompressorSpec("identity", 10), 1000, stream(5))
    for mean, se in report.values():
        assert mean == 0.0 and se == 0.0


def test_empirical_contraction_below_omega_sq():
    gen = stream(17)
    for spec in (
        CompressorSpec("rand", 20, a=0.5),
        CompressorSpec("rand", 20, a=0.75),
        CompressorSpec("gsgd", 20, b=8),
    ):
        worst = empirical_contraction(spec, 2000, gen)
        assert worst <= omega_sq(spec) + 0.02


def test_contraction_report_rejects_small_samples():
    with pytest.raises(CompressionError):
        contraction_report(CompressorSpec("identity", 4), 999, stream())
