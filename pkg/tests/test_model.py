import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlam.errors import FormatError, InputError
from dlam.model import (DecompositionResult, DlamConfig, ObservationMatrix, SolverTrace,
                        read_dlm, residual, stack_frames, validate, write_dlm)


def test_stack_two_frames():
    f0 = np.array([[0.1, 0.2], [0.3, 0.4]])
    f1 = np.array([[0.5, 0.6], [0.7, 0.8]])
    A = stack_frames([f0, f1])
    assert A.shape == (4, 2)
    assert np.array_equal(A.data[:, 0], [0.1, 0.2, 0.3, 0.4])
    assert np.array_equal(A.data[:, 1], [0.5, 0.6, 0.7, 0.8])
    assert A.frame_shape == (2, 2)


def test_stack_single_frame():
    A = stack_frames([np.full((3, 5), 0.5)])
    assert A.shape == (15, 1)


def test_stack_unstack_round_trip():
    rng = np.random.default_rng(0)
    frames = [rng.random((12, 8)) for _ in range(10)]
    back = stack_frames(frames).unstack()
    assert all(np.array_equal(a, b) for a, b in zip(frames, back))


def test_stack_errors():
    with pytest.raises(InputError):
        stack_frames([])
    with pytest.raises(InputError):
        stack_frames([np.zeros((2, 2)), np.zeros((2, 3))])
    with pytest.raises(InputError):
        stack_frames([np.full((2, 2), 1.5)])


def test_observation_invariants():
    with pytest.raises(InputError):
        ObservationMatrix(np.array([[np.nan]]))
    with pytest.raises(InputError):
        ObservationMatrix(np.zeros((6, 2)), frame_shape=(4, 2))
    A = ObservationMatrix(np.zeros((6, 2)), frame_shape=(3, 2))
    with pytest.raises(ValueError):
        A.data[0, 0] = 1.0


def _result(L, S=None, E=None):
    return DecompositionResult(L, S, E, SolverTrace())


def test_residual_examples():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5, 4))
    assert residual(A, _result(A.copy())) == 0.0
    assert residual(A, _result(np.zeros_like(A), np.zeros_like(A))) == 1.0
    L = rng.standard_normal(A.shape)
    assert residual(A, _result(L, A - L)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-5, 5))
def test_residual_invariant_under_transfer(seed, shift):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((4, 3))
    L, S = rng.standard_normal(A.shape), rng.standard_normal(A.shape)
    delta = shift * rng.standard_normal(A.shape)
    r1 = residual(A, _result(L, S))
    r2 = residual(A, _result(L + delta, S - delta))
    assert abs(r1 - r2) <= 1e-10 * max(1.0, r1)


def test_residual_shape_mismatch():
    with pytest.raises(InputError):
        residual(np.zeros((2, 2)), _result(np.zeros((3, 2))))


def test_validate_fills_lambda():
    v = validate(DlamConfig("ialm"), np.zeros((100, 50)))
    assert v.ok
    assert v.config.lam == 0.1
    assert v.config.tol == 1e-7


def test_validate_rank_rules():
    v = validate(DlamConfig("godec", cardinality=3), np.zeros((10, 10)))
    assert "rank_bound required" in v.diagnostics
    v = validate(DlamConfig("drmf", rank_bound=2, cardinality=101), np.zeros((10, 10)))
    assert not v.ok and any("cardinality" in d for d in v.diagnostics)
    v = validate(DlamConfig("ssgodec", rank_bound=2), np.zeros((10, 10)))
    assert "soft_tau required" in v.diagnostics


def test_validate_kind_rules():
    assert not validate(DlamConfig("ialm", kind=3), np.zeros((4, 4))).ok
    assert not validate(DlamConfig("spcp_asalm", kind=2, delta=1.0), np.zeros((4, 4))).ok
    assert validate(DlamConfig("spcp_asalm", kind=3, delta=1.0), np.zeros((4, 4))).ok
    v = validate(DlamConfig("godec", kind=1, rank_bound=1), np.zeros((4, 4)))
    assert v.ok and v.config.cardinality == 0
    assert not validate(DlamConfig("nope"), np.zeros((4, 4))).ok


def test_validate_never_raises_and_keeps_input():
    cfg = DlamConfig("ialm", lam=-1.0, max_iter=0)
    v = validate(cfg, np.zeros((3, 3)))
    assert len(v.diagnostics) == 2
    assert cfg.tol is None


def test_dlm_round_trip(tmp_path):
    M = np.arange(6, dtype=float).reshape(2, 3) / 7.0
    path = tmp_path / "m.dlm"
    write_dlm(path, M)
    blob = path.read_bytes()
    assert blob[:4] == b"DLAM"
    assert struct.unpack_from("<IQQ", blob, 4) == (1, 2, 3)
    # column-major payload
    assert np.array_equal(np.frombuffer(blob[24:], "<f8"), M.T.ravel())
    assert np.array_equal(read_dlm(path), M)


@pytest.mark.parametrize("mutate, offset", [
    (lambda b: b[:10], 10),
    (lambda b: b"XLAM" + b[4:], 0),
    (lambda b: b[:4] + struct.pack("<I", 2) + b[8:], 4),
    (lambda b: b[:-3], None),
])
def test_dlm_format_errors(tmp_path, mutate, offset):
    path = tmp_path / "m.dlm"
    write_dlm(path, np.ones((2, 2)))
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(FormatError) as err:
        read_dlm(path)
    assert err.value.offset is not None
    if offset is not None:
        assert err.value.offset == offset
