import os
import subprocess
import sys
from array import array

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tlsfeat import kernels
from tlsfeat.synth import tcp_frame

BACKENDS = kernels.available_backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="extension not built")


def test_python_backend_always_available():
    assert "python" in BACKENDS
    with pytest.raises(ValueError):
        kernels.load_backend("fortran")


def test_env_forces_pure_backend():
    env = dict(os.environ, TLSFEAT_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import tlsfeat.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_cython
@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=120), st.sampled_from([1, 113, 7]))
def test_decode_frame_backends_agree_on_noise(frame, linktype):
    py, cy = kernels.load_backend("python"), kernels.load_backend("cython")
    assert py.decode_frame(frame, linktype) == cy.decode_frame(frame, linktype)


@needs_cython
@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=64), st.integers(0, 60), st.integers(0, 255), st.booleans(),
       st.integers(0, 80))
def test_decode_frame_backends_agree_on_mutated_tcp(payload, pos, byte, v6, cut):
    src, dst = ("2001:db8::1", "2001:db8::9") if v6 else ("10.0.0.1", "10.0.0.9")
    frame = bytearray(tcp_frame(src, dst, 1, 2, 3, 4, 0x18, payload))
    frame[pos % len(frame)] = byte
    frame = bytes(frame[:len(frame) - cut])
    py, cy = kernels.load_backend("python"), kernels.load_backend("cython")
    assert py.decode_frame(frame, 1) == cy.decode_frame(frame, 1)


@needs_cython
@given(st.binary(max_size=2000))
def test_histogram_backends_agree(data):
    a = array("Q", bytes(2048))
    b = array("Q", bytes(2048))
    kernels.load_backend("python").update_histogram(a, data)
    kernels.load_backend("cython").update_histogram(b, data)
    assert a == b and sum(a) == len(data)


@needs_cython
@given(st.lists(st.one_of(st.integers(0, 70000),
                          st.floats(0, 1e6, allow_nan=False)), max_size=50))
def test_describe_backends_agree(values):
    assert kernels.load_backend("python").describe(values) == \
        kernels.load_backend("cython").describe(values)


def test_describe_degenerate():
    assert kernels.describe([]) == (0.0, 0.0, 0.0, 0.0, 0.0)
    assert kernels.describe([7]) == (7.0, 7.0, 7.0, 7.0, 0.0)
