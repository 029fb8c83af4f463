"""Compiled kernels fuzzed under AddressSanitizer (skipped without gcc/libasan/cython)."""
import os
import shutil
import subprocess
import sys
import sysconfig
from pathlib import Path

import pytest

import tlsfeat

PYX = Path(tlsfeat.__file__).with_name("_ckernels.pyx")

CANARY = """
def peek(bytes data):
    cdef const unsigned char* p = data
    return p[len(data) + 64]
"""

DRIVER = r"""
import importlib.util, random, sys
from array import array
spec = importlib.util.spec_from_file_location("tlsfeat._ckernels", sys.argv[1])
m = importlib.util.module_from_spec(spec)
spec.loader.exec_module(m)
from tlsfeat.synth import tcp_frame
rng = random.Random(int(sys.argv[2]))
base = [tcp_frame("10.0.0.1", "10.0.0.2", 1, 2, 3, 4, 0x18, b"abc"),
        tcp_frame("2001:db8::1", "2001:db8::2", 1, 2, 3, 4, 0x18, b"x" * 40, vlan=3)]
h = array("Q", bytes(2048))
for i in range(int(sys.argv[3])):
    f = bytearray(rng.choice(base))
    for _ in range(rng.randrange(1, 4)):
        f[rng.randrange(len(f))] = rng.randrange(256)
    f = bytes(f[:rng.randrange(len(f) + 1)])
    m.decode_frame(f, rng.choice((1, 113)))
    m.update_histogram(h, f)
    m.describe([len(f), i])
print("clean")
"""


def _libasan():
    gcc = shutil.which("gcc")
    if not gcc or not shutil.which("cython"):
        return None
    out = subprocess.run([gcc, "-print-file-name=libasan.so"], capture_output=True, text=True)
    path = out.stdout.strip()
    return path if os.path.isabs(path) and os.path.exists(path) else None


def _build(src: Path, tmp: Path, name: str) -> Path:
    c = tmp / f"{name}.c"
    subprocess.run(["cython", "-3", str(src), "-o", str(c)], check=True, capture_output=True)
    so = tmp / (name + sysconfig.get_config_var("EXT_SUFFIX"))
    subprocess.run(["gcc", "-shared", "-fPIC", "-O1", "-g", "-fsanitize=address",
                    "-fno-omit-frame-pointer", f"-I{sysconfig.get_paths()['include']}",
                    str(c), "-o", str(so)], check=True, capture_output=True)
    return so


def _run(args, libasan):
    env = dict(os.environ, PYTHONMALLOC="malloc", ASAN_OPTIONS="detect_leaks=0",
               LD_PRELOAD=libasan)
    return subprocess.run([sys.executable, *args], env=env, capture_output=True, text=True)


@pytest.mark.slow
@pytest.mark.criterion(6, "fuzz robustness: 1e5 inputs each to parse_certificate and parse_records")
def test_kernels_clean_under_asan(tmp_path):
    libasan = _libasan()
    if libasan is None:
        pytest.skip("gcc with libasan and cython are required")
    # the harness must be able to see an out-of-bounds read at all
    canary_src = tmp_path / "canary.pyx"
    canary_src.write_text(CANARY)
    canary = _build(canary_src, tmp_path, "canary")
    probe = (f"import importlib.util as u; s=u.spec_from_file_location('canary', {str(canary)!r}); "
             "m=u.module_from_spec(s); s.loader.exec_module(m); m.peek(b'abc')")
    res = _run(["-c", probe], libasan)
    assert "AddressSanitizer" in res.stderr
    so = _build(PYX, tmp_path, "_ckernels")
    driver = tmp_path / "driver.py"
    driver.write_text(DRIVER)
    res = _run([str(driver), str(so), "1", "100000"], libasan)
    assert "AddressSanitizer" not in res.stderr, res.stderr[-3000:]
    assert res.returncode == 0 and "clean" in res.stdout
