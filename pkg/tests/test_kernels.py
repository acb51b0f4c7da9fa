"""The compiled kernels must agree exactly with the numpy fallback."""

import numpy as np
import pytest

from gridsight import kernels

PY = kernels.BACKENDS["python"]
BACKENDS = list(kernels.BACKENDS.values())
needs_ext = pytest.mark.skipif("cython" not in kernels.BACKENDS, reason="compiled extension not built")


@pytest.mark.parametrize("backend", BACKENDS, ids=list(kernels.BACKENDS))
def test_im2col_matches_definition(backend):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
    cols = backend.im2col3x3(x)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    n, i, j = 1, 2, 4
    row = cols[n * 20 + i * 5 + j]
    np.testing.assert_array_equal(row, xp[n, :, i:i + 3, j:j + 3].reshape(-1))


@pytest.mark.parametrize("backend", BACKENDS, ids=list(kernels.BACKENDS))
def test_col2im_is_adjoint(backend):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 4, 5))
    c = rng.standard_normal((40, 27))
    lhs = (backend.im2col3x3(x) * c).sum()
    rhs = (x * backend.col2im3x3(c, 2, 3, 4, 5)).sum()
    assert lhs == pytest.approx(rhs, rel=1e-12)


@needs_ext
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_backends_identical(dtype):
    c = kernels.BACKENDS["cython"]
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 4, 6, 8)).astype(dtype)
    np.testing.assert_array_equal(c.im2col3x3(x), PY.im2col3x3(x))
    cols = rng.standard_normal((3 * 6 * 8, 4 * 9)).astype(dtype)
    np.testing.assert_array_equal(c.col2im3x3(cols, 3, 4, 6, 8), PY.col2im3x3(cols, 3, 4, 6, 8))
    xi = rng.integers(0, 3, x.shape).astype(dtype)  # many ties
    oc, ac = c.maxpool2_forward(xi)
    op, ap = PY.maxpool2_forward(xi)
    np.testing.assert_array_equal(oc, op)
    np.testing.assert_array_equal(ac, ap)
    d = rng.standard_normal(oc.shape).astype(dtype)
    np.testing.assert_array_equal(c.maxpool2_backward(d, ac), PY.maxpool2_backward(d, ap))


@needs_ext
def test_vote_identical():
    c = kernels.BACKENDS["cython"]
    rng = np.random.default_rng(3)
    cells = rng.integers(0, 50, 1000)
    cls = rng.integers(0, 4, 1000)
    wc, cc = c.vote(cells, cls, 64)
    wp, cp = PY.vote(cells, cls, 64)
    np.testing.assert_array_equal(wc, wp)
    np.testing.assert_array_equal(cc, cp)


@pytest.mark.parametrize("backend", BACKENDS, ids=list(kernels.BACKENDS))
def test_vote_ties_and_empty(backend):
    winner, counts = backend.vote(np.array([0, 0, 1, 1, 1]), np.array([2, 1, 3, 3, 0]), 3)
    assert winner.tolist() == [1, 3, 0]
    assert counts.tolist() == [[0, 1, 1, 0], [1, 0, 0, 2], [0, 0, 0, 0]]


@pytest.mark.parametrize("backend", BACKENDS, ids=list(kernels.BACKENDS))
def test_maxpool_first_max(backend):
    x = np.array([[[[1, 3], [3, 2]]]], dtype=np.float32)
    out, arg = backend.maxpool2_forward(x)
    assert out.item() == 3 and arg.item() == 1


def test_fallback_selected_by_env():
    import subprocess
    import sys

    code = "from gridsight import kernels; print(kernels.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], env={"GRIDSIGHT_KERNELS": "python", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
