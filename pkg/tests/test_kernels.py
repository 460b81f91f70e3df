"""Compiled and pure-Python kernels must agree."""
import numpy as np
import pytest

from kinepipe import _kernels_py, kernels

compiled = pytest.importorskip("kinepipe._kernels")


def _args(model):
    a = model._arrays
    return a["seg_parent"], a["seg_offset"], a["seg_dof_ptr"], a["dof_order"], a["dof_type"]


@pytest.mark.parametrize("scale", [0.0, 0.5, 3.0])
def test_backends_agree(model, rng, scale):
    a = model._arrays
    for _ in range(10):
        q = rng.normal(size=model.nq) * scale
        outs = []
        for impl in (_kernels_py, compiled):
            R, p, axis, pivot = impl.segment_frames(*_args(model), q)
            x = impl.site_positions(R, p, a["site_seg"], a["site_offset"])
            J = impl.site_jacobian(axis, pivot, a["dof_type"], a["dof_seg"], a["ancestor"], a["site_seg"], x)
            outs.append((R, p, x, J))
        for u, v in zip(*outs):
            np.testing.assert_allclose(u, v, atol=1e-12, rtol=0)


def test_compiled_backend_selected():
    assert kernels.BACKEND == "cython"


def test_pure_python_forced(monkeypatch):
    import importlib

    monkeypatch.setenv("KINEPIPE_PURE_PYTHON", "1")
    try:
        reloaded = importlib.reload(kernels)
        assert reloaded.BACKEND == "python"
    finally:
        monkeypatch.delenv("KINEPIPE_PURE_PYTHON")
        importlib.reload(kernels)
    assert kernels.BACKEND == "cython"
