"""Compare the compiled kinematics kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats N] [--frames T]

Times one FK + Jacobian pass on the bundled model with each backend, then a
short sequence fit, and prints mean times and the speedup.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from kinepipe import _kernels_py
from kinepipe.fitting import SolverConfig, fit_sequence
from kinepipe.kinematics import default_model
from kinepipe.stages import detect_sequence, generate_synthetic_sequence


def _fk_jacobian(impl, arrays, q):
    R, p, axis, pivot = impl.segment_frames(arrays["seg_parent"], arrays["seg_offset"], arrays["seg_dof_ptr"],
                                            arrays["dof_order"], arrays["dof_type"], q)
    x = impl.site_positions(R, p, arrays["site_seg"], arrays["site_offset"])
    return impl.site_jacobian(axis, pivot, arrays["dof_type"], arrays["dof_seg"], arrays["ancestor"],
                              arrays["site_seg"], x)


def _mean_time(fn, repeats: int) -> float:
    fn()  # warm-up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def _fit_time(model, det, backend) -> float:
    import kinepipe.kinematics as kin

    saved = kin.kernels
    kin.kernels = backend
    try:
        start = time.perf_counter()
        fit_sequence(model, det, SolverConfig.optimized())
        return time.perf_counter() - start
    finally:
        kin.kernels = saved


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    ap.add_argument("--frames", type=int, default=20)
    args = ap.parse_args(argv)

    try:
        from kinepipe import _kernels as compiled
    except ImportError:
        print("compiled kernels not built; only the numpy fallback is available")
        return 1

    model = default_model()
    arrays = model._arrays
    q = np.random.default_rng(0).normal(size=model.nq) * 0.5
    np.testing.assert_allclose(_fk_jacobian(compiled, arrays, q), _fk_jacobian(_kernels_py, arrays, q),
                               atol=1e-12)

    t_c = _mean_time(lambda: _fk_jacobian(compiled, arrays, q), args.repeats)
    t_p = _mean_time(lambda: _fk_jacobian(_kernels_py, arrays, q), args.repeats)
    print(f"model: {model.nq} DOFs, {model.n_segments} segments, {model.n_sites} sites")
    print(f"{'FK + Jacobian':<20}{'compiled':>12}{'numpy':>12}{'speedup':>10}")
    print(f"{'per pass (us)':<20}{t_c * 1e6:>12.1f}{t_p * 1e6:>12.1f}{t_p / t_c:>9.1f}x")

    seq = generate_synthetic_sequence(1, args.frames, model=model)
    det = detect_sequence(seq).keypoints3d
    f_c = _fit_time(model, det, compiled)
    f_p = _fit_time(model, det, _kernels_py)
    print(f"{f'fit {args.frames} frames (s)':<20}{f_c:>12.3f}{f_p:>12.3f}{f_p / f_c:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
