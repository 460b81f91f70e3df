# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kinematic kernels; same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

DEF TRANS_X = 3


cdef void _compose(const long[::1] seg_parent, const double[:, ::1] seg_offset,
                   const long[::1] seg_dof_ptr, const long[::1] dof_order,
                   const long[::1] dof_type, const double[::1] q,
                   double[:, :, ::1] R, double[:, ::1] p,
                   double[:, ::1] axis, double[:, ::1] pivot) noexcept nogil:
    cdef Py_ssize_t nseg = seg_parent.shape[0]
    cdef Py_ssize_t i, j, k, r, c
    cdef long par, t, a
    cdef double cs, sn, u, v, w
    for i in range(nseg):
        par = seg_parent[i]
        if par < 0:
            for r in range(3):
                for c in range(3):
                    R[i, r, c] = 1.0 if r == c else 0.0
                p[i, r] = seg_offset[i, r]
        else:
            for r in range(3):
                for c in range(3):
                    R[i, r, c] = R[par, r, c]
            for r in range(3):
                w = 0.0
                for c in range(3):
                    w = w + R[par, r, c] * seg_offset[i, c]
                p[i, r] = p[par, r] + w
        for j in range(seg_dof_ptr[i], seg_dof_ptr[i + 1]):
            k = dof_order[j]
            t = dof_type[k]
            a = t % 3
            for r in range(3):
                axis[k, r] = R[i, r, a]
                pivot[k, r] = p[i, r]
            if t >= TRANS_X:
                for r in range(3):
                    p[i, r] = p[i, r] + R[i, r, a] * q[k]
                continue
            cs = cos(q[k])
            sn = sin(q[k])
            for r in range(3):
                if a == 0:
                    u = cs * R[i, r, 1] + sn * R[i, r, 2]
                    v = -sn * R[i, r, 1] + cs * R[i, r, 2]
                    R[i, r, 1] = u
                    R[i, r, 2] = v
                elif a == 1:
                    u = cs * R[i, r, 0] - sn * R[i, r, 2]
                    v = sn * R[i, r, 0] + cs * R[i, r, 2]
                    R[i, r, 0] = u
                    R[i, r, 2] = v
                else:
                    u = cs * R[i, r, 0] + sn * R[i, r, 1]
                    v = -sn * R[i, r, 0] + cs * R[i, r, 1]
                    R[i, r, 0] = u
                    R[i, r, 1] = v


def segment_frames(seg_parent, seg_offset, seg_dof_ptr, dof_order, dof_type, q):
    cdef Py_ssize_t nseg = seg_parent.shape[0]
    cdef Py_ssize_t nq = dof_type.shape[0]
    R = np.empty((nseg, 3, 3))
    p = np.empty((nseg, 3))
    axis = np.empty((nq, 3))
    pivot = np.empty((nq, 3))
    cdef const long[::1] sp = seg_parent
    cdef const double[:, ::1] so = seg_offset
    cdef const long[::1] ptr = seg_dof_ptr
    cdef const long[::1] order = dof_order
    cdef const long[::1] dt = dof_type
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, :, ::1] Rv = R
    cdef double[:, ::1] pv = p
    cdef double[:, ::1] av = axis
    cdef double[:, ::1] piv = pivot
    with nogil:
        _compose(sp, so, ptr, order, dt, qv, Rv, pv, av, piv)
    return R, p, axis, pivot


def site_positions(R, p, site_seg, site_offset):
    cdef Py_ssize_t ns = site_seg.shape[0]
    out = np.empty((ns, 3))
    cdef double[:, ::1] ov = out
    cdef const double[:, :, ::1] Rv = R
    cdef const double[:, ::1] pv = p
    cdef const long[::1] ss = site_seg
    cdef const double[:, ::1] off = site_offset
    cdef Py_ssize_t s, r, c
    cdef long g
    cdef double w
    with nogil:
        for s in range(ns):
            g = ss[s]
            for r in range(3):
                w = 0.0
                for c in range(3):
                    w = w + Rv[g, r, c] * off[s, c]
                ov[s, r] = pv[g, r] + w
    return out


def site_jacobian(axis, pivot, dof_type, dof_seg, ancestor, site_seg, x):
    cdef Py_ssize_t nsel = x.shape[0]
    cdef Py_ssize_t nq = dof_type.shape[0]
    J = np.zeros((3 * nsel, nq))
    cdef double[:, ::1] Jv = J
    cdef const double[:, ::1] av = axis
    cdef const double[:, ::1] pv = pivot
    cdef const long[::1] dt = dof_type
    cdef const long[::1] ds = dof_seg
    cdef const unsigned char[:, ::1] anc = ancestor
    cdef const long[::1] ss = site_seg
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t s, k
    cdef double dx, dy, dz
    with nogil:
        for s in range(nsel):
            for k in range(nq):
                if not anc[ds[k], ss[s]]:
                    continue
                if dt[k] >= TRANS_X:
                    Jv[3 * s, k] = av[k, 0]
                    Jv[3 * s + 1, k] = av[k, 1]
                    Jv[3 * s + 2, k] = av[k, 2]
                else:
                    dx = xv[s, 0] - pv[k, 0]
                    dy = xv[s, 1] - pv[k, 1]
                    dz = xv[s, 2] - pv[k, 2]
                    Jv[3 * s, k] = av[k, 1] * dz - av[k, 2] * dy
                    Jv[3 * s + 1, k] = av[k, 2] * dx - av[k, 0] * dz
                    Jv[3 * s + 2, k] = av[k, 0] * dy - av[k, 1] * dx
    return J
