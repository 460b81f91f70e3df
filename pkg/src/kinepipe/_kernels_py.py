"""Pure-numpy fallback for the kinematic kernels.

Mirrors ``_kernels.pyx`` operation for operation so both paths agree to
rounding. Selected automatically when the compiled extension is missing.
"""
import numpy as np

REV_X, REV_Y, REV_Z, TRANS_X, TRANS_Y, TRANS_Z = range(6)


def segment_frames(seg_parent, seg_offset, seg_dof_ptr, dof_order, dof_type, q):
    """Compose segment transforms root-to-leaf.

    Returns ``(R, p, axis, pivot)``: per-segment world rotations (nseg, 3, 3)
    and origins (nseg, 3), plus the world axis and pivot point of every DOF
    at the moment it is applied (both (nq, 3), indexed by coordinate).
    """
    nseg = seg_parent.shape[0]
    nq = dof_type.shape[0]
    R = np.empty((nseg, 3, 3))
    p = np.empty((nseg, 3))
    axis = np.empty((nq, 3))
    pivot = np.empty((nq, 3))
    for i in range(nseg):
        par = seg_parent[i]
        if par < 0:
            Ri = np.eye(3)
            pi = seg_offset[i].copy()
        else:
            Ri = R[par].copy()
            pi = p[par] + Ri @ seg_offset[i]
        for j in range(seg_dof_ptr[i], seg_dof_ptr[i + 1]):
            k = dof_order[j]
            t = dof_type[k]
            a = t % 3
            axis[k] = Ri[:, a]
            pivot[k] = pi
            if t >= TRANS_X:
                pi = pi + Ri[:, a] * q[k]
                continue
            c = np.cos(q[k])
            s = np.sin(q[k])
            # right-multiply by the elementary rotation about local axis a
            if a == 0:
                c1 = c * Ri[:, 1] + s * Ri[:, 2]
                c2 = -s * Ri[:, 1] + c * Ri[:, 2]
                Ri[:, 1] = c1
                Ri[:, 2] = c2
            elif a == 1:
                c0 = c * Ri[:, 0] - s * Ri[:, 2]
                c2 = s * Ri[:, 0] + c * Ri[:, 2]
                Ri[:, 0] = c0
                Ri[:, 2] = c2
            else:
                c0 = c * Ri[:, 0] + s * Ri[:, 1]
                c1 = -s * Ri[:, 0] + c * Ri[:, 1]
                Ri[:, 0] = c0
                Ri[:, 1] = c1
        R[i] = Ri
        p[i] = pi
    return R, p, axis, pivot


def site_positions(R, p, site_seg, site_offset):
    return p[site_seg] + np.einsum("sij,sj->si", R[site_seg], site_offset)


def site_jacobian(axis, pivot, dof_type, dof_seg, ancestor, site_seg, x):
    """Stack d(site position)/dq for the sites at world positions ``x``.

    ``site_seg`` gives the owning segment of each row of ``x``. Output rows are
    site-major: (x, y, z) of site 0, then site 1, and so on.
    """
    nsel = x.shape[0]
    nq = dof_type.shape[0]
    mask = ancestor[dof_seg[None, :], site_seg[:, None]].astype(bool)
    rev = dof_type < TRANS_X
    cols = np.where(
        rev[None, :, None],
        np.cross(axis[None, :, :], x[:, None, :] - pivot[None, :, :]),
        axis[None, :, :],
    )
    cols[~mask] = 0.0
    return cols.transpose(0, 2, 1).reshape(3 * nsel, nq)
