"""Hot numeric kernels.

Everything here operates on raw float64 arrays so it can be compiled by
numba.  The public modules wrap these with typed, validated entry points.

State vector layout (length 18): p(3) | v(3) | R row-major(9) | omega(3).
"""
import numpy as np

from ._accel import jit

STATE_SIZE = 18


# --------------------------------------------------------------------------
# 3-vector / 3x3 helpers
# --------------------------------------------------------------------------
@jit
def cross3(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@jit
def skew3(v):
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@jit
def unskew3(m):
    out = np.empty(3)
    out[0] = 0.5 * (m[2, 1] - m[1, 2])
    out[1] = 0.5 * (m[0, 2] - m[2, 0])
    out[2] = 0.5 * (m[1, 0] - m[0, 1])
    return out


@jit
def matvec3(m, v):
    out = np.empty(3)
    for i in range(3):
        out[i] = m[i, 0] * v[0] + m[i, 1] * v[1] + m[i, 2] * v[2]
    return out


@jit
def matTvec3(m, v):
    out = np.empty(3)
    for i in range(3):
        out[i] = m[0, i] * v[0] + m[1, i] * v[1] + m[2, i] * v[2]
    return out


@jit
def matmul3(a, b):
    out = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]
    return out


@jit
def inv3(m):
    c00 = m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    c01 = m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]
    c02 = m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]
    det = m[0, 0] * c00 + m[0, 1] * c01 + m[0, 2] * c02
    out = np.empty((3, 3))
    out[0, 0] = c00 / det
    out[1, 0] = c01 / det
    out[2, 0] = c02 / det
    out[0, 1] = (m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]) / det
    out[1, 1] = (m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]) / det
    out[2, 1] = (m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]) / det
    out[0, 2] = (m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]) / det
    out[1, 2] = (m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]) / det
    out[2, 2] = (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]) / det
    return out


@jit
def rot_x(a):
    c = np.cos(a)
    s = np.sin(a)
    m = np.zeros((3, 3))
    m[0, 0] = 1.0
    m[1, 1] = c
    m[1, 2] = -s
    m[2, 1] = s
    m[2, 2] = c
    return m


@jit
def rot_y(a):
    c = np.cos(a)
    s = np.sin(a)
    m = np.zeros((3, 3))
    m[0, 0] = c
    m[0, 2] = s
    m[1, 1] = 1.0
    m[2, 0] = -s
    m[2, 2] = c
    return m


@jit
def rot_z(a):
    c = np.cos(a)
    s = np.sin(a)
    m = np.zeros((3, 3))
    m[0, 0] = c
    m[0, 1] = -s
    m[1, 0] = s
    m[1, 1] = c
    m[2, 2] = 1.0
    return m


@jit
def rodrigues(axis, angle):
    """Rotation by ``angle`` about the unit vector ``axis``."""
    k = skew3(axis)
    m = np.sin(angle) * k + (1.0 - np.cos(angle)) * matmul3(k, k)
    for i in range(3):
        m[i, i] += 1.0
    return m


@jit
def polar_newton(m):
    """Orthonormal polar factor of a near-rotation (Newton-Schulz)."""
    x = m.copy()
    for _ in range(12):
        xtx = matmul3(x.T.copy(), x)
        err = 0.0
        for i in range(3):
            for j in range(3):
                d = xtx[i, j] - (1.0 if i == j else 0.0)
                if abs(d) > err:
                    err = abs(d)
        if err < 1e-15:
            break
        corr = -0.5 * xtx
        for i in range(3):
            corr[i, i] += 1.5
        x = matmul3(x, corr)
    return x


# --------------------------------------------------------------------------
# Serial chain: roll(x) -> L1 -> pitch(y) -> L2 -> pitch(y) -> L3 -> fixed
# bend beta about y -> L4 (torch).  All quantities in the manipulator base
# frame.
# --------------------------------------------------------------------------
@jit
def chain_state(q, qd, qdd, lengths, beta):
    """Kinematics of every link of the arm.

    Returns (origins[5,3], rots[4,3,3], axes[3,3], com[4,3], com_vel[4,3],
    com_acc[4,3], w[4,3], wdot[4,3], tip_vel[3], tip_acc[3], jac[3,3]).
    ``origins[4]`` is the torch tip.
    """
    rots = np.zeros((4, 3, 3))
    origins = np.zeros((5, 3))
    axes = np.zeros((3, 3))

    rots[0] = rot_x(q[0])
    axes[0, 0] = 1.0
    origins[1] = origins[0] + rots[0][:, 0] * lengths[0]
    axes[1] = rots[0][:, 1]
    rots[1] = matmul3(rots[0], rot_y(q[1]))
    origins[2] = origins[1] + rots[1][:, 0] * lengths[1]
    axes[2] = rots[1][:, 1]
    rots[2] = matmul3(rots[1], rot_y(q[2]))
    origins[3] = origins[2] + rots[2][:, 0] * lengths[2]
    rots[3] = matmul3(rots[2], rot_y(beta))
    origins[4] = origins[3] + rots[3][:, 0] * lengths[3]

    w = np.zeros((4, 3))
    wdot = np.zeros((4, 3))
    w[0] = axes[0] * qd[0]
    wdot[0] = axes[0] * qdd[0]
    w[1] = w[0] + axes[1] * qd[1]
    wdot[1] = wdot[0] + axes[1] * qdd[1] + cross3(w[0], axes[1]) * qd[1]
    w[2] = w[1] + axes[2] * qd[2]
    wdot[2] = wdot[1] + axes[2] * qdd[2] + cross3(w[1], axes[2]) * qd[2]
    w[3] = w[2]
    wdot[3] = wdot[2]

    vo = np.zeros((5, 3))
    ao = np.zeros((5, 3))
    com = np.zeros((4, 3))
    com_vel = np.zeros((4, 3))
    com_acc = np.zeros((4, 3))
    for k in range(4):
        d = origins[k + 1] - origins[k]
        wd = cross3(w[k], d)
        vo[k + 1] = vo[k] + wd
        ao[k + 1] = ao[k] + cross3(wdot[k], d) + cross3(w[k], wd)
        h = 0.5 * d
        wh = cross3(w[k], h)
        com[k] = origins[k] + h
        com_vel[k] = vo[k] + wh
        com_acc[k] = ao[k] + cross3(wdot[k], h) + cross3(w[k], wh)

    jac = np.zeros((3, 3))
    for j in range(3):
        jac[:, j] = cross3(axes[j], origins[4] - origins[j])
    return origins, rots, axes, com, com_vel, com_acc, w, wdot, vo[4], ao[4], jac


@jit
def arm_composite(q, qd, qdd, lengths, beta, r_bm, p_bm, masses, inertia_local):
    """Mass-weighted moments of the arm in the body frame.

    Returns (m_r, m_rd, m_rdd, I_m, I_m_dot) where m_r = sum(m_i c_i) about
    the body origin and I_m is the arm inertia about the body origin.
    """
    origins, rots, axes, com, com_vel, com_acc, w, wdot, tv, ta, jac = chain_state(q, qd, qdd, lengths, beta)
    m_r = np.zeros(3)
    m_rd = np.zeros(3)
    m_rdd = np.zeros(3)
    inertia = np.zeros((3, 3))
    inertia_dot = np.zeros((3, 3))
    for k in range(4):
        m = masses[k]
        c = p_bm + matvec3(r_bm, com[k])
        cd = matvec3(r_bm, com_vel[k])
        cdd = matvec3(r_bm, com_acc[k])
        m_r += m * c
        m_rd += m * cd
        m_rdd += m * cdd
        rk = matmul3(r_bm, rots[k])
        ik = matmul3(matmul3(rk, inertia_local[k]), rk.T.copy())
        wk = matvec3(r_bm, w[k])
        sw = skew3(wk)
        cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2]
        ccd = c[0] * cd[0] + c[1] * cd[1] + c[2] * cd[2]
        for i in range(3):
            for j in range(3):
                delta = 1.0 if i == j else 0.0
                inertia[i, j] += ik[i, j] + m * (cc * delta - c[i] * c[j])
                inertia_dot[i, j] += m * (2.0 * ccd * delta - cd[i] * c[j] - c[i] * cd[j])
        inertia_dot += matmul3(sw, ik) - matmul3(ik, sw)
    return m_r, m_rd, m_rdd, inertia, inertia_dot


# --------------------------------------------------------------------------
# Coupling disturbance and rigid-body dynamics (NED, thrust along -z_B)
# --------------------------------------------------------------------------
@jit
def coupling_force_terms(rot, omega, omega_dot, r, rd, rdd, m_s):
    """F_dis = -m_s R (w x (w x r) + wdot x r + 2 w x rd + rdd), inertial frame."""
    acc = cross3(omega, cross3(omega, r)) + cross3(omega_dot, r) + 2.0 * cross3(omega, rd) + rdd
    return -m_s * matvec3(rot, acc)


@jit
def coupling_torque_terms(rot, omega, omega_dot, v_dot, r, rd, rdd, i_m, i_m_dot,
                          m_s, m_m, g, literal_third):
    """Body-frame disturbance torque of the moving arm."""
    iw = matvec3(i_m, omega)
    tau = -matvec3(i_m, omega_dot) - cross3(omega, iw)
    if literal_third:
        tau -= iw
    else:
        tau -= matvec3(i_m_dot, omega)
    grav = -v_dot.copy()
    grav[2] += g
    tau += m_s * cross3(r, matTvec3(rot, grav))
    if m_m > 0.0:
        k = m_s * m_s / m_m
        tau -= k * cross3(r, rdd)
        tau -= k * cross3(omega, cross3(r, rd))
    return tau


@jit
def accelerations(x, thrust, torque, wind, f_ext, t_ext, m_s, g, inertia_b,
                  coupled, r, rd, rdd, i_m, i_m_dot, m_m, literal_third):
    """Translational and angular accelerations for one state.

    With ``coupled`` the arm disturbance is evaluated from (r, rd, rdd, I_m,
    dI_m) and its dependence on the unknown accelerations is solved exactly.
    Returns (v_dot, omega_dot, F_dis, tau_dis).
    """
    rot = x[6:15].reshape((3, 3))
    omega = x[15:18]
    z_b = rot[:, 2]
    i_w = matvec3(inertia_b, omega)
    gyro = cross3(omega, i_w)
    if not coupled:
        v_dot = -(thrust / m_s) * z_b + (f_ext + wind) / m_s
        v_dot[2] += g
        omega_dot = matvec3(inv3(inertia_b), torque - gyro + t_ext)
        return v_dot, omega_dot, f_ext.copy(), t_ext.copy()

    b1 = -thrust * z_b + wind + f_ext
    b1[2] += m_s * g
    b1 -= m_s * matvec3(rot, cross3(omega, cross3(omega, r)) + 2.0 * cross3(omega, rd) + rdd)

    zero = np.zeros(3)
    # torque terms that do not depend on the accelerations
    t_rest = coupling_torque_terms(rot, omega, zero, zero, r, rd, rdd, i_m, i_m_dot, m_s, m_m, g, literal_third)
    b2 = torque - gyro + t_rest + t_ext

    sr = skew3(r)
    a = inertia_b + i_m + m_s * matmul3(sr, sr)
    omega_dot = matvec3(inv3(a), b2 - matvec3(sr, matTvec3(rot, b1)))
    v_dot = b1 / m_s + matvec3(rot, cross3(r, omega_dot))

    f_dis = coupling_force_terms(rot, omega, omega_dot, r, rd, rdd, m_s) + f_ext
    t_dis = coupling_torque_terms(rot, omega, omega_dot, v_dot, r, rd, rdd, i_m, i_m_dot,
                                  m_s, m_m, g, literal_third) + t_ext
    return v_dot, omega_dot, f_dis, t_dis


@jit
def _stage(x, tau_s, thrust, torque, wind, f_ext, t_ext, m_s, g, inertia_b, arm_on,
           q0, qd0, qdd, lengths, beta, r_bm, p_bm, masses, inertia_local, m_m, literal_third):
    r = np.zeros(3)
    rd = np.zeros(3)
    rdd = np.zeros(3)
    i_m = np.zeros((3, 3))
    i_m_dot = np.zeros((3, 3))
    if arm_on:
        q = q0 + qd0 * tau_s + 0.5 * qdd * tau_s * tau_s
        qd = qd0 + qdd * tau_s
        m_r, m_rd, m_rdd, i_m, i_m_dot = arm_composite(q, qd, qdd, lengths, beta, r_bm, p_bm, masses, inertia_local)
        r = m_r / m_s
        rd = m_rd / m_s
        rdd = m_rdd / m_s
    v_dot, omega_dot, f_dis, t_dis = accelerations(x, thrust, torque, wind, f_ext, t_ext, m_s, g, inertia_b,
                                                   arm_on, r, rd, rdd, i_m, i_m_dot, m_m, literal_third)
    dx = np.empty(STATE_SIZE)
    dx[0:3] = x[3:6]
    dx[3:6] = v_dot
    rot = x[6:15].reshape((3, 3))
    dx[6:15] = matmul3(rot, skew3(x[15:18])).reshape(9)
    dx[15:18] = omega_dot
    return dx, f_dis, t_dis


@jit
def rk4_step(x, dt, thrust, torque, wind, f_ext, t_ext, m_s, g, inertia_b, arm_on,
             q0, qd0, qdd, lengths, beta, r_bm, p_bm, masses, inertia_local, m_m, literal_third):
    """One classical RK4 step followed by polar re-projection of R.

    Returns (x_next, F_dis, tau_dis, v_dot, omega_dot) with the disturbance and
    accelerations evaluated at the start of the step.
    """
    k1, f_dis, t_dis = _stage(x, 0.0, thrust, torque, wind, f_ext, t_ext, m_s, g, inertia_b, arm_on,
                              q0, qd0, qdd, lengths, beta, r_bm, p_bm, masses, inertia_local, m_m, literal_third)
    k2, f2, t2 = _stage(x + 0.5 * dt * k1, 0.5 * dt, thrust, torque, wind, f_ext, t_ext, m_s, g, inertia_b, arm_on,
                        q0, qd0, qdd, lengths, beta, r_bm, p_bm, masses, inertia_local, m_m, literal_third)
    k3, f3, t3 = _stage(x + 0.5 * dt * k2, 0.5 * dt, thrust, torque, wind, f_ext, t_ext, m_s, g, inertia_b, arm_on,
                        q0, qd0, qdd, lengths, beta, r_bm, p_bm, masses, inertia_local, m_m, literal_third)
    k4, f4, t4 = _stage(x + dt * k3, dt, thrust, torque, wind, f_ext, t_ext, m_s, g, inertia_b, arm_on,
                        q0, qd0, qdd, lengths, beta, r_bm, p_bm, masses, inertia_local, m_m, literal_third)
    xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    rot = polar_newton(xn[6:15].reshape((3, 3)).copy())
    xn[6:15] = rot.reshape(9)
    return xn, f_dis, t_dis, k1[3:6].copy(), k1[15:18].copy()


@jit
def propagate(x, dt, n_steps, thrust, torque, wind, f_ext, t_ext, m_s, g, inertia_b):
    """Integrate the arm-free rigid body for ``n_steps`` with constant inputs."""
    zeros3 = np.zeros(3)
    zeros4 = np.zeros(4)
    zi = np.zeros((4, 3, 3))
    eye = np.eye(3)
    for _ in range(n_steps):
        x, f, t, vd, wd = rk4_step(x, dt, thrust, torque, wind, f_ext, t_ext, m_s, g, inertia_b, False,
                                   zeros3, zeros3, zeros3, zeros4, 0.0, eye, zeros3, zeros4, zi, 0.0, False)
    return x


# --------------------------------------------------------------------------
# Control laws (called at the attitude / position loop rates)
# --------------------------------------------------------------------------
@jit
def attitude_error_kernel(rot, rot_d):
    """e_R = 1/2 vee(R_d^T R - R^T R_d); equals sin(angle) * axis."""
    m = matmul3(rot_d.T.copy(), rot) - matmul3(rot.T.copy(), rot_d)
    return 0.5 * unskew3(m)


@jit
def attitude_law(rot, omega, rot_d, omega_d, kp, kd, tau_comp, tau_max):
    """Geometric PD on SO(3) plus feed-forward; returns (tau, e_R, e_w)."""
    e_r = attitude_error_kernel(rot, rot_d)
    e_w = omega - matvec3(matmul3(rot.T.copy(), rot_d), omega_d)
    tau = -kp * e_r - kd * e_w + tau_comp
    for i in range(3):
        if tau[i] > tau_max[i]:
            tau[i] = tau_max[i]
        elif tau[i] < -tau_max[i]:
            tau[i] = -tau_max[i]
    return tau, e_r, e_w
