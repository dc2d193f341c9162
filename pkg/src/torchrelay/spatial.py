"""Frames, rotations and the 3x3 helpers used throughout the package.

The inertial frame is NED: gravity is ``+g e3`` and rotor thrust acts along
``-z_B``.  Rotations are full 3x3 matrices; ``R_AB`` maps vectors expressed in
frame B into frame A.
"""
from enum import Enum

import numpy as np

from . import _kernels as K

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])


class FrameTag(str, Enum):
    INERTIAL = "I"    # NED world
    BODY = "B"        # quadrotor body, forward-right-down
    MANIP_BASE = "M"  # manipulator base
    CAMERA = "C"      # camera optical frame (x right, y down, z forward)


class NonAntisymmetric(ValueError):
    pass


class Degenerate(ValueError):
    pass


def skew(v):
    """Matrix ``S`` with ``S @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    return K.skew3(v)


def unskew(m, tol=1e-8):
    m = np.asarray(m, dtype=float)
    sym = 0.5 * (m + m.T)
    if np.max(np.abs(sym)) > tol:
        raise NonAntisymmetric(f"symmetric part {np.max(np.abs(sym)):.3g} exceeds {tol}")
    return K.unskew3(m)


def rot_yaw(psi):
    """Rotation about z by ``psi`` with zero roll and pitch."""
    return K.rot_z(float(psi))


def rot_x(a):
    return K.rot_x(float(a))


def rot_y(a):
    return K.rot_y(float(a))


def reorthonormalize(m):
    """Nearest rotation to ``m`` in the Frobenius sense (polar factor)."""
    m = np.asarray(m, dtype=float)
    u, s, vt = np.linalg.svd(m)
    if s[-1] <= 1e-12 * max(s[0], 1.0):
        raise Degenerate("matrix is rank deficient")
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        raise Degenerate("closest orthogonal matrix is a reflection")
    return r


def yaw_of(rot):
    """Heading of the x axis of ``rot`` projected onto the horizontal plane."""
    return float(np.arctan2(rot[1, 0], rot[0, 0]))


def euler_zyx(rot):
    """(roll, pitch, yaw) of a ZYX rotation, for logging."""
    pitch = float(np.arcsin(np.clip(-rot[2, 0], -1.0, 1.0)))
    roll = float(np.arctan2(rot[2, 1], rot[2, 2]))
    yaw = float(np.arctan2(rot[1, 0], rot[0, 0]))
    return roll, pitch, yaw


def axis_angle(axis, angle):
    """Rodrigues rotation about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=float)
    return K.rodrigues(axis / np.sqrt(axis @ axis), float(angle))


def rotation_angle(r_a, r_b):
    """Geodesic angle between two rotations."""
    m = r_a.T @ r_b
    s = 0.5 * np.linalg.norm([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    c = 0.5 * (np.trace(m) - 1.0)
    return float(np.arctan2(s, c))


def wrap_angle(a):
    return float((a + np.pi) % (2.0 * np.pi) - np.pi)


def exp_so3(phi):
    """Rotation exp(skew(phi)); exact for any angle."""
    phi = np.asarray(phi, dtype=float)
    angle = float(np.sqrt(phi @ phi))
    if angle < 1e-12:
        return np.eye(3) + skew(phi)
    return axis_angle(phi, angle)
