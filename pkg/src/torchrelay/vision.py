"""Synthetic marker camera and EPnP pose estimation.

The camera returns labelled marker correspondences directly (the reflective
markers image as isolated bright blobs, so segmentation is not simulated).
Camera optical frame: x right, y down, z along the optical axis.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .spatial import rot_y, rot_yaw

# optical axes expressed in a forward-right-down frame
_R_OPT = np.array([[0.0, 0.0, 1.0],
                   [1.0, 0.0, 0.0],
                   [0.0, 1.0, 0.0]])


class TargetNotVisible(RuntimeError):
    pass


class InsufficientPoints(ValueError):
    pass


class DegenerateConfiguration(ValueError):
    pass


def mount_rotation(phi_c, theta_c):
    """R_BC for a camera yawed by ``theta_c`` and depressed by ``phi_c``.

    ``phi_c`` is measured positive toward +z_B (down), so the default -30 deg
    tilts the optical axis 30 deg upward.
    """
    return rot_yaw(theta_c) @ rot_y(-phi_c) @ _R_OPT


@dataclass
class CameraModel:
    fx: float = 1000.0
    fy: float = 1000.0
    cx: float = 640.0
    cy: float = 512.0
    width: int = 1280
    height: int = 1024
    R_BC: np.ndarray = field(default_factory=lambda: mount_rotation(np.deg2rad(-30.0), np.deg2rad(-60.0)))
    p_BC: np.ndarray = field(default_factory=lambda: np.array([0.50, 0.60, 0.20]))
    pixel_sigma: float = 1.0
    min_depth: float = 0.05

    def __post_init__(self):
        self.R_BC = np.asarray(self.R_BC, dtype=float)
        self.p_BC = np.asarray(self.p_BC, dtype=float)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if np.abs(self.R_BC.T @ self.R_BC - np.eye(3)).max() > 1e-9:
            raise ValueError("camera mount rotation is not orthonormal")

    @classmethod
    def from_mount(cls, phi_c, theta_c, p_BC, **kwargs):
        return cls(R_BC=mount_rotation(phi_c, theta_c), p_BC=np.asarray(p_BC, float), **kwargs)

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project_camera_points(self, pc):
        pc = np.atleast_2d(pc)
        return np.column_stack([self.fx * pc[:, 0] / pc[:, 2] + self.cx, self.fy * pc[:, 1] / pc[:, 2] + self.cy])


def default_markers():
    """Eight markers on a 0.16 x 0.16 x 0.12 m block around the torch tip (target frame, z down)."""
    corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
    return corners * np.array([0.08, 0.08, 0.06]) + np.array([0.0, 0.0, 0.05])


@dataclass
class MarkerSet:
    positions: np.ndarray = field(default_factory=default_markers)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        n = len(self.positions)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3 or n < 4:
            raise ValueError("need at least 4 markers")
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        dist = np.linalg.norm(diff, axis=-1) + np.eye(n)
        if dist.min() <= 0.01:
            raise ValueError("markers closer than 1 cm")

    @property
    def non_coplanar(self):
        centered = self.positions - self.positions.mean(axis=0)
        s = np.linalg.svd(centered, compute_uv=False)
        return bool(s[-1] > 1e-6 * s[0])

    def __len__(self):
        return len(self.positions)


class Projection(NamedTuple):
    uv: np.ndarray       # (k, 2) pixels
    index: np.ndarray    # (k,) marker indices
    points_cam: np.ndarray


class PnPResult(NamedTuple):
    R: np.ndarray  # R_CT
    t: np.ndarray  # target origin in C
    rms: float
    case: int


@dataclass
class TargetObservation:
    p_t_body: np.ndarray
    psi_t_body: float
    timestamp: float
    valid: bool
    rms: float = float("nan")
    R_BT: np.ndarray = None


def invalid_observation(t):
    return TargetObservation(np.full(3, np.nan), float("nan"), t, False)


def project_markers(target_pos, R_IT, quad_state, camera, markers, rng=None, sigma=None, swap_prob=0.0):
    """Pinhole projection I -> B -> C of the markers; off-image points are dropped."""
    pts = markers.positions if isinstance(markers, MarkerSet) else np.asarray(markers, float)
    pw = np.asarray(target_pos, float) + pts @ np.asarray(R_IT, float).T
    pb = (pw - quad_state.p) @ quad_state.R
    pc = (pb - camera.p_BC) @ camera.R_BC
    front = pc[:, 2] > camera.min_depth
    uv = np.full((len(pts), 2), np.nan)
    uv[front] = camera.project_camera_points(pc[front])
    sigma = camera.pixel_sigma if sigma is None else sigma
    if rng is not None and sigma > 0.0:
        uv = uv + rng.normal(0.0, sigma, size=uv.shape)
    inside = front & (uv[:, 0] >= 0.0) & (uv[:, 0] < camera.width) & (uv[:, 1] >= 0.0) & (uv[:, 1] < camera.height)
    idx = np.flatnonzero(inside)
    if len(idx) < 4:
        raise TargetNotVisible(f"only {len(idx)} markers in view")
    uv = uv[idx]
    if rng is not None and swap_prob > 0.0 and rng.random() < swap_prob:
        i, j = rng.choice(len(idx), size=2, replace=False)
        uv[[i, j]] = uv[[j, i]]
    return Projection(uv, idx, pc[idx])


# --------------------------------------------------------------------------
# EPnP
# --------------------------------------------------------------------------
def _control_points(pw):
    c0 = pw.mean(axis=0)
    centered = pw - c0
    evals, evecs = np.linalg.eigh(centered.T @ centered / len(pw))
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    planar = evals[2] <= 1e-10 * max(evals[0], 1e-300)
    if evals[1] <= 1e-10 * max(evals[0], 1e-300):
        raise DegenerateConfiguration("markers are collinear")
    k = 2 if planar else 3
    ctrl = [c0] + [c0 + np.sqrt(evals[j]) * evecs[:, j] for j in range(k)]
    return np.array(ctrl), planar


def _barycentric(pw, ctrl):
    basis = (ctrl[1:] - ctrl[0]).T  # 3 x k
    coeffs = np.linalg.lstsq(basis, (pw - ctrl[0]).T, rcond=None)[0].T
    return np.column_stack([1.0 - coeffs.sum(axis=1), coeffs])


def _build_m(alphas, uv, camera):
    n, k = alphas.shape
    m = np.zeros((2 * n, 3 * k))
    for j in range(k):
        a = alphas[:, j]
        m[0::2, 3 * j] = a * camera.fx
        m[0::2, 3 * j + 2] = a * (camera.cx - uv[:, 0])
        m[1::2, 3 * j + 1] = a * camera.fy
        m[1::2, 3 * j + 2] = a * (camera.cy - uv[:, 1])
    return m


def _pairs(k):
    return [(a, b) for a in range(k) for b in range(a + 1, k)]


def _products(n):
    return [(a, b) for a in range(n) for b in range(a, n)]


def _linearized_betas(kernel, ctrl, n_vec):
    """Initial betas from the lifted distance equations (EPnP cases N = 1..3)."""
    k = len(ctrl)
    pairs = _pairs(k)
    prods = _products(n_vec)
    L = np.zeros((len(pairs), len(prods)))
    rho = np.zeros(len(pairs))
    for r, (a, b) in enumerate(pairs):
        dv = [kernel[3 * a:3 * a + 3, i] - kernel[3 * b:3 * b + 3, i] for i in range(n_vec)]
        for c, (i, j) in enumerate(prods):
            L[r, c] = (1.0 if i == j else 2.0) * dv[i] @ dv[j]
        rho[r] = np.sum((ctrl[a] - ctrl[b]) ** 2)
    if len(prods) > len(pairs):
        return None
    b = np.linalg.lstsq(L, rho, rcond=None)[0]
    lookup = {p: b[c] for c, p in enumerate(prods)}
    betas = np.zeros(n_vec)
    betas[0] = np.sqrt(abs(lookup[(0, 0)]))
    for i in range(1, n_vec):
        betas[i] = np.sqrt(abs(lookup[(i, i)])) * np.sign(lookup[(0, i)]) * (1.0 if betas[0] >= 0 else -1.0)
    return betas


def _gauss_newton(kernel, ctrl, betas, iters=10):
    k = len(ctrl)
    pairs = _pairs(k)
    n = len(betas)
    rho = np.array([np.sum((ctrl[a] - ctrl[b]) ** 2) for a, b in pairs])
    dv = np.array([[kernel[3 * a:3 * a + 3, i] - kernel[3 * b:3 * b + 3, i] for i in range(n)] for a, b in pairs])
    betas = betas.copy()
    for _ in range(iters):
        diff = np.einsum("i,pij->pj", betas, dv)
        res = np.einsum("pj,pj->p", diff, diff) - rho
        jac = 2.0 * np.einsum("pj,pij->pi", diff, dv)
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
        betas += step
        if np.linalg.norm(step) < 1e-14 * max(1.0, np.linalg.norm(betas)):
            break
    return betas


def _procrustes(pw, pc):
    cw = pw.mean(axis=0)
    cc = pc.mean(axis=0)
    h = (pc - cc).T @ (pw - cw)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt))
    rot = u @ np.diag([1.0, 1.0, d]) @ vt
    return rot, cc - rot @ cw


def _pose_from_betas(betas, kernel, alphas, pw):
    k = alphas.shape[1]
    ccs = (kernel[:, :len(betas)] @ betas).reshape(k, 3)
    pcs = alphas @ ccs
    if np.mean(pcs[:, 2]) < 0.0:
        pcs = -pcs
    return _procrustes(pw, pcs)


def reprojection_rms(R, t, pw, uv, camera):
    pc = pw @ R.T + t
    if np.any(pc[:, 2] <= 0.0):
        return float("inf")
    return float(np.sqrt(np.mean(np.sum((camera.project_camera_points(pc) - uv) ** 2, axis=1))))


def estimate_pose_epnp(points3d, points2d, camera):
    """Pose (R_CT, t) of the marker frame in the camera frame from >= 4 correspondences."""
    pw = np.asarray(points3d.positions if isinstance(points3d, MarkerSet) else points3d, dtype=float)
    uv = np.asarray(points2d, dtype=float)
    if len(pw) < 4 or len(pw) != len(uv):
        raise InsufficientPoints("EPnP needs at least 4 matched points")
    ctrl, planar = _control_points(pw)
    alphas = _barycentric(pw, ctrl)
    m = _build_m(alphas, uv, camera)
    _, evecs = np.linalg.eigh(m.T @ m)
    kernel = evecs  # ascending eigenvalues: column 0 is the best null vector
    n_max = 3 if not planar else 2
    n_gn = 4 if not planar else 2
    best = None
    for n_vec in range(1, n_max + 1):
        betas = _linearized_betas(kernel, ctrl, n_vec)
        if betas is None:
            continue
        full = np.zeros(n_gn)
        full[:n_vec] = betas
        full = _gauss_newton(kernel, ctrl, full)
        R, t = _pose_from_betas(full, kernel, alphas, pw)
        err = reprojection_rms(R, t, pw, uv, camera)
        if best is None or err < best.rms:
            best = PnPResult(R, t, err, n_vec)
    return best


def observation_in_body(pose_cam, camera, timestamp=0.0, rms_threshold=3.0):
    """Target position and heading in B from a camera-frame pose."""
    p_b = camera.p_BC + camera.R_BC @ pose_cam.t
    R_BT = camera.R_BC @ pose_cam.R
    psi = float(np.arctan2(R_BT[1, 0], R_BT[0, 0]))
    valid = bool(np.isfinite(pose_cam.rms) and pose_cam.rms < rms_threshold)
    return TargetObservation(p_b, psi, timestamp, valid, float(pose_cam.rms), R_BT)
