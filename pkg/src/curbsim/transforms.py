"""Rigid-body transform algebra on SE(3).

Euler convention throughout: intrinsic Z-Y-X (yaw `psi_z`, pitch
`theta_y`, roll `phi_x`). Quaternions are (w, x, y, z), unit norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ORTHONORMALITY_TOL = 1e-9


def _orthonormalize(rotation: np.ndarray) -> np.ndarray:
    # Nearest orthonormal matrix via SVD; sign fixed to det = +1.
    u, _, vt = np.linalg.svd(rotation)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def _rotation_drift(rotation: np.ndarray) -> float:
    return float(np.max(np.abs(rotation.T @ rotation - np.eye(3))))


@dataclass(frozen=True)
class Transform3:
    """Rotation (3x3 orthonormal, det +1) plus translation (meters)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        trans = np.asarray(self.translation, dtype=float).reshape(3)
        if _rotation_drift(rot) > ORTHONORMALITY_TOL:
            rot = _orthonormalize(rot)
        if abs(np.linalg.det(rot) - 1.0) > ORTHONORMALITY_TOL:
            raise ValueError("rotation must have determinant +1")
        rot.flags.writeable = False
        trans.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, point: np.ndarray) -> np.ndarray:
        """Map a 3-point from this frame into the parent frame."""
        return self.rotation @ np.asarray(point, dtype=float) + self.translation


def identity() -> Transform3:
    return Transform3(np.eye(3), np.zeros(3))


def rot_z(angle: float, translation=(0.0, 0.0, 0.0)) -> Transform3:
    c, s = math.cos(angle), math.sin(angle)
    return Transform3(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), np.asarray(translation, dtype=float))


def from_planar_pose(x: float, y: float, psi: float, z: float = 0.0) -> Transform3:
    return rot_z(psi, (x, y, z))


def compose(a: Transform3, b: Transform3) -> Transform3:
    """a . b as homogeneous transforms (b expressed in a's frame)."""
    rot = a.rotation @ b.rotation
    if _rotation_drift(rot) > ORTHONORMALITY_TOL:
        rot = _orthonormalize(rot)
    return Transform3(rot, a.rotation @ b.translation + a.translation)


def invert(t: Transform3) -> Transform3:
    rt = t.rotation.T
    return Transform3(rt, -(rt @ t.translation))


def euler_to_quaternion(phi_x: float, theta_y: float, psi_z: float) -> np.ndarray:
    """Intrinsic ZYX Euler angles to unit quaternion (w, x, y, z)."""
    cr, sr = math.cos(phi_x / 2.0), math.sin(phi_x / 2.0)
    cp, sp = math.cos(theta_y / 2.0), math.sin(theta_y / 2.0)
    cy, sy = math.cos(psi_z / 2.0), math.sin(psi_z / 2.0)
    return np.array(
        [
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        ]
    )


def quaternion_to_euler(q: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_to_quaternion` (modulo 2*pi and quaternion sign)."""
    w, x, y, z = (float(v) for v in q)
    phi = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    sin_theta = 2.0 * (w * y - z * x)
    sin_theta = max(-1.0, min(1.0, sin_theta))
    theta = math.asin(sin_theta)
    psi = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return phi, theta, psi


def rotation_to_euler(rotation: np.ndarray) -> tuple[float, float, float]:
    """Rotation matrix to intrinsic ZYX Euler angles."""
    r = np.asarray(rotation, dtype=float)
    theta = math.asin(max(-1.0, min(1.0, -r[2, 0])))
    if abs(r[2, 0]) < 1.0 - 1e-12:
        phi = math.atan2(r[2, 1], r[2, 2])
        psi = math.atan2(r[1, 0], r[0, 0])
    else:
        # Gimbal lock: pitch at +-90 deg, roll folded into yaw.
        phi = 0.0
        psi = math.atan2(-r[0, 1], r[1, 1])
    return phi, theta, psi


def euler_to_rotation(phi_x: float, theta_y: float, psi_z: float) -> np.ndarray:
    cz, sz = math.cos(psi_z), math.sin(psi_z)
    cy, sy = math.cos(theta_y), math.sin(theta_y)
    cx, sx = math.cos(phi_x), math.sin(phi_x)
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    return rz @ ry @ rx
