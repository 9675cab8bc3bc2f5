"""Independent forward-kinematics oracle.

Composes each joint as a product of separately coded elementary transforms,
Rot_x(alpha) @ Trans_x(a) @ Rot_z(theta) @ Trans_z(d), and extracts the
orientation with scipy. Shares no code with the production FK path.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from .chain import DHChain


def _rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]], dtype=np.float64)


def _rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=np.float64)


def _trans(x: float, y: float, z: float) -> np.ndarray:
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


def _rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s, 0], [0, 1, 0, 0], [-s, 0, c, 0], [0, 0, 0, 1]], dtype=np.float64)


def fk_reference(chain: DHChain, xi) -> tuple[np.ndarray, np.ndarray]:
    """(position, quaternion wxyz) from elementary-transform composition."""
    xi = np.asarray(xi, dtype=np.float64)
    th0, d, alpha, a = chain.effective()
    ex, ey, ez = chain.base_euler
    T = _trans(*chain.base_pos) @ _rot_z(ez) @ _rot_y(ey) @ _rot_x(ex)
    for i in range(chain.n_joints):
        theta = th0[i] + xi[i]
        T = T @ _rot_x(alpha[i]) @ _trans(a[i], 0, 0) @ _rot_z(theta) @ _trans(0, 0, d[i])
    quat_xyzw = Rotation.from_matrix(T[:3, :3]).as_quat()
    quat = np.array([quat_xyzw[3], quat_xyzw[0], quat_xyzw[1], quat_xyzw[2]])
    return T[:3, 3].copy(), quat
