"""Serial-arm forward kinematics from DH parameters (modified convention).

Each joint contributes

    T_i = [[ct, -st, 0, a], [st*ca, ct*ca, -sa, -d*sa], [st*sa, ct*sa, ca, d*ca], [0,0,0,1]]

with t = joint value + manufacturer theta + learned offset. The base pose is a
position plus extrinsic (fixed-axis) XYZ Euler angles.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

PARAM_NAMES = ("theta", "d", "alpha", "a")


@dataclass(frozen=True)
class DHChain:
    theta: np.ndarray  # manufacturer values, (n,)
    d: np.ndarray
    alpha: np.ndarray
    a: np.ndarray
    delta: np.ndarray = None  # learned offsets, (n, 4) in PARAM_NAMES order
    base_pos: np.ndarray = None
    base_euler: np.ndarray = None  # extrinsic XYZ (roll about x, then y, then z)

    def __post_init__(self):
        for name in ("theta", "d", "alpha", "a"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = len(self.theta)
        object.__setattr__(self, "delta",
                           np.zeros((n, 4)) if self.delta is None else np.asarray(self.delta, dtype=np.float64).reshape(n, 4).copy())
        object.__setattr__(self, "base_pos",
                           np.zeros(3) if self.base_pos is None else np.asarray(self.base_pos, dtype=np.float64).copy())
        object.__setattr__(self, "base_euler",
                           np.zeros(3) if self.base_euler is None else np.asarray(self.base_euler, dtype=np.float64).copy())

    @property
    def n_joints(self) -> int:
        return len(self.theta)

    def effective(self):
        """(theta, d, alpha, a) with offsets applied; theta still lacks the joint value."""
        return (
            self.theta + self.delta[:, 0],
            self.d + self.delta[:, 1],
            self.alpha + self.delta[:, 2],
            self.a + self.delta[:, 3],
        )

    def with_params(self, delta=None, base_pos=None, base_euler=None) -> "DHChain":
        return replace(
            self,
            delta=self.delta if delta is None else delta,
            base_pos=self.base_pos if base_pos is None else base_pos,
            base_euler=self.base_euler if base_euler is None else base_euler,
        )

    def base_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = euler_xyz_matrix(self.base_euler)
        T[:3, 3] = self.base_pos
        return T

    def to_dict(self) -> dict:
        return {
            "joints": [
                {"theta": float(t), "d": float(dd), "alpha": float(al), "a": float(aa)}
                for t, dd, al, aa in zip(self.theta, self.d, self.alpha, self.a)
            ],
            "delta": self.delta.tolist(),
            "base": {"position": self.base_pos.tolist(), "euler_xyz": self.base_euler.tolist()},
        }

    @staticmethod
    def from_dict(d: dict) -> "DHChain":
        joints = d["joints"]
        return DHChain(
            theta=[j["theta"] for j in joints],
            d=[j["d"] for j in joints],
            alpha=[j["alpha"] for j in joints],
            a=[j["a"] for j in joints],
            delta=np.asarray(d.get("delta")) if d.get("delta") is not None else None,
            base_pos=np.asarray(d["base"]["position"]) if "base" in d else None,
            base_euler=np.asarray(d["base"]["euler_xyz"]) if "base" in d else None,
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path) -> "DHChain":
        with open(path, "r", encoding="utf-8") as fh:
            return DHChain.from_dict(json.load(fh))


def euler_xyz_matrix(euler) -> np.ndarray:
    """Extrinsic XYZ: R = Rz(ez) @ Ry(ey) @ Rx(ex)."""
    ex, ey, ez = euler
    cx, sx = np.cos(ex), np.sin(ex)
    cy, sy = np.cos(ey), np.sin(ey)
    cz, sz = np.cos(ez), np.sin(ez)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def dh_matrix(theta: float, d: float, alpha: float, a: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st, 0.0, a],
            [st * ca, ct * ca, -sa, -d * sa],
            [st * sa, ct * sa, ca, d * ca],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def joint_matrices(chain: DHChain, xi: np.ndarray) -> np.ndarray:
    """Per-sample joint transforms, shape (S, n, 4, 4); theta = xi + theta_hat + dtheta."""
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    th0, d, alpha, a = chain.effective()
    theta = xi + th0[None, :]
    S, n = theta.shape
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    M = np.zeros((S, n, 4, 4))
    M[:, :, 0, 0] = ct
    M[:, :, 0, 1] = -st
    M[:, :, 0, 3] = a[None, :]
    M[:, :, 1, 0] = st * ca[None, :]
    M[:, :, 1, 1] = ct * ca[None, :]
    M[:, :, 1, 2] = -sa[None, :]
    M[:, :, 1, 3] = (-d * sa)[None, :]
    M[:, :, 2, 0] = st * sa[None, :]
    M[:, :, 2, 1] = ct * sa[None, :]
    M[:, :, 2, 2] = ca[None, :]
    M[:, :, 2, 3] = (d * ca)[None, :]
    M[:, :, 3, 3] = 1.0
    return M


def fk_batch(chain: DHChain, xi: np.ndarray):
    """End-effector (positions (S,3), unit quaternions (S,4) wxyz)."""
    M = joint_matrices(chain, xi)
    T = np.broadcast_to(chain.base_matrix(), (M.shape[0], 4, 4)).copy()
    for i in range(chain.n_joints):
        T = T @ M[:, i]
    return T[:, :3, 3].copy(), quat_from_matrix(T[:, :3, :3])


def fk(chain: DHChain, xi):
    """Single-configuration forward kinematics: (position, quaternion wxyz)."""
    p, q = fk_batch(chain, np.atleast_2d(xi))
    return p[0], q[0]


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Rotation matrices (..,3,3) to unit quaternions (..,4), w-first (Shepperd)."""
    R = np.asarray(R, dtype=np.float64)
    single = R.ndim == 2
    R = R.reshape(-1, 3, 3)
    n = len(R)
    q = np.empty((n, 4))
    tr = np.trace(R, axis1=1, axis2=2)
    diag = np.stack([R[:, 0, 0], R[:, 1, 1], R[:, 2, 2]], axis=1)
    choice = np.where(tr > diag.max(axis=1), 3, diag.argmax(axis=1))
    for c in range(4):
        idx = np.nonzero(choice == c)[0]
        if len(idx) == 0:
            continue
        r = R[idx]
        if c == 3:
            s = np.sqrt(1.0 + tr[idx]) * 2.0
            q[idx, 0] = 0.25 * s
            q[idx, 1] = (r[:, 2, 1] - r[:, 1, 2]) / s
            q[idx, 2] = (r[:, 0, 2] - r[:, 2, 0]) / s
            q[idx, 3] = (r[:, 1, 0] - r[:, 0, 1]) / s
        else:
            i, j, k = c, (c + 1) % 3, (c + 2) % 3
            s = np.sqrt(1.0 + r[:, i, i] - r[:, j, j] - r[:, k, k]) * 2.0
            q[idx, 0] = (r[:, k, j] - r[:, j, k]) / s
            q[idx, 1 + i] = 0.25 * s
            q[idx, 1 + j] = (r[:, j, i] + r[:, i, j]) / s
            q[idx, 1 + k] = (r[:, k, i] + r[:, i, k]) / s
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return q[0] if single else q


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternions (..,4) w-first to rotation matrices (..,3,3)."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - z * w)
    R[:, 0, 2] = 2 * (x * z + y * w)
    R[:, 1, 0] = 2 * (x * y + z * w)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - x * w)
    R[:, 2, 0] = 2 * (x * z - y * w)
    R[:, 2, 1] = 2 * (y * z + x * w)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R[0] if single else R


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product, w-first, broadcasting over leading dimensions."""
    q1 = np.atleast_2d(q1)
    q2 = np.atleast_2d(q2)
    w1, x1, y1, z1 = (q1[:, i] for i in range(4))
    w2, x2, y2, z2 = (q2[:, i] for i in range(4))
    out = np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=1,
    )
    return out[0] if out.shape[0] == 1 and np.asarray(q1).ndim == 1 else out


def quat_distance(q_a: np.ndarray, q_b: np.ndarray):
    """min(||q_a - q_b||, ||q_a + q_b||): sign-invariant quaternion metric."""
    q_a = np.asarray(q_a, dtype=np.float64)
    q_b = np.asarray(q_b, dtype=np.float64)
    single = q_a.ndim == 1
    q_a = np.atleast_2d(q_a)
    q_b = np.atleast_2d(q_b)
    d = np.minimum(np.linalg.norm(q_a - q_b, axis=1), np.linalg.norm(q_a + q_b, axis=1))
    return float(d[0]) if single else d
