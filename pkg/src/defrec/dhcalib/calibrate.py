"""Gradient-based DH calibration.

The combined loss L = L_pos + lambda * L_rot is minimized over all per-joint
offsets and the base pose with mini-batch Adam. Gradients are analytic:
prefix/suffix products expose dT_EE/dparam = Pre_i @ dT_i @ Suf_i, the position
term differentiates the translation column, and the rotation term uses the
trace identity  <q_t, q_f>^2 = (1 + tr(R_t^T R_f)) / 4  so no derivative of
the quaternion extraction is needed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CalibrationDivergedError
from ..util import rng_for
from .chain import DHChain, fk_batch, joint_matrices, quat_distance, quat_to_matrix

LAMBDA_ROT = 100.0
_EPS = 1e-12


@dataclass
class CalibData:
    """Tracked end-effector poses and the corresponding joint readings."""

    p: np.ndarray  # (S, 3) tracked positions, meters
    q: np.ndarray  # (S, 4) tracked unit quaternions, w-first
    xi: np.ndarray  # (S, n) joint values, radians
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.p)

    def subset(self, idx) -> "CalibData":
        return CalibData(self.p[idx], self.q[idx], self.xi[idx], self.meta)

    def save_csv(self, path) -> None:
        n = self.xi.shape[1]
        header = "px,py,pz,qw,qx,qy,qz," + ",".join(f"xi{i + 1}" for i in range(n))
        rows = np.concatenate([self.p, self.q, self.xi], axis=1)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    @staticmethod
    def load_csv(path) -> "CalibData":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline()
            rows = np.array([[float(x) for x in line.split(",")] for line in fh if line.strip()])
        n = rows.shape[1] - 7
        return CalibData(rows[:, :3], rows[:, 3:7], rows[:, 7 : 7 + n])


def position_errors(chain: DHChain, data: CalibData) -> np.ndarray:
    p_fwd, _ = fk_batch(chain, data.xi)
    return np.linalg.norm(data.p - p_fwd, axis=1)


def calib_loss(chain: DHChain, data: CalibData, lambda_rot: float = LAMBDA_ROT):
    """(L, L_pos, L_rot): mean position 2-norm plus weighted mean quaternion distance."""
    p_fwd, q_fwd = fk_batch(chain, data.xi)
    l_pos = float(np.linalg.norm(data.p - p_fwd, axis=1).mean())
    l_rot = float(quat_distance(data.q, q_fwd).mean())
    return l_pos + lambda_rot * l_rot, l_pos, l_rot


# ---------------------------------------------------------------------------
# analytic gradients


def _dh_param_derivatives(chain: DHChain, xi: np.ndarray):
    """d(T_i)/d(theta, d, alpha, a): four (S, n, 4, 4) stacks."""
    xi = np.atleast_2d(xi)
    th0, d, alpha, a = chain.effective()
    theta = xi + th0[None, :]
    S, n = theta.shape
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha)[None, :], np.sin(alpha)[None, :]
    dv = d[None, :]

    dT = np.zeros((4, S, n, 4, 4))
    # d/dtheta
    dT[0, :, :, 0, 0] = -st
    dT[0, :, :, 0, 1] = -ct
    dT[0, :, :, 1, 0] = ct * ca
    dT[0, :, :, 1, 1] = -st * ca
    dT[0, :, :, 2, 0] = ct * sa
    dT[0, :, :, 2, 1] = -st * sa
    # d/dd
    dT[1, :, :, 1, 3] = -sa
    dT[1, :, :, 2, 3] = ca
    # d/dalpha
    dT[2, :, :, 1, 0] = -st * sa
    dT[2, :, :, 1, 1] = -ct * sa
    dT[2, :, :, 1, 2] = -ca
    dT[2, :, :, 1, 3] = -dv * ca
    dT[2, :, :, 2, 0] = st * ca
    dT[2, :, :, 2, 1] = ct * ca
    dT[2, :, :, 2, 2] = -sa
    dT[2, :, :, 2, 3] = -dv * sa
    # d/da
    dT[3, :, :, 0, 3] = 1.0
    return dT


def _base_derivatives(chain: DHChain):
    """d(T_base)/d(px, py, pz, ex, ey, ez): six (4, 4) matrices."""
    ex, ey, ez = chain.base_euler
    cx, sx = np.cos(ex), np.sin(ex)
    cy, sy = np.cos(ey), np.sin(ey)
    cz, sz = np.cos(ez), np.sin(ez)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    drx = np.array([[0, 0, 0], [0, -sx, -cx], [0, cx, -sx]])
    dry = np.array([[-sy, 0, cy], [0, 0, 0], [-cy, 0, -sy]])
    drz = np.array([[-sz, -cz, 0], [cz, -sz, 0], [0, 0, 0]])
    out = []
    for k in range(3):
        D = np.zeros((4, 4))
        D[k, 3] = 1.0
        out.append(D)
    for dR in (rz @ ry @ drx, rz @ dry @ rx, drz @ ry @ rx):
        D = np.zeros((4, 4))
        D[:3, :3] = dR
        out.append(D)
    return out


def loss_and_grad(chain: DHChain, data: CalibData, lambda_rot: float = LAMBDA_ROT):
    """Combined loss plus its gradient w.r.t. [delta(n,4) row-major, base_pos, base_euler]."""
    S = len(data)
    n = chain.n_joints
    M = joint_matrices(chain, data.xi)
    T_base = chain.base_matrix()

    pre = np.empty((n + 1, S, 4, 4))
    pre[0] = np.broadcast_to(T_base, (S, 4, 4))
    for i in range(n):
        pre[i + 1] = pre[i] @ M[:, i]
    suf = np.empty((n + 1, S, 4, 4))
    suf[n] = np.broadcast_to(np.eye(4), (S, 4, 4))
    for i in range(n - 1, -1, -1):
        suf[i] = M[:, i] @ suf[i + 1]
    T_ee = pre[n]

    p_fwd = T_ee[:, :3, 3]
    R_fwd = T_ee[:, :3, :3]

    # position term
    diff = p_fwd - data.p
    norms = np.linalg.norm(diff, axis=1)
    l_pos = float(norms.mean())
    safe = np.maximum(norms, _EPS)
    G = np.zeros((S, 4, 4))
    G[:, :3, 3] = np.where(norms[:, None] > _EPS, diff / safe[:, None], 0.0) / S

    # rotation term via the trace identity
    R_t = quat_to_matrix(data.q)
    tr = np.einsum("sij,sij->s", R_t, R_fwd)
    dot_abs = np.sqrt(np.maximum(1.0 + tr, 0.0)) / 2.0  # |<q_t, q_f>|
    rot_dist = np.sqrt(np.maximum(2.0 - 2.0 * dot_abs, 0.0))
    l_rot = float(rot_dist.mean())
    # sqrt(2 - 2|u|) has unbounded slope at the optimum; below ~1e-6 the
    # remaining distance is float roundoff, so treat it as converged
    denom = 8.0 * dot_abs * np.maximum(rot_dist, _EPS)
    coeff = np.where((rot_dist > 1e-6) & (dot_abs > 1e-9), -lambda_rot / (S * denom), 0.0)
    G[:, :3, :3] += coeff[:, None, None] * R_t

    # chain-rule through the products
    grad = np.zeros(4 * n + 6)
    dT = _dh_param_derivatives(chain, data.xi)
    for i in range(n):
        right = suf[i + 1]
        left = pre[i]
        for p_idx in range(4):
            full = left @ dT[p_idx, :, i] @ right
            grad[4 * i + p_idx] = np.einsum("sij,sij->", G, full)
    for k, dB in enumerate(_base_derivatives(chain)):
        full = dB[None] @ suf[0]
        grad[4 * n + k] = np.einsum("sij,sij->", G, full)

    return l_pos + lambda_rot * l_rot, l_pos, l_rot, grad


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class CalibConfig:
    lr: float = 1e-3
    epochs: int = 2000
    batch_size: int = 64
    seed: int = 0
    lambda_rot: float = LAMBDA_ROT
    divergence_factor: float = 5.0
    lr_decay: float = 0.01  # final lr fraction (cosine schedule)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CalibResult:
    chain: DHChain
    mode: str
    report: dict
    history: list


def _param_vector(chain: DHChain) -> np.ndarray:
    return np.concatenate([chain.delta.reshape(-1), chain.base_pos, chain.base_euler])


def _chain_from_vector(chain: DHChain, vec: np.ndarray) -> DHChain:
    n = chain.n_joints
    return chain.with_params(
        delta=vec[: 4 * n].reshape(n, 4),
        base_pos=vec[4 * n : 4 * n + 3],
        base_euler=vec[4 * n + 3 :],
    )


def _mode_mask(chain: DHChain, mode: str) -> np.ndarray:
    n = chain.n_joints
    mask = np.ones(4 * n + 6, dtype=bool)
    if mode == "full":
        return mask
    if mode == "delta-theta":
        mask[:] = False
        mask[0 : 4 * n : 4] = True  # only the theta offsets
        return mask
    if mode == "fixed-base":
        mask[4 * n :] = False
        return mask
    raise ValueError(f"unknown calibration mode {mode!r}")


def calibrate(chain: DHChain, data: CalibData, config: CalibConfig | None = None,
              mode: str = "full", fixed_base: tuple | None = None) -> CalibResult:
    """Optimize DH offsets (and base pose unless frozen) with mini-batch Adam.

    mode "delta-theta" learns only the theta offsets; "fixed-base" freezes the
    base pose at `fixed_base` (position, euler) or at the chain's current one.
    """
    config = config or CalibConfig()
    if mode == "fixed-base" and fixed_base is not None:
        chain = chain.with_params(base_pos=np.asarray(fixed_base[0], dtype=np.float64),
                                  base_euler=np.asarray(fixed_base[1], dtype=np.float64))
    mask = _mode_mask(chain, mode)
    vec = _param_vector(chain)
    errors_before = position_errors(chain, data)
    loss0, _, _ = calib_loss(chain, data, config.lambda_rot)

    rng = rng_for(config.seed, "dh-calibrate")
    m = np.zeros_like(vec)
    v = np.zeros_like(vec)
    step = 0
    history = []
    S = len(data)
    for epoch in range(1, config.epochs + 1):
        lr = config.lr * (config.lr_decay + (1 - config.lr_decay) * 0.5 * (1 + np.cos(np.pi * (epoch - 1) / config.epochs)))
        perm = rng.permutation(S)
        for start in range(0, S, config.batch_size):
            batch = data.subset(perm[start : start + config.batch_size])
            current = _chain_from_vector(chain, vec)
            _, _, _, grad = loss_and_grad(current, batch, config.lambda_rot)
            grad[~mask] = 0.0
            step += 1
            m = 0.9 * m + 0.1 * grad
            v = 0.999 * v + 0.001 * grad**2
            mhat = m / (1 - 0.9**step)
            vhat = v / (1 - 0.999**step)
            vec = vec - lr * mhat / (np.sqrt(vhat) + 1e-8)
        if epoch % 25 == 0 or epoch == config.epochs:
            total, l_pos, l_rot = calib_loss(_chain_from_vector(chain, vec), data, config.lambda_rot)
            history.append((epoch, total, l_pos, l_rot))
            if total > config.divergence_factor * loss0 + 1e-9:
                raise CalibrationDivergedError(
                    f"loss {total:.4g} exceeded {config.divergence_factor}x initial {loss0:.4g} "
                    f"at epoch {epoch}; config={config.to_dict()}, mode={mode}"
                )

    final = _chain_from_vector(chain, vec)
    errors_after = position_errors(final, data)
    report = {
        "mode": mode,
        "n_samples": S,
        "mean_error_before_mm": float(errors_before.mean() * 1000),
        "max_error_before_mm": float(errors_before.max() * 1000),
        "mean_error_after_mm": float(errors_after.mean() * 1000),
        "max_error_after_mm": float(errors_after.max() * 1000),
        "final_loss": history[-1][1] if history else None,
    }
    return CalibResult(chain=final, mode=mode, report=report, history=history)
