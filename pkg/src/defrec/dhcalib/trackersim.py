"""Synthetic optical-tracker data for calibration experiments.

A "true" arm (manufacturer table plus hidden offsets and base pose) produces
end-effector poses; Gaussian position noise and small axis-angle rotation
noise stand in for the tracking system. Three collection modes mirror the
experiment variants: static end-points, dynamic sampling along trajectories
with lagged joint readings, and single-joint sweeps.
"""
from __future__ import annotations

import numpy as np

from ..util import rng_for
from .calibrate import CalibData
from .chain import DHChain, fk_batch, quat_multiply

DEFAULT_SAMPLES = 500
TRACKER_SIGMA_POS = 0.0004  # ~0.4 mm
TRACKER_SIGMA_ROT = 0.0003  # radians
DYNAMIC_LAG = 0.9  # first-order low-pass coefficient for joint readings


def default_arm() -> DHChain:
    """A 7-DOF serial arm in the modified DH convention (xArm7-like geometry)."""
    return DHChain(
        theta=[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        d=[0.267, 0.0, 0.293, 0.0, 0.3425, 0.0, 0.097],
        alpha=[0.0, -np.pi / 2, np.pi / 2, np.pi / 2, np.pi / 2, np.pi / 2, -np.pi / 2],
        a=[0.0, 0.0, 0.0, 0.0525, 0.0775, 0.0, 0.076],
    )


def perturbed_truth(chain: DHChain, rng: np.random.Generator, dtheta: float = 0.02,
                    dlength: float = 0.003, base_pos: float = 0.005, base_rot: float = 0.008) -> DHChain:
    """Hidden ground truth: random offsets within the stated bounds."""
    n = chain.n_joints
    delta = np.zeros((n, 4))
    delta[:, 0] = rng.uniform(-dtheta, dtheta, n)
    delta[:, 1] = rng.uniform(-dlength, dlength, n)
    delta[:, 2] = rng.uniform(-dtheta, dtheta, n)
    delta[:, 3] = rng.uniform(-dlength, dlength, n)
    return chain.with_params(
        delta=delta,
        base_pos=rng.uniform(-base_pos, base_pos, 3),
        base_euler=rng.uniform(-base_rot, base_rot, 3),
    )


def _joint_configs(rng, n_joints: int, count: int, limits) -> np.ndarray:
    lo, hi = limits
    return rng.uniform(lo, hi, size=(count, n_joints))


def generate_tracker_data(true_chain: DHChain, n_samples: int = DEFAULT_SAMPLES,
                          sigma_pos: float = TRACKER_SIGMA_POS, sigma_rot: float = TRACKER_SIGMA_ROT,
                          mode: str = "static", seed: int = 0,
                          joint_limits: tuple = (-2.6, 2.6)) -> CalibData:
    rng = rng_for(seed, "tracker", mode)
    n = true_chain.n_joints

    if mode == "static":
        xi_true = _joint_configs(rng, n, n_samples, joint_limits)
        xi_recorded = xi_true
    elif mode == "dynamic":
        waypoints = _joint_configs(rng, n, max(2, n_samples // 12), joint_limits)
        path = []
        for a, b in zip(waypoints[:-1], waypoints[1:]):
            steps = np.linspace(0.0, 1.0, 13)[:-1]
            path.extend(a + s * (b - a) for s in steps)
        path.append(waypoints[-1])
        xi_true = np.array(path[:n_samples])
        while len(xi_true) < n_samples:  # short path: repeat the tail
            xi_true = np.concatenate([xi_true, xi_true[: n_samples - len(xi_true)]])
        # encoder readings lag the true motion (first-order low-pass)
        xi_recorded = np.empty_like(xi_true)
        xi_recorded[0] = xi_true[0]
        for t in range(1, len(xi_true)):
            xi_recorded[t] = xi_recorded[t - 1] + DYNAMIC_LAG * (xi_true[t] - xi_recorded[t - 1])
    elif mode == "single-joint":
        rows = []
        per = max(1, n_samples // n)
        for j in range(n):
            sweep = np.linspace(joint_limits[0], joint_limits[1], per)
            block = np.zeros((per, n))
            block[:, j] = sweep
            rows.append(block)
        xi_true = np.concatenate(rows)[:n_samples]
        while len(xi_true) < n_samples:
            xi_true = np.concatenate([xi_true, xi_true[: n_samples - len(xi_true)]])
        xi_recorded = xi_true
    else:
        raise ValueError(f"unknown tracker mode {mode!r}")

    p, q = fk_batch(true_chain, xi_true)
    if sigma_pos > 0:
        p = p + rng.normal(0.0, sigma_pos, size=p.shape)
    if sigma_rot > 0:
        axis = rng.normal(size=(len(q), 3))
        axis /= np.linalg.norm(axis, axis=1, keepdims=True)
        angle = rng.normal(0.0, sigma_rot, size=len(q))
        noise = np.concatenate([np.cos(angle / 2)[:, None], np.sin(angle / 2)[:, None] * axis], axis=1)
        q = quat_multiply(noise, q)
        q /= np.linalg.norm(q, axis=1, keepdims=True)
    return CalibData(p=p, q=q, xi=xi_recorded,
                     meta={"mode": mode, "seed": seed, "sigma_pos": sigma_pos, "sigma_rot": sigma_rot})
