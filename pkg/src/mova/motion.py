"""Constant-velocity azimuth motion model and its displacement statistics.

Angles are degrees on the whole public surface. The azimuth state is wrapped
to [0, 360); the signed displacement accumulated across steps is tracked
separately so that displacement statistics are wrap-free.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MotionParams:
    """Parameters of the constant-velocity model.

    sigma: std of the white angular acceleration noise (deg/s^2)
    delta_t: time step between frames (s)
    num_frames: number of steps T after the initial frame
    """

    sigma: float
    delta_t: float
    num_frames: int

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.delta_t <= 0:
            raise ValueError(f"delta_t must be > 0, got {self.delta_t}")
        if self.num_frames < 1:
            raise ValueError(f"num_frames must be >= 1, got {self.num_frames}")


@dataclass(frozen=True)
class CVState:
    """Azimuth (deg, wrapped to [0, 360)) and angular velocity (deg/s)."""

    theta: float
    theta_dot: float

    def __post_init__(self):
        if not 0.0 <= self.theta < 360.0:
            raise ValueError(f"theta must be in [0, 360), got {self.theta}")


@dataclass(frozen=True)
class Trajectory:
    """A sampled azimuth path theta_0 .. theta_T (wrapped degrees)."""

    thetas: np.ndarray
    delta_t: float

    def __post_init__(self):
        object.__setattr__(self, "thetas", np.asarray(self.thetas, dtype=np.float64))
        if self.thetas.ndim != 1 or len(self.thetas) < 2:
            raise ValueError("trajectory needs at least 2 azimuth samples")
        if np.any(self.thetas < 0) or np.any(self.thetas >= 360):
            raise ValueError("trajectory azimuths must be wrapped to [0, 360)")

    @property
    def num_frames(self) -> int:
        return len(self.thetas) - 1

    def __len__(self) -> int:
        return len(self.thetas)


def wrap_deg(theta) -> np.ndarray | float:
    """Wrap angle(s) into [0, 360)."""
    # double mod: np.mod(-eps, 360.0) rounds to exactly 360.0
    return np.mod(np.mod(theta, 360.0), 360.0)


def cv_step(state: CVState, params: MotionParams, noise_sample: float) -> CVState:
    """One transition of the constant-velocity model driven by noise_sample.

    The caller supplies the acceleration noise draw nu ~ N(0, sigma^2).
    The azimuth is wrapped; the velocity is not.
    """
    dt = params.delta_t
    theta = state.theta + dt * state.theta_dot + 0.5 * dt * dt * noise_sample
    theta_dot = state.theta_dot + dt * noise_sample
    return CVState(theta=float(wrap_deg(theta)), theta_dot=float(theta_dot))


def displacement_variance(params: MotionParams, t: int) -> float:
    """Variance (deg^2) of the unwrapped displacement after t steps from rest."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return params.delta_t**4 / 12.0 * (4.0 * t**3 - t) * params.sigma**2


def expected_abs_displacement(params: MotionParams, t: int) -> float:
    """Mean absolute unwrapped displacement (deg) after t steps from rest."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return params.delta_t**2 / np.sqrt(6.0 * np.pi) * np.sqrt(4.0 * t**3 - t) * params.sigma


def sigma_from_displacement(target_disp: float, delta_t: float, t: int) -> float:
    """Invert the expected-absolute-displacement formula for sigma (deg/s^2)."""
    if target_disp < 0:
        raise ValueError("target displacement must be >= 0")
    if t < 1:
        raise ValueError("t must be >= 1")
    return target_disp * np.sqrt(6.0 * np.pi) / (delta_t**2 * np.sqrt(4.0 * t**3 - t))


def sample_trajectory(initial: CVState, params: MotionParams, seed: int) -> Trajectory:
    """Sample a wrapped azimuth trajectory of num_frames steps, deterministically."""
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, params.sigma, size=params.num_frames)
    dt = params.delta_t
    thetas = np.empty(params.num_frames + 1)
    thetas[0] = initial.theta
    theta, theta_dot = initial.theta, initial.theta_dot
    for i in range(params.num_frames):
        theta = theta + dt * theta_dot + 0.5 * dt * dt * noise[i]
        theta_dot = theta_dot + dt * noise[i]
        thetas[i + 1] = theta
    return Trajectory(thetas=wrap_deg(thetas), delta_t=dt)


def sample_displacements(params: MotionParams, num_runs: int, seed: int) -> np.ndarray:
    """Unwrapped signed displacements [num_runs x (num_frames+1)] from rest.

    Used as the Monte-Carlo oracle for the closed-form displacement statistics;
    increments are accumulated without wrapping.
    """
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, params.sigma, size=(num_runs, params.num_frames))
    dt = params.delta_t
    # theta_dot_t = dt * cumsum(noise); theta increment_t = dt*theta_dot_{t-1} + dt^2/2 * noise_t
    theta_dot = dt * np.cumsum(noise, axis=1)
    prev_dot = np.concatenate([np.zeros((num_runs, 1)), theta_dot[:, :-1]], axis=1)
    increments = dt * prev_dot + 0.5 * dt * dt * noise
    disp = np.concatenate(
        [np.zeros((num_runs, 1)), np.cumsum(increments, axis=1)], axis=1
    )
    return disp


def write_trajectory_csv(path, traj: Trajectory) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["frame", "theta_deg"])
        for i, th in enumerate(traj.thetas):
            writer.writerow([i, f"{th:.6f}"])


def read_trajectory_csv(path, delta_t: float) -> Trajectory:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["frame", "theta_deg"]:
            raise ValueError(f"unexpected trajectory CSV header: {header}")
        thetas = [float(row[1]) for row in reader]
    return Trajectory(thetas=np.asarray(thetas), delta_t=delta_t)
