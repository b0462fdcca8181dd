"""Locomotion reward function (terms T1-T18) and the PD target law.

Joint-based penalty terms are means over joints and the feet-force penalty a
mean over feet, so term magnitudes do not grow with morphology size; the
air-time and swing-symmetry terms sum over feet/pairs as written in their
defining expressions.  All penalty coefficients (T3-T18) are multiplied by
the curriculum coefficient; the two tracking terms are not.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_TERMS = 18
TERM_NAMES = tuple(f"T{i}" for i in range(1, N_TERMS + 1))

# Coefficient per term, T1..T18 order.
BASE_COEFFICIENTS = np.array(
    [2.0, 1.0, 2.0, 0.05, 5.0, 14.4, 120.0, 10.0, 5e-6, 2.4e-4,
     0.12, 0.12, 30.0, 0.1, 0.5, 2.0, 8e-3, 1.0]
)
# Humanoid gait-style overrides: T1, T2, T6, T17.
HUMANOID_OVERRIDES = {0: 3.0, 1: 1.5, 5: 43.2, 16: 6e-3}

TRACKING_TERMS = (0, 1)  # curriculum does not scale these


class ShapeMismatch(ValueError):
    pass


class InvalidCurriculum(ValueError):
    pass


def class_coefficients(morph_class: str) -> np.ndarray:
    coeffs = BASE_COEFFICIENTS.copy()
    if morph_class == "humanoid":
        for idx, value in HUMANOID_OVERRIDES.items():
            coeffs[idx] = value
    return coeffs


def effective_coefficients(coeffs: np.ndarray, curriculum: float) -> np.ndarray:
    eff = coeffs * curriculum
    for idx in TRACKING_TERMS:
        eff[idx] = coeffs[idx]
    return eff


def pd_target(nominal: np.ndarray, action_scale: float, action: np.ndarray) -> np.ndarray:
    """Target joint angles: nominal configuration plus scaled action."""
    nominal = np.asarray(nominal, dtype=float)
    action = np.asarray(action, dtype=float)
    if nominal.shape != action.shape:
        raise ShapeMismatch(f"nominal {nominal.shape} vs action {action.shape}")
    return nominal + action_scale * action


@dataclass
class TransitionRecord:
    """One environment transition, sized to the embodiment (J joints, F feet)."""

    trunk_lin_vel: np.ndarray  # (3,)
    trunk_ang_vel: np.ndarray  # (3,) roll/pitch/yaw rates
    trunk_pitch_roll: np.ndarray  # (2,) pitch, roll angles
    trunk_height: float
    nominal_height: float
    command: np.ndarray  # (3,) x, y, yaw velocity command
    joint_pos: np.ndarray  # (J,)
    joint_vel: np.ndarray
    joint_acc: np.ndarray
    joint_torque: np.ndarray
    joint_nominal: np.ndarray
    joint_limits: np.ndarray  # (J, 2)
    joint_vel_limits: np.ndarray  # (J,)
    action: np.ndarray  # (J,)
    prev_action: np.ndarray
    prev_prev_action: np.ndarray
    foot_contact: np.ndarray  # (F,) bool
    foot_air_time: np.ndarray  # (F,) swing seconds (swing just ended at touchdown)
    foot_touchdown: np.ndarray  # (F,) bool
    foot_force: np.ndarray  # (F,)
    foot_y: np.ndarray  # (F,) lateral positions in the trunk frame
    foot_pairs: tuple[tuple[int, int], ...]  # (left, right) index pairs
    target_feet_y_distance: float
    self_collision: bool


@dataclass
class RewardBreakdown:
    terms: np.ndarray  # (18,) raw term values
    total: float
    curriculum: float

    def contributions(self, coeffs: np.ndarray) -> np.ndarray:
        return effective_coefficients(coeffs, self.curriculum) * self.terms


def batch_reward_terms(
    trunk_lin_vel: np.ndarray,  # (N, 3)
    trunk_ang_vel: np.ndarray,  # (N, 3)
    trunk_pitch_roll: np.ndarray,  # (N, 2)
    trunk_height: np.ndarray,  # (N,)
    nominal_height: np.ndarray,  # (N,) or scalar
    command: np.ndarray,  # (N, 3)
    joint_pos: np.ndarray,  # (N, J)
    joint_vel: np.ndarray,
    joint_acc: np.ndarray,
    joint_torque: np.ndarray,
    joint_nominal: np.ndarray,  # (J,) or (N, J)
    joint_limits: np.ndarray,  # (J, 2)
    joint_vel_limits: np.ndarray,  # (J,)
    action: np.ndarray,  # (N, J)
    prev_action: np.ndarray,
    prev_prev_action: np.ndarray,
    foot_contact: np.ndarray,  # (N, F)
    foot_air_time: np.ndarray,
    foot_touchdown: np.ndarray,
    foot_force: np.ndarray,
    foot_y: np.ndarray,
    foot_pairs: tuple[tuple[int, int], ...],
    target_feet_y_distance: np.ndarray,  # (N,) or scalar
    self_collision: np.ndarray,  # (N,) bool
) -> np.ndarray:
    """Raw values of T1..T18 for a batch of transitions; shape (N, 18)."""
    n = trunk_lin_vel.shape[0]
    terms = np.zeros((n, N_TERMS))

    vel_err = trunk_lin_vel[:, :2] - command[:, :2]
    terms[:, 0] = np.exp(-np.sum(vel_err**2, axis=1) / 0.25)
    yaw_err = trunk_ang_vel[:, 2] - command[:, 2]
    terms[:, 1] = np.exp(-(yaw_err**2) / 0.25)
    terms[:, 2] = -(trunk_lin_vel[:, 2] ** 2)
    terms[:, 3] = -np.sum(trunk_ang_vel[:, :2] ** 2, axis=1)
    terms[:, 4] = -np.sum(trunk_pitch_roll**2, axis=1)
    terms[:, 5] = -np.mean((joint_pos - joint_nominal) ** 2, axis=1)

    lo, hi = joint_limits[:, 0], joint_limits[:, 1]
    margin = 0.05 * (hi - lo)
    outside = (joint_pos < lo + margin) | (joint_pos > hi - margin)
    terms[:, 6] = -np.mean(outside.astype(float), axis=1)
    vel_band = 0.9 * joint_vel_limits
    terms[:, 7] = -np.mean((np.abs(joint_vel) > vel_band).astype(float), axis=1)
    terms[:, 8] = -np.mean(joint_acc**2, axis=1)
    terms[:, 9] = -np.mean(joint_torque**2, axis=1)
    terms[:, 10] = -np.mean((action - prev_action) ** 2, axis=1)
    terms[:, 11] = -np.mean((action - 2.0 * prev_action + prev_prev_action) ** 2, axis=1)
    terms[:, 12] = -((trunk_height - nominal_height) ** 2)

    if foot_contact.shape[1] > 0:
        terms[:, 13] = -np.sum(
            foot_touchdown.astype(float) * (foot_air_time - 0.5), axis=1
        )
        terms[:, 16] = -np.mean(foot_force**2, axis=1)
    if foot_pairs:
        left = np.array([p[0] for p in foot_pairs])
        right = np.array([p[1] for p in foot_pairs])
        swing = ~foot_contact
        terms[:, 14] = -np.sum(
            swing[:, left].astype(float) * swing[:, right].astype(float), axis=1
        )
        y_dist = np.mean(np.abs(foot_y[:, left] - foot_y[:, right]), axis=1)
        terms[:, 15] = -((y_dist - target_feet_y_distance) ** 2)
    terms[:, 17] = -self_collision.astype(float)
    return terms


def compute_reward(
    tr: TransitionRecord, coeffs: np.ndarray, curriculum: float
) -> RewardBreakdown:
    """Full reward breakdown for one transition."""
    if not 0.0 <= curriculum <= 1.0:
        raise InvalidCurriculum(f"curriculum coefficient {curriculum} outside [0, 1]")
    terms = batch_reward_terms(
        tr.trunk_lin_vel[None],
        tr.trunk_ang_vel[None],
        tr.trunk_pitch_roll[None],
        np.array([tr.trunk_height]),
        np.array([tr.nominal_height]),
        tr.command[None],
        tr.joint_pos[None],
        tr.joint_vel[None],
        tr.joint_acc[None],
        tr.joint_torque[None],
        tr.joint_nominal,
        tr.joint_limits,
        tr.joint_vel_limits,
        tr.action[None],
        tr.prev_action[None],
        tr.prev_prev_action[None],
        tr.foot_contact[None],
        tr.foot_air_time[None],
        tr.foot_touchdown[None],
        tr.foot_force[None],
        tr.foot_y[None],
        tr.foot_pairs,
        np.array([tr.target_feet_y_distance]),
        np.array([tr.self_collision]),
    )[0]
    total = float(np.dot(effective_coefficients(coeffs, curriculum), terms))
    return RewardBreakdown(terms=terms, total=total, curriculum=curriculum)


def reward_trace_csv(breakdowns: list[RewardBreakdown], path: str | Path | None = None) -> str:
    """Per-step term trace: step, T1..T18, total."""
    lines = ["step," + ",".join(TERM_NAMES) + ",total"]
    for step, b in enumerate(breakdowns):
        values = ",".join(repr(float(v)) for v in b.terms)
        lines.append(f"{step},{values},{repr(b.total)}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
