"""Desk-scale surrogate locomotion environment.

This is a declared substitute for rigid-body simulation: joints follow
PD-driven second-order dynamics with torque/velocity limits, while the trunk
follows a reduced model.  The reduced model is fixed and documented so that
learning results are internally comparable; no physical fidelity is claimed.

Reduced trunk model
-------------------
* Each foot rests on its own "stance pad" at the height it has in the
  nominal configuration, so every embodiment starts with all feet in
  contact.  A foot is in contact when its bottom is within a tolerance of
  its pad; air time accumulates while in swing.
* The trunk height tracks the kinematic height implied by the current leg
  configuration (feet cannot penetrate their pads), with a first-order lag.
* Planar trunk velocity relaxes toward a drive term composed of (a) the
  negated velocity of feet in stance (legs push the ground) and (b) a small
  posture-lean term proportional to foot displacement from nominal, both
  mapped through per-foot contact Jacobians frozen at the nominal
  configuration.  Yaw rate follows the rotational analogue.
* Per-foot contact force is reported as the excess over the even static
  weight share, so quiet stance reads zero and impacts or uneven loading
  read high (the force penalty targets excessive contact, not standing).
* Roll and pitch feel three torques: a righting spring whose strength scales
  with support quality (fraction of feet in stance minus the normalized
  offset of the stance centroid from the trunk axis), an inverted-pendulum
  term, and a tipping torque toward the side opposite the stance centroid.
  Balanced stances are stable; clustered or missing contacts tip the trunk.
  An episode ends when roll or pitch exceeds 1 rad, the trunk drops below
  40 % of its nominal height, or the 1000-step horizon (20 s at 50 Hz) is
  reached.

Integration runs at 200 Hz (4 substeps per 50 Hz control tick).  All
randomness flows through one generator, so (seed, actions) determine the
trajectory bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embodiment import (
    CLASS_CONTROL,
    Embodiment,
    ObservationBundle,
    Sphere,
    Box,
    descriptor_of,
    general_observation,
    joint_positions,
    joint_world_axes,
    link_poses,
    nominal_configuration,
)
from .randomization import (
    RESAMPLE_CHANCE,
    RandomizationRanges,
    sample_randomization,
    scaled_ranges,
)
from .rewards import batch_reward_terms, class_coefficients, TRACKING_TERMS

CONTROL_DT = 0.02  # 50 Hz
SUBSTEPS = 4
SUB_DT = CONTROL_DT / SUBSTEPS
DEFAULT_HORIZON = 1000
CONTACT_TOL = 0.01  # m above the stance pad still counts as contact
FALL_ANGLE = 1.0  # rad
FALL_HEIGHT_FRACTION = 0.4
PASSIVE_DAMPING = 0.05  # N*m*s/rad viscous joint damping
HEIGHT_GAIN = 25.0  # 1/s trunk height relaxation
VELOCITY_GAIN = 5.0  # 1/s planar velocity relaxation
POSTURE_DRIVE_GAIN = 6.0  # 1/s posture-lean drive
STANDARD_GRAVITY = 9.81


class NonFiniteState(FloatingPointError):
    pass


def joint_limit_layer(
    commanded: np.ndarray,
    measured: np.ndarray,
    bounds: np.ndarray,
    base_gains: tuple[np.ndarray | float, np.ndarray | float],
    boosted_gains: tuple[float, float] = (60.0, 1.0),
) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Software joint-limit layer.

    Projects commanded targets onto the restricted bounds and, while the
    measured angle violates them, overrides the PD gains with high corrective
    gains until the joint re-enters the permitted region.
    """
    lo, hi = bounds[..., 0], bounds[..., 1]
    target = np.clip(commanded, lo, hi)
    violated = (measured < lo) | (measured > hi)
    kp = np.where(violated, boosted_gains[0], base_gains[0])
    kd = np.where(violated, boosted_gains[1], base_gains[1])
    return target, (kp, kd)


def _batch_axis_rotation(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues rotation matrices for one fixed axis, batched over angles."""
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    a = np.outer(axis, axis)
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    return c * np.eye(3) + s * k + (1.0 - c) * a


@dataclass
class FootChain:
    """Root-to-foot kinematic chain: (offset, joint index or -1, axis) hops."""

    foot_index: int
    offsets: np.ndarray  # (H, 3)
    joint_idx: np.ndarray  # (H,) int, -1 for rigid hops
    axes: np.ndarray  # (H, 3)
    center_offset: np.ndarray  # geometry center in foot frame
    half_z: float  # vertical half extent of the foot geometry
    radius: float  # characteristic radius for self-collision checks


@dataclass
class EnvState:
    """Copy of the vectorized environment state (diagnostics/determinism)."""

    q: np.ndarray
    qd: np.ndarray
    rpy: np.ndarray
    height: np.ndarray
    lin_vel: np.ndarray
    ang_vel: np.ndarray
    foot_contact: np.ndarray
    foot_air_time: np.ndarray
    step_index: np.ndarray
    command: np.ndarray
    curriculum_level: np.ndarray
    rng_state: dict


class SurrogateEnv:
    """Vectorized surrogate environment for one embodiment."""

    def __init__(
        self,
        embodiment: Embodiment,
        num_envs: int = 1,
        seed: int = 0,
        ranges: RandomizationRanges | None = None,
        curriculum: str | float = "adaptive",
        horizon: int = DEFAULT_HORIZON,
        command_ranges: tuple[float, float, float] = (0.5, 0.3, 0.5),
        fixed_command: np.ndarray | None = None,
        restricted_limits: np.ndarray | None = None,
        actuation: bool = True,
    ):
        self.embodiment = embodiment
        self.num_envs = num_envs
        self.horizon = horizon
        self.ranges = ranges
        self.command_ranges = command_ranges
        self.fixed_command = None if fixed_command is None else np.asarray(fixed_command, float)
        self.restricted_limits = restricted_limits
        self.actuation = actuation
        self.rng = np.random.default_rng(seed)

        self.ctrl = CLASS_CONTROL[embodiment.morph_class]
        self.coeffs = class_coefficients(embodiment.morph_class)
        self.adaptive_curriculum = curriculum == "adaptive"
        init_level = 0 if self.adaptive_curriculum else int(round(float(curriculum) * 100))

        e = embodiment
        self.J = e.joint_count
        self.nominal = np.array([j.nominal_angle for j in e.joints])
        self.limits = np.array([j.limits for j in e.joints])
        self.max_torque = np.array([j.max_torque for j in e.joints])
        self.max_velocity = np.array([j.max_velocity for j in e.joints])

        self._build_kinematics()
        self.descriptors, self.general_desc = descriptor_of(e, self.ctrl)

        n, j = num_envs, self.J
        self.q = np.tile(self.nominal, (n, 1))
        self.qd = np.zeros((n, j))
        self.prev_action = np.zeros((n, j))
        self.prev_prev_action = np.zeros((n, j))
        self.last_commanded = np.zeros((n, j))
        self.rpy = np.zeros((n, 3))
        self.height = np.full(n, self.nominal_height)
        self.lin_vel = np.zeros((n, 3))
        self.ang_vel = np.zeros((n, 3))
        self.planar_pos = np.zeros((n, 2))
        self.foot_contact = np.ones((n, self.F), dtype=bool)
        self.foot_air_time = np.zeros((n, self.F))
        self.step_index = np.zeros(n, dtype=int)
        self.command = np.zeros((n, 3))
        self.curriculum_level = np.full(n, init_level, dtype=int)
        self.tracking_error_sum = np.zeros(n)
        self.physical = self._default_physical()
        self.episode_return = np.zeros(n)

    # -- construction helpers -------------------------------------------------

    def _build_kinematics(self) -> None:
        e = self.embodiment
        joint_index = {jt.name: i for i, jt in enumerate(e.joints)}
        joint_by_child = {jt.child_link: jt for jt in e.joints}
        links_by_name = {l.name: l for l in e.links}

        feet = e.foot_links()
        self.F = len(feet)
        self.foot_names = tuple(f.name for f in feet)
        chains: list[FootChain] = []
        for fi, foot in enumerate(feet):
            hops = []
            link = foot
            while link.parent is not None:
                jt = joint_by_child.get(link.name)
                if jt is not None:
                    hops.append((np.asarray(jt.origin, float), joint_index[jt.name],
                                 np.asarray(jt.axis, float)))
                else:
                    hops.append((np.asarray(link.parent_frame_offset, float), -1, np.zeros(3)))
                link = links_by_name[link.parent]
            hops.reverse()
            if isinstance(foot.shape, Sphere):
                half_z = foot.shape.radius
                radius = foot.shape.radius
            elif isinstance(foot.shape, Box):
                half_z = foot.shape.size_z / 2.0
                radius = max(foot.shape.size_x, foot.shape.size_y) / 2.0
            else:
                half_z = foot.shape.length / 2.0
                radius = foot.shape.radius
            chains.append(
                FootChain(
                    foot_index=fi,
                    offsets=np.stack([h[0] for h in hops]),
                    joint_idx=np.array([h[1] for h in hops], dtype=int),
                    axes=np.stack([h[2] for h in hops]),
                    center_offset=np.asarray(foot.geom_offset, float),
                    half_z=half_z,
                    radius=radius,
                )
            )
        self.chains = chains

        # Left/right foot pairs by name.
        pair_map = {}
        for i, name in enumerate(self.foot_names):
            if "left" in name:
                partner = name.replace("left", "right")
                if partner in self.foot_names:
                    pair_map[i] = self.foot_names.index(partner)
        self.foot_pairs = tuple(sorted((l, r) for l, r in pair_map.items()))

        # Nominal-pose foot geometry: stance pads and feet-distance target.
        angles = nominal_configuration(e)
        bottoms, centers = self._foot_geometry(np.tile(self.nominal, (1, 1)))
        z_bottom = bottoms[0]
        self.nominal_height = float(-z_bottom.min()) if self.F else e.nominal_height
        self.stance_pad = z_bottom + self.nominal_height  # >= 0 per foot
        if self.foot_pairs:
            self.feet_y_target = float(
                np.mean(
                    [abs(centers[0, l, 1] - centers[0, r, 1]) for l, r in self.foot_pairs]
                )
            )
        else:
            self.feet_y_target = 0.0

        # Contact Jacobians at the nominal configuration.
        jp = joint_positions(e, angles)
        ja = joint_world_axes(e, angles)
        self.jacobians = np.zeros((self.F, 3, self.J))
        for fi, chain in enumerate(self.chains):
            p_foot = centers[0, fi]
            for jidx in chain.joint_idx:
                if jidx >= 0:
                    self.jacobians[fi, :, jidx] = np.cross(ja[jidx], p_foot - jp[jidx])

        # Per-joint effective inertia from the subtree it carries.
        children = {}
        for l in e.links:
            children.setdefault(l.parent, []).append(l.name)
        poses = link_poses(e, angles)

        def subtree(link_name):
            out = [link_name]
            for c in children.get(link_name, []):
                out.extend(subtree(c))
            return out

        # Reflected inertia per joint from its subtree; floored so the PD loop
        # stays well inside the semi-implicit Euler stability region even with
        # randomized gain factors (omega * dt <= ~0.3).
        inertia_floor = 18.0 * self.ctrl.p_gain * SUB_DT**2
        self.joint_inertia = np.zeros(self.J)
        for i, jt in enumerate(e.joints):
            names = subtree(jt.child_link)
            mass = sum(links_by_name[nm].mass for nm in names)
            r_p, p_p = poses[jt.parent_link]
            origin = p_p + r_p @ np.asarray(jt.origin, float)
            extent = max(
                float(np.linalg.norm(poses[nm][1] - origin)) for nm in names
            )
            self.joint_inertia[i] = max(inertia_floor, mass * (extent**2 / 3.0 + 1e-4))

        self.stance_radius = (
            max(0.05, float(np.mean(np.linalg.norm(centers[0, :, :2], axis=1))))
            if self.F
            else 0.05
        )
        self.expert_obs_dim = 3 * self.J + 9
        self.privileged_obs_dim = self.expert_obs_dim + 4 + 2 * self.F

    def _foot_geometry(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Foot bottom heights (N, F) and centers (N, F, 3), trunk frame."""
        n = q.shape[0]
        centers = np.zeros((n, self.F, 3))
        bottoms = np.zeros((n, self.F))
        for fi, chain in enumerate(self.chains):
            r = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
            p = np.zeros((n, 3))
            for offset, jidx, axis in zip(chain.offsets, chain.joint_idx, chain.axes):
                p = p + np.einsum("nij,j->ni", r, offset)
                if jidx >= 0:
                    r = r @ _batch_axis_rotation(axis, q[:, jidx])
            center = p + np.einsum("nij,j->ni", r, chain.center_offset)
            centers[:, fi] = center
            bottoms[:, fi] = center[:, 2] - chain.half_z
        return bottoms, centers

    def _default_physical(self) -> dict[str, np.ndarray]:
        n, j = self.num_envs, self.J
        return {
            "motor_strength": np.ones((n, j)),
            "p_gain_factor": np.ones((n, j)),
            "d_gain_factor": np.ones((n, j)),
            "joint_position_offset": np.zeros((n, j)),
            "static_friction": np.ones(n),
            "dynamic_friction": np.ones(n),
            "restitution": np.zeros(n),
            "added_mass": np.zeros(n),
            "gravity": np.ones(n),  # offset row; 1.0 maps to standard gravity
            "joint_friction": np.zeros((n, j)),
            "joint_armature": np.zeros((n, j)),
        }

    def _gravity_magnitude(self) -> np.ndarray:
        # Table row is an additive offset centered at 1.0: effective gravity
        # spans (0, 2g) at full randomization and is exactly g at k = 0.
        return STANDARD_GRAVITY - 1.0 + self.physical["gravity"]

    # -- episode control -------------------------------------------------------

    def _sample_commands(self, mask: np.ndarray) -> None:
        if self.fixed_command is not None:
            self.command[mask] = self.fixed_command
            return
        n = int(mask.sum())
        cx, cy, cyaw = self.command_ranges
        self.command[mask, 0] = self.rng.uniform(-cx, cx, n)
        self.command[mask, 1] = self.rng.uniform(-cy, cy, n)
        self.command[mask, 2] = self.rng.uniform(-cyaw, cyaw, n)

    def _reset_envs(self, mask: np.ndarray) -> None:
        n = int(mask.sum())
        if n == 0:
            return
        self.q[mask] = self.nominal
        self.qd[mask] = 0.0
        self.rpy[mask] = 0.0
        self.height[mask] = self.nominal_height
        self.lin_vel[mask] = 0.0
        self.ang_vel[mask] = 0.0
        self.planar_pos[mask] = 0.0
        self.prev_action[mask] = 0.0
        self.prev_prev_action[mask] = 0.0
        self.last_commanded[mask] = 0.0
        self.foot_contact[mask] = True
        self.foot_air_time[mask] = 0.0
        self.step_index[mask] = 0
        self.tracking_error_sum[mask] = 0.0
        self.episode_return[mask] = 0.0
        self._sample_commands(mask)

        if self.ranges is not None:
            idx = np.flatnonzero(mask)
            for env_i in idx:
                k = self.curriculum_level[env_i] / 100.0
                draw = sample_randomization(
                    self.ranges, k, self.rng, "episode-start", self.J, size=1
                )
                limit_half_range = 0.5 * (self.limits[:, 1] - self.limits[:, 0])
                q0 = self.nominal + draw.starting["joint_position_factor"][0] * limit_half_range
                self.q[env_i] = np.clip(q0, self.limits[:, 0], self.limits[:, 1])
                self.qd[env_i] = (
                    draw.starting["joint_velocity_factor"][0] * self.max_velocity
                )
                self.rpy[env_i, :2] = draw.starting["orientation_factor"][0] * np.pi
                self.lin_vel[env_i] = draw.starting["linear_velocity"][0]
                self.ang_vel[env_i] = draw.starting["angular_velocity"][0]
                for name, value in draw.physical.items():
                    self.physical[name][env_i] = value[0]
        bottoms, _ = self._foot_geometry(self.q)
        self.height[mask] = np.maximum(
            (self.stance_pad - bottoms)[mask].max(axis=1), 0.05
        )

    def reset(self) -> dict[str, np.ndarray]:
        self._reset_envs(np.ones(self.num_envs, dtype=bool))
        return self._observations(self._zero_step_draw())

    def _zero_step_draw(self):
        n, j = self.num_envs, self.J
        return {
            "joint_position": np.zeros((n, j)),
            "joint_velocity": np.zeros((n, j)),
            "angular_velocity": np.zeros((n, 3)),
            "gravity_vector": np.zeros((n, 3)),
            "dropout": np.zeros((n, j), dtype=bool),
        }

    # -- stepping --------------------------------------------------------------

    def step(self, actions: np.ndarray):
        """Advance one 50 Hz control tick.

        Returns (observations, rewards, done, info); finished environments
        auto-reset and the returned observations are those of the new episode.
        """
        n, j = self.num_envs, self.J
        actions = np.asarray(actions, dtype=float).reshape(n, j)
        if not np.all(np.isfinite(actions)):
            raise NonFiniteState("non-finite actions")

        if self.ranges is not None:
            # One curriculum level per vector draw keeps sampling cheap; the
            # per-env level only modulates episode-start draws.
            k = float(self.curriculum_level.mean()) / 100.0
            draw = sample_randomization(self.ranges, k, self.rng, "per-step", j, size=n)
            for name, (mask, value) in draw.resample.items():
                if name in self.physical and mask.any():
                    self.physical[name][mask] = value[mask]
            push_mask, push_vel = draw.push
            if push_mask.any():
                self.lin_vel[push_mask] += push_vel[push_mask]
            executed = np.where(draw.action_delayed[:, None], self.last_commanded, actions)
            noise = {
                "joint_position": draw.noise["joint_position"],
                "joint_velocity": draw.noise["joint_velocity"],
                "angular_velocity": draw.noise["angular_velocity"],
                "gravity_vector": draw.noise["gravity_vector"],
                "dropout": draw.dropout_mask,
            }
        else:
            executed = actions
            noise = self._zero_step_draw()
        self.last_commanded = actions.copy()

        target = self.nominal + self.ctrl.action_scale * executed
        target = target + self.physical["joint_position_offset"]
        kp = self.ctrl.p_gain * self.physical["p_gain_factor"]
        kd = self.ctrl.d_gain * self.physical["d_gain_factor"]
        if self.restricted_limits is not None:
            target, (kp, kd) = joint_limit_layer(
                target, self.q, self.restricted_limits, (kp, kd)
            )

        q, qd = self.q, self.qd
        qd_start = qd.copy()
        torque_acc = np.zeros((n, j))
        inertia = self.joint_inertia + self.physical["joint_armature"]
        joint_friction = self.physical["joint_friction"]
        for _ in range(SUBSTEPS):
            if self.actuation:
                tau = kp * (target - q) - kd * qd
                tau = np.clip(
                    tau * self.physical["motor_strength"], -self.max_torque, self.max_torque
                )
            else:
                tau = np.zeros((n, j))
            torque_acc += tau
            qd = qd + (tau / inertia) * SUB_DT
            decay = (PASSIVE_DAMPING / inertia) * SUB_DT
            qd = qd * np.clip(1.0 - decay, 0.0, 1.0)
            coulomb = (joint_friction / inertia) * SUB_DT
            qd = np.sign(qd) * np.maximum(np.abs(qd) - coulomb, 0.0)
            qd = np.clip(qd, -self.max_velocity, self.max_velocity)
            q = q + qd * SUB_DT
            below, above = q < self.limits[:, 0], q > self.limits[:, 1]
            qd = np.where(below | above, 0.0, qd)
            q = np.clip(q, self.limits[:, 0], self.limits[:, 1])
        torque = torque_acc / SUBSTEPS
        qacc = (qd - qd_start) / CONTROL_DT
        self.q, self.qd = q, qd

        # Feet kinematics, contacts, trunk height.
        bottoms, centers = self._foot_geometry(q)
        height_target = np.maximum((self.stance_pad - bottoms).max(axis=1), 0.0)
        prev_height = self.height.copy()
        alpha_h = min(1.0, HEIGHT_GAIN * CONTROL_DT)
        self.height = self.height + alpha_h * (height_target - self.height)
        v_z = (self.height - prev_height) / CONTROL_DT

        clearance = self.height[:, None] + bottoms - self.stance_pad
        contact = clearance <= CONTACT_TOL
        touchdown = contact & ~self.foot_contact
        swing_time = self.foot_air_time + CONTROL_DT
        air_time_report = np.where(contact, np.where(touchdown, swing_time, 0.0), swing_time)
        self.foot_air_time = np.where(contact, 0.0, swing_time)
        self.foot_contact = contact

        n_contact = contact.sum(axis=1)
        gravity = self._gravity_magnitude()

        # Support quality: contact fraction penalized by stance-centroid
        # offset from the trunk axis; clamped to [0, 1].
        contact_f = contact.astype(float)
        denom = np.maximum(n_contact, 1)[:, None]
        centroid = (centers[:, :, :2] * contact_f[:, :, None]).sum(axis=1) / denom
        centroid[n_contact == 0] = 0.0
        imbalance = np.linalg.norm(centroid, axis=1) / (2.0 * self.stance_radius)
        support = np.clip(2.0 * contact_f.mean(axis=1) - imbalance, 0.0, 1.0)

        # Planar drive from stance feet plus posture lean.
        foot_vel = np.einsum("fij,nj->nfi", self.jacobians, qd)
        foot_disp = np.einsum("fij,nj->nfi", self.jacobians, q - self.nominal)
        stance_drive = -(foot_vel[:, :, :2] * contact_f[:, :, None]).sum(axis=1) / denom
        posture_drive = -foot_disp[:, :, :2].mean(axis=1) * POSTURE_DRIVE_GAIN
        traction = np.minimum(self.physical["static_friction"], 1.0) * support
        v_drive = (stance_drive + posture_drive) * traction[:, None]

        # Yaw drive: rotation implied by anchored/leaning feet about the trunk.
        r_sq = np.maximum(np.sum(centers[:, :, :2] ** 2, axis=2), 1e-2)
        spin_vel = (
            centers[:, :, 0] * foot_vel[:, :, 1] - centers[:, :, 1] * foot_vel[:, :, 0]
        ) / r_sq
        spin_disp = (
            centers[:, :, 0] * foot_disp[:, :, 1] - centers[:, :, 1] * foot_disp[:, :, 0]
        ) / r_sq
        yaw_drive = -(
            (spin_vel * contact_f).sum(axis=1) / denom[:, 0]
            + spin_disp.mean(axis=1) * POSTURE_DRIVE_GAIN
        ) * traction

        alpha_v = min(1.0, VELOCITY_GAIN * CONTROL_DT)
        self.lin_vel[:, :2] += alpha_v * (v_drive - self.lin_vel[:, :2])
        self.lin_vel[:, 2] = v_z
        self.ang_vel[:, 2] += alpha_v * (yaw_drive - self.ang_vel[:, 2])

        # Roll/pitch: support-scaled righting spring vs inverted pendulum,
        # plus a tipping torque away from an off-center stance.
        g_over_h = gravity / self.nominal_height
        k_r = 3.0 * STANDARD_GRAVITY / self.nominal_height
        c_r = 1.2 * np.sqrt(k_r)
        tilt = self.rpy[:, :2]
        tilt_rate = self.ang_vel[:, [0, 1]]
        pendulum = g_over_h[:, None] * np.sin(tilt)
        tip = (
            0.5
            * (1.0 - support[:, None])
            * g_over_h[:, None]
            * (centroid[:, [1, 0]] / self.stance_radius)
        )
        tilt_acc = -k_r * support[:, None] * tilt - c_r * tilt_rate + pendulum - tip
        tilt_rate = tilt_rate + tilt_acc * CONTROL_DT
        self.ang_vel[:, 0], self.ang_vel[:, 1] = tilt_rate[:, 0], tilt_rate[:, 1]
        self.rpy[:, :2] += tilt_rate * CONTROL_DT
        self.rpy[:, 2] += self.ang_vel[:, 2] * CONTROL_DT

        yaw = self.rpy[:, 2]
        rot = np.stack([np.cos(yaw), -np.sin(yaw), np.sin(yaw), np.cos(yaw)], axis=1)
        vx, vy = self.lin_vel[:, 0], self.lin_vel[:, 1]
        self.planar_pos[:, 0] += (rot[:, 0] * vx + rot[:, 1] * vy) * CONTROL_DT
        self.planar_pos[:, 1] += (rot[:, 2] * vx + rot[:, 3] * vy) * CONTROL_DT

        # Contact force reported as the excess over the static weight share:
        # quiet stance reads zero, hard/uneven loading and impacts read high.
        total_mass = self.embodiment.total_mass + self.physical["added_mass"]
        weight = np.maximum(gravity, 0.0) * np.maximum(total_mass, 0.1)
        static_share = weight / self.F if self.F else weight
        share = (weight / np.maximum(n_contact, 1))[:, None]
        impact = 1.0 + (1.0 + 2.0 * self.physical["restitution"][:, None]) * np.maximum(
            -v_z[:, None], 0.0
        ) / max(self.nominal_height, 0.05)
        force = np.where(contact, np.maximum(share * impact - static_share[:, None], 0.0), 0.0)

        self_collision = self._self_collision(centers)

        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(self.rpy))):
            raise NonFiniteState("environment state diverged")

        terms = batch_reward_terms(
            self.lin_vel,
            self.ang_vel,
            self.rpy[:, [1, 0]],  # pitch, roll
            self.height,
            np.full(n, self.nominal_height),
            self.command,
            q,
            qd,
            qacc,
            torque,
            self.nominal,
            self.limits,
            self.max_velocity,
            actions,
            self.prev_action,
            self.prev_prev_action,
            contact,
            air_time_report,
            touchdown,
            force,
            centers[:, :, 1],
            self.foot_pairs,
            np.full(n, self.feet_y_target),
            self_collision,
        )
        k_env = self.curriculum_level / 100.0
        tracking = terms[:, :2] @ self.coeffs[:2]
        penalties = (terms[:, 2:] @ self.coeffs[2:]) * k_env
        rewards = tracking + penalties
        self.episode_return += rewards

        self.prev_prev_action = self.prev_action
        self.prev_action = actions.copy()
        self.step_index += 1
        self.tracking_error_sum += np.linalg.norm(
            self.lin_vel[:, :2] - self.command[:, :2], axis=1
        )

        fell = (
            (np.abs(self.rpy[:, 0]) > FALL_ANGLE)
            | (np.abs(self.rpy[:, 1]) > FALL_ANGLE)
            | (self.height < FALL_HEIGHT_FRACTION * self.nominal_height)
        )
        timeout = self.step_index >= self.horizon
        done = fell | timeout

        info = {
            "fell": fell,
            "timeout": timeout,
            "terms": terms,
            "tracking_reward": tracking,
            "episode_return": self.episode_return.copy(),
            "curriculum": k_env.copy(),
        }
        if done.any():
            mean_err = self.tracking_error_sum[done] / np.maximum(self.step_index[done], 1)
            if self.adaptive_curriculum:
                success = (~fell[done]) & (mean_err < 0.4)
                delta = np.where(success, 1, -1)
                self.curriculum_level[done] = np.clip(
                    self.curriculum_level[done] + delta, 0, 100
                )
            info["episode_tracking_error"] = mean_err
            self._reset_envs(done)

        obs = self._observations(noise)
        return obs, rewards, done, info

    def _self_collision(self, centers: np.ndarray) -> np.ndarray:
        if self.F < 2:
            return np.zeros(self.num_envs, dtype=bool)
        collided = np.zeros(self.num_envs, dtype=bool)
        for i in range(self.F):
            for k in range(i + 1, self.F):
                min_dist = self.chains[i].radius + self.chains[k].radius
                d2 = np.sum((centers[:, i] - centers[:, k]) ** 2, axis=1)
                collided |= d2 < min_dist**2
        return collided

    # -- observations ----------------------------------------------------------

    def _gravity_in_trunk(self) -> np.ndarray:
        roll, pitch = self.rpy[:, 0], self.rpy[:, 1]
        gx = np.sin(pitch)
        gy = -np.sin(roll) * np.cos(pitch)
        gz = -np.cos(roll) * np.cos(pitch)
        return np.stack([gx, gy, gz], axis=1)

    def _observations(self, noise) -> dict[str, np.ndarray]:
        keep = ~noise["dropout"]
        q_obs = (self.q + noise["joint_position"]) * keep
        qd_obs = (self.qd + noise["joint_velocity"]) * keep
        prev_obs = self.prev_action * keep
        ang_obs = self.ang_vel + noise["angular_velocity"]
        grav_obs = self._gravity_in_trunk() + noise["gravity_vector"]

        expert = np.concatenate([q_obs, qd_obs, prev_obs, ang_obs, grav_obs, self.command], axis=1)
        privileged = np.concatenate(
            [
                expert,
                self.lin_vel,
                self.height[:, None],
                self.foot_contact.astype(float),
                self.foot_air_time,
            ],
            axis=1,
        )
        general = np.zeros((self.num_envs, 20))
        general[:, 0:3] = self.lin_vel
        general[:, 3:6] = grav_obs
        general[:, 6:9] = self.command
        general[:, 9:18] = self.general_desc
        per_joint = np.stack([q_obs, qd_obs, prev_obs], axis=2)
        return {
            "expert": expert,
            "privileged": privileged,
            "general": general,
            "per_joint": per_joint,
        }

    def observation_bundle(self, env_index: int = 0) -> ObservationBundle:
        obs = self._observations(self._zero_step_draw())
        return ObservationBundle(
            general=obs["general"][env_index], per_joint=obs["per_joint"][env_index]
        )

    def snapshot(self) -> EnvState:
        return EnvState(
            q=self.q.copy(),
            qd=self.qd.copy(),
            rpy=self.rpy.copy(),
            height=self.height.copy(),
            lin_vel=self.lin_vel.copy(),
            ang_vel=self.ang_vel.copy(),
            foot_contact=self.foot_contact.copy(),
            foot_air_time=self.foot_air_time.copy(),
            step_index=self.step_index.copy(),
            command=self.command.copy(),
            curriculum_level=self.curriculum_level.copy(),
            rng_state=self.rng.bit_generator.state,
        )


# -- trajectory log container --------------------------------------------------

LOG_MAGIC = b"PLYTRAJ1"


def save_transition_log(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    """Binary container of per-step transition arrays (little-endian float32).

    Header: magic, uint32 JSON length, JSON listing field names and shapes in
    write order; payload: raw float32 data per field.
    """
    names = list(arrays.keys())
    header = {"fields": [{"name": n, "shape": list(arrays[n].shape)} for n in names]}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(LOG_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in names:
            f.write(np.ascontiguousarray(arrays[n], dtype="<f4").tobytes())


def load_transition_log(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        if f.read(8) != LOG_MAGIC:
            raise ValueError(f"{path}: not a transition log")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        out = {}
        for entry in header["fields"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            out[entry["name"]] = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
    return out
