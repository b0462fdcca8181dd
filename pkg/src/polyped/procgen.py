"""Procedural generation of the embodiment corpus.

Every embodiment is assembled from a fixed catalog of base links and joints
per morphology class, then varied along a discrete grid: knee-joint count
(topology), link scale factors (geometry), and knee-limit scale (kinematics).
Generation is fully deterministic given a seed.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np

from . import reference_split
from .embodiment import (
    Box,
    Cylinder,
    Embodiment,
    JointSpec,
    LinkSpec,
    Sphere,
    DESCRIPTOR_LAYOUT,
    GENERAL_OBSERVATION_LAYOUT,
    MORPHOLOGY_CLASSES,
    build_embodiment_record,
    joint_positions,
    link_poses,
    nominal_configuration,
)

GENERATOR_VERSION = "1.0.0"

# Default seed; with this seed the dataset and splits reproduce the frozen
# reference manifest exactly.
REFERENCE_SEED = 42

CLASS_COUNTS = {"humanoid": 348, "quadruped": 332, "hexapod": 332}

KNEE_COUNTS = (0, 1, 2, 3)
ALL_LINK_SCALES = (0.8, 1.0, 1.2)
THIGH_LENGTH_SCALES = (0.4, 0.8, 1.0, 1.2, 1.6)
CALF_LENGTH_SCALES = (0.4, 0.8, 1.0, 1.2, 1.6)
FOOT_SIZE_SCALES = (1.0, 2.0)
TORSO_SIZE_SCALES = (0.4, 0.8, 1.0, 1.2, 1.6)
KNEE_LIMIT_SCALES = (0.2, 0.6, 1.0)


class UnsupportedVariation(ValueError):
    """A variation field is outside its candidate set."""


class SizeMismatch(ValueError):
    """Class counts disagree between a manifest and the requested split."""


@dataclass(frozen=True)
class VariationSpec:
    """One point of the variation grid.

    ``torso_size_scale`` is set only for humanoids.
    """

    knee_joint_count: int = 1
    all_link_scale: float = 1.0
    thigh_length_scale: float = 1.0
    calf_length_scale: float = 1.0
    foot_size_scale: float = 1.0
    torso_size_scale: float | None = None
    knee_limit_scale: float = 1.0

    def check(self, morph_class: str) -> None:
        checks = [
            (self.knee_joint_count, KNEE_COUNTS, "knee_joint_count"),
            (self.all_link_scale, ALL_LINK_SCALES, "all_link_scale"),
            (self.thigh_length_scale, THIGH_LENGTH_SCALES, "thigh_length_scale"),
            (self.calf_length_scale, CALF_LENGTH_SCALES, "calf_length_scale"),
            (self.foot_size_scale, FOOT_SIZE_SCALES, "foot_size_scale"),
            (self.knee_limit_scale, KNEE_LIMIT_SCALES, "knee_limit_scale"),
        ]
        for value, candidates, name in checks:
            if value not in candidates:
                raise UnsupportedVariation(f"{name}={value} not in {candidates}")
        if morph_class == "humanoid":
            if self.torso_size_scale not in TORSO_SIZE_SCALES:
                raise UnsupportedVariation(
                    f"torso_size_scale={self.torso_size_scale} not in {TORSO_SIZE_SCALES}"
                )
        elif self.torso_size_scale is not None:
            raise UnsupportedVariation("torso_size_scale only applies to humanoids")


def reference_variation(morph_class: str) -> VariationSpec:
    """The unscaled 1.0x variation (excluded from generated datasets)."""
    torso = 1.0 if morph_class == "humanoid" else None
    return VariationSpec(torso_size_scale=torso)


# --------------------------------------------------------------------------
# Base unit catalog: geometry/mass per link and motor/limit values per joint.
# Shapes: Sphere(radius), Cylinder(length, radius), Box(x, y, z extents).
# Boxes used as leg segments are stored with the segment length on the z axis
# so that all legs extend along the link-frame -z at zero joint angle; the
# trunk/torso/foot boxes keep their catalog (x, y, z) order.
# --------------------------------------------------------------------------

QUADRUPED_BASE = {
    "trunk": (Box(0.38, 0.09, 0.11), 6.921),
    "hip": (Cylinder(0.04, 0.046), 1.152),
    "thigh": (Box(0.034, 0.025, 0.21), 1.152),  # catalog length 0.21 on z
    "calf": (Cylinder(0.12, 0.013), 0.154),
    "foot": (Sphere(0.022), 0.040),
}
QUADRUPED_JOINTS = {
    # name: (limits, max_torque, max_velocity)
    "hip": ((-1.05, 1.05), 23.7, 30.1),
    "front_thigh": ((-1.57, 3.49), 23.7, 30.1),
    "rear_thigh": ((-0.52, 4.53), 23.7, 30.1),
    "knee": ((-2.72, -0.84), 45.43, 15.7),
}
QUADRUPED_NOMINAL = {"hip": 0.1, "front_thigh": 0.8, "rear_thigh": 1.0, "knee": -1.5}

HEXAPOD_BASE = {
    "trunk": (Box(0.8, 0.5, 0.1), 6.921),
    "hip": (Sphere(0.05), 0.678),
    "thigh": (Cylinder(0.22, 0.03), 1.152),
    "calf": (Cylinder(0.22, 0.025), 0.154),
    "foot": (Sphere(0.03), 0.040),
}
HEXAPOD_JOINTS = {
    "hip": ((-1.57, 1.57), 100.0, 30.0),
    "thigh": ((-1.57, 1.57), 100.0, 30.0),
    "knee": ((-1.57, 1.57), 100.0, 30.0),
}
HEXAPOD_NOMINAL = {"hip": 0.0, "thigh": 0.79, "knee": 0.79}

HUMANOID_BASE = {
    "pelvis": (Sphere(0.05), 5.390),
    "torso": (Box(0.08, 0.26, 0.18), 17.789),
    "hip_yaw": (Cylinder(0.02, 0.01), 2.244),
    "hip_roll": (Cylinder(0.01, 0.02), 2.232),
    "thigh": (Cylinder(0.2, 0.05), 4.152),
    "calf": (Cylinder(0.2, 0.05), 1.721),
    "foot": (Box(0.28, 0.03, 0.024), 0.474),
    # Arm links are peripheral to locomotion and not catalogued; fixed values.
    "shoulder": (Cylinder(0.04, 0.03), 0.6),
    "shoulder_roll": (Cylinder(0.04, 0.03), 0.6),
    "upper_arm": (Cylinder(0.18, 0.03), 1.1),
    "forearm": (Cylinder(0.16, 0.025), 0.7),
}
HUMANOID_JOINTS = {
    "torso": ((-2.35, 2.35), 200.0, 23.0),
    "shoulder_pitch": ((-2.87, 2.87), 40.0, 9.0),
    "shoulder_roll": ((-0.34, 3.11), 40.0, 9.0),
    "shoulder_yaw": ((-1.30, 4.45), 18.0, 20.0),
    "elbow": ((-1.25, 2.61), 18.0, 20.0),
    "hip_yaw": ((-0.43, 0.43), 200.0, 23.0),
    "hip_roll": ((-0.43, 0.43), 200.0, 23.0),
    "hip_pitch": ((-3.10, 2.50), 200.0, 23.0),
    "knee": ((-0.26, 2.00), 300.0, 14.0),
    "ankle": ((-0.87, 0.52), 40.0, 9.0),
}
HUMANOID_NOMINAL = {
    "torso": 0.0,
    "shoulder_pitch": 0.0,
    "shoulder_roll": 0.0,
    "shoulder_yaw": 0.0,
    "elbow": 0.0,
    "hip_yaw": 0.0,
    "hip_roll": 0.0,
    "hip_pitch": -0.4,
    "knee": 0.8,
    "ankle": -0.4,
}

BASE_UNITS = {
    "quadruped": (QUADRUPED_BASE, QUADRUPED_JOINTS, QUADRUPED_NOMINAL),
    "hexapod": (HEXAPOD_BASE, HEXAPOD_JOINTS, HEXAPOD_NOMINAL),
    "humanoid": (HUMANOID_BASE, HUMANOID_JOINTS, HUMANOID_NOMINAL),
}


def _scaled(shape, dim_scale: float, length_scale: float = 1.0):
    """Scale a shape uniformly by dim_scale, then its long axis by length_scale."""
    if isinstance(shape, Sphere):
        return Sphere(shape.radius * dim_scale * length_scale)
    if isinstance(shape, Cylinder):
        return Cylinder(shape.length * dim_scale * length_scale, shape.radius * dim_scale)
    return Box(
        shape.size_x * dim_scale,
        shape.size_y * dim_scale,
        shape.size_z * dim_scale * length_scale,
    )


def _segment_length(shape) -> float:
    if isinstance(shape, Cylinder):
        return shape.length
    if isinstance(shape, Box):
        return shape.size_z
    return 2.0 * shape.radius


def _scale_limits(limits, nominal, scale):
    lo, hi = limits
    return (nominal + scale * (lo - nominal), nominal + scale * (hi - nominal))


def _recentered(limits, nominal):
    """Shift a limit range so that it brackets a zero nominal angle."""
    lo, hi = limits
    return (lo - nominal, hi - nominal)


def _leg_chain(
    links: list,
    joints: list,
    prefix: str,
    thigh_link_name: str,
    thigh_len: float,
    calf_shape,
    calf_mass: float,
    foot_shape,
    foot_mass: float,
    foot_geom_offset,
    knee_count: int,
    knee_limits,
    knee_nominal: float,
    knee_torque: float,
    knee_vel: float,
    knee_axis,
    knee_limit_scale: float,
) -> str:
    """Append the below-the-thigh part of one leg; returns the last link name."""
    if knee_count == 0:
        # Calf omitted; foot attaches directly to the thigh end.
        links.append(
            LinkSpec(
                f"{prefix}_foot",
                foot_shape,
                foot_mass,
                parent=thigh_link_name,
                parent_frame_offset=(0.0, 0.0, -thigh_len),
                geom_offset=foot_geom_offset,
            )
        )
        return f"{prefix}_foot"

    seg_len = _segment_length(calf_shape) / knee_count
    if isinstance(calf_shape, Cylinder):
        seg_shape = Cylinder(seg_len, calf_shape.radius)
    else:
        seg_shape = Box(calf_shape.size_x, calf_shape.size_y, seg_len)
    seg_mass = calf_mass / knee_count

    extra_limits = _recentered(knee_limits, knee_nominal)
    parent = thigh_link_name
    attach_z = -thigh_len
    for i in range(knee_count):
        if i == 0:
            name, nominal, limits = f"{prefix}_knee_joint", knee_nominal, knee_limits
            link_name = f"{prefix}_calf"
        else:
            name, nominal, limits = f"{prefix}_knee{i + 1}_joint", 0.0, extra_limits
            link_name = f"{prefix}_calf{i + 1}"
        limits = _scale_limits(limits, nominal, knee_limit_scale)
        joints.append(
            JointSpec(
                name,
                parent_link=parent,
                child_link=link_name,
                axis=knee_axis,
                limits=limits,
                max_torque=knee_torque,
                max_velocity=knee_vel,
                nominal_angle=nominal,
                origin=(0.0, 0.0, attach_z),
            )
        )
        links.append(
            LinkSpec(
                link_name,
                seg_shape,
                seg_mass,
                parent=parent,
                parent_frame_offset=(0.0, 0.0, attach_z),
                geom_offset=(0.0, 0.0, -seg_len / 2.0),
            )
        )
        parent = link_name
        attach_z = -seg_len
    links.append(
        LinkSpec(
            f"{prefix}_foot",
            foot_shape,
            foot_mass,
            parent=parent,
            parent_frame_offset=(0.0, 0.0, attach_z),
            geom_offset=foot_geom_offset,
        )
    )
    return f"{prefix}_foot"


def _build_quadruped(eid: str, v: VariationSpec, base) -> Embodiment:
    geom, jprops, nominal = base
    s = v.all_link_scale
    vol = s**3

    trunk_shape, trunk_mass = geom["trunk"]
    trunk = _scaled(trunk_shape, s)
    hip_shape, hip_mass = geom["hip"]
    hip = _scaled(hip_shape, s)
    thigh_shape, thigh_mass = geom["thigh"]
    thigh = _scaled(thigh_shape, s, v.thigh_length_scale)
    calf_shape, calf_mass = geom["calf"]
    calf = _scaled(calf_shape, s, v.calf_length_scale)
    foot_shape, foot_mass = geom["foot"]
    foot = Sphere(foot_shape.radius * s * v.foot_size_scale)

    links = [LinkSpec("trunk", trunk, trunk_mass * vol)]
    joints: list[JointSpec] = []
    thigh_len = _segment_length(thigh)

    for leg, sx, sy in (
        ("front_left", 1.0, 1.0),
        ("front_right", 1.0, -1.0),
        ("rear_left", -1.0, 1.0),
        ("rear_right", -1.0, -1.0),
    ):
        hip_origin = (sx * (trunk.size_x / 2.0 - 0.02 * s), sy * trunk.size_y / 2.0, 0.0)
        joints.append(
            JointSpec(
                f"{leg}_hip_joint",
                parent_link="trunk",
                child_link=f"{leg}_hip",
                axis=(sy, 0.0, 0.0),
                limits=jprops["hip"][0],
                max_torque=jprops["hip"][1],
                max_velocity=jprops["hip"][2],
                nominal_angle=nominal["hip"],
                origin=hip_origin,
            )
        )
        links.append(
            LinkSpec(
                f"{leg}_hip",
                hip,
                hip_mass * vol,
                parent="trunk",
                parent_frame_offset=hip_origin,
                geom_offset=(0.0, sy * 0.02 * s, 0.0),
            )
        )
        thigh_key = "front_thigh" if sx > 0 else "rear_thigh"
        thigh_origin = (0.0, sy * 0.055 * s, 0.0)
        joints.append(
            JointSpec(
                f"{leg}_thigh_joint",
                parent_link=f"{leg}_hip",
                child_link=f"{leg}_thigh",
                axis=(0.0, 1.0, 0.0),
                limits=jprops[thigh_key][0],
                max_torque=jprops[thigh_key][1],
                max_velocity=jprops[thigh_key][2],
                nominal_angle=nominal[thigh_key],
                origin=thigh_origin,
            )
        )
        links.append(
            LinkSpec(
                f"{leg}_thigh",
                thigh,
                thigh_mass * vol * v.thigh_length_scale,
                parent=f"{leg}_hip",
                parent_frame_offset=thigh_origin,
                geom_offset=(0.0, 0.0, -thigh_len / 2.0),
            )
        )
        _leg_chain(
            links,
            joints,
            leg,
            f"{leg}_thigh",
            thigh_len,
            calf,
            calf_mass * vol * v.calf_length_scale,
            foot,
            foot_mass * vol * v.foot_size_scale**3,
            (0.0, 0.0, 0.0),
            v.knee_joint_count,
            jprops["knee"][0],
            nominal["knee"],
            jprops["knee"][1],
            jprops["knee"][2],
            (0.0, 1.0, 0.0),
            v.knee_limit_scale,
        )
    return build_embodiment_record(eid, "quadruped", links, joints, v)


def _build_hexapod(eid: str, v: VariationSpec, base) -> Embodiment:
    geom, jprops, nominal = base
    s = v.all_link_scale
    vol = s**3

    trunk_shape, trunk_mass = geom["trunk"]
    trunk = _scaled(trunk_shape, s)
    hip_shape, hip_mass = geom["hip"]
    hip = _scaled(hip_shape, s)
    thigh_shape, thigh_mass = geom["thigh"]
    thigh = _scaled(thigh_shape, s, v.thigh_length_scale)
    calf_shape, calf_mass = geom["calf"]
    calf = _scaled(calf_shape, s, v.calf_length_scale)
    foot_shape, foot_mass = geom["foot"]
    foot = Sphere(foot_shape.radius * s * v.foot_size_scale)

    links = [LinkSpec("trunk", trunk, trunk_mass * vol)]
    joints: list[JointSpec] = []
    thigh_len = _segment_length(thigh)

    rows = (("front", trunk.size_x * 0.375), ("middle", 0.0), ("rear", -trunk.size_x * 0.375))
    for row, x in rows:
        for side, sy in (("left", 1.0), ("right", -1.0)):
            leg = f"{row}_{side}"
            hip_origin = (x, sy * trunk.size_y / 2.0, 0.0)
            joints.append(
                JointSpec(
                    f"{leg}_hip_joint",
                    parent_link="trunk",
                    child_link=f"{leg}_hip",
                    axis=(0.0, 0.0, 1.0),
                    limits=jprops["hip"][0],
                    max_torque=jprops["hip"][1],
                    max_velocity=jprops["hip"][2],
                    nominal_angle=nominal["hip"],
                    origin=hip_origin,
                )
            )
            links.append(
                LinkSpec(
                    f"{leg}_hip",
                    hip,
                    hip_mass * vol,
                    parent="trunk",
                    parent_frame_offset=hip_origin,
                    geom_offset=(0.0, sy * hip.radius, 0.0),
                )
            )
            thigh_origin = (0.0, sy * 2.0 * hip.radius, 0.0)
            joints.append(
                JointSpec(
                    f"{leg}_thigh_joint",
                    parent_link=f"{leg}_hip",
                    child_link=f"{leg}_thigh",
                    axis=(-sy, 0.0, 0.0),
                    limits=jprops["thigh"][0],
                    max_torque=jprops["thigh"][1],
                    max_velocity=jprops["thigh"][2],
                    nominal_angle=nominal["thigh"],
                    origin=thigh_origin,
                )
            )
            links.append(
                LinkSpec(
                    f"{leg}_thigh",
                    thigh,
                    thigh_mass * vol * v.thigh_length_scale,
                    parent=f"{leg}_hip",
                    parent_frame_offset=thigh_origin,
                    geom_offset=(0.0, 0.0, -thigh_len / 2.0),
                )
            )
            _leg_chain(
                links,
                joints,
                leg,
                f"{leg}_thigh",
                thigh_len,
                calf,
                calf_mass * vol * v.calf_length_scale,
                foot,
                foot_mass * vol * v.foot_size_scale**3,
                (0.0, 0.0, 0.0),
                v.knee_joint_count,
                jprops["knee"][0],
                nominal["knee"],
                jprops["knee"][1],
                jprops["knee"][2],
                (sy, 0.0, 0.0),
                v.knee_limit_scale,
            )
    return build_embodiment_record(eid, "hexapod", links, joints, v)


def _build_humanoid(eid: str, v: VariationSpec, base) -> Embodiment:
    geom, jprops, nominal = base
    s = v.all_link_scale
    vol = s**3
    ts = v.torso_size_scale if v.torso_size_scale is not None else 1.0

    pelvis_shape, pelvis_mass = geom["pelvis"]
    pelvis = _scaled(pelvis_shape, s)
    torso_shape, torso_mass = geom["torso"]
    torso = Box(torso_shape.size_x * s * ts, torso_shape.size_y * s * ts, torso_shape.size_z * s * ts)
    thigh_shape, thigh_mass = geom["thigh"]
    thigh = _scaled(thigh_shape, s, v.thigh_length_scale)
    calf_shape, calf_mass = geom["calf"]
    calf = _scaled(calf_shape, s, v.calf_length_scale)
    foot_shape, foot_mass = geom["foot"]
    foot = Box(foot_shape.size_x * s * v.foot_size_scale, foot_shape.size_y * s, foot_shape.size_z * s)

    links = [LinkSpec("pelvis", pelvis, pelvis_mass * vol)]
    joints: list[JointSpec] = []

    torso_origin = (0.0, 0.0, pelvis.radius)
    joints.append(
        JointSpec(
            "torso_joint",
            parent_link="pelvis",
            child_link="torso",
            axis=(0.0, 0.0, 1.0),
            limits=jprops["torso"][0],
            max_torque=jprops["torso"][1],
            max_velocity=jprops["torso"][2],
            nominal_angle=nominal["torso"],
            origin=torso_origin,
        )
    )
    links.append(
        LinkSpec(
            "torso",
            torso,
            torso_mass * vol * ts**3,
            parent="pelvis",
            parent_frame_offset=torso_origin,
            geom_offset=(0.0, 0.0, torso.size_z / 2.0 + 0.02 * s),
        )
    )

    for side, sy in (("left", 1.0), ("right", -1.0)):
        # Arm: shoulder pitch/roll/yaw then elbow.
        sh_shape, sh_mass = geom["shoulder"]
        shoulder = _scaled(sh_shape, s)
        shr_shape, shr_mass = geom["shoulder_roll"]
        shoulder_roll = _scaled(shr_shape, s)
        ua_shape, ua_mass = geom["upper_arm"]
        upper_arm = _scaled(ua_shape, s)
        fa_shape, fa_mass = geom["forearm"]
        forearm = _scaled(fa_shape, s)

        sp_origin = (0.0, sy * (torso.size_y / 2.0 + 0.03 * s), torso.size_z * 0.8)
        joints.append(
            JointSpec(
                f"{side}_shoulder_pitch_joint",
                parent_link="torso",
                child_link=f"{side}_shoulder",
                axis=(0.0, 1.0, 0.0),
                limits=jprops["shoulder_pitch"][0],
                max_torque=jprops["shoulder_pitch"][1],
                max_velocity=jprops["shoulder_pitch"][2],
                nominal_angle=nominal["shoulder_pitch"],
                origin=sp_origin,
            )
        )
        links.append(
            LinkSpec(
                f"{side}_shoulder",
                shoulder,
                sh_mass,
                parent="torso",
                parent_frame_offset=sp_origin,
            )
        )
        sr_origin = (0.0, sy * 0.03 * s, 0.0)
        joints.append(
            JointSpec(
                f"{side}_shoulder_roll_joint",
                parent_link=f"{side}_shoulder",
                child_link=f"{side}_shoulder_roll",
                axis=(sy, 0.0, 0.0),
                limits=jprops["shoulder_roll"][0],
                max_torque=jprops["shoulder_roll"][1],
                max_velocity=jprops["shoulder_roll"][2],
                nominal_angle=nominal["shoulder_roll"],
                origin=sr_origin,
            )
        )
        links.append(
            LinkSpec(
                f"{side}_shoulder_roll",
                shoulder_roll,
                shr_mass,
                parent=f"{side}_shoulder",
                parent_frame_offset=sr_origin,
            )
        )
        sy_origin = (0.0, 0.0, -0.04 * s)
        joints.append(
            JointSpec(
                f"{side}_shoulder_yaw_joint",
                parent_link=f"{side}_shoulder_roll",
                child_link=f"{side}_upper_arm",
                axis=(0.0, 0.0, sy),
                limits=jprops["shoulder_yaw"][0],
                max_torque=jprops["shoulder_yaw"][1],
                max_velocity=jprops["shoulder_yaw"][2],
                nominal_angle=nominal["shoulder_yaw"],
                origin=sy_origin,
            )
        )
        links.append(
            LinkSpec(
                f"{side}_upper_arm",
                upper_arm,
                ua_mass,
                parent=f"{side}_shoulder_roll",
                parent_frame_offset=sy_origin,
                geom_offset=(0.0, 0.0, -upper_arm.length / 2.0),
            )
        )
        el_origin = (0.0, 0.0, -upper_arm.length)
        joints.append(
            JointSpec(
                f"{side}_elbow_joint",
                parent_link=f"{side}_upper_arm",
                child_link=f"{side}_forearm",
                axis=(0.0, 1.0, 0.0),
                limits=jprops["elbow"][0],
                max_torque=jprops["elbow"][1],
                max_velocity=jprops["elbow"][2],
                nominal_angle=nominal["elbow"],
                origin=el_origin,
            )
        )
        links.append(
            LinkSpec(
                f"{side}_forearm",
                forearm,
                fa_mass,
                parent=f"{side}_upper_arm",
                parent_frame_offset=el_origin,
                geom_offset=(0.0, 0.0, -forearm.length / 2.0),
            )
        )

    for side, sy in (("left", 1.0), ("right", -1.0)):
        hy_shape, hy_mass = geom["hip_yaw"]
        hip_yaw = _scaled(hy_shape, s)
        hr_shape, hr_mass = geom["hip_roll"]
        hip_roll = _scaled(hr_shape, s)

        hy_origin = (0.0, sy * 0.09 * s, -0.04 * s)
        joints.append(
            JointSpec(
                f"{side}_hip_yaw_joint",
                parent_link="pelvis",
                child_link=f"{side}_hip_yaw",
                axis=(0.0, 0.0, sy),
                limits=jprops["hip_yaw"][0],
                max_torque=jprops["hip_yaw"][1],
                max_velocity=jprops["hip_yaw"][2],
                nominal_angle=nominal["hip_yaw"],
                origin=hy_origin,
            )
        )
        links.append(
            LinkSpec(
                f"{side}_hip_yaw",
                hip_yaw,
                hy_mass * vol,
                parent="pelvis",
                parent_frame_offset=hy_origin,
            )
        )
        hr_origin = (0.0, 0.0, -0.03 * s)
        joints.append(
            JointSpec(
                f"{side}_hip_roll_joint",
                parent_link=f"{side}_hip_yaw",
                child_link=f"{side}_hip_roll",
                axis=(sy, 0.0, 0.0),
                limits=jprops["hip_roll"][0],
                max_torque=jprops["hip_roll"][1],
                max_velocity=jprops["hip_roll"][2],
                nominal_angle=nominal["hip_roll"],
                origin=hr_origin,
            )
        )
        links.append(
            LinkSpec(
                f"{side}_hip_roll",
                hip_roll,
                hr_mass * vol,
                parent=f"{side}_hip_yaw",
                parent_frame_offset=hr_origin,
            )
        )
        hp_origin = (0.0, 0.0, -0.03 * s)
        joints.append(
            JointSpec(
                f"{side}_hip_pitch_joint",
                parent_link=f"{side}_hip_roll",
                child_link=f"{side}_thigh",
                axis=(0.0, 1.0, 0.0),
                limits=jprops["hip_pitch"][0],
                max_torque=jprops["hip_pitch"][1],
                max_velocity=jprops["hip_pitch"][2],
                nominal_angle=nominal["hip_pitch"],
                origin=hp_origin,
            )
        )
        thigh_len = _segment_length(thigh)
        links.append(
            LinkSpec(
                f"{side}_thigh",
                thigh,
                thigh_mass * vol * v.thigh_length_scale,
                parent=f"{side}_hip_roll",
                parent_frame_offset=hp_origin,
                geom_offset=(0.0, 0.0, -thigh_len / 2.0),
            )
        )
        # Knee chain ends at the last calf segment (or the thigh for 0 knees);
        # the ankle joint then articulates the foot.
        chain_links: list[LinkSpec] = []
        chain_joints: list[JointSpec] = []
        last = _leg_chain(
            chain_links,
            chain_joints,
            side,
            f"{side}_thigh",
            thigh_len,
            calf,
            calf_mass * vol * v.calf_length_scale,
            foot,
            foot_mass * vol * v.foot_size_scale,
            (0.0, 0.0, 0.0),
            v.knee_joint_count,
            jprops["knee"][0],
            nominal["knee"],
            jprops["knee"][1],
            jprops["knee"][2],
            (0.0, 1.0, 0.0),
            v.knee_limit_scale,
        )
        foot_link = chain_links.pop()  # replaced by an ankle-articulated foot
        joints.extend(chain_joints)
        links.extend(chain_links)
        ankle_origin = foot_link.parent_frame_offset
        joints.append(
            JointSpec(
                f"{side}_ankle_joint",
                parent_link=foot_link.parent,
                child_link=f"{side}_foot",
                axis=(0.0, 1.0, 0.0),
                limits=jprops["ankle"][0],
                max_torque=jprops["ankle"][1],
                max_velocity=jprops["ankle"][2],
                nominal_angle=nominal["ankle"],
                origin=ankle_origin,
            )
        )
        links.append(
            LinkSpec(
                f"{side}_foot",
                foot,
                foot_link.mass,
                parent=foot_link.parent,
                parent_frame_offset=ankle_origin,
                geom_offset=(0.05 * s, 0.0, -0.03 * s),
            )
        )
    return build_embodiment_record(eid, "humanoid", links, joints, v)


_BUILDERS = {
    "quadruped": _build_quadruped,
    "hexapod": _build_hexapod,
    "humanoid": _build_humanoid,
}


def build_embodiment(
    morph_class: str, v: VariationSpec, base=None, eid: str | None = None
) -> Embodiment:
    """Construct one embodiment from a variation point."""
    if morph_class not in MORPHOLOGY_CLASSES:
        raise UnsupportedVariation(f"unknown morphology class {morph_class!r}")
    v.check(morph_class)
    if base is None:
        base = BASE_UNITS[morph_class]
    if eid is None:
        eid = f"{morph_class}_custom"
    return _BUILDERS[morph_class](eid, v, base)


def reference_embodiment(morph_class: str) -> Embodiment:
    """The unscaled 1.0x robot of a class (not part of generated datasets)."""
    return build_embodiment(
        morph_class, reference_variation(morph_class), eid=f"{morph_class}_reference"
    )


def variation_grid(morph_class: str) -> list[VariationSpec]:
    """All candidate variations of a class, reference point excluded."""
    torso_values = TORSO_SIZE_SCALES if morph_class == "humanoid" else (None,)
    ref = reference_variation(morph_class)
    grid = [
        VariationSpec(k, a, t, c, f, ts, kl)
        for k, a, t, c, f, ts, kl in itertools.product(
            KNEE_COUNTS,
            ALL_LINK_SCALES,
            THIGH_LENGTH_SCALES,
            CALF_LENGTH_SCALES,
            FOOT_SIZE_SCALES,
            torso_values,
            KNEE_LIMIT_SCALES,
        )
    ]
    return [v for v in grid if v != ref]


@dataclass
class DatasetManifest:
    seed: int
    version: str
    ids: dict[str, list[str]]
    variations: dict[str, list[VariationSpec]]
    splits: dict[str, dict[str, list[int]]]

    def class_count(self, morph_class: str) -> int:
        return len(self.ids[morph_class])

    def to_json(self) -> str:
        payload = {
            "seed": self.seed,
            "version": self.version,
            "descriptor_layout": list(DESCRIPTOR_LAYOUT),
            "general_observation_layout": list(GENERAL_OBSERVATION_LAYOUT),
            "classes": {
                cls: {
                    "ids": self.ids[cls],
                    "variations": [asdict(v) for v in self.variations[cls]],
                }
                for cls in MORPHOLOGY_CLASSES
            },
            "splits": self.splits,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        payload = json.loads(text)
        ids = {c: payload["classes"][c]["ids"] for c in MORPHOLOGY_CLASSES}
        variations = {
            c: [VariationSpec(**d) for d in payload["classes"][c]["variations"]]
            for c in MORPHOLOGY_CLASSES
        }
        return cls(
            seed=payload["seed"],
            version=payload["version"],
            ids=ids,
            variations=variations,
            splits=payload["splits"],
        )

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def sample_variations(morph_class: str, count: int, seed: int) -> list[VariationSpec]:
    """Duplicate-free uniform sample: seeded shuffle of the grid, first N."""
    grid = variation_grid(morph_class)
    if count > len(grid):
        raise UnsupportedVariation(
            f"requested {count} {morph_class} variations, grid has {len(grid)}"
        )
    rng = np.random.default_rng([seed, MORPHOLOGY_CLASSES.index(morph_class)])
    order = rng.permutation(len(grid))
    return [grid[i] for i in order[:count]]


def generate_dataset(
    seed: int = REFERENCE_SEED, counts: dict[str, int] | None = None
) -> tuple[list[Embodiment], DatasetManifest]:
    """Generate the full corpus: 348 humanoids, 332 quadrupeds, 332 hexapods."""
    if counts is None:
        counts = CLASS_COUNTS
    embodiments: list[Embodiment] = []
    ids: dict[str, list[str]] = {}
    variations: dict[str, list[VariationSpec]] = {}
    for cls in MORPHOLOGY_CLASSES:
        chosen = sample_variations(cls, counts[cls], seed)
        variations[cls] = chosen
        ids[cls] = [f"{cls}_{i:04d}" for i in range(len(chosen))]
        for eid, v in zip(ids[cls], chosen):
            embodiments.append(build_embodiment(cls, v, eid=eid))
    manifest = DatasetManifest(
        seed=seed, version=GENERATOR_VERSION, ids=ids, variations=variations, splits={}
    )
    manifest.splits = split_dataset(manifest, seed)
    return embodiments, manifest


def split_dataset(manifest: DatasetManifest, seed: int) -> dict[str, dict[str, list[int]]]:
    """80/20 train/test split per class.

    With the reference seed and reference class counts the frozen published
    test index lists are returned verbatim; any other seed uses a seeded
    sampler keyed only by (seed, class size), so classes of equal size share
    identical splits.
    """
    splits: dict[str, dict[str, list[int]]] = {}
    for cls in MORPHOLOGY_CLASSES:
        n = manifest.class_count(cls)
        if len(manifest.variations[cls]) != n:
            raise SizeMismatch(f"{cls}: ids and variations disagree")
        if seed == REFERENCE_SEED and n == CLASS_COUNTS[cls]:
            test = list(reference_split.TEST_INDICES[cls])
        else:
            n_test = math.ceil(0.2 * n)
            rng = np.random.default_rng([seed, n])
            test = sorted(int(i) for i in rng.choice(n, size=n_test, replace=False))
        test_set = set(test)
        train = [i for i in range(n) if i not in test_set]
        splits[cls] = {"train": train, "test": test}
    return splits


@dataclass
class StatisticsReport:
    """Per-class histograms; bins map label -> count."""

    histograms: dict[str, dict[str, dict[str, int]]]

    def to_csv(self) -> str:
        lines = ["class,parameter,bin,count"]
        for cls in sorted(self.histograms):
            for param in sorted(self.histograms[cls]):
                for label, count in self.histograms[cls][param].items():
                    lines.append(f"{cls},{param},{label},{count}")
        return "\n".join(lines) + "\n"

    def save_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def _leg_length(e: Embodiment) -> float:
    """Mean hip-to-foot distance at the nominal configuration."""
    poses = link_poses(e, nominal_configuration(e))
    hips = {j.child_link: j for j in e.joints if "hip" in j.name}
    lengths = []
    for foot in e.foot_links():
        # Walk up to the first hip link of this leg.
        link = foot
        while link.parent is not None and link.name not in hips:
            link = e.link(link.parent)
        if link.name not in hips:
            continue
        _, p_hip = poses[link.name]
        _, p_foot = poses[foot.name]
        lengths.append(float(np.linalg.norm(p_foot - p_hip)))
    return float(np.mean(lengths)) if lengths else 0.0


def dataset_statistics(embodiments: list[Embodiment]) -> StatisticsReport:
    """Histograms of geometric, topological, and kinematic variability."""
    if not embodiments:
        raise ValueError("empty embodiment list")
    hists: dict[str, dict[str, dict[str, int]]] = {}
    for e in embodiments:
        h = hists.setdefault(
            e.morph_class,
            {"leg_length": {}, "joint_count": {}, "knee_joint_count": {}, "knee_limit_scale": {}},
        )
        leg = f"{round(_leg_length(e), 2):g}"
        h["leg_length"][leg] = h["leg_length"].get(leg, 0) + 1
        jc = str(e.joint_count)
        h["joint_count"][jc] = h["joint_count"].get(jc, 0) + 1
        v: VariationSpec = e.variation  # type: ignore[assignment]
        kc = str(v.knee_joint_count) if v is not None else "unknown"
        h["knee_joint_count"][kc] = h["knee_joint_count"].get(kc, 0) + 1
        ks = f"{v.knee_limit_scale:g}" if v is not None else "unknown"
        h["knee_limit_scale"][ks] = h["knee_limit_scale"].get(ks, 0) + 1
    return StatisticsReport(hists)


def apply_knee_limit_scale(e: Embodiment, scale: float) -> Embodiment:
    """Copy of ``e`` with every knee joint's limits re-scaled about its nominal.

    The scale is relative to the embodiment's current limits, so 1.0 is the
    identity; values below the training grid build out-of-distribution tests.
    """
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    if scale == 1.0:
        return e
    new_joints = []
    for j in e.joints:
        if "knee" in j.name:
            j = replace(j, limits=_scale_limits(j.limits, j.nominal_angle, scale))
        new_joints.append(j)
    return e.with_joints(new_joints)
