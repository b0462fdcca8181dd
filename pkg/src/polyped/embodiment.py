"""In-memory model of a legged-robot embodiment.

An embodiment is the triplet of link geometry, joint topology, and kinematic
constraints.  Links form a rigid-attachment tree; a subset of the tree edges
is articulated by revolute joints.  Everything downstream (descriptors,
observations, actions) uses the joint list order as the one canonical index
space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

MORPHOLOGY_CLASSES = ("humanoid", "quadruped", "hexapod")

# Per-joint descriptor component order.  Fixed; external consumers decode
# descriptor rows using this list (it is embedded in dataset manifests).
DESCRIPTOR_LAYOUT = (
    "joint_pos_x",
    "joint_pos_y",
    "joint_pos_z",
    "axis_x",
    "axis_y",
    "axis_z",
    "nominal_angle",
    "max_torque",
    "max_velocity",
    "limit_lo",
    "limit_hi",
    "p_gain",
    "d_gain",
    "action_scale",
    "robot_mass",
    "robot_dim_x",
    "robot_dim_y",
    "robot_dim_z",
)

# Fixed-length general observation order (20 components).  The first nine are
# dynamic (filled by the environment), the next nine are the static robot
# descriptor, and the last two are reserved padding kept at zero.
GENERAL_OBSERVATION_LAYOUT = (
    "trunk_lin_vel_x",
    "trunk_lin_vel_y",
    "trunk_lin_vel_z",
    "gravity_x",
    "gravity_y",
    "gravity_z",
    "command_x",
    "command_y",
    "command_yaw",
    "p_gain",
    "d_gain",
    "action_scale",
    "robot_mass",
    "robot_dim_x",
    "robot_dim_y",
    "robot_dim_z",
    "joint_count",
    "feet_size",
    "reserved_0",
    "reserved_1",
)

JOINT_DESCRIPTOR_DIM = len(DESCRIPTOR_LAYOUT)
GENERAL_DESCRIPTOR_DIM = 9
GENERAL_OBSERVATION_DIM = len(GENERAL_OBSERVATION_LAYOUT)


class InvalidEmbodiment(ValueError):
    """Raised when an embodiment violates its structural invariants."""


@dataclass(frozen=True)
class Sphere:
    radius: float

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3


@dataclass(frozen=True)
class Cylinder:
    # Axis runs along the link-frame z axis.
    length: float
    radius: float

    @property
    def volume(self) -> float:
        return math.pi * self.radius**2 * self.length


@dataclass(frozen=True)
class Box:
    # Extents along the link-frame x, y, z axes.
    size_x: float
    size_y: float
    size_z: float

    @property
    def volume(self) -> float:
        return self.size_x * self.size_y * self.size_z


Shape = Sphere | Cylinder | Box


@dataclass(frozen=True)
class LinkSpec:
    """One rigid body.  ``parent`` is None exactly for the root link.

    ``parent_frame_offset`` places this link's frame in the parent link's
    frame (it coincides with the connecting joint origin when the connection
    is articulated).  ``geom_offset`` places the geometry center inside this
    link's own frame.
    """

    name: str
    shape: Shape
    mass: float
    parent: str | None = None
    parent_frame_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)
    geom_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class JointSpec:
    """A revolute joint articulating the edge parent_link -> child_link."""

    name: str
    parent_link: str
    child_link: str
    axis: tuple[float, float, float]
    limits: tuple[float, float]
    max_torque: float
    max_velocity: float
    nominal_angle: float
    origin: tuple[float, float, float]


@dataclass
class ObservationBundle:
    """Policy input: fixed-length general part plus per-joint rows.

    ``general`` has 20 components (see GENERAL_OBSERVATION_LAYOUT); each of
    the J ``per_joint`` rows holds (joint angle, joint velocity, previous
    action).
    """

    general: np.ndarray  # (20,)
    per_joint: np.ndarray  # (J, 3)

    def check(self, joint_count: int) -> None:
        if self.general.shape != (GENERAL_OBSERVATION_DIM,):
            raise ValueError(f"general observation shape {self.general.shape}")
        if self.per_joint.shape != (joint_count, 3):
            raise ValueError(f"per-joint observation shape {self.per_joint.shape}")
        if not (np.all(np.isfinite(self.general)) and np.all(np.isfinite(self.per_joint))):
            raise ValueError("non-finite observation")


@dataclass(frozen=True)
class ClassControlConstants:
    """Shared control constants of one morphology class."""

    p_gain: float
    d_gain: float
    action_scale: float


# PD gains and action scaling factors per morphology class.
CLASS_CONTROL: dict[str, ClassControlConstants] = {
    "quadruped": ClassControlConstants(p_gain=20.0, d_gain=0.5, action_scale=0.3),
    "hexapod": ClassControlConstants(p_gain=25.0, d_gain=0.5, action_scale=0.3),
    "humanoid": ClassControlConstants(p_gain=60.0, d_gain=2.0, action_scale=0.75),
}


@dataclass(frozen=True)
class Embodiment:
    id: str
    morph_class: str
    links: tuple[LinkSpec, ...]
    joints: tuple[JointSpec, ...]
    variation: object | None = None  # VariationSpec for generated embodiments
    total_mass: float = 0.0
    bounding_dims: tuple[float, float, float] = (0.0, 0.0, 0.0)
    nominal_height: float = 0.0

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> tuple[str, ...]:
        return tuple(j.name for j in self.joints)

    def link(self, name: str) -> LinkSpec:
        for l in self.links:
            if l.name == name:
                return l
        raise KeyError(name)

    def root_link(self) -> LinkSpec:
        roots = [l for l in self.links if l.parent is None]
        if len(roots) != 1:
            raise InvalidEmbodiment(f"expected exactly one root link, found {len(roots)}")
        return roots[0]

    def foot_links(self) -> tuple[LinkSpec, ...]:
        return tuple(l for l in self.links if "foot" in l.name)

    def with_joints(self, joints: Iterable[JointSpec]) -> "Embodiment":
        return replace(self, joints=tuple(joints))


def build_embodiment_record(
    id: str,
    morph_class: str,
    links: Iterable[LinkSpec],
    joints: Iterable[JointSpec],
    variation: object | None = None,
) -> Embodiment:
    """Assemble an Embodiment and fill in the derived mass/geometry fields."""
    links = tuple(links)
    joints = tuple(joints)
    e = Embodiment(
        id=id,
        morph_class=morph_class,
        links=links,
        joints=joints,
        variation=variation,
    )
    total = float(sum(l.mass for l in links))
    lo, hi = _nominal_aabb(e)
    dims = tuple(float(x) for x in (hi - lo))
    height = float(-lo[2])
    return replace(e, total_mass=total, bounding_dims=dims, nominal_height=height)


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    cc = 1.0 - c
    return np.array(
        [
            [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
            [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
            [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
        ]
    )


def link_poses(
    e: Embodiment, angles: Mapping[str, float] | None = None
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Forward kinematics: link name -> (rotation, position) in the root frame.

    ``angles`` maps joint names to angles; joints not listed sit at 0.
    """
    if angles is None:
        angles = {}
    joint_by_child = {j.child_link: j for j in e.joints}
    poses: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    pending = list(e.links)
    guard = 0
    while pending:
        progressed = False
        remaining = []
        for link in pending:
            if link.parent is None:
                poses[link.name] = (np.eye(3), np.zeros(3))
                progressed = True
                continue
            if link.parent not in poses:
                remaining.append(link)
                continue
            r_p, p_p = poses[link.parent]
            joint = joint_by_child.get(link.name)
            if joint is not None:
                origin = np.asarray(joint.origin, dtype=float)
                angle = float(angles.get(joint.name, 0.0))
                r = r_p @ rotation_about_axis(np.asarray(joint.axis, dtype=float), angle)
            else:
                origin = np.asarray(link.parent_frame_offset, dtype=float)
                r = r_p
            poses[link.name] = (r, p_p + r_p @ origin)
            progressed = True
        pending = remaining
        guard += 1
        if pending and (not progressed or guard > len(e.links) + 1):
            names = ", ".join(l.name for l in pending)
            raise InvalidEmbodiment(f"unreachable links (cycle or missing parent): {names}")
    return poses


def joint_positions(
    e: Embodiment, angles: Mapping[str, float] | None = None
) -> np.ndarray:
    """Positions of all joint origins in the root frame, joint order, shape (J, 3)."""
    poses = link_poses(e, angles)
    out = np.zeros((len(e.joints), 3))
    for i, j in enumerate(e.joints):
        r_p, p_p = poses[j.parent_link]
        out[i] = p_p + r_p @ np.asarray(j.origin, dtype=float)
    return out


def joint_world_axes(
    e: Embodiment, angles: Mapping[str, float] | None = None
) -> np.ndarray:
    """Joint rotation axes expressed in the root frame, shape (J, 3)."""
    poses = link_poses(e, angles)
    out = np.zeros((len(e.joints), 3))
    for i, j in enumerate(e.joints):
        r_p, _ = poses[j.parent_link]
        out[i] = r_p @ np.asarray(j.axis, dtype=float)
    return out


def _shape_world_halfextents(shape: Shape, r: np.ndarray) -> np.ndarray:
    """Axis-aligned half extents of a rotated shape."""
    if isinstance(shape, Sphere):
        return np.full(3, shape.radius)
    if isinstance(shape, Box):
        half = np.array([shape.size_x, shape.size_y, shape.size_z]) / 2.0
        return np.abs(r) @ half
    axis = r[:, 2]
    planar = np.sqrt(np.clip(1.0 - axis**2, 0.0, 1.0))
    return 0.5 * shape.length * np.abs(axis) + shape.radius * planar


def _nominal_aabb(e: Embodiment) -> tuple[np.ndarray, np.ndarray]:
    angles = nominal_configuration(e)
    poses = link_poses(e, angles)
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for link in e.links:
        r, p = poses[link.name]
        center = p + r @ np.asarray(link.geom_offset, dtype=float)
        half = _shape_world_halfextents(link.shape, r)
        lo = np.minimum(lo, center - half)
        hi = np.maximum(hi, center + half)
    return lo, hi


def nominal_configuration(e: Embodiment) -> dict[str, float]:
    """Joint name -> nominal standing angle (stored on each JointSpec)."""
    return {j.name: j.nominal_angle for j in e.joints}


def feet_size(e: Embodiment) -> float:
    """Characteristic foot length, averaged over feet.

    Sphere feet use the radius, box feet (humanoid) the x extent.
    """
    feet = e.foot_links()
    if not feet:
        return 0.0
    sizes = []
    for f in feet:
        if isinstance(f.shape, Sphere):
            sizes.append(f.shape.radius)
        elif isinstance(f.shape, Box):
            sizes.append(f.shape.size_x)
        else:
            sizes.append(f.shape.length)
    return float(np.mean(sizes))


def validate(e: Embodiment) -> list[str]:
    """Structural validity report; empty list means the embodiment is valid."""
    report: list[str] = []
    link_names = [l.name for l in e.links]
    if len(set(link_names)) != len(link_names):
        report.append("duplicate link names")
    joint_names = [j.name for j in e.joints]
    if len(set(joint_names)) != len(joint_names):
        report.append("duplicate joint names")

    roots = [l for l in e.links if l.parent is None]
    if len(roots) != 1:
        report.append(f"non-tree topology: {len(roots)} root links")
    known = set(link_names)
    for l in e.links:
        if l.parent is not None and l.parent not in known:
            report.append(f"link {l.name}: unknown parent {l.parent}")
        dims = _shape_dims(l.shape)
        if any(d <= 0.0 for d in dims):
            report.append(f"link {l.name}: non-positive geometry dimension")
        if l.mass <= 0.0:
            report.append(f"link {l.name}: non-positive mass")

    children_seen: set[str] = set()
    for j in e.joints:
        if j.parent_link not in known or j.child_link not in known:
            report.append(f"joint {j.name}: references unknown link")
            continue
        if j.child_link in children_seen:
            report.append(f"non-tree topology: link {j.child_link} has two parent joints")
        children_seen.add(j.child_link)
        child = e.link(j.child_link)
        if child.parent != j.parent_link:
            report.append(f"joint {j.name}: child link attached to a different parent")
        lo, hi = j.limits
        if not lo < hi:
            report.append(f"joint {j.name}: degenerate limits ({lo}, {hi})")
        elif not (lo <= j.nominal_angle <= hi):
            report.append(f"joint {j.name}: nominal angle {j.nominal_angle} outside limits")
        if abs(float(np.linalg.norm(j.axis)) - 1.0) > 1e-9:
            report.append(f"joint {j.name}: axis is not a unit vector")
        if j.max_torque <= 0.0 or j.max_velocity <= 0.0:
            report.append(f"joint {j.name}: non-positive motor rating")

    if len(roots) == 1:
        try:
            link_poses(e)
        except InvalidEmbodiment as err:
            report.append(str(err))

    expected_mass = sum(l.mass for l in e.links)
    if expected_mass > 0 and abs(e.total_mass - expected_mass) > 1e-9 * expected_mass:
        report.append("total_mass inconsistent with link masses")
    return report


def _shape_dims(shape: Shape) -> tuple[float, ...]:
    if isinstance(shape, Sphere):
        return (shape.radius,)
    if isinstance(shape, Cylinder):
        return (shape.length, shape.radius)
    return (shape.size_x, shape.size_y, shape.size_z)


def _check_tree(e: Embodiment) -> None:
    roots = [l for l in e.links if l.parent is None]
    if len(roots) != 1:
        raise InvalidEmbodiment(f"expected exactly one root link, found {len(roots)}")
    children = [j.child_link for j in e.joints]
    if len(set(children)) != len(children):
        raise InvalidEmbodiment("non-tree topology: a link is the child of two joints")
    link_poses(e)  # raises on cycles / unreachable links


def descriptor_of(
    e: Embodiment, ctrl: ClassControlConstants
) -> tuple[np.ndarray, np.ndarray]:
    """Per-joint descriptor matrix (J, 18) and static general descriptor (9,).

    Joint positions are taken at the nominal configuration, relative to the
    root link frame.  Pure function of the inputs.
    """
    _check_tree(e)
    angles = nominal_configuration(e)
    positions = joint_positions(e, angles)
    axes = joint_world_axes(e, angles)
    dims = np.asarray(e.bounding_dims, dtype=float)

    rows = np.zeros((len(e.joints), JOINT_DESCRIPTOR_DIM))
    for i, j in enumerate(e.joints):
        rows[i] = np.concatenate(
            [
                positions[i],
                axes[i],
                [
                    j.nominal_angle,
                    j.max_torque,
                    j.max_velocity,
                    j.limits[0],
                    j.limits[1],
                    ctrl.p_gain,
                    ctrl.d_gain,
                    ctrl.action_scale,
                    e.total_mass,
                ],
                dims,
            ]
        )
    general = np.concatenate(
        [
            [ctrl.p_gain, ctrl.d_gain, ctrl.action_scale, e.total_mass],
            dims,
            [float(len(e.joints)), feet_size(e)],
        ]
    )
    if not np.all(np.isfinite(rows)) or not np.all(np.isfinite(general)):
        raise InvalidEmbodiment("non-finite descriptor components")
    return rows, general


def general_observation(
    general_desc: np.ndarray,
    trunk_lin_vel: np.ndarray,
    gravity: np.ndarray,
    command: np.ndarray,
) -> np.ndarray:
    """Assemble the 20-component general observation vector."""
    out = np.zeros(GENERAL_OBSERVATION_DIM)
    out[0:3] = trunk_lin_vel
    out[3:6] = gravity
    out[6:9] = command
    out[9:18] = general_desc
    return out


def _close(a: float, b: float, tol: float) -> bool:
    return math.isclose(a, b, rel_tol=tol, abs_tol=tol)


def _vec_close(a, b, tol: float) -> bool:
    return all(_close(float(x), float(y), tol) for x, y in zip(a, b))


def embodiments_allclose(a: Embodiment, b: Embodiment, tol: float = 1e-9) -> bool:
    """Field-wise equality with a float tolerance (used for round-trip checks)."""
    if (a.id, a.morph_class) != (b.id, b.morph_class):
        return False
    if a.variation != b.variation:
        return False
    if len(a.links) != len(b.links) or len(a.joints) != len(b.joints):
        return False
    for la, lb in zip(a.links, b.links):
        if (la.name, la.parent, type(la.shape)) != (lb.name, lb.parent, type(lb.shape)):
            return False
        if not _vec_close(_shape_dims(la.shape), _shape_dims(lb.shape), tol):
            return False
        if not _close(la.mass, lb.mass, tol):
            return False
        if not _vec_close(la.parent_frame_offset, lb.parent_frame_offset, tol):
            return False
        if not _vec_close(la.geom_offset, lb.geom_offset, tol):
            return False
    for ja, jb in zip(a.joints, b.joints):
        if (ja.name, ja.parent_link, ja.child_link) != (jb.name, jb.parent_link, jb.child_link):
            return False
        if not (
            _vec_close(ja.axis, jb.axis, tol)
            and _vec_close(ja.limits, jb.limits, tol)
            and _vec_close(ja.origin, jb.origin, tol)
            and _close(ja.max_torque, jb.max_torque, tol)
            and _close(ja.max_velocity, jb.max_velocity, tol)
            and _close(ja.nominal_angle, jb.nominal_angle, tol)
        ):
            return False
    return (
        _close(a.total_mass, b.total_mass, tol)
        and _vec_close(a.bounding_dims, b.bounding_dims, tol)
        and _close(a.nominal_height, b.nominal_height, tol)
    )
