"""URDF serialization and parsing.

Serialization is canonical: links then joints in construction order, floats
in shortest exact decimal form, so identical embodiments produce
byte-identical documents and parsing recovers every float bit-exactly.  A
single non-standard ``<embodiment_info>`` element carries the
morphology class, the variation record, and nominal joint angles; standard
URDF consumers ignore it, and parsing falls back to name-based rules when it
is absent (external robot files).
"""

from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import asdict

from .embodiment import (
    Box,
    Cylinder,
    Embodiment,
    InvalidEmbodiment,
    JointSpec,
    LinkSpec,
    Shape,
    Sphere,
    build_embodiment_record,
    validate,
)
from .procgen import BASE_UNITS, VariationSpec

log = logging.getLogger(__name__)


class ParseError(ValueError):
    """The document is not a well-formed single-robot URDF."""


class UnsupportedTopology(ValueError):
    """The kinematic structure is not a tree of revolute/fixed joints."""


def _f(x: float) -> str:
    # Shortest exact decimal form: byte-stable and parses back bit-identical.
    if x == 0.0:  # also canonicalizes -0.0
        return "0"
    return repr(float(x))


def _vec(v) -> str:
    return " ".join(_f(float(x)) for x in v)


def _geometry_xml(shape: Shape) -> str:
    if isinstance(shape, Sphere):
        return f'<sphere radius="{_f(shape.radius)}"/>'
    if isinstance(shape, Cylinder):
        return f'<cylinder length="{_f(shape.length)}" radius="{_f(shape.radius)}"/>'
    return f'<box size="{_f(shape.size_x)} {_f(shape.size_y)} {_f(shape.size_z)}"/>'


def _inertia(shape: Shape, mass: float) -> tuple[float, float, float]:
    """Solid-shape diagonal inertia (informational only; not parsed back)."""
    if isinstance(shape, Sphere):
        i = 0.4 * mass * shape.radius**2
        return i, i, i
    if isinstance(shape, Cylinder):
        ixx = mass * (3.0 * shape.radius**2 + shape.length**2) / 12.0
        return ixx, ixx, 0.5 * mass * shape.radius**2
    return (
        mass * (shape.size_y**2 + shape.size_z**2) / 12.0,
        mass * (shape.size_x**2 + shape.size_z**2) / 12.0,
        mass * (shape.size_x**2 + shape.size_y**2) / 12.0,
    )


def to_urdf(e: Embodiment) -> str:
    """Emit a canonical URDF document for the embodiment."""
    report = validate(e)
    if report:
        raise InvalidEmbodiment("; ".join(report))

    out = ['<?xml version="1.0" encoding="utf-8"?>', f'<robot name="{e.id}">']
    for link in e.links:
        geom = _geometry_xml(link.shape)
        origin = f'<origin xyz="{_vec(link.geom_offset)}" rpy="0 0 0"/>'
        ixx, iyy, izz = _inertia(link.shape, link.mass)
        out += [
            f'  <link name="{link.name}">',
            "    <visual>",
            f"      {origin}",
            f"      <geometry>{geom}</geometry>",
            "    </visual>",
            "    <collision>",
            f"      {origin}",
            f"      <geometry>{geom}</geometry>",
            "    </collision>",
            "    <inertial>",
            f"      {origin}",
            f'      <mass value="{_f(link.mass)}"/>',
            f'      <inertia ixx="{_f(ixx)}" ixy="0" ixz="0" iyy="{_f(iyy)}" iyz="0" izz="{_f(izz)}"/>',
            "    </inertial>",
            "  </link>",
        ]

    articulated = {j.child_link for j in e.joints}
    for j in e.joints:
        out += [
            f'  <joint name="{j.name}" type="revolute">',
            f'    <origin xyz="{_vec(j.origin)}" rpy="0 0 0"/>',
            f'    <parent link="{j.parent_link}"/>',
            f'    <child link="{j.child_link}"/>',
            f'    <axis xyz="{_vec(j.axis)}"/>',
            f'    <limit lower="{_f(j.limits[0])}" upper="{_f(j.limits[1])}"'
            f' effort="{_f(j.max_torque)}" velocity="{_f(j.max_velocity)}"/>',
            "  </joint>",
        ]
    for link in e.links:
        if link.parent is None or link.name in articulated:
            continue
        out += [
            f'  <joint name="{link.name}_fixed" type="fixed">',
            f'    <origin xyz="{_vec(link.parent_frame_offset)}" rpy="0 0 0"/>',
            f'    <parent link="{link.parent}"/>',
            f'    <child link="{link.name}"/>',
            "  </joint>",
        ]

    out.append(f'  <embodiment_info class="{e.morph_class}">')
    if e.variation is not None:
        attrs = " ".join(
            f'{k}="{_format_variation_value(v)}"'
            for k, v in asdict(e.variation).items()
            if v is not None
        )
        out.append(f"    <variation {attrs}/>")
    for j in e.joints:
        out.append(f'    <nominal joint="{j.name}" angle="{_f(j.nominal_angle)}"/>')
    out.append("  </embodiment_info>")
    out.append("</robot>")
    return "\n".join(out) + "\n"


def _format_variation_value(v) -> str:
    if isinstance(v, int):
        return str(v)
    return _f(float(v))


def _parse_vec(text: str | None, default=(0.0, 0.0, 0.0)) -> tuple[float, float, float]:
    if not text:
        return default
    parts = [float(p) for p in text.split()]
    if len(parts) != 3:
        raise ParseError(f"expected 3-vector, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def _parse_geometry(geom_el: ET.Element | None, link_name: str) -> Shape | None:
    if geom_el is None:
        return None
    sphere = geom_el.find("sphere")
    if sphere is not None:
        return Sphere(float(sphere.get("radius", "0")))
    cyl = geom_el.find("cylinder")
    if cyl is not None:
        return Cylinder(float(cyl.get("length", "0")), float(cyl.get("radius", "0")))
    box = geom_el.find("box")
    if box is not None:
        sx, sy, sz = _parse_vec(box.get("size"))
        return Box(sx, sy, sz)
    if geom_el.find("mesh") is not None:
        log.warning("link %s: mesh geometry ignored (no collision primitive)", link_name)
    return None


def _infer_class(root_name: str, leg_count: int) -> str:
    if "pelvis" in root_name.lower():
        return "humanoid"
    if leg_count == 6:
        return "hexapod"
    if leg_count == 4:
        return "quadruped"
    log.warning("could not infer morphology class (legs=%d); assuming quadruped", leg_count)
    return "quadruped"


def _nominal_from_name(name: str, morph_class: str) -> float:
    """Name-rule nominal angles for URDFs without embedded metadata."""
    _, _, nominal = BASE_UNITS[morph_class]
    n = name.lower()
    if "knee" in n:
        # Extra knees (knee2_joint, knee3_joint, ...) default to zero.
        if any(ch.isdigit() for ch in n.split("knee", 1)[1].split("_joint")[0]):
            return 0.0
        return nominal["knee"]
    if morph_class == "quadruped":
        if "thigh" in n:
            return nominal["rear_thigh"] if "rear" in n or "hind" in n else nominal["front_thigh"]
        if "hip" in n:
            return nominal["hip"]
    elif morph_class == "hexapod":
        if "thigh" in n:
            return nominal["thigh"]
        if "hip" in n:
            return nominal["hip"]
    else:
        for key in ("hip_yaw", "hip_roll", "hip_pitch", "shoulder_pitch", "shoulder_roll",
                    "shoulder_yaw", "elbow", "ankle", "torso"):
            if key in n:
                return nominal[key]
        if "hip" in n:
            return nominal["hip_pitch"]
    return 0.0


def from_urdf(doc: str, class_hint: str | None = None) -> Embodiment:
    """Reconstruct an Embodiment from URDF text.

    Meshes, transmissions, and other unsupported elements are ignored with a
    warning; revolute/continuous joints articulate, fixed joints attach
    rigidly.  Raises ParseError for malformed XML and UnsupportedTopology for
    cycles, floating subtrees, or repeated children.
    """
    try:
        root = ET.fromstring(doc)
    except ET.ParseError as err:
        raise ParseError(f"malformed XML: {err}") from err
    if root.tag != "robot":
        raise ParseError(f"expected <robot> root element, got <{root.tag}>")
    robot_name = root.get("name", "robot")

    raw_links: dict[str, dict] = {}
    link_order: list[str] = []
    for el in root.findall("link"):
        name = el.get("name")
        if name is None:
            raise ParseError("link without a name")
        if name in raw_links:
            raise ParseError(f"duplicate link name {name}")
        coll = el.find("collision")
        vis = el.find("visual")
        source = coll if coll is not None else vis
        shape = None
        offset = (0.0, 0.0, 0.0)
        if source is not None:
            shape = _parse_geometry(source.find("geometry"), name)
            origin_el = source.find("origin")
            if origin_el is not None:
                offset = _parse_vec(origin_el.get("xyz"))
        if shape is None:
            log.warning("link %s: no primitive geometry; using placeholder sphere", name)
            shape = Sphere(0.01)
        mass = 0.1
        inertial = el.find("inertial")
        if inertial is not None and inertial.find("mass") is not None:
            mass = float(inertial.find("mass").get("value", "0.1"))
        else:
            log.warning("link %s: no inertial mass; defaulting to 0.1 kg", name)
        raw_links[name] = {"shape": shape, "mass": mass, "geom_offset": offset}
        link_order.append(name)
    if not raw_links:
        raise ParseError("document contains no links")

    parents: dict[str, tuple[str, tuple[float, float, float]]] = {}
    joints: list[JointSpec] = []
    meta_nominal: dict[str, float] = {}
    variation = None
    meta = root.find("embodiment_info")
    if meta is not None:
        class_hint = class_hint or meta.get("class")
        var_el = meta.find("variation")
        if var_el is not None:
            kwargs = {}
            for k, raw in var_el.attrib.items():
                kwargs[k] = int(raw) if k == "knee_joint_count" else float(raw)
            variation = VariationSpec(**kwargs)
        for nom in meta.findall("nominal"):
            meta_nominal[nom.get("joint", "")] = float(nom.get("angle", "0"))

    for el in root.findall("joint"):
        jtype = el.get("type", "fixed")
        name = el.get("name", "joint")
        parent_el, child_el = el.find("parent"), el.find("child")
        if parent_el is None or child_el is None:
            raise ParseError(f"joint {name}: missing parent/child")
        parent, child = parent_el.get("link"), child_el.get("link")
        if parent not in raw_links or child not in raw_links:
            raise UnsupportedTopology(f"joint {name}: unknown link reference")
        if child in parents:
            raise UnsupportedTopology(f"link {child} has multiple parent joints")
        origin_el = el.find("origin")
        origin = _parse_vec(origin_el.get("xyz") if origin_el is not None else None)
        parents[child] = (parent, origin)

        if jtype in ("revolute", "continuous"):
            axis_el = el.find("axis")
            axis = _parse_vec(axis_el.get("xyz") if axis_el is not None else None, (1.0, 0.0, 0.0))
            norm = math.sqrt(sum(a * a for a in axis))
            if norm == 0.0:
                raise ParseError(f"joint {name}: zero axis")
            axis = tuple(a / norm for a in axis)
            limit_el = el.find("limit")
            if jtype == "continuous":
                limits = (-math.pi, math.pi)
                log.warning("joint %s: continuous joint bounded to +-pi", name)
            elif limit_el is None:
                raise ParseError(f"joint {name}: revolute joint without limits")
            else:
                limits = (float(limit_el.get("lower", "0")), float(limit_el.get("upper", "0")))
            effort = float(limit_el.get("effort", "100")) if limit_el is not None else 100.0
            velocity = float(limit_el.get("velocity", "10")) if limit_el is not None else 10.0
            joints.append(
                JointSpec(
                    name,
                    parent_link=parent,
                    child_link=child,
                    axis=axis,
                    limits=limits,
                    max_torque=effort,
                    max_velocity=velocity,
                    nominal_angle=0.0,  # assigned below
                    origin=origin,
                )
            )
        elif jtype != "fixed":
            log.warning("joint %s: unsupported type %s treated as fixed", name, jtype)

    for tag in ("transmission", "gazebo", "sensor"):
        if root.find(tag) is not None:
            log.warning("ignoring unsupported <%s> elements", tag)

    roots = [n for n in link_order if n not in parents]
    if len(roots) != 1:
        raise UnsupportedTopology(f"expected one root link, found {len(roots)}: {roots}")
    # Reject cycles / floating subtrees by walking up from every link.
    for name in link_order:
        seen = set()
        cur = name
        while cur in parents:
            if cur in seen:
                raise UnsupportedTopology(f"cycle through link {cur}")
            seen.add(cur)
            cur = parents[cur][0]
        if cur != roots[0]:
            raise UnsupportedTopology(f"link {name} not connected to root {roots[0]}")

    n_legs = sum(1 for j in joints if j.parent_link == roots[0])
    morph_class = class_hint or _infer_class(roots[0], n_legs)

    links = []
    for name in link_order:
        raw = raw_links[name]
        parent, offset = parents.get(name, (None, (0.0, 0.0, 0.0)))
        links.append(
            LinkSpec(
                name,
                raw["shape"],
                raw["mass"],
                parent=parent,
                parent_frame_offset=offset,
                geom_offset=raw["geom_offset"],
            )
        )

    final_joints = []
    for j in joints:
        if j.name in meta_nominal:
            nominal = meta_nominal[j.name]
        else:
            nominal = _nominal_from_name(j.name, morph_class)
            lo, hi = j.limits
            if not (lo <= nominal <= hi):
                log.warning("joint %s: nominal %.3f clamped into (%.3f, %.3f)",
                            j.name, nominal, lo, hi)
                nominal = min(max(nominal, lo), hi)
        final_joints.append(
            JointSpec(
                j.name, j.parent_link, j.child_link, j.axis, j.limits,
                j.max_torque, j.max_velocity, nominal, j.origin,
            )
        )
    return build_embodiment_record(robot_name, morph_class, links, final_joints, variation)


def descriptor_from_urdf(doc: str, ctrl, class_hint: str | None = None):
    """Descriptors computed from a URDF document alone."""
    from .embodiment import descriptor_of

    return descriptor_of(from_urdf(doc, class_hint), ctrl)
