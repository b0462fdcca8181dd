"""Domain randomization ranges and the performance-based curriculum.

Ranges are the values reached at curriculum coefficient 1; ``scaled_ranges``
shrinks every range linearly toward its midpoint (zero for zero-centered
rows) as the coefficient drops to 0.  Physical parameters are drawn at
episode start and re-drawn each step with probability 0.002; noise rows are
drawn every step.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

# Per-step probability that a physical parameter is re-sampled (on average
# every 500 steps / 10 seconds at 50 Hz).  Not curriculum-scaled.
RESAMPLE_CHANCE = 0.002

Range = tuple[float, float]


@dataclass(frozen=True)
class RandomizationRanges:
    max_action_delay: int = 1
    action_delay_chance: float = 0.05
    motor_strength: Range = (0.5, 1.5)
    p_gain_factor: Range = (0.5, 1.5)
    d_gain_factor: Range = (0.5, 1.5)
    joint_position_offset: Range = (-0.05, 0.05)
    starting_orientation_factor: Range = (-0.0625, 0.0625)
    starting_joint_position_factor: Range = (-0.5, 0.5)
    starting_joint_velocity_factor: Range = (-0.5, 0.5)
    starting_linear_velocity: Range = (-0.5, 0.5)
    starting_angular_velocity: Range = (-0.5, 0.5)
    joint_position_noise: float = 0.01
    joint_velocity_noise: float = 1.5
    angular_velocity_noise: float = 0.2
    gravity_vector_noise: float = 0.05
    joint_obs_dropout_chance: float = 0.05
    static_friction: Range = (0.05, 2.0)
    dynamic_friction: Range = (0.05, 1.5)
    restitution: Range = (0.0, 1.0)
    added_mass: Range = (-2.0, 2.0)
    gravity: Range = (-8.81, 10.81)
    joint_friction: Range = (0.0, 0.01)
    joint_armature: Range = (0.0, 0.01)
    push_x: Range = (-1.0, 1.0)
    push_y: Range = (-1.0, 1.0)
    push_z: Range = (-1.0, 1.0)

    def check(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple) and v[0] > v[1]:
                raise ValueError(f"{f.name}: min {v[0]} > max {v[1]}")
        for name in ("action_delay_chance", "joint_obs_dropout_chance"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}={p} is not a probability")


# Configuration file keys use the randomization table row names verbatim.
CONFIG_KEYS = {
    "Max action delay": "max_action_delay",
    "Chance for action delay": "action_delay_chance",
    "Min & max motor strength": "motor_strength",
    "Min & max P gain factor": "p_gain_factor",
    "Min & max D gain factor": "d_gain_factor",
    "Min & max joint position offset": "joint_position_offset",
    "Min & max starting orientation factor": "starting_orientation_factor",
    "Min & max starting joint position factor": "starting_joint_position_factor",
    "Min & max starting joint velocity factor": "starting_joint_velocity_factor",
    "Min & max starting linear velocity": "starting_linear_velocity",
    "Min & max starting angular velocity": "starting_angular_velocity",
    "Joint position noise": "joint_position_noise",
    "Joint velocity noise": "joint_velocity_noise",
    "Angular velocity noise": "angular_velocity_noise",
    "Gravity velocity noise": "gravity_vector_noise",
    "Joint observation dropout chance": "joint_obs_dropout_chance",
    "Min & max static friction": "static_friction",
    "Min & max dynamic friction": "dynamic_friction",
    "Min & max restitution": "restitution",
    "Min & max added mass": "added_mass",
    "Min & max gravity": "gravity",
    "Min & max joint friction": "joint_friction",
    "Min & max joint armature": "joint_armature",
    "Min & max pushes in x": "push_x",
    "Min & max pushes in y": "push_y",
    "Min & max pushes in z": "push_z",
}


def load_ranges(path: str | Path) -> RandomizationRanges:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    kwargs = {}
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise KeyError(f"unknown randomization row {key!r}")
        name = CONFIG_KEYS[key]
        if isinstance(value, (list, tuple)):
            kwargs[name] = (float(value[0]), float(value[1]))
        elif name == "max_action_delay":
            kwargs[name] = int(value)
        else:
            kwargs[name] = float(value)
    ranges = RandomizationRanges(**kwargs)
    ranges.check()
    return ranges


def save_ranges(ranges: RandomizationRanges, path: str | Path) -> None:
    out = {}
    for key, name in CONFIG_KEYS.items():
        v = getattr(ranges, name)
        out[key] = list(v) if isinstance(v, tuple) else v
    Path(path).write_text(yaml.safe_dump(out, sort_keys=False), encoding="utf-8")


def scaled_ranges(base: RandomizationRanges, k: float) -> RandomizationRanges:
    """Shrink each range toward its midpoint (and value rows toward 0) as k -> 0."""
    if not 0.0 <= k <= 1.0:
        raise ValueError(f"curriculum coefficient {k} outside [0, 1]")
    updates = {}
    for f in fields(base):
        v = getattr(base, f.name)
        if f.name == "max_action_delay":
            continue  # delay window is structural; its chance scales instead
        if isinstance(v, tuple):
            mid = 0.5 * (v[0] + v[1])
            updates[f.name] = (mid + k * (v[0] - mid), mid + k * (v[1] - mid))
        else:
            updates[f.name] = k * v
    return replace(base, **updates)


@dataclass(frozen=True)
class CurriculumState:
    """Coefficient stored as an integer level so 100 successes reach 1 exactly."""

    level: int = 0
    successes: int = 0
    failures: int = 0

    @property
    def coefficient(self) -> float:
        return self.level / 100.0


def update_curriculum(
    state: CurriculumState, fell: bool, mean_xy_tracking_error: float
) -> CurriculumState:
    """+0.01 after an episode without a fall and mean tracking error < 0.4 m/s."""
    if mean_xy_tracking_error < 0.0:
        raise ValueError("tracking error must be non-negative")
    success = (not fell) and mean_xy_tracking_error < 0.4
    level = min(state.level + 1, 100) if success else max(state.level - 1, 0)
    return CurriculumState(
        level=level,
        successes=state.successes + int(success),
        failures=state.failures + int(not success),
    )


@dataclass
class RandomizationDraw:
    """One sampling event; fields are None when not part of the phase.

    Arrays carry a leading env axis of length ``size``.
    """

    phase: str
    starting: dict[str, np.ndarray] | None = None
    physical: dict[str, np.ndarray] | None = None
    noise: dict[str, np.ndarray] | None = None
    dropout_mask: np.ndarray | None = None  # (N, J) bool
    action_delayed: np.ndarray | None = None  # (N,) bool
    resample: dict[str, tuple[np.ndarray, np.ndarray]] | None = None
    push: tuple[np.ndarray, np.ndarray] | None = None  # mask (N,), velocity (N, 3)


def _uniform(rng, r: Range, shape) -> np.ndarray:
    return rng.uniform(r[0], r[1], size=shape)


def _draw_physical(ranges: RandomizationRanges, rng, n: int, j: int) -> dict[str, np.ndarray]:
    return {
        "motor_strength": _uniform(rng, ranges.motor_strength, (n, j)),
        "p_gain_factor": _uniform(rng, ranges.p_gain_factor, (n, j)),
        "d_gain_factor": _uniform(rng, ranges.d_gain_factor, (n, j)),
        "joint_position_offset": _uniform(rng, ranges.joint_position_offset, (n, j)),
        "static_friction": _uniform(rng, ranges.static_friction, (n,)),
        "dynamic_friction": _uniform(rng, ranges.dynamic_friction, (n,)),
        "restitution": _uniform(rng, ranges.restitution, (n,)),
        "added_mass": _uniform(rng, ranges.added_mass, (n,)),
        "gravity": _uniform(rng, ranges.gravity, (n,)),
        "joint_friction": _uniform(rng, ranges.joint_friction, (n, j)),
        "joint_armature": _uniform(rng, ranges.joint_armature, (n, j)),
    }


def sample_randomization(
    ranges: RandomizationRanges,
    k: float,
    rng: np.random.Generator,
    phase: str,
    joint_count: int,
    size: int = 1,
) -> RandomizationDraw:
    """Draw all randomized quantities of one phase for ``size`` environments."""
    if phase not in ("episode-start", "per-step"):
        raise ValueError(f"unknown phase {phase!r}")
    r = scaled_ranges(ranges, k)
    n, j = size, joint_count
    if phase == "episode-start":
        starting = {
            "orientation_factor": _uniform(rng, r.starting_orientation_factor, (n, 2)),
            "joint_position_factor": _uniform(rng, r.starting_joint_position_factor, (n, j)),
            "joint_velocity_factor": _uniform(rng, r.starting_joint_velocity_factor, (n, j)),
            "linear_velocity": _uniform(rng, r.starting_linear_velocity, (n, 3)),
            "angular_velocity": _uniform(rng, r.starting_angular_velocity, (n, 3)),
        }
        return RandomizationDraw(
            phase=phase, starting=starting, physical=_draw_physical(r, rng, n, j)
        )

    noise = {
        "joint_position": _uniform(rng, (-r.joint_position_noise, r.joint_position_noise), (n, j)),
        "joint_velocity": _uniform(rng, (-r.joint_velocity_noise, r.joint_velocity_noise), (n, j)),
        "angular_velocity": _uniform(
            rng, (-r.angular_velocity_noise, r.angular_velocity_noise), (n, 3)
        ),
        "gravity_vector": _uniform(
            rng, (-r.gravity_vector_noise, r.gravity_vector_noise), (n, 3)
        ),
    }
    dropout = rng.random((n, j)) < r.joint_obs_dropout_chance
    delayed = rng.random(n) < r.action_delay_chance
    fresh = _draw_physical(r, rng, n, j)
    resample = {
        name: (rng.random(n) < RESAMPLE_CHANCE, value) for name, value in fresh.items()
    }
    push_mask = rng.random(n) < RESAMPLE_CHANCE
    push_vel = np.stack(
        [
            _uniform(rng, r.push_x, (n,)),
            _uniform(rng, r.push_y, (n,)),
            _uniform(rng, r.push_z, (n,)),
        ],
        axis=1,
    )
    return RandomizationDraw(
        phase=phase,
        noise=noise,
        dropout_mask=dropout,
        action_delayed=delayed,
        resample=resample,
        push=(push_mask, push_vel),
    )
