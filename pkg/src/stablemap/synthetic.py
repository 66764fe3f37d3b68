"""Deterministic multi-session synthetic scenes with exact ground truth.

Desk-scale stand-in for real parking-lot recordings: a ground plane with
persistent structure (poles, trees, wall segments), car-like boxes that
relocate or disappear between sessions, and sparse "ghost" streaks that
exist in a single session.  Every session is expressed in its own randomly
perturbed frame with the exact inverse transform recorded, so the whole
pipeline (ground removal, registration, labelling) can be verified against
known answers.
"""

from dataclasses import dataclass, field

import numpy as np

from .cloud import PointCloud
from .registration import RigidTransform

__all__ = ["SceneSpec", "SessionBundle", "generate_scene"]

_MARGIN = 1.5  # keep object centers this far from the extent border, meters


@dataclass
class SceneSpec:
    """Scene composition and sampling parameters.

    Static objects persist across all sessions; each dynamic box follows a
    per-session schedule of poses (or absence).  Schedules are generated
    from the seed unless given explicitly as
    ``dynamic_schedules[box][session] = (x, y, yaw) | None``.
    """

    extent: tuple[float, float] = (40.0, 30.0)
    sessions: int = 5
    n_poles: int = 3
    n_trees: int = 3
    n_walls: int = 2
    n_dynamic: int = 6
    ghost_trails: int = 1
    sensor_noise_sigma: float = 0.01
    ground_density: float = 20.0
    surface_density: float = 60.0
    max_perturb_rotation_deg: float = 10.0
    max_perturb_translation: float = 2.0
    min_separation: float = 4.5
    absence_probability: float = 0.15
    seed: int = 0
    dynamic_schedules: list | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.sessions < 2:
            raise ValueError("sessions must be at least 2")
        if self.extent[0] <= 0 or self.extent[1] <= 0:
            raise ValueError("extent must be positive")
        if self.ground_density <= 0 or self.surface_density <= 0:
            raise ValueError("densities must be positive")

    @property
    def n_static(self) -> int:
        return self.n_poles + self.n_trees + self.n_walls


@dataclass
class SessionBundle:
    """Raw session clouds plus exact per-point truth.

    clouds : one PointCloud per session, in that session's perturbed frame,
        with per-point ground truth attached (0 stable, 1 dynamic)
    ground_masks : per-session boolean mask of ground-plane points
    transforms_to_reference : rigid transform mapping each session's frame
        into the reference (session 0) frame; exactly inverts the injected
        perturbation
    """

    clouds: list[PointCloud]
    ground_masks: list[np.ndarray]
    transforms_to_reference: list[RigidTransform]
    spec: SceneSpec

    def __len__(self) -> int:
        return len(self.clouds)


def _surface_count(area: float, density: float) -> int:
    return max(1, int(round(area * density)))


def _sample_cylinder(rng, radius: float, height: float, density: float) -> np.ndarray:
    n = _surface_count(2.0 * np.pi * radius * height, density)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    z = rng.uniform(0.0, height, n)
    return np.column_stack([radius * np.cos(theta), radius * np.sin(theta), z])


def _sample_sphere(rng, radius: float, density: float) -> np.ndarray:
    n = _surface_count(4.0 * np.pi * radius * radius, density)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v


def _sample_wall(rng, length: float, height: float, density: float) -> np.ndarray:
    n = _surface_count(length * height, density)
    u = rng.uniform(-length / 2.0, length / 2.0, n)
    z = rng.uniform(0.0, height, n)
    return np.column_stack([u, np.zeros(n), z])


def _sample_box(rng, lx: float, ly: float, h: float, density: float) -> np.ndarray:
    """Car-like cuboid: four side faces plus top, no bottom, centered in xy."""
    faces = []
    for sign in (-1.0, 1.0):
        n = _surface_count(ly * h, density)
        faces.append(
            np.column_stack(
                [np.full(n, sign * lx / 2.0), rng.uniform(-ly / 2, ly / 2, n), rng.uniform(0, h, n)]
            )
        )
        n = _surface_count(lx * h, density)
        faces.append(
            np.column_stack(
                [rng.uniform(-lx / 2, lx / 2, n), np.full(n, sign * ly / 2.0), rng.uniform(0, h, n)]
            )
        )
    n = _surface_count(lx * ly, density)
    faces.append(
        np.column_stack(
            [rng.uniform(-lx / 2, lx / 2, n), rng.uniform(-ly / 2, ly / 2, n), np.full(n, h)]
        )
    )
    return np.vstack(faces)


def _sample_ghost(rng, extent) -> np.ndarray:
    """Sparse linear streak left by an object moving during recording."""
    length = rng.uniform(5.0, 10.0)
    n = int(rng.integers(40, 80))
    x0 = rng.uniform(_MARGIN, extent[0] - _MARGIN)
    y0 = rng.uniform(_MARGIN, extent[1] - _MARGIN)
    heading = rng.uniform(0.0, 2.0 * np.pi)
    z = rng.uniform(0.3, 1.5)
    t = rng.uniform(0.0, length, n)
    pts = np.column_stack(
        [x0 + t * np.cos(heading), y0 + t * np.sin(heading), np.full(n, z)]
    )
    pts += rng.normal(scale=0.05, size=pts.shape)
    np.clip(pts[:, 0], 0.1, extent[0] - 0.1, out=pts[:, 0])
    np.clip(pts[:, 1], 0.1, extent[1] - 0.1, out=pts[:, 1])
    return pts


def _place(rng, extent, occupied: list, min_sep: float) -> tuple[float, float]:
    if extent[0] <= 2 * _MARGIN or extent[1] <= 2 * _MARGIN:
        raise ValueError("impossible placement (object outside extent)")
    for _ in range(10000):
        x = rng.uniform(_MARGIN, extent[0] - _MARGIN)
        y = rng.uniform(_MARGIN, extent[1] - _MARGIN)
        if all((x - ox) ** 2 + (y - oy) ** 2 >= min_sep**2 for ox, oy in occupied):
            occupied.append((x, y))
            return x, y
    raise ValueError("impossible placement (object outside extent)")


def _yaw_pose(points: np.ndarray, x: float, y: float, yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    out = points.copy()
    out[:, 0] = points[:, 0] * c - points[:, 1] * s + x
    out[:, 1] = points[:, 0] * s + points[:, 1] * c + y
    return out


def _perturbation(rng, max_rot_deg: float, max_trans: float) -> RigidTransform:
    yaw = rng.uniform(-np.deg2rad(max_rot_deg), np.deg2rad(max_rot_deg))
    tz = rng.uniform(-0.1, 0.1)
    planar_budget = np.sqrt(max(max_trans**2 - tz**2, 0.0))
    angle = rng.uniform(0.0, 2.0 * np.pi)
    radius = rng.uniform(0.0, planar_budget)
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    trans = np.array([radius * np.cos(angle), radius * np.sin(angle), tz])
    return RigidTransform(rot, trans)


def generate_scene(spec: SceneSpec) -> SessionBundle:
    """Generate all session clouds of a scene; bit-reproducible per seed.

    Static object point sets are sampled once and shared by every session;
    dynamic boxes are sampled once and re-posed per their schedule; noise
    and frame perturbations are applied last, after ground-truth classes
    are assigned.  Session 0 is the unperturbed reference.
    """
    root = np.random.SeedSequence(spec.seed)
    keys = root.spawn(6)
    rng_place = np.random.default_rng(keys[0])
    rng_ground = np.random.default_rng(keys[1])
    rng_static = np.random.default_rng(keys[2])
    rng_dynamic = np.random.default_rng(keys[3])
    rng_ghost = np.random.default_rng(keys[4])
    session_keys = keys[5].spawn(spec.sessions)

    ex, ey = spec.extent
    occupied: list[tuple[float, float]] = []

    # ground plane
    n_ground = _surface_count(ex * ey, spec.ground_density)
    ground = np.column_stack(
        [
            rng_ground.uniform(0.0, ex, n_ground),
            rng_ground.uniform(0.0, ey, n_ground),
            np.zeros(n_ground),
        ]
    )

    # static structure, world frame
    static_parts = []
    for _ in range(spec.n_poles):
        x, y = _place(rng_place, spec.extent, occupied, spec.min_separation)
        radius = rng_static.uniform(0.1, 0.18)
        height = rng_static.uniform(4.0, 6.0)
        pts = _sample_cylinder(rng_static, radius, height, spec.surface_density)
        pts[:, 0] += x
        pts[:, 1] += y
        static_parts.append(pts)
    for _ in range(spec.n_trees):
        x, y = _place(rng_place, spec.extent, occupied, spec.min_separation)
        trunk_r = rng_static.uniform(0.15, 0.25)
        trunk_h = rng_static.uniform(2.0, 3.0)
        crown_r = rng_static.uniform(1.0, 1.6)
        trunk = _sample_cylinder(rng_static, trunk_r, trunk_h, spec.surface_density)
        crown = _sample_sphere(rng_static, crown_r, spec.surface_density)
        crown[:, 2] += trunk_h + 0.6 * crown_r
        pts = np.vstack([trunk, crown])
        pts[:, 0] += x
        pts[:, 1] += y
        static_parts.append(pts)
    for _ in range(spec.n_walls):
        x, y = _place(rng_place, spec.extent, occupied, spec.min_separation)
        length = rng_static.uniform(8.0, 12.0)
        height = rng_static.uniform(2.5, 3.5)
        yaw = rng_static.uniform(0.0, np.pi)
        pts = _yaw_pose(_sample_wall(rng_static, length, height, spec.surface_density), x, y, yaw)
        np.clip(pts[:, 0], 0.1, ex - 0.1, out=pts[:, 0])
        np.clip(pts[:, 1], 0.1, ey - 0.1, out=pts[:, 1])
        static_parts.append(pts)
    statics = np.vstack(static_parts) if static_parts else np.zeros((0, 3))

    # dynamic boxes: geometry sampled once, schedule decides per-session pose
    box_points = []
    for _ in range(spec.n_dynamic):
        lx = rng_dynamic.uniform(3.5, 4.5)
        ly = rng_dynamic.uniform(1.7, 2.0)
        h = rng_dynamic.uniform(1.4, 1.7)
        box_points.append(_sample_box(rng_dynamic, lx, ly, h, spec.surface_density))

    if spec.dynamic_schedules is not None:
        schedules = spec.dynamic_schedules
        if len(schedules) != spec.n_dynamic:
            raise ValueError("need one schedule per dynamic object")
        for schedule in schedules:
            for pose in schedule:
                if pose is None:
                    continue
                x, y = pose[0], pose[1]
                if not (0 < x < ex and 0 < y < ey):
                    raise ValueError("impossible placement (object outside extent)")
    else:
        schedules = []
        for _ in range(spec.n_dynamic):
            schedule = []
            for _k in range(spec.sessions):
                if rng_place.uniform() < spec.absence_probability:
                    schedule.append(None)
                else:
                    x, y = _place(rng_place, spec.extent, occupied, spec.min_separation)
                    schedule.append((x, y, rng_place.uniform(0.0, np.pi)))
            if all(p is None for p in schedule):
                x, y = _place(rng_place, spec.extent, occupied, spec.min_separation)
                schedule[0] = (x, y, 0.0)
            schedules.append(schedule)

    # ghosts: each exists in exactly one session
    ghosts = [_sample_ghost(rng_ghost, spec.extent) for _ in range(spec.ghost_trails)]
    ghost_sessions = [int(rng_ghost.integers(spec.sessions)) for _ in ghosts]

    clouds = []
    ground_masks = []
    transforms = []
    for k in range(spec.sessions):
        parts = [ground, statics]
        classes = [np.zeros(len(ground), dtype=np.int8), np.zeros(len(statics), dtype=np.int8)]
        for box, schedule in zip(box_points, schedules):
            pose = schedule[k]
            if pose is None:
                continue
            posed = _yaw_pose(box, pose[0], pose[1], pose[2])
            parts.append(posed)
            classes.append(np.ones(len(posed), dtype=np.int8))
        for ghost, owner in zip(ghosts, ghost_sessions):
            if owner == k:
                parts.append(ghost)
                classes.append(np.ones(len(ghost), dtype=np.int8))

        world = np.vstack(parts)
        gt = np.concatenate(classes)
        ground_mask = np.zeros(len(world), dtype=bool)
        ground_mask[: len(ground)] = True

        rng_session = np.random.default_rng(session_keys[k])
        if k == 0:
            perturb = RigidTransform.identity()
        else:
            perturb = _perturbation(
                rng_session, spec.max_perturb_rotation_deg, spec.max_perturb_translation
            )
        positions = perturb.apply(world)
        positions = positions + rng_session.normal(
            scale=spec.sensor_noise_sigma, size=positions.shape
        )

        clouds.append(PointCloud(positions, gt=gt, frame_id=f"session_{k}"))
        ground_masks.append(ground_mask)
        transforms.append(perturb.inverse())

    return SessionBundle(
        clouds=clouds,
        ground_masks=ground_masks,
        transforms_to_reference=transforms,
        spec=spec,
    )
