"""Fixed-step 2D rigid-disk dynamics.

Motor commands set kinematic target velocities (capped in mm/s and
rad/s); free bodies coast under exponential damping. Contacts are
resolved with restitution/friction impulses before integration and
iterative positional de-penetration after it. Membranes are chains of
small disk links joined by fixed-length distance constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pogosim import kernels
from pogosim.config import ObjectSpec
from pogosim.world import Arena, MEMBRANE_LINK_RADIUS, WorldObject

MOTOR_DUTY_MAX = 1023  # Pogobot platform convention
PENETRATION_SLOP = 0.02  # mm
CORRECTION_FACTOR = 0.8  # Baumgarte-style positional correction per pass
CORRECTION_PASSES = 64  # upper bound; the loop exits once contacts converge
CORRECTION_TOLERANCE = 0.05  # mm of overlap beyond the slop that may remain
# walls are static, so full projection is stable and keeps crowded robots
# from being wedged through the boundary by disk-disk corrections
WALL_CORRECTION_FACTOR = 1.0
MEMBRANE_ITERATIONS = 8


@dataclass(frozen=True)
class MotorCommand:
    """Duty-cycle commands for the two motors; duty clamped to [0, 1023]."""

    left: int = 0
    right: int = 0
    left_dir: str = "stop"  # forward | backward | stop
    right_dir: str = "stop"

    def signed_duties(self) -> tuple[float, float]:
        def signed(duty, direction):
            duty = min(max(int(duty), 0), MOTOR_DUTY_MAX)
            if direction == "stop":
                return 0.0
            sign = -1.0 if direction == "backward" else 1.0
            return sign * duty / MOTOR_DUTY_MAX

        return signed(self.left, self.left_dir), signed(self.right, self.right_dir)


@dataclass
class Body:
    """Snapshot view of one physics body (engine state lives in arrays)."""

    position: tuple[float, float]
    angle: float
    linear_velocity: tuple[float, float]
    angular_velocity: float
    radius: float
    mass: float


def motors_to_twist(cmd: MotorCommand, spec: ObjectSpec) -> tuple[float, float]:
    """Differential-drive map from duty cycles to a capped (v, omega) twist."""
    d_left, d_right = cmd.signed_duties()
    v = spec.max_linear_speed * 0.5 * (d_left + d_right)
    omega = spec.max_angular_speed * (d_right - d_left)
    v = min(max(v, -spec.max_linear_speed), spec.max_linear_speed)
    omega = min(max(omega, -spec.max_angular_speed), spec.max_angular_speed)
    return v, omega


class PhysicsEngine:
    """Mutable simulation state for all dynamic bodies in one arena."""

    def __init__(self, arena: Arena | None):
        self.arena = arena
        if arena is not None:
            segs = arena.wall_segments
            self._seg_a = np.ascontiguousarray(segs[:, 0], dtype=np.float64)
            self._seg_b = np.ascontiguousarray(segs[:, 1], dtype=np.float64)
        else:
            self._seg_a = np.empty((0, 2))
            self._seg_b = np.empty((0, 2))
        self._rows: list[dict] = []
        self._constraints: list[tuple[int, int, float]] = []
        self._built = False

    # -- construction ------------------------------------------------------

    def add_disk(self, x, y, angle=0.0, radius=26.5, density=10.0,
                 linear_damping=0.3, angular_damping=0.3,
                 friction=0.3, restitution=0.5,
                 max_linear_speed=math.inf, max_angular_speed=math.inf,
                 linear_noise_stddev=0.0, angular_noise_stddev=0.0,
                 driven=False) -> int:
        if self._built:
            raise RuntimeError("cannot add bodies after the first step")
        mass = density * math.pi * radius ** 2
        self._rows.append(dict(
            x=x, y=y, angle=angle, radius=radius, mass=mass,
            lin_damp=linear_damping, ang_damp=angular_damping,
            friction=friction, restitution=restitution,
            max_lin=max_linear_speed, max_ang=max_angular_speed,
            lin_noise=linear_noise_stddev, ang_noise=angular_noise_stddev,
            driven=driven))
        return len(self._rows) - 1

    def add_distance_constraint(self, i: int, j: int, rest_length: float) -> None:
        self._constraints.append((i, j, rest_length))

    def _build(self) -> None:
        n = len(self._rows)
        get = lambda key: np.array([r[key] for r in self._rows], dtype=np.float64)
        self.pos = np.stack([get("x"), get("y")], axis=1) if n else np.empty((0, 2))
        self.angle = get("angle")
        self.vel = np.zeros((n, 2))
        self.ang_vel = np.zeros(n)
        self.radius = get("radius")
        self.mass = get("mass")
        self.inv_mass = np.where(self.mass > 0, 1.0 / np.maximum(self.mass, 1e-30), 0.0)
        self.lin_damp = get("lin_damp")
        self.ang_damp = get("ang_damp")
        self.friction = get("friction")
        self.restitution = get("restitution")
        self.max_lin = get("max_lin")
        self.max_ang = get("max_ang")
        self.lin_noise = get("lin_noise")
        self.ang_noise = get("ang_noise")
        self.driven = np.array([r["driven"] for r in self._rows], dtype=bool)
        self.target_v = np.zeros(n)
        self.target_w = np.zeros(n)
        if self._constraints:
            self._ci = np.array([c[0] for c in self._constraints], dtype=np.int64)
            self._cj = np.array([c[1] for c in self._constraints], dtype=np.int64)
            self._clen = np.array([c[2] for c in self._constraints], dtype=np.float64)
        else:
            self._ci = np.empty(0, dtype=np.int64)
            self._cj = np.empty(0, dtype=np.int64)
            self._clen = np.empty(0, dtype=np.float64)
        self._has_noise = bool(np.any(self.lin_noise > 0) or np.any(self.ang_noise > 0))
        self._built = True

    @property
    def n_bodies(self) -> int:
        return len(self._rows)

    def body(self, i: int) -> Body:
        if not self._built:
            self._build()
        return Body(position=(float(self.pos[i, 0]), float(self.pos[i, 1])),
                    angle=float(self.angle[i]),
                    linear_velocity=(float(self.vel[i, 0]), float(self.vel[i, 1])),
                    angular_velocity=float(self.ang_vel[i]),
                    radius=float(self.radius[i]),
                    mass=float(self.mass[i]))

    # -- control -----------------------------------------------------------

    def set_twist_target(self, i: int, v: float, omega: float) -> None:
        if not self._built:
            self._build()
        self.target_v[i] = v
        self.target_w[i] = omega

    def set_velocity(self, i: int, vx: float, vy: float, omega: float = 0.0) -> None:
        if not self._built:
            self._build()
        self.vel[i] = (vx, vy)
        self.ang_vel[i] = omega

    # -- stepping ----------------------------------------------------------

    def step(self, dt: float, rng: np.random.Generator | None = None) -> None:
        """Advance all bodies by dt seconds. Deterministic given rng state."""
        if dt <= 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        if not self._built:
            self._build()
        n = self.n_bodies
        if n == 0:
            return

        driven = self.driven
        # kinematic targets (+ per-step Gaussian twist noise)
        tv = self.target_v[driven]
        tw = self.target_w[driven]
        if self._has_noise and rng is not None:
            tv = tv + rng.standard_normal(tv.shape) * self.lin_noise[driven]
            tw = tw + rng.standard_normal(tw.shape) * self.ang_noise[driven]
        heading = self.angle[driven]
        self.vel[driven, 0] = tv * np.cos(heading)
        self.vel[driven, 1] = tv * np.sin(heading)
        self.ang_vel[driven] = tw

        free = ~driven
        self.vel[free] *= np.exp(-self.lin_damp[free] * dt)[:, None]
        self.ang_vel[free] *= np.exp(-self.ang_damp[free] * dt)

        # contact impulses from current overlaps, then integrate
        if n > 1:
            cutoff = 2.0 * float(self.radius.max())
            pi, pj = kernels.sorted_pairs(self.pos, cutoff)
            if len(pi):
                kernels.disk_impulses(self.pos, self.vel, self.radius, self.inv_mass,
                                      self.restitution, self.friction, pi, pj)
        if len(self._seg_a):
            kernels.wall_impulses(self.pos, self.vel, self.radius, self._seg_a,
                                  self._seg_b, self.restitution, self.friction)

        self.pos += self.vel * dt
        self.angle = np.arctan2(np.sin(self.angle + self.ang_vel * dt),
                                np.cos(self.angle + self.ang_vel * dt))

        # positional de-penetration: iterate until the contact set converges
        # (Gauss-Seidel projection needs sweeps ~ the jammed-cluster diameter,
        # so a fixed small pass count leaves residual overlap under crowding)
        for _ in range(CORRECTION_PASSES):
            worst = 0.0
            if n > 1:
                pi, pj = kernels.sorted_pairs(self.pos, 2.0 * float(self.radius.max()))
                if len(pi):
                    worst = kernels.disk_corrections(
                        self.pos, self.radius, self.inv_mass,
                        pi, pj, PENETRATION_SLOP, CORRECTION_FACTOR)
            if len(self._seg_a):
                worst = max(worst, kernels.wall_corrections(
                    self.pos, self.radius, self._seg_a, self._seg_b,
                    PENETRATION_SLOP, WALL_CORRECTION_FACTOR))
            if worst <= PENETRATION_SLOP + CORRECTION_TOLERANCE:
                break

        if len(self._ci):
            kernels.distance_constraints(self.pos, self.inv_mass, self._ci, self._cj,
                                         self._clen, MEMBRANE_ITERATIONS)

        # speed caps
        speed = np.linalg.norm(self.vel, axis=1)
        over = speed > self.max_lin
        if np.any(over):
            self.vel[over] *= (self.max_lin[over] / speed[over])[:, None]
        self.ang_vel = np.clip(self.ang_vel, -self.max_ang, self.max_ang)


def build_engine(objects: list[WorldObject], arena: Arena) -> PhysicsEngine:
    """Create bodies for every placed world object and record their indices."""
    engine = PhysicsEngine(arena)
    for obj in objects:
        spec = obj.spec
        if obj.kind in ("pogobot", "pogobject", "passive_object"):
            obj.body_index = engine.add_disk(
                obj.pose[0], obj.pose[1], obj.pose[2],
                radius=spec.radius, density=spec.body_density,
                linear_damping=spec.body_linear_damping,
                angular_damping=spec.body_angular_damping,
                friction=spec.body_friction, restitution=spec.body_restitution,
                max_linear_speed=spec.max_linear_speed,
                max_angular_speed=spec.max_angular_speed,
                linear_noise_stddev=spec.linear_noise_stddev,
                angular_noise_stddev=spec.angular_noise_stddev,
                driven=obj.kind in ("pogobot", "pogobject"))
        elif obj.kind == "membrane":
            links = obj.link_positions
            first = None
            prev = None
            for x, y in links:
                idx = engine.add_disk(
                    float(x), float(y), 0.0,
                    radius=MEMBRANE_LINK_RADIUS, density=spec.body_density,
                    linear_damping=spec.body_linear_damping,
                    angular_damping=spec.body_angular_damping,
                    friction=spec.body_friction, restitution=spec.body_restitution)
                if first is None:
                    first = idx
                    obj.body_index = idx
                if prev is not None:
                    rest = float(np.hypot(*(links[idx - first] - links[idx - first - 1])))
                    engine.add_distance_constraint(prev, idx, rest)
                prev = idx
            if first is not None and prev is not None and prev != first:
                rest = float(np.hypot(*(links[0] - links[-1])))
                engine.add_distance_constraint(prev, first, rest)
    return engine
