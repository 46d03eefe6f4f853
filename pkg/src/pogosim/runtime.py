"""Simulation scheduler and the controller-facing robot API.

Every robot runs the same hook functions over its own isolated local
state (``api.data``); the scheduler services due robots in ascending id
order, runs the message pipeline between controller ticks and advances
physics at a fixed time step. Runs are deterministic for a fixed
configuration seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace
from typing import Callable, Optional

import numpy as np

from pogosim import comm, physics, recorder as recorder_mod, world as world_mod
from pogosim.config import SimConfig, resolve_parameter
from pogosim.physics import MotorCommand, motors_to_twist
from pogosim.recorder import ExportBuffer, Recorder, SchemaBuilder
from pogosim.world import WorldObject

GRAVITY_MMS2 = 9810.0  # z-axis accelerometer bias
DEFAULT_MAIN_LOOP_HZ = 60.0
CONTROLLABLE_KINDS = ("pogobot", "pogobject", "pogowall", "membrane")


class ControllerError(RuntimeError):
    """A hook raised; carries the robot id and tick for context."""


class ApiUsageError(RuntimeError):
    """The robot API was called outside a hook invocation."""


@dataclass
class ControllerHooks:
    """The controller program shared by all robots of a category."""

    user_init: Callable
    user_step: Callable
    msg_rx_fn: Optional[Callable] = None
    msg_tx_fn: Optional[Callable] = None
    callback_create_data_schema: Optional[Callable] = None
    callback_export_data: Optional[Callable] = None


@dataclass
class SensorSnapshot:
    photosensor_levels: tuple[int, int, int]
    imu_accel: tuple[float, float, float]  # mm/s^2
    imu_gyro: tuple[float, float, float]  # rad/s
    temperature: float  # degrees C


class RobotAPI:
    """Controller-visible surface of one robot.

    Callable only while a hook of this robot is executing; `data` is the
    robot's private storage (never shared across robots).
    """

    def __init__(self, runtime: "RobotRuntime"):
        self._rt = runtime
        self._active = False
        self.data = SimpleNamespace()
        # controller-settable loop parameters
        self.main_loop_hz = DEFAULT_MAIN_LOOP_HZ
        self.max_nb_processed_msg_per_tick = 3
        self.percent_msgs_sent_per_ticks = 0.0

    def _check(self):
        if not self._active:
            raise ApiUsageError(
                f"robot {self._rt.obj.id}: API used outside a hook invocation")

    # -- identity & time ----------------------------------------------------

    @property
    def id(self) -> int:
        self._check()
        return self._rt.obj.id

    @property
    def ticks(self) -> int:
        self._check()
        return self._rt.ticks

    def millis(self) -> int:
        self._check()
        return int(self._rt.sim.t * 1000.0)

    def param(self, name, default=None):
        self._check()
        if default is not None and name not in self._rt.sim.config.parameters:
            return default
        return resolve_parameter(self._rt.sim.config, name)

    # -- randomness (per-robot stream) ---------------------------------------

    def random(self) -> float:
        self._check()
        return float(self._rt.rng.random())

    def randint(self, low, high) -> int:
        self._check()
        return int(self._rt.rng.integers(low, high + 1))

    def uniform(self, low, high) -> float:
        self._check()
        return float(self._rt.rng.uniform(low, high))

    # -- actuators ------------------------------------------------------------

    def set_motors(self, left=0, right=0, left_dir="stop", right_dir="stop"):
        self._check()
        self._rt.motor_state = MotorCommand(left, right, left_dir, right_dir)

    def set_motor_command(self, cmd: MotorCommand):
        self._check()
        self._rt.motor_state = cmd

    def set_led(self, index, rgb):
        self._check()
        r, g, b = (int(c) for c in rgb)
        while len(self._rt.led_colors) <= index:
            self._rt.led_colors.append((0, 0, 0))
        self._rt.led_colors[index] = (r, g, b)

    # -- sensors ----------------------------------------------------------------

    def read_photosensors(self) -> tuple[int, int, int]:
        self._check()
        rt = self._rt
        x, y, a = rt.obj.pose
        r = rt.obj.spec.radius
        levels = []
        for offset in (-math.pi / 4, 0.0, math.pi / 4):  # back-left, front, back-right
            px = x + r * math.cos(a + offset)
            py = y + r * math.sin(a + offset)
            levels.append(world_mod.sample_light(rt.sim.lights, (px, py), rt.sim.t))
        return tuple(levels)

    def read_imu(self) -> SensorSnapshot:
        self._check()
        rt = self._rt
        dt = rt.sim.config.time_step
        vel = rt.sim.velocity_of(rt.obj)
        accel_xy = (vel - rt.last_velocity) / dt if dt > 0 else np.zeros(2)
        rt.last_velocity = vel.copy()
        return SensorSnapshot(
            photosensor_levels=self.read_photosensors(),
            imu_accel=(float(accel_xy[0]), float(accel_xy[1]), GRAVITY_MMS2),
            imu_gyro=(0.0, 0.0, float(rt.sim.angular_velocity_of(rt.obj))),
            temperature=rt.sim.config.arena_temperature,
        )

    # -- messaging -----------------------------------------------------------------

    def send_short(self, payload: bytes, direction: str = "omni") -> None:
        self._check()
        self._rt.queue_message("short", payload, direction)

    def send_long(self, payload: bytes, direction: str = "omni") -> None:
        self._check()
        self._rt.queue_message("long", payload, direction)

    # -- console -------------------------------------------------------------------

    def printf(self, text: str) -> None:
        self._check()
        self._rt.sim.console_write(self._rt.obj.id, text)


class RobotRuntime:
    """Scheduler-side state of one controllable object."""

    def __init__(self, sim: "Simulation", obj: WorldObject, hooks: ControllerHooks,
                 rng: np.random.Generator, phase: float = 0.0):
        self.sim = sim
        self.obj = obj
        self.hooks = hooks
        self.rng = rng
        self.ticks = 0
        self.phase = phase  # fraction of a tick period, in [0, 1)
        self.motor_state = MotorCommand()
        self.led_colors = [(0, 0, 0)]
        self.inbox = comm.Inbox()
        self.last_velocity = np.zeros(2)
        self.api = RobotAPI(self)
        self._outbox: list[comm.Message] = []

    def queue_message(self, kind, payload, direction):
        self._outbox.append(comm.Message(
            kind=kind, sender_id=self.obj.id, payload=bytes(payload),
            emitter_dir=direction, sender_category=self.obj.category))

    def call(self, hook, *args):
        self.api._active = True
        try:
            return hook(self.api, *args)
        except Exception as exc:
            raise ControllerError(
                f"robot {self.obj.id} ({self.obj.category}) failed at tick "
                f"{self.ticks}: {exc}") from exc
        finally:
            self.api._active = False

    def next_tick_time(self) -> float:
        return (self.ticks + self.phase) / self.api.main_loop_hz

    def run_tick(self) -> list[comm.Message]:
        """rx -> tx -> user_step, in the documented order."""
        for _ in range(int(self.api.max_nb_processed_msg_per_tick)):
            msg = self.inbox.pop()
            if msg is None:
                break
            if self.hooks.msg_rx_fn is not None:
                self.call(self.hooks.msg_rx_fn, msg)
        if self.hooks.msg_tx_fn is not None:
            if self.rng.random() < self.api.percent_msgs_sent_per_ticks / 100.0:
                self.call(self.hooks.msg_tx_fn)
        self.call(self.hooks.user_step)
        self.ticks += 1
        out, self._outbox = self._outbox, []
        return out


@dataclass
class RunArtifacts:
    recorder: Recorder
    objects: list[WorldObject]
    runtimes: dict[int, RobotRuntime]
    arena: object
    console_lines: list[str] = field(default_factory=list)
    data_path: Optional[Path] = None

    @property
    def table(self):
        return self.recorder.to_table()

    def record_bytes(self) -> bytes:
        return self.recorder.to_bytes()


class Simulation:
    """One deterministic run of a configuration with per-category hooks."""

    def __init__(self, config: SimConfig, hooks_by_category: dict[str, ControllerHooks],
                 base_dir=".", write_outputs: bool = False):
        self.config = config
        self.base_dir = Path(base_dir)
        self.write_outputs = write_outputs
        self.t = 0.0

        seed_seq = np.random.SeedSequence(config.seed)
        seq_place, seq_comm, seq_phys, seq_robots = seed_seq.spawn(4)
        self._comm_rng = np.random.default_rng(seq_comm)
        self._phys_rng = np.random.default_rng(seq_phys)

        self.arena = world_mod.load_arena_for_config(config, search_dir=base_dir)
        self.objects = world_mod.place_initial(config, self.arena,
                                               np.random.default_rng(seq_place))
        self.lights = world_mod.light_fields(config, self.arena)
        self.engine = physics.build_engine(self.objects, self.arena)

        missing = [o.category for o in self.objects
                   if o.kind in ("pogobot", "pogobject") and o.category not in hooks_by_category]
        if missing:
            raise ValueError(f"no controller hooks for categories: {sorted(set(missing))}")

        self.runtimes: dict[int, RobotRuntime] = {}
        robot_seqs = iter(seq_robots.spawn(sum(
            1 for o in self.objects if o.kind in CONTROLLABLE_KINDS and o.category in hooks_by_category)))
        phase_rng = np.random.default_rng(seed_seq.spawn(1)[0])
        for obj in self.objects:
            if obj.kind not in CONTROLLABLE_KINDS or obj.category not in hooks_by_category:
                continue
            phase = float(phase_rng.random()) if config.random_tick_phase else 0.0
            rt = RobotRuntime(self, obj, hooks_by_category[obj.category],
                              np.random.default_rng(next(robot_seqs)), phase=phase)
            self.runtimes[obj.id] = rt

        self._neighbor_cache: dict[int, list] = {}
        self._cache_poses: Optional[np.ndarray] = None

        self.recorder = Recorder(config, path=self.base_dir / config.data_filename)
        self._build_schema()
        self.console_lines: list[str] = []
        self._console_fh = None

    # -- helpers -----------------------------------------------------------

    def _build_schema(self):
        builder = SchemaBuilder(self.recorder.schema)
        seen = set()
        for rt in self._ordered_runtimes():
            hook = rt.hooks.callback_create_data_schema
            if hook is not None and id(hook) not in seen:
                seen.add(id(hook))
                rt.call(hook, builder)

    def _ordered_runtimes(self):
        return [self.runtimes[i] for i in sorted(self.runtimes)]

    def velocity_of(self, obj: WorldObject) -> np.ndarray:
        if obj.body_index >= 0:
            return self.engine.vel[obj.body_index].copy()
        return np.zeros(2)

    def angular_velocity_of(self, obj: WorldObject) -> float:
        if obj.body_index >= 0:
            return float(self.engine.ang_vel[obj.body_index])
        return 0.0

    def console_write(self, robot_id: int, text: str):
        line = f"[robot {robot_id}] {text.rstrip()}"
        self.console_lines.append(line)
        if self._console_fh is not None:
            self._console_fh.write(line + "\n")

    def _sync_objects_from_engine(self):
        for obj in self.objects:
            if obj.kind in ("pogobot", "pogobject", "passive_object") and obj.body_index >= 0:
                i = obj.body_index
                obj.pose = (float(self.engine.pos[i, 0]), float(self.engine.pos[i, 1]),
                            float(self.engine.angle[i]))
            elif obj.kind == "membrane" and obj.link_positions is not None:
                start = obj.body_index
                n = len(obj.link_positions)
                obj.link_positions = self.engine.pos[start:start + n].copy()
                center = obj.link_positions.mean(axis=0)
                obj.pose = (float(center[0]), float(center[1]), float("nan"))

    def _apply_motor_targets(self):
        for rt in self.runtimes.values():
            if rt.obj.body_index < 0 or rt.obj.kind not in ("pogobot", "pogobject"):
                continue
            v, w = motors_to_twist(rt.motor_state, rt.obj.spec)
            self.engine.set_twist_target(rt.obj.body_index, v, w)

    def _sender_links(self, rt: RobotRuntime):
        """Links for this sender, cached while no body has moved or turned."""
        if not self.engine._built:
            self.engine._build()
        state = np.concatenate([self.engine.pos.ravel(), self.engine.angle])
        if self._cache_poses is None or not np.array_equal(state, self._cache_poses):
            self._neighbor_cache.clear()
            self._cache_poses = state.copy()
        links = self._neighbor_cache.get(rt.obj.id)
        if links is None:
            links = comm.neighbors(
                rt.obj, self.objects, self.arena,
                ignore_occlusions=self.config.communication_ignore_occlusions)
            self._neighbor_cache[rt.obj.id] = links
        return links

    def _flush_emissions(self, outgoing: list[tuple[RobotRuntime, list[comm.Message]]]):
        emissions = []
        for rt, messages in outgoing:
            if not messages:
                continue
            links = self._sender_links(rt)
            p_send = min(max(rt.api.percent_msgs_sent_per_ticks / 100.0, 0.0), 1.0)
            for msg in messages:
                use = links
                if msg.emitter_dir != "omni" and rt.obj.kind in ("pogobot", "pogobject"):
                    k = comm.EMITTER_DIRS.index(msg.emitter_dir)
                    use = [l for l in links if l.emitter_index == k]
                emissions.append(comm.Emission(sender=rt.obj, message=msg,
                                               p_send=p_send, links=use))
        if emissions:
            inboxes = {i: rt.inbox for i, rt in self.runtimes.items()}
            comm.deliver(emissions, self._comm_rng, inboxes)

    def _sample(self):
        for obj in self.objects:
            if obj.kind == "static_light":
                continue
            rt = self.runtimes.get(obj.id)
            custom = None
            if rt is not None and rt.hooks.callback_export_data is not None:
                buf = ExportBuffer(self.recorder.schema)
                rt.call(rt.hooks.callback_export_data, buf)
                if not buf.enabled:
                    continue
                custom = buf.values
            ticks = rt.ticks if rt is not None else 0
            x, y, angle = obj.pose
            self.recorder.append(self.t, obj.category, obj.id, ticks, x, y, angle, custom)

    def _export_frame(self):
        led = {i: rt.led_colors[0] for i, rt in self.runtimes.items()}
        recorder_mod.export_frame(self.objects, self.arena, self.t, self.config,
                                  base_dir=self.base_dir, led_colors=led)

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunArtifacts:
        config = self.config
        dt = config.time_step
        n_steps = int(round(config.simulation_time / dt))
        data_path = None

        if self.write_outputs and config.delete_old_files:
            recorder_mod.delete_old_outputs(config, self.base_dir)
        if self.write_outputs and config.enable_console_logging:
            console_path = self.base_dir / config.console_filename
            console_path.parent.mkdir(parents=True, exist_ok=True)
            self._console_fh = open(console_path, "w", encoding="utf-8")

        try:
            for rt in self._ordered_runtimes():
                rt.call(rt.hooks.user_init)

            next_sample = config.save_data_period if config.save_data_period > 0 else math.inf
            next_frame = config.save_video_period if config.save_video_period > 0 else math.inf
            eps = 1e-9

            for k in range(n_steps):
                self.t = k * dt
                outgoing = []
                for rt in self._ordered_runtimes():
                    while rt.next_tick_time() <= self.t + eps:
                        outgoing.append((rt, rt.run_tick()))
                self._flush_emissions(outgoing)
                self._apply_motor_targets()
                self.engine.step(dt, self._phys_rng)
                self._sync_objects_from_engine()

                self.t = (k + 1) * dt
                if self.t + eps >= next_sample:
                    if config.enable_data_logging:
                        self._sample()
                    next_sample += config.save_data_period
                if self.t + eps >= next_frame:
                    if self.write_outputs:
                        self._export_frame()
                    next_frame += config.save_video_period

            if self.write_outputs and config.enable_data_logging:
                data_path = self.recorder.write()
        finally:
            if self._console_fh is not None:
                self._console_fh.close()
                self._console_fh = None

        return RunArtifacts(recorder=self.recorder, objects=self.objects,
                            runtimes=self.runtimes, arena=self.arena,
                            console_lines=self.console_lines, data_path=data_path)


def run_simulation(config: SimConfig, hooks_by_category=None, controller: str | None = None,
                   base_dir=".", write_outputs: bool = False) -> RunArtifacts:
    """Build and run one simulation.

    Hooks can be given explicitly per category, or named via ``controller``
    (or the config's ``controller:`` key) to select a registered example.
    """
    if hooks_by_category is None:
        from pogosim.controllers import build_hooks

        name = controller or config.controller
        if name is None:
            raise ValueError("no hooks given and no controller named in the config")
        hooks_by_category = build_hooks(name, config)
    sim = Simulation(config, hooks_by_category, base_dir=base_dir,
                     write_outputs=write_outputs)
    return sim.run()
