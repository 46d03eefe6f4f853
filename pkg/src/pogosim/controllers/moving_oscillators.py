"""Kuramoto oscillators on moving robots: each robot advances its phase by
its natural frequency plus a coupling term driven by the phases it heard
since its last tick, broadcasts the phase, and moves by run-and-tumble.
"""

from __future__ import annotations

import math
import struct

from pogosim.controllers import run_and_tumble
from pogosim.runtime import ControllerHooks

_PHASE = struct.Struct("<d")
TWO_PI = 2.0 * math.pi


def user_init(api):
    api.percent_msgs_sent_per_ticks = 100.0
    d = api.data
    d.phase = api.uniform(0.0, TWO_PI)
    d.natural_freq = float(api.param("natural_freq", 1.0))
    d.coupling = float(api.param("coupling", 2.0))
    d.neighbor_phases = []
    run_and_tumble.motion_init(api)


def msg_rx_fn(api, msg):
    api.data.neighbor_phases.append(_PHASE.unpack(msg.payload)[0])


def msg_tx_fn(api):
    api.send_short(_PHASE.pack(api.data.phase))


def user_step(api):
    d = api.data
    dt = 1.0 / api.main_loop_hz
    drive = d.natural_freq
    if d.neighbor_phases:
        drive += d.coupling * sum(
            math.sin(p - d.phase) for p in d.neighbor_phases) / len(d.neighbor_phases)
        d.neighbor_phases = []
    d.phase = (d.phase + drive * dt) % TWO_PI
    run_and_tumble.motion_step(api)


def order_parameter(phases) -> float:
    """|mean(e^{i phi})|: 1 means full synchronization."""
    n = len(phases)
    re = sum(math.cos(p) for p in phases) / n
    im = sum(math.sin(p) for p in phases) / n
    return math.hypot(re, im)


def create_data_schema(api, builder):
    builder.add_column_float64("phase")


def export_data(api, buf):
    buf.set_value("phase", api.data.phase)


def build(config):
    hooks = ControllerHooks(
        user_init=user_init, user_step=user_step,
        msg_rx_fn=msg_rx_fn, msg_tx_fn=msg_tx_fn,
        callback_create_data_schema=create_data_schema,
        callback_export_data=export_data)
    return {name: hooks for name, spec in config.objects.items()
            if spec.type in ("pogobot", "pogobject")}


from pogosim.controllers import register  # noqa: E402

register("moving_oscillators")(build)
