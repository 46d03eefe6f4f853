"""Push-sum gossip averaging: each tick a robot halves its (s, w) pair,
keeps one half and broadcasts the other; receipts accumulate into (s, w).
The ratio s/w converges to the swarm mean of the initial values.

Initial value is ``push_sum_offset + push_sum_scale * id``; the running
estimate is recorded in an ``estimate`` column.
"""

from __future__ import annotations

import struct

from pogosim.runtime import ControllerHooks

_PAIR = struct.Struct("<dd")


def user_init(api):
    api.percent_msgs_sent_per_ticks = 100.0
    # every received (s, w) half carries mass; process the whole inbox
    api.max_nb_processed_msg_per_tick = 32
    d = api.data
    offset = float(api.param("push_sum_offset", 0.0))
    scale = float(api.param("push_sum_scale", 1.0))
    d.s = offset + scale * api.id
    d.w = 1.0


def msg_tx_fn(api):
    d = api.data
    d.s *= 0.5
    d.w *= 0.5
    api.send_short(_PAIR.pack(d.s, d.w))


def msg_rx_fn(api, msg):
    s, w = _PAIR.unpack(msg.payload)
    api.data.s += s
    api.data.w += w


def user_step(api):
    pass


def estimate(data) -> float:
    return data.s / data.w


def create_data_schema(api, builder):
    builder.add_column_float64("estimate")


def export_data(api, buf):
    buf.set_value("estimate", estimate(api.data))


def build(config):
    hooks = ControllerHooks(
        user_init=user_init, user_step=user_step,
        msg_rx_fn=msg_rx_fn, msg_tx_fn=msg_tx_fn,
        callback_create_data_schema=create_data_schema,
        callback_export_data=export_data)
    return {name: hooks for name, spec in config.objects.items()
            if spec.type in ("pogobot", "pogobject")}


from pogosim.controllers import register  # noqa: E402

register("push_sum")(build)
