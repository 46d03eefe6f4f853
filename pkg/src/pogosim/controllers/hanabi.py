"""Color diffusion and consensus: every robot broadcasts its color index
and adopts any higher index it hears, so the swarm converges to the max.

Records ``rgb_colors_index`` (current color) and ``age`` (pogoticks since
the color was last adopted).
"""

from __future__ import annotations

from pogosim.runtime import ControllerHooks

NB_COLORS = 8
PALETTE = (
    (255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0),
    (255, 0, 255), (0, 255, 255), (255, 255, 255), (255, 128, 0),
)


def user_init(api):
    api.percent_msgs_sent_per_ticks = 50.0
    d = api.data
    d.color = api.id % NB_COLORS
    d.age = 0
    api.set_led(0, PALETTE[d.color])


def msg_rx_fn(api, msg):
    d = api.data
    incoming = msg.payload[0]
    if incoming > d.color:
        d.color = incoming
        d.age = 0
        api.set_led(0, PALETTE[d.color])


def msg_tx_fn(api):
    api.send_short(bytes([api.data.color]))


def user_step(api):
    api.data.age += 1


def create_data_schema(api, builder):
    builder.add_column_int32("rgb_colors_index")
    builder.add_column_int32("age")


def export_data(api, buf):
    buf.set_value("rgb_colors_index", api.data.color)
    buf.set_value("age", api.data.age)


def build(config):
    hooks = ControllerHooks(
        user_init=user_init, user_step=user_step,
        msg_rx_fn=msg_rx_fn, msg_tx_fn=msg_tx_fn,
        callback_create_data_schema=create_data_schema,
        callback_export_data=export_data)
    return {name: hooks for name, spec in config.objects.items()
            if spec.type in ("pogobot", "pogobject")}


from pogosim.controllers import register  # noqa: E402

register("hanabi")(build)
