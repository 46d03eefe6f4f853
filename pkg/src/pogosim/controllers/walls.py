"""Wall detection: pogowalls and membranes beacon a one-byte flag every
pogotick; a robot stops the moment it receives a wall-flagged message,
otherwise it moves by run-and-tumble."""

from __future__ import annotations

from pogosim.controllers import run_and_tumble
from pogosim.runtime import ControllerHooks

WALL_FLAG = b"\x01"
LED_STOPPED = (0, 0, 255)


def user_init(api):
    api.data.stopped = False
    run_and_tumble.motion_init(api)


def msg_rx_fn(api, msg):
    if msg.payload[:1] == WALL_FLAG:
        api.data.stopped = True


def user_step(api):
    if api.data.stopped:
        api.set_motors(0, 0, "stop", "stop")
        api.set_led(0, LED_STOPPED)
    else:
        run_and_tumble.motion_step(api)


def beacon_init(api):
    api.percent_msgs_sent_per_ticks = 100.0


def beacon_tx(api):
    api.send_short(WALL_FLAG)


def beacon_step(api):
    pass


def build(config):
    robot_hooks = ControllerHooks(user_init=user_init, user_step=user_step,
                                  msg_rx_fn=msg_rx_fn)
    beacon_hooks = ControllerHooks(user_init=beacon_init, user_step=beacon_step,
                                   msg_tx_fn=beacon_tx)
    hooks = {}
    for name, spec in config.objects.items():
        if spec.type in ("pogobot", "pogobject"):
            hooks[name] = robot_hooks
        elif spec.type in ("pogowall", "membrane"):
            hooks[name] = beacon_hooks
    return hooks


from pogosim.controllers import register  # noqa: E402

register("walls")(build)
