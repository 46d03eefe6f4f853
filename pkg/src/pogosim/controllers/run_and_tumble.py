"""Run-and-tumble: straight runs (green LED) alternating with in-place
tumbles (red LED), with durations drawn uniformly from configured ranges."""

from __future__ import annotations

from pogosim.runtime import ControllerHooks

LED_RUN = (0, 255, 0)
LED_TUMBLE = (255, 0, 0)


def motion_init(api):
    d = api.data
    d.run_min = float(api.param("run_duration_min", 1000.0))
    d.run_max = float(api.param("run_duration_max", 5000.0))
    d.tumble_min = float(api.param("tumble_duration_min", 100.0))
    d.tumble_max = float(api.param("tumble_duration_max", 1100.0))
    d.enable_backward_dir = bool(api.param("enable_backward_dir", True))
    d.mode = "run"
    d.mode_deadline = api.millis() + api.uniform(d.run_min, d.run_max)
    d.tumble_side = "left"


def motion_step(api):
    """Advance the run/tumble state machine and drive the motors."""
    d = api.data
    if api.millis() >= d.mode_deadline:
        if d.mode == "run":
            d.mode = "tumble"
            d.mode_deadline = api.millis() + api.uniform(d.tumble_min, d.tumble_max)
            d.tumble_side = "left" if api.random() < 0.5 else "right"
        else:
            d.mode = "run"
            d.mode_deadline = api.millis() + api.uniform(d.run_min, d.run_max)

    if d.mode == "run":
        api.set_motors(1023, 1023, "forward", "forward")
        api.set_led(0, LED_RUN)
    else:
        if d.enable_backward_dir:
            # spin in place: one wheel forward, the other backward
            if d.tumble_side == "left":
                api.set_motors(1023, 1023, "backward", "forward")
            else:
                api.set_motors(1023, 1023, "forward", "backward")
        else:
            if d.tumble_side == "left":
                api.set_motors(0, 1023, "stop", "forward")
            else:
                api.set_motors(1023, 0, "forward", "stop")
        api.set_led(0, LED_TUMBLE)


def user_init(api):
    motion_init(api)


def user_step(api):
    motion_step(api)


def build(config):
    hooks = ControllerHooks(user_init=user_init, user_step=user_step)
    return {name: hooks for name, spec in config.objects.items()
            if spec.type in ("pogobot", "pogobject")}


from pogosim.controllers import register  # noqa: E402

register("run_and_tumble")(build)
