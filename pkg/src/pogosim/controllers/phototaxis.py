"""Phototaxis: run-and-tumble until the brightest photosensor reading
reaches ``parameters.light_threshold``, then stop."""

from __future__ import annotations

from pogosim.controllers import run_and_tumble
from pogosim.runtime import ControllerHooks

LED_STOPPED = (255, 255, 255)


def user_init(api):
    api.data.light_threshold = float(api.param("light_threshold", 16000.0))
    run_and_tumble.motion_init(api)


def user_step(api):
    if max(api.read_photosensors()) >= api.data.light_threshold:
        api.set_motors(0, 0, "stop", "stop")
        api.set_led(0, LED_STOPPED)
    else:
        run_and_tumble.motion_step(api)


def build(config):
    hooks = ControllerHooks(user_init=user_init, user_step=user_step)
    return {name: hooks for name, spec in config.objects.items()
            if spec.type in ("pogobot", "pogobject")}


from pogosim.controllers import register  # noqa: E402

register("phototaxis")(build)
