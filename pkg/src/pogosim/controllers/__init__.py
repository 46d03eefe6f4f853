"""Reference controller library and its name registry.

Each controller module exposes ``build(config) -> {category: ControllerHooks}``
and registers itself under a short name so one executable can run any of
them (``pogosim -c conf.yaml --controller hanabi``).
"""

from __future__ import annotations

from typing import Callable

from pogosim.config import SimConfig
from pogosim.runtime import ControllerHooks

_REGISTRY: dict[str, Callable[[SimConfig], dict[str, ControllerHooks]]] = {}


def register(name: str):
    def wrap(fn):
        _REGISTRY[name] = fn
        return fn
    return wrap


def available_controllers() -> list[str]:
    return sorted(_REGISTRY)


def build_hooks(name: str, config: SimConfig) -> dict[str, ControllerHooks]:
    if name not in _REGISTRY:
        raise KeyError(
            f"unknown controller {name!r}; available: {', '.join(available_controllers())}")
    return _REGISTRY[name](config)


from pogosim.controllers import (  # noqa: E402,F401  (import registers them)
    hanabi,
    moving_oscillators,
    phototaxis,
    push_sum,
    run_and_tumble,
    walls,
)
