"""Columnar trajectory recording and frame-image export.

Rows accumulate in memory and are written as an uncompressed Arrow IPC
(Feather v2) file whose schema metadata carries the full configuration
under the key ``configuration``. Uncompressed IPC keeps the files
readable by every Arrow binding.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pyarrow as pa
import pyarrow.feather as feather
from PIL import Image, ImageDraw

from pogosim.config import SimConfig

FIXED_COLUMNS = (
    ("time", pa.float64()),
    ("robot_category", pa.string()),
    ("robot_id", pa.uint16()),
    ("pogobot_ticks", pa.uint32()),
    ("x", pa.float64()),
    ("y", pa.float64()),
    ("angle", pa.float64()),
)
CUSTOM_TYPES = {
    "int32": pa.int32(),
    "float64": pa.float64(),
    "text": pa.string(),
    "bool": pa.bool_(),
}


class RecorderError(RuntimeError):
    pass


@dataclass
class RecordSchema:
    """Fixed trajectory columns plus user-declared custom columns."""

    custom: dict[str, str] = field(default_factory=dict)  # name -> type key
    frozen: bool = False

    def add_column(self, name: str, dtype: str) -> None:
        if self.frozen:
            raise RecorderError("schema is frozen after the first recorded row")
        if dtype not in CUSTOM_TYPES:
            raise RecorderError(f"unsupported column type {dtype!r} "
                                f"(expected one of {sorted(CUSTOM_TYPES)})")
        fixed_names = {name for name, _ in FIXED_COLUMNS}
        if name in fixed_names or name in self.custom:
            raise RecorderError(f"duplicate column {name!r}")
        self.custom[name] = dtype

    @property
    def column_names(self) -> list[str]:
        return [name for name, _ in FIXED_COLUMNS] + list(self.custom)


class SchemaBuilder:
    """The surface handed to ``callback_create_data_schema`` hooks."""

    def __init__(self, schema: RecordSchema):
        self._schema = schema

    def add_column_int32(self, name):
        self._schema.add_column(name, "int32")

    def add_column_float64(self, name):
        self._schema.add_column(name, "float64")

    def add_column_text(self, name):
        self._schema.add_column(name, "text")

    def add_column_bool(self, name):
        self._schema.add_column(name, "bool")


class ExportBuffer:
    """Per-robot per-instant custom values; export can be suppressed."""

    def __init__(self, schema: RecordSchema):
        self._schema = schema
        self.enabled = True
        self.values: dict[str, object] = {}

    def enable(self):
        self.enabled = True

    def disable(self):
        self.enabled = False

    def set_value(self, name, value):
        if name not in self._schema.custom:
            raise RecorderError(f"value set for undeclared column {name!r}")
        self.values[name] = value


class Recorder:
    """Accumulates rows and serializes them with embedded configuration."""

    def __init__(self, config: SimConfig, path=None):
        self.config = config
        self.path = Path(path) if path is not None else None
        self.schema = RecordSchema()
        self._columns: dict[str, list] = {}

    def append(self, t, category, robot_id, ticks, x, y, angle, custom=None) -> None:
        if not self.schema.frozen:
            self.schema.frozen = True
            self._columns = {name: [] for name in self.schema.column_names}
        custom = custom or {}
        for name in custom:
            if name not in self.schema.custom:
                raise RecorderError(f"value set for undeclared column {name!r}")
        cols = self._columns
        cols["time"].append(float(t))
        cols["robot_category"].append(str(category))
        cols["robot_id"].append(int(robot_id))
        cols["pogobot_ticks"].append(int(ticks))
        cols["x"].append(float(x))
        cols["y"].append(float(y))
        cols["angle"].append(float(angle) if angle is not None else math.nan)
        for name in self.schema.custom:
            cols[name].append(custom.get(name))

    @property
    def n_rows(self) -> int:
        return len(self._columns["time"]) if self._columns else 0

    def to_table(self) -> pa.Table:
        names = self.schema.column_names
        cols = self._columns or {name: [] for name in names}
        arrays = []
        fields = []
        for name, dtype in FIXED_COLUMNS:
            arrays.append(pa.array(cols[name], type=dtype))
            fields.append(pa.field(name, dtype))
        for name, key in self.schema.custom.items():
            dtype = CUSTOM_TYPES[key]
            arrays.append(pa.array(cols[name], type=dtype))
            fields.append(pa.field(name, dtype))
        schema = pa.schema(fields, metadata={"configuration": self.config.to_yaml()})
        return pa.Table.from_arrays(arrays, schema=schema)

    def to_bytes(self) -> bytes:
        sink = pa.BufferOutputStream()
        feather.write_feather(self.to_table(), sink, compression="uncompressed")
        return sink.getvalue().to_pybytes()

    def write(self, path=None) -> Path:
        path = Path(path) if path is not None else self.path
        if path is None:
            raise RecorderError("no output path configured")
        path.parent.mkdir(parents=True, exist_ok=True)
        feather.write_feather(self.to_table(), str(path), compression="uncompressed")
        return path


def read_table(path) -> pa.Table:
    return feather.read_table(str(path))


def read_configuration(table: pa.Table) -> str | None:
    meta = table.schema.metadata or {}
    raw = meta.get(b"configuration")
    return raw.decode("utf-8") if raw is not None else None


def delete_old_outputs(config: SimConfig, base_dir=".") -> None:
    """Honor delete_old_files: remove previous data/console/frame outputs."""
    base = Path(base_dir)
    for name in (config.data_filename, config.console_filename):
        p = base / name
        if p.exists():
            p.unlink()
    frames_dir = (base / config.frames_name).parent
    if frames_dir.is_dir():
        for p in frames_dir.glob("*.png"):
            p.unlink()


# ---------------------------------------------------------------------------
# frame export

def format_frame_path(template: str, t: float) -> str:
    """Fill the configured ``{:...}`` time placeholder of the frame template."""
    return template.format(t)


def export_frame(objects, arena, t, config: SimConfig, base_dir=".",
                 led_colors=None) -> Path:
    """Rasterize the arena and its objects into a PNG frame."""
    width, height = config.window_width, config.window_height
    img = Image.new("RGB", (width, height), (20, 20, 24))
    draw = ImageDraw.Draw(img)

    xmin, ymin, xmax, ymax = arena.bounds
    span = max(xmax - xmin, ymax - ymin)
    margin = 0.05
    scale = (1.0 - 2 * margin) * min(width, height) / span

    def to_px(x, y):
        return (margin * width + (x - xmin) * scale,
                height - margin * height - (y - ymin) * scale)

    draw.polygon([to_px(x, y) for x, y in arena.boundary], outline=(220, 220, 220))

    for obj in objects:
        if obj.kind == "static_light":
            continue
        if obj.kind == "membrane" and obj.link_positions is not None:
            for x, y in obj.link_positions:
                px, py = to_px(x, y)
                r = 5.0 * scale
                draw.ellipse([px - r, py - r, px + r, py + r], fill=(150, 150, 90))
            continue
        if obj.kind == "pogowall":
            continue  # drawn as the boundary
        x, y, angle = obj.pose
        px, py = to_px(x, y)
        r = obj.spec.radius * scale
        color = (200, 200, 200)
        if led_colors is not None and obj.id in led_colors:
            color = tuple(led_colors[obj.id])
        draw.ellipse([px - r, py - r, px + r, py + r], fill=color)
        if not math.isnan(angle):
            draw.line([px, py, px + r * math.cos(angle), py - r * math.sin(angle)],
                      fill=(0, 0, 0))

    # scale bar (100 mm) and simulated time
    bar = 100.0 * scale
    draw.line([10, height - 12, 10 + bar, height - 12], fill=(255, 255, 255), width=2)
    draw.text((10, height - 28), "100 mm", fill=(255, 255, 255))
    draw.text((width - 80, 8), f"t={t:.2f}s", fill=(255, 255, 255))

    rel = format_frame_path(config.frames_name, t)
    path = Path(base_dir) / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path)
    return path
