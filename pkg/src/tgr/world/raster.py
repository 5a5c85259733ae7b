"""Optional Pillow rendering of scene snapshots to PNG files."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Optional

from .script import SceneSnapshot


def _color(name: str) -> tuple:
    digest = hashlib.sha256(name.encode()).digest()
    return tuple(64 + b % 160 for b in digest[:3])


def render_snapshot(snapshot: SceneSnapshot, labels: Optional[list] = None):
    """Draw visible objects as filled boxes, largest first.

    ``labels`` is ``[(text, box)]``; each text is drawn at its box's top-left
    corner, which is how numbered candidates are shown to a visual model.
    """
    from PIL import Image, ImageDraw

    img = Image.new("RGB", (snapshot.frame_width, snapshot.frame_height), (235, 235, 230))
    draw = ImageDraw.Draw(img)
    for entry in sorted(snapshot.visible(), key=lambda e: (-e.box.area, e.object_id)):
        draw.rectangle(entry.box.as_list(), fill=_color(entry.class_name), outline=(20, 20, 20))
    for text, box in labels or ():
        x, y = box.x_min + 2, box.y_min + 1
        draw.rectangle([x - 1, y - 1, x + 7 * len(text) + 2, y + 11], fill=(255, 255, 255))
        draw.text((x, y), text, fill=(0, 0, 0))
    return img


def write_snapshot(snapshot: SceneSnapshot, path, labels: Optional[list] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    render_snapshot(snapshot, labels).save(path, format="PNG")
    return path


def write_episode_frames(episode, out_dir, stride: Optional[int] = None) -> list:
    """One PNG per ``stride`` frames (default: one per second) under ``out_dir/<episode id>/``."""
    stride = stride or episode.meta.fps
    root = Path(out_dir) / episode.id
    return [
        write_snapshot(episode.frame(f), root / f"frame_{f:05d}.png")
        for f in range(0, episode.meta.total_frames, stride)
    ]
