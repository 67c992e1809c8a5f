"""Deterministic axis-aligned box corridors for tests, demos and benchmarks."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import Corridor, box, default_assignment

KINDS = ("straight", "slot", "zigzag")


class InvalidParams(ValueError):
    pass


def _boxes_straight(length: float = 4.0, boxes: int = 2, overlap: float = 0.5):
    if boxes < 1 or length <= 1.2:
        raise InvalidParams("straight fixture needs boxes >= 1 and length > 1.2 m")
    step = length / boxes
    out = []
    for i in range(boxes):
        lo = max(0.0, i * step - overlap)
        hi = min(length, (i + 1) * step + overlap)
        out.append(([lo, -1.0, 0.0], [hi, 1.0, 2.0]))
    return out, [0.6, 0.0, 1.0], [length - 0.6, 0.0, 1.0]


def _boxes_slot(gap: float = 0.6, height: float = 1.6, slot_length: float = 3.0):
    # the slot is narrow across the direction of travel (y): a level
    # 1.0 m footprint cannot pass, a body rolled about x can
    if not 0.0 < gap < height:
        raise InvalidParams("slot fixture needs 0 < gap < height")
    x0, x1 = 1.5, 1.5 + slot_length
    zc = 1.0
    boxes = [
        ([0.0, -1.5, 0.0], [x0 + 1.5, 1.5, 2.0]),
        ([x0, -gap / 2, zc - height / 2], [x1, gap / 2, zc + height / 2]),
        ([x1 - 1.5, -1.5, 0.0], [x1 + 1.5, 1.5, 2.0]),
    ]
    return boxes, [1.0, 0.0, 1.0], [x1 + 0.5, 0.0, 1.0]


def _boxes_zigzag(boxes: int = 4, step: float = 2.0, amplitude: float = 1.0, rng=None):
    if boxes < 2:
        raise InvalidParams("zigzag fixture needs at least 2 boxes")
    out = []
    for i in range(boxes):
        yc = amplitude * (1 if i % 2 else -1) + float(rng.uniform(-0.1, 0.1))
        zc = 1.0 + float(rng.uniform(-0.1, 0.1))
        lo = [i * step - 0.2, yc - 1.2, zc - 1.0]
        hi = [(i + 1) * step + 0.8, yc + 1.2, zc + 1.0]
        out.append(([round(v, 6) for v in lo], [round(v, 6) for v in hi]))
    start = [0.6, out[0][0][1] + 1.2, 1.0]
    goal = [boxes * step, out[-1][0][1] + 1.2, 1.0]
    return out, start, goal


def make_fixture(kind: str, params: dict | None = None, seed: int = 0, pieces_per_polyhedron: int = 2):
    """Corridor plus a run-configuration dict for a named fixture."""
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    builders = {"straight": _boxes_straight, "slot": _boxes_slot, "zigzag": _boxes_zigzag}
    if kind not in builders:
        raise InvalidParams(f"unknown fixture kind {kind!r}; choose from {KINDS}")
    if kind == "zigzag":
        params["rng"] = rng
    try:
        boxes, start, goal = builders[kind](**params)
    except TypeError as exc:
        raise InvalidParams(f"bad parameters for {kind}: {exc}") from exc
    polys = tuple(box(lo, hi) for lo, hi in boxes)
    corridor = Corridor(polys, default_assignment(len(polys), pieces_per_polyhedron))
    config = {
        "corridor": "corridor.json",
        "start": start,
        "goal": goal,
        "pieces_per_polyhedron": pieces_per_polyhedron,
        "seed": seed,
    }
    return corridor, config


def write_fixture(kind: str, out_dir: str | Path, params: dict | None = None, seed: int = 0) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corridor, config = make_fixture(kind, params, seed)
    cpath = out / "corridor.json"
    fpath = out / "config.json"
    cpath.write_text(json.dumps(corridor.to_json(), indent=2) + "\n", encoding="utf-8")
    fpath.write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return cpath, fpath
