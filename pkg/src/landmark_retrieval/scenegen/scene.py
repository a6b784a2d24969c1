"""
Procedural multi-room environments.

An environment is a row of closed rooms laid out along the world x axis, each
room a box of six thin slabs (floor, ceiling, four walls) with objects
resting on its floor. World z points up.

Objects are drawn from a shape library that depends only on
``library_seed``, so a shape id denotes the same geometry and texture in
every environment. Shape 0 is placed in every room that holds objects, which
guarantees semantically identical content across environments.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from enum import IntEnum

import numpy as np

from ..exceptions import SceneGenerationError

logger = logging.getLogger(__name__)

WALL_THICKNESS = 0.1
ROOM_GAP = 1.0
WALL_MARGIN = 0.3
OBJECT_GAP = 0.15


class SemanticClass(IntEnum):
    BACKGROUND = 0
    WALL = 1
    FLOOR = 2
    CEILING = 3
    OBJECT = 4


STUFF_CLASSES = (SemanticClass.WALL, SemanticClass.FLOOR, SemanticClass.CEILING)


@dataclass(frozen=True)
class ShapeTemplate:
    """One entry of the shared object library."""

    shape_id: int
    kind: str  # "box" | "sphere"
    half_extents: tuple[float, float, float]
    texture_id: int

    @property
    def footprint(self) -> tuple[float, float]:
        return self.half_extents[0], self.half_extents[1]

    @property
    def height(self) -> float:
        return 2.0 * self.half_extents[2]


@dataclass(frozen=True)
class Primitive:
    """
    An axis-aligned box or a sphere.

    For spheres all three ``half_extents`` equal the radius.
    """

    kind: str
    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]
    semantic: int
    instance_id: int
    shape_id: int
    texture_id: int
    room: int

    def __post_init__(self):
        if self.kind not in ("box", "sphere"):
            raise ValueError(f"Unknown primitive kind: {self.kind}")
        if min(self.half_extents) <= 0:
            raise ValueError(f"Primitive extents must be positive: {self.half_extents}")

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.center) - np.asarray(self.half_extents)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.half_extents)

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance from ``points`` (..., 3) to this primitive's surface."""
        center = np.asarray(self.center)
        if self.kind == "sphere":
            return np.abs(np.linalg.norm(points - center, axis=-1) - self.half_extents[0])
        q = np.abs(points - center) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return np.abs(outside + inside)


@dataclass(frozen=True)
class Room:
    index: int
    lower: tuple[float, float, float]
    upper: tuple[float, float, float]

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point)
        return bool(
            np.all(p > np.asarray(self.lower) + margin)
            and np.all(p < np.asarray(self.upper) - margin)
        )


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of one procedural environment."""

    seed: int
    num_rooms: int = 2
    objects_per_room: int = 3
    palette_size: int = 16
    object_library_size: int = 6
    library_seed: int = 1234
    room_size_range: tuple[float, float] = (3.0, 4.5)
    room_height: float = 2.6
    max_retries: int = 200

    def __post_init__(self):
        if self.num_rooms < 1 or self.palette_size < 1 or self.object_library_size < 1:
            raise ValueError("num_rooms, palette_size and object_library_size must be >= 1")
        if self.objects_per_room < 0:
            raise ValueError("objects_per_room must be >= 0")
        object.__setattr__(self, "room_size_range", tuple(float(v) for v in self.room_size_range))


@dataclass
class Scene:
    environment: int
    spec: SceneSpec
    rooms: list[Room] = field(default_factory=list)
    primitives: list[Primitive] = field(default_factory=list)

    @property
    def objects(self) -> list[Primitive]:
        return [p for p in self.primitives if p.semantic == SemanticClass.OBJECT]

    @property
    def shape_ids(self) -> set[int]:
        return {p.shape_id for p in self.objects}

    def shape_lookup(self) -> dict[int, int]:
        """instance id -> shape id (stuff primitives map to -1)."""
        return {p.instance_id: p.shape_id for p in self.primitives}

    def primitive_by_instance(self, instance_id: int) -> Primitive:
        for p in self.primitives:
            if p.instance_id == instance_id:
                return p
        raise KeyError(instance_id)

    def to_dict(self) -> dict:
        return {
            "environment": self.environment,
            "spec": asdict(self.spec),
            "rooms": [asdict(r) for r in self.rooms],
            "primitives": [asdict(p) for p in self.primitives],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scene":
        spec = SceneSpec(**{**data["spec"], "room_size_range": tuple(data["spec"]["room_size_range"])})
        rooms = [Room(r["index"], tuple(r["lower"]), tuple(r["upper"])) for r in data["rooms"]]
        primitives = [
            Primitive(
                **{
                    **p,
                    "center": tuple(p["center"]),
                    "half_extents": tuple(p["half_extents"]),
                }
            )
            for p in data["primitives"]
        ]
        return cls(environment=int(data["environment"]), spec=spec, rooms=rooms, primitives=primitives)

    def serialize(self) -> bytes:
        """Canonical JSON bytes; identical specs give identical bytes."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")


def build_object_library(size: int, palette_size: int, library_seed: int) -> list[ShapeTemplate]:
    """Shapes shared by every environment generated with the same library seed."""
    rng = np.random.default_rng(library_seed)
    library = []
    for shape_id in range(size):
        texture_id = int(rng.integers(palette_size))
        if rng.random() < 0.35:
            r = float(rng.uniform(0.18, 0.4))
            library.append(ShapeTemplate(shape_id, "sphere", (r, r, r), texture_id))
        else:
            hx, hy = (float(v) for v in rng.uniform(0.15, 0.45, size=2))
            hz = float(rng.uniform(0.2, 0.6))
            library.append(ShapeTemplate(shape_id, "box", (hx, hy, hz), texture_id))
    return library


def _room_slabs(lower, upper, height) -> list[tuple[SemanticClass, np.ndarray, np.ndarray]]:
    """Six slabs enclosing the interior [lower, upper] (lower/upper are xy, z spans 0..height)."""
    t = WALL_THICKNESS
    x0, y0 = lower
    x1, y1 = upper
    return [
        (SemanticClass.FLOOR, np.array([x0 - t, y0 - t, -t]), np.array([x1 + t, y1 + t, 0.0])),
        (SemanticClass.CEILING, np.array([x0 - t, y0 - t, height]), np.array([x1 + t, y1 + t, height + t])),
        (SemanticClass.WALL, np.array([x0 - t, y0 - t, 0.0]), np.array([x0, y1 + t, height])),
        (SemanticClass.WALL, np.array([x1, y0 - t, 0.0]), np.array([x1 + t, y1 + t, height])),
        (SemanticClass.WALL, np.array([x0, y0 - t, 0.0]), np.array([x1, y0, height])),
        (SemanticClass.WALL, np.array([x0, y1, 0.0]), np.array([x1, y1 + t, height])),
    ]


def _place_objects(room: Room, shapes: list[ShapeTemplate], rng: np.random.Generator, max_retries: int):
    """Rejection-sample non-overlapping floor positions for ``shapes``."""
    placed: list[tuple[ShapeTemplate, np.ndarray]] = []
    lo = np.asarray(room.lower[:2])
    hi = np.asarray(room.upper[:2])
    for shape in shapes:
        half = np.asarray(shape.footprint)
        xy_lo = lo + WALL_MARGIN + half
        xy_hi = hi - WALL_MARGIN - half
        if np.any(xy_hi <= xy_lo):
            raise SceneGenerationError(f"Room {room.index} too small for shape {shape.shape_id}")
        for _ in range(max_retries):
            xy = rng.uniform(xy_lo, xy_hi)
            clear = all(
                np.any(np.abs(xy - other_xy) >= half + np.asarray(other.footprint) + OBJECT_GAP)
                for other, other_xy in placed
            )
            if clear:
                placed.append((shape, xy))
                break
        else:
            raise SceneGenerationError(
                f"Could not place shape {shape.shape_id} in room {room.index} "
                f"after {max_retries} attempts"
            )
    return placed


def generate_scene(spec: SceneSpec, environment: int = 0) -> Scene:
    """
    Build an environment deterministically from ``spec``.

    Args:
        spec: Scene parameters; ``spec.seed`` drives every random choice
        environment: Environment id stored on the scene

    Returns:
        The generated ``Scene``

    Raises:
        SceneGenerationError: objects could not be placed within the retry budget
    """
    rng = np.random.default_rng(spec.seed)
    library = build_object_library(spec.object_library_size, spec.palette_size, spec.library_seed)
    scene = Scene(environment=environment, spec=spec)

    next_instance = 1
    x_cursor = 0.0
    for room_index in range(spec.num_rooms):
        width, depth = rng.uniform(*spec.room_size_range, size=2)
        lower = (x_cursor, 0.0)
        upper = (x_cursor + float(width), float(depth))
        x_cursor = upper[0] + 2 * WALL_THICKNESS + ROOM_GAP
        room = Room(room_index, (lower[0], lower[1], 0.0), (upper[0], upper[1], spec.room_height))
        scene.rooms.append(room)

        for semantic, slab_lo, slab_hi in _room_slabs(lower, upper, spec.room_height):
            scene.primitives.append(
                Primitive(
                    kind="box",
                    center=tuple(float(v) for v in (slab_lo + slab_hi) / 2),
                    half_extents=tuple(float(v) for v in (slab_hi - slab_lo) / 2),
                    semantic=int(semantic),
                    instance_id=next_instance,
                    shape_id=-1,
                    texture_id=int(rng.integers(spec.palette_size)),
                    room=room_index,
                )
            )
            next_instance += 1

        if spec.objects_per_room == 0:
            continue
        chosen = [library[0]] + [
            library[int(i)] for i in rng.integers(len(library), size=spec.objects_per_room - 1)
        ]
        for shape, xy in _place_objects(room, chosen, rng, spec.max_retries):
            hz = shape.half_extents[2]
            scene.primitives.append(
                Primitive(
                    kind=shape.kind,
                    center=(float(xy[0]), float(xy[1]), float(hz)),
                    half_extents=shape.half_extents,
                    semantic=int(SemanticClass.OBJECT),
                    instance_id=next_instance,
                    shape_id=shape.shape_id,
                    texture_id=shape.texture_id,
                    room=room_index,
                )
            )
            next_instance += 1

    logger.debug(
        f"Scene {environment} generated: {len(scene.rooms)} rooms, "
        f"{len(scene.objects)} objects, shapes {sorted(scene.shape_ids)}"
    )
    return scene


def spec_from_config(scene_cfg, seed: int) -> SceneSpec:
    """``SceneSpec`` from a ``SceneConfig`` section and a per-environment seed."""
    return SceneSpec(
        seed=seed,
        num_rooms=scene_cfg.num_rooms,
        objects_per_room=scene_cfg.objects_per_room,
        palette_size=scene_cfg.palette_size,
        object_library_size=scene_cfg.object_library_size,
        library_seed=scene_cfg.library_seed,
        room_size_range=tuple(scene_cfg.room_size_range),
        room_height=scene_cfg.room_height,
        max_retries=scene_cfg.max_retries,
    )
