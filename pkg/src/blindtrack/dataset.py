"""Scene serialization: JSONL datasets, split manifests, and the documented
import schema.

Records are canonical JSON (sorted keys, no whitespace), one scene per
line, so identical configs and seeds produce byte-identical files and a
re-serialized import of our own export is the identity. Invisible pixels
serialize as null; in memory they are NaN.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .simulator import Scene, SceneAgent

SCENE_SCHEMA = "blindtrack-scene-v1"
MANIFEST_SCHEMA = "blindtrack-manifest-v1"
SPLIT_NAMES = ("train", "val", "test")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def hash_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def scene_to_record(scene: Scene) -> dict:
    agents = []
    for agent in scene.agents:
        pixel = [
            [float(u), float(v)] if bool(vis) else None
            for (u, v), vis in zip(agent.pixel, agent.visible)
        ]
        agents.append(
            {
                "agent_id": int(agent.agent_id),
                "world": agent.world.tolist(),
                "sensor": agent.sensor.tolist(),
                "pixel": pixel,
                "visible": [bool(v) for v in agent.visible],
            }
        )
    return {
        "schema": SCENE_SCHEMA,
        "seed": int(scene.seed),
        "t_obs": int(scene.t_obs),
        "t_pred": int(scene.t_pred),
        "image_size": [int(scene.image_size[0]), int(scene.image_size[1])],
        "camera": [m.reshape(12).tolist() for m in scene.camera],
        "agents": agents,
        "out_of_sight_id": int(scene.out_of_sight_id),
    }


def _fail(line: int, field: str, message: str):
    raise SchemaError(f"line {line}, field {field!r}: {message}", line=line, field=field)


def _want(record: dict, field: str, kind, line: int):
    if field not in record:
        _fail(line, field, "missing")
    value = record[field]
    if kind is int and (not isinstance(value, int) or isinstance(value, bool)):
        _fail(line, field, f"expected integer, got {type(value).__name__}")
    if kind is list and not isinstance(value, list):
        _fail(line, field, f"expected list, got {type(value).__name__}")
    return value


def _numeric_rows(value, width: int, length: int, field: str, line: int):
    if not isinstance(value, list) or len(value) != length:
        _fail(line, field, f"expected {length} rows")
    for row in value:
        if (
            not isinstance(row, list)
            or len(row) != width
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in row)
        ):
            _fail(line, field, f"rows must be {width} numbers")
        if not all(np.isfinite(x) for x in row):
            _fail(line, field, "non-finite value")


def validate_record(record: dict, line: int = 0) -> None:
    """Structural checks for one scene record; raises SchemaError carrying
    the line number and offending field."""
    if not isinstance(record, dict):
        _fail(line, "", "record is not an object")
    if record.get("schema") != SCENE_SCHEMA:
        _fail(line, "schema", f"expected {SCENE_SCHEMA!r}, got {record.get('schema')!r}")
    seed = _want(record, "seed", int, line)
    t_obs = _want(record, "t_obs", int, line)
    t_pred = _want(record, "t_pred", int, line)
    if t_obs < 2:
        _fail(line, "t_obs", f"must be >= 2, got {t_obs}")
    if t_pred < 1:
        _fail(line, "t_pred", f"must be >= 1, got {t_pred}")
    total = t_obs + t_pred
    size = _want(record, "image_size", list, line)
    if len(size) != 2 or not all(isinstance(x, int) and x >= 1 for x in size):
        _fail(line, "image_size", "expected two positive integers")
    _numeric_rows(_want(record, "camera", list, line), 12, total, "camera", line)
    agents = _want(record, "agents", list, line)
    if not agents:
        _fail(line, "agents", "empty")
    ids = []
    for i, agent in enumerate(agents):
        prefix = f"agents[{i}]"
        if not isinstance(agent, dict):
            _fail(line, prefix, "agent is not an object")
        aid = _want(agent, "agent_id", int, line)
        ids.append(aid)
        _numeric_rows(agent.get("world"), 3, total, f"{prefix}.world", line)
        _numeric_rows(agent.get("sensor"), 3, t_obs, f"{prefix}.sensor", line)
        visible = agent.get("visible")
        if not isinstance(visible, list) or len(visible) != total or not all(
            isinstance(v, bool) for v in visible
        ):
            _fail(line, f"{prefix}.visible", f"expected {total} booleans")
        pixel = agent.get("pixel")
        if not isinstance(pixel, list) or len(pixel) != total:
            _fail(line, f"{prefix}.pixel", f"expected {total} entries")
        for t, (entry, vis) in enumerate(zip(pixel, visible)):
            if vis:
                if (
                    not isinstance(entry, list)
                    or len(entry) != 2
                    or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in entry)
                ):
                    _fail(line, f"{prefix}.pixel", f"visible step {t} must hold two numbers")
            elif entry is not None:
                _fail(line, f"{prefix}.pixel", f"invisible step {t} must be null")
    if len(set(ids)) != len(ids):
        _fail(line, "agents", "duplicate agent_id")
    hidden = _want(record, "out_of_sight_id", int, line)
    if hidden not in ids:
        _fail(line, "out_of_sight_id", f"{hidden} not among agent ids {sorted(ids)}")
    hidden_agent = agents[ids.index(hidden)]
    if not all(hidden_agent["visible"]):
        _fail(line, "out_of_sight_id", "hidden agent must have ground-truth pixels everywhere")
    if seed < 0:
        _fail(line, "seed", "must be non-negative")


def record_to_scene(record: dict) -> Scene:
    total = record["t_obs"] + record["t_pred"]
    agents = []
    for entry in record["agents"]:
        pixel = np.full((total, 2), np.nan)
        for t, value in enumerate(entry["pixel"]):
            if value is not None:
                pixel[t] = value
        agents.append(
            SceneAgent(
                agent_id=entry["agent_id"],
                world=np.asarray(entry["world"], dtype=np.float64),
                sensor=np.asarray(entry["sensor"], dtype=np.float64),
                pixel=pixel,
                visible=np.asarray(entry["visible"], dtype=bool),
            )
        )
    return Scene(
        seed=record["seed"],
        t_obs=record["t_obs"],
        t_pred=record["t_pred"],
        image_size=(record["image_size"][0], record["image_size"][1]),
        camera=np.asarray(record["camera"], dtype=np.float64).reshape(-1, 3, 4),
        agents=agents,
        out_of_sight_id=record["out_of_sight_id"],
    )


def write_scenes(path, scenes: list[Scene]) -> None:
    with open(path, "w") as fh:
        for scene in scenes:
            fh.write(canonical_json(scene_to_record(scene)))
            fh.write("\n")


def read_scenes(path, validate: bool = True) -> list[Scene]:
    scenes = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as err:
                raise SchemaError(f"line {lineno}: invalid JSON ({err})", line=lineno) from err
            if validate:
                validate_record(record, lineno)
            scenes.append(record_to_scene(record))
    return scenes


def write_dataset(out_dir, splits: dict[str, list[Scene]], config_dict: dict) -> dict:
    """Write one JSONL per split plus a manifest tying them to the config
    hash. Returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "schema": MANIFEST_SCHEMA,
        "config": config_dict,
        "config_hash": hash_of(config_dict),
        "splits": {},
    }
    for name in SPLIT_NAMES:
        scenes = splits.get(name, [])
        filename = f"{name}.jsonl"
        write_scenes(out / filename, scenes)
        manifest["splits"][name] = {
            "file": filename,
            "count": len(scenes),
            "seeds": [s.seed for s in scenes],
            "sha256": file_sha256(out / filename),
        }
    with open(out / "manifest.json", "w") as fh:
        fh.write(canonical_json(manifest))
        fh.write("\n")
    return manifest


def read_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise SchemaError(f"{path}: not a dataset manifest", field="schema")
    return manifest


def load_dataset(dataset_dir, validate: bool = False) -> tuple[dict, dict[str, list[Scene]]]:
    manifest = read_manifest(dataset_dir)
    splits = {
        name: read_scenes(Path(dataset_dir) / info["file"], validate=validate)
        for name, info in manifest["splits"].items()
    }
    return manifest, splits
