"""Annotation, prediction, and experiment-config files.

Annotation and prediction files are JSON Lines. A header record opens each
sequence and one record per frame follows::

    {"sequence": "seq01", "frame_size": [640, 512]}
    {"frame": 0, "box": [300.0, 200.0, 16.0, 12.0], "attributes": ["FM"]}
    {"frame": 1, "box": "Not Exist"}

Prediction headers carry only ``"sequence"``; an empty prediction is written
as ``"Not Exist"`` (``null`` and ``[]`` are accepted on load). Files written
by :func:`save_annotations` / :func:`save_predictions` are canonical and load
and save back byte for byte.

Experiment configs are a single JSON object, see :class:`ExperimentConfig`.
"""
from __future__ import annotations

import dataclasses
import enum
import json
import types
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from antiuav.errors import InvalidInputError
from antiuav.geometry import BoundingBox
from antiuav.metric import EvalConfig, FrameAnnotation, FramePrediction
from antiuav.simulator import (
    Arm,
    EvidenceLaw,
    PipelineMode,
    ScenarioSpec,
    ScoreLaw,
    SimDetectorModel,
    SimTrackerModel,
    Trajectory,
)

__all__ = [
    "ABSENT",
    "ConfigError",
    "ExperimentConfig",
    "FormatError",
    "SequenceAnnotations",
    "SequencePredictions",
    "config_from_dict",
    "config_to_dict",
    "dump_config",
    "load_annotations",
    "load_config",
    "load_predictions",
    "save_annotations",
    "save_predictions",
]

ABSENT = "Not Exist"


class FormatError(InvalidInputError):
    """Malformed annotation or prediction file; the message names file and line."""


class ConfigError(InvalidInputError):
    """Invalid experiment config; the message names the offending field path."""


@dataclass(frozen=True)
class SequenceAnnotations:
    sequence_id: str
    frames: tuple[FrameAnnotation, ...]
    frame_size: tuple[int, int] | None = None


@dataclass(frozen=True)
class SequencePredictions:
    sequence_id: str
    frames: tuple[FramePrediction, ...]


# --------------------------------------------------------------------------
# JSON Lines sequences


def _files(path: str | Path) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.iterdir() if p.suffix in (".jsonl", ".json") and p.is_file())
    if not path.exists():
        raise FormatError(f"{path}: no such file or directory")
    return [path]


def _records(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: invalid JSON ({exc.msg} at column {exc.colno})") from exc
        if not isinstance(record, dict):
            raise FormatError(f"{path}:{lineno}: each line must be a JSON object")
        yield lineno, record


def _parse_box(value: Any, where: str, allow_empty: bool) -> BoundingBox | None:
    if value == ABSENT or (allow_empty and (value is None or value == [])):
        return None
    if not isinstance(value, list) or len(value) != 4:
        raise FormatError(f"{where}: box must be [x, y, w, h] or {ABSENT!r}, got {value!r}")
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise FormatError(f"{where}: box entries must be numbers, got {value!r}")
    try:
        return BoundingBox(*value)
    except InvalidInputError as exc:
        raise FormatError(f"{where}: {exc}") from exc


def _split_blocks(path: Path, header_keys: set[str], frame_keys: set[str]):
    blocks: list[tuple[dict, list[tuple[int, dict]]]] = []
    for lineno, rec in _records(path):
        where = f"{path}:{lineno}"
        if "sequence" in rec:
            unknown = set(rec) - header_keys
            if unknown:
                raise FormatError(f"{where}: unknown header field(s) {sorted(unknown)}")
            if not isinstance(rec["sequence"], str) or not rec["sequence"]:
                raise FormatError(f"{where}: sequence id must be a non-empty string")
            blocks.append((rec, []))
            continue
        if not blocks:
            raise FormatError(f"{where}: frame record before any sequence header")
        unknown = set(rec) - frame_keys
        if unknown:
            raise FormatError(f"{where}: unknown frame field(s) {sorted(unknown)}")
        frames = blocks[-1][1]
        if rec.get("frame") != len(frames):
            raise FormatError(f"{where}: expected frame {len(frames)}, got {rec.get('frame')!r}")
        if "box" not in rec:
            raise FormatError(f"{where}: frame {len(frames)} has no 'box'")
        frames.append((lineno, rec))
    for header, frames in blocks:
        if not frames:
            raise FormatError(f"{path}: sequence {header['sequence']!r} has no frames")
    return blocks


def load_annotations(path: str | Path) -> list[SequenceAnnotations]:
    """Load every sequence in a file, or in every ``*.jsonl`` file of a directory."""
    out = []
    for file in _files(path):
        for header, frames in _split_blocks(file, {"sequence", "frame_size"}, {"frame", "box", "attributes"}):
            sid = header["sequence"]
            frame_size = header.get("frame_size")
            if frame_size is not None:
                if (
                    not isinstance(frame_size, list)
                    or len(frame_size) != 2
                    or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in frame_size)
                ):
                    raise FormatError(f"{file}: sequence {sid!r}: frame_size must be [width, height]")
                frame_size = tuple(frame_size)
            parsed = []
            for lineno, rec in frames:
                where = f"{file}:{lineno}: sequence {sid!r} frame {rec['frame']}"
                box = _parse_box(rec["box"], where, allow_empty=False)
                attrs = rec.get("attributes", [])
                if not isinstance(attrs, list) or not all(isinstance(a, str) for a in attrs):
                    raise FormatError(f"{where}: attributes must be a list of tags")
                try:
                    parsed.append(FrameAnnotation(box is not None, box, frozenset(attrs)))
                except InvalidInputError as exc:
                    raise FormatError(f"{where}: {exc}") from exc
            out.append(SequenceAnnotations(sid, tuple(parsed), frame_size))
    _check_unique(out)
    return out


def load_predictions(path: str | Path) -> list[SequencePredictions]:
    out = []
    for file in _files(path):
        for header, frames in _split_blocks(file, {"sequence"}, {"frame", "box"}):
            sid = header["sequence"]
            preds = tuple(
                FramePrediction(_parse_box(rec["box"], f"{file}:{lineno}: sequence {sid!r} frame {rec['frame']}", True))
                for lineno, rec in frames
            )
            out.append(SequencePredictions(sid, preds))
    _check_unique(out)
    return out


def _check_unique(seqs: Sequence[SequenceAnnotations | SequencePredictions]) -> None:
    seen = set()
    for s in seqs:
        if s.sequence_id in seen:
            raise FormatError(f"duplicate sequence id {s.sequence_id!r}")
        seen.add(s.sequence_id)


def _dump(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, allow_nan=False)


def _box_value(box: BoundingBox | None):
    return ABSENT if box is None else list(box.as_tuple())


def save_annotations(sequences: Sequence[SequenceAnnotations], path: str | Path) -> None:
    lines = []
    for seq in sequences:
        header: dict[str, Any] = {"sequence": seq.sequence_id}
        if seq.frame_size is not None:
            header["frame_size"] = list(seq.frame_size)
        lines.append(_dump(header))
        for i, gt in enumerate(seq.frames):
            rec: dict[str, Any] = {"frame": i, "box": _box_value(gt.box)}
            if gt.attributes:
                rec["attributes"] = sorted(gt.attributes)
            lines.append(_dump(rec))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def save_predictions(sequences: Sequence[SequencePredictions], path: str | Path) -> None:
    lines = []
    for seq in sequences:
        lines.append(_dump({"sequence": seq.sequence_id}))
        lines.extend(_dump({"frame": i, "box": _box_value(p.box)}) for i, p in enumerate(seq.frames))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# --------------------------------------------------------------------------
# Experiment config


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec
    detector: SimDetectorModel = SimDetectorModel()
    tracker: SimTrackerModel = SimTrackerModel()
    metric: EvalConfig = EvalConfig()
    theta_eh: float = 0.2
    theta_det: float = 0.5
    arms: tuple[Arm, ...] = ()
    trials: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        if not 0.0 <= self.theta_eh <= 1.0:
            raise InvalidInputError("theta_eh must lie in [0, 1]")
        if not 0.0 <= self.theta_det <= 1.0:
            raise InvalidInputError("theta_det must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be a 64-bit unsigned integer")
        for arm in self.arms:
            if not (0.0 <= arm.theta_eh <= 1.0 and 0.0 <= arm.theta_det <= 1.0):
                raise InvalidInputError(f"arm {arm.label!r} thresholds must lie in [0, 1]")

    def resolved_arms(self) -> tuple[Arm, ...]:
        if self.arms:
            return self.arms
        return (
            Arm(PipelineMode.EC, self.theta_eh, self.theta_det, "EC"),
            Arm(PipelineMode.DET_ONLY, self.theta_eh, self.theta_det, "DetOnly"),
            Arm(PipelineMode.SC, self.theta_eh, self.theta_det, "SC"),
        )


def _type_name(tp: Any) -> str:
    return getattr(tp, "__name__", str(tp))


def _convert(tp: Any, value: Any, path: str, defaults: dict[str, Any] | None = None) -> Any:
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        options = typing.get_args(tp)
        if value is None and type(None) in options:
            return None
        errors = []
        for option in options:
            if option is type(None):
                continue
            try:
                return _convert(option, value, path)
            except ConfigError as exc:
                errors.append(str(exc))
        raise ConfigError(errors[0] if len(errors) == 1 else f"{path}: {value!r} matches no allowed type")
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_convert(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_convert(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, path, defaults)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            allowed = ", ".join(repr(m.value) for m in tp)
            raise ConfigError(f"{path}: {value!r} is not one of {allowed}") from None
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {_type_name(tp)}")


def _build(cls: type, data: Any, path: str, defaults: dict[str, Any] | None = None) -> Any:
    if isinstance(data, list) and cls is ScoreLaw:
        data = dict(zip(("low", "high"), data)) if len(data) == 2 else data
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {data!r}")
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls) if f.init]
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"{path}: unknown field(s) {sorted(unknown)}")
    kwargs = dict(defaults or {})
    for name in names:
        if name in data:
            kwargs[name] = _convert(hints[name], data[name], f"{path}.{name}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except InvalidInputError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: Any) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object at the top level")
    if "scenario" not in data:
        raise ConfigError("config.scenario: required field missing")
    data = dict(data)
    raw_arms = data.pop("arms", [])
    base = _build(ExperimentConfig, data, "config")
    if not isinstance(raw_arms, list):
        raise ConfigError("config.arms: expected a list")
    inherited = {"theta_eh": base.theta_eh, "theta_det": base.theta_det}
    arms = tuple(_build(Arm, a, f"config.arms[{i}]", inherited) for i, a in enumerate(raw_arms))
    labels = [a.label for a in arms]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"config.arms: labels must be unique, got {labels}")
    try:
        return dataclasses.replace(base, arms=arms)
    except InvalidInputError as exc:
        raise ConfigError(f"config.arms: {exc}") from exc


def _plain(value: Any) -> Any:
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value) if f.init}
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    return value


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    """Fully resolved plain form; ``config_from_dict`` inverts it."""
    out = _plain(config)
    out["arms"] = [_plain(a) for a in config.resolved_arms()]
    return out


def dump_config(config: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2, allow_nan=False) + "\n"


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc
    return config_from_dict(data)
