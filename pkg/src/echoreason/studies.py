"""Echo study records: the per-case input to scoring and rectification.

A study bundles view-labeled video references, quantitative measurements, and
the disease query. Synthetic studies attach a text caption to every video so
the deterministic scorer has something to ground against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import SchemaError


@dataclass(frozen=True)
class Video:
    id: str
    view_label: str
    uri: str
    caption: str = ""


@dataclass(frozen=True)
class Measurement:
    name: str
    value: float
    unit: str


@dataclass(frozen=True)
class EchoStudy:
    patient_id: str
    videos: tuple[Video, ...]
    measurements: tuple[Measurement, ...] = ()
    query: str = ""
    ground_truth: str | None = None  # "Yes" | "No" | None

    def available_views(self) -> tuple[str, ...]:
        """Distinct view labels in first-occurrence order (deterministic)."""
        seen: dict[str, None] = {}
        for video in self.videos:
            seen.setdefault(video.view_label)
        return tuple(seen)

    def videos_for_view(self, view: str) -> list[Video]:
        return [video for video in self.videos if video.view_label == view]


def study_to_dict(study: EchoStudy) -> dict:
    return {
        "patient_id": study.patient_id,
        "videos": [
            {"id": v.id, "view_label": v.view_label, "uri": v.uri, "caption": v.caption}
            for v in study.videos
        ],
        "measurements": [
            {"name": m.name, "value": m.value, "unit": m.unit} for m in study.measurements
        ],
        "query": study.query,
        "ground_truth": study.ground_truth,
    }


def study_from_dict(payload: dict, *, source: str = "<study>") -> EchoStudy:
    def fail(message: str, path: str) -> SchemaError:
        return SchemaError(message, source=source, path=path)

    if not isinstance(payload, dict):
        raise fail("study must be a JSON object", "$")
    patient_id = payload.get("patient_id")
    if not isinstance(patient_id, str) or not patient_id:
        raise fail("patient_id must be a non-empty string", "patient_id")
    raw_videos = payload.get("videos")
    if not isinstance(raw_videos, list):
        raise fail("videos must be a list", "videos")
    videos = []
    for i, entry in enumerate(raw_videos):
        if not isinstance(entry, dict):
            raise fail("video must be an object", f"videos[{i}]")
        for key in ("id", "view_label", "uri"):
            if not isinstance(entry.get(key), str) or not entry[key]:
                raise fail(f"{key} must be a non-empty string", f"videos[{i}].{key}")
        caption = entry.get("caption", "")
        if not isinstance(caption, str):
            raise fail("caption must be a string", f"videos[{i}].caption")
        videos.append(Video(entry["id"], entry["view_label"], entry["uri"], caption))
    measurements = []
    for i, entry in enumerate(payload.get("measurements", [])):
        if not isinstance(entry, dict):
            raise fail("measurement must be an object", f"measurements[{i}]")
        name = entry.get("name")
        value = entry.get("value")
        unit = entry.get("unit", "")
        if not isinstance(name, str) or not name:
            raise fail("name must be a non-empty string", f"measurements[{i}].name")
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise fail("value must be a number", f"measurements[{i}].value")
        if not isinstance(unit, str):
            raise fail("unit must be a string", f"measurements[{i}].unit")
        measurements.append(Measurement(name, float(value), unit))
    query = payload.get("query", "")
    if not isinstance(query, str):
        raise fail("query must be a string", "query")
    ground_truth = payload.get("ground_truth")
    if ground_truth is not None and ground_truth not in ("Yes", "No"):
        raise fail('ground_truth must be "Yes", "No", or null', "ground_truth")
    return EchoStudy(
        patient_id=patient_id,
        videos=tuple(videos),
        measurements=tuple(measurements),
        query=query,
        ground_truth=ground_truth,
    )


def load_study(path: str) -> EchoStudy:
    with open(path, encoding="utf-8") as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", source=path) from exc
    return study_from_dict(payload, source=path)
