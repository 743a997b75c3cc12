"""Detector report intake: parse detector JSON, canonicalize labels against
the disease vocabulary, and drop anything the pipeline must not see.

The vocabulary is the single registry of known disease classes; extending
the system to new classes means adding a member to ``DiseaseLabel`` (the
canonical order list updates itself). Out-of-vocabulary labels and findings
below the confidence floor never reach downstream modules; they are counted
on the report's intake stats instead.
"""

from __future__ import annotations

import json
import shlex
import string
import subprocess
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

DEFAULT_CONFIDENCE_FLOOR = 0.25
DETECTOR_TIMEOUT_SECONDS = 120.0

_TRIM_CHARS = string.whitespace + string.punctuation


class DiseaseLabel(Enum):
    RUST = "Rust"
    MINER = "Miner"
    PHOMA = "Phoma"


# Canonical presentation order (derived from declaration order).
CANONICAL_ORDER: list[DiseaseLabel] = list(DiseaseLabel)

_VOCABULARY: dict[str, DiseaseLabel] = {label.value.lower(): label for label in DiseaseLabel}


def canonical_rank(label: DiseaseLabel) -> int:
    return CANONICAL_ORDER.index(label)


class DetectionError(Exception):
    """Raised when a detector report is malformed or a detector run fails."""


def normalize_token(token: str) -> str:
    """Trim surrounding whitespace/punctuation and lowercase."""
    return token.strip(_TRIM_CHARS).lower()


def lookup_label(token: str) -> DiseaseLabel | None:
    return _VOCABULARY.get(normalize_token(token))


def filter_labels(raw_tokens: list[str]) -> tuple[list[DiseaseLabel], list[str]]:
    """Partition tokens into known disease labels and dropped noise.

    Matching is case-insensitive exact match after trimming whitespace and
    punctuation. Kept labels preserve input order with duplicates collapsed
    to the first occurrence; everything else is returned verbatim.
    """
    kept: list[DiseaseLabel] = []
    dropped: list[str] = []
    for token in raw_tokens:
        label = lookup_label(token)
        if label is None:
            dropped.append(token)
        elif label not in kept:
            kept.append(label)
    return kept, dropped


@dataclass(frozen=True)
class DetectionFinding:
    label: DiseaseLabel
    confidence: float
    bbox: tuple[float, float, float, float] | None = None
    polygon: tuple[tuple[float, float], ...] | None = None


@dataclass
class IntakeStats:
    """What intake filtered out of a report; provenance, not report content."""

    dropped_labels: list[str] = field(default_factory=list)
    dropped_low_confidence: int = 0


@dataclass
class DetectionReport:
    image_id: str
    detector_name: str
    detector_version: str
    findings: list[DetectionFinding]
    captured_at: str | None = None  # RFC 3339, kept verbatim
    intake: IntakeStats = field(default_factory=IntakeStats, compare=False)

    def labels(self) -> list[DiseaseLabel]:
        """Distinct detected labels in canonical order."""
        present = {f.label for f in self.findings}
        return [label for label in CANONICAL_ORDER if label in present]


def _validate_rfc3339(value: str) -> None:
    try:
        datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as exc:
        raise DetectionError(f"captured_at is not an RFC 3339 timestamp: {value!r}") from exc


def _parse_finding(index: int, obj: dict) -> DetectionFinding | None:
    """Validate one finding; returns None when its label is out of vocabulary."""
    if not isinstance(obj, dict):
        raise DetectionError(f"finding {index}: expected an object")
    if "label" not in obj:
        raise DetectionError(f"finding {index}: missing required field 'label'")
    if "confidence" not in obj:
        raise DetectionError(f"finding {index}: missing required field 'confidence'")

    confidence = obj["confidence"]
    if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
        raise DetectionError(f"finding {index}: confidence must be a number")
    if not 0.0 <= confidence <= 1.0:
        raise DetectionError(f"finding {index}: confidence {confidence} outside [0, 1]")

    bbox = None
    if obj.get("bbox") is not None:
        raw = obj["bbox"]
        if not isinstance(raw, list) or len(raw) != 4 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in raw
        ):
            raise DetectionError(f"finding {index}: bbox must be [x, y, w, h]")
        x, y, w, h = (float(v) for v in raw)
        if not all(0.0 <= v <= 1.0 for v in (x, y, w, h)) or x + w > 1.0 or y + h > 1.0:
            raise DetectionError(f"finding {index}: bbox not normalized within the image")
        bbox = (x, y, w, h)

    polygon = None
    if obj.get("polygon") is not None:
        raw = obj["polygon"]
        if not isinstance(raw, list) or len(raw) < 3:
            raise DetectionError(f"finding {index}: polygon needs at least 3 points")
        points = []
        for pt in raw:
            if not isinstance(pt, list) or len(pt) != 2 or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in pt
            ):
                raise DetectionError(f"finding {index}: polygon points must be [x, y]")
            px, py = float(pt[0]), float(pt[1])
            if not (0.0 <= px <= 1.0 and 0.0 <= py <= 1.0):
                raise DetectionError(f"finding {index}: polygon point not normalized")
            points.append((px, py))
        polygon = tuple(points)

    label = lookup_label(str(obj["label"]))
    if label is None:
        return None
    return DetectionFinding(label=label, confidence=float(confidence), bbox=bbox,
                            polygon=polygon)


def parse_report(
    raw: bytes | str,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> DetectionReport:
    """Parse and validate a detector report.

    Unknown JSON fields are ignored. Findings with out-of-vocabulary labels
    or confidence below the floor are dropped and counted on the report's
    intake stats; malformed findings are hard errors naming the index.
    """
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DetectionError(f"report is not UTF-8 at byte offset {exc.start}") from exc
    else:
        text = raw

    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[: exc.pos].encode("utf-8"))
        raise DetectionError(f"malformed JSON at byte offset {byte_offset}: {exc.msg}") from exc

    if not isinstance(data, dict):
        raise DetectionError("report must be a JSON object")
    for name in ("image_id", "detector", "findings"):
        if name not in data:
            raise DetectionError(f"missing required field '{name}'")
    image_id = data["image_id"]
    if not isinstance(image_id, str) or not image_id:
        raise DetectionError("image_id must be a non-empty string")
    detector = data["detector"]
    if not isinstance(detector, dict) or "name" not in detector or "version" not in detector:
        raise DetectionError("detector must be an object with 'name' and 'version'")
    if not isinstance(data["findings"], list):
        raise DetectionError("findings must be an array")

    captured_at = data.get("captured_at")
    if captured_at is not None:
        if not isinstance(captured_at, str):
            raise DetectionError("captured_at must be an RFC 3339 string")
        _validate_rfc3339(captured_at)

    intake = IntakeStats()
    findings: list[DetectionFinding] = []
    for index, obj in enumerate(data["findings"]):
        finding = _parse_finding(index, obj)
        if finding is None:
            intake.dropped_labels.append(str(obj["label"]))
            continue
        if finding.confidence < confidence_floor:
            intake.dropped_low_confidence += 1
            continue
        findings.append(finding)

    return DetectionReport(
        image_id=image_id,
        detector_name=str(detector["name"]),
        detector_version=str(detector["version"]),
        findings=findings,
        captured_at=captured_at,
        intake=intake,
    )


def report_to_dict(report: DetectionReport) -> dict:
    """Canonical JSON form of a report (already-filtered findings only)."""
    out: dict = {
        "image_id": report.image_id,
        "detector": {"name": report.detector_name, "version": report.detector_version},
    }
    if report.captured_at is not None:
        out["captured_at"] = report.captured_at
    out["findings"] = []
    for f in report.findings:
        obj: dict = {"label": f.label.value, "confidence": f.confidence}
        if f.bbox is not None:
            obj["bbox"] = list(f.bbox)
        if f.polygon is not None:
            obj["polygon"] = [list(pt) for pt in f.polygon]
        out["findings"].append(obj)
    return out


def serialize_report(report: DetectionReport) -> bytes:
    return json.dumps(report_to_dict(report), separators=(",", ":")).encode("utf-8")


def run_external_detector(
    image_path: str,
    command_template: str,
    timeout: float = DETECTOR_TIMEOUT_SECONDS,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> DetectionReport:
    """Run an external detector process and parse its stdout as a report.

    The template must contain an ``{image}`` placeholder; the detector is
    expected to print DetectionReport JSON on stdout and exit 0.
    """
    if "{image}" not in command_template:
        raise DetectionError("command template must contain an {image} placeholder")
    argv = [tok.replace("{image}", str(image_path)) for tok in shlex.split(command_template)]
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        raise DetectionError("detector timeout") from exc
    except OSError as exc:
        raise DetectionError(f"detector failed to start: {exc}") from exc
    if proc.returncode != 0:
        stderr = proc.stderr.decode("utf-8", errors="replace").strip()
        raise DetectionError(f"detector exited {proc.returncode}: {stderr}")
    return parse_report(proc.stdout, confidence_floor=confidence_floor)
