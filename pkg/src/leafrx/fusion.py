"""Decision fusion: merge detector findings with grounded RAG answers into
one recommendation report, with a documented severity heuristic.

Severity is a pure function of (finding count, max confidence):
high when max confidence >= 0.8 and at least 3 findings, low when max
confidence < 0.5, moderate otherwise. Ungrounded answers are kept and
flagged rather than suppressed, so the retrieval trace stays visible.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum

from .detection import DetectionReport, DiseaseLabel, canonical_rank
from .rag import GroundedAnswer

SEVERITY_HIGH_CONFIDENCE = 0.8
SEVERITY_HIGH_COUNT = 3
SEVERITY_LOW_CONFIDENCE = 0.5

UNGROUNDED_BANNER = "UNGROUNDED — verify with an agronomist"
HEALTHY_MESSAGE = "No disease detected."


class Severity(Enum):
    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"


class OverallStatus(Enum):
    HEALTHY = "healthy"
    DISEASED = "diseased"
    INCONCLUSIVE = "inconclusive"


class FusionError(Exception):
    """Raised when detection findings and answers cannot be merged."""


def severity_hint(finding_count: int, max_confidence: float) -> Severity:
    """The documented fusion severity rule; boundaries tested explicitly."""
    if max_confidence >= SEVERITY_HIGH_CONFIDENCE and finding_count >= SEVERITY_HIGH_COUNT:
        return Severity.HIGH
    if max_confidence < SEVERITY_LOW_CONFIDENCE:
        return Severity.LOW
    return Severity.MODERATE


@dataclass(frozen=True)
class DiseaseSection:
    label: DiseaseLabel
    max_confidence: float
    finding_count: int
    answer: GroundedAnswer
    severity: Severity


@dataclass(frozen=True)
class RecommendationReport:
    image_id: str
    generated_at: int  # unix seconds, UTC
    sections: tuple[DiseaseSection, ...]
    overall_status: OverallStatus


def fuse(
    report: DetectionReport,
    answers: dict[DiseaseLabel, GroundedAnswer],
    now: int | None = None,
) -> RecommendationReport:
    """Merge one detection report with per-disease answers.

    Requires an answer for every distinct detected label. Sections are
    ordered by descending max confidence, ties by canonical label order.
    """
    labels = report.labels()
    for label in labels:
        if label not in answers:
            raise FusionError(f"missing answer for detected label {label.value}")

    sections = []
    for label in labels:
        confidences = [f.confidence for f in report.findings if f.label == label]
        max_confidence = max(confidences)
        sections.append(
            DiseaseSection(
                label=label,
                max_confidence=max_confidence,
                finding_count=len(confidences),
                answer=answers[label],
                severity=severity_hint(len(confidences), max_confidence),
            )
        )
    sections.sort(key=lambda s: (-s.max_confidence, canonical_rank(s.label)))

    if not sections:
        status = OverallStatus.HEALTHY
    elif all(not s.answer.grounded for s in sections):
        status = OverallStatus.INCONCLUSIVE
    else:
        status = OverallStatus.DISEASED

    return RecommendationReport(
        image_id=report.image_id,
        generated_at=int(time.time()) if now is None else now,
        sections=tuple(sections),
        overall_status=status,
    )


# ----------------------------------------------------------------------
# Rendering
# ----------------------------------------------------------------------


def _ts_to_rfc3339(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _ts_from_rfc3339(value: str) -> int:
    return int(datetime.fromisoformat(value.replace("Z", "+00:00")).timestamp())


def report_to_dict(report: RecommendationReport) -> dict:
    return {
        "image_id": report.image_id,
        "generated_at": _ts_to_rfc3339(report.generated_at),
        "overall_status": report.overall_status.value,
        "sections": [
            {
                "label": s.label.value,
                "max_confidence": s.max_confidence,
                "finding_count": s.finding_count,
                "severity": s.severity.value,
                "answer": s.answer.to_dict(),
            }
            for s in report.sections
        ],
    }


def report_from_dict(data: dict) -> RecommendationReport:
    sections = tuple(
        DiseaseSection(
            label=DiseaseLabel(obj["label"]),
            max_confidence=obj["max_confidence"],
            finding_count=obj["finding_count"],
            severity=Severity(obj["severity"]),
            answer=GroundedAnswer(
                text=obj["answer"]["text"],
                citations=tuple(obj["answer"]["citations"]),
                grounding_score=obj["answer"]["grounding_score"],
                grounded=obj["answer"]["grounded"],
                model_id=obj["answer"]["model_id"],
            ),
        )
        for obj in data["sections"]
    )
    return RecommendationReport(
        image_id=data["image_id"],
        generated_at=_ts_from_rfc3339(data["generated_at"]),
        sections=sections,
        overall_status=OverallStatus(data["overall_status"]),
    )


def render_markdown(report: RecommendationReport) -> str:
    lines = [
        f"# Diagnosis report: {report.image_id}",
        "",
        f"Generated: {_ts_to_rfc3339(report.generated_at)}",
        f"Status: {report.overall_status.value}",
        "",
    ]
    if not report.sections:
        lines.append(HEALTHY_MESSAGE)
        lines.append("")
        return "\n".join(lines)

    for s in report.sections:
        lines.append(f"## {s.label.value}")
        lines.append("")
        lines.append(
            f"Findings: {s.finding_count} | max confidence "
            f"{s.max_confidence:.2f} | severity {s.severity.value}"
        )
        lines.append("")
        if not s.answer.grounded:
            lines.append(f"> **{UNGROUNDED_BANNER}**")
            lines.append("")
        lines.append(s.answer.text)
        lines.append("")
        if s.answer.citations:
            lines.append("Citations: " + ", ".join(s.answer.citations))
        else:
            lines.append("Citations: none")
        lines.append("")
    return "\n".join(lines)


def render_report(report: RecommendationReport, format: str = "json") -> bytes:
    """Render to JSON (lossless round-trip) or human-readable Markdown."""
    if format == "json":
        return json.dumps(report_to_dict(report), indent=2).encode("utf-8")
    if format == "markdown":
        return render_markdown(report).encode("utf-8")
    raise FusionError(f"unknown report format {format!r}")
