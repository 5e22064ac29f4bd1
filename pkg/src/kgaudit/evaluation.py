"""Audit execution: question the model, judge answers, aggregate.

Judging applies two complementary criteria per answer: ROUGE-L recall
against the reference with a strict threshold of 1.0, and a three-way
entailment check where the model answer is the premise and the
question-prefixed reference is the hypothesis.  An answer flags a
knowledge-memorization case (KMC) under the first when recall reaches
1.0 and under the second when the label is entailment.  Failed model
calls score zero and neutral: a missing answer is not evidence of
memorization.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from .clients import ClientError, EntailmentClient, GenerationClient
from .jsonl import read_json, read_jsonl, write_json, write_jsonl
from .rouge import rouge_recall
from .synthesis import AuditSuite

log = logging.getLogger(__name__)


class EvaluationError(RuntimeError):
    """Raised when answers do not cover the suite or artifacts are bad."""


@dataclass(frozen=True)
class ModelAnswer:
    """One model reply; ``failed`` marks transport-level failures."""

    qa_id: str
    text: str
    latency_ms: int
    failed: bool = False

    def __post_init__(self) -> None:
        if self.latency_ms < 0:
            raise EvaluationError(f"answer {self.qa_id!r} has negative latency")


@dataclass(frozen=True)
class JudgeVerdict:
    """Scores and KMC flags for one answered question."""

    qa_id: str
    rouge_recall: float
    entailment_label: str
    entailment_score: float
    kmc_rouge: bool
    kmc_entail: bool

    def __post_init__(self) -> None:
        if not 0.0 <= self.rouge_recall <= 1.0:
            raise EvaluationError(f"rouge_recall outside [0, 1]: {self.rouge_recall}")
        if not 0.0 <= self.entailment_score <= 1.0:
            raise EvaluationError(
                f"entailment_score outside [0, 1]: {self.entailment_score}"
            )
        if self.entailment_label not in ("entailment", "neutral", "contradiction"):
            raise EvaluationError(f"bad entailment label: {self.entailment_label!r}")
        if self.kmc_rouge != (self.rouge_recall >= 1.0):
            raise EvaluationError("kmc_rouge inconsistent with rouge_recall")
        if self.kmc_entail != (self.entailment_label == "entailment"):
            raise EvaluationError("kmc_entail inconsistent with entailment_label")


def make_verdict(
    qa_id: str, recall: float, label: str, score: float
) -> JudgeVerdict:
    """Build a verdict with the KMC flags derived from the scores."""
    return JudgeVerdict(
        qa_id=qa_id,
        rouge_recall=recall,
        entailment_label=label,
        entailment_score=score,
        kmc_rouge=recall >= 1.0,
        kmc_entail=label == "entailment",
    )


@dataclass(frozen=True)
class AuditReport:
    """Per-suite aggregate: KMC counts plus dataset-level means."""

    suite_id: str
    n_cases: int
    kmc_rouge_count: int
    kmc_entail_count: int
    mean_rouge: float
    entail_rate: float


@dataclass(frozen=True)
class ImpactReport:
    """Full-suite versus deduplicated-suite comparison.

    Drop percentages are (full - dedup) / full; inflation percentages
    are (full - dedup) / dedup.  Both are 0 when their denominator is 0,
    and both are expressed in percent.
    """

    full: AuditReport
    dedup: AuditReport
    kmc_drop_rouge_pct: float
    kmc_drop_entail_pct: float
    rouge_inflation_pct: float
    entail_inflation_pct: float


def ask_model(suite: AuditSuite, model: GenerationClient) -> list[ModelAnswer]:
    """Send each question as the sole user message; collect answers.

    A per-question client failure yields an empty answer with the failed
    flag set rather than aborting the audit.
    """
    answers: list[ModelAnswer] = []
    for qa in suite.qa_pairs:
        start = time.perf_counter()
        try:
            text = model.generate(None, qa.question)
            failed = False
        except ClientError as exc:
            log.warning("model call failed for %s: %s", qa.qa_id, exc)
            text = ""
            failed = True
        latency_ms = int((time.perf_counter() - start) * 1000)
        answers.append(
            ModelAnswer(qa_id=qa.qa_id, text=text, latency_ms=latency_ms, failed=failed)
        )
    return answers


def judge_entailment(
    answer: str, reference: str, question: str, nli: EntailmentClient
) -> tuple[str, float]:
    """Classify answer (premise) against question-prefixed reference.

    Returns the client's label and that label's probability.
    """
    hypothesis = f"{question} {reference}"
    label, scores = nli.classify(answer, hypothesis)
    return label, scores[label]


def judge_suite(
    suite: AuditSuite, answers: list[ModelAnswer], nli: EntailmentClient
) -> list[JudgeVerdict]:
    """One verdict per suite QA, in suite order.

    Raises EvaluationError when an answer is missing for any qa_id.
    Failed answers, and answers whose entailment call fails, score
    recall 0 and label neutral.
    """
    by_id = {answer.qa_id: answer for answer in answers}
    missing = [qa.qa_id for qa in suite.qa_pairs if qa.qa_id not in by_id]
    if missing:
        raise EvaluationError(f"answers missing for qa_ids: {missing[:5]}")
    verdicts: list[JudgeVerdict] = []
    for qa in suite.qa_pairs:
        answer = by_id[qa.qa_id]
        if answer.failed:
            verdicts.append(make_verdict(qa.qa_id, 0.0, "neutral", 0.0))
            continue
        recall = rouge_recall(answer.text, qa.reference_answer)
        try:
            label, score = judge_entailment(answer.text, qa.reference_answer, qa.question, nli)
        except ClientError as exc:
            log.warning("entailment call failed for %s: %s", qa.qa_id, exc)
            label, score = "neutral", 0.0
        verdicts.append(make_verdict(qa.qa_id, recall, label, score))
    return verdicts


def aggregate(verdicts: list[JudgeVerdict], suite_id: str = "suite") -> AuditReport:
    """KMC counts plus mean recall and entailment rate; zeros when empty."""
    n = len(verdicts)
    if n == 0:
        return AuditReport(
            suite_id=suite_id,
            n_cases=0,
            kmc_rouge_count=0,
            kmc_entail_count=0,
            mean_rouge=0.0,
            entail_rate=0.0,
        )
    return AuditReport(
        suite_id=suite_id,
        n_cases=n,
        kmc_rouge_count=sum(v.kmc_rouge for v in verdicts),
        kmc_entail_count=sum(v.kmc_entail for v in verdicts),
        mean_rouge=sum(v.rouge_recall for v in verdicts) / n,
        entail_rate=sum(v.kmc_entail for v in verdicts) / n,
    )


def _pct(numerator: float, denominator: float) -> float:
    return 100.0 * numerator / denominator if denominator > 0 else 0.0


def redundancy_impact(full: AuditReport, dedup: AuditReport) -> ImpactReport:
    """Quantify how much redundant facts inflate memorization metrics."""
    return ImpactReport(
        full=full,
        dedup=dedup,
        kmc_drop_rouge_pct=_pct(
            full.kmc_rouge_count - dedup.kmc_rouge_count, full.kmc_rouge_count
        ),
        kmc_drop_entail_pct=_pct(
            full.kmc_entail_count - dedup.kmc_entail_count, full.kmc_entail_count
        ),
        rouge_inflation_pct=_pct(full.mean_rouge - dedup.mean_rouge, dedup.mean_rouge),
        entail_inflation_pct=_pct(full.entail_rate - dedup.entail_rate, dedup.entail_rate),
    )


def write_answers(path, answers: list[ModelAnswer]) -> int:
    rows = [
        {
            "qa_id": a.qa_id,
            "text": a.text,
            "latency_ms": a.latency_ms,
            "failed": a.failed,
        }
        for a in answers
    ]
    return write_jsonl(path, rows)


def read_answers(path) -> list[ModelAnswer]:
    return [
        ModelAnswer(
            qa_id=row["qa_id"],
            text=row["text"],
            latency_ms=int(row["latency_ms"]),
            failed=bool(row["failed"]),
        )
        for row in read_jsonl(path)
    ]


def write_verdicts(path, verdicts: list[JudgeVerdict]) -> int:
    rows = [
        {
            "qa_id": v.qa_id,
            "rouge_recall": v.rouge_recall,
            "entailment_label": v.entailment_label,
            "entailment_score": v.entailment_score,
            "kmc_rouge": v.kmc_rouge,
            "kmc_entail": v.kmc_entail,
        }
        for v in verdicts
    ]
    return write_jsonl(path, rows)


def read_verdicts(path) -> list[JudgeVerdict]:
    return [
        JudgeVerdict(
            qa_id=row["qa_id"],
            rouge_recall=float(row["rouge_recall"]),
            entailment_label=row["entailment_label"],
            entailment_score=float(row["entailment_score"]),
            kmc_rouge=bool(row["kmc_rouge"]),
            kmc_entail=bool(row["kmc_entail"]),
        )
        for row in read_jsonl(path)
    ]


def report_to_dict(report: AuditReport) -> dict[str, object]:
    return {
        "suite_id": report.suite_id,
        "n_cases": report.n_cases,
        "kmc_rouge_count": report.kmc_rouge_count,
        "kmc_entail_count": report.kmc_entail_count,
        "mean_rouge": report.mean_rouge,
        "entail_rate": report.entail_rate,
    }


def report_from_dict(data: dict[str, object]) -> AuditReport:
    return AuditReport(
        suite_id=str(data["suite_id"]),
        n_cases=int(data["n_cases"]),
        kmc_rouge_count=int(data["kmc_rouge_count"]),
        kmc_entail_count=int(data["kmc_entail_count"]),
        mean_rouge=float(data["mean_rouge"]),
        entail_rate=float(data["entail_rate"]),
    )


def write_report(path, report: AuditReport) -> None:
    write_json(path, report_to_dict(report))


def read_report(path) -> AuditReport:
    return report_from_dict(read_json(path))


def impact_to_dict(impact: ImpactReport) -> dict[str, object]:
    return {
        "full": report_to_dict(impact.full),
        "dedup": report_to_dict(impact.dedup),
        "kmc_drop_rouge_pct": impact.kmc_drop_rouge_pct,
        "kmc_drop_entail_pct": impact.kmc_drop_entail_pct,
        "rouge_inflation_pct": impact.rouge_inflation_pct,
        "entail_inflation_pct": impact.entail_inflation_pct,
    }


def write_impact(path, impact: ImpactReport) -> None:
    write_json(path, impact_to_dict(impact))
