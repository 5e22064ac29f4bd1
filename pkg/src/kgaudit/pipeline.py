"""Stage orchestration: run directory layout, manifest, resumability.

A run lives under ``<out_dir>/<run_id>/`` with one subdirectory per
stage (ingest, extract, dedup, synthesize, answer, judge, report) and a
``manifest.json`` recording stage status, artifact paths, and the full
effective config.  Artifacts are deterministic given their inputs: rows
are sorted, serialization is stable, and the one timestamp used inside
artifacts is the manifest's creation time, so resuming a run reproduces
missing artifacts byte-for-byte under deterministic backends.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .clients import EntailmentClient, ExtractorClient, GenerationClient
from .config import Config, ConfigError
from .corpus import index_chunks, load_corpus, read_chunks, segment_document, write_chunks
from .evaluation import (
    AuditReport,
    aggregate,
    ask_model,
    judge_suite,
    read_answers,
    read_verdicts,
    write_answers,
    write_verdicts,
)
from .extraction import build_graph
from .graph import NORMALIZATION_VERSION, intersect, read_graph, subtract, write_graph
from .jsonl import read_json, write_json
from .synthesis import AuditSuite, SynthesisConfig, read_suite, synthesize_suite, write_suite

log = logging.getLogger(__name__)

STAGES: tuple[str, ...] = (
    "ingest",
    "extract",
    "dedup",
    "synthesize",
    "answer",
    "judge",
    "report",
)

_STAGE_DEPS: dict[str, tuple[str, ...]] = {
    "ingest": (),
    "extract": ("ingest",),
    "dedup": ("extract",),
    "synthesize": ("dedup",),
    "answer": ("synthesize",),
    "judge": ("answer",),
    "report": ("judge",),
}

GENERATION_STAGES: tuple[str, ...] = ("ingest", "extract", "dedup", "synthesize")
AUDIT_STAGES: tuple[str, ...] = ("answer", "judge", "report")


class PipelineError(RuntimeError):
    """A stage could not complete; ``stage`` names it."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


class PartialFailureError(PipelineError):
    """Per-item failures exceeded the configured tolerance."""


@dataclass(frozen=True)
class RunPaths:
    """All artifact locations for one run directory."""

    root: Path

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.json"

    def stage_dir(self, stage: str) -> Path:
        return self.root / stage

    @property
    def forget_chunks(self) -> Path:
        return self.root / "ingest" / "forget_chunks.jsonl"

    @property
    def retain_chunks(self) -> Path:
        return self.root / "ingest" / "retain_chunks.jsonl"

    @property
    def g_fgt(self) -> Path:
        return self.root / "extract" / "g_fgt.jsonl"

    @property
    def g_ret(self) -> Path:
        return self.root / "extract" / "g_ret.jsonl"

    @property
    def e_conf(self) -> Path:
        return self.root / "dedup" / "e_conf.json"

    @property
    def g_test(self) -> Path:
        return self.root / "dedup" / "g_test.jsonl"

    @property
    def g_full(self) -> Path:
        return self.root / "dedup" / "g_full.jsonl"

    @property
    def suite(self) -> Path:
        return self.root / "synthesize" / "suite.jsonl"

    @property
    def suite_full(self) -> Path:
        return self.root / "synthesize" / "suite_full.jsonl"

    @property
    def answers(self) -> Path:
        return self.root / "answer" / "answers.jsonl"

    @property
    def answers_full(self) -> Path:
        return self.root / "answer" / "answers_full.jsonl"

    @property
    def verdicts(self) -> Path:
        return self.root / "judge" / "verdicts.jsonl"

    @property
    def verdicts_full(self) -> Path:
        return self.root / "judge" / "verdicts_full.jsonl"

    @property
    def report_json(self) -> Path:
        return self.root / "report" / "report.json"

    @property
    def impact_json(self) -> Path:
        return self.root / "report" / "impact.json"

    @property
    def report_table(self) -> Path:
        return self.root / "report" / "report.txt"

    @property
    def report_csv(self) -> Path:
        return self.root / "report" / "report.csv"

    @property
    def figures_dir(self) -> Path:
        return self.root / "report" / "figures"


def run_paths(cfg: Config) -> RunPaths:
    run = cfg["run"]
    return RunPaths(root=Path(run["out_dir"]) / run["run_id"])


@dataclass
class StageClients:
    """Optional client overrides, mainly for tests and scripted audits."""

    extractor: ExtractorClient | None = None
    synthesis_llm: GenerationClient | None = None
    model: GenerationClient | None = None
    nli: EntailmentClient | None = None


@dataclass
class Manifest:
    """On-disk run state; everything persisted is reachable from here."""

    run_id: str
    created_at: str
    config: dict[str, Any]
    normalization_version: str = NORMALIZATION_VERSION
    stages: dict[str, dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for stage in STAGES:
            self.stages.setdefault(stage, {"status": "pending", "artifacts": []})

    def status(self, stage: str) -> str:
        return self.stages[stage]["status"]

    def mark(
        self,
        stage: str,
        status: str,
        artifacts: list[str] | None = None,
        info: dict[str, Any] | None = None,
    ) -> None:
        entry: dict[str, Any] = {"status": status, "artifacts": artifacts or []}
        if info:
            entry["info"] = info
        self.stages[stage] = entry

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "normalization_version": self.normalization_version,
            "config": self.config,
            "stages": self.stages,
        }

    def save(self, path: Path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: Path) -> "Manifest":
        data = read_json(path)
        return cls(
            run_id=data["run_id"],
            created_at=data["created_at"],
            config=data["config"],
            normalization_version=data["normalization_version"],
            stages=data["stages"],
        )


def ensure_manifest(cfg: Config, paths: RunPaths) -> Manifest:
    """Load the run's manifest, or create it on first contact.

    The config snapshot is immutable after run start: rerunning with a
    different effective config is a config error, not a silent drift.
    """
    if paths.manifest.exists():
        manifest = Manifest.load(paths.manifest)
        if manifest.config != cfg.to_dict():
            raise ConfigError(
                f"run {manifest.run_id!r} was started with a different config; "
                "use a new run_id or restore the original settings"
            )
        if manifest.normalization_version != NORMALIZATION_VERSION:
            raise ConfigError(
                f"run {manifest.run_id!r} used normalization version "
                f"{manifest.normalization_version!r}; current is {NORMALIZATION_VERSION!r}"
            )
        return manifest
    paths.root.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(
        run_id=cfg["run"]["run_id"],
        created_at=dt.datetime.now(dt.timezone.utc).isoformat(),
        config=cfg.to_dict(),
    )
    manifest.save(paths.manifest)
    return manifest


def _rel(paths: RunPaths, *artifacts: Path) -> list[str]:
    return [str(p.relative_to(paths.root)) for p in artifacts]


def _require_corpora(cfg: Config) -> tuple[Path, Path]:
    forget = cfg["corpus"]["forget_path"]
    retain = cfg["corpus"]["retain_path"]
    if not forget:
        raise ConfigError("corpus.forget_path is required for this stage")
    if not retain:
        raise ConfigError("corpus.retain_path is required for this stage")
    forget_path, retain_path = Path(forget), Path(retain)
    if not forget_path.exists():
        raise ConfigError(f"corpus.forget_path does not exist: {forget_path}")
    if not retain_path.exists():
        raise ConfigError(f"corpus.retain_path does not exist: {retain_path}")
    return forget_path, retain_path


def _stage_ingest(
    cfg: Config, paths: RunPaths, manifest: Manifest, clients: StageClients
) -> dict[str, Any]:
    forget_path, retain_path = _require_corpora(cfg)
    chunk_cfg = cfg.chunk_config()
    info: dict[str, Any] = {}
    for label, src, dest in (
        ("forget", forget_path, paths.forget_chunks),
        ("retain", retain_path, paths.retain_chunks),
    ):
        docs = load_corpus(src, label)
        chunks = [chunk for doc in docs for chunk in segment_document(doc, chunk_cfg)]
        write_chunks(dest, chunks)
        info[f"{label}_documents"] = len(docs)
        info[f"{label}_chunks"] = len(chunks)
    return {
        "artifacts": _rel(paths, paths.forget_chunks, paths.retain_chunks),
        "info": info,
    }


def _check_failure_rate(
    stage: str, what: str, failed: int, total: int, cfg: Config
) -> None:
    limit = cfg["limits"]["max_failure_rate"]
    rate = failed / total if total else 0.0
    if failed and rate > limit:
        raise PartialFailureError(
            stage,
            f"{failed}/{total} {what} failed ({rate:.1%}), above the "
            f"limits.max_failure_rate threshold of {limit:.1%}",
        )


def _stage_extract(
    cfg: Config, paths: RunPaths, manifest: Manifest, clients: StageClients
) -> dict[str, Any]:
    extractor_cfg = cfg.extractor_config()
    info: dict[str, Any] = {}
    for label, src, dest in (
        ("forget", paths.forget_chunks, paths.g_fgt),
        ("retain", paths.retain_chunks, paths.g_ret),
    ):
        chunks = read_chunks(src)
        result = build_graph(chunks, extractor_cfg, label, client=clients.extractor)
        _check_failure_rate(
            "extract", f"{label} chunks", result.failed_chunks, len(chunks), cfg
        )
        write_graph(dest, result.graph)
        info[f"{label}_facts"] = len(result.graph)
        info[f"{label}_failed_chunks"] = result.failed_chunks
        if result.failures:
            info[f"{label}_failures"] = [list(item) for item in result.failures[:20]]
    return {"artifacts": _rel(paths, paths.g_fgt, paths.g_ret), "info": info}


def _stage_dedup(
    cfg: Config, paths: RunPaths, manifest: Manifest, clients: StageClients
) -> dict[str, Any]:
    g_fgt = read_graph(paths.g_fgt)
    g_ret = read_graph(paths.g_ret)
    conf = intersect(g_fgt, g_ret)
    g_test = subtract(g_fgt, conf)
    write_json(paths.e_conf, {"count": len(conf), "keys": sorted(conf)})
    write_graph(paths.g_test, g_test)
    artifacts = [paths.e_conf, paths.g_test]
    if cfg["run"]["emit_full_suite"]:
        write_graph(paths.g_full, subtract(g_fgt, set()))
        artifacts.append(paths.g_full)
    info = {
        "initial_facts": len(g_fgt),
        "overlap_facts": len(conf),
        "final_facts": len(g_test),
        "retain_facts": len(g_ret),
    }
    return {"artifacts": _rel(paths, *artifacts), "info": info}


def _chunk_index(paths: RunPaths) -> dict[str, Any]:
    return index_chunks(read_chunks(paths.forget_chunks))


def _stage_synthesize(
    cfg: Config, paths: RunPaths, manifest: Manifest, clients: StageClients
) -> dict[str, Any]:
    synth = cfg["synthesis"]
    llm = clients.synthesis_llm or cfg.synthesis_client()
    chunk_index = _chunk_index(paths)
    targets = [(paths.g_test, paths.suite, "dedup")]
    if cfg["run"]["emit_full_suite"]:
        targets.append((paths.g_full, paths.suite_full, "full"))
    info: dict[str, Any] = {}
    artifacts: list[Path] = []
    for graph_path, suite_path, variant in targets:
        graph = read_graph(graph_path)
        synth_cfg = SynthesisConfig(
            model=synth["model"],
            temperature=synth["temperature"],
            context_budget=synth["context_budget"],
            parse_retries=synth["parse_retries"],
            suite_id=f"{manifest.run_id}-{variant}",
            timestamp=manifest.created_at,
        )
        suite = synthesize_suite(graph, chunk_index, llm, synth_cfg)
        _check_failure_rate(
            "synthesize", f"{variant} facts", suite.failed_facts, len(graph), cfg
        )
        write_suite(suite_path, suite)
        artifacts.append(suite_path)
        info[f"{variant}_qa_pairs"] = len(suite.qa_pairs)
        info[f"{variant}_failed_facts"] = suite.failed_facts
    return {"artifacts": _rel(paths, *artifacts), "info": info}


def _suite_targets(cfg: Config, paths: RunPaths) -> list[tuple[Path, Path, Path, str]]:
    targets = [(paths.suite, paths.answers, paths.verdicts, "dedup")]
    if cfg["run"]["emit_full_suite"]:
        targets.append((paths.suite_full, paths.answers_full, paths.verdicts_full, "full"))
    return targets


def _stage_answer(
    cfg: Config, paths: RunPaths, manifest: Manifest, clients: StageClients
) -> dict[str, Any]:
    model = clients.model or cfg.model_client()
    info: dict[str, Any] = {}
    artifacts: list[Path] = []
    for suite_path, answers_path, _, variant in _suite_targets(cfg, paths):
        suite = read_suite(suite_path)
        answers = ask_model(suite, model)
        failed = sum(a.failed for a in answers)
        _check_failure_rate("answer", f"{variant} answers", failed, len(answers), cfg)
        write_answers(answers_path, answers)
        artifacts.append(answers_path)
        info[f"{variant}_answers"] = len(answers)
        info[f"{variant}_failed_answers"] = failed
    return {"artifacts": _rel(paths, *artifacts), "info": info}


def _stage_judge(
    cfg: Config, paths: RunPaths, manifest: Manifest, clients: StageClients
) -> dict[str, Any]:
    nli = clients.nli or cfg.judge_client()
    info: dict[str, Any] = {}
    artifacts: list[Path] = []
    for suite_path, answers_path, verdicts_path, variant in _suite_targets(cfg, paths):
        suite = read_suite(suite_path)
        answers = read_answers(answers_path)
        verdicts = judge_suite(suite, answers, nli)
        write_verdicts(verdicts_path, verdicts)
        artifacts.append(verdicts_path)
        info[f"{variant}_verdicts"] = len(verdicts)
        info[f"{variant}_kmc_rouge"] = sum(v.kmc_rouge for v in verdicts)
        info[f"{variant}_kmc_entail"] = sum(v.kmc_entail for v in verdicts)
    return {"artifacts": _rel(paths, *artifacts), "info": info}


def _stage_report(
    cfg: Config, paths: RunPaths, manifest: Manifest, clients: StageClients
) -> dict[str, Any]:
    from . import report as report_mod

    outcome = report_mod.render_run_report(cfg, paths, manifest)
    return {
        "artifacts": _rel(paths, *outcome.artifacts),
        "info": {"artifact_count": len(outcome.artifacts)},
    }


_STAGE_FUNCS: dict[str, Callable[..., dict[str, Any]]] = {
    "ingest": _stage_ingest,
    "extract": _stage_extract,
    "dedup": _stage_dedup,
    "synthesize": _stage_synthesize,
    "answer": _stage_answer,
    "judge": _stage_judge,
    "report": _stage_report,
}


def execute_stage(
    stage: str,
    cfg: Config,
    clients: StageClients | None = None,
    resume: bool = False,
) -> bool:
    """Run one stage; returns False when resume skipped a done stage.

    Dependencies must be marked done in the manifest.  Failures mark the
    stage failed in the manifest before re-raising.
    """
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    paths = run_paths(cfg)
    if stage == "ingest":
        # Validate corpora before the run directory or manifest exist, so
        # a bad invocation writes nothing at all.
        _require_corpora(cfg)
    manifest = ensure_manifest(cfg, paths)
    if resume and manifest.status(stage) == "done":
        # A done stage whose artifacts were deleted is re-run, not skipped;
        # deterministic stages reproduce the same bytes.
        recorded = manifest.stages[stage].get("artifacts", [])
        missing = [rel for rel in recorded if not (paths.root / rel).exists()]
        if not missing:
            log.info("stage %s already done, skipping", stage)
            return False
        log.info("stage %s re-running, artifacts missing: %s", stage, missing)
    for dep in _STAGE_DEPS[stage]:
        if manifest.status(dep) != "done":
            raise PipelineError(
                stage, f"requires stage {dep!r} to be done (status: {manifest.status(dep)!r})"
            )
    paths.stage_dir(stage).mkdir(parents=True, exist_ok=True)
    try:
        outcome = _STAGE_FUNCS[stage](cfg, paths, manifest, clients or StageClients())
    except (PipelineError, ConfigError):
        manifest.mark(stage, "failed")
        manifest.save(paths.manifest)
        raise
    except (OSError, ValueError, RuntimeError) as exc:
        manifest.mark(stage, "failed")
        manifest.save(paths.manifest)
        raise PipelineError(stage, str(exc)) from exc
    manifest.mark(stage, "done", outcome["artifacts"], outcome.get("info"))
    manifest.save(paths.manifest)
    return True


def run_generation(cfg: Config, clients: StageClients | None = None) -> AuditSuite:
    """Segment, extract, dedup, synthesize; resume past done stages.

    Returns the deduplicated audit suite.
    """
    for stage in GENERATION_STAGES:
        execute_stage(stage, cfg, clients=clients, resume=True)
    return read_suite(run_paths(cfg).suite)


def run_audit(cfg: Config, clients: StageClients | None = None) -> AuditReport:
    """Answer, judge, report; returns the deduplicated-suite report."""
    for stage in AUDIT_STAGES:
        execute_stage(stage, cfg, clients=clients, resume=True)
    paths = run_paths(cfg)
    verdicts = read_verdicts(paths.verdicts)
    return aggregate(verdicts, suite_id=f"{cfg['run']['run_id']}-dedup")
