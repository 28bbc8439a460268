"""Experiment orchestration.

Runs the extraction loop over whole datasets: render a prompt per
document, complete it through the caching client, parse and ground
the response, score against gold.  The grid runner sweeps shot
counts, the ablation runner sweeps prompt variants, and the agent
runner chains per-type prompts that feed each other's findings.

Every dataset-level run leaves a directory under the output root
named by its manifest id, holding the manifest, all prompts and raw
responses, parsed predictions, scores, and a plain-text table.
Replay-mode runs are byte-reproducible.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import datetime
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .corpus import Dataset, Document, SchemaDescriptor
from .eval import (
    ConfusionCounts,
    MatchPolicy,
    TaskScores,
    aggregate,
    score_constraints,
    score_er,
    score_md,
    score_re,
)
from .llm import CachingClient, ChatRequest
from .parser import (
    ParsedConstraint,
    ParsedMention,
    ParseReport,
    ground,
    ground_clusters,
    ground_relations,
    ground_report,
    item_to_record,
    parse,
)
from .prompt import (
    ABLATION_ROWS,
    PromptConfig,
    RenderedPrompt,
    ablation_variants,
    assemble,
    load_template,
)

DEFAULT_MODEL_ID = "stub"
DEFAULT_SHOT_COUNTS = (0, 1, 3)
REPLAY_TIMESTAMP = "1970-01-01T00:00:00Z"
MAX_WORKERS = 4

SHOT_ROW_LABELS = {0: "zero-shot", 1: "1-shot", 3: "3-shot"}

_BASELINES_PATH = Path(__file__).resolve().parent / "data" / "baselines.json"


def reference_scores() -> dict:
    """Published comparison numbers, used only when printing tables."""
    try:
        raw = json.loads(_BASELINES_PATH.read_text(encoding="utf-8"))
    except FileNotFoundError:
        return {}
    return raw.get("reference_scores", {})


def utc_timestamp(cache_mode: str) -> str:
    if cache_mode == "replay":
        # a wall clock would break byte-identical reruns
        return REPLAY_TIMESTAMP
    return datetime.datetime.now(datetime.timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%SZ"
    )


def per_document_seed(base_seed: int, doc_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{doc_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# manifests

@dataclass(frozen=True)
class RunManifest:
    dataset_name: str
    task: str
    model_id: str
    shot_count: int
    shot_seed: int
    prompt_fingerprints: dict
    cache_mode: str
    timestamp: str
    toolkit_version: str = __version__

    def to_record(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "task": self.task,
            "model_id": self.model_id,
            "shot_count": self.shot_count,
            "shot_seed": self.shot_seed,
            "prompt_fingerprints": dict(sorted(self.prompt_fingerprints.items())),
            "cache_mode": self.cache_mode,
            "timestamp": self.timestamp,
            "toolkit_version": self.toolkit_version,
        }

    @property
    def manifest_id(self) -> str:
        # provenance-only fields stay out so a replay rerun lands in
        # the directory its recording created
        record = self.to_record()
        del record["timestamp"]
        del record["cache_mode"]
        payload = json.dumps(record, sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:12]


# ---------------------------------------------------------------------------
# single-document extraction

def _predictions_for(task: str, report: ParseReport, doc: Document):
    if task == "MD":
        grounded, ungrounded = ground_report(report, doc)
        return grounded + ungrounded
    if task == "ER":
        clusters, _ = ground_clusters(report, doc)
        return clusters
    if task == "RE":
        return ground_relations(report, doc)
    if task == "CE":
        return [i for i in report.items if isinstance(i, ParsedConstraint)]
    raise ValueError(f"unknown task {task!r}")


def score_predictions(task: str, predictions, doc: Document,
                      policy: MatchPolicy) -> TaskScores:
    if task == "MD":
        return score_md(predictions, list(doc.mentions), policy, doc)
    if task == "ER":
        return score_er(predictions, list(doc.entities), doc, policy)
    if task == "RE":
        return score_re(predictions, list(doc.relations), doc, policy)
    if task == "CE":
        return score_constraints(predictions, list(doc.constraints), policy)
    raise ValueError(f"unknown task {task!r}")


def _document_config(config: PromptConfig, doc_id: str,
                     fixed_shots: bool) -> PromptConfig:
    if fixed_shots or config.shot_count == 0:
        return config
    return config.replace(shot_seed=per_document_seed(config.shot_seed, doc_id))


def _extract_full(doc, config, client, shot_pool, template, model_id,
                  fixed_shots):
    cfg = _document_config(config, doc.id, fixed_shots)
    rendered = assemble(cfg, doc, shot_pool, template)
    response = client.complete(ChatRequest(model_id, rendered.text))
    report = parse(response.text, config.task, config.schema)
    predictions = _predictions_for(config.task, report, doc)
    return rendered, response, report, predictions


def extract_document(doc: Document, config: PromptConfig, client: CachingClient,
                     shot_pool=(), *, template: dict | None = None,
                     model_id: str = DEFAULT_MODEL_ID, fixed_shots: bool = False):
    """Prompt, complete, parse, ground one document.

    Returns the parse report, the task-shaped predictions, and the
    rendered prompt.
    """
    rendered, _, report, predictions = _extract_full(
        doc, config, client, shot_pool, template, model_id, fixed_shots
    )
    return report, predictions, rendered


# ---------------------------------------------------------------------------
# dataset-level runs

@dataclass(frozen=True)
class CellResult:
    dataset_name: str
    task: str
    shot_count: int
    scores: TaskScores | None
    parsing_errors: int
    manifest_id: str | None
    failure: str | None = None


@dataclass(frozen=True)
class GridResult:
    cells: tuple
    table_text: str
    out_root: Path | None = None

    @property
    def failures(self) -> tuple:
        return tuple(c for c in self.cells if c.failure is not None)


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _run_over_documents(dataset, config, client, template, model_id,
                        fixed_shots):
    """Extract every document concurrently; results keyed by id."""
    docs = list(dataset.documents)
    results: dict = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=MAX_WORKERS) as pool:
        futures = {
            pool.submit(
                _extract_full, doc, config, client, docs, template,
                model_id, fixed_shots,
            ): doc
            for doc in docs
        }
        for future in concurrent.futures.as_completed(futures):
            doc = futures[future]
            results[doc.id] = (doc,) + future.result()
    return [results[doc.id] for doc in docs]


def run_cell(dataset: Dataset, task: str, config: PromptConfig,
             client: CachingClient, *, out_root=None,
             model_id: str = DEFAULT_MODEL_ID, template: dict | None = None,
             fixed_shots: bool = False) -> CellResult:
    """One (dataset, task, shot count) run, persisted under its manifest."""
    config = config.replace(task=task, schema=dataset.schema)
    if template is None:
        template = load_template()
    policy = MatchPolicy.from_schema(dataset.schema)

    rows = _run_over_documents(
        dataset, config, client, template, model_id, fixed_shots
    )

    counts: list = []
    parsing_errors = 0
    fingerprints: dict = {}
    per_doc_scores: dict = {}
    for doc, rendered, response, report, predictions in rows:
        fingerprints[doc.id] = rendered.config_fingerprint
        parsing_errors += report.error_count
        scored = score_predictions(task, predictions, doc, policy)
        counts.append(scored.counts)
        per_doc_scores[doc.id] = scored
    total = aggregate(counts)

    manifest = RunManifest(
        dataset_name=dataset.schema.dataset_name,
        task=task,
        model_id=model_id,
        shot_count=config.shot_count,
        shot_seed=config.shot_seed,
        prompt_fingerprints=fingerprints,
        cache_mode=client.mode,
        timestamp=utc_timestamp(client.mode),
    )

    cell = CellResult(
        dataset_name=dataset.schema.dataset_name,
        task=task,
        shot_count=config.shot_count,
        scores=total,
        parsing_errors=parsing_errors,
        manifest_id=manifest.manifest_id,
    )

    if out_root is not None:
        run_dir = Path(out_root) / manifest.manifest_id
        (run_dir / "prompts").mkdir(parents=True, exist_ok=True)
        (run_dir / "responses").mkdir(parents=True, exist_ok=True)
        _write_json(run_dir / "manifest.json", manifest.to_record())
        lines = []
        for doc, rendered, response, report, predictions in rows:
            (run_dir / "prompts" / f"{doc.id}.txt").write_text(
                rendered.text, encoding="utf-8"
            )
            (run_dir / "responses" / f"{doc.id}.txt").write_text(
                response.text, encoding="utf-8"
            )
            scored = per_doc_scores[doc.id]
            lines.append(json.dumps(
                {
                    "document_id": doc.id,
                    "task": task,
                    "items": [item_to_record(i) for i in report.items],
                    "parsing_errors": report.error_count,
                    "ignored_lines": report.ignored_line_count,
                    "f1": round(scored.f1, 6),
                },
                sort_keys=True,
            ))
        (run_dir / "predictions.jsonl").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )
        _write_json(run_dir / "scores.json", {
            "dataset_name": cell.dataset_name,
            "task": task,
            "shot_count": config.shot_count,
            "precision": round(total.precision, 6),
            "recall": round(total.recall, 6),
            "f1": round(total.f1, 6),
            "correct": total.counts.correct,
            "predicted": total.counts.predicted,
            "gold": total.counts.gold,
            "parsing_errors": parsing_errors,
            "document_count": len(rows),
        })
        (run_dir / "table.txt").write_text(
            render_grid_table([cell]), encoding="utf-8"
        )
    return cell


def run_grid(dataset: Dataset, tasks=None, shot_counts=DEFAULT_SHOT_COUNTS,
             base: PromptConfig | None = None, client: CachingClient = None, *,
             out_root=None, model_id: str = DEFAULT_MODEL_ID,
             shot_seed: int = 0, fixed_shots: bool = False) -> GridResult:
    """Sweep (task, shot count) cells and render the score table."""
    if not dataset.documents:
        if out_root is not None:
            Path(out_root).mkdir(parents=True, exist_ok=True)
            (Path(out_root) / "table.txt").write_text("", encoding="utf-8")
        return GridResult(cells=(), table_text="",
                          out_root=None if out_root is None else Path(out_root))
    if tasks is None:
        tasks = dataset.schema.tasks
    if base is None:
        base = PromptConfig(
            task=(list(tasks) or ["MD"])[0], schema=dataset.schema,
            shot_seed=shot_seed,
        )
    template = load_template()
    cells: list = []
    for task in tasks:
        for n in shot_counts:
            config = base.replace(task=task, shot_count=n)
            try:
                cell = run_cell(
                    dataset, task, config, client, out_root=out_root,
                    model_id=model_id, template=template,
                    fixed_shots=fixed_shots,
                )
            except Exception as exc:  # noqa: BLE001 - cell failures are rows
                cell = CellResult(
                    dataset_name=dataset.schema.dataset_name,
                    task=task,
                    shot_count=n,
                    scores=None,
                    parsing_errors=0,
                    manifest_id=None,
                    failure=f"{type(exc).__name__}: {exc}",
                )
            cells.append(cell)
    table = render_grid_table(cells)
    if out_root is not None:
        Path(out_root).mkdir(parents=True, exist_ok=True)
        (Path(out_root) / "table.txt").write_text(table, encoding="utf-8")
    return GridResult(cells=tuple(cells), table_text=table,
                      out_root=None if out_root is None else Path(out_root))


def _shot_label(n: int) -> str:
    return SHOT_ROW_LABELS.get(n, f"{n}-shot")


def render_grid_table(cells) -> str:
    """Plain-text score table, one block per dataset and task."""
    refs = reference_scores()
    out: list = []
    seen_blocks: list = []
    for cell in cells:
        key = (cell.dataset_name, cell.task)
        if key not in seen_blocks:
            seen_blocks.append(key)
    for dataset_name, task in seen_blocks:
        out.append(f"dataset: {dataset_name}  task: {task}")
        out.append(f"  {'configuration':<22}{'P':>7}{'R':>7}{'F1':>7}")
        baseline = refs.get(dataset_name, {}).get(task, {}).get("baseline")
        if baseline is not None:
            p, r, f1 = baseline
            out.append(
                f"  {'baseline (reported)':<22}{p:>7.3f}{r:>7.3f}{f1:>7.3f}"
            )
        for cell in cells:
            if (cell.dataset_name, cell.task) != (dataset_name, task):
                continue
            label = _shot_label(cell.shot_count)
            if cell.failure is not None:
                out.append(f"  {label:<22}{'-':>7}{'-':>7}{'-':>7}  [{cell.failure}]")
                continue
            s = cell.scores
            out.append(
                f"  {label:<22}{s.precision:>7.3f}{s.recall:>7.3f}{s.f1:>7.3f}"
                f"  (errors: {cell.parsing_errors})"
            )
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


# ---------------------------------------------------------------------------
# ablation

@dataclass(frozen=True)
class AblationRow:
    task: str
    label: str
    absolute_f1: float | None
    relative_f1: float | None
    parsing_errors: int
    failure: str | None = None


@dataclass(frozen=True)
class AblationReport:
    rows: tuple

    def for_task(self, task: str) -> tuple:
        return tuple(r for r in self.rows if r.task == task)


def run_ablation(dataset: Dataset, tasks=("MD", "RE"),
                 base: PromptConfig | None = None,
                 client: CachingClient = None, *, out_root=None,
                 model_id: str = DEFAULT_MODEL_ID,
                 fixed_shots: bool = False) -> AblationReport:
    """Remove one prompt component at a time and measure the damage."""
    if base is None:
        base = PromptConfig(task=tasks[0], schema=dataset.schema)
    template = load_template()
    rows: list = []
    for task in tasks:
        task_base = base.replace(task=task, schema=dataset.schema)
        baseline_f1: float | None = None
        for label, variant in ablation_variants(task_base):
            try:
                measured = _measure_variant(
                    dataset, task, variant, client, template, model_id,
                    fixed_shots,
                )
            except Exception as exc:  # noqa: BLE001 - keep other rows alive
                rows.append(AblationRow(task, label, None, None, 0,
                                        failure=f"{type(exc).__name__}: {exc}"))
                continue
            f1, errors = measured
            if label == "Baseline":
                baseline_f1 = f1
            relative = None if baseline_f1 is None else f1 - baseline_f1
            rows.append(AblationRow(task, label, f1, relative, errors))
    report = AblationReport(rows=tuple(rows))
    if out_root is not None:
        payload = {
            "rows": [dataclasses.asdict(r) for r in report.rows],
        }
        root = Path(out_root)
        root.mkdir(parents=True, exist_ok=True)
        _write_json(root / "ablation.json", payload)
        (root / "table.txt").write_text(
            render_ablation_table(report), encoding="utf-8"
        )
    return report


def _measure_variant(dataset, task, config, client, template, model_id,
                     fixed_shots):
    policy = MatchPolicy.from_schema(dataset.schema)
    rows = _run_over_documents(
        dataset, config, client, template, model_id, fixed_shots
    )
    counts = []
    errors = 0
    for doc, rendered, response, report, predictions in rows:
        errors += report.error_count
        counts.append(score_predictions(task, predictions, doc, policy).counts)
    return aggregate(counts).f1, errors


def render_ablation_table(report: AblationReport) -> str:
    out: list = []
    tasks = []
    for row in report.rows:
        if row.task not in tasks:
            tasks.append(row.task)
    for task in tasks:
        out.append(f"task: {task}")
        out.append(
            f"  {'variant':<22}{'rel F1':>9}{'abs F1':>9}{'parse errors':>15}"
        )
        for row in report.for_task(task):
            if row.failure is not None:
                out.append(f"  {row.label:<22}{'-':>9}{'-':>9}  [{row.failure}]")
                continue
            out.append(
                f"  {row.label:<22}{row.relative_f1:>+9.3f}"
                f"{row.absolute_f1:>9.3f}{row.parsing_errors:>15}"
            )
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


# ---------------------------------------------------------------------------
# per-type agents

OUTPUT_MARKER = "Output:\n"


def _grammar_line(prediction) -> str:
    surface = (
        prediction.matched_surface
        if hasattr(prediction, "matched_surface") else prediction.surface
    )
    return f"{prediction.mention_type.lower()}|{surface}"


def _restrict_schema(schema: SchemaDescriptor, mention_type: str):
    canonical = schema.canonical_mention_type(mention_type)
    if canonical is None:
        raise ValueError(f"unknown mention type {mention_type!r}")
    return dataclasses.replace(schema, mention_types=(canonical,))


def run_agents(doc: Document, mention_types, config: PromptConfig,
               client: CachingClient, shot_pool=(), *,
               template: dict | None = None,
               model_id: str = DEFAULT_MODEL_ID,
               fixed_shots: bool = False):
    """Chain one specialized prompt per mention type.

    Each agent sees the grounded findings of the agents before it,
    spliced into its prompt in the output grammar.  Returns the union
    of all grounded (and ungrounded) mentions.
    """
    if not mention_types:
        raise ValueError("agent pipeline needs at least one mention type")
    if template is None:
        template = load_template()

    used: set = set()
    combined: list = []
    for mention_type in mention_types:
        schema = _restrict_schema(config.schema, mention_type)
        agent_config = _document_config(
            config.replace(task="MD", schema=schema), doc.id, fixed_shots
        )
        rendered = assemble(agent_config, doc, shot_pool, template)
        text = rendered.text
        if combined:
            already = "\n".join(_grammar_line(p) for p in combined)
            head, sep, _ = text.rpartition(OUTPUT_MARKER)
            text = f"{head}Already extracted:\n{already}\n{sep}"
        response = client.complete(ChatRequest(model_id, text))
        report = parse(response.text, "MD", schema)
        for item in report.items:
            if not isinstance(item, ParsedMention):
                continue
            hit = ground(item, doc, used)
            combined.append(hit if hit is not None else item)
    return combined
