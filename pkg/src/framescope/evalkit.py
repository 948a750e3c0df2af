"""Evaluation driver: runs, accuracy breakdowns, the ablation grid, and error overlap.

A run is (dataset split) x (prompt config) x (backend) x (seeds). Each seed is
one repetition: it re-samples few-shot exemplars and candidate ordering, so
"avg. over N runs" means N seeds. All aggregation is deterministic given the
response cache, and independent of request parallelism.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import backends as backends_mod
from . import corpus as corpus_mod
from .backends import BackendConfig, BackendError, ResponseCache
from .corpus import AnnotatedInstance, ArtifactEntry
from .lexicon import LexiconIndex, is_ambiguous, lookup_candidates
from .parse import Prediction, parse_response
from .promptkit import (
    EmptyCandidatesError,
    ExemplarBlock,
    PromptConfig,
    bind_exemplars,
    render,
    render_artifacts,
    select_exemplars,
)

logger = logging.getLogger(__name__)

SUBSET_PREDICATES = ("all", "ambiguous", "unknown_target", "unlinked_target")

# A run aborts once more than this fraction of instances hit backend failures.
ABORT_FAILURE_FRACTION = 0.10


class EvalError(Exception):
    pass


class EvalAbortError(EvalError):
    """Backend hard-down: the run was aborted with partial cache retained."""


class InstanceSetMismatchError(EvalError):
    pass


@dataclass(frozen=True)
class RunSpec:
    dataset: str = "fn17"
    split: str = "test"
    prompt: PromptConfig = field(default_factory=PromptConfig)
    backend: BackendConfig | None = None
    candidate_mode: str = "filtered"
    seeds: tuple[int, ...] = (1,)
    strict_scoring: bool = True
    # Paths are optional when resources are passed to run_eval directly.
    corpus_dir: str = ""
    lexicon_dir: str = ""
    definitions_path: str = ""
    # Answer singleton-candidate instances without calling the backend.
    auto_singleton: bool = False

    def __post_init__(self):
        if not self.seeds:
            raise EvalError("RunSpec requires at least one seed")

    def to_dict(self) -> dict:
        backend = self.backend
        backend_dict = None
        if backend is not None:
            backend_dict = {
                "kind": backend.kind,
                "endpoint_url": backend.endpoint_url,
                "model_name": backend.model_name,
                "temperature": backend.temperature,
                "max_output_tokens": backend.max_output_tokens,
                "request_timeout": backend.request_timeout,
                "max_retries": backend.max_retries,
                "parallelism": backend.parallelism,
                "api_key_env": backend.api_key_env,
            }
            if backend.oracle is not None:
                backend_dict["oracle"] = {
                    "mode": backend.oracle.mode,
                    "p": backend.oracle.p,
                    "seed": backend.oracle.seed,
                    "script": backend.oracle.script,
                    "logprob_script": backend.oracle.logprob_script,
                }
        return {
            "dataset": self.dataset,
            "split": self.split,
            "prompt": {
                "format": self.prompt.format,
                "granularity": self.prompt.granularity,
                "shots": self.prompt.shots,
                "seed": self.prompt.seed,
                "definition_char_budget": self.prompt.definition_char_budget,
            },
            "backend": backend_dict,
            "candidate_mode": self.candidate_mode,
            "seeds": list(self.seeds),
            "strict_scoring": self.strict_scoring,
            "corpus_dir": self.corpus_dir,
            "lexicon_dir": self.lexicon_dir,
            "definitions_path": self.definitions_path,
            "auto_singleton": self.auto_singleton,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunSpec":
        prompt_data = data.get("prompt", {})
        prompt = PromptConfig(
            format=prompt_data.get("format", "direct_qa"),
            granularity=prompt_data.get("granularity", "names_lu_defs"),
            shots=int(prompt_data.get("shots", 0)),
            seed=int(prompt_data.get("seed", 0)),
            definition_char_budget=prompt_data.get("definition_char_budget"),
        )
        backend = data.get("backend")
        if backend is not None and not isinstance(backend, BackendConfig):
            backend = BackendConfig.from_dict(backend)
        return cls(
            dataset=data.get("dataset", "fn17"),
            split=data.get("split", "test"),
            prompt=prompt,
            backend=backend,
            candidate_mode=data.get("candidate_mode", "filtered"),
            seeds=tuple(data.get("seeds", (1,))),
            strict_scoring=bool(data.get("strict_scoring", True)),
            corpus_dir=data.get("corpus_dir", ""),
            lexicon_dir=data.get("lexicon_dir", ""),
            definitions_path=data.get("definitions_path", ""),
            auto_singleton=bool(data.get("auto_singleton", False)),
        )

    @classmethod
    def from_json_file(cls, path: Path) -> "RunSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def spec_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:10]


@dataclass
class RunResources:
    index: LexiconIndex
    instances: list[AnnotatedInstance]
    train: list[AnnotatedInstance] | None = None
    artifact_entries: list[ArtifactEntry] | None = None
    definitions: dict[str, str] | None = None


@dataclass
class EvalReport:
    dataset: str
    split: str
    per_run_accuracy: list[float]
    mean_accuracy: float
    per_run_parse_failure_rate: list[float]
    parse_failure_rate: float
    breakdowns: dict[str, dict]
    predictions_paths: list[str]
    run_ids: list[str]
    config: dict
    instance_count: int

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "split": self.split,
            "per_run_accuracy": self.per_run_accuracy,
            "mean_accuracy": self.mean_accuracy,
            "per_run_parse_failure_rate": self.per_run_parse_failure_rate,
            "parse_failure_rate": self.parse_failure_rate,
            "breakdowns": self.breakdowns,
            "predictions_paths": self.predictions_paths,
            "run_ids": self.run_ids,
            "config": self.config,
            "instance_count": self.instance_count,
        }

    def to_json_bytes(self) -> bytes:
        return (json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


@dataclass(frozen=True)
class OverlapReport:
    wrong_a: int
    wrong_b: int
    common_wrong: int
    agreeing_wrong: int
    disagreeing_wrong: int
    example_ids: dict[str, list[str]]

    def to_dict(self) -> dict:
        return {
            "wrong_a": self.wrong_a,
            "wrong_b": self.wrong_b,
            "common_wrong": self.common_wrong,
            "agreeing_wrong": self.agreeing_wrong,
            "disagreeing_wrong": self.disagreeing_wrong,
            "example_ids": self.example_ids,
        }


def resolve_resources(spec: RunSpec) -> RunResources:
    """Load lexicon, instances, exemplar pool, and definitions from the spec's paths."""
    if not spec.lexicon_dir:
        raise EvalError("spec has no lexicon_dir and no resources were injected")
    lexicon = corpus_mod.load_lexicon(Path(spec.lexicon_dir), spec.dataset if spec.dataset in ("fn15", "fn17") else "fn17")
    index = LexiconIndex(lexicon)
    corpus_dir = Path(spec.corpus_dir or spec.lexicon_dir)

    artifact_entries = None
    if spec.dataset == "artifacts":
        artifact_entries = corpus_mod.load_artifact_entries(corpus_dir)
        instances = [corpus_mod.artifact_instance(e, i) for i, e in enumerate(artifact_entries)]
    else:
        instances = corpus_mod.load_dataset(corpus_dir, spec.dataset, spec.split, lexicon)

    train = None
    if spec.prompt.shots > 0:
        train = corpus_mod.load_dataset(corpus_dir, spec.dataset, "train", lexicon)

    definitions = None
    if spec.definitions_path:
        definitions = load_definitions(Path(spec.definitions_path))
    return RunResources(
        index=index,
        instances=instances,
        train=train,
        artifact_entries=artifact_entries,
        definitions=definitions,
    )


def load_definitions(path: Path) -> dict[str, str]:
    """Load a frame->definition mapping from a definitions JSONL file."""
    out: dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out[rec["frame_name"]] = rec["definition"]
    return out


def run_eval(
    spec: RunSpec,
    resources: RunResources | None = None,
    cache: ResponseCache | None = None,
    out_dir: Path | None = None,
) -> EvalReport:
    """Execute one RunSpec: every instance gets exactly one prediction per seed.

    Predictions are persisted per seed when out_dir is given; the report is
    reproducible byte-for-byte from the same spec and response cache.
    """
    if spec.backend is None:
        raise EvalError("RunSpec has no backend config")
    if resources is None:
        resources = resolve_resources(spec)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    spec_hash = spec.spec_hash()
    predictions_by_run: dict[str, list[Prediction]] = {}
    run_ids: list[str] = []
    for seed in spec.seeds:
        run_id = f"{spec_hash}-s{seed}"
        run_ids.append(run_id)
        predictions_by_run[run_id] = _run_single_seed(spec, resources, seed, cache)

    predictions_paths: list[str] = []
    if out_dir is not None:
        for run_id in run_ids:
            path = out_dir / f"predictions-{run_id}.jsonl"
            write_predictions(predictions_by_run[run_id], resources.instances, run_id, path)
            # File names only: keeps the report byte-identical across output dirs.
            predictions_paths.append(path.name)

    report = aggregate_report(spec, resources, predictions_by_run, run_ids, predictions_paths)
    if out_dir is not None:
        (out_dir / "report.json").write_bytes(report.to_json_bytes())
    return report


def _run_single_seed(
    spec: RunSpec,
    resources: RunResources,
    seed: int,
    cache: ResponseCache | None,
) -> list[Prediction]:
    config = replace(spec.prompt, seed=seed)
    exemplars: ExemplarBlock | None = None
    if config.shots > 0 and config.format in ("simple", "direct_qa", "def_eval"):
        if not resources.train:
            raise EvalError("few-shot run requires a training pool for exemplars")
        block = select_exemplars(resources.train, config.shots, seed)
        exemplars = bind_exemplars(
            block, resources.index, config,
            definitions=resources.definitions, candidate_mode=spec.candidate_mode,
        )

    entries_by_id: dict[str, ArtifactEntry] = {}
    if resources.artifact_entries is not None:
        for i, entry in enumerate(resources.artifact_entries):
            entries_by_id[corpus_mod.artifact_instance(entry, i).instance_id] = entry

    backend = spec.backend
    n = len(resources.instances)
    abort_threshold = ABORT_FAILURE_FRACTION * n
    backend_failures = 0

    def _one(inst: AnnotatedInstance) -> Prediction:
        if spec.dataset == "artifacts" and inst.instance_id in entries_by_id:
            prompt = render_artifacts(entries_by_id[inst.instance_id])
        else:
            try:
                cs = resources.index.candidate_set(
                    inst.target_lemma,
                    inst.target_pos,
                    mode=spec.candidate_mode,
                    gold_frame=inst.gold_frame,
                    seed=seed,
                    shuffle_key=inst.instance_id,
                )
                if spec.auto_singleton and len(cs.candidates) == 1:
                    return Prediction(inst.instance_id, cs.candidates[0].frame_name, "auto_singleton", "")
                prompt = render(
                    inst, cs, config,
                    definitions=resources.definitions, exemplars=exemplars,
                )
            except EmptyCandidatesError:
                return Prediction(inst.instance_id, None, "failed", "<no candidates>")
        try:
            response = backends_mod.complete(prompt, backend, cache=cache)
        except BackendError as exc:
            logger.warning("backend failure on %s: %s", inst.instance_id, exc)
            return Prediction(inst.instance_id, None, "failed", f"<backend error: {exc}>")
        return parse_response(response, prompt)

    results: dict[str, Prediction] = {}
    if backend.parallelism > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=backend.parallelism) as pool:
            futures = {pool.submit(_one, inst): inst for inst in resources.instances}
            for future in concurrent.futures.as_completed(futures):
                pred = future.result()
                results[pred.instance_id] = pred
    else:
        for inst in resources.instances:
            pred = _one(inst)
            results[pred.instance_id] = pred

    backend_failures = sum(1 for p in results.values() if p.raw_text.startswith("<backend error:"))
    if backend_failures > abort_threshold:
        raise EvalAbortError(
            f"backend failed on {backend_failures}/{n} instances; run aborted "
            f"(response cache retained)"
        )
    return [results[inst.instance_id] for inst in sorted(resources.instances, key=lambda i: i.instance_id)]


def accuracy(predictions: list[Prediction], gold: dict[str, str], strict: bool = True) -> float:
    """Fraction of exact frame-name matches; failures count as wrong in strict mode."""
    if strict:
        total = len(predictions)
    else:
        total = sum(1 for p in predictions if not p.failed)
    if total == 0:
        return 0.0
    correct = sum(
        1 for p in predictions if p.predicted_frame is not None and p.predicted_frame == gold.get(p.instance_id)
    )
    return correct / total


def write_predictions(
    predictions: list[Prediction],
    instances: list[AnnotatedInstance],
    run_id: str,
    path: Path,
) -> None:
    gold = {inst.instance_id: inst.gold_frame for inst in instances}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for pred in sorted(predictions, key=lambda p: p.instance_id):
            fh.write(
                json.dumps(
                    {
                        "instance_id": pred.instance_id,
                        "predicted_frame": pred.predicted_frame,
                        "gold_frame": gold.get(pred.instance_id),
                        "decode_path": pred.decode_path,
                        "run_id": run_id,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def load_predictions(path: Path) -> list[dict]:
    rows: list[dict] = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            for key in ("instance_id", "gold_frame"):
                if key not in rec:
                    raise EvalError(f"{path}:{lineno}: prediction row missing {key!r}")
            rows.append(rec)
    return rows


def aggregate_report(
    spec: RunSpec,
    resources: RunResources,
    predictions_by_run: dict[str, list[Prediction]],
    run_ids: list[str],
    predictions_paths: list[str],
) -> EvalReport:
    gold = {inst.instance_id: inst.gold_frame for inst in resources.instances}
    per_run_acc = []
    per_run_fail = []
    for run_id in run_ids:
        preds = predictions_by_run[run_id]
        per_run_acc.append(accuracy(preds, gold, strict=spec.strict_scoring))
        per_run_fail.append(sum(1 for p in preds if p.failed) / len(preds) if preds else 0.0)

    breakdowns = {}
    pooled = [p for run_id in run_ids for p in predictions_by_run[run_id]]
    for name in SUBSET_PREDICATES:
        result = subset_accuracy(pooled, resources.instances, resources.index, name, strict=spec.strict_scoring)
        breakdowns[name] = result

    mean_acc = sum(per_run_acc) / len(per_run_acc)
    return EvalReport(
        dataset=spec.dataset,
        split=spec.split,
        per_run_accuracy=per_run_acc,
        mean_accuracy=mean_acc,
        per_run_parse_failure_rate=per_run_fail,
        parse_failure_rate=sum(per_run_fail) / len(per_run_fail),
        breakdowns=breakdowns,
        predictions_paths=predictions_paths,
        run_ids=run_ids,
        config=spec.to_dict(),
        instance_count=len(resources.instances),
    )


def subset_accuracy(
    predictions: list[Prediction],
    instances: list[AnnotatedInstance],
    index: LexiconIndex | None,
    predicate: str,
    strict: bool = True,
) -> dict:
    """Accuracy over the instances satisfying a predicate, with its denominator.

    Empty subsets are reported as undefined (accuracy None), never as 0.
    """
    if predicate not in SUBSET_PREDICATES:
        raise EvalError(f"unknown subset predicate {predicate!r}; have {SUBSET_PREDICATES}")
    selected: set[str] = set()
    for inst in instances:
        if predicate == "all":
            selected.add(inst.instance_id)
        elif predicate == "ambiguous":
            if index is None:
                raise EvalError("ambiguous subset requires a lexicon index")
            cs = lookup_candidates(inst.target_lemma, inst.target_pos, index)
            if is_ambiguous(cs):
                selected.add(inst.instance_id)
        elif predicate in inst.flags:
            selected.add(inst.instance_id)

    gold = {inst.instance_id: inst.gold_frame for inst in instances}
    subset_preds = [p for p in predictions if p.instance_id in selected]
    if strict:
        total = len(subset_preds)
    else:
        total = sum(1 for p in subset_preds if not p.failed)
    correct = sum(
        1 for p in subset_preds if p.predicted_frame is not None and p.predicted_frame == gold.get(p.instance_id)
    )
    return {
        "accuracy": (correct / total) if total else None,
        "correct": correct,
        "total": total,
    }


# ---------------------------------------------------------------------------
# Error overlap


def compare_errors(preds_a: Path | list[dict], preds_b: Path | list[dict], max_examples: int = 20) -> OverlapReport:
    """Partition two systems' errors into common/agreeing/disagreeing buckets."""
    rows_a = load_predictions(preds_a) if isinstance(preds_a, (str, Path)) else preds_a
    rows_b = load_predictions(preds_b) if isinstance(preds_b, (str, Path)) else preds_b
    map_a = {r["instance_id"]: r for r in rows_a}
    map_b = {r["instance_id"]: r for r in rows_b}
    if set(map_a) != set(map_b):
        only_a = sorted(set(map_a) - set(map_b))[:5]
        only_b = sorted(set(map_b) - set(map_a))[:5]
        raise InstanceSetMismatchError(
            f"prediction files cover different instances (only in a: {only_a}, only in b: {only_b})"
        )

    wrong_a = {i for i, r in map_a.items() if r.get("predicted_frame") != r.get("gold_frame")}
    wrong_b = {i for i, r in map_b.items() if r.get("predicted_frame") != r.get("gold_frame")}
    common = wrong_a & wrong_b
    agreeing = {i for i in common if map_a[i].get("predicted_frame") == map_b[i].get("predicted_frame")}
    disagreeing = common - agreeing

    return OverlapReport(
        wrong_a=len(wrong_a),
        wrong_b=len(wrong_b),
        common_wrong=len(common),
        agreeing_wrong=len(agreeing),
        disagreeing_wrong=len(disagreeing),
        example_ids={
            "wrong_a_only": sorted(wrong_a - wrong_b)[:max_examples],
            "wrong_b_only": sorted(wrong_b - wrong_a)[:max_examples],
            "agreeing": sorted(agreeing)[:max_examples],
            "disagreeing": sorted(disagreeing)[:max_examples],
        },
    )


# ---------------------------------------------------------------------------
# Ablation grid

_GRANULARITY_NAMES = {
    "names": "Frame Names",
    "names_defs": "Frame Names & Defs",
    "names_lu_defs": "Frame Names & LU Defs",
    "names_defs_lu_defs": "Frame Names, Defs & LU Defs",
}
_FORMAT_NAMES = {"simple": "Simple", "direct_qa": "Direct-QA"}


def default_ablation_grid(few_shot_k: int = 5, formats: tuple[str, ...] = ("simple", "direct_qa")) -> list[PromptConfig]:
    grid = []
    for fmt in formats:
        for granularity in _GRANULARITY_NAMES:
            for shots in (0, few_shot_k):
                grid.append(PromptConfig(format=fmt, granularity=granularity, shots=shots))
    return grid


@dataclass
class AblationCell:
    prompt: PromptConfig
    mean_accuracy: float | None
    error: str = ""


@dataclass
class AblationTable:
    cells: list[AblationCell]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["prompt_type", "granularity", "shots", "mean_accuracy", "error"])
        for cell in self.cells:
            writer.writerow(
                [
                    cell.prompt.format,
                    cell.prompt.granularity,
                    cell.prompt.shots,
                    "" if cell.mean_accuracy is None else f"{cell.mean_accuracy:.4f}",
                    cell.error,
                ]
            )
        return buf.getvalue()

    def to_text(self) -> str:
        """Aligned table mirroring the zero-shot/few-shot ablation layout."""
        rows: dict[tuple[str, str], dict[int, AblationCell]] = {}
        for cell in self.cells:
            rows.setdefault((cell.prompt.format, cell.prompt.granularity), {})[
                0 if cell.prompt.shots == 0 else 1
            ] = cell
        label_width = max(
            [len(_row_label(fmt, gran)) for fmt, gran in rows] + [len("Prompt Type (Granularity)")]
        )
        lines = [f"{'Prompt Type (Granularity)':<{label_width}}  Zero-Shot  Few-Shot"]
        seen_formats: list[str] = []
        for (fmt, gran), shots_cells in rows.items():
            if fmt not in seen_formats:
                if seen_formats:
                    lines.append("-" * (label_width + 21))
                seen_formats.append(fmt)
            zero = _cell_text(shots_cells.get(0))
            few = _cell_text(shots_cells.get(1))
            lines.append(f"{_row_label(fmt, gran):<{label_width}}  {zero:>9}  {few:>8}")
        return "\n".join(lines) + "\n"


def _row_label(fmt: str, granularity: str) -> str:
    return f"{_FORMAT_NAMES.get(fmt, fmt)} ({_GRANULARITY_NAMES.get(granularity, granularity)})"


def _cell_text(cell: AblationCell | None) -> str:
    if cell is None:
        return "-"
    if cell.mean_accuracy is None:
        return "ERR"
    return f"{100 * cell.mean_accuracy:.1f}"


def run_ablation(
    base_spec: RunSpec,
    grid: list[PromptConfig] | None = None,
    resources: RunResources | None = None,
    cache: ResponseCache | None = None,
    ambiguous_only: bool = False,
    out_dir: Path | None = None,
) -> AblationTable:
    """Run every grid cell; failed cells are marked and the table still comes out."""
    if grid is None:
        grid = default_ablation_grid(formats=("direct_qa",) if ambiguous_only else ("simple", "direct_qa"))
    if resources is None:
        resources = resolve_resources(base_spec)
    if ambiguous_only:
        filtered = [
            inst
            for inst in resources.instances
            if is_ambiguous(lookup_candidates(inst.target_lemma, inst.target_pos, resources.index))
        ]
        resources = RunResources(
            index=resources.index,
            instances=filtered,
            train=resources.train,
            artifact_entries=resources.artifact_entries,
            definitions=resources.definitions,
        )

    cells: list[AblationCell] = []
    for prompt in grid:
        spec = replace(base_spec, prompt=prompt)
        try:
            report = run_eval(spec, resources=resources, cache=cache, out_dir=None)
            cells.append(AblationCell(prompt=prompt, mean_accuracy=report.mean_accuracy))
        except Exception as exc:  # cell isolation: the matrix must still come out
            logger.warning("ablation cell %s/%s/%s failed: %s", prompt.format, prompt.granularity, prompt.shots, exc)
            cells.append(AblationCell(prompt=prompt, mean_accuracy=None, error=str(exc)))

    table = AblationTable(cells=cells)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "ablation.csv").write_text(table.to_csv(), encoding="utf-8")
        (out_dir / "ablation.txt").write_text(table.to_text(), encoding="utf-8")
    return table
