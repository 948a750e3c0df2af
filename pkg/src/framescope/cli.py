"""framescope command-line interface.

Subcommands: corpus convert, lexicon lookup, prompt render, eval
run/ablate/compare/report, defprobe generate/eval. Structured logs go to
stderr; results go to files or stdout. Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys
from pathlib import Path

from . import __version__
from . import corpus as corpus_mod
from . import defprobe as defprobe_mod
from . import evalkit
from .backends import BackendConfig, ResponseCache
from .config import load_app_config
from .evalkit import RunSpec
from .lexicon import LexiconIndex, lookup_candidates
from .promptkit import (
    GRANULARITIES,
    PROMPT_FORMATS,
    PromptConfig,
    bind_exemplars,
    render,
    render_artifacts,
    render_def_gen,
    select_exemplars,
)

logger = logging.getLogger("framescope")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="framescope",
        description="Frame identification pipeline and evaluation harness.",
    )
    parser.add_argument("--version", action="version", version=f"framescope {__version__}")
    parser.add_argument("--config", type=Path, default=None, help="app config JSON file")
    parser.add_argument("--log-level", default=None, help="logging level (overrides config/env)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_corpus = sub.add_parser("corpus", help="dataset ingestion and conversion")
    corpus_sub = p_corpus.add_subparsers(dest="corpus_command", required=True)
    p_convert = corpus_sub.add_parser("convert", help="convert a raw release to interchange JSONL")
    p_convert.add_argument("--dataset", required=True, choices=corpus_mod.DATASETS)
    p_convert.add_argument("--in", dest="in_dir", required=True, type=Path, help="raw release directory")
    p_convert.add_argument("--out", dest="out_dir", required=True, type=Path, help="interchange output directory")
    p_convert.add_argument("--lexicon", type=Path, default=None, help="companion lexicon (defaults to --in)")

    p_lexicon = sub.add_parser("lexicon", help="lexicon queries")
    lexicon_sub = p_lexicon.add_subparsers(dest="lexicon_command", required=True)
    p_lookup = lexicon_sub.add_parser("lookup", help="print the candidate frame table for lemma+POS")
    p_lookup.add_argument("lemma")
    p_lookup.add_argument("pos", choices=corpus_mod.POS_TAGS)
    p_lookup.add_argument("--lexicon", required=True, type=Path)

    p_prompt = sub.add_parser("prompt", help="prompt rendering")
    prompt_sub = p_prompt.add_subparsers(dest="prompt_command", required=True)
    p_render = prompt_sub.add_parser("render", help="render the prompt for one instance")
    p_render.add_argument("--format", required=True, choices=PROMPT_FORMATS)
    p_render.add_argument("--granularity", default="names_lu_defs", choices=GRANULARITIES)
    p_render.add_argument("--instance", required=True, help="instance id (or frame name for def_gen)")
    p_render.add_argument("--corpus", type=Path, default=None, help="instances JSONL file")
    p_render.add_argument("--lexicon", type=Path, default=None)
    p_render.add_argument("--definitions", type=Path, default=None, help="definitions JSONL for def_eval")
    p_render.add_argument("--train", type=Path, default=None, help="exemplar pool JSONL for few-shot")
    p_render.add_argument("--shots", type=int, default=0)
    p_render.add_argument("--seed", type=int, default=0)

    p_eval = sub.add_parser("eval", help="evaluation runs and analyses")
    eval_sub = p_eval.add_subparsers(dest="eval_command", required=True)
    p_run = eval_sub.add_parser("run", help="execute a run spec")
    p_run.add_argument("--spec", required=True, type=Path)
    p_run.add_argument("--out", type=Path, default=None, help="run directory (default: timestamp+hash)")
    p_run.add_argument("--cache", type=Path, default=None, help="response cache directory")
    p_ablate = eval_sub.add_parser("ablate", help="run the prompt-type x granularity x shots grid")
    p_ablate.add_argument("--spec", required=True, type=Path)
    p_ablate.add_argument("--grid", default="default", choices=["default"])
    p_ablate.add_argument("--ambiguous-only", action="store_true")
    p_ablate.add_argument("--out", type=Path, default=None)
    p_ablate.add_argument("--cache", type=Path, default=None)
    p_compare = eval_sub.add_parser("compare", help="error overlap between two prediction files")
    p_compare.add_argument("--a", required=True, type=Path)
    p_compare.add_argument("--b", required=True, type=Path)
    p_report = eval_sub.add_parser("report", help="re-aggregate a report from cache or predictions")
    p_report.add_argument("--spec", type=Path, default=None)
    p_report.add_argument("--cache", type=Path, default=None)
    p_report.add_argument("--predictions", type=Path, default=None)
    p_report.add_argument("--out", type=Path, default=None)

    p_defprobe = sub.add_parser("defprobe", help="frame-definition generation and probing")
    defprobe_sub = p_defprobe.add_subparsers(dest="defprobe_command", required=True)
    p_generate = defprobe_sub.add_parser("generate", help="generate definitions from frame names")
    p_generate.add_argument("--model", required=True, help="model name for the configured backend")
    p_generate.add_argument("--lexicon", required=True, type=Path)
    p_generate.add_argument("--backend", required=True, type=Path, help="backend config JSON")
    p_generate.add_argument("--out", required=True, type=Path)
    p_generate.add_argument("--cache", type=Path, default=None)
    p_defeval = defprobe_sub.add_parser("eval", help="evaluate with gold or generated definitions")
    p_defeval.add_argument("--source", required=True, help="'gold' or 'generated:<model>'")
    p_defeval.add_argument("--spec", required=True, type=Path)
    p_defeval.add_argument("--definitions", type=Path, default=None)
    p_defeval.add_argument("--out", type=Path, default=None)
    p_defeval.add_argument("--cache", type=Path, default=None)

    return parser


def _run_dir(base: Path, spec: RunSpec) -> Path:
    stamp = datetime.datetime.now().strftime("%Y%m%dT%H%M%S")
    return base / "runs" / f"{stamp}-{spec.spec_hash()}"


def _cmd_corpus_convert(args) -> int:
    lexicon_dir = args.lexicon or args.in_dir
    version = args.dataset if args.dataset in ("fn15", "fn17") else "fn17"
    if args.dataset == "artifacts":
        entries = corpus_mod.load_artifact_entries(args.in_dir)
        instances = [corpus_mod.artifact_instance(e, i) for i, e in enumerate(entries)]
        out = corpus_mod.interchange_instance_path(args.out_dir, "artifacts", "test")
        corpus_mod.write_instances(instances, out)
        print(f"artifacts/test: {len(instances)} instances -> {out}")
        return 0

    lexicon = corpus_mod.load_lexicon(lexicon_dir, version)
    corpus_mod.write_lexicon(lexicon, args.out_dir)
    print(f"lexicon {lexicon.version}: {lexicon.frame_count} frames, {lexicon.lu_count} lexical units")
    for split in corpus_mod.DATASET_SPLITS[args.dataset]:
        instances = corpus_mod.load_dataset(args.in_dir, args.dataset, split, lexicon)
        out = corpus_mod.interchange_instance_path(args.out_dir, args.dataset, split)
        corpus_mod.write_instances(instances, out)
        print(f"{args.dataset}/{split}: {len(instances)} instances -> {out}")
    return 0


def _cmd_lexicon_lookup(args) -> int:
    lexicon = corpus_mod.load_lexicon(args.lexicon, "fn17")
    cs = lookup_candidates(args.lemma, args.pos, lexicon)
    if cs.unknown:
        print(f"{args.lemma}.{args.pos}: unknown target (no lexical units)")
        return 0
    print(f"{args.lemma}.{args.pos}: {len(cs.candidates)} candidate frame(s)")
    for cand in cs.candidates:
        sense = cand.lu_sense_definition or "-"
        print(f"  {cand.frame_name}: {sense}")
    return 0


def _cmd_prompt_render(args) -> int:
    if args.format == "def_gen":
        print(render_def_gen(args.instance).text)
        return 0
    if args.corpus is None or args.lexicon is None:
        raise SystemExit2("prompt render requires --corpus and --lexicon for this format")
    lexicon = corpus_mod.load_lexicon(args.lexicon, "fn17")
    index = LexiconIndex(lexicon)
    instances = corpus_mod.read_instances(args.corpus)
    by_id = {inst.instance_id: inst for inst in instances}
    if args.instance not in by_id:
        raise RuntimeError(f"instance {args.instance!r} not found in {args.corpus}")
    inst = by_id[args.instance]

    if args.format == "artifacts":
        entries = {e.name: e for e in corpus_mod.load_artifact_entries(args.corpus.parent)}
        name = inst.target_surface
        if name not in entries:
            raise RuntimeError(f"no artifact entry named {name!r}")
        print(render_artifacts(entries[name]).text)
        return 0

    config = PromptConfig(
        format=args.format, granularity=args.granularity, shots=args.shots, seed=args.seed
    )
    definitions = evalkit.load_definitions(args.definitions) if args.definitions else None
    exemplars = None
    if args.shots > 0:
        if args.train is None:
            raise RuntimeError("--shots requires --train pool")
        pool = corpus_mod.read_instances(args.train)
        exemplars = bind_exemplars(
            select_exemplars(pool, args.shots, args.seed), index, config, definitions=definitions
        )
    cs = index.candidate_set(
        inst.target_lemma, inst.target_pos, gold_frame=inst.gold_frame,
        seed=args.seed, shuffle_key=inst.instance_id,
    )
    print(render(inst, cs, config, definitions=definitions, exemplars=exemplars).text)
    return 0


def _cmd_eval_run(args, app) -> int:
    spec = RunSpec.from_json_file(args.spec)
    out_dir = args.out or _run_dir(app.cache_dir, spec)
    cache = ResponseCache(args.cache or out_dir / "cache")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "spec.json").write_text(
        json.dumps(spec.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    report = evalkit.run_eval(spec, cache=cache, out_dir=out_dir)
    print(f"run dir: {out_dir}")
    print(f"mean accuracy: {report.mean_accuracy:.4f}  parse-failure rate: {report.parse_failure_rate:.4f}")
    return 0


def _cmd_eval_ablate(args, app) -> int:
    spec = RunSpec.from_json_file(args.spec)
    out_dir = args.out or _run_dir(app.cache_dir, spec)
    cache = ResponseCache(args.cache or Path(out_dir) / "cache")
    table = evalkit.run_ablation(
        spec, resources=None, cache=cache, ambiguous_only=args.ambiguous_only, out_dir=out_dir
    )
    print(table.to_text())
    return 0


def _cmd_eval_compare(args) -> int:
    report = evalkit.compare_errors(args.a, args.b)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def _cmd_eval_report(args) -> int:
    if args.predictions is not None:
        rows = evalkit.load_predictions(args.predictions)
        total = len(rows)
        correct = sum(1 for r in rows if r.get("predicted_frame") == r.get("gold_frame"))
        failed = sum(1 for r in rows if r.get("predicted_frame") is None)
        summary = {
            "predictions": str(args.predictions),
            "instances": total,
            "accuracy": (correct / total) if total else None,
            "parse_failure_rate": (failed / total) if total else None,
        }
        print(json.dumps(summary, indent=2, sort_keys=True))
        return 0
    if args.spec is None or args.cache is None:
        raise RuntimeError("eval report needs either --predictions or both --spec and --cache")
    spec = RunSpec.from_json_file(args.spec)
    cache = ResponseCache(args.cache)
    report = evalkit.run_eval(spec, cache=cache, out_dir=args.out)
    sys.stdout.buffer.write(report.to_json_bytes())
    return 0


def _cmd_defprobe_generate(args) -> int:
    backend = BackendConfig.from_dict(json.loads(args.backend.read_text(encoding="utf-8")))
    if args.model:
        backend = BackendConfig.from_dict({**json.loads(args.backend.read_text(encoding="utf-8")), "model_name": args.model})
    lexicon = corpus_mod.load_lexicon(args.lexicon, "fn17")
    cache = ResponseCache(args.cache) if args.cache else None
    definitions, missing = defprobe_mod.generate_definitions(
        list(lexicon.frames.values()), backend, cache=cache
    )
    defprobe_mod.write_definitions(definitions, args.out)
    print(f"generated {len(definitions)} definitions -> {args.out}")
    if missing:
        print(f"missing frames: {missing}")
    return 0


def _cmd_defprobe_eval(args, app) -> int:
    spec = RunSpec.from_json_file(args.spec)
    source = args.source.split(":", 1)[0]
    resources = evalkit.resolve_resources(spec)
    generated = None
    if source == "generated":
        if args.definitions is None and not spec.definitions_path:
            raise RuntimeError("generated source requires --definitions")
        generated = evalkit.load_definitions(args.definitions or Path(spec.definitions_path))
    out_dir = args.out or _run_dir(app.cache_dir, spec)
    cache = ResponseCache(args.cache or Path(out_dir) / "cache")
    report = defprobe_mod.eval_with_definitions(
        source, spec, resources, generated=generated, cache=cache, out_dir=out_dir
    )
    print(f"mean accuracy: {report.mean_accuracy:.4f}  source: {args.source}")
    return 0


class SystemExit2(Exception):
    """Usage error discovered after argparse; exits with code 2."""


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    app = load_app_config(args.config, overrides={"log_level": args.log_level})
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, app.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        if args.command == "corpus":
            return _cmd_corpus_convert(args)
        if args.command == "lexicon":
            return _cmd_lexicon_lookup(args)
        if args.command == "prompt":
            return _cmd_prompt_render(args)
        if args.command == "eval":
            if args.eval_command == "run":
                return _cmd_eval_run(args, app)
            if args.eval_command == "ablate":
                return _cmd_eval_ablate(args, app)
            if args.eval_command == "compare":
                return _cmd_eval_compare(args)
            if args.eval_command == "report":
                return _cmd_eval_report(args)
        if args.command == "defprobe":
            if args.defprobe_command == "generate":
                return _cmd_defprobe_generate(args)
            if args.defprobe_command == "eval":
                return _cmd_defprobe_eval(args, app)
        parser.error(f"unknown command {args.command!r}")
    except SystemExit2 as exc:
        parser.exit(2, f"{parser.prog}: error: {exc}\n")
    except Exception as exc:  # runtime failure: message + exit 1
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
