"""Command-line pipeline: generate, render, decompose, ground, eval, stats.

Data flows through JSONL files; every subcommand writes deterministic
bytes for fixed inputs (sorted keys, compact separators) so reruns can
be diffed.  Logs go to standard error, data to files or standard out.
Every flag can also be set through COMPOGROUND_* environment variables.
"""

from __future__ import annotations

import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import click

from . import composer, decomposer, evaluator, progressive, protocol, scene_graph
from .errors import EmptyCorpusError, ParseFormatError, InconsistentParseError
from .parses import read_bracketed, read_conllu

log = logging.getLogger("compoground")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _write_lines(output: str, lines: list[str]) -> None:
    if output == "-":
        for line in lines:
            sys.stdout.write(line + "\n")
        return
    with open(output, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


def _read_jsonl(path: str) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise click.ClickException(f"{path}:{lineno}: not valid JSON: {exc}")
    return records


@click.group()
@click.option("--verbose", is_flag=True, help="Log at debug level.")
def cli(verbose: bool):
    """Compositional grounding toolkit: data generation, decomposition, progressive decoding, evaluation."""
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )


@cli.command("generate")
@click.option("--input", "input_path", required=True, help="Scene-graph corpus (file or directory per --format).")
@click.option("--format", "fmt", type=click.Choice(scene_graph.FORMATS), default=scene_graph.TRIPLE_JSONL, show_default=True)
@click.option("--output", required=True, help="Instance JSONL destination ('-' for stdout).")
@click.option("--max-depth", type=click.IntRange(min=1), default=3, show_default=True, help="Longest predicate chain to compose.")
@click.option("--per-image-cap", type=click.IntRange(min=1), default=None, help="Keep at most this many instances per image.")
@click.option("--include-regions", is_flag=True, help="Also emit level-two pairs from region descriptions.")
@click.option("--generator-url", default=None, help="Text-generation endpoint; omitted means template grammar only.")
@click.option("--timeout", type=float, default=30.0, show_default=True, help="HTTP timeout in seconds.")
@click.option("--concurrency", type=click.IntRange(min=1), default=4, show_default=True, help="Parallel images when a generator is configured.")
@click.option("--seed", type=int, default=0, show_default=True, help="Reserved for sampling backends; current paths are deterministic.")
def cmd_generate(input_path, fmt, output, max_depth, per_image_cap, include_regions, generator_url, timeout, concurrency, seed):
    """Compose nested instances from scene graphs."""
    del seed  # template composition is already deterministic
    try:
        ingest = scene_graph.ingest_scene_graphs(input_path, fmt)
    except EmptyCorpusError as exc:
        raise click.ClickException(str(exc))
    except OSError as exc:
        raise click.ClickException(f"cannot read {input_path}: {exc}")
    for rejection in ingest.rejections:
        log.warning("rejected %s: %s", rejection.record_key, rejection.reason)
    log.info("ingested %d graphs (%d rejected, %d unusable for composition)", ingest.accepted, ingest.rejected, len(ingest.unusable))

    generator = composer.HTTPTextGenerator(generator_url, timeout=timeout) if generator_url else None

    def build(graph):
        return graph, composer.build_instances(
            graph,
            generator,
            max_depth=max_depth,
            per_image_cap=per_image_cap,
            include_regions=include_regions,
        )

    if generator is not None and concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            built = list(pool.map(build, ingest.graphs))
    else:
        built = [build(g) for g in ingest.graphs]

    report = composer.BuildReport()
    lines = []
    for graph, result in built:
        report.merge(result.report)
        for inst in result.instances:
            lines.append(_dumps(composer.instance_to_record(inst, graph.width, graph.height)))
    _write_lines(output, lines)
    log.info(
        "chains=%d forward-maximal=%d instances=%d hallucination-rejected=%d head-failures=%d duplicates-dropped=%d",
        report.chains_found,
        report.forward_maximal,
        report.composed,
        report.hallucination_rejected,
        report.head_failures,
        report.duplicate_texts_dropped,
    )
    for level, count in sorted(report.per_level_counts.items()):
        log.info("level %d expressions: %d", level, count)
    if not lines:
        log.error("no instances composed")
        sys.exit(1)


@cli.command("render")
@click.option("--input", "input_path", required=True, help="Instance JSONL from generate.")
@click.option("--output", required=True, help="Training-sample JSONL destination ('-' for stdout).")
@click.option("--grid-size", type=click.IntRange(min=2), default=protocol.DEFAULT_GRID, show_default=True)
@click.option("--mask-delimiters", is_flag=True, help="Extend loss masks over the box delimiter markers.")
def cmd_render(input_path, output, grid_size, mask_delimiters):
    """Serialize instances into training samples with loss masks."""
    lines = []
    for record in _read_jsonl(input_path):
        instance, (width, height) = composer.instance_from_record(record)
        for level in range(1, instance.max_level + 1):
            for sample in protocol.render_level_samples(
                instance, level, (width, height), grid=grid_size, mask_delimiters=mask_delimiters
            ):
                lines.append(_dumps(protocol.sample_to_record(sample)))
    _write_lines(output, lines)
    log.info("rendered %d training samples", len(lines))


def _bundle_from_inline(record: dict):
    tree = read_bracketed(record["constituency"])
    deps = read_conllu(record["conllu"])
    if len(deps) != 1:
        raise ParseFormatError(f"expected one dependency sentence, found {len(deps)}")
    return decomposer.make_bundle(tree, deps[0], source="inline")


def _bundle_from_service(client, parse_url: str, text: str):
    resp = client.post(parse_url, json={"sentence": text})
    if resp.status_code != 200:
        raise ParseFormatError(f"parse service returned HTTP {resp.status_code}")
    payload = resp.json()
    tree = read_bracketed(payload["bracketed"])
    deps = read_conllu(payload["conllu"])
    if len(deps) != 1:
        raise ParseFormatError(f"parse service returned {len(deps)} sentences")
    return decomposer.make_bundle(tree, deps[0], source=parse_url)


@cli.command("decompose")
@click.option("--input", "input_path", required=True, help="Expression JSONL: {id, text, image_ref?, width?, height?, constituency?, conllu?}.")
@click.option("--output", required=True, help="Decomposition JSONL destination ('-' for stdout).")
@click.option("--const-file", default=None, help="Bracketed trees, one per input line, when not inlined.")
@click.option("--dep-file", default=None, help="CoNLL-U sentences aligned with --const-file.")
@click.option("--parse-url", default=None, help="Parse-service endpoint used for records without parses.")
@click.option("--timeout", type=float, default=30.0, show_default=True)
def cmd_decompose(input_path, output, const_file, dep_file, parse_url, timeout):
    """Decompose expressions into level-ordered sub-expressions."""
    records = _read_jsonl(input_path)
    batch_bundles = None
    if const_file or dep_file:
        if not (const_file and dep_file):
            raise click.UsageError("--const-file and --dep-file must be given together")
        batch_bundles = decomposer.ingest_bundle_batch(const_file, dep_file)
        if len(batch_bundles) != len(records):
            raise click.ClickException(
                f"{len(batch_bundles)} parses in {const_file} for {len(records)} input records"
            )
    client = None
    if parse_url:
        import httpx

        client = httpx.Client(timeout=timeout)

    lines = []
    failures = 0
    for i, record in enumerate(records):
        item_id = str(record.get("id", i))
        try:
            text = record["text"]
            if "constituency" in record and "conllu" in record:
                bundle = _bundle_from_inline(record)
            elif batch_bundles is not None:
                bundle = batch_bundles[i]
            elif client is not None:
                bundle = _bundle_from_service(client, parse_url, text)
            else:
                raise ParseFormatError("record has no inline parses and no --const-file/--dep-file or --parse-url was given")
            if tuple(text.lower().split()) != tuple(f.lower() for f in bundle.dep.forms):
                raise InconsistentParseError(f"parse tokens do not match text {text!r}")
            result = decomposer.decompose(bundle)
            extra = {"id": item_id}
            for key in ("image_ref", "width", "height"):
                if key in record:
                    extra[key] = record[key]
            lines.append(_dumps(decomposer.decomposition_to_record(result, **extra)))
        except (KeyError, ParseFormatError, InconsistentParseError, ValueError) as exc:
            failures += 1
            log.warning("item %s failed: %s", item_id, exc)
            lines.append(_dumps({"id": item_id, "error": str(exc)}))
    _write_lines(output, lines)
    log.info("decomposed %d items, %d failures", len(records) - failures, failures)


@cli.command("ground")
@click.option("--input", "input_path", required=True, help="Decomposition JSONL with image_ref/width/height per record.")
@click.option("--output", required=True, help="Outcome JSONL destination ('-' for stdout).")
@click.option("--backend-url", default=None, help="Model backend endpoint.")
@click.option("--mock-script", default=None, help="JSON file scripting the mock backend (use instead of --backend-url).")
@click.option("--grid-size", type=click.IntRange(min=2), default=protocol.DEFAULT_GRID, show_default=True)
@click.option("--max-length", type=click.IntRange(min=4), default=64, show_default=True)
@click.option("--temperature", type=float, default=0.0, show_default=True)
@click.option("--concurrency", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--retries", type=click.IntRange(min=0), default=2, show_default=True)
@click.option("--clue-mode", type=click.Choice([progressive.CLUE_PREVIOUS, progressive.CLUE_ALL]), default=progressive.CLUE_PREVIOUS, show_default=True)
@click.option("--timeout", type=float, default=30.0, show_default=True)
@click.option("--trace-out", default=None, help="Also write full traces (prompts, raw responses, wall times) here.")
@click.option("--seed", type=int, default=0, show_default=True, help="Reserved for sampling backends; current paths are deterministic.")
def cmd_ground(input_path, output, backend_url, mock_script, grid_size, max_length, temperature, concurrency, retries, clue_mode, timeout, trace_out, seed):
    """Progressively ground decomposed expressions with a model backend."""
    del seed
    if backend_url and mock_script:
        raise click.UsageError("--backend-url and --mock-script are mutually exclusive")
    if backend_url:
        backend = progressive.HTTPBackend(backend_url, timeout=timeout)
    elif mock_script:
        try:
            script = json.loads(Path(mock_script).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise click.ClickException(f"cannot load mock script {mock_script}: {exc}")
        backend = progressive.MockBackend.from_script(script)
    else:
        raise click.UsageError("no backend configured: pass --backend-url for a live model or --mock-script for the deterministic mock")

    records = _read_jsonl(input_path)
    tasks = []
    task_slots = []
    slots: list[dict | None] = [None] * len(records)
    skipped = 0
    for i, record in enumerate(records):
        item_id = str(record.get("id", i))
        reason = None
        if "error" in record:
            reason = f"upstream error: {record['error']}"
        else:
            try:
                tasks.append(
                    progressive.GroundTask(
                        item_id=item_id,
                        image_ref=str(record["image_ref"]),
                        width=int(record["width"]),
                        height=int(record["height"]),
                        decomposition=decomposer.decomposition_from_record(record),
                    )
                )
                task_slots.append(i)
            except (KeyError, TypeError, ValueError) as exc:
                reason = f"bad record: {exc}"
        if reason is not None:
            skipped += 1
            log.warning("skipping item %s: %s", item_id, reason)
            slots[i] = {"id": item_id, "status": "failed", "final_bbox": None, "final_pair": None}

    result = progressive.ground_batch(
        tasks,
        backend,
        concurrency=concurrency,
        params=progressive.DecodingParams(max_length=max_length, temperature=temperature),
        grid=grid_size,
        retry=progressive.RetryPolicy(retries=retries),
        clue_mode=clue_mode,
    )
    for slot, outcome in zip(task_slots, result.outcomes):
        slots[slot] = progressive.outcome_to_record(outcome)
    _write_lines(output, [_dumps(s) for s in slots if s is not None])
    if trace_out:
        _write_lines(trace_out, [_dumps(progressive.trace_to_record(o)) for o in result.outcomes])
    log.info("grounded %d items: %d ok, %d degraded, %d failed (+%d skipped)", result.report.total, result.report.ok, result.report.degraded, result.report.failed, skipped)


def _report_out(report: dict, table: str, output: str) -> None:
    payload = json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if output == "-":
        sys.stdout.write(payload)
    else:
        Path(output).write_text(payload, encoding="utf-8")
    if table:
        print(table, file=sys.stderr)


@cli.command("eval")
@click.option("--input", "input_path", required=True, help="Eval-record JSONL: {id, text?, level?, gold, predicted?|candidates?}.")
@click.option("--outcomes", default=None, help="Outcome JSONL from ground; fills predicted boxes by id.")
@click.option("--protocol", "protocol_name", type=click.Choice(["grounding", "multichoice"]), default="grounding", show_default=True)
@click.option("--iou-threshold", default="0.5", show_default=True, help="Exact threshold, e.g. 0.5 or 1/2.")
@click.option("--output", default="-", show_default=True, help="JSON report destination.")
def cmd_eval(input_path, outcomes, protocol_name, iou_threshold, output):
    """Score grounding outcomes or multiple-choice selections."""
    try:
        threshold = Fraction(iou_threshold)
    except (ValueError, ZeroDivisionError):
        raise click.UsageError(f"--iou-threshold {iou_threshold!r} is not a number")
    records = []
    for i, payload in enumerate(_read_jsonl(input_path)):
        payload.setdefault("id", i)
        try:
            records.append(evaluator.record_from_json(payload))
        except (KeyError, TypeError, ValueError) as exc:
            raise click.ClickException(f"bad eval record {payload.get('id')}: {exc}")
    if outcomes:
        by_id = {}
        for rec in _read_jsonl(outcomes):
            if rec.get("final_bbox") is not None:
                by_id[str(rec["id"])] = scene_graph.BBox(*rec["final_bbox"])
        records = [
            evaluator.EvalRecord(
                item_id=r.item_id,
                text=r.text,
                level=r.level,
                gold=r.gold,
                predicted=by_id.get(r.item_id),
                candidates=r.candidates,
            )
            for r in records
        ]
    if protocol_name == "grounding":
        metrics = evaluator.score_grounding(records, threshold)
    else:
        metrics = evaluator.score_multichoice(records)
    _report_out(evaluator.metrics_to_json(metrics), evaluator.metrics_to_table(metrics), output)


@cli.command("stats")
@click.option("--input", "input_path", required=True, help="Instance JSONL from generate.")
@click.option("--output", default="-", show_default=True, help="JSON report destination.")
def cmd_stats(input_path, output):
    """Corpus statistics over generated instances."""
    instances = []
    for record in _read_jsonl(input_path):
        instance, _ = composer.instance_from_record(record)
        instances.append(instance)
    try:
        metrics = evaluator.corpus_stats(instances)
    except EmptyCorpusError as exc:
        raise click.ClickException(str(exc))
    _report_out(evaluator.metrics_to_json(metrics), evaluator.metrics_to_table(metrics), output)


def main():
    cli(auto_envvar_prefix="COMPOGROUND")


if __name__ == "__main__":
    main()
