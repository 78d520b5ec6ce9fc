"""Command-line surface tying the toolkit together.

Subcommands: sketch, build-dataset, augment (clf|ner|mrc), finetune-pairs,
evaluate, stub-server.  All file I/O is UTF-8 JSON Lines except the NER
CoNLL column format.  Endpoint defaults come from GENIUSKIT_GEN_URL and
GENIUSKIT_EMB_URL.
"""

from __future__ import annotations

import csv
import json
import re
import sys
from pathlib import Path

import click

from . import backends, dataio
from ._stopwords import load_stopwords
from .augmenters import (
    AugmentOptions,
    DecodingOptions,
    Gazetteer,
    NerSequence,
    augment_classification,
    augment_mrc,
    augment_ner,
    build_finetune_pairs,
    concat_sequences,
)
from .extractors import ConstantTopk, ExtractorConfig, TopkRule
from .metrics import EvalRecord, evaluate_corpus, evaluate_record
from .pipeline import PipelineConfig, build_pretrain_dataset, sample_masking_ratios
from .sketcher import (
    DEFAULT_MASK_TOKEN,
    Template,
    build_projection,
    render,
    project,
)
from .textcore import tokenize

TEMPLATE_CHOICES = [t.value for t in Template]

_TOPK_RULE_RE = re.compile(r"^max\(\s*l\s*/\s*(\d+)\s*,\s*(\d+)\s*\)$")
_TOPK_DIV_RE = re.compile(r"^l\s*/\s*(\d+)$")


def parse_topk_rule(spec: str):
    """Accepts "max(l/5,10)", "l/5" or a plain integer."""
    spec = spec.strip()
    m = _TOPK_RULE_RE.match(spec)
    if m:
        return TopkRule(divisor=int(m.group(1)), minimum=int(m.group(2)))
    m = _TOPK_DIV_RE.match(spec)
    if m:
        return TopkRule(divisor=int(m.group(1)), minimum=1)
    if spec.isdigit():
        return ConstantTopk(int(spec))
    raise click.BadParameter(f"cannot parse top-k rule {spec!r}")


def _extractor_config(topk_rule: str, stopwords: str | None, tri_lambda: float = 0.5, seed: int | None = None) -> ExtractorConfig:
    kwargs = {"topk_rule": parse_topk_rule(topk_rule), "tri_lambda": tri_lambda, "seed": seed}
    if stopwords:
        kwargs["stopwords"] = load_stopwords(stopwords)
    return ExtractorConfig(**kwargs)


def _open_output(path: str | None):
    if path and path != "-":
        return open(path, "w", encoding="utf-8")
    return sys.stdout


def _resolve_backends(stub, backend_url, embed_url, mask_token, stub_filler="filler", embed_dim=64):
    if stub:
        return (
            backends.EchoStub(filler=stub_filler, mask_token=mask_token),
            backends.HashEmbedder(dim=embed_dim),
        )
    gen_url = backend_url or backends.default_generation_url()
    emb_url = embed_url or backends.default_embedding_url()
    if not gen_url or not emb_url:
        raise click.UsageError(
            "no backend configured: pass --stub, or set --backend-url/--embed-url "
            f"(or {backends.GEN_URL_ENV}/{backends.EMB_URL_ENV})"
        )
    return backends.HttpGenerator(gen_url), backends.HttpEmbedder(emb_url)


def _write_report(report, path: str | None) -> None:
    if path:
        report.write(path)
    click.echo(f"run report: {json.dumps(report.to_dict())}", err=True)


@click.group()
def main() -> None:
    """Sketch extraction, pair building, augmentation and evaluation."""


# --- sketch ---------------------------------------------------------------


@main.command()
@click.argument("input", type=click.Path(exists=True, dir_okay=False, allow_dash=True))
@click.option("-o", "--output", default="-", help="Output path (default stdout).")
@click.option("--template", type=click.Choice(TEMPLATE_CHOICES), default="t4")
@click.option("--mask-token", default=DEFAULT_MASK_TOKEN, show_default=True)
@click.option("--topk-rule", default="max(l/5,10)", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--keywords", "keywords_file", type=click.Path(exists=True, dir_okay=False),
              help="Override extraction with this keyword list (one per line, best first).")
@click.option("--stopwords", type=click.Path(exists=True, dir_okay=False))
@click.option("--text-only", is_flag=True, help="Emit bare sketch strings instead of JSON.")
def sketch(input, output, template, mask_token, topk_rule, seed, keywords_file, stopwords, text_only):
    """Render sketches for documents (one JSON object or plain-text line each)."""
    template = Template(template)
    config = _extractor_config(topk_rule, stopwords, seed=seed)
    override = None
    if keywords_file:
        with open(keywords_file, encoding="utf-8") as fh:
            override = [line.strip() for line in fh if line.strip()]
    stream = sys.stdin if input == "-" else open(input, encoding="utf-8")
    out = _open_output(output)
    try:
        for line in stream:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                text = obj["text"] if isinstance(obj, dict) else line
            except json.JSONDecodeError:
                text = line
            document = tokenize(text)
            if override is not None:
                projection = project(document, override)
            else:
                projection = build_projection(document, config, template)
            rendered = render(projection, template, mask_token)
            if text_only:
                out.write(rendered.text + "\n")
            else:
                out.write(dataio.dump_jsonl_line({"sketch": rendered.text}) + "\n")
    finally:
        if stream is not sys.stdin:
            stream.close()
        if out is not sys.stdout:
            out.close()


# --- build-dataset -----------------------------------------------------------


def _load_config_file(path: str) -> dict:
    """key=value lines; '#' starts a comment; keys use flag spelling."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise click.ClickException(f"{path}:{line_no}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


@main.command("build-dataset")
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.argument("output_dir", type=click.Path(file_okay=False))
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
              help="key=value file supplying defaults for the flags below.")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--shard-size", type=int, default=10000, show_default=True)
@click.option("--min-words", type=int, default=50, show_default=True)
@click.option("--max-words", type=int, default=200, show_default=True)
@click.option("--max-sentences", type=int, default=None,
              help="Optional cap on sentences per paragraph.")
@click.option("--template", type=click.Choice(TEMPLATE_CHOICES), default="t4")
@click.option("--mask-token", default=DEFAULT_MASK_TOKEN, show_default=True)
@click.option("--topk-rule", default="max(l/5,10)", show_default=True)
@click.option("--stopwords", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--overwrite", is_flag=True, help="Replace a previous run in OUTPUT_DIR.")
@click.option("--figures", is_flag=True, help="Render a masking-ratio histogram.")
@click.pass_context
def build_dataset(ctx, input, output_dir, config_file, workers, shard_size, min_words,
                  max_words, max_sentences, template, mask_token, topk_rule, stopwords,
                  seed, overwrite, figures):
    """Build sharded sketch/text pairs from a JSONL corpus."""
    values = {
        "workers": workers, "shard_size": shard_size, "min_words": min_words,
        "max_words": max_words, "max_sentences": max_sentences, "seed": seed,
        "template": template, "mask_token": mask_token, "topk_rule": topk_rule,
        "stopwords": stopwords,
    }
    if config_file:
        casts = {
            "workers": int, "shard_size": int, "min_words": int, "max_words": int,
            "max_sentences": int, "seed": int, "template": str, "mask_token": str,
            "topk_rule": str, "stopwords": str,
        }
        for key, raw in _load_config_file(config_file).items():
            if key not in casts:
                raise click.ClickException(f"unknown config key: {key}")
            # explicit command-line flags win over the config file
            if ctx.get_parameter_source(key) == click.core.ParameterSource.DEFAULT:
                values[key] = casts[key](raw)
    workers, shard_size = values["workers"], values["shard_size"]
    min_words, max_words = values["min_words"], values["max_words"]
    max_sentences, seed = values["max_sentences"], values["seed"]
    template, mask_token = values["template"], values["mask_token"]
    topk_rule, stopwords = values["topk_rule"], values["stopwords"]
    config = PipelineConfig(
        extractor=_extractor_config(topk_rule, stopwords),
        template=Template(template),
        mask_token=mask_token,
        min_words=min_words,
        max_words=max_words,
        max_sentences=max_sentences,
        workers=workers,
        shard_size=shard_size,
        seed=seed,
    )
    try:
        manifest = build_pretrain_dataset(input, output_dir, config, overwrite=overwrite)
    except FileExistsError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(manifest.to_dict(), indent=2))
    if figures and manifest.emitted:
        from .figures import render_masking_figure

        ratios = sample_masking_ratios(output_dir, mask_token)
        path = render_masking_figure(ratios, Path(output_dir) / "masking_ratio_hist.png")
        click.echo(f"figure written: {path}", err=True)


# --- augment -------------------------------------------------------------------


def _augment_options(**kwargs) -> AugmentOptions:
    decoding = DecodingOptions(max_new_tokens=kwargs.pop("max_new_tokens"))
    extractor = _extractor_config(
        kwargs.pop("topk_rule"), kwargs.pop("stopwords"), tri_lambda=kwargs.pop("tri_lambda")
    )
    return AugmentOptions(extractor=extractor, decoding=decoding, **kwargs)


def _backend_options(fn):
    fn = click.option("--backend-url", default=None, envvar=backends.GEN_URL_ENV,
                      help="Generation endpoint (env GENIUSKIT_GEN_URL).")(fn)
    fn = click.option("--embed-url", default=None, envvar=backends.EMB_URL_ENV,
                      help="Embedding endpoint (env GENIUSKIT_EMB_URL).")(fn)
    fn = click.option("--stub", is_flag=True, help="Use the in-process echo/hash backends.")(fn)
    return fn


def _common_augment_options(fn):
    fn = click.option("--multiplier", type=int, default=1, show_default=True)(fn)
    fn = click.option("--tri-lambda", type=float, default=0.5, show_default=True)(fn)
    fn = click.option("--mask-token", default=DEFAULT_MASK_TOKEN, show_default=True)(fn)
    fn = click.option("--topk-rule", default="max(l/5,10)", show_default=True)(fn)
    fn = click.option("--stopwords", type=click.Path(exists=True, dir_okay=False))(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--workers", type=int, default=4, show_default=True)(fn)
    fn = click.option("--report", "report_path", type=click.Path(dir_okay=False),
                      help="Write the run report JSON here.")(fn)
    fn = _backend_options(fn)
    return fn


@main.group()
def augment() -> None:
    """Task-specific augmentation pipelines."""


@augment.command("clf")
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", default="-", help="Output JSONL (default stdout).")
@click.option("--attribute-control/--no-attribute-control", default=True, show_default=True)
@click.option("--separator", default=":", show_default=True)
@click.option("--mixup-k", type=int, default=None,
              help="Mix the sketch from K same-label records.")
@click.option("--max-new-tokens", type=int, default=200, show_default=True)
@_common_augment_options
def augment_clf(input, output, attribute_control, separator, mixup_k, max_new_tokens,
                multiplier, tri_lambda, mask_token, topk_rule, stopwords, seed, workers,
                report_path, backend_url, embed_url, stub):
    """Augment classification records ({"text","label","id"} JSONL)."""
    records = dataio.load_classification_jsonl(input)
    generator, embedder = _resolve_backends(stub, backend_url, embed_url, mask_token)
    options = _augment_options(
        multiplier=multiplier, attribute_control=attribute_control, separator=separator,
        mask_token=mask_token, tri_lambda=tri_lambda, topk_rule=topk_rule,
        stopwords=stopwords, seed=seed, workers=workers, mixup_k=mixup_k,
        max_new_tokens=max_new_tokens,
    )
    outputs, report = augment_classification(records, generator, embedder, options)
    out = _open_output(output)
    try:
        for rec in outputs:
            out.write(dataio.dump_jsonl_line(dataio.classification_to_row(rec)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    _write_report(report, report_path)
    if report.failed:
        raise SystemExit(1)


@augment.command("ner")
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", default="-", help="Output CoNLL file (default stdout).")
@click.option("--max-words", type=int, default=100, show_default=True,
              help="Concatenate consecutive sequences up to this many tokens.")
@click.option("--relabel-mode", type=click.Choice(["default", "conservative"]),
              default="default", show_default=True)
@click.option("--max-new-tokens", type=int, default=200, show_default=True)
@_common_augment_options
def augment_ner_cmd(input, output, max_words, relabel_mode, max_new_tokens,
                    multiplier, tri_lambda, mask_token, topk_rule, stopwords, seed,
                    workers, report_path, backend_url, embed_url, stub):
    """Augment NER sequences (CoNLL columns: token ... tag)."""
    raw = dataio.read_conll(input)
    sequences = [
        NerSequence(tokens=tuple(toks), tags=tuple(tags), id=f"seq-{i:05d}")
        for i, (toks, tags) in enumerate(raw)
    ]
    gazetteer = Gazetteer.from_sequences(sequences)
    passages = concat_sequences(sequences, max_words=max_words)
    generator, embedder = _resolve_backends(stub, backend_url, embed_url, mask_token)
    options = _augment_options(
        multiplier=multiplier, mask_token=mask_token, tri_lambda=tri_lambda,
        topk_rule=topk_rule, stopwords=stopwords, seed=seed, workers=workers,
        relabel_mode=relabel_mode, concat_max_words=max_words,
        max_new_tokens=max_new_tokens,
    )
    outputs, report = augment_ner(passages, gazetteer, generator, embedder, options)
    if output and output != "-":
        dataio.write_conll(output, [(seq.tokens, seq.tags) for seq in outputs])
    else:
        for seq in outputs:
            for token, tag in zip(seq.tokens, seq.tags):
                sys.stdout.write(f"{token} {tag}\n")
            sys.stdout.write("\n")
    _write_report(report, report_path)
    if report.failed:
        raise SystemExit(1)


@augment.command("mrc")
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", default="-", help="Output JSONL (default stdout).")
@click.option("--max-new-tokens", type=int, default=250, show_default=True)
@_common_augment_options
def augment_mrc_cmd(input, output, max_new_tokens, multiplier, tri_lambda, mask_token,
                    topk_rule, stopwords, seed, workers, report_path, backend_url,
                    embed_url, stub):
    """Augment MRC examples ({"paragraph","question","answer","answer_start"} JSONL)."""
    examples = dataio.load_mrc_jsonl(input)
    generator, embedder = _resolve_backends(stub, backend_url, embed_url, mask_token)
    options = _augment_options(
        multiplier=multiplier, mask_token=mask_token, tri_lambda=tri_lambda,
        topk_rule=topk_rule, stopwords=stopwords, seed=seed, workers=workers,
        max_new_tokens=max_new_tokens,
    )
    outputs, report = augment_mrc(examples, generator, embedder, options)
    out = _open_output(output)
    try:
        for ex in outputs:
            out.write(dataio.dump_jsonl_line(dataio.mrc_to_row(ex)) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    _write_report(report, report_path)
    if report.failed:
        raise SystemExit(1)


# --- finetune pairs ------------------------------------------------------------


@main.command("finetune-pairs")
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", default="-", help="Output JSONL (default stdout).")
@click.option("--tri-lambda", type=float, default=0.5, show_default=True)
@click.option("--attribute-control/--no-attribute-control", default=True, show_default=True)
@click.option("--separator", default=":", show_default=True)
@click.option("--mask-token", default=DEFAULT_MASK_TOKEN, show_default=True)
@click.option("--topk-rule", default="max(l/5,10)", show_default=True)
@click.option("--stopwords", type=click.Path(exists=True, dir_okay=False))
@_backend_options
def finetune_pairs(input, output, tri_lambda, attribute_control, separator, mask_token,
                   topk_rule, stopwords, backend_url, embed_url, stub):
    """Emit target-aware sketch -> original text fine-tuning pairs."""
    records = dataio.load_classification_jsonl(input)
    _, embedder = _resolve_backends(stub, backend_url, embed_url, mask_token)
    options = _augment_options(
        attribute_control=attribute_control, separator=separator, mask_token=mask_token,
        tri_lambda=tri_lambda, topk_rule=topk_rule, stopwords=stopwords,
        max_new_tokens=200,
    )
    pairs = build_finetune_pairs(records, embedder, options)
    out = _open_output(output)
    try:
        for pair in pairs:
            out.write(dataio.dump_jsonl_line({"sketch": pair.sketch, "text": pair.text}) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()


# --- evaluate -------------------------------------------------------------------


@main.command()
@click.argument("input", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output-dir", default="eval-report", show_default=True)
@click.option("--mask-token", default=DEFAULT_MASK_TOKEN, show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def evaluate(input, output_dir, mask_token, figures):
    """Score {"original","sketch","generated"} JSONL records; write
    report.json, per-record records.csv and histogram figures."""
    records = [
        EvalRecord(
            original=obj["original"], sketch=obj["sketch"], generated=obj["generated"]
        )
        for obj in dataio.read_jsonl(input)
    ]
    if not records:
        raise click.ClickException("no records to evaluate")
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [evaluate_record(r, mask_token) for r in records]
    report = evaluate_corpus(records, mask_token)
    dataio.write_json(out_dir / "report.json", report.to_dict())
    columns = ["index", "sketch_lost", "recall", "diversity", "length_ratio", "masking_ratio"]
    with open(out_dir / "records.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for i, row in enumerate(rows):
            writer.writerow([i] + [f"{row[c]:.6f}" for c in columns[1:]])
    if figures:
        from .figures import render_metric_figures

        for path in render_metric_figures(rows, out_dir / "figures"):
            click.echo(f"figure written: {path}", err=True)
    click.echo(json.dumps(report.to_dict(), indent=2))


# --- stub server ----------------------------------------------------------------


@main.command("stub-server")
@click.option("--port", type=int, default=8099, show_default=True)
@click.option("--filler", default="filler", show_default=True)
@click.option("--mask-token", default=DEFAULT_MASK_TOKEN, show_default=True)
@click.option("--embed-dim", type=int, default=64, show_default=True)
def stub_server(port, filler, mask_token, embed_dim):
    """Serve the generate/embed protocol with deterministic stand-ins."""
    from .stubserver import serve_forever

    serve_forever(port, filler=filler, mask_token=mask_token, embed_dim=embed_dim)


if __name__ == "__main__":  # pragma: no cover
    main()
