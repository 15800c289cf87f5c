"""Unified command line: audit, groups, transfer, converge, synth, validate.

Every leaf command accepts --seed (default 0), --config (JSON file supplying
any flag; explicit command-line values win), --out, and --format. Reports
echo the full effective parameter set and input digests so a run can be
reproduced from its report alone.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import click
import numpy as np

from . import convergence as conv
from . import downstream as ds
from . import grouping
from . import leakage
from . import rankstats
from . import report as rep
from . import retrieval as ret
from . import synth as synthmod
from .data import (
    AnnotationTable,
    ProtectedAttribute,
    attribute_from_annotations,
    load_annotations,
    load_attribute_schema,
    load_predictions,
    partition_by_demographic,
)
from .embfile import EmbeddingFormatError, read_embeddings


@click.group()
def main():
    """Bias auditing over embedding spaces and downstream task predictions."""


def _common_options(fn):
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option(
        "--config", type=click.Path(exists=True, dir_okay=False), default=None,
        help="JSON file supplying defaults for any flag.",
    )(fn)
    fn = click.option("--out", type=click.Path(dir_okay=False), default=None)(fn)
    fn = click.option(
        "--format", "fmt", type=click.Choice(["json", "csv"]), default="json",
        show_default=True,
    )(fn)
    return fn


def _resolve(ctx, values: dict) -> dict:
    """Merge config-file values under explicit command-line flags."""
    overrides = {}
    config_path = values.get("config")
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            overrides = json.load(fh)
        if not isinstance(overrides, dict):
            raise click.ClickException(f"{config_path}: config must be a JSON object")
    resolved = {}
    for name, value in values.items():
        source = ctx.get_parameter_source(name)
        from_cli = source is not None and source.name == "COMMANDLINE"
        if name in overrides and not from_cli:
            merged = overrides[name]
            if isinstance(value, tuple) and isinstance(merged, list):
                merged = tuple(merged)
            resolved[name] = merged
        else:
            resolved[name] = value
    return resolved


def _echo_params(params: dict) -> dict:
    out = {}
    for name, value in params.items():
        if isinstance(value, tuple):
            out[name] = [str(v) for v in value]
        elif isinstance(value, Path):
            out[name] = str(value)
        else:
            out[name] = value
    return out


def _attribute(
    annotations: AnnotationTable, name: str, schema_path: str | None
) -> ProtectedAttribute:
    if schema_path:
        schema = load_attribute_schema(schema_path)
        if name not in schema:
            raise click.ClickException(f"attribute {name!r} not in {schema_path}")
        return schema[name]
    return attribute_from_annotations(annotations, name)


def _finish(report_dict, out, fmt, plot_spec=None):
    text = rep.emit_report(report_dict, out, fmt)
    if out is None:
        click.echo(text, nl=False)
    else:
        click.echo(f"report written to {out}")
    if plot_spec is not None:
        from . import plots

        results, kind, path = plot_spec
        plots.emit_plot(results, kind, path)
        click.echo(f"plot written to {path}")


# ---------------------------------------------------------------------------
# audit
# ---------------------------------------------------------------------------


@main.group()
def audit():
    """Pre-training and downstream bias metrics."""


@audit.command("recall")
@click.option("--images", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--texts", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pairs", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--annotations", required=True, type=click.Path(exists=True, dir_okay=False)
)
@click.option("--attr", "attr_name", required=True)
@click.option("--schema", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--k", type=int, default=5, show_default=True)
@_common_options
@click.pass_context
def audit_recall(ctx, **kwargs):
    """KL divergence of per-demographic recall@k."""
    started = time.perf_counter()
    params = _resolve(ctx, kwargs)
    try:
        schema = load_attribute_schema(params["schema"]) if params["schema"] else None
        annotations = load_annotations(params["annotations"], schema)
        attribute = _attribute(annotations, params["attr_name"], params["schema"])
        corpus = ret.RetrievalCorpus(
            images=read_embeddings(params["images"]),
            texts=read_embeddings(params["texts"]),
            pairs=ret.load_pairs(params["pairs"]),
        )
        partition = partition_by_demographic(
            annotations, attribute, corpus.images.ids
        )
        recalls = ret.recall_at_k(corpus, partition, params["k"])
        kl = ret.kl_of_recall(recalls)
    except (ValueError, EmbeddingFormatError, OSError) as exc:
        raise click.ClickException(str(exc))
    results = {
        "metric": "recall-kl",
        "attribute": attribute.name,
        "demographics": list(attribute.demographics),
        "k": params["k"],
        "model_id": corpus.images.model_id,
        "recall": {
            demo: rep.metric_value(recalls.recalls[demo], "empty bucket")
            for demo in attribute.demographics
        },
        "counts": recalls.counts,
        "excluded": partition.excluded,
        "missing": partition.missing,
        "kl": rep.metric_value(
            kl, "undefined recall or zero total mass; metric skipped"
        ),
    }
    report_dict = rep.build_report(
        "audit recall",
        _echo_params(params),
        {
            "images": params["images"],
            "texts": params["texts"],
            "pairs": params["pairs"],
            "annotations": params["annotations"],
            "schema": params["schema"],
        },
        results,
        params["seed"],
        started,
    )
    _finish(report_dict, params["out"], params["fmt"])


@audit.command("maxskew")
@click.option("--images", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--prompts", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--annotations", required=True, type=click.Path(exists=True, dir_okay=False)
)
@click.option("--attr", "attr_name", required=True)
@click.option("--schema", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--k", type=int, default=1000, show_default=True)
@_common_options
@click.pass_context
def audit_maxskew(ctx, **kwargs):
    """Mean MaxSkew@k of prompt-to-image retrieval over a prompt set."""
    started = time.perf_counter()
    params = _resolve(ctx, kwargs)
    try:
        schema = load_attribute_schema(params["schema"]) if params["schema"] else None
        annotations = load_annotations(params["annotations"], schema)
        attribute = _attribute(annotations, params["attr_name"], params["schema"])
        images = read_embeddings(params["images"])
        prompts = read_embeddings(params["prompts"])
        partition = partition_by_demographic(annotations, attribute, images.ids)
        result = ret.mean_max_skew(images, prompts, partition, params["k"])
    except (ValueError, EmbeddingFormatError, OSError) as exc:
        raise click.ClickException(str(exc))
    results = {
        "metric": "maxskew",
        "attribute": attribute.name,
        "demographics": list(attribute.demographics),
        "k": params["k"],
        "model_id": images.model_id,
        "mean_max_skew": rep.metric_value(
            result.mean, "no prompt produced a defined skew; metric skipped"
        ),
        "prompts_skipped": result.skipped,
        "per_prompt": [
            {
                "prompt": r.prompt,
                "max_skew": rep.metric_value(r.max_skew, "all shares zero"),
                "top_demographic": r.top_demographic,
                "observed": r.observed,
                "ideal": r.ideal,
            }
            for r in result.per_prompt
        ],
        "excluded": partition.excluded,
        "missing": partition.missing,
    }
    report_dict = rep.build_report(
        "audit maxskew",
        _echo_params(params),
        {
            "images": params["images"],
            "prompts": params["prompts"],
            "annotations": params["annotations"],
            "schema": params["schema"],
        },
        results,
        params["seed"],
        started,
    )
    _finish(report_dict, params["out"], params["fmt"])


@audit.command("downstream")
@click.option("--task", type=click.Choice(["vqa", "caption"]), required=True)
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gt", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option(
    "--annotations", required=True, type=click.Path(exists=True, dir_okay=False)
)
@click.option("--attr", "attr_name", required=True)
@click.option("--schema", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option(
    "--metric", type=click.Choice(["kl", "dba", "lic"]), default="kl",
    show_default=True,
)
@click.option(
    "--scores", type=click.Path(exists=True, dir_okay=False), default=None,
    help="Precomputed per-sample scores (e.g. CIDEr) for the kl metric.",
)
@click.option("--score-name", default=None, help="Which scored metric to use.")
@click.option(
    "--vqa-accuracy", type=click.Choice(["soft", "hard"]), default="soft",
    show_default=True,
)
@click.option("--top-n", type=int, default=50, show_default=True)
@click.option("--mask/--no-mask", "mask_enabled", default=True, show_default=True)
@click.option(
    "--mask-file", type=click.Path(exists=True, dir_okay=False), default=None,
    help="Replacement wordlist for leakage masking, one token per line.",
)
@_common_options
@click.pass_context
def audit_downstream(ctx, **kwargs):
    """Downstream bias: score disparity, amplification, or caption leakage."""
    started = time.perf_counter()
    params = _resolve(ctx, kwargs)
    try:
        schema = load_attribute_schema(params["schema"]) if params["schema"] else None
        annotations = load_annotations(params["annotations"], schema)
        attribute = _attribute(annotations, params["attr_name"], params["schema"])
        metric = params["metric"]
        results: dict = {
            "task": params["task"],
            "metric": metric,
            "attribute": attribute.name,
            "demographics": list(attribute.demographics),
        }
        if metric == "kl" and params["scores"]:
            scored = load_predictions(params["scores"], "scored")
            names = sorted({e.metric for e in scored.entries})
            score_name = params["score_name"] or (
                names[0] if len(names) == 1 else None
            )
            if score_name is None:
                raise ValueError(
                    f"scores file holds several metrics {names}; pass --score-name"
                )
            ids = {e.sample_id for e in scored.entries if e.metric == score_name}
            partition = partition_by_demographic(annotations, attribute, ids)
            table = ds.scored_table(scored, partition, score_name)
            results["score_name"] = score_name
            results["means"] = {
                d: rep.metric_value(table.means[d], "no samples")
                for d in attribute.demographics
            }
            results["counts"] = table.counts
            results["kl"] = rep.metric_value(
                ds.kl_disparity(table),
                "undefined or negative mean score; metric skipped",
            )
        elif metric == "kl":
            if params["task"] != "vqa":
                raise ValueError(
                    "caption kl needs --scores with precomputed per-sample scores"
                )
            if not params["gt"]:
                raise ValueError("--gt is required for the vqa kl metric")
            gt = load_predictions(params["gt"], "vqa")
            pred = load_predictions(params["pred"], "vqa")
            ids = {e.sample_id for e in gt.entries}
            partition = partition_by_demographic(annotations, attribute, ids)
            table = ds.vqa_score_table(
                gt, pred, partition, mode=params["vqa_accuracy"]
            )
            results["accuracy_mode"] = params["vqa_accuracy"]
            results["means"] = {
                d: rep.metric_value(table.means[d], "no samples")
                for d in attribute.demographics
            }
            results["counts"] = table.counts
            results["kl"] = rep.metric_value(
                ds.kl_disparity(table),
                "undefined or negative mean score; metric skipped",
            )
        elif metric == "dba":
            if params["task"] != "vqa":
                raise ValueError("dba is defined for the vqa task")
            if not params["gt"]:
                raise ValueError("--gt is required for dba")
            gt = load_predictions(params["gt"], "vqa")
            pred = load_predictions(params["pred"], "vqa")
            ids = {e.sample_id for e in gt.entries}
            partition = partition_by_demographic(annotations, attribute, ids)
            inputs = ds.build_dba_inputs(gt, pred, partition)
            filtered = ds.filter_answers(inputs, top_n=params["top_n"])
            results["questions_before_filtering"] = len(inputs.gt)
            results["questions_after_filtering"] = len(filtered.gt)
            results["vocabulary_size"] = len(filtered.vocabulary)
            if filtered.gt:
                results["dba"] = rep.defined(ds.dba(filtered))
            else:
                results["dba"] = rep.undefined(
                    "answer filtering removed every question; metric skipped"
                )
        else:  # lic
            if params["task"] != "caption":
                raise ValueError("lic is defined for the caption task")
            if not params["gt"]:
                raise ValueError("--gt is required for lic")
            gt_rows = _caption_samples(
                load_predictions(params["gt"], "captioning"), "gt", annotations,
                attribute,
            )
            pred_rows = _caption_samples(
                load_predictions(params["pred"], "captioning"), "pred", annotations,
                attribute,
            )
            mask_list = _load_mask(params)
            lic_result = leakage.lic(
                gt_rows, pred_rows, attribute, seed=params["seed"],
                mask_list=mask_list,
            )
            results["masking"] = params["mask_enabled"]
            results["lic_gt"] = rep.defined(lic_result.lic_gt)
            results["lic_pred"] = rep.defined(lic_result.lic_pred)
            results["lic"] = rep.defined(lic_result.lic)
            results["gt_train_accuracy"] = lic_result.gt_train_accuracy
            results["pred_train_accuracy"] = lic_result.pred_train_accuracy
    except (ValueError, EmbeddingFormatError, OSError) as exc:
        raise click.ClickException(str(exc))
    report_dict = rep.build_report(
        "audit downstream",
        _echo_params(params),
        {
            "pred": params["pred"],
            "gt": params["gt"],
            "annotations": params["annotations"],
            "schema": params["schema"],
            "scores": params["scores"],
            "mask_file": params["mask_file"],
        },
        results,
        params["seed"],
        started,
    )
    _finish(report_dict, params["out"], params["fmt"])


def _caption_samples(predictions, origin, annotations, attribute):
    rows = []
    counters: dict[str, int] = {}
    for entry in predictions.entries:
        if entry.origin != origin:
            continue
        demo = annotations.label(entry.sample_id, attribute.name)
        if demo is None:
            continue
        index = counters.get(entry.sample_id, 0)
        counters[entry.sample_id] = index + 1
        rows.append((f"{entry.sample_id}#{index:04d}", entry.caption, demo))
    return rows


def _load_mask(params) -> tuple[str, ...]:
    if not params["mask_enabled"]:
        return ()
    if params["mask_file"]:
        with open(params["mask_file"], "r", encoding="utf-8") as fh:
            return tuple(
                line.strip().lower() for line in fh if line.strip()
            )
    return leakage.DEFAULT_MASK_LIST


# ---------------------------------------------------------------------------
# groups
# ---------------------------------------------------------------------------


@main.group()
def groups():
    """Shared local views of the data across embedding spaces."""


@groups.command("discover")
@click.option(
    "--embeddings", "embedding_paths", multiple=True, required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option("--k", type=int, default=grouping.DEFAULT_K, show_default=True)
@click.option(
    "--min-size", type=int, default=grouping.DEFAULT_MIN_SIZE, show_default=True
)
@click.option("--reference", default=None, help="Reference model id.")
@_common_options
@click.pass_context
def groups_discover(ctx, **kwargs):
    """Cluster each space and intersect matching clusters into groups."""
    started = time.perf_counter()
    params = _resolve(ctx, kwargs)
    if params["out"] is None:
        raise click.ClickException("--out GROUPS.json is required")
    try:
        clusterings = []
        for path in params["embedding_paths"]:
            embeddings = read_embeddings(path)
            clusterings.append(
                grouping.kmeans(embeddings, params["k"], seed=params["seed"])
            )
        assignment = grouping.match_groups(
            clusterings,
            min_size=params["min_size"],
            reference=params["reference"],
        )
    except (ValueError, EmbeddingFormatError, OSError) as exc:
        raise click.ClickException(str(exc))
    grouping.save_groups(assignment, params["out"])
    results = {
        "k": params["k"],
        "min_size": params["min_size"],
        "reference": assignment.reference,
        "models": sorted(c.model_id for c in clusterings),
        "groups": [
            {
                "id": g.group_id,
                "size": len(g.members),
                "tie_broken": list(g.tie_broken),
            }
            for g in assignment.groups
        ],
        "groups_file": str(params["out"]),
    }
    report_dict = rep.build_report(
        "groups discover",
        _echo_params(params),
        {f"embeddings[{i}]": p for i, p in enumerate(params["embedding_paths"])},
        results,
        params["seed"],
        started,
    )
    click.echo(rep.emit_report(report_dict, None, params["fmt"]), nl=False)
    click.echo(f"groups written to {params['out']}")


@groups.command("audit")
@click.option(
    "--groups", "groups_path", required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option(
    "--metric", type=click.Choice(["recall-kl", "maxskew"]), required=True
)
@click.option(
    "--images", "image_paths", multiple=True, required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option(
    "--texts", "text_paths", multiple=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option("--pairs", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option(
    "--prompts", "prompt_paths", multiple=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option(
    "--annotations", required=True, type=click.Path(exists=True, dir_okay=False)
)
@click.option("--attr", "attr_name", required=True)
@click.option("--schema", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--k", type=int, default=None, help="Defaults: 5 recall, 1000 maxskew.")
@click.option("--plot", type=click.Path(dir_okay=False), default=None)
@_common_options
@click.pass_context
def groups_audit(ctx, **kwargs):
    """Per-group bias per model, with local-versus-global rank correlations."""
    started = time.perf_counter()
    params = _resolve(ctx, kwargs)
    k = params["k"]
    if k is None:
        k = 5 if params["metric"] == "recall-kl" else 1000
    try:
        assignment = grouping.load_groups(params["groups_path"])
        schema = load_attribute_schema(params["schema"]) if params["schema"] else None
        annotations = load_annotations(params["annotations"], schema)
        attribute = _attribute(annotations, params["attr_name"], params["schema"])
        images = {}
        for path in params["image_paths"]:
            emb = read_embeddings(path)
            images[emb.model_id] = emb

        if params["metric"] == "recall-kl":
            if not params["text_paths"] or not params["pairs"]:
                raise ValueError("recall-kl needs --texts per model and --pairs")
            texts = {}
            for path in params["text_paths"]:
                emb = read_embeddings(path)
                texts[emb.model_id] = emb
            if set(texts) != set(images):
                raise ValueError("image and text files cover different model ids")
            pairs = ret.load_pairs(params["pairs"])

            def closure(model_id):
                corpus = ret.RetrievalCorpus(
                    images=images[model_id], texts=texts[model_id], pairs=pairs
                )

                def metric_on(ids):
                    try:
                        partition = partition_by_demographic(
                            annotations, attribute, ids
                        )
                        return ret.kl_of_recall(
                            ret.recall_at_k(corpus, partition, k)
                        )
                    except ValueError:
                        return None

                return metric_on

        else:
            if not params["prompt_paths"]:
                raise ValueError("maxskew needs --prompts per model")
            prompts = {}
            for path in params["prompt_paths"]:
                emb = read_embeddings(path)
                prompts[emb.model_id] = emb
            if set(prompts) != set(images):
                raise ValueError("image and prompt files cover different model ids")

            def closure(model_id):
                def metric_on(ids):
                    try:
                        partition = partition_by_demographic(
                            annotations, attribute, ids
                        )
                        return ret.mean_max_skew(
                            images[model_id], prompts[model_id], partition, k
                        ).mean
                    except ValueError:
                        return None

                return metric_on

        metric_by_model = {model: closure(model) for model in sorted(images)}
        all_ids = {model: images[model].ids for model in images}
        global_values = {
            model: metric_by_model[model](all_ids[model])
            for model in sorted(images)
        }
        local_values = grouping.per_group_bias(assignment, metric_by_model)
        correlations = grouping.global_local_correlation(
            global_values, local_values, seed=params["seed"]
        )
    except (ValueError, EmbeddingFormatError, OSError) as exc:
        raise click.ClickException(str(exc))

    undefined_reason = "metric undefined on this subset (missing demographic or k)"
    results = {
        "metric": params["metric"],
        "attribute": attribute.name,
        "k": k,
        "models": sorted(images),
        "global": {
            model: rep.metric_value(value, undefined_reason)
            for model, value in global_values.items()
        },
        "per_group": {
            group_id: {
                model: rep.metric_value(value, undefined_reason)
                for model, value in row.items()
            }
            for group_id, row in local_values.items()
        },
        "correlations": {
            name: _correlation_dict(result)
            for name, result in correlations.items()
        },
    }
    report_dict = rep.build_report(
        "groups audit",
        _echo_params(params),
        {
            "groups": params["groups_path"],
            "annotations": params["annotations"],
            "schema": params["schema"],
            "pairs": params["pairs"],
            **{f"images[{i}]": p for i, p in enumerate(params["image_paths"])},
            **{f"texts[{i}]": p for i, p in enumerate(params["text_paths"])},
            **{f"prompts[{i}]": p for i, p in enumerate(params["prompt_paths"])},
        },
        results,
        params["seed"],
        started,
    )
    plot_spec = None
    if params["plot"]:
        models_by_global = sorted(
            images,
            key=lambda m: -(global_values[m] if global_values[m] is not None else -1),
        )
        row_ids = ["global"] + [g.group_id for g in assignment.groups]
        matrix = []
        for row_id in row_ids:
            source = (
                global_values if row_id == "global" else local_values[row_id]
            )
            matrix.append(
                [
                    source[m] if source[m] is not None else float("nan")
                    for m in models_by_global
                ]
            )
        plot_spec = (
            {
                "values": matrix,
                "rows": row_ids,
                "cols": models_by_global,
                "title": f"{params['metric']} by group ({attribute.name})",
            },
            "heatmap",
            params["plot"],
        )
    _finish(report_dict, params["out"], params["fmt"], plot_spec)


def _correlation_dict(result: rankstats.CorrelationResult) -> dict:
    return {
        "rho": rep.metric_value(result.rho, result.reason or "undefined"),
        "p": rep.metric_value(result.p, result.reason or "undefined"),
        "n": result.n,
        "method": result.method,
        "detail": result.detail,
        "strength": result.strength,
    }


# ---------------------------------------------------------------------------
# transfer
# ---------------------------------------------------------------------------


@main.group()
def transfer():
    """Bias-transfer statistics between pre-training and downstream metrics."""


def _load_metric_table(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: metric table must be a JSON object")
    table: dict = {}
    for model, metrics in raw.items():
        if not isinstance(metrics, dict):
            raise ValueError(f"{path}: entry for model {model!r} must be an object")
        table[str(model)] = {
            str(metric): {
                str(attr): (None if value is None else float(value))
                for attr, value in by_attr.items()
            }
            for metric, by_attr in metrics.items()
        }
    return table


@transfer.command("correlate")
@click.option("--pre", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--down", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--cross-attr", "cross_attrs", multiple=True,
    help="Extra attribute pairing PRE:DOWN, e.g. ethnicity:skintone.",
)
@click.option(
    "--method", type=click.Choice(["auto", "t", "exact", "montecarlo"]),
    default="auto", show_default=True,
)
@click.option("--plot", type=click.Path(dir_okay=False), default=None)
@_common_options
@click.pass_context
def transfer_correlate(ctx, **kwargs):
    """Spearman correlation for every metric/attribute combination."""
    started = time.perf_counter()
    params = _resolve(ctx, kwargs)
    try:
        pre = _load_metric_table(params["pre"])
        down = _load_metric_table(params["down"])
        cross = []
        for spec in params["cross_attrs"]:
            if ":" not in spec:
                raise ValueError(f"--cross-attr must look like PRE:DOWN, got {spec!r}")
            left, right = spec.split(":", 1)
            cross.append((left, right))
        sweep = rankstats.correlation_sweep(
            pre, down, cross_attributes=cross,
            method=params["method"], seed=params["seed"],
        )
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    results = {
        "combinations": len(sweep.results) + len(sweep.skipped),
        "results": [
            {
                "pre_metric": e.pre_metric,
                "pre_attr": e.pre_attr,
                "down_metric": e.down_metric,
                "down_attr": e.down_attr,
                **_correlation_dict(e.result),
            }
            for e in sweep.results
        ],
        "skipped": [
            {
                "pre_metric": s.pre_metric,
                "pre_attr": s.pre_attr,
                "down_metric": s.down_metric,
                "down_attr": s.down_attr,
                "reason": s.reason,
            }
            for s in sweep.skipped
        ],
    }
    report_dict = rep.build_report(
        "transfer correlate",
        _echo_params(params),
        {"pre": params["pre"], "down": params["down"]},
        results,
        params["seed"],
        started,
    )
    plot_spec = None
    if params["plot"]:
        rhos = [
            e.result.rho for e in sweep.results if e.result.rho is not None
        ]
        plot_spec = (
            {
                "values": rhos,
                "threshold": rankstats.FAIR_THRESHOLD,
                "x_label": "Spearman rho",
                "title": "correlation sweep",
            },
            "histogram",
            params["plot"],
        )
    _finish(report_dict, params["out"], params["fmt"], plot_spec)


def _load_gap_table(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: gap table must be a JSON object")
    return {
        str(model): {str(demo): float(v) for demo, v in by_demo.items()}
        for model, by_demo in raw.items()
    }


@transfer.command("gaps")
@click.option("--pre", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--down", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--attr", "attr_name", required=True)
@click.option("--schema", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--plot", type=click.Path(dir_okay=False), default=None)
@_common_options
@click.pass_context
def transfer_gaps(ctx, **kwargs):
    """Per-model demographic performance gaps, pre-training vs downstream."""
    started = time.perf_counter()
    params = _resolve(ctx, kwargs)
    try:
        pre = _load_gap_table(params["pre"])
        down = _load_gap_table(params["down"])
        if params["schema"]:
            schema = load_attribute_schema(params["schema"])
            if params["attr_name"] not in schema:
                raise ValueError(
                    f"attribute {params['attr_name']!r} not in {params['schema']}"
                )
            attribute = schema[params["attr_name"]]
        else:
            demos = sorted(
                {d for by_demo in list(pre.values()) + list(down.values())
                 for d in by_demo}
            )
            attribute = ProtectedAttribute(params["attr_name"], tuple(demos))
        points, summary = rankstats.gap_quadrants(pre, down, attribute)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    results = {
        "attribute": attribute.name,
        "demographics": list(attribute.demographics),
        "gap_order": f"{attribute.demographics[0]} - {attribute.demographics[1]}",
        "points": [
            {
                "model": pt.model_id,
                "pre_gap": pt.pre_gap,
                "down_gap": pt.down_gap,
                "quadrant": pt.quadrant,
            }
            for pt in points
        ],
        "summary": summary,
    }
    report_dict = rep.build_report(
        "transfer gaps",
        _echo_params(params),
        {"pre": params["pre"], "down": params["down"], "schema": params["schema"]},
        results,
        params["seed"],
        started,
    )
    plot_spec = None
    if params["plot"]:
        plot_spec = (
            {
                "points": points,
                "x_label": "pre-training gap",
                "y_label": "downstream gap",
                "title": f"gaps for {attribute.name}",
            },
            "scatter",
            params["plot"],
        )
    _finish(report_dict, params["out"], params["fmt"], plot_spec)


# ---------------------------------------------------------------------------
# converge
# ---------------------------------------------------------------------------


@main.group()
def converge():
    """Representation-space convergence analysis."""


@converge.command("compare")
@click.option(
    "--pre", "pre_paths", multiple=True, required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option(
    "--post", "post_paths", multiple=True, required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option("--ids", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--plot", type=click.Path(dir_okay=False), default=None)
@_common_options
@click.pass_context
def converge_compare(ctx, **kwargs):
    """Inter-model similarity of similarity profiles, pre versus post."""
    started = time.perf_counter()
    params = _resolve(ctx, kwargs)
    try:
        with open(params["ids"], "r", encoding="utf-8") as fh:
            id_order = json.load(fh)
        if not isinstance(id_order, list):
            raise ValueError(f"{params['ids']}: must be a JSON list of sample ids")
        id_order = [str(s) for s in id_order]

        def profile_stage(paths, stage):
            profiles = []
            for path in paths:
                embeddings = read_embeddings(path)
                profiles.append(
                    conv.similarity_profile(embeddings, id_order, stage=stage)
                )
            return conv.inter_model_similarity(profiles)

        pre_stats = profile_stage(params["pre_paths"], conv.STAGE_PRE)
        post_stats = profile_stage(params["post_paths"], conv.STAGE_POST)
        summary = conv.convergence_report(pre_stats, post_stats)
    except (ValueError, EmbeddingFormatError, OSError) as exc:
        raise click.ClickException(str(exc))

    def stage_dict(stats: conv.ConvergenceStats) -> dict:
        return {
            "models": list(stats.model_ids),
            "mean": stats.mean,
            "std": stats.std,
            "min": stats.min,
            "max": stats.max,
            "histogram": {
                "edges": [float(e) for e in stats.histogram_edges],
                "counts": [int(c) for c in stats.histogram_counts],
            },
            "matrix": [[float(v) for v in row] for row in stats.matrix],
        }

    results = {
        "pre": stage_dict(pre_stats),
        "post": stage_dict(post_stats),
        "comparison": {
            key: (
                rep.metric_value(value, "zero spread in the reference stage")
                if key in ("z_min_post", "spread_ratio")
                else value
            )
            for key, value in summary.items()
        },
    }
    report_dict = rep.build_report(
        "converge compare",
        _echo_params(params),
        {
            "ids": params["ids"],
            **{f"pre[{i}]": p for i, p in enumerate(params["pre_paths"])},
            **{f"post[{i}]": p for i, p in enumerate(params["post_paths"])},
        },
        results,
        params["seed"],
        started,
    )
    plot_spec = None
    if params["plot"]:
        iu = np.triu_indices(len(pre_stats.model_ids), k=1)
        plot_spec = (
            {
                "values": pre_stats.matrix[iu].tolist()
                + post_stats.matrix[
                    np.triu_indices(len(post_stats.model_ids), k=1)
                ].tolist(),
                "threshold": None,
                "bins": conv.HISTOGRAM_BINS,
                "x_label": "pairwise model similarity (pre + post pooled)",
                "title": "inter-model similarity",
            },
            "histogram",
            params["plot"],
        )
    _finish(report_dict, params["out"], params["fmt"], plot_spec)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


@main.group()
def synth():
    """Synthetic bundles with planted, known bias."""


@synth.command("generate")
@click.option(
    "--spec", "spec_path", type=click.Path(exists=True, dir_okay=False), default=None
)
@click.option("--out", "outdir", required=True, type=click.Path(file_okay=False))
@click.option(
    "--seed", type=int, default=None,
    help="Overrides the seed in the --spec file.",
)
@click.option(
    "--config", type=click.Path(exists=True, dir_okay=False), default=None
)
@click.option(
    "--format", "fmt", type=click.Choice(["json", "csv"]), default="json",
    show_default=True,
)
@click.pass_context
def synth_generate(ctx, **kwargs):
    """Write a bundle of files with known expected metric values."""
    started = time.perf_counter()
    params = _resolve(ctx, kwargs)
    try:
        spec = (
            synthmod.SynthSpec.from_json(params["spec_path"])
            if params["spec_path"]
            else synthmod.SynthSpec()
        )
        if params["seed"] is not None:
            spec = synthmod.SynthSpec.from_dict(
                {**spec.to_dict(), "seed": params["seed"]}
            )
        manifest = synthmod.generate_bundle(spec, params["outdir"])
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    report_dict = rep.build_report(
        "synth generate",
        _echo_params(params),
        {"spec": params["spec_path"]} if params["spec_path"] else {},
        {"outdir": str(params["outdir"]), "manifest": manifest},
        spec.seed,
        started,
    )
    click.echo(rep.emit_report(report_dict, None, params["fmt"]), nl=False)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


@main.command("validate")
@click.option(
    "--embeddings", "paths", multiple=True, required=True,
    type=click.Path(exists=True, dir_okay=False),
)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.option(
    "--format", "fmt", type=click.Choice(["json", "csv"]), default="json",
    show_default=True,
)
def validate(paths, out, fmt):
    """Load embedding files and report diagnostics; exits 0 only when clean."""
    started = time.perf_counter()
    files = {}
    failures = 0
    for path in paths:
        try:
            embeddings = read_embeddings(path)
        except EmbeddingFormatError as exc:
            files[str(path)] = {"ok": False, "code": exc.code, "message": str(exc)}
            failures += 1
        except (ValueError, OSError) as exc:
            files[str(path)] = {"ok": False, "code": "invalid", "message": str(exc)}
            failures += 1
        else:
            files[str(path)] = {
                "ok": True,
                "model_id": embeddings.model_id,
                "count": len(embeddings),
                "dim": embeddings.dim,
            }
    report_dict = rep.build_report(
        "validate",
        {"embeddings": [str(p) for p in paths]},
        {},
        {"files": files, "failures": failures},
        0,
        started,
    )
    text = rep.emit_report(report_dict, out, fmt)
    click.echo(text, nl=False)
    if failures:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
