"""Command-line surface.

Every command is deterministic given its flags and seeds; reports carry
no timestamps, so reruns overwrite outputs byte-identically. Exit codes:
0 success, 1 validation failure, 2 runtime error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import __version__
from .contrastive import load_batch_fixture, loss_report
from .corpus import (
    ConceptStrategy,
    is_blc,
    label_by_linking,
    load_corpus,
    load_linking,
    select_common,
    select_long_tailed,
    write_entities,
    write_images,
    write_pairs,
    PairRecord,
)
from .errors import CogError, ValidationError
from .evaluation import ExperimentConfig, run_experiment, write_report_csv
from .fusion import ground_pair, rank_candidates
from .scorer import CachingScorer, RemoteScorer, SyntheticWorldConfig, make_synthetic_scorer
from .service import ServiceSettings, create_app
from .worldgen import make_synthetic_corpus


def _read_config_file(ctx, param, value):
    """key=value lines become defaults for every subcommand; flags win."""
    if not value:
        return value
    defaults = {}
    for line_no, line in enumerate(Path(value).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.BadParameter(f"{value}:{line_no}: expected key=value")
        key, _, raw = line.partition("=")
        defaults[key.strip().replace("-", "_")] = raw.strip()
    commands = ctx.command.commands if ctx.command else {}
    ctx.default_map = {name: dict(defaults) for name in commands}
    return value


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except CogError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)

    return wrapper


corpus_options = [
    click.option("--entities", "entities_path", required=True, type=click.Path(exists=True, dir_okay=False)),
    click.option("--images", "images_path", required=True, type=click.Path(exists=True, dir_okay=False)),
    click.option("--pairs", "pairs_path", type=click.Path(exists=True, dir_okay=False)),
]

scorer_options = [
    click.option("--scorer", "scorer_mode", type=click.Choice(["synthetic", "remote"]), default="synthetic", show_default=True),
    click.option("--scorer-url", envvar="COG_SCORER_URL", help="Remote scorer base URL."),
    click.option("--scorer-timeout-ms", envvar="COG_SCORER_TIMEOUT_MS", type=int, default=10_000, show_default=True),
    click.option("--scorer-retries", type=int, default=2, show_default=True),
    click.option("--scorer-seed", type=int, default=0, show_default=True, help="Synthetic scorer noise seed."),
    click.option("--noise-sigma", type=float, default=0.0, show_default=True),
    click.option("--name-weight", type=float, default=4.0, show_default=True),
    click.option("--concept-weight", type=float, default=4.0, show_default=True),
]


def add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


def _build_scorer(corpus, scorer_mode, scorer_url, scorer_timeout_ms, scorer_retries,
                  scorer_seed, noise_sigma, name_weight, concept_weight):
    if scorer_mode == "synthetic":
        config = SyntheticWorldConfig(
            seed=scorer_seed,
            noise_sigma=noise_sigma,
            name_weight=name_weight,
            concept_weight=concept_weight,
        )
        return CachingScorer(make_synthetic_scorer(corpus, config))
    if not scorer_url:
        raise ValidationError("remote scorer needs --scorer-url or COG_SCORER_URL")
    return CachingScorer(
        RemoteScorer(scorer_url, timeout_ms=scorer_timeout_ms, retries=scorer_retries)
    )


@click.group()
@click.version_option(version=__version__, prog_name="cogground", message="%(prog)s %(version)s")
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              callback=_read_config_file, expose_value=False, is_eager=True,
              help="key=value file supplying defaults for any flag.")
def main():
    """Concept-guided grounding of long-tailed entities to images."""


@main.command()
@add_options(corpus_options)
@click.option("--linking", "linking_path", type=click.Path(exists=True, dir_okay=False),
              help="Relabel pairs from short-text entity-linker output.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@guarded
def ingest(entities_path, images_path, pairs_path, linking_path, out_dir):
    """Validate a corpus and write a normalized bundle plus statistics."""
    corpus = load_corpus(entities_path, images_path, pairs_path)
    pairs = list(corpus.pairs)
    if linking_path:
        linking = load_linking(linking_path)
        relabeled = []
        for pair in pairs:
            if pair.image_id in linking:
                entity = corpus.entity(pair.entity_id)
                label = label_by_linking(linking[pair.image_id], entity.name)
                relabeled.append(PairRecord(pair.entity_id, pair.image_id, label))
            else:
                relabeled.append(pair)
        pairs = relabeled

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_entities(out / "entities.jsonl", corpus.entities)
    write_images(out / "images.jsonl", corpus.images)
    write_pairs(out / "pairs.jsonl", pairs)

    distinct = {c for e in corpus.entities for c in e.concepts}
    blc = {c for c in distinct if is_blc(c)}
    n = len(corpus.entities)
    summary = {
        "entities": n,
        "images": len(corpus.images),
        "pairs": len(pairs),
        "total_concepts": len(distinct),
        "blc_concepts": len(blc),
        "avg_concepts_per_entity": round(
            sum(len(e.concepts) for e in corpus.entities) / n, 2
        ),
        "avg_blc_concepts_per_entity": round(
            sum(sum(1 for c in e.concepts if is_blc(c)) for e in corpus.entities) / n, 2
        ),
        "long_tailed_entities": len(select_long_tailed(corpus)),
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    click.echo(json.dumps(summary, indent=2, sort_keys=True))


@main.command("select-longtail")
@click.option("--entities", "entities_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--threshold", type=int, default=100_000, show_default=True)
@click.option("--mode", type=click.Choice(["below", "above"]), default="below",
              show_default=True, help="below: long-tailed; above: common entities.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False))
@guarded
def select_longtail(entities_path, threshold, mode, out_path):
    """Filter entities by viewtimes."""
    from .corpus import load_entities

    entities = load_entities(entities_path)
    selected = (
        select_long_tailed(entities, threshold)
        if mode == "below"
        else select_common(entities, threshold)
    )
    if out_path:
        write_entities(out_path, selected)
    click.echo(f"{len(selected)} of {len(entities)} entities {mode} {threshold}")


@main.command()
@add_options(corpus_options)
@add_options(scorer_options)
@click.option("--strategy", type=click.Choice(["none", "blc", "all"]), default="all", show_default=True)
@click.option("--stages", type=click.Choice(["1", "1+2"]), default="1+2", show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--stage2-threshold", type=float)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--split/--no-split", default=True, show_default=True,
              help="Evaluate the 8:1:1 test slice vs. the whole pair set.")
@click.option("--ranking/--no-ranking", "include_ranking", default=True, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--csv", "write_csv", is_flag=True, help="Also write report.csv.")
@guarded
def experiment(entities_path, images_path, pairs_path, scorer_mode, scorer_url,
               scorer_timeout_ms, scorer_retries, scorer_seed, noise_sigma,
               name_weight, concept_weight, strategy, stages, threshold,
               stage2_threshold, seed, split, include_ranking, threads, out_dir,
               write_csv):
    """Run the ranking/classification protocols and write a report."""
    if pairs_path is None:
        raise ValidationError("experiment needs --pairs")
    corpus = load_corpus(entities_path, images_path, pairs_path)
    scorer = _build_scorer(corpus, scorer_mode, scorer_url, scorer_timeout_ms,
                           scorer_retries, scorer_seed, noise_sigma, name_weight,
                           concept_weight)
    config = ExperimentConfig(
        strategy=ConceptStrategy.parse(strategy),
        use_stage2=(stages == "1+2"),
        threshold=threshold,
        stage2_threshold=stage2_threshold,
        seed=seed,
        split=split,
        include_ranking=include_ranking,
        max_workers=threads,
    )
    result = run_experiment(corpus, scorer, config)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(result.report.to_json() + "\n", encoding="utf-8")
    with open(out / "verdicts.jsonl", "w", encoding="utf-8") as fh:
        for verdict in result.verdicts:
            fh.write(verdict.to_json() + "\n")
    label = f"{scorer_mode}/{strategy}/stage{stages}"
    if write_csv:
        write_report_csv(result.report, out / "report.csv", label=label)
    click.echo(f"{label}: {json.dumps(result.report.to_dict()['table'])}")


@main.command()
@add_options(corpus_options)
@add_options(scorer_options)
@click.option("--entity-id", required=True)
@click.option("--candidates", help="Comma-separated image ids; defaults to all images.")
@click.option("--strategy", type=click.Choice(["none", "blc", "all"]), default="all", show_default=True)
@guarded
def rank(entities_path, images_path, pairs_path, scorer_mode, scorer_url,
         scorer_timeout_ms, scorer_retries, scorer_seed, noise_sigma, name_weight,
         concept_weight, entity_id, candidates, strategy):
    """Rank candidate images for one entity."""
    corpus = load_corpus(entities_path, images_path, pairs_path)
    scorer = _build_scorer(corpus, scorer_mode, scorer_url, scorer_timeout_ms,
                           scorer_retries, scorer_seed, noise_sigma, name_weight,
                           concept_weight)
    entity = corpus.entity(entity_id)
    if candidates:
        refs = [corpus.image(cid.strip()) for cid in candidates.split(",") if cid.strip()]
    else:
        refs = list(corpus.images)
    ranked = rank_candidates(entity, refs, scorer, ConceptStrategy.parse(strategy))
    click.echo(json.dumps(
        [{"image_id": img.id, "prediction": pred} for img, pred in ranked]
    ))


@main.command()
@add_options(corpus_options)
@add_options(scorer_options)
@click.option("--entity-id", required=True)
@click.option("--image-id", "image_ids", multiple=True, required=True)
@click.option("--strategy", type=click.Choice(["none", "blc", "all"]), default="all", show_default=True)
@click.option("--stages", type=click.Choice(["1", "1+2"]), default="1+2", show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@guarded
def classify(entities_path, images_path, pairs_path, scorer_mode, scorer_url,
             scorer_timeout_ms, scorer_retries, scorer_seed, noise_sigma,
             name_weight, concept_weight, entity_id, image_ids, strategy, stages,
             threshold):
    """Run the two-stage pipeline on explicit (entity, image) pairs."""
    from .corpus import compute_concept_stats

    corpus = load_corpus(entities_path, images_path, pairs_path)
    scorer = _build_scorer(corpus, scorer_mode, scorer_url, scorer_timeout_ms,
                           scorer_retries, scorer_seed, noise_sigma, name_weight,
                           concept_weight)
    stats = compute_concept_stats(list(corpus.entities))
    entity = corpus.entity(entity_id)
    for image_id in image_ids:
        verdict = ground_pair(
            entity,
            corpus.image(image_id),
            scorer,
            stats,
            ConceptStrategy.parse(strategy),
            threshold,
            use_stage2=(stages == "1+2"),
        )
        click.echo(verdict.to_json())


@main.command("loss-check")
@click.option("--fixture", "fixture_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tolerance", type=float, default=1e-9, show_default=True)
@guarded
def loss_check(fixture_path, tolerance):
    """Check the contrastive-loss computation against a batch fixture."""
    batch, expected = load_batch_fixture(fixture_path)
    report = loss_report(batch)
    click.echo(json.dumps(report.to_dict(), sort_keys=True))
    if not expected:
        click.echo("fixture has no expected values; nothing to compare")
        return
    deviations = {
        key: abs(report.to_dict()[key] - value)
        for key, value in expected.items()
        if key in report.to_dict()
    }
    max_dev = max(deviations.values()) if deviations else 0.0
    click.echo(f"max absolute deviation: {max_dev:.3e}")
    if max_dev > tolerance:
        click.echo(f"FAIL (tolerance {tolerance:g})", err=True)
        sys.exit(1)
    click.echo("PASS")


@main.command("make-world")
@click.option("--n-entities", type=int, default=600, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--distractor-overlap", type=float, default=0.25, show_default=True)
@click.option("--distractors/--no-distractors", default=True, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@guarded
def make_world(n_entities, seed, distractor_overlap, distractors, out_dir):
    """Generate a synthetic labeled corpus for desk-scale experiments."""
    config = SyntheticWorldConfig(seed=seed, distractor_overlap=distractor_overlap)
    corpus = make_synthetic_corpus(
        config, n_entities=n_entities, include_distractors=distractors
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_entities(out / "entities.jsonl", corpus.entities)
    write_images(out / "images.jsonl", corpus.images)
    write_pairs(out / "pairs.jsonl", corpus.pairs)
    click.echo(
        f"wrote {len(corpus.entities)} entities, {len(corpus.images)} images, "
        f"{len(corpus.pairs)} pairs to {out}"
    )


@main.command()
@add_options(corpus_options)
@add_options(scorer_options)
@click.option("--strategy", type=click.Choice(["none", "blc", "all"]), default="all", show_default=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--decision-log", default="decisions.log", show_default=True, type=click.Path(dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--api-token", envvar="COG_API_TOKEN")
@click.option("--ui-dir", type=click.Path(file_okay=False))
@guarded
def serve(entities_path, images_path, pairs_path, scorer_mode, scorer_url,
          scorer_timeout_ms, scorer_retries, scorer_seed, noise_sigma, name_weight,
          concept_weight, strategy, threshold, decision_log, host, port, api_token,
          ui_dir):
    """Run the grounding/verification HTTP service."""
    import uvicorn

    settings = ServiceSettings(
        entities_path=entities_path,
        images_path=images_path,
        pairs_path=pairs_path,
        decision_log=decision_log,
        scorer_mode=scorer_mode,
        scorer_url=scorer_url,
        scorer_timeout_ms=scorer_timeout_ms,
        scorer_retries=scorer_retries,
        strategy=ConceptStrategy.parse(strategy),
        threshold=threshold,
        synthetic=SyntheticWorldConfig(
            seed=scorer_seed,
            noise_sigma=noise_sigma,
            name_weight=name_weight,
            concept_weight=concept_weight,
        ),
        api_token=api_token,
        ui_dir=ui_dir,
    )
    app = create_app(settings)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
