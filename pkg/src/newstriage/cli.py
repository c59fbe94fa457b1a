"""Operator command line: ingest, train, calibrate, shadow, report, monitor, audit.

Exit codes are a stable contract for scripting:
  0  success
  1  validation problem (bad flags, unreadable inputs)
  2  infeasible or flagged outcome (floor unreachable, drift alert,
     discrepancy flags) — the run itself succeeded
  3  internal error

Every subcommand is a thin wrapper over one module operation; outputs land
only in declared paths, and all randomness sits behind --seed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

from .calibration import (
    CalibrationSample,
    CategoryLabeledItem,
    SelectionMode,
    ThresholdPolicy,
    calibrate_categories,
    load_labeled_items,
    load_scored_items,
    operating_table,
    select_threshold,
)
from .classifier import (
    LabeledExample,
    LinearScorer,
    ScoringError,
    TrainConfig,
    featurize,
    temporal_split,
    train,
)
from .ingestion import ConnectorConfig, Scheduler, manual_upload
from .monitor import (
    DriftRule,
    RetrainingPolicy,
    audit_missing_labels,
    bucket_metrics,
    detect_drift,
    retraining_trigger,
)
from .records import (
    Article,
    Category,
    Language,
    Prediction,
    RecordError,
    ReviewDecision,
    SCORED_LANGUAGES,
    Source,
    read_jsonl,
)
from .shadow import (
    CategoryEval,
    PipelineConfig,
    StageCounts,
    category_discrepancy,
    comparison_report,
    shadow_run,
)
from .store import CorpusStore, consensus_map

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_FLAGGED = 2
EXIT_INTERNAL = 3


def _load_articles(path: Path) -> dict[str, Article]:
    return {a.id: a for a in (Article.from_record(r) for r in read_jsonl(path))}


def _load_decisions(path: Path) -> list[ReviewDecision]:
    return [ReviewDecision.from_record(r) for r in read_jsonl(path)]


def _load_predictions(path: Path) -> dict[str, Prediction]:
    return {p.article_id: p for p in (Prediction.from_record(r) for r in read_jsonl(path))}


# -- ingest -------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace) -> int:
    store = CorpusStore(args.store)
    try:
        if args.manual:
            records = list(read_jsonl(args.manual))
            outcomes = manual_upload(store, records)
            for rec, outcome in zip(records, outcomes):
                print(f"{rec.get('url', '?')}: {outcome}")
            store.sync()
            return EXIT_OK

        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        connectors = [ConnectorConfig.from_record(s).build() for s in raw["sources"]]
        scheduler = Scheduler(store, connectors, Path(args.store) / "cursors.json")
        if args.score:
            scorer = LinearScorer.load(args.artifact)
            scheduler.on_batch = lambda batch: _score_new(store, scorer, batch)
        report = scheduler.run(ticks=args.ticks)
        for sid, rep in sorted(report.per_source.items()):
            line = (
                f"{sid}: fetched={rep.fetched} stored={rep.stored} "
                f"duplicates={rep.duplicates} rejected={rep.rejected}"
            )
            if rep.error:
                line += f" error={rep.error!r} retry_after_s={rep.retry_after_s}"
            print(line)
        print(f"total: fetched={report.fetched} stored={report.stored} store_size={len(store)}")
        print(f"store_digest={store.digest()}")
        if args.report:
            Path(args.report).write_text(
                json.dumps(report.to_record(), indent=2) + "\n", encoding="utf-8"
            )
        return EXIT_OK
    finally:
        store.sync()
        store.close()


def _score_new(store: CorpusStore, scorer: LinearScorer, batch) -> None:
    now = datetime.now(timezone.utc)
    for art in batch:
        if art.language not in SCORED_LANGUAGES:
            continue
        if store.prediction(art.id, scorer.artifact_id) is not None:
            continue
        try:
            store.put_prediction(scorer.score(art, now=now))
        except ScoringError as exc:
            logger.warning("left unscored: %s (%s)", art.id, exc)


# -- train ---------------------------------------------------------------------

def _examples_from_corpus(
    articles: dict[str, Article],
    decisions: list[ReviewDecision],
    dims: int,
    masks: Optional[dict[str, dict[str, Optional[int]]]] = None,
) -> list[LabeledExample]:
    consensus = consensus_map(decisions)
    examples = []
    for aid, art in articles.items():
        dec = consensus.get(aid)
        if dec is None or art.language not in SCORED_LANGUAGES:
            continue
        if masks and aid in masks:
            cats = {Category(k): v for k, v in masks[aid].items()}
        else:
            cats = {c: (1 if c in dec.categories else 0) for c in Category}
        examples.append(
            LabeledExample(
                example_id=aid,
                features=featurize(art.title, art.body, dims),
                relevance=1 if dec.relevant else 0,
                categories=cats,
                timestamp=art.fetched_at,
            )
        )
    return examples


def cmd_train(args: argparse.Namespace) -> int:
    articles = _load_articles(Path(args.corpus))
    decisions = _load_decisions(Path(args.decisions))
    masks = None
    if args.masks:
        masks = json.loads(Path(args.masks).read_text(encoding="utf-8"))
    config = TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, l2=args.l2, seed=args.seed, dims=args.dims
    )
    examples = _examples_from_corpus(articles, decisions, args.dims, masks)
    if len(examples) < 2:
        print("not enough labeled examples to train", file=sys.stderr)
        return EXIT_VALIDATION
    train_set, test_set = temporal_split(examples, args.train_fraction)
    scorer = train(train_set, config)
    scorer.save(args.out)
    print(f"artifact_id={scorer.artifact_id} trained_on={len(train_set)} test={len(test_set)}")
    if scorer.report and scorer.report.untrained_categories:
        names = [c.value for c in scorer.report.untrained_categories]
        print(f"untrained category heads (all cells masked): {names}")

    lang_of = {aid: art.language for aid, art in articles.items()}
    rows = []
    for lang in SCORED_LANGUAGES:
        tp = fp = fn = 0
        # score from stored features directly to stay faithful to training input
        for ex in test_set:
            if lang_of.get(ex.example_id) is not lang:
                continue
            score = scorer._head_score(ex.features, scorer.relevance_w, scorer.relevance_b)
            predicted = score >= 0.5
            actual = ex.relevance == 1
            if predicted and actual:
                tp += 1
            elif predicted:
                fp += 1
            elif actual:
                fn += 1
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if denom else None
        rows.append((lang.value, tp, fp, fn, f1))
        print(f"test relevance {lang.value}: tp={tp} fp={fp} fn={fn} f1={f1 if f1 is None else round(f1, 3)}")
    if args.metrics:
        with Path(args.metrics).open("w", encoding="utf-8") as fh:
            fh.write("language,tp,fp,fn,f1\n")
            for lang, tp, fp, fn, f1 in rows:
                fh.write(f"{lang},{tp},{fp},{fn},{'' if f1 is None else round(f1, 4)}\n")
    return EXIT_OK


# -- calibrate -------------------------------------------------------------------

def _load_category_items(path: Path) -> list[CategoryLabeledItem]:
    items = []
    for rec in read_jsonl(path):
        items.append(
            CategoryLabeledItem(
                article_id=str(rec["article_id"]),
                category_scores={Category(k): float(v) for k, v in rec["category_scores"].items()},
                categories=frozenset(Category(c) for c in rec.get("categories", [])),
                weight=float(rec.get("weight", 1.0)),
            )
        )
    return items


def cmd_calibrate(args: argparse.Namespace) -> int:
    if args.categories:
        items = _load_category_items(Path(args.sample))
        results = calibrate_categories(items, floor=args.floor)
        worst = EXIT_OK
        for cat, result in results.items():
            if result.no_labels:
                print(f"{cat.value}: INFEASIBLE (no positive labels)")
                worst = EXIT_FLAGGED
            elif not result.feasible:
                miss = result.selection.nearest_miss
                print(
                    f"{cat.value}: INFEASIBLE (nearest miss t={miss.threshold:.3f} "
                    f"precision={miss.precision:.3f})"
                )
                worst = EXIT_FLAGGED
            else:
                sel = result.selection.selected
                print(f"{cat.value}: threshold={sel.threshold:.6g} precision={sel.precision:.3f}")
        if args.update_policy and worst == EXIT_OK:
            policy = ThresholdPolicy.load(args.update_policy)
            for cat, result in results.items():
                policy.categories[cat] = result.threshold
            policy.save(args.update_policy)
        return worst

    labeled = load_labeled_items(Path(args.sample))
    language = Language(args.language)
    labeled = [it for it in labeled if it.language is language]
    if not labeled:
        print(f"sample has no rows for language {args.language}", file=sys.stderr)
        return EXIT_VALIDATION
    stream = None
    if args.predictions:
        stream = tuple(
            it for it in load_scored_items(Path(args.predictions)) if it.language is language
        )
    sample = CalibrationSample(
        labeled=tuple(labeled),
        stream=stream,
        window_days=args.window_days,
        sample_id=str(args.sample),
    )
    thresholds = (
        [float(t) for t in args.thresholds.split(",")] if args.thresholds else None
    )
    table = operating_table(sample, thresholds=thresholds)
    mode = SelectionMode(args.mode)
    selection = select_threshold(table, mode, args.floor)

    if args.out:
        from .reports import write_operating_report

        write_operating_report(
            table,
            Path(args.out),
            selection,
            label=f"calibration_{language.value}",
            figures=not args.no_figures,
        )
    from .reports import operating_table_text

    print(operating_table_text(table if len(table) <= 30 else _thin_table(table, selection)), end="")
    if not selection.feasible:
        miss = selection.nearest_miss
        print(
            f"INFEASIBLE: no threshold meets {mode.value} floor {args.floor}; "
            f"nearest miss t={miss.threshold:.6g} precision={miss.precision:.3f} "
            f"recall={miss.recall:.3f}" if miss else "INFEASIBLE: no candidates"
        )
        return EXIT_FLAGGED
    sel = selection.selected
    print(
        f"selected threshold={sel.threshold:.6g} precision={sel.precision:.3f} "
        f"recall={sel.recall:.3f} volume/week={sel.weekly_volume}"
    )
    if args.baseline_weekly:
        from .calibration import Multiplier

        mult = Multiplier(float(sel.weekly_volume), float(args.baseline_weekly))
        print(
            f"volume multiplier vs baseline {args.baseline_weekly}/week: "
            f"{mult.label} (floor {mult.floor_int}x, nearest {mult.nearest_int}x)"
        )
    if args.update_policy:
        policy = ThresholdPolicy.load(args.update_policy)
        policy.relevance[language] = sel.threshold
        policy.provenance[f"relevance_{language.value}"] = {
            "sample": str(args.sample),
            "mode": mode.value,
            "floor": args.floor,
        }
        policy.save(args.update_policy)
    return EXIT_OK


def _thin_table(table, selection):
    keep = {0, len(table) - 1}
    step = max(1, len(table) // 20)
    keep.update(range(0, len(table), step))
    if selection.feasible:
        keep.update(i for i, p in enumerate(table) if p.threshold == selection.selected.threshold)
    return [table[i] for i in sorted(keep)]


# -- shadow ---------------------------------------------------------------------

def _load_pipeline_side(path: Path) -> tuple[PipelineConfig, Any]:
    raw = json.loads(path.read_text(encoding="utf-8"))
    policy = ThresholdPolicy.load(raw["policy_path"])
    sources = frozenset(Source(s) for s in raw["sources"])
    if "artifact_path" in raw:
        scorer_obj = LinearScorer.load(raw["artifact_path"])
        artifact_id = scorer_obj.artifact_id
        scorer = lambda art: scorer_obj.score(art)
    else:
        preds = _load_predictions(Path(raw["predictions_path"]))
        artifact_id = raw.get("artifact_id") or next(iter(preds.values())).artifact_id
        def scorer(art, _preds=preds):
            p = _preds.get(art.id)
            if p is None:
                raise ScoringError(f"no recorded prediction for {art.id}")
            return p
    config = PipelineConfig(
        label=raw.get("label", path.stem),
        artifact_id=artifact_id,
        policy=policy,
        enabled_sources=sources,
    )
    return config, scorer


def cmd_shadow(args: argparse.Namespace) -> int:
    articles = _load_articles(Path(args.stream))
    decisions = consensus_map(_load_decisions(Path(args.decisions))) if args.decisions else {}
    baseline_cfg, baseline_scorer = _load_pipeline_side(Path(args.baseline_config))
    candidate_cfg, candidate_scorer = _load_pipeline_side(Path(args.candidate_config))
    scorers = {
        baseline_cfg.artifact_id: baseline_scorer,
        candidate_cfg.artifact_id: candidate_scorer,
    }
    stream = sorted(articles.values(), key=lambda a: (a.fetched_at, a.id))
    base_counts, cand_counts = shadow_run(
        stream, baseline_cfg, candidate_cfg, scorers, decisions, period_days=args.period_days
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base_counts.save(out / "baseline_counts.json")
    cand_counts.save(out / "candidate_counts.json")
    for counts in (base_counts, cand_counts):
        print(
            f"{counts.label}: crawled={counts.crawled} predicted={counts.predicted_total} "
            f"reviewed={counts.reviewed_total} confirmed={counts.confirmed_total}"
        )
    return EXIT_OK


# -- report ----------------------------------------------------------------------

def cmd_report(args: argparse.Namespace) -> int:
    baseline = StageCounts.load(Path(args.baseline))
    deployment = StageCounts.load(Path(args.deployment))
    report = comparison_report(baseline, deployment)
    from .reports import comparison_text, discrepancy_csv, discrepancy_text, write_comparison_report

    print(comparison_text(report), end="")
    print(
        f"confirmed multiplier: {report.confirmed.label} "
        f"(review effort {report.review_effort.label}, crawled {report.crawled.label}, "
        f"predicted {report.predicted.label})"
    )
    if args.out:
        write_comparison_report(report, Path(args.out), figures=not args.no_figures)

    flagged = False
    if args.offline and args.live:
        cells = category_discrepancy(
            CategoryEval.load(Path(args.offline)), CategoryEval.load(Path(args.live)), gap=args.gap
        )
        print(discrepancy_text(cells), end="")
        if args.out:
            discrepancy_csv(cells, Path(args.out) / "category_discrepancy.csv")
        flagged = any(c.flagged for c in cells)
        for c in cells:
            if c.flagged:
                print(
                    f"FLAG {c.category.value}/{c.language.value}: "
                    f"offline={c.offline_f1} live={c.live_f1} ({c.flag.value})"
                )
    return EXIT_FLAGGED if flagged else EXIT_OK


# -- monitor ----------------------------------------------------------------------

def cmd_monitor(args: argparse.Namespace) -> int:
    articles = _load_articles(Path(args.articles))
    predictions = _load_predictions(Path(args.predictions))
    decisions = consensus_map(_load_decisions(Path(args.decisions)))
    policy = ThresholdPolicy.load(Path(args.policy))
    buckets = bucket_metrics(articles, predictions, decisions, policy)
    rule = DriftRule(delta=args.delta, min_support=args.min_support)
    drift = detect_drift(buckets, rule)
    fresh = args.fresh_labels if args.fresh_labels is not None else len(decisions)
    recommendation = retraining_trigger(
        drift.alerts, fresh, RetrainingPolicy(min_fresh_labels=args.min_fresh_labels)
    )

    from .reports import write_monitor_report

    out = Path(args.out)
    paths = write_monitor_report(buckets, drift, out, figures=not args.no_figures)
    (out / "retraining.json").write_text(
        json.dumps(recommendation.to_record(), indent=2) + "\n", encoding="utf-8"
    )
    for b in buckets:
        print(
            f"{b.period} {b.language.value}: reviewed={b.reviewed} confirmed={b.confirmed} "
            f"precision={'-' if b.precision is None else f'{b.precision:.3f}'}"
        )
    for alert in drift.alerts:
        print(alert.log_line())
    print(
        f"retraining: trigger={recommendation.trigger} reason={recommendation.reason!r} "
        f"(details in {paths['alerts'].parent / 'retraining.json'})"
    )
    return EXIT_FLAGGED if drift.alerts else EXIT_OK


# -- audit -----------------------------------------------------------------------

def cmd_audit(args: argparse.Namespace) -> int:
    predictions = _load_predictions(Path(args.predictions))
    decisions = consensus_map(_load_decisions(Path(args.decisions)))
    category = Category(args.category)
    queue = audit_missing_labels(predictions, decisions, category, args.threshold)
    if args.out:
        with Path(args.out).open("w", encoding="utf-8") as fh:
            fh.write("article_id,category,score\n")
            for entry in queue:
                fh.write(f"{entry.article_id},{category.value},{entry.score:.4f}\n")
    for entry in queue:
        print(f"{entry.article_id} {category.value} score={entry.score:.3f} (no label)")
    print(f"{len(queue)} candidate missing labels at threshold {args.threshold}")
    return EXIT_OK


# -- serve -----------------------------------------------------------------------

def cmd_serve(args: argparse.Namespace) -> int:
    from .service import ConfigError, ServiceConfig, serve

    try:
        config = ServiceConfig.from_file(args.config)
        serve(config)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem['field']}: {problem['message']}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newstriage")
    parser.add_argument("--seed", type=int, default=0, help="seed for any randomized step")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="run source connectors against a store")
    p.add_argument("--config", help="JSON config with a 'sources' list")
    p.add_argument("--store", required=True)
    p.add_argument("--ticks", type=int, default=1)
    p.add_argument("--score", action="store_true", help="score newly stored articles")
    p.add_argument("--artifact", help="scorer artifact for --score")
    p.add_argument("--manual", help="JSONL of records to manual-upload instead of polling")
    p.add_argument("--report", help="write the ingestion report JSON here")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train the reference scorer on a labeled corpus")
    p.add_argument("--corpus", required=True, help="article records JSONL")
    p.add_argument("--decisions", required=True, help="review decision JSONL")
    p.add_argument("--masks", help="optional per-article category mask JSON")
    p.add_argument("--out", required=True, help="artifact output path")
    p.add_argument("--metrics", help="write per-language test metrics CSV here")
    p.add_argument("--dims", type=int, default=2**20)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="operating table + threshold selection")
    p.add_argument("--sample", required=True, help="scored labeled sample JSONL")
    p.add_argument("--predictions", help="full staging prediction stream JSONL (for volumes)")
    p.add_argument("--language", default="en")
    p.add_argument("--mode", default="min-precision",
                   choices=[m.value for m in SelectionMode])
    p.add_argument("--floor", type=float, default=0.9)
    p.add_argument("--window-days", type=float, default=14.0)
    p.add_argument("--thresholds", help="comma-separated candidate thresholds (default: sweep)")
    p.add_argument("--categories", action="store_true",
                   help="treat --sample as category items; one threshold per category")
    p.add_argument("--baseline-weekly", type=int,
                   help="baseline weekly review volume for the multiplier line")
    p.add_argument("--update-policy", help="write selected thresholds into this policy file")
    p.add_argument("--out", help="report directory (CSV/TXT/PNG)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("shadow", help="run baseline and candidate over one stream")
    p.add_argument("--stream", required=True, help="article records JSONL")
    p.add_argument("--decisions", help="review decisions JSONL")
    p.add_argument("--baseline-config", required=True)
    p.add_argument("--candidate-config", required=True)
    p.add_argument("--period-days", type=float, default=7.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_shadow)

    p = sub.add_parser("report", help="post-deployment comparison report")
    p.add_argument("--baseline", required=True, help="baseline StageCounts JSON")
    p.add_argument("--deployment", required=True, help="deployment StageCounts JSON")
    p.add_argument("--offline", help="offline per-category F1 JSON")
    p.add_argument("--live", help="live per-category F1 JSON")
    p.add_argument("--gap", type=float, default=0.2)
    p.add_argument("--out", help="report directory")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("monitor", help="bucketed live precision + drift detection")
    p.add_argument("--articles", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--decisions", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--min-support", type=int, default=10)
    p.add_argument("--min-fresh-labels", type=int, default=200)
    p.add_argument("--fresh-labels", type=int, help="override the fresh-label count")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("audit", help="high-score missing-label audit queue")
    p.add_argument("--predictions", required=True)
    p.add_argument("--decisions", required=True)
    p.add_argument("--category", required=True, choices=[c.value for c in Category])
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--out", help="write the queue CSV here")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("serve", help="run the HTTP service in the foreground")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_serve)

    return parser


def run(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (RecordError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # anything else is an internal failure
        logger.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
