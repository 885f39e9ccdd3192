"""Pipeline orchestration: ingest -> classify -> match -> stats, plus
evaluation, agreement, and the annotation server.

Every subcommand snapshots its configuration and input digests into a run
manifest next to its outputs, and manifests chain: the stats manifest records
the digest of the match manifest it consumed.  Outputs are pure functions of
(inputs, config, lexicon version); a failed run removes its partial outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .annotation import GoldSet, pairwise_agreement, evaluate_matcher
from .classifier import (
    ClassifierError,
    FeatureConfig,
    GridSearchSpec,
    LABEL_POSITIVE,
    LabeledPost,
    import_external_labels,
    train,
)
from .corpus import (
    CorpusError,
    KeywordFilterConfig,
    collapse_by_user,
    ingest_posts,
    keyword_filter,
    read_profiles,
    write_profiles,
)
from .lexicon import LexiconError, load_lexicon
from .matcher import LexiconMatcher, MatcherConfig, read_matches, write_matches
from .stats import (
    StatsConfig,
    association_report,
    build_signatures,
    prevalence_table,
    write_association_csv,
    write_heatmap_csv,
    write_pairwise_csv,
    write_prevalence_csv,
    write_report_json,
)
from .workspace import Workspace

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    posts_path: str
    lexicon_path: str | None = None
    workspace: str = "workspace"
    out_dir: str = "out"
    keywords: tuple[str, ...] = ()
    include_hashtag_forms: bool = True
    features: FeatureConfig = field(default_factory=FeatureConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    classifier_mode: str = "external_labels"  # "train" | "external_labels"
    labels_path: str | None = None
    train_path: str | None = None
    grid: GridSearchSpec = field(default_factory=GridSearchSpec)
    gold_path: str | None = None
    round_path: str | None = None
    seed: int = 0
    port: int = 8765

    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        paths = doc.get("paths", {})
        classifier = doc.get("classifier", {})
        mode = classifier.get("mode", "external_labels")
        if mode not in ("train", "external_labels"):
            raise ConfigError(f"classifier.mode must be 'train' or 'external_labels', got {mode!r}")
        try:
            features = FeatureConfig(**doc.get("features", {}))
            matcher_doc = dict(doc.get("matcher", {}))
            triggers_path = matcher_doc.pop("negation_triggers_path", None)
            if triggers_path:
                lines = Path(triggers_path).read_text(encoding="utf-8").splitlines()
                matcher_doc["negation_triggers"] = tuple(
                    t.strip() for t in lines if t.strip() and not t.startswith("#")
                )
            matcher = MatcherConfig(**matcher_doc)
            stats = StatsConfig(**doc.get("stats", {}))
            grid_doc = dict(classifier.get("grid", {}))
            if "ngram_ranges" in grid_doc:
                grid_doc["ngram_ranges"] = tuple(tuple(r) for r in grid_doc["ngram_ranges"])
            if "l2_penalties" in grid_doc:
                grid_doc["l2_penalties"] = tuple(grid_doc["l2_penalties"])
            grid = GridSearchSpec(**grid_doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(
            posts_path=paths.get("posts", ""),
            lexicon_path=paths.get("lexicon"),
            workspace=paths.get("workspace", "workspace"),
            out_dir=paths.get("out", "out"),
            keywords=tuple(doc.get("keywords", ())),
            include_hashtag_forms=bool(doc.get("include_hashtag_forms", True)),
            features=features,
            matcher=matcher,
            stats=stats,
            classifier_mode=mode,
            labels_path=classifier.get("labels_path"),
            train_path=classifier.get("train_path"),
            grid=grid,
            gold_path=paths.get("gold"),
            round_path=paths.get("round"),
            seed=int(doc.get("seed", 0)),
            port=int(doc.get("port", 8765)),
            raw=doc,
        )

    def require_paths(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if not value:
                raise ConfigError(f"config is missing required path {name!r}")
            if not Path(value).exists():
                raise ConfigError(f"{name} path does not exist: {value}")

    def snapshot(self) -> dict:
        doc = dict(self.raw)
        doc.setdefault("paths", {})
        doc["resolved"] = {
            "classifier_mode": self.classifier_mode,
            "similarity_threshold": self.matcher.similarity_threshold,
            "alpha": self.stats.alpha,
            "seed": self.seed,
        }
        return doc


# ---------------------------------------------------------------------------
# Run manifests


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_digest(manifest: dict) -> str:
    content = {k: v for k, v in manifest.items() if k != "created_at"}
    return hashlib.sha256(
        json.dumps(content, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def write_manifest(
    subcommand: str,
    out_dir: Path,
    config: PipelineConfig,
    inputs: dict[str, str],
    outputs: dict[str, str],
    extra: dict | None = None,
) -> Path:
    manifest = {
        "subcommand": subcommand,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "tool_version": __version__,
        "config": config.snapshot(),
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in inputs.items()},
        "outputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in outputs.items()},
    }
    if extra:
        manifest.update(extra)
    manifest["digest"] = manifest_digest(manifest)
    path = out_dir / f"{subcommand}.manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


class _OutputTracker:
    """Collects files created by a run so they can be removed on failure."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.paths.append(p)
        return p

    def cleanup(self) -> None:
        for p in self.paths:
            if p.exists():
                p.unlink()


# ---------------------------------------------------------------------------
# Subcommands


def _load_lexicon(config: PipelineConfig):
    if config.lexicon_path:
        return load_lexicon(config.lexicon_path)
    ws = Workspace(config.workspace)
    ws.initialize()
    return ws.current_lexicon()


def cmd_ingest(config: PipelineConfig, out: _OutputTracker) -> dict:
    config.require_paths("posts_path")
    collection = ingest_posts(config.posts_path)
    keywords = config.keywords or None
    cfg = (
        KeywordFilterConfig(keywords=keywords, include_hashtag_forms=config.include_hashtag_forms)
        if keywords
        else KeywordFilterConfig(include_hashtag_forms=config.include_hashtag_forms)
    )
    filtered = keyword_filter(collection, cfg)
    profiles = collapse_by_user(filtered)
    profiles_path = out.path("profiles.ldjson")
    write_profiles(profiles, profiles_path)
    report_path = out.path("ingest_report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "report": collection.report.to_dict(),
                "kept_after_keyword_filter": len(filtered),
                "profiles": len(profiles),
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    return {
        "inputs": {"posts": config.posts_path},
        "outputs": {"profiles": profiles_path, "ingest_report": report_path},
    }


def cmd_classify(config: PipelineConfig, out: _OutputTracker) -> dict:
    config.require_paths("posts_path")
    collection = ingest_posts(config.posts_path)
    post_user = {p.id: p.user_id for p in collection}
    inputs = {"posts": config.posts_path}
    extra: dict = {}

    if config.classifier_mode == "external_labels":
        if not config.labels_path:
            raise ConfigError("external_labels mode requires classifier.labels_path")
        config_path = Path(config.labels_path)
        if not config_path.exists():
            raise ConfigError(f"labels file does not exist: {config.labels_path}")
        labels, report = import_external_labels(config.labels_path, set(post_user))
        inputs["labels"] = config.labels_path
        extra["label_import"] = {
            "parsed": report.parsed,
            "rejected": report.rejected,
            "overwritten": report.overwritten,
            "unknown_post_ids": report.unknown_post_ids,
        }
    else:
        if not config.train_path:
            raise ConfigError("train mode requires classifier.train_path")
        if not Path(config.train_path).exists():
            raise ConfigError(f"training file does not exist: {config.train_path}")
        rows = []
        with open(config.train_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    doc = json.loads(line)
                    rows.append((doc["text"], doc["label"]))
        model, cv_report = train(rows, replace(config.grid, seed=config.seed), config.features)
        model_path = out.path("model.json")
        model.save(model_path)
        inputs["training_data"] = config.train_path
        extra["cv"] = {
            "best": {
                "l2": cv_report.best.l2,
                "ngram_range": list(cv_report.best.ngram_range),
                "mean_f1": cv_report.best.mean_f1,
            },
            "cells": [
                {
                    "l2": c.l2,
                    "ngram_range": list(c.ngram_range),
                    "mean_f1": c.mean_f1,
                    "std_f1": c.std_f1,
                }
                for c in cv_report.cells
            ],
        }
        # Classify every ingested post with the trained model.
        labels = [LabeledPost(post.id, model.predict_one(post.text)[0]) for post in collection]

    labels_path = out.path("labels.ldjson")
    with open(labels_path, "w", encoding="utf-8") as fh:
        for lp in sorted(labels, key=lambda l: l.post_id):
            fh.write(json.dumps({"post_id": lp.post_id, "label": lp.label}, sort_keys=True) + "\n")

    # Cohort rule: any user with at least one positively classified post.
    cohort_users = sorted(
        {
            post_user[lp.post_id]
            for lp in labels
            if lp.label == LABEL_POSITIVE and lp.post_id in post_user
        }
    )
    cohort_path = out.path("cohort.json")
    with open(cohort_path, "w", encoding="utf-8") as fh:
        json.dump({"users": cohort_users}, fh, indent=2, sort_keys=True)
        fh.write("\n")

    # Hand the cohort's collapsed profiles to the annotation workspace so
    # `serve` can build tasks without a manual copy step.
    profile_store = out.out_dir / "profiles.ldjson"
    if profile_store.exists():
        cohort_set = set(cohort_users)
        ws = Workspace(config.workspace)
        ws.initialize()
        ws.save_profiles([p for p in read_profiles(profile_store) if p.user_id in cohort_set])

    outputs = {"labels": labels_path, "cohort": cohort_path}
    if config.classifier_mode == "train":
        outputs["model"] = out.out_dir / "model.json"
    return {"inputs": inputs, "outputs": outputs, "extra": extra}


def cmd_match(config: PipelineConfig, out: _OutputTracker, profiles_path: Path, cohort_path: Path | None) -> dict:
    if not profiles_path.exists():
        raise ConfigError(f"profile store not found: {profiles_path} (run ingest first)")
    profiles = read_profiles(profiles_path)
    inputs = {"profiles": profiles_path}
    if cohort_path is not None and cohort_path.exists():
        with open(cohort_path, encoding="utf-8") as fh:
            cohort = set(json.load(fh)["users"])
        profiles = [p for p in profiles if p.user_id in cohort]
        inputs["cohort"] = cohort_path
    lexicon = _load_lexicon(config)
    matcher = LexiconMatcher(lexicon=lexicon, config=config.matcher)
    matches = {p.user_id: records for p, records in zip(profiles, matcher.transform(profiles))}
    matches_path = out.path("matches.ldjson")
    write_matches(matches, matches_path)
    if config.lexicon_path:
        inputs["lexicon"] = config.lexicon_path
    return {
        "inputs": inputs,
        "outputs": {"matches": matches_path},
        "extra": {"lexicon_version": lexicon.version, "profiles_matched": len(profiles)},
    }


def cmd_stats(config: PipelineConfig, out: _OutputTracker, matches_path: Path) -> dict:
    if not matches_path.exists():
        raise ConfigError(f"matches file not found: {matches_path} (run match first)")
    matches = read_matches(matches_path)
    lexicon = _load_lexicon(config)
    signatures = build_signatures(matches, lexicon, config.stats)
    if not signatures:
        raise DataError("no users with named medications; nothing to report")
    table = prevalence_table(signatures)
    side_effects = sorted({se for sig in signatures for se in sig.side_effects})
    report = association_report(signatures, side_effects, config.stats)

    prevalence_path = out.path("prevalence.csv")
    write_prevalence_csv(table, prevalence_path)
    association_path = out.path("association.csv")
    write_association_csv(report, association_path)
    pairwise_path = out.path("pairwise.csv")
    write_pairwise_csv(report, pairwise_path)
    heatmap_path = out.path("heatmap.csv")
    write_heatmap_csv(report, heatmap_path)
    report_path = out.path("report.json")
    write_report_json(report, report_path)

    extra: dict = {"lexicon_version": lexicon.version, "cohort_size": table.cohort_size}
    if report.skip_reason:
        extra["skip_reason"] = report.skip_reason
    match_manifest = matches_path.parent / "match.manifest.json"
    if match_manifest.exists():
        with open(match_manifest, encoding="utf-8") as fh:
            extra["parent_manifests"] = {"match": json.load(fh)["digest"]}
    return {
        "inputs": {"matches": matches_path},
        "outputs": {
            "prevalence": prevalence_path,
            "association": association_path,
            "pairwise": pairwise_path,
            "heatmap": heatmap_path,
            "report": report_path,
        },
        "extra": extra,
    }


def cmd_eval(config: PipelineConfig, out: _OutputTracker, matches_path: Path) -> dict:
    if not config.gold_path:
        raise ConfigError("eval requires paths.gold in the config")
    if not Path(config.gold_path).exists():
        raise ConfigError(f"gold set not found: {config.gold_path}")
    if not matches_path.exists():
        raise ConfigError(f"matches file not found: {matches_path} (run match first)")
    with open(config.gold_path, encoding="utf-8") as fh:
        gold = GoldSet.from_dict(json.load(fh))
    matches = read_matches(matches_path)
    evaluation = evaluate_matcher(matches, gold)
    lexicon = _load_lexicon(config)
    eval_path = out.path("eval.json")
    with open(eval_path, "w", encoding="utf-8") as fh:
        json.dump(
            {"lexicon_version": lexicon.version, **evaluation.to_dict()},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    ws = Workspace(config.workspace)
    ws.initialize()
    ws.record_eval(
        {
            "lexicon_version": lexicon.version,
            "precision": evaluation.overall.precision,
            "recall": evaluation.overall.recall,
            "f1": evaluation.overall.f1,
            "status": "done",
        }
    )
    print(f"matcher vs {gold.name}: {evaluation.overall.formatted()}")
    for category, prf in sorted(evaluation.per_category.items()):
        print(f"  {category}: {prf.formatted()}")
    return {
        "inputs": {"matches": matches_path, "gold": config.gold_path},
        "outputs": {"eval": eval_path},
        "extra": {"lexicon_version": lexicon.version},
    }


def cmd_agree(config: PipelineConfig, out: _OutputTracker) -> dict:
    if not config.round_path:
        raise ConfigError("agree requires paths.round in the config")
    if not Path(config.round_path).exists():
        raise ConfigError(f"round file not found: {config.round_path}")
    from .annotation import AnnotationRound

    with open(config.round_path, encoding="utf-8") as fh:
        round_ = AnnotationRound.from_dict(json.load(fh))
    matrix = pairwise_agreement(round_)
    agreement_path = out.path("agreement.json")
    with open(agreement_path, "w", encoding="utf-8") as fh:
        json.dump({"round": round_.round, **matrix.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for (a, b), kappa in sorted(matrix.cells.items()):
        shown = "undefined" if kappa is None else f"{kappa:.2f}"
        print(f"kappa({a}, {b}) = {shown}")
    if matrix.mean is not None:
        print(f"mean kappa = {matrix.mean:.2f}")
    return {"inputs": {"round": config.round_path}, "outputs": {"agreement": agreement_path}}


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medsift",
        description="Mine medication and side-effect mentions from social-media cohorts.",
    )
    parser.add_argument("--version", action="version", version=f"medsift {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_text in [
        ("ingest", "read post dump, keyword-filter, collapse to per-user profiles"),
        ("classify", "train/apply the classifier or import external labels; write cohort"),
        ("match", "run the lexicon matcher over cohort profiles"),
        ("stats", "medication patterns, prevalence tables, association tests"),
        ("eval", "evaluate match records against a gold set"),
        ("agree", "pairwise annotator agreement for a round"),
        ("serve", "start the annotation HTTP API"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--threshold", type=float, help="matcher similarity threshold override")
        p.add_argument("--alpha", type=float, help="significance level override")
        p.add_argument("--seed", type=int, help="seed override")
        if name == "serve":
            p.add_argument("--port", type=int, help="port override")
    return parser


def _apply_overrides(config: PipelineConfig, args: argparse.Namespace) -> PipelineConfig:
    if args.out:
        config.out_dir = args.out
    if args.threshold is not None:
        config.matcher = replace(config.matcher, similarity_threshold=args.threshold)
    if args.alpha is not None:
        config.stats = replace(config.stats, alpha=args.alpha)
    if args.seed is not None:
        config.seed = args.seed
    if getattr(args, "port", None):
        config.port = args.port
    return config


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _apply_overrides(PipelineConfig.from_file(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.subcommand == "serve":
        from .server import serve

        serve(config.workspace, port=config.port)
        return EXIT_OK

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tracker = _OutputTracker(out_dir)
    try:
        if args.subcommand == "ingest":
            result = cmd_ingest(config, tracker)
        elif args.subcommand == "classify":
            result = cmd_classify(config, tracker)
        elif args.subcommand == "match":
            result = cmd_match(
                config, tracker, out_dir / "profiles.ldjson", out_dir / "cohort.json"
            )
        elif args.subcommand == "stats":
            result = cmd_stats(config, tracker, out_dir / "matches.ldjson")
        elif args.subcommand == "eval":
            result = cmd_eval(config, tracker, out_dir / "matches.ldjson")
        elif args.subcommand == "agree":
            result = cmd_agree(config, tracker)
        else:  # pragma: no cover - argparse enforces choices
            raise ConfigError(f"unknown subcommand {args.subcommand}")
    except ConfigError as exc:
        tracker.cleanup()
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CorpusError, ClassifierError, LexiconError, json.JSONDecodeError) as exc:
        tracker.cleanup()
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA

    write_manifest(
        args.subcommand,
        out_dir,
        config,
        inputs={k: str(v) for k, v in result.get("inputs", {}).items()},
        outputs={k: str(v) for k, v in result.get("outputs", {}).items()},
        extra=result.get("extra"),
    )
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
