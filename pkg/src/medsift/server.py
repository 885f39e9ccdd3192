"""Annotation API: tasks, submissions, agreement, candidates, lexicon approval.

JSON over HTTP for the browser workbench.  Annotators identify themselves via
the ``X-Annotator-Id`` header; there is no further authentication (single-team
research tool).  The built UI bundle, when present, is served at ``/``.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Header, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import __version__
from .annotation import (
    AnnotationError,
    LexiconCandidate,
    RoundClosedError,
    TermLabel,
    pairwise_agreement,
    propose_candidates,
)
from .lexicon import LexiconEntry, LexiconError, enrich
from .matcher import LexiconMatcher, MatcherConfig
from .workspace import Workspace, WorkspaceError


class SpanPayload(BaseModel):
    category: str
    term: str
    negated: bool = False
    entry_id: Optional[str] = None
    span: Optional[tuple[int, int]] = None


class AnnotationSubmission(BaseModel):
    user_id: str
    labels: list[SpanPayload] = Field(default_factory=list)


class CandidateApproval(BaseModel):
    term: str
    category: str
    functional_class: Optional[str] = None
    synonyms: list[str] = Field(default_factory=list)
    entry_id: Optional[str] = None
    round: int = 1


def _error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def _slug(term: str) -> str:
    return term.replace(" ", "_").replace("'", "")


def create_app(
    workspace: Workspace,
    matcher_config: MatcherConfig | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    workspace.initialize()
    app = FastAPI(title="medsift annotation service", version=__version__)
    cfg = matcher_config or MatcherConfig()

    def profile_index():
        return {p.user_id: p for p in workspace.load_profiles()}

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "version": __version__,
            "lexicon_version": workspace.current_lexicon().version,
        }

    @app.get("/api/rounds")
    def rounds():
        out = []
        for number in workspace.round_numbers():
            r = workspace.load_round(number)
            out.append(
                {
                    "round": r.round,
                    "annotators": list(r.annotators),
                    "tasks": len(r.tasks),
                    "status": r.status,
                }
            )
        return {"rounds": out}

    @app.get("/api/rounds/{number}/tasks")
    def tasks(number: int):
        try:
            round_ = workspace.load_round(number)
        except WorkspaceError as exc:
            raise _error(404, "round_not_found", str(exc))
        lexicon = workspace.current_lexicon()
        matcher = LexiconMatcher(lexicon=lexicon, config=cfg)
        profiles = profile_index()
        views = []
        for user_id in round_.tasks:
            profile = profiles.get(user_id)
            if profile is None:
                continue
            # Pre-annotations are recomputed against the current lexicon
            # version, never cached across enrichments.
            records = matcher.transform([profile])[0]
            submitted = {
                annotator: [
                    l.to_dict()
                    for l in sorted(labels, key=lambda l: (l.category, l.term, l.negated))
                ]
                for (annotator, uid), labels in round_.labels.items()
                if uid == user_id
            }
            views.append(
                {
                    "user_id": user_id,
                    "collapsed_text": profile.collapsed_text,
                    "pre_annotations": [r.to_dict() for r in records],
                    "assigned_annotators": list(round_.annotators),
                    "annotated_by": sorted(submitted),
                    "annotations": submitted,
                    "status": round_.status,
                }
            )
        return {"round": round_.round, "lexicon_version": lexicon.version, "tasks": views}

    @app.post("/api/rounds/{number}/annotations")
    def submit_annotation(
        number: int,
        submission: AnnotationSubmission,
        x_annotator_id: str = Header(default=""),
    ):
        if not x_annotator_id:
            raise _error(400, "missing_annotator", "X-Annotator-Id header is required")
        try:
            labels = [
                TermLabel(
                    category=p.category,
                    term=p.term,
                    negated=p.negated,
                    entry_id=p.entry_id,
                    span=p.span,
                )
                for p in submission.labels
            ]
            workspace.update_round(
                number, lambda r: r.submit(x_annotator_id, submission.user_id, labels)
            )
        except WorkspaceError as exc:
            raise _error(404, "round_not_found", str(exc))
        except RoundClosedError as exc:
            raise _error(409, "round_closed", str(exc))
        except AnnotationError as exc:
            raise _error(400, "bad_annotation", str(exc))
        return {
            "round": number,
            "user_id": submission.user_id,
            "annotator": x_annotator_id,
            "labels": len(labels),
        }

    @app.get("/api/rounds/{number}/agreement")
    def agreement(number: int):
        try:
            round_ = workspace.load_round(number)
            matrix = pairwise_agreement(round_)
        except WorkspaceError as exc:
            raise _error(404, "round_not_found", str(exc))
        except AnnotationError as exc:
            raise _error(400, "agreement_unavailable", str(exc))
        return {"round": number, **matrix.to_dict()}

    @app.get("/api/lexicon/candidates")
    def candidates():
        lexicon = workspace.current_lexicon()
        merged: dict[tuple[str, str], LexiconCandidate] = {}
        for number in workspace.round_numbers():
            round_ = workspace.load_round(number)
            if round_.status != "reconciled":
                continue
            for cand in propose_candidates(round_, lexicon, cfg.similarity_threshold):
                key = (cand.category, cand.term)
                prior = merged.get(key)
                if prior is not None:
                    users = tuple(sorted(set(prior.profiles) | set(cand.profiles)))
                    cand = LexiconCandidate(
                        term=cand.term,
                        category=cand.category,
                        count=len(users),
                        profiles=users,
                        negated_any=prior.negated_any or cand.negated_any,
                    )
                merged[key] = cand
        ordered = sorted(merged.values(), key=lambda c: (-c.count, c.term))
        return {
            "lexicon_version": lexicon.version,
            "candidates": [
                {
                    "term": c.term,
                    "category": c.category,
                    "count": c.count,
                    "profiles": list(c.profiles),
                }
                for c in ordered
            ],
        }

    @app.post("/api/lexicon/approve")
    def approve(approval: CandidateApproval):
        lexicon = workspace.current_lexicon()
        entry_id = approval.entry_id or (
            ("med:" if approval.category == "medication" else "se:") + _slug(approval.term)
        )
        try:
            entry = LexiconEntry(
                entry_id=entry_id,
                canonical=approval.term,
                category=approval.category,
                synonyms=tuple(approval.synonyms),
                functional_class=approval.functional_class,
                provenance="nci_side_effects",  # overwritten by enrich()
            )
            new_version = enrich(lexicon, [entry], approval.round)
        except LexiconError as exc:
            raise _error(400, "bad_candidate", str(exc))
        workspace.save_lexicon_version(new_version)
        workspace.record_eval({"lexicon_version": new_version.version, "status": "pending"})
        return {"version": new_version.version, "entry_id": entry_id}

    @app.get("/api/eval/history")
    def eval_history():
        return {"entries": workspace.eval_history()}

    bundle = Path(ui_dir) if ui_dir else Path(os.environ.get("MEDSIFT_UI_DIR", "frontend/dist"))
    if bundle.is_dir():
        app.mount("/", StaticFiles(directory=str(bundle), html=True), name="ui")
    return app


def serve(workspace_dir: str | Path, port: int = 8765, host: str = "127.0.0.1") -> None:
    import uvicorn

    app = create_app(Workspace(workspace_dir))
    uvicorn.run(app, host=host, port=port)
