"""HTTP service: grounding pipeline plus the human-verification queue.

Stage-1-rejected pairs are queued for annotators together with their
evidence. Queue state is event-sourced from an append-only JSONL log
(enqueue and decision events, one record per line, fsynced before the
response), so a restart replays the log and reconstructs the queue
exactly. Decisions are immutable: the first decision on an item wins and
later attempts get a conflict error.
"""

import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Mapping, Optional, Sequence

import json
import os

from .corpus import ConceptStrategy, Corpus, compute_concept_stats, load_corpus
from .errors import (
    AlreadyDecidedError,
    DanglingReferenceError,
    DuplicateItemError,
    ItemNotFoundError,
    ValidationError,
)
from .evaluation import EvalReport, classification_metrics
from .fusion import DEFAULT_LOG_BASE, DEFAULT_THRESHOLD, GroundingVerdict, ground_pair, rank_candidates
from .scorer import CachingScorer, RemoteScorer, Scorer, SyntheticWorldConfig, make_synthetic_scorer

logger = logging.getLogger(__name__)

PENDING = "pending"
ACCEPTED = "accepted"
REJECTED = "rejected"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def item_id_for(entity_id: str, image_id: str) -> str:
    return f"{entity_id}::{image_id}"


@dataclass
class QueueItem:
    item_id: str
    entity_id: str
    image_id: str
    entity_name: str
    image_locator: str
    verdict: GroundingVerdict
    status: str = PENDING
    decided_by: Optional[str] = None
    decided_at: Optional[str] = None
    enqueued_at: str = ""

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "entity_id": self.entity_id,
            "image_id": self.image_id,
            "entity_name": self.entity_name,
            "image_locator": self.image_locator,
            "verdict": self.verdict.to_dict(),
            "status": self.status,
            "decided_by": self.decided_by,
            "decided_at": self.decided_at,
            "enqueued_at": self.enqueued_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QueueItem":
        return cls(
            item_id=data["item_id"],
            entity_id=data["entity_id"],
            image_id=data["image_id"],
            entity_name=data.get("entity_name", ""),
            image_locator=data.get("image_locator", ""),
            verdict=GroundingVerdict.from_dict(data["verdict"]),
            status=data.get("status", PENDING),
            decided_by=data.get("decided_by"),
            decided_at=data.get("decided_at"),
            enqueued_at=data.get("enqueued_at", ""),
        )


@dataclass(frozen=True)
class DecisionRecord:
    item_id: str
    annotator: str
    decision: str
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "annotator": self.annotator,
            "decision": self.decision,
            "timestamp": self.timestamp,
        }


class VerificationQueue:
    """Event-sourced annotation queue over an append-only decision log."""

    def __init__(self, log_path: str | Path):
        self._log_path = Path(log_path)
        self._items: dict[str, QueueItem] = {}
        self._decisions: list[DecisionRecord] = []
        self._lock = threading.Lock()
        if self._log_path.exists():
            self._replay()

    def _replay(self) -> None:
        raw = self._log_path.read_text(encoding="utf-8")
        records = [line for line in raw.split("\n") if line.strip()]
        for position, line in enumerate(records):
            try:
                event = json.loads(line)
            except json.JSONDecodeError:
                if position == len(records) - 1:
                    logger.warning(
                        "ignoring truncated final record in %s", self._log_path
                    )
                    break
                raise ValidationError(
                    f"corrupt decision log {self._log_path} at record {position + 1}"
                ) from None
            kind = event.get("event")
            if kind == "enqueue":
                item = QueueItem.from_dict(event["item"])
                item.status = PENDING
                item.decided_by = None
                item.decided_at = None
                self._items[item.item_id] = item
            elif kind == "decision":
                record = DecisionRecord(
                    item_id=event["item_id"],
                    annotator=event["annotator"],
                    decision=event["decision"],
                    timestamp=event["timestamp"],
                )
                self._apply_decision(record)
            else:
                raise ValidationError(
                    f"unknown event kind {kind!r} in {self._log_path}"
                )

    def _apply_decision(self, record: DecisionRecord) -> None:
        item = self._items.get(record.item_id)
        if item is None:
            raise ValidationError(
                f"decision for unknown item {record.item_id!r} in log"
            )
        item.status = ACCEPTED if record.decision == "accept" else REJECTED
        item.decided_by = record.annotator
        item.decided_at = record.timestamp
        self._decisions.append(record)

    def _append(self, event: dict) -> None:
        line = json.dumps(event, ensure_ascii=False) + "\n"
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())

    def enqueue(
        self,
        verdict: GroundingVerdict,
        entity_name: str = "",
        image_locator: str = "",
    ) -> QueueItem:
        if verdict.stage1_accept:
            raise ValidationError(
                "only stage-1 rejections enter the verification queue"
            )
        item_id = item_id_for(verdict.entity_id, verdict.image_id)
        with self._lock:
            if item_id in self._items:
                raise DuplicateItemError(f"item {item_id!r} already queued")
            item = QueueItem(
                item_id=item_id,
                entity_id=verdict.entity_id,
                image_id=verdict.image_id,
                entity_name=entity_name,
                image_locator=image_locator,
                verdict=verdict,
                enqueued_at=_utc_now(),
            )
            self._append({"event": "enqueue", "item": item.to_dict()})
            self._items[item_id] = item
            return item

    def enqueue_rejections(
        self, verdicts: Sequence[GroundingVerdict], corpus: Optional[Corpus] = None
    ) -> int:
        count = 0
        for verdict in verdicts:
            name = locator = ""
            if corpus is not None:
                name = corpus.entity(verdict.entity_id).name
                locator = corpus.image(verdict.image_id).locator
            self.enqueue(verdict, entity_name=name, image_locator=locator)
            count += 1
        return count

    def decide(self, item_id: str, annotator: str, decision: str) -> QueueItem:
        if decision not in ("accept", "reject"):
            raise ValidationError(f"decision must be accept or reject, got {decision!r}")
        if not annotator:
            raise ValidationError("annotator must be non-empty")
        with self._lock:
            item = self._items.get(item_id)
            if item is None:
                raise ItemNotFoundError(f"no queue item {item_id!r}")
            if item.status != PENDING:
                raise AlreadyDecidedError(
                    f"item {item_id!r} already decided by {item.decided_by!r}"
                )
            record = DecisionRecord(
                item_id=item_id,
                annotator=annotator,
                decision=decision,
                timestamp=_utc_now(),
            )
            # Durability contract: the record reaches the log before the
            # in-memory state (and therefore any response) reflects it.
            self._append({"event": "decision", **record.to_dict()})
            self._apply_decision(record)
            return item

    def get(self, item_id: str) -> QueueItem:
        item = self._items.get(item_id)
        if item is None:
            raise ItemNotFoundError(f"no queue item {item_id!r}")
        return item

    def items(
        self, status: Optional[str] = None, limit: Optional[int] = None
    ) -> list[QueueItem]:
        selected = [
            item
            for item in self._items.values()
            if status is None or item.status == status
        ]
        return selected if limit is None else selected[:limit]

    def decisions(self) -> list[DecisionRecord]:
        return list(self._decisions)

    def decision_overrides(self) -> dict[tuple[str, str], bool]:
        """Pair-keyed final labels implied by human decisions."""
        overrides = {}
        for item in self._items.values():
            if item.status == ACCEPTED:
                overrides[(item.entity_id, item.image_id)] = True
            elif item.status == REJECTED:
                overrides[(item.entity_id, item.image_id)] = False
        return overrides


def recompute_with_decisions(
    base_verdicts: Sequence[GroundingVerdict],
    overrides: Mapping[tuple[str, str], bool],
    labels: Mapping[tuple[str, str], bool],
) -> EvalReport:
    """Re-score classification metrics with human decisions applied.

    Overrides only ever touch stage-1 rejections; machine acceptances are
    returned untouched. Pure: same inputs, same report.
    """
    outcomes = []
    for verdict in base_verdicts:
        key = verdict.pair_key()
        if key not in labels:
            raise ValidationError(f"no ground-truth label for pair {key!r}")
        predicted = verdict.final_label
        if not verdict.stage1_accept and key in overrides:
            predicted = overrides[key]
        outcomes.append((predicted, labels[key]))
    accuracy, precision, recall, f1 = classification_metrics(outcomes)
    return EvalReport(
        accuracy=accuracy, precision=precision, recall=recall, f1=f1
    )


@dataclass
class ServiceSettings:
    entities_path: str
    images_path: str
    pairs_path: Optional[str] = None
    decision_log: str = "decisions.log"
    scorer_mode: Literal["synthetic", "remote"] = "synthetic"
    scorer_url: Optional[str] = None
    scorer_timeout_ms: int = 10_000
    scorer_retries: int = 2
    strategy: ConceptStrategy = ConceptStrategy.ALL
    threshold: float = DEFAULT_THRESHOLD
    stage2_threshold: Optional[float] = None
    log_base: int = DEFAULT_LOG_BASE
    synthetic: SyntheticWorldConfig = field(default_factory=SyntheticWorldConfig)
    api_token: Optional[str] = None
    ui_dir: Optional[str] = None


def build_scorer(settings: ServiceSettings, corpus: Corpus) -> Scorer:
    if settings.scorer_mode == "synthetic":
        return CachingScorer(make_synthetic_scorer(corpus, settings.synthetic))
    if not settings.scorer_url:
        raise ValidationError(
            "remote scorer mode needs a URL (flag or COG_SCORER_URL)"
        )
    return CachingScorer(
        RemoteScorer(
            settings.scorer_url,
            timeout_ms=settings.scorer_timeout_ms,
            retries=settings.scorer_retries,
        )
    )


class GroundingService:
    """Application state behind the HTTP surface."""

    def __init__(self, settings: ServiceSettings, corpus: Optional[Corpus] = None):
        self.settings = settings
        self.corpus = corpus or load_corpus(
            settings.entities_path, settings.images_path, settings.pairs_path
        )
        self.stats = compute_concept_stats(list(self.corpus.entities))
        self.scorer = build_scorer(settings, self.corpus)
        self.queue = VerificationQueue(settings.decision_log)
        self._base_verdicts: Optional[list[GroundingVerdict]] = None
        self._labels: dict[tuple[str, str], bool] = {
            (p.entity_id, p.image_id): p.label for p in self.corpus.pairs
        }

    def ground(self, entity_id: str, image_ids: Sequence[str]) -> list[GroundingVerdict]:
        entity = self.corpus.entity(entity_id)
        verdicts = []
        for image_id in image_ids:
            image = self.corpus.image(image_id)
            verdict = ground_pair(
                entity,
                image,
                self.scorer,
                self.stats,
                self.settings.strategy,
                self.settings.threshold,
                self.settings.stage2_threshold,
                self.settings.log_base,
            )
            verdicts.append(verdict)
            if not verdict.stage1_accept:
                try:
                    self.queue.enqueue(
                        verdict, entity_name=entity.name, image_locator=image.locator
                    )
                except DuplicateItemError:
                    pass  # re-grounding the same pair keeps the queued item
        return verdicts

    def rank(self, entity_id: str, candidate_ids: Sequence[str]) -> list[tuple[str, float]]:
        entity = self.corpus.entity(entity_id)
        candidates = [self.corpus.image(cid) for cid in candidate_ids]
        ranked = rank_candidates(entity, candidates, self.scorer, self.settings.strategy)
        return [(image.id, prediction) for image, prediction in ranked]

    def base_verdicts(self) -> list[GroundingVerdict]:
        """Pipeline verdicts for every labeled corpus pair (computed once;
        the pipeline is deterministic so the cache never goes stale)."""
        if self._base_verdicts is None:
            if not self.corpus.pairs:
                raise ValidationError("service corpus has no labeled pairs to report on")
            self._base_verdicts = [
                ground_pair(
                    self.corpus.entity(pair.entity_id),
                    self.corpus.image(pair.image_id),
                    self.scorer,
                    self.stats,
                    self.settings.strategy,
                    self.settings.threshold,
                    self.settings.stage2_threshold,
                    self.settings.log_base,
                )
                for pair in self.corpus.pairs
            ]
        return self._base_verdicts

    def report(self, with_human: bool) -> EvalReport:
        overrides = self.queue.decision_overrides() if with_human else {}
        return recompute_with_decisions(self.base_verdicts(), overrides, self._labels)


def create_app(settings: ServiceSettings, corpus: Optional[Corpus] = None):
    from fastapi import Depends, FastAPI, HTTPException, Query, Request
    from fastapi.staticfiles import StaticFiles
    from pydantic import BaseModel

    service = GroundingService(settings, corpus)
    app = FastAPI(title="cogground", version="0.1.0")
    app.state.service = service

    def check_token(request: Request) -> None:
        if settings.api_token is None:
            return
        supplied = request.headers.get("x-api-token")
        if supplied != settings.api_token:
            raise HTTPException(status_code=401, detail="missing or bad API token")

    class GroundRequest(BaseModel):
        entity_id: str
        image_ids: list[str]

    class RankRequest(BaseModel):
        entity_id: str
        candidate_ids: list[str]

    class DecisionRequest(BaseModel):
        annotator: str
        decision: Literal["accept", "reject"]

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/ground", dependencies=[Depends(check_token)])
    def ground(body: GroundRequest):
        try:
            verdicts = service.ground(body.entity_id, body.image_ids)
        except DanglingReferenceError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return {"verdicts": [v.to_dict() for v in verdicts]}

    @app.post("/v1/rank", dependencies=[Depends(check_token)])
    def rank(body: RankRequest):
        try:
            ranked = service.rank(body.entity_id, body.candidate_ids)
        except DanglingReferenceError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {
            "ranking": [
                {"image_id": image_id, "prediction": prediction}
                for image_id, prediction in ranked
            ]
        }

    @app.get("/v1/queue", dependencies=[Depends(check_token)])
    def queue_page(
        status: Optional[str] = Query(default=None),
        limit: Optional[int] = Query(default=None, ge=1),
    ):
        if status is not None and status not in (PENDING, ACCEPTED, REJECTED):
            raise HTTPException(status_code=422, detail=f"unknown status {status!r}")
        items = service.queue.items(status=status, limit=limit)
        total = len(service.queue.items(status=status))
        return {"items": [item.to_dict() for item in items], "total": total}

    @app.get("/v1/queue/{item_id}", dependencies=[Depends(check_token)])
    def queue_item(item_id: str):
        try:
            return service.queue.get(item_id).to_dict()
        except ItemNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/v1/queue/{item_id}/decision", dependencies=[Depends(check_token)])
    def record_decision(item_id: str, body: DecisionRequest):
        try:
            item = service.queue.decide(item_id, body.annotator, body.decision)
        except ItemNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except AlreadyDecidedError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return item.to_dict()

    @app.get("/v1/report", dependencies=[Depends(check_token)])
    def report(with_human: bool = Query(default=False)):
        try:
            return service.report(with_human).to_dict()
        except ValidationError as exc:
            raise HTTPException(status_code=409, detail=str(exc))

    ui_dir = settings.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
