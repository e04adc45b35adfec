"""Memory retrieval: standardized relevance-plus-importance scoring.

Given a query, every visible candidate of one kind is scored

    score = z(relevance) + z(importance)

where relevance is the cosine between query and item embeddings, importance
is the item's intrinsic weight (procedure reliability, or the episode's
combined score rescaled to [0, 1]), and both are z-standardized over the
query-time pool of that kind. Retrieval is hierarchical: procedures are
preferred when the best raw procedural relevance clears a threshold,
otherwise episodes serve as fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .embedding import EmbeddingProvider, cosine
from .store import MemoryView, StoreSet
from .types import (
    Episode,
    MemoryItem,
    Procedure,
    combined_score,
    derive_reliability,
)

DEFAULT_TOP_K = 3
DEFAULT_PROC_FALLBACK_THRESHOLD = 0.30

# Below this spread a pool is treated as constant and z-scores collapse to 0.
_STD_EPSILON = 1e-12


@dataclass(frozen=True)
class Query:
    text: str
    k: int = DEFAULT_TOP_K
    proc_fallback_threshold: float = DEFAULT_PROC_FALLBACK_THRESHOLD

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class ScoredItem:
    item: MemoryItem
    rel: float
    imp: float
    rel_z: float
    imp_z: float
    score: float


@dataclass(frozen=True)
class RetrievalResult:
    kind_used: str
    items: tuple[ScoredItem, ...]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.item.id for s in self.items)


def embedding_text_for_episode(episode: Episode) -> str:
    """Task description plus all lessons, space-joined."""
    return " ".join([episode.task_description, *episode.lessons])


def embedding_text_for_procedure(procedure: Procedure) -> str:
    """Title plus knowledge, space-joined."""
    return f"{procedure.title} {procedure.knowledge}"


def episode_importance(episode: Episode) -> float:
    """Combined task score rescaled to [0, 1]."""
    return combined_score(episode.outcome) / 100.0


def episodic_items(episodes: Iterable[Episode]) -> list[MemoryItem]:
    return [
        MemoryItem(
            kind="episodic",
            id=e.episode_id,
            text_for_embedding=embedding_text_for_episode(e),
            importance_raw=episode_importance(e),
            payload=e,
        )
        for e in episodes
    ]


def procedural_items(procedures: Iterable[Procedure]) -> list[MemoryItem]:
    return [
        MemoryItem(
            kind="procedural",
            id=p.procedure_id,
            text_for_embedding=embedding_text_for_procedure(p),
            importance_raw=derive_reliability(p),
            payload=p,
        )
        for p in procedures
    ]


def importance(item: MemoryItem, stores: StoreSet) -> float:
    """Recompute an item's importance from the backing store.

    Dangling references raise ``LookupError`` naming the id.
    """
    if item.kind == "procedural":
        procedure = stores.procedural.get(item.id)
        if procedure is None:
            raise LookupError(f"dangling procedural reference {item.id!r}")
        return derive_reliability(procedure)
    for episode in stores.episodic:
        if episode.episode_id == item.id:
            return episode_importance(episode)
    raise LookupError(f"dangling episodic reference {item.id!r}")


def _zscores(values: Sequence[float]) -> list[float]:
    n = len(values)
    mean = sum(values) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / n)
    if std < _STD_EPSILON:
        return [0.0] * n
    return [(v - mean) / std for v in values]


def score_pool(
    query: Query, pool: Sequence[MemoryItem], embedder: EmbeddingProvider
) -> list[ScoredItem]:
    """Score and rank one pool of a single memory kind.

    Both relevance and importance are standardized over this pool. Output is
    sorted by descending score; ties fall back to higher raw relevance, then
    to the lexicographically lower item id.
    """
    if not pool:
        return []
    query_vec = embedder.embed(query.text)
    rels = [cosine(query_vec, embedder.embed(item.text_for_embedding)) for item in pool]
    imps = [item.importance_raw for item in pool]
    rel_z = _zscores(rels)
    imp_z = _zscores(imps)
    scored = [
        ScoredItem(
            item=item,
            rel=rels[i],
            imp=imps[i],
            rel_z=rel_z[i],
            imp_z=imp_z[i],
            score=rel_z[i] + imp_z[i],
        )
        for i, item in enumerate(pool)
    ]
    scored.sort(key=lambda s: (-s.score, -s.rel, s.item.id))
    return scored


def retrieve_from_pools(
    query: Query,
    procedural_pool: Sequence[MemoryItem],
    episodic_pool: Sequence[MemoryItem],
    embedder: EmbeddingProvider,
) -> RetrievalResult:
    """Hierarchical retrieval over prebuilt pools.

    Procedures win when any of them reaches the raw-relevance threshold;
    otherwise episodes are used. Empty pools yield an empty result, never an
    error.
    """
    if procedural_pool:
        query_vec = embedder.embed(query.text)
        best_rel = max(
            cosine(query_vec, embedder.embed(item.text_for_embedding))
            for item in procedural_pool
        )
        if best_rel >= query.proc_fallback_threshold:
            ranked = score_pool(query, procedural_pool, embedder)
            return RetrievalResult(kind_used="procedural", items=tuple(ranked[: query.k]))
    ranked = score_pool(query, episodic_pool, embedder)
    return RetrievalResult(kind_used="episodic", items=tuple(ranked[: query.k]))


def retrieve(view: MemoryView, query: Query, embedder: EmbeddingProvider) -> RetrievalResult:
    """Retrieve the top-k memory items visible to ``view`` for this query."""
    procs = procedural_items(view.procedures().values())
    episodes = episodic_items(view.episodes())
    return retrieve_from_pools(query, procs, episodes, embedder)


def render_memory_context(result: RetrievalResult) -> str:
    """Render a retrieval result as the past-experience prompt block.

    An empty result renders as the empty string so callers can drop the
    surrounding delimiters entirely.
    """
    if not result.items:
        return ""
    lines: list[str] = []
    if result.kind_used == "procedural":
        lines.append("[Relevant Procedures & Strategies]")
        for scored in result.items:
            procedure: Procedure = scored.item.payload
            rate = derive_reliability(procedure)
            lines.append(f"- {procedure.title} (success rate: {rate:.2f})")
            lines.append(f"  Strategy : {procedure.knowledge}")
    else:
        lines.append("[Past Experiences]")
        for scored in result.items:
            episode: Episode = scored.item.payload
            verdict = "succeeded" if episode.outcome.success else "had issues"
            lines.append(f"- Similar past task: {episode.task_description}")
            lines.append(f"  Result: {verdict}")
            lines.append(f"  Takeaway: {'; '.join(episode.lessons)}")
    return "\n".join(lines)
