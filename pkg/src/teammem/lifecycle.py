"""Memory lifecycle: per-task updates and periodic consolidation.

After every finished task, :func:`post_task_update` extracts lessons, appends
the episode, bumps the evidence counters of any procedures that were used,
and folds the result into transactive state. Every ``interval_n`` new
episodes, :func:`maybe_consolidate` clusters the episodic store by lesson
similarity and distills clusters with enough successful members into
procedures, pruning procedures whose source sets are dominated.

Lesson extraction and generalization go through a :class:`Generator`. The
bundled :class:`StubGenerator` is fully deterministic; an external
LLM-backed generator plugs in behind the same interface using the prompt
templates at the bottom of this module.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Protocol, Sequence

from .embedding import EmbeddingProvider, cosine, mean_vector
from .store import SHARED_OWNER, MemoryView, Topology
from .types import Episode, Outcome, Procedure, derive_reliability

logger = logging.getLogger(__name__)

EXTRACTION_FAILED_LESSON = "<extraction failed>"
MAX_LESSONS = 3


class Generator(Protocol):
    """Turns raw task experience into lessons and generalized strategies."""

    def extract_lessons(
        self,
        task: str,
        actions: Sequence[str],
        outcome: Outcome,
        role: str | None = None,
    ) -> list[str]: ...

    def generalize(self, episodes: Sequence[Episode]) -> tuple[str, str]: ...


@dataclass(frozen=True)
class ConsolidationConfig:
    interval_n: int = 5
    cluster_threshold: float = 0.80
    min_cluster: int = 2
    min_successes: int = 2

    def __post_init__(self) -> None:
        if self.interval_n < 1:
            raise ValueError("interval_n must be >= 1")
        if self.min_cluster < 1 or self.min_successes < 1:
            raise ValueError("cluster minimums must be >= 1")


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _task_digest(task: str) -> int:
    return int.from_bytes(hashlib.blake2b(task.encode("utf-8"), digest_size=4).digest(), "big")


def stub_extract_lessons(task: str, actions: Sequence[str], outcome: Outcome) -> list[str]:
    """Deterministic lesson extraction used by the stub generator.

    Emits one to three templated strings keyed on the outcome flag and a
    hash of the task text, referencing the opening action so that repeated
    use of the same playbook produces a small, stable set of lesson strings.
    """
    first_action = actions[0] if actions else "plan the approach first"
    digest = _task_digest(task)
    if outcome.success:
        lessons = [f"Repeat '{first_action}' early; it led to success."]
        variants = [
            f"Open with '{first_action}' for similar tasks ahead.",
            f"Open with '{first_action}' for similar tasks soon.",
        ]
    else:
        lessons = [f"'{first_action}' did not prevent failure; adjust it before retrying."]
        variants = [
            f"Rework '{first_action}' before taking on similar tasks ahead.",
            f"Rework '{first_action}' before taking on similar tasks soon.",
        ]
    lessons.append(variants[digest % 2])
    if digest % 3 == 0 and len(actions) > 1:
        word = "sufficient" if outcome.success else "insufficient"
        lessons.append(f"A plan of {len(actions)} steps was {word} here.")
    return lessons[:MAX_LESSONS]


def stub_generalize(episodes: Sequence[Episode]) -> tuple[str, str]:
    """Deterministic generalization used by the stub generator.

    The title is the first six tokens of the most frequent lesson (count,
    then lexicographic order breaks ties); the knowledge is every distinct
    lesson joined in sorted order.
    """
    counts: dict[str, int] = {}
    for episode in episodes:
        for lesson in episode.lessons:
            counts[lesson] = counts.get(lesson, 0) + 1
    if not counts:
        return ("Reuse the prior approach", "Repeat what worked on similar tasks.")
    top = min(counts, key=lambda lesson: (-counts[lesson], lesson))
    title = " ".join(top.split()[:6])
    knowledge = "; ".join(sorted(counts))
    return (title, knowledge)


class StubGenerator:
    """Offline deterministic generator; safe for tests and simulations."""

    def extract_lessons(
        self,
        task: str,
        actions: Sequence[str],
        outcome: Outcome,
        role: str | None = None,
    ) -> list[str]:
        return stub_extract_lessons(task, actions, outcome)

    def generalize(self, episodes: Sequence[Episode]) -> tuple[str, str]:
        return stub_generalize(episodes)


def _safe_lessons(
    generator: Generator,
    task: str,
    actions: Sequence[str],
    outcome: Outcome,
    role: str | None,
) -> tuple[str, ...]:
    try:
        raw = generator.extract_lessons(task, actions, outcome, role=role)
        lessons = [s.strip() for s in raw if isinstance(s, str) and s.strip()]
        if not lessons:
            raise ValueError("generator returned no usable lessons")
        return tuple(lessons[:MAX_LESSONS])
    except Exception:
        logger.warning("lesson extraction failed for task %r; storing placeholder", task[:80])
        return (EXTRACTION_FAILED_LESSON,)


def post_task_update(
    view: MemoryView,
    task: str,
    actions: Sequence[str],
    outcome: Outcome,
    procedures_used: Sequence[str],
    generator: Generator,
    task_type: str,
    *,
    team_composition: Sequence[str] | None = None,
    env_context: str = "",
    role: str | None = None,
    task_index: int | None = None,
    timestamp: str | None = None,
) -> Episode:
    """Fold one finished task into memory; returns the stored episode.

    Extraction failures never lose the episode: a placeholder lesson is
    stored and a warning logged. All three store kinds are persisted before
    return.
    """
    lessons = _safe_lessons(generator, task, actions, outcome, role)
    if task_index is None:
        own = [e.task_index for e in view.episodes() if e.agent_id == view.agent_id]
        task_index = max(own) + 1 if own else 0
    stamp = timestamp or _now_iso()
    episode = Episode(
        agent_id=view.agent_id,
        task_index=task_index,
        timestamp=stamp,
        task_description=task,
        team_composition=tuple(team_composition or (view.agent_id,)),
        actions=tuple(actions),
        outcome=outcome,
        env_context=env_context,
        lessons=lessons,
        related_procedures=frozenset(procedures_used),
    )
    view.append_episode(episode)
    for procedure_id in procedures_used:
        view.record_procedure_outcome(procedure_id, outcome.success, timestamp=stamp)
    view.update_transactive(episode, task_type)
    return episode


def lesson_vector(episode: Episode, embedder: EmbeddingProvider):
    """Mean embedding of an episode's lessons (zero vector when empty)."""
    vectors = [embedder.embed(lesson) for lesson in episode.lessons]
    return mean_vector(vectors, embedder.dim)


def cluster_by_lessons(
    episodes: Sequence[Episode], embedder: EmbeddingProvider, threshold: float
) -> list[list[Episode]]:
    """Single-link agglomeration over lesson-embedding cosine similarity.

    Two episodes land in the same cluster whenever a chain of pairwise
    similarities at or above ``threshold`` connects them. Clusters are
    ordered by their first member's position; members keep input order.
    """
    n = len(episodes)
    vectors = [lesson_vector(e, embedder) for e in episodes]
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    for i in range(n):
        for j in range(i + 1, n):
            if cosine(vectors[i], vectors[j]) >= threshold:
                union(i, j)

    groups: dict[int, list[Episode]] = {}
    for i, episode in enumerate(episodes):
        groups.setdefault(find(i), []).append(episode)
    return [groups[root] for root in sorted(groups)]


def _prune_dominated(view: MemoryView) -> set[str]:
    """Remove procedures whose source sets are dominated; returns removed ids.

    A procedure loses when its source set is a strict subset of another's.
    Procedures with identical source sets keep the one with higher derived
    reliability, then earlier ``created_at``, then lower id.
    """
    procedures = view.procedures()
    by_sources: dict[frozenset[str], list[Procedure]] = {}
    for procedure in procedures.values():
        by_sources.setdefault(procedure.source_episodes, []).append(procedure)

    removed: set[str] = set()
    winners: list[Procedure] = []
    for group in by_sources.values():
        group.sort(key=lambda p: (-derive_reliability(p), p.created_at, p.procedure_id))
        winners.append(group[0])
        removed.update(p.procedure_id for p in group[1:])

    for p in winners:
        for q in winners:
            if p.procedure_id != q.procedure_id and p.source_episodes < q.source_episodes:
                removed.add(p.procedure_id)
                break

    view.remove_procedures(sorted(removed))
    return removed


def consolidate(
    view: MemoryView,
    cfg: ConsolidationConfig,
    generator: Generator,
    embedder: EmbeddingProvider,
    *,
    timestamp: str | None = None,
) -> list[Procedure]:
    """Run one consolidation pass over every episode visible to ``view``.

    Clusters of at least ``min_cluster`` episodes whose successful members
    number at least ``min_successes`` are generalized into procedures seeded
    with one success per source episode. The episodic store is never
    modified. Returns the new procedures that survive pruning.
    """
    episodes = view.episodes()
    owner = view.agent_id if view.topology is Topology.LOCAL else SHARED_OWNER
    stamp = timestamp or _now_iso()
    created: list[Procedure] = []
    for cluster in cluster_by_lessons(episodes, embedder, cfg.cluster_threshold):
        if len(cluster) < cfg.min_cluster:
            continue
        successful = [e for e in cluster if e.outcome.success]
        if len(successful) < cfg.min_successes:
            continue
        try:
            title, knowledge = generator.generalize(successful)
            if not title or not knowledge:
                raise ValueError("generalization returned empty title or knowledge")
        except Exception:
            logger.warning(
                "generalization failed for a cluster of %d episodes; skipping",
                len(cluster),
            )
            continue
        procedure = Procedure(
            procedure_id=view.allocate_procedure_id(),
            owner_id=owner,
            created_at=stamp,
            updated_at=stamp,
            title=title,
            knowledge=knowledge,
            successes=len(successful),
            failures=0,
            source_episodes=frozenset(e.episode_id for e in successful),
        )
        view.upsert_procedure(procedure, timestamp=stamp)
        created.append(procedure)
    removed = _prune_dominated(view)
    return [p for p in created if p.procedure_id not in removed]


def maybe_consolidate(
    view: MemoryView,
    cfg: ConsolidationConfig,
    generator: Generator,
    embedder: EmbeddingProvider,
    *,
    timestamp: str | None = None,
) -> list[Procedure]:
    """Consolidate when ``interval_n`` episodes accumulated since last time."""
    count = len(view.episodes())
    if count - view.consolidation_watermark() < cfg.interval_n:
        return []
    new_procedures = consolidate(view, cfg, generator, embedder, timestamp=timestamp)
    view.set_consolidation_watermark(count)
    return new_procedures


# ---------------------------------------------------------------------------
# Prompt contract for external (LLM-backed) generators. The stub never uses
# these; they define the byte-exact rendering an external generator must send.
# ---------------------------------------------------------------------------

LESSON_EXTRACTION_SYSTEM_PROMPT = (
    "You are a reflective learning assistant that extracts actionable lessons "
    "from task experiences."
)

GENERALIZATION_SYSTEM_PROMPT = (
    "You extract generalized, reusable strategies from task experiences."
)


def _outcome_str(outcome: Outcome) -> str:
    verdict = "success" if outcome.success else "failure"
    return f"{verdict} (TS={outcome.ts:.2f}, CS={outcome.cs:.2f})"


def render_lesson_extraction_prompt(
    task: str,
    actions: Sequence[str],
    outcome: Outcome,
    *,
    role: str | None = None,
    task_summary: str | None = None,
) -> str:
    """User prompt asking an external generator for 1-3 lessons."""
    role_section = f"You are acting as: {role}." if role else ""
    summary_section = f"Task summary context: {task_summary}" if task_summary else ""
    actions_str = "; ".join(actions) if actions else "(none recorded)"
    focus = (
        "The task succeeded. Focus on which concrete actions to repeat."
        if outcome.success
        else "The task had issues. Focus on which concrete actions to change."
    )
    return (
        "Based on the following task experience, extract 1-3 concise, actionable lessons learned.\n"
        "Focus on CONCRETE actions: which tool functions should have been called, what patterns worked or failed, and what specific steps to take next time.\n"
        "Do NOT suggest vague advice like 'communicate better' or 'provide clearer instructions'.\n"
        "Instead, suggest specific tool calls or strategies.\n"
        "\n"
        f"{role_section}\n"
        f"Task: {task}\n"
        "\n"
        f"{summary_section}\n"
        f"Actions taken: {actions_str}\n"
        f"Outcome: {_outcome_str(outcome)}\n"
        "\n"
        f"{focus}\n"
        "Return the lessons as a JSON array of strings. Example:\n"
        '["Lesson 1", ...]'
    )


def render_generalization_prompt(episodes: Sequence[Episode]) -> str:
    """User prompt asking an external generator for a reusable strategy."""
    blocks = []
    for i, episode in enumerate(episodes, start=1):
        blocks.append(
            f"Episode {i}:\n"
            f"  Task: {episode.task_description}\n"
            f"  Lessons: {'; '.join(episode.lessons)}\n"
            f"  Outcome: {_outcome_str(episode.outcome)}"
        )
    episodes_str = "\n\n".join(blocks)
    return (
        "Based on the following successful task experiences, extract a generalized\n"
        "and actionable strategy and skill that can be reused in similar future situations.\n"
        "Avoid vague advice.\n"
        "\n"
        f"{episodes_str}\n"
        "\n"
        "Respond in JSON format:\n"
        '{"title": "Short descriptive title",\n'
        ' "knowledge_content": "Detailed strategy and skill description"}'
    )
