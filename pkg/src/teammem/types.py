"""Core value types for the memory engine.

Everything in here is a plain immutable value object with an explicit JSON
shape (snake_case keys, matching the ``*_to_dict`` / ``*_from_dict`` pairs).
The three memory kinds are:

* episodic: one :class:`Episode` per finished task,
* procedural: generalized :class:`Procedure` strategies with evidence counters,
* transactive: who-knows-what bookkeeping (:class:`AgentProfile`,
  :class:`TeamPattern`).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Literal, NamedTuple

# Combined task score is on a 0-100 scale; success compares the rescaled
# score (S/100) against this threshold.
DEFAULT_SUCCESS_THRESHOLD = 0.60

# Reliability-style ratios fall back to a neutral prior before any evidence.
NEUTRAL_RELIABILITY = 0.5

MemoryKind = Literal["episodic", "procedural"]


class CollabStats(NamedTuple):
    """Joint work counters for one partner in a collaboration history."""

    joint_tasks: int
    joint_successes: int


class TypeStats(NamedTuple):
    """Attempt/success counters for one task type."""

    attempts: int
    successes: int

    def rate(self) -> float:
        return self.successes / self.attempts if self.attempts else 0.0


@dataclass(frozen=True)
class Outcome:
    """Result of one task: teamwork score, completion score, success flag.

    ``ts`` and ``cs`` live on a 0-100 scale. The success flag is stored
    explicitly so callers may override the threshold rule when the
    environment supplies its own verdict.
    """

    ts: float
    cs: float
    success: bool

    def __post_init__(self) -> None:
        for name, value in (("ts", self.ts), ("cs", self.cs)):
            if not 0.0 <= float(value) <= 100.0:
                raise ValueError(f"Outcome.{name} must be in [0, 100], got {value!r}")


def combined_score(outcome: Outcome) -> float:
    """Per-task combined score: the mean of teamwork and completion scores."""
    return (outcome.ts + outcome.cs) / 2.0


def outcome_from_scores(
    ts: float, cs: float, success_threshold: float = DEFAULT_SUCCESS_THRESHOLD
) -> Outcome:
    """Build an Outcome, deriving success from the rescaled combined score."""
    success = (ts + cs) / 2.0 / 100.0 >= success_threshold
    return Outcome(ts=ts, cs=cs, success=success)


def canonical_team_key(agent_ids: Iterable[str]) -> tuple[str, ...]:
    """Sorted, deduplicated tuple of agent ids; the canonical team identity."""
    key = tuple(sorted(set(agent_ids)))
    if not key:
        raise ValueError("team composition must contain at least one agent id")
    return key


@dataclass(frozen=True)
class Episode:
    """One remembered task execution.

    ``task_index`` is the position in the owning agent's lifelong task
    sequence and, together with ``agent_id``, identifies the episode.
    ``timestamp`` is display metadata only; ordering always uses the index.
    """

    agent_id: str
    task_index: int
    timestamp: str
    task_description: str
    team_composition: tuple[str, ...]
    actions: tuple[str, ...]
    outcome: Outcome
    env_context: str = ""
    lessons: tuple[str, ...] = ()
    related_procedures: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.task_index < 0:
            raise ValueError(f"task_index must be >= 0, got {self.task_index}")
        object.__setattr__(self, "team_composition", tuple(self.team_composition))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "lessons", tuple(self.lessons))
        object.__setattr__(
            self, "related_procedures", frozenset(self.related_procedures)
        )

    @property
    def episode_id(self) -> str:
        return f"{self.agent_id}:{self.task_index}"


@dataclass(frozen=True)
class Procedure:
    """A generalized, reusable strategy distilled from successful episodes.

    ``successes`` / ``failures`` count later applications of the procedure;
    its reliability is derived from them (see :func:`derive_reliability`).
    """

    procedure_id: str
    owner_id: str
    created_at: str
    updated_at: str
    title: str
    knowledge: str
    successes: int = 0
    failures: int = 0
    source_episodes: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.successes < 0 or self.failures < 0:
            raise ValueError("procedure counters must be non-negative")
        if self.updated_at < self.created_at:
            raise ValueError(
                f"updated_at ({self.updated_at}) precedes created_at ({self.created_at})"
            )
        if not self.source_episodes:
            raise ValueError("source_episodes must be non-empty")
        object.__setattr__(self, "source_episodes", frozenset(self.source_episodes))


def derive_reliability(procedure: Procedure) -> float:
    """Success ratio of a procedure; neutral 0.5 before any evidence."""
    total = procedure.successes + procedure.failures
    if total == 0:
        return NEUTRAL_RELIABILITY
    return procedure.successes / total


@dataclass(frozen=True)
class AgentProfile:
    """Transactive record of one agent's demonstrated capabilities.

    ``proficiency`` maps task type to the agent's running success rate on
    that type; ``task_type_counts`` holds the attempt/success counters the
    rate is derived from. ``collaboration_history`` maps partner agent id
    to joint work counters.
    """

    agent_id: str
    specializations: frozenset[str] = frozenset()
    proficiency: dict[str, float] = field(default_factory=dict)
    task_type_counts: dict[str, TypeStats] = field(default_factory=dict)
    collaboration_history: dict[str, CollabStats] = field(default_factory=dict)
    successes: int = 0
    total_tasks: int = 0

    def __post_init__(self) -> None:
        if self.successes < 0 or self.total_tasks < 0:
            raise ValueError("profile counters must be non-negative")
        if self.successes > self.total_tasks:
            raise ValueError("successes cannot exceed total_tasks")
        object.__setattr__(self, "specializations", frozenset(self.specializations))

    def with_task_result(self, task_type: str, success: bool) -> "AgentProfile":
        """New profile with one more attempted task of ``task_type``."""
        old = self.task_type_counts.get(task_type, TypeStats(0, 0))
        stats = TypeStats(old.attempts + 1, old.successes + int(success))
        counts = dict(self.task_type_counts)
        counts[task_type] = stats
        proficiency = dict(self.proficiency)
        proficiency[task_type] = stats.rate()
        return AgentProfile(
            agent_id=self.agent_id,
            specializations=self.specializations | {task_type},
            proficiency=proficiency,
            task_type_counts=counts,
            collaboration_history=dict(self.collaboration_history),
            successes=self.successes + int(success),
            total_tasks=self.total_tasks + 1,
        )

    def with_collaboration(self, partner: str, success: bool) -> "AgentProfile":
        """New profile with one more joint task alongside ``partner``."""
        old = self.collaboration_history.get(partner, CollabStats(0, 0))
        history = dict(self.collaboration_history)
        history[partner] = CollabStats(old.joint_tasks + 1, old.joint_successes + int(success))
        return AgentProfile(
            agent_id=self.agent_id,
            specializations=self.specializations,
            proficiency=dict(self.proficiency),
            task_type_counts=dict(self.task_type_counts),
            collaboration_history=history,
            successes=self.successes,
            total_tasks=self.total_tasks,
        )


def derive_agent_reliability(profile: AgentProfile) -> float:
    """Overall success ratio of an agent; neutral 0.5 before any evidence."""
    if profile.total_tasks == 0:
        return NEUTRAL_RELIABILITY
    return profile.successes / profile.total_tasks


# A team's task type counts as suited once its success rate reaches
# SUITED_MIN_RATE over at least SUITED_MIN_ATTEMPTS attempts.
SUITED_MIN_RATE = 0.5
SUITED_MIN_ATTEMPTS = 2


@dataclass(frozen=True)
class TeamPattern:
    """Transactive record of how one team composition performs by task type."""

    composition: tuple[str, ...]
    suited_task_types: dict[str, TypeStats] = field(default_factory=dict)

    def __post_init__(self) -> None:
        canonical = canonical_team_key(self.composition)
        if tuple(self.composition) != canonical:
            raise ValueError(
                f"composition must be canonical (sorted, deduplicated): {canonical}"
            )

    def with_result(self, task_type: str, success: bool) -> "TeamPattern":
        old = self.suited_task_types.get(task_type, TypeStats(0, 0))
        counts = dict(self.suited_task_types)
        counts[task_type] = TypeStats(old.attempts + 1, old.successes + int(success))
        return TeamPattern(composition=self.composition, suited_task_types=counts)

    def is_suited(self, task_type: str) -> bool:
        stats = self.suited_task_types.get(task_type)
        if stats is None or stats.attempts < SUITED_MIN_ATTEMPTS:
            return False
        return stats.rate() >= SUITED_MIN_RATE

    @property
    def suited_types(self) -> frozenset[str]:
        return frozenset(t for t in self.suited_task_types if self.is_suited(t))


@dataclass(frozen=True)
class MemoryItem:
    """Uniform retrieval candidate wrapping an episode or a procedure.

    ``payload`` keeps a reference to the wrapped object for rendering; it is
    query-time scaffolding and never serialized.
    """

    kind: MemoryKind
    id: str
    text_for_embedding: str
    importance_raw: float
    payload: Any = field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# JSON codecs. Keys are the wire contract; keep them stable.
# ---------------------------------------------------------------------------


def outcome_to_dict(o: Outcome) -> dict[str, Any]:
    return {"ts": o.ts, "cs": o.cs, "success": o.success}


def outcome_from_dict(d: dict[str, Any]) -> Outcome:
    return Outcome(ts=d["ts"], cs=d["cs"], success=d["success"])


def episode_to_dict(e: Episode) -> dict[str, Any]:
    return {
        "agent_id": e.agent_id,
        "task_index": e.task_index,
        "timestamp": e.timestamp,
        "task_description": e.task_description,
        "team_composition": list(e.team_composition),
        "actions": list(e.actions),
        "outcome": outcome_to_dict(e.outcome),
        "env_context": e.env_context,
        "lessons": list(e.lessons),
        "related_procedures": sorted(e.related_procedures),
    }


def episode_from_dict(d: dict[str, Any]) -> Episode:
    return Episode(
        agent_id=d["agent_id"],
        task_index=d["task_index"],
        timestamp=d["timestamp"],
        task_description=d["task_description"],
        team_composition=tuple(d["team_composition"]),
        actions=tuple(d["actions"]),
        outcome=outcome_from_dict(d["outcome"]),
        env_context=d.get("env_context", ""),
        lessons=tuple(d["lessons"]),
        related_procedures=frozenset(d["related_procedures"]),
    )


def procedure_to_dict(p: Procedure) -> dict[str, Any]:
    return {
        "procedure_id": p.procedure_id,
        "owner_id": p.owner_id,
        "created_at": p.created_at,
        "updated_at": p.updated_at,
        "title": p.title,
        "knowledge": p.knowledge,
        "successes": p.successes,
        "failures": p.failures,
        "source_episodes": sorted(p.source_episodes),
    }


def procedure_from_dict(d: dict[str, Any]) -> Procedure:
    return Procedure(
        procedure_id=d["procedure_id"],
        owner_id=d["owner_id"],
        created_at=d["created_at"],
        updated_at=d["updated_at"],
        title=d["title"],
        knowledge=d["knowledge"],
        successes=d["successes"],
        failures=d["failures"],
        source_episodes=frozenset(d["source_episodes"]),
    )


def agent_profile_to_dict(a: AgentProfile) -> dict[str, Any]:
    return {
        "agent_id": a.agent_id,
        "specializations": sorted(a.specializations),
        "proficiency": {k: a.proficiency[k] for k in sorted(a.proficiency)},
        "task_type_counts": {
            k: {"attempts": v.attempts, "successes": v.successes}
            for k, v in sorted(a.task_type_counts.items())
        },
        "collaboration_history": {
            k: {"joint_tasks": v.joint_tasks, "joint_successes": v.joint_successes}
            for k, v in sorted(a.collaboration_history.items())
        },
        "successes": a.successes,
        "total_tasks": a.total_tasks,
    }


def agent_profile_from_dict(d: dict[str, Any]) -> AgentProfile:
    return AgentProfile(
        agent_id=d["agent_id"],
        specializations=frozenset(d["specializations"]),
        proficiency=dict(d["proficiency"]),
        task_type_counts={
            k: TypeStats(v["attempts"], v["successes"])
            for k, v in d["task_type_counts"].items()
        },
        collaboration_history={
            k: CollabStats(v["joint_tasks"], v["joint_successes"])
            for k, v in d["collaboration_history"].items()
        },
        successes=d["successes"],
        total_tasks=d["total_tasks"],
    )


def team_pattern_to_dict(t: TeamPattern) -> dict[str, Any]:
    return {
        "composition": list(t.composition),
        "suited_task_types": {
            k: {"attempts": v.attempts, "successes": v.successes}
            for k, v in sorted(t.suited_task_types.items())
        },
    }


def team_pattern_from_dict(d: dict[str, Any]) -> TeamPattern:
    return TeamPattern(
        composition=tuple(d["composition"]),
        suited_task_types={
            k: TypeStats(v["attempts"], v["successes"])
            for k, v in d["suited_task_types"].items()
        },
    )
