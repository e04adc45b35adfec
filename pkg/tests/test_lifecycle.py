"""Lifecycle tests: per-task updates, clustering, consolidation, pruning."""

import logging

import pytest

from teammem.embedding import HashEmbedder
from teammem.lifecycle import (
    EXTRACTION_FAILED_LESSON,
    ConsolidationConfig,
    StubGenerator,
    cluster_by_lessons,
    consolidate,
    maybe_consolidate,
    post_task_update,
    render_generalization_prompt,
    render_lesson_extraction_prompt,
    stub_extract_lessons,
    stub_generalize,
)
from teammem.store import open_store
from teammem.types import Episode, Outcome, Procedure

EMBEDDER = HashEmbedder()


def episode(agent, index, lessons, success=True, desc="triage the queue"):
    return Episode(
        agent_id=agent,
        task_index=index,
        timestamp=f"2026-01-01T00:{index:02d}:00+00:00",
        task_description=desc,
        team_composition=(agent,),
        actions=("act",),
        outcome=Outcome(ts=70.0, cs=70.0, success=success),
        lessons=tuple(lessons),
    )


def seeded_procedure(pid, sources, created="2026-01-01T00:00:00+00:00", s=1, f=0):
    return Procedure(
        procedure_id=pid,
        owner_id="agent-1",
        created_at=created,
        updated_at=created,
        title=f"Procedure {pid}",
        knowledge="Do the thing that worked.",
        successes=s,
        failures=f,
        source_episodes=frozenset(sources),
    )


# -- stub generator ---------------------------------------------------------


def test_stub_lessons_failure_fixture_is_frozen():
    out = Outcome(ts=40.0, cs=30.0, success=False)
    lessons = stub_extract_lessons(
        "migrate the billing database", ("dump schema", "copy rows"), out
    )
    assert lessons == [
        "'dump schema' did not prevent failure; adjust it before retrying.",
        "Rework 'dump schema' before taking on similar tasks soon.",
    ]


def test_stub_lessons_success_fixture_is_frozen():
    out = Outcome(ts=80.0, cs=90.0, success=True)
    lessons = stub_extract_lessons(
        "migrate the billing database", ("dump schema", "copy rows"), out
    )
    assert lessons == [
        "Repeat 'dump schema' early; it led to success.",
        "Open with 'dump schema' for similar tasks soon.",
    ]


def test_stub_lessons_plan_size_lesson_when_digest_allows():
    # this task text hashes to digest % 3 == 0, which adds the third lesson
    out = Outcome(ts=80.0, cs=90.0, success=True)
    lessons = stub_extract_lessons(
        "restore the search index", ("check snapshots", "replay journal"), out
    )
    assert lessons == [
        "Repeat 'check snapshots' early; it led to success.",
        "Open with 'check snapshots' for similar tasks soon.",
        "A plan of 2 steps was sufficient here.",
    ]


def test_stub_lessons_without_actions_uses_placeholder_opening():
    out = Outcome(ts=10.0, cs=10.0, success=False)
    lessons = stub_extract_lessons("anything at all", (), out)
    assert lessons[0] == (
        "'plan the approach first' did not prevent failure; adjust it before retrying."
    )


def test_stub_lessons_never_exceed_three():
    out = Outcome(ts=80.0, cs=90.0, success=True)
    for task in ("a", "ab", "abc", "restore the search index"):
        assert len(stub_extract_lessons(task, ("x", "y", "z"), out)) <= 3


def test_stub_generalize_picks_most_frequent_lesson():
    eps = [
        episode("a", 1, ["alpha beta gamma", "delta"]),
        episode("a", 2, ["alpha beta gamma"]),
    ]
    title, knowledge = stub_generalize(eps)
    assert title == "alpha beta gamma"
    assert knowledge == "alpha beta gamma; delta"


def test_stub_generalize_breaks_count_ties_lexicographically():
    eps = [episode("a", 1, ["zulu"]), episode("a", 2, ["alpha"])]
    title, _ = stub_generalize(eps)
    assert title == "alpha"


def test_stub_generalize_truncates_title_to_six_tokens():
    eps = [episode("a", 1, ["one two three four five six seven eight"])]
    title, _ = stub_generalize(eps)
    assert title == "one two three four five six"


def test_stub_generalize_empty_fallback():
    assert stub_generalize([]) == (
        "Reuse the prior approach",
        "Repeat what worked on similar tasks.",
    )


# -- post-task update ----------------------------------------------------------


def one_agent_view(tmp_path, topology="local"):
    return open_store(tmp_path / "store", topology, ["agent-1"])["agent-1"]


def test_post_task_update_appends_episode_and_transactive(tmp_path):
    view = one_agent_view(tmp_path)
    ep = post_task_update(
        view,
        "triage the alert queue",
        ("scan queue", "close dupes"),
        Outcome(ts=80.0, cs=80.0, success=True),
        procedures_used=(),
        generator=StubGenerator(),
        task_type="incident",
        timestamp="2026-01-01T00:00:00+00:00",
    )
    assert ep.lessons == tuple(
        stub_extract_lessons(
            "triage the alert queue",
            ("scan queue", "close dupes"),
            Outcome(ts=80.0, cs=80.0, success=True),
        )
    )
    assert len(view.episodes()) == 1
    profile = view.profiles()["agent-1"]
    assert profile.task_type_counts["incident"].attempts == 1
    assert profile.proficiency["incident"] == 1.0


def test_post_task_update_assigns_increasing_indices(tmp_path):
    view = one_agent_view(tmp_path)
    gen = StubGenerator()
    first = post_task_update(
        view, "task one", ("a",), Outcome(ts=70.0, cs=70.0, success=True), (), gen, "qa"
    )
    second = post_task_update(
        view, "task two", ("a",), Outcome(ts=70.0, cs=70.0, success=True), (), gen, "qa"
    )
    assert (first.task_index, second.task_index) == (0, 1)


def test_post_task_update_bumps_used_procedures(tmp_path):
    view = one_agent_view(tmp_path)
    view.upsert_procedure(seeded_procedure("proc-00001", ["agent-1:0"], s=2, f=0))
    post_task_update(
        view,
        "reuse the playbook",
        ("run playbook",),
        Outcome(ts=40.0, cs=40.0, success=False),
        procedures_used=("proc-00001",),
        generator=StubGenerator(),
        task_type="incident",
    )
    p = view.get_procedure("proc-00001")
    assert (p.successes, p.failures) == (2, 1)
    assert view.episodes()[0].related_procedures == frozenset({"proc-00001"})


class ExplodingGenerator:
    def extract_lessons(self, task, actions, outcome, role=None):
        raise RuntimeError("model unavailable")

    def generalize(self, episodes):
        raise RuntimeError("model unavailable")


class EmptyGenerator:
    def extract_lessons(self, task, actions, outcome, role=None):
        return ["   ", ""]

    def generalize(self, episodes):
        return ("", "")


class VerboseGenerator:
    def extract_lessons(self, task, actions, outcome, role=None):
        return [f"lesson {i}" for i in range(10)]

    def generalize(self, episodes):
        return ("t", "k")


def test_failing_generator_stores_placeholder_and_warns(tmp_path, caplog):
    view = one_agent_view(tmp_path)
    with caplog.at_level(logging.WARNING):
        ep = post_task_update(
            view,
            "task with broken extraction",
            ("a",),
            Outcome(ts=70.0, cs=70.0, success=True),
            (),
            ExplodingGenerator(),
            "qa",
        )
    assert ep.lessons == (EXTRACTION_FAILED_LESSON,)
    assert any("lesson extraction failed" in r.message for r in caplog.records)
    assert len(view.episodes()) == 1  # the episode is never lost


def test_blank_lessons_also_fall_back_to_placeholder(tmp_path):
    view = one_agent_view(tmp_path)
    ep = post_task_update(
        view, "t", ("a",), Outcome(ts=70.0, cs=70.0, success=True), (), EmptyGenerator(), "qa"
    )
    assert ep.lessons == (EXTRACTION_FAILED_LESSON,)


def test_oversized_lesson_lists_are_truncated(tmp_path):
    view = one_agent_view(tmp_path)
    ep = post_task_update(
        view, "t", ("a",), Outcome(ts=70.0, cs=70.0, success=True), (), VerboseGenerator(), "qa"
    )
    assert ep.lessons == ("lesson 0", "lesson 1", "lesson 2")


# -- clustering ------------------------------------------------------------------


def test_identical_lessons_cluster_together():
    eps = [episode("a", 1, ["alpha beta gamma"]), episode("a", 2, ["alpha beta gamma"])]
    clusters = cluster_by_lessons(eps, EMBEDDER, 0.80)
    assert len(clusters) == 1 and len(clusters[0]) == 2


def test_unrelated_lessons_stay_apart():
    eps = [episode("a", 1, ["alpha beta gamma"]), episode("a", 2, ["start zulu route"])]
    clusters = cluster_by_lessons(eps, EMBEDDER, 0.80)
    assert len(clusters) == 2


def test_single_link_chains_merge():
    # a~b and b~c clear the threshold (0.857), a~c does not (0.714); single
    # linkage still puts all three in one cluster
    eps = [
        episode("a", 1, ["keep alpha keep beta gamma"]),
        episode("a", 2, ["keep alpha keep beta delta"]),
        episode("a", 3, ["keep alpha keep omega delta"]),
    ]
    clusters = cluster_by_lessons(eps, EMBEDDER, 0.80)
    assert len(clusters) == 1 and len(clusters[0]) == 3


def test_clusters_preserve_input_order():
    eps = [
        episode("a", 1, ["alpha beta gamma"]),
        episode("a", 2, ["start zulu route"]),
        episode("a", 3, ["alpha beta gamma"]),
    ]
    clusters = cluster_by_lessons(eps, EMBEDDER, 0.80)
    assert [[e.task_index for e in c] for c in clusters] == [[1, 3], [2]]


def test_lessonless_episodes_do_not_cluster_with_anything():
    eps = [episode("a", 1, []), episode("a", 2, []), episode("a", 3, ["alpha beta"])]
    clusters = cluster_by_lessons(eps, EMBEDDER, 0.80)
    # zero vectors have cosine 0 with everything, including each other
    assert [len(c) for c in clusters] == [1, 1, 1]


# -- consolidation ----------------------------------------------------------------


CFG = ConsolidationConfig(interval_n=5)


def test_cluster_with_one_success_is_not_generalized(tmp_path):
    view = one_agent_view(tmp_path)
    view.append_episode(episode("agent-1", 1, ["alpha beta gamma"], success=True))
    view.append_episode(episode("agent-1", 2, ["alpha beta gamma"], success=False))
    created = consolidate(view, CFG, StubGenerator(), EMBEDDER)
    assert created == []
    assert view.procedures() == {}


def test_two_successes_become_one_procedure(tmp_path):
    view = one_agent_view(tmp_path)
    view.append_episode(episode("agent-1", 1, ["alpha beta gamma"], success=True))
    view.append_episode(episode("agent-1", 2, ["alpha beta gamma"], success=True))
    created = consolidate(
        view, CFG, StubGenerator(), EMBEDDER, timestamp="2026-01-01T01:00:00+00:00"
    )
    assert len(created) == 1
    p = created[0]
    assert p.procedure_id == "proc-00001"
    assert p.owner_id == "agent-1"  # local topology keeps ownership private
    assert (p.successes, p.failures) == (2, 0)
    assert p.source_episodes == frozenset({"agent-1:1", "agent-1:2"})
    assert p.title == "alpha beta gamma"
    assert p.created_at == "2026-01-01T01:00:00+00:00"
    assert view.get_procedure("proc-00001") == p


def test_failed_members_are_excluded_from_sources(tmp_path):
    view = one_agent_view(tmp_path)
    view.append_episode(episode("agent-1", 1, ["alpha beta gamma"], success=True))
    view.append_episode(episode("agent-1", 2, ["alpha beta gamma"], success=True))
    view.append_episode(episode("agent-1", 3, ["alpha beta gamma"], success=False))
    (p,) = consolidate(view, CFG, StubGenerator(), EMBEDDER)
    assert p.source_episodes == frozenset({"agent-1:1", "agent-1:2"})
    assert p.successes == 2


def test_shared_topology_consolidates_into_shared_owner(tmp_path):
    views = open_store(tmp_path / "store", "shared", ["agent-1", "agent-2"])
    views["agent-1"].append_episode(episode("agent-1", 1, ["alpha beta gamma"]))
    views["agent-2"].append_episode(episode("agent-2", 1, ["alpha beta gamma"]))
    (p,) = consolidate(views["agent-1"], CFG, StubGenerator(), EMBEDDER)
    assert p.owner_id == "shared"
    assert p.source_episodes == frozenset({"agent-1:1", "agent-2:1"})
    assert views["agent-2"].get_procedure(p.procedure_id) is not None


def test_strict_subset_procedures_are_pruned(tmp_path):
    view = one_agent_view(tmp_path)
    view.upsert_procedure(seeded_procedure("proc-00001", ["agent-1:1"]))
    view.upsert_procedure(seeded_procedure("proc-00002", ["agent-1:1", "agent-1:2"]))
    consolidate(view, CFG, StubGenerator(), EMBEDDER)
    assert sorted(view.procedures()) == ["proc-00002"]


def test_equal_source_sets_keep_the_more_reliable(tmp_path):
    view = one_agent_view(tmp_path)
    view.upsert_procedure(seeded_procedure("proc-00001", ["agent-1:1"], s=1, f=1))
    view.upsert_procedure(seeded_procedure("proc-00002", ["agent-1:1"], s=3, f=0))
    consolidate(view, CFG, StubGenerator(), EMBEDDER)
    assert sorted(view.procedures()) == ["proc-00002"]


def test_equal_source_sets_and_reliability_keep_the_earlier(tmp_path):
    view = one_agent_view(tmp_path)
    view.upsert_procedure(
        seeded_procedure("proc-00002", ["agent-1:1"], created="2026-01-01T00:00:00+00:00")
    )
    view.upsert_procedure(
        seeded_procedure("proc-00001", ["agent-1:1"], created="2026-01-02T00:00:00+00:00")
    )
    consolidate(view, CFG, StubGenerator(), EMBEDDER)
    assert sorted(view.procedures()) == ["proc-00002"]


def test_fully_tied_duplicates_keep_the_lower_id(tmp_path):
    view = one_agent_view(tmp_path)
    view.upsert_procedure(seeded_procedure("proc-00002", ["agent-1:1"]))
    view.upsert_procedure(seeded_procedure("proc-00001", ["agent-1:1"]))
    consolidate(view, CFG, StubGenerator(), EMBEDDER)
    assert sorted(view.procedures()) == ["proc-00001"]


def test_generalization_failure_skips_cluster_with_warning(tmp_path, caplog):
    view = one_agent_view(tmp_path)
    view.append_episode(episode("agent-1", 1, ["alpha beta gamma"]))
    view.append_episode(episode("agent-1", 2, ["alpha beta gamma"]))
    with caplog.at_level(logging.WARNING):
        created = consolidate(view, CFG, ExplodingGenerator(), EMBEDDER)
    assert created == []
    assert view.procedures() == {}
    assert any("generalization failed" in r.message for r in caplog.records)


def test_empty_generalization_output_also_skips(tmp_path):
    view = one_agent_view(tmp_path)
    view.append_episode(episode("agent-1", 1, ["alpha beta gamma"]))
    view.append_episode(episode("agent-1", 2, ["alpha beta gamma"]))
    created = consolidate(view, CFG, EmptyGenerator(), EMBEDDER)
    assert created == []


def test_consolidation_never_deletes_episodes(tmp_path):
    view = one_agent_view(tmp_path)
    for i in range(1, 5):
        view.append_episode(episode("agent-1", i, ["alpha beta gamma"]))
    consolidate(view, CFG, StubGenerator(), EMBEDDER)
    assert len(view.episodes()) == 4


# -- the watermark trigger ---------------------------------------------------------


def test_maybe_consolidate_waits_for_the_interval(tmp_path):
    view = one_agent_view(tmp_path)
    cfg = ConsolidationConfig(interval_n=3)
    gen = StubGenerator()
    view.append_episode(episode("agent-1", 1, ["alpha beta gamma"]))
    view.append_episode(episode("agent-1", 2, ["alpha beta gamma"]))
    assert maybe_consolidate(view, cfg, gen, EMBEDDER) == []
    assert view.consolidation_watermark() == 0
    view.append_episode(episode("agent-1", 3, ["alpha beta gamma"]))
    created = maybe_consolidate(view, cfg, gen, EMBEDDER)
    assert len(created) == 1
    assert view.consolidation_watermark() == 3
    # immediately after, the counter is reset relative to the new watermark
    assert maybe_consolidate(view, cfg, gen, EMBEDDER) == []


def test_watermark_blocks_reconsolidation_after_reopen(tmp_path):
    view = one_agent_view(tmp_path)
    cfg = ConsolidationConfig(interval_n=2)
    gen = StubGenerator()
    view.append_episode(episode("agent-1", 1, ["alpha beta gamma"]))
    view.append_episode(episode("agent-1", 2, ["alpha beta gamma"]))
    maybe_consolidate(view, cfg, gen, EMBEDDER)
    reopened = open_store(tmp_path / "store")["agent-1"]
    assert reopened.consolidation_watermark() == 2
    assert maybe_consolidate(reopened, cfg, gen, EMBEDDER) == []


def test_consolidation_config_validation():
    with pytest.raises(ValueError):
        ConsolidationConfig(interval_n=0)
    with pytest.raises(ValueError):
        ConsolidationConfig(min_cluster=0)


# -- prompt templates for external generators ----------------------------------------


def test_lesson_extraction_prompt_snapshot():
    text = render_lesson_extraction_prompt(
        "migrate the billing database",
        ("dump schema", "copy rows"),
        Outcome(ts=40.0, cs=30.0, success=False),
        role="database operator",
    )
    assert "Task: migrate the billing database" in text
    assert "You are acting as: database operator." in text
    assert "Actions taken: dump schema; copy rows" in text
    assert "Outcome: failure (TS=40.00, CS=30.00)" in text
    assert "The task had issues. Focus on which concrete actions to change." in text
    assert text.endswith('["Lesson 1", ...]')


def test_lesson_extraction_prompt_success_branch():
    text = render_lesson_extraction_prompt(
        "t", (), Outcome(ts=80.0, cs=90.0, success=True)
    )
    assert "Outcome: success (TS=80.00, CS=90.00)" in text
    assert "Actions taken: (none recorded)" in text
    assert "The task succeeded. Focus on which concrete actions to repeat." in text


def test_generalization_prompt_snapshot():
    eps = [
        episode("a", 1, ["alpha beta"], desc="first task"),
        episode("a", 2, ["gamma delta"], desc="second task"),
    ]
    text = render_generalization_prompt(eps)
    assert "Episode 1:\n  Task: first task\n  Lessons: alpha beta" in text
    assert "Episode 2:\n  Task: second task\n  Lessons: gamma delta" in text
    assert text.endswith('"knowledge_content": "Detailed strategy and skill description"}')
