"""Complexity scoring, agent sizing, and comparison planning."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from gazecoach.complexity import (
    EMPTY_POOL,
    POLICIES,
    POLICY_BY_COMPLEXITY,
    POLICY_BY_ERROR_COUNT,
    RESIDUAL_POOL,
    agent_count,
    assess,
    error_complexity,
    plan_comparisons,
    student_pools,
)
from gazecoach.graph import build_thought_graph

from conftest import fx, make_session, make_transcript, sent


def graph_of(labels, *, case_id="c1", role="teacher", empty=(), residual=False):
    """Graph with one sentence per label; findings in ``empty`` get no gaze."""
    sentences = [
        sent(k, k * 1000, k * 1000 + 500, label) for k, label in enumerate(labels)
    ]
    fixations = [
        fx(0.1 * (k + 1) % 1.0, 0.2, k * 1000 + 100, 101)
        for k, label in enumerate(labels)
        if label not in empty
    ]
    if residual:
        fixations.append(fx(0.9, 0.9, len(labels) * 1000 + 100, 51))
    fixations.sort(key=lambda f: f.onset_ms)
    return build_thought_graph(
        make_session(case_id=case_id, role=role, fixations=fixations),
        make_transcript(case_id=case_id, role=role, sentences=sentences),
    )


class TestErrorComplexity:
    @pytest.mark.parametrize(
        "n_t,n_s,expected",
        [
            (7, 7, (0, 0)),
            (5, 3, (2, 6)),
            (3, 1, (2, 2)),
            (0, 0, (0, 0)),
            (4, 0, (4, 0)),
            (0, 4, (4, 16)),
            (1, 6, (5, 30)),
        ],
    )
    def test_hand_oracle(self, n_t, n_s, expected):
        assert error_complexity(n_t, n_s) == expected

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            error_complexity(-1, 0)
        with pytest.raises(ValueError):
            error_complexity(0, -1)

    @given(st.integers(0, 50), st.integers(0, 50))
    def test_delta_symmetric_and_formula(self, a, b):
        delta_ab, c_ab = error_complexity(a, b)
        delta_ba, _ = error_complexity(b, a)
        assert delta_ab == delta_ba == abs(a - b)
        assert c_ab == delta_ab * b

    @given(st.integers(0, 50), st.integers(0, 49))
    def test_widening_gap_never_lowers_score(self, n_s, n_t):
        # moving the teacher count further from n_s grows delta_n, and the
        # score scales with it
        far = n_t + 1 if n_t >= n_s else n_t
        near = n_t if n_t >= n_s else n_t + 1
        assert error_complexity(far, n_s)[1] >= error_complexity(near, n_s)[1]


class TestAgentCount:
    def test_zero_score_recruits_nobody(self):
        for policy in POLICIES:
            assert agent_count(0, 0, policy) == 0
            # structural agreement wins even when labels diverge
            assert agent_count(0, 3, policy) == 0

    def test_by_complexity_uncapped(self):
        assert agent_count(6, 2, POLICY_BY_COMPLEXITY) == 6

    def test_by_error_count_uncapped(self):
        assert agent_count(6, 2, POLICY_BY_ERROR_COUNT) == 2

    def test_cap_applies(self):
        assert agent_count(6, 2, POLICY_BY_COMPLEXITY, cap=4) == 4
        assert agent_count(6, 5, POLICY_BY_ERROR_COUNT, cap=3) == 3

    def test_cap_above_need_is_inert(self):
        assert agent_count(6, 2, POLICY_BY_COMPLEXITY, cap=100) == 6

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            agent_count(1, 1, "round_robin")
        with pytest.raises(ValueError):
            agent_count(1, 1, POLICY_BY_COMPLEXITY, cap=0)
        with pytest.raises(ValueError):
            agent_count(-1, 0, POLICY_BY_COMPLEXITY)

    @given(
        st.integers(0, 200),
        st.integers(0, 50),
        st.sampled_from(POLICIES),
        st.one_of(st.none(), st.integers(1, 20)),
    )
    def test_count_matches_policy_formula(self, c_error, missed, policy, cap):
        got = agent_count(c_error, missed, policy, cap)
        if c_error == 0:
            assert got == 0
        else:
            want = c_error if policy == POLICY_BY_COMPLEXITY else missed
            if cap is not None:
                want = min(want, cap)
            assert got == want


class TestAssess:
    def test_worked_example(self):
        teacher = graph_of(["a", "b", "c", "d", "e"])
        student = graph_of(["a", "b", "c"], role="student")
        result = assess(teacher, student)
        assert (result.n_teacher, result.n_student) == (5, 3)
        assert (result.delta_n, result.c_error) == (2, 6)
        assert result.n_agents == 6
        assert result.missed == ("d", "e")
        assert result.extra == ()

    def test_by_error_count_policy(self):
        teacher = graph_of(["a", "b", "c", "d", "e"])
        student = graph_of(["a", "b", "c"], role="student")
        result = assess(teacher, student, policy=POLICY_BY_ERROR_COUNT)
        assert result.n_agents == 2
        assert result.policy == POLICY_BY_ERROR_COUNT

    def test_equal_counts_different_labels_gate(self):
        # label swap: counts agree, so the score (and agent pool) is zero
        teacher = graph_of(["a", "b"])
        student = graph_of(["a", "x"], role="student")
        result = assess(teacher, student)
        assert result.c_error == 0
        assert result.n_agents == 0
        assert result.missed == ("b",)
        assert result.extra == ("x",)

    def test_to_dict_key_order(self):
        teacher = graph_of(["a"])
        student = graph_of([], role="student")
        payload = assess(teacher, student).to_dict()
        assert list(payload) == [
            "case_id", "n_teacher", "n_student", "delta_n", "c_error",
            "n_agents", "policy", "agent_cap", "missed", "extra",
        ]


class TestStudentPools:
    def test_nonempty_subgraphs_only(self):
        student = graph_of(["a", "b", "c"], role="student", empty={"b"})
        assert student_pools(student) == ["a", "c"]

    def test_residual_appended_last(self):
        student = graph_of(["a"], role="student", residual=True)
        assert student_pools(student) == ["a", RESIDUAL_POOL]

    def test_no_gaze_at_all(self):
        student = graph_of(["a", "b"], role="student", empty={"a", "b"})
        assert student_pools(student) == []


class TestPlanComparisons:
    def _plan(self, teacher_labels, student_labels, policy=POLICY_BY_COMPLEXITY,
              cap=None, **student_kw):
        teacher = graph_of(teacher_labels)
        student = graph_of(student_labels, role="student", **student_kw)
        assessment = assess(teacher, student, policy=policy, agent_cap=cap)
        return assessment, plan_comparisons(assessment, teacher, student)

    def test_worked_example_six_tasks(self):
        # 2 missed findings x 3 nonempty student pools, no residual
        assessment, plan = self._plan(list("abcde"), list("abc"))
        assert assessment.c_error == 6
        assert len(plan.tasks) == 6
        assert plan.n_agents == 6
        assert [t.task_id for t in plan.tasks] == [
            "f00p00", "f00p01", "f00p02", "f01p00", "f01p01", "f01p02",
        ]
        assert [t.agent_slot for t in plan.tasks] == [0, 1, 2, 3, 4, 5]
        assert {t.missed_finding_label for t in plan.tasks} == {"d", "e"}
        assert {t.student_subgraph_label for t in plan.tasks} == {"a", "b", "c"}

    def test_single_pool_example(self):
        _, plan = self._plan(list("abc"), ["a"])
        assert [(t.missed_finding_label, t.student_subgraph_label, t.agent_slot)
                for t in plan.tasks] == [("b", "a", 0), ("c", "a", 1)]

    def test_residual_pool_included(self):
        _, plan = self._plan(list("ab"), ["a"], residual=True)
        pools = [t.student_subgraph_label for t in plan.tasks]
        assert pools == ["a", RESIDUAL_POOL]

    def test_empty_pool_fallback(self):
        _, plan = self._plan(list("ab"), ["a"], empty={"a"})
        assert len(plan.tasks) == 1
        assert plan.tasks[0].student_subgraph_label == EMPTY_POOL

    def test_zero_agents_empty_plan(self):
        assessment, plan = self._plan(["a"], ["a"])
        assert assessment.n_agents == 0
        assert plan.tasks == ()

    def test_by_error_count_slot_per_finding(self):
        _, plan = self._plan(list("abcd"), list("ab"), policy=POLICY_BY_ERROR_COUNT)
        # 2 agents, 2 missed findings x 2 pools; each finding keeps one slot
        assert plan.n_agents == 2
        for task in plan.tasks:
            f_idx = int(task.task_id[1:3])
            assert task.agent_slot == f_idx % plan.n_agents

    def test_capped_round_robin_wraps(self):
        _, plan = self._plan(list("abcde"), list("abc"), cap=4)
        assert plan.n_agents == 4
        assert [t.agent_slot for t in plan.tasks] == [0, 1, 2, 3, 0, 1]

    def test_tasks_for_finding(self):
        _, plan = self._plan(list("abcde"), list("abc"))
        tasks = plan.tasks_for_finding("d")
        assert len(tasks) == 3
        assert all(t.missed_finding_label == "d" for t in tasks)

    def test_case_mismatch_rejected(self):
        teacher = graph_of(["a", "b"])
        student = graph_of(["a"], role="student", case_id="c2")
        assessment = assess(teacher, graph_of(["a"], role="student"))
        with pytest.raises(ValueError):
            plan_comparisons(assessment, teacher, student)

    def test_plan_to_dict(self):
        _, plan = self._plan(list("ab"), ["a"])
        payload = plan.to_dict()
        assert list(payload) == ["case_id", "policy", "n_agents", "tasks"]
        assert payload["tasks"][0] == {
            "task_id": "f00p00",
            "missed_finding_label": "b",
            "student_subgraph_label": "a",
            "agent_slot": 0,
        }


@st.composite
def case_shapes(draw):
    teacher_n = draw(st.integers(0, 6))
    student_keep = draw(st.integers(0, teacher_n))
    residual = draw(st.booleans())
    policy = draw(st.sampled_from(POLICIES))
    cap = draw(st.one_of(st.none(), st.integers(1, 8)))
    return teacher_n, student_keep, residual, policy, cap


@given(case_shapes())
def test_plan_shape_property(shape):
    """Task count is |missed| * |pools| and slots stay within the agent pool."""
    teacher_n, student_keep, residual, policy, cap = shape
    labels = [f"f{k}" for k in range(teacher_n)]
    teacher = graph_of(labels)
    student = graph_of(labels[:student_keep], role="student", residual=residual)
    assessment = assess(teacher, student, policy=policy, agent_cap=cap)
    plan = plan_comparisons(assessment, teacher, student)

    n_pools = len(student_pools(student)) or 1
    if assessment.n_agents == 0:
        assert plan.tasks == ()
    else:
        assert len(plan.tasks) == len(assessment.missed) * n_pools
        assert all(0 <= t.agent_slot < assessment.n_agents for t in plan.tasks)
        assert [t.task_id for t in plan.tasks] == sorted(t.task_id for t in plan.tasks)
        # here every miss is structural, so |missed| == delta_n and the
        # uncapped task count revisits the score itself
        if cap is None and policy == POLICY_BY_COMPLEXITY and student_keep:
            assert len(plan.tasks) == assessment.c_error + assessment.delta_n * int(residual)


@given(case_shapes())
def test_plan_deterministic(shape):
    teacher_n, student_keep, residual, policy, cap = shape
    labels = [f"f{k}" for k in range(teacher_n)]
    teacher = graph_of(labels)
    student = graph_of(labels[:student_keep], role="student", residual=residual)
    assessment = assess(teacher, student, policy=policy, agent_cap=cap)
    assert plan_comparisons(assessment, teacher, student) == plan_comparisons(
        assessment, teacher, student
    )
