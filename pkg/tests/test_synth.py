"""Error injection: the three transformations and balanced corpus generation."""

from __future__ import annotations

import json

import pytest

from gazecoach.agents import ErrorType, run_case
from gazecoach.config import RunConfig
from gazecoach.core import (
    GazeSession,
    parse_session,
    parse_transcript,
    serialize_session,
)
from gazecoach.graph import map_fixations
from gazecoach.synth import (
    SYNTH_TYPES,
    SynthesisError,
    apply_error,
    eligible_findings,
    generate_corpus,
    load_distractors,
    synth_incomplete_knowledge,
    synth_missed_fixation,
    synth_reduced_fixation,
    write_corpus,
)

from conftest import fx, load_case, make_session, make_transcript, sent


@pytest.fixture(scope="module")
def distractors():
    return load_distractors()


def mapped_indices(pair, finding):
    mapping, _ = map_fixations(*pair)
    return mapping[finding]


class TestMissedFixation:
    def test_fixture_oracle(self, cxr1):
        # hand count: pleural effusion owns fixtures 3 and 4 of 8
        assert mapped_indices(cxr1, "pleural effusion") == [3, 4]
        session, transcript = synth_missed_fixation(cxr1, "pleural effusion")
        assert len(session) == 6
        assert len(transcript.sentences) == len(cxr1[1].sentences) - 1

    def test_target_gaze_removed_rest_bit_identical(self, cxr1):
        session, transcript = synth_missed_fixation(cxr1, "pleural effusion")
        expert_session, expert_transcript = cxr1
        removed = set(mapped_indices(cxr1, "pleural effusion"))
        survivors = [
            f for i, f in enumerate(expert_session.fixations) if i not in removed
        ]
        assert list(session.fixations) == survivors
        assert [s for s in transcript.sentences] == [
            s for s in expert_transcript.sentences
            if s.finding_label != "pleural effusion"
        ]

    def test_student_roles(self, cxr1):
        session, transcript = synth_missed_fixation(cxr1, "atelectasis")
        assert session.reader_role == "student"
        assert transcript.reader_role == "student"
        assert session.case_id == cxr1[0].case_id

    def test_unknown_finding(self, cxr1):
        with pytest.raises(SynthesisError):
            synth_missed_fixation(cxr1, "phantom")

    def test_gazeless_finding_rejected(self):
        # a labeled sentence whose window holds no fixation midpoint
        pair = (
            make_session(fixations=[fx(0.5, 0.5, 5000, 100)]),
            make_transcript(sentences=[sent(0, 0, 1000, "empty-window")]),
        )
        with pytest.raises(SynthesisError):
            synth_missed_fixation(pair, "empty-window")


class TestReducedFixation:
    def test_durations_floor_halved(self, cxr1):
        expert_session, _ = cxr1
        session, transcript = synth_reduced_fixation(cxr1, "cardiomegaly")
        targets = mapped_indices(cxr1, "cardiomegaly")
        for i, (before, after) in enumerate(
            zip(expert_session.fixations, session.fixations)
        ):
            if i in targets:
                assert after.duration_ms == max(1, before.duration_ms // 2)
                assert after.onset_ms == before.onset_ms
                assert (after.x, after.y) == (before.x, before.y)
            else:
                assert after == before
        # fixture durations are odd on purpose: 301 -> 150, 401 -> 200
        assert [session.fixations[i].duration_ms for i in targets] == [150, 150, 200]

    def test_one_ms_floor(self):
        pair = (
            make_session(fixations=[fx(0.5, 0.5, 100, 1)]),
            make_transcript(sentences=[sent(0, 0, 1000, "f")]),
        )
        session, _ = synth_reduced_fixation(pair, "f")
        assert session.fixations[0].duration_ms == 1

    def test_sentence_removed(self, cxr1):
        _, transcript = synth_reduced_fixation(cxr1, "cardiomegaly")
        assert "cardiomegaly" not in transcript.finding_labels()

    def test_fixation_count_unchanged(self, cxr1):
        session, _ = synth_reduced_fixation(cxr1, "cardiomegaly")
        assert len(session) == len(cxr1[0])


class TestIncompleteKnowledge:
    def test_fixations_byte_equal(self, cxr1):
        expert_session, _ = cxr1
        session, _ = synth_incomplete_knowledge(cxr1, "atelectasis", "scarring")
        want = GazeSession(
            case_id=expert_session.case_id,
            reader_role="student",
            fixations=expert_session.fixations,
        )
        assert serialize_session(session) == serialize_session(want)

    def test_sentence_keeps_slot_loses_label(self, cxr1):
        _, expert_transcript = cxr1
        _, transcript = synth_incomplete_knowledge(
            cxr1, "atelectasis", "linear scarring at the left base"
        )
        assert len(transcript.sentences) == len(expert_transcript.sentences)
        original = next(
            s for s in expert_transcript.sentences if s.finding_label == "atelectasis"
        )
        altered = transcript.sentences[original.index]
        assert altered.index == original.index
        assert altered.begin_ms == original.begin_ms
        assert altered.end_ms == original.end_ms
        assert altered.text == "linear scarring at the left base"
        assert altered.finding_label is None
        others = [s for s in transcript.sentences if s.index != original.index]
        assert others == [
            s for s in expert_transcript.sentences if s.index != original.index
        ]

    def test_target_gaze_lands_in_residual(self, cxr1):
        targets = mapped_indices(cxr1, "atelectasis")
        pair = synth_incomplete_knowledge(cxr1, "atelectasis", "scarring")
        mapping, residual = map_fixations(*pair)
        assert "atelectasis" not in mapping
        assert set(targets) <= set(residual)

    def test_finding_count_drops_by_one(self, cxr1):
        _, transcript = synth_incomplete_knowledge(cxr1, "atelectasis", "scarring")
        assert len(transcript.finding_labels()) == len(cxr1[1].finding_labels()) - 1


class TestEligibilityAndDispatch:
    def test_eligible_in_dictation_order(self, cxr1, distractors):
        labels = eligible_findings(cxr1, ErrorType.MISSED_FIXATION, distractors)
        assert labels == ["cardiomegaly", "pleural effusion", "atelectasis"]

    def test_knowledge_needs_a_distractor(self, cxr1):
        table = {"cardiomegaly": "normal heart size"}
        labels = eligible_findings(cxr1, ErrorType.KNOWLEDGE_GAP, table)
        assert labels == ["cardiomegaly"]

    def test_apply_error_dispatch(self, cxr1, distractors):
        for error_type in SYNTH_TYPES:
            pair = apply_error(cxr1, "cardiomegaly", error_type, distractors)
            assert pair[0].reader_role == "student"

    def test_apply_error_without_distractor(self, cxr1):
        with pytest.raises(SynthesisError):
            apply_error(cxr1, "cardiomegaly", ErrorType.KNOWLEDGE_GAP, {})

    def test_apply_error_rejects_none_type(self, cxr1, distractors):
        with pytest.raises(SynthesisError):
            apply_error(cxr1, "cardiomegaly", ErrorType.NONE, distractors)

    def test_bundled_distractors_cover_fixture_findings(self, expert_cases, distractors):
        for _, transcript in expert_cases:
            for label in transcript.finding_labels():
                assert label in distractors


class TestGenerateCorpus:
    def test_balanced_counts_and_ids(self, expert_cases):
        variants, manifest = generate_corpus(expert_cases, seed=3, per_type_count=4)
        assert len(variants) == 12
        by_type = {}
        for case in variants:
            (_, error_type), = case.injected
            by_type.setdefault(error_type, []).append(case)
        assert {t: len(v) for t, v in by_type.items()} == {t: 4 for t in SYNTH_TYPES}
        assert manifest["counts"] == {t.value: 4 for t in SYNTH_TYPES}

    def test_round_robin_over_base_cases(self, expert_cases):
        variants, _ = generate_corpus(expert_cases, seed=3, per_type_count=4)
        base_ids = [v.base_case_id for v in variants[:4]]
        assert base_ids == ["cxr-001", "cxr-002", "cxr-003", "cxr-001"]

    def test_variant_id_format(self, expert_cases):
        variants, _ = generate_corpus(expert_cases, seed=3, per_type_count=1)
        assert variants[0].variant_id == "cxr-001__missed_fixation__000"

    def test_seed_determinism(self, expert_cases):
        a = generate_corpus(expert_cases, seed=9, per_type_count=5)
        b = generate_corpus(expert_cases, seed=9, per_type_count=5)
        assert a == b

    def test_seed_changes_targets(self, expert_cases):
        _, manifest_a = generate_corpus(expert_cases, seed=0, per_type_count=10)
        _, manifest_b = generate_corpus(expert_cases, seed=1, per_type_count=10)
        assert manifest_a["entries"] != manifest_b["entries"]

    def test_input_order_does_not_matter(self, expert_cases):
        a = generate_corpus(expert_cases, seed=4, per_type_count=3)
        b = generate_corpus(list(reversed(expert_cases)), seed=4, per_type_count=3)
        assert a == b

    def test_truth_matches_variant(self, expert_cases, distractors):
        variants, _ = generate_corpus(expert_cases, seed=2, per_type_count=3)
        for case in variants:
            (finding, error_type), = case.injected
            assert case.ground_truth == ((finding, error_type),)
            assert error_type.value in case.variant_id
            # injected findings are never reported by the student
            assert finding not in case.student_transcript.finding_labels()

    def test_manifest_entries_sorted(self, expert_cases):
        _, manifest = generate_corpus(expert_cases, seed=2, per_type_count=4)
        keys = [
            (e["base_case_id"], e["error_type"], e["finding_label"], e["variant_id"])
            for e in manifest["entries"]
        ]
        assert keys == sorted(keys)
        assert len(keys) == 12

    def test_multi_error_variants(self, expert_cases):
        variants, manifest = generate_corpus(
            expert_cases, seed=5, per_type_count=2, errors_per_case=2
        )
        for case in variants:
            assert len(case.injected) == 2
            findings = [f for f, _ in case.injected]
            assert len(set(findings)) == 2
            types = {t for _, t in case.injected}
            assert len(types) == 1
        assert len(manifest["entries"]) == 12
        assert manifest["errors_per_case"] == 2

    def test_multi_error_missed_removes_both(self, expert_cases):
        variants, _ = generate_corpus(
            expert_cases, seed=5, per_type_count=1, errors_per_case=2
        )
        case = variants[0]
        assert case.injected[0][1] is ErrorType.MISSED_FIXATION
        for finding, _ in case.injected:
            mapping, _ = map_fixations(case.student_session, case.student_transcript)
            assert finding not in mapping

    def test_validation_errors(self, expert_cases):
        with pytest.raises(SynthesisError):
            generate_corpus([], seed=0, per_type_count=1)
        with pytest.raises(SynthesisError):
            generate_corpus(expert_cases, seed=0, per_type_count=0)
        with pytest.raises(SynthesisError):
            generate_corpus(expert_cases, seed=0, per_type_count=1, errors_per_case=0)
        with pytest.raises(SynthesisError):
            # no fixture case has four findings to target
            generate_corpus(expert_cases, seed=0, per_type_count=1, errors_per_case=4)

    def test_case_ineligible_for_knowledge_rejected(self, expert_cases):
        with pytest.raises(SynthesisError):
            generate_corpus(
                expert_cases, seed=0, per_type_count=1,
                distractors={"not a fixture finding": "x"},
            )


class TestClosedLoop:
    def test_reference_pipeline_recovers_each_injection(self, expert_cases, distractors):
        by_id = {pair[0].case_id: pair for pair in expert_cases}
        variants, _ = generate_corpus(expert_cases, seed=11, per_type_count=3)
        for case in variants:
            teacher = by_id[case.base_case_id]
            report = run_case(
                teacher,
                (case.student_session, case.student_transcript),
                RunConfig(),
            )
            (finding, injected_type), = case.injected
            assert report.per_finding[finding].error_type == injected_type
            assert report.consolidated_error_types == (injected_type,)


class TestWriteCorpus:
    def test_layout_and_round_trip(self, expert_cases, tmp_path):
        variants, manifest = generate_corpus(expert_cases, seed=6, per_type_count=2)
        out = tmp_path / "corpus"
        write_corpus(out, variants, manifest)

        assert json.loads((out / "manifest.json").read_text()) == json.loads(
            json.dumps(manifest)
        )
        for case in variants:
            case_dir = out / case.variant_id
            session = parse_session((case_dir / "student.session.json").read_bytes())
            transcript = parse_transcript(
                (case_dir / "student.transcript.json").read_bytes()
            )
            assert session == case.student_session
            assert transcript == case.student_transcript
            truth = json.loads((case_dir / "truth.json").read_text())
            assert truth == case.truth_dict()

    def test_rewrite_is_byte_stable(self, expert_cases, tmp_path):
        variants, manifest = generate_corpus(expert_cases, seed=6, per_type_count=1)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        write_corpus(out_a, variants, manifest)
        write_corpus(out_b, variants, manifest)
        for path_a in sorted(out_a.rglob("*.json")):
            path_b = out_b / path_a.relative_to(out_a)
            assert path_a.read_bytes() == path_b.read_bytes()


class TestDistractorTable:
    def test_bundled_table_loads(self, distractors):
        assert len(distractors) >= 10
        assert all(isinstance(v, str) and v for v in distractors.values())

    def test_custom_table_from_file(self, tmp_path):
        path = tmp_path / "table.json"
        path.write_text('{"nodule": "vascular shadow"}')
        assert load_distractors(path) == {"nodule": "vascular shadow"}

    def test_non_object_table_rejected(self, tmp_path):
        path = tmp_path / "table.json"
        path.write_text('["nope"]')
        with pytest.raises(SynthesisError):
            load_distractors(path)
