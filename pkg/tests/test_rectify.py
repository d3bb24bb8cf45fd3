import hashlib

import pytest

from echoreason import (
    Decision,
    EchoStudy,
    JudgeError,
    Video,
    build_rectification_context,
    flag_low_steps,
    parse,
    rectification_prompt_template,
    run_trr,
    score_steps,
    template_from_dict,
)
from echoreason.rectify import FlaggedStep


def _template(vocab, questions_per_step):
    payload = {
        "id": "t-trr",
        "name": "Rectification Exemplar",
        "meta": {
            "knowledge_tags": ["trr"],
            "description": "Synthetic template for rectification tests.",
            "application_scenario": "unit testing",
            "views_required": ["A4C", "PLAX"],
            "measurements_required": [],
        },
        "steps": [
            {
                "index": i,
                "instruction": f"Assess finding {i}.",
                "questions": [{"text": text, "required_views": req} for text, req in qs],
            }
            for i, qs in enumerate(questions_per_step, start=1)
        ],
    }
    return template_from_dict(payload, vocab)


def _two_step_template(vocab, second_views=("A4C",)):
    return _template(
        vocab,
        [
            [("Is the first finding present?", ["A4C"])],
            [("Is the second finding present?", list(second_views))],
        ],
    )


def _study(views=("A4C",)):
    videos = tuple(
        Video(id=f"v{i}", view_label=view, uri=f"u://{i}", caption="clip")
        for i, view in enumerate(views)
    )
    return EchoStudy(patient_id="trr-case", videos=videos, ground_truth="Yes")


def _raw(step_texts, answer="Yes"):
    body = "\n".join(f"Step {i}: {text}" for i, text in enumerate(step_texts, start=1))
    return f"<think>\n{body}\n</think>\n<answer>{answer}</answer>"


class ScriptedJudge:
    def __init__(self, outcomes):
        self._outcomes = list(outcomes)
        self.calls = 0

    def judge(self, step_text, questions, available_views):
        self.calls += 1
        outcome = self._outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


class CountingPolicy:
    def __init__(self, round1, round2="<think>Step 1: redone.</think>\n<answer>Yes</answer>"):
        self.contexts = []
        self._round1 = round1
        self._round2 = round2

    def generate(self, study, template, rectification_context=None):
        self.contexts.append(rectification_context)
        return self._round1 if rectification_context is None else self._round2


class TestFlagLowSteps:
    def test_oracle_fixture(self):
        # mean 0.25, median 0.2, MAD 0.05, cutoff 0.2: only 0.1 dips below.
        assert flag_low_steps([0.2, 0.5, 0.1, 0.2]) == [3]

    def test_empty_and_uniform(self):
        assert flag_low_steps([]) == []
        assert flag_low_steps([0.5, 0.5, 0.5]) == []

    def test_single_score_never_flags_itself(self):
        assert flag_low_steps([0.9]) == []

    def test_strictly_below_cutoff(self):
        # mean 0.5, median 0.5, MAD 0.1: cutoff 0.4, and 0.4 itself survives
        # because the rule is strict.
        assert flag_low_steps([0.4, 0.5, 0.6]) == []

    def test_indices_are_one_based_and_in_range(self):
        import random

        rng = random.Random(5)
        for _ in range(50):
            scores = [rng.random() for _ in range(rng.randint(1, 10))]
            flags = flag_low_steps(scores)
            assert all(1 <= f <= len(scores) for f in flags)
            assert flags == sorted(set(flags))


class TestScoreSteps:
    def test_positional_alignment(self, vocab):
        template = _two_step_template(vocab)
        transcript = parse(_raw(["first.", "second.", "third."]), vocab)
        judge = ScriptedJudge([0.8, 0.6])
        scored, unscored = score_steps(transcript, template, judge, ("A4C",))
        assert [(s.step, s.score) for s in scored] == [(1, 0.8), (2, 0.6)]
        assert unscored == []
        assert judge.calls == 2

    def test_template_longer_than_response(self, vocab):
        template = _two_step_template(vocab)
        transcript = parse(_raw(["only one."]), vocab)
        scored, unscored = score_steps(transcript, template, ScriptedJudge([0.9]), ("A4C",))
        assert [(s.step, s.score) for s in scored] == [(1, 0.9)]
        assert unscored == [2]

    def test_filtered_out_question_list_goes_unscored(self, vocab):
        template = _two_step_template(vocab, second_views=("PLAX",))
        transcript = parse(_raw(["first.", "second."]), vocab)
        scored, unscored = score_steps(transcript, template, ScriptedJudge([0.7]), ("A4C",))
        assert [(s.step, s.score) for s in scored] == [(1, 0.7)]
        assert unscored == [2]

    def test_no_band_gate_even_far_outside(self, vocab):
        template = _two_step_template(vocab)
        transcript = parse(_raw([f"padding {i}." for i in range(30)]), vocab)
        scored, unscored = score_steps(
            transcript, template, ScriptedJudge([0.1, 0.2]), ("A4C",)
        )
        assert len(scored) == 2
        assert unscored == []

    def test_scores_clamped(self, vocab):
        template = _two_step_template(vocab)
        transcript = parse(_raw(["first.", "second."]), vocab)
        scored, _ = score_steps(transcript, template, ScriptedJudge([2.0, -1.0]), ("A4C",))
        assert [s.score for s in scored] == [1.0, 0.0]

    def test_error_policies(self, vocab, caplog):
        template = _two_step_template(vocab)
        transcript = parse(_raw(["first.", "second."]), vocab)
        with pytest.raises(JudgeError):
            score_steps(transcript, template, ScriptedJudge([JudgeError("down")]), ("A4C",))
        with caplog.at_level("WARNING", logger="echoreason.rectify"):
            scored, _ = score_steps(
                transcript,
                template,
                ScriptedJudge([JudgeError("down"), 0.9]),
                ("A4C",),
                on_verifier_error="zero",
            )
        assert [s.score for s in scored] == [0.0, 0.9]


class TestRunTrr:
    def test_accepted_makes_one_policy_call(self, vocab):
        policy = CountingPolicy(_raw(["first.", "second."], answer="No"))
        judge = ScriptedJudge([0.9, 0.7])
        trace = run_trr(
            _study(), _two_step_template(vocab), judge, policy, view_vocab=vocab
        )
        assert trace.decision is Decision.ACCEPTED
        assert len(policy.contexts) == 1
        assert policy.contexts == [None]
        assert trace.final_answer == "No"
        assert trace.round2_transcript is None
        assert trace.round2_prompt_digest is None
        assert trace.round1.mean_score == pytest.approx(0.8)
        assert trace.to_dict()["round2"] is None

    def test_rectified_makes_two_calls_and_takes_round2_answer(self, vocab):
        policy = CountingPolicy(
            _raw(["first.", "second."], answer="No"),
            round2=_raw(["first redone.", "second redone."], answer="Yes"),
        )
        judge = ScriptedJudge([0.2, 0.1])
        trace = run_trr(
            _study(), _two_step_template(vocab), judge, policy, view_vocab=vocab
        )
        assert trace.decision is Decision.RECTIFIED
        assert len(policy.contexts) == 2
        assert policy.contexts[1] is not None
        assert trace.final_answer == "Yes"
        assert trace.round2_transcript == policy._round2
        assert judge.calls == 2  # round 2 is final; never re-verified

    def test_round2_answer_wins_even_when_unchanged(self, vocab):
        policy = CountingPolicy(
            _raw(["weak."], answer="No"), round2=_raw(["still weak."], answer="No")
        )
        template = _template(vocab, [[("Is the finding present?", ["A4C"])]])
        trace = run_trr(_study(), template, ScriptedJudge([0.0]), policy, view_vocab=vocab)
        assert trace.decision is Decision.RECTIFIED
        assert trace.final_answer == "No"

    def test_threshold_boundary_is_inclusive(self, vocab):
        template = _template(vocab, [[("Is the finding present?", ["A4C"])]])
        at_threshold = run_trr(
            _study(),
            template,
            ScriptedJudge([0.4]),
            CountingPolicy(_raw(["borderline."])),
            threshold=0.4,
            view_vocab=vocab,
        )
        assert at_threshold.decision is Decision.ACCEPTED
        below = run_trr(
            _study(),
            template,
            ScriptedJudge([0.39]),
            CountingPolicy(_raw(["borderline."])),
            threshold=0.4,
            view_vocab=vocab,
        )
        assert below.decision is Decision.RECTIFIED

    def test_threshold_monotonicity(self, vocab):
        template = _two_step_template(vocab)
        decisions = []
        for threshold in (0.3, 0.5, 0.7):
            trace = run_trr(
                _study(),
                template,
                ScriptedJudge([0.5, 0.5]),
                CountingPolicy(_raw(["first.", "second."])),
                threshold=threshold,
                view_vocab=vocab,
            )
            decisions.append(trace.decision)
        assert decisions == [Decision.ACCEPTED, Decision.ACCEPTED, Decision.RECTIFIED]

    def test_fallback_flags_earliest_minimum(self, vocab):
        # Uniform low scores: nothing is below mean - MAD, yet the round was
        # rejected, so the earliest minimum gets flagged.
        template = _two_step_template(vocab)
        policy = CountingPolicy(_raw(["first.", "second."]))
        trace = run_trr(
            _study(), template, ScriptedJudge([0.3, 0.3]), policy, view_vocab=vocab
        )
        assert trace.decision is Decision.RECTIFIED
        assert trace.round1.flagged_step_indices == (1,)

    def test_fallback_flags_every_step_when_nothing_scored(self, vocab):
        template = _template(
            vocab,
            [
                [("Is the first finding present?", ["PLAX"])],
                [("Is the second finding present?", ["PLAX"])],
            ],
        )
        policy = CountingPolicy(_raw(["first.", "second."]))
        trace = run_trr(_study(("A4C",)), template, ScriptedJudge([]), policy, view_vocab=vocab)
        assert trace.decision is Decision.RECTIFIED
        assert trace.round1.per_step_scores == ()
        assert trace.round1.unscored_template_steps == (1, 2)
        assert trace.round1.mean_score == 0.0
        assert trace.round1.flagged_step_indices == (1, 2)

    def test_empty_think_block_rectifies_with_no_flags(self, vocab):
        template = _two_step_template(vocab)
        policy = CountingPolicy("<think>\n\n</think>\n<answer>Yes</answer>")
        trace = run_trr(_study(), template, ScriptedJudge([]), policy, view_vocab=vocab)
        assert trace.decision is Decision.RECTIFIED
        assert trace.round1.flagged_step_indices == ()
        context = policy.contexts[1]
        assert "(no individual step could be verified" in context.instruction

    def test_prompt_digest_matches_rendered_instruction(self, vocab):
        template = _two_step_template(vocab)
        raw1 = _raw(["first.", "second."])
        policy = CountingPolicy(raw1)
        trace = run_trr(
            _study(), template, ScriptedJudge([0.2, 0.1]), policy, view_vocab=vocab
        )
        assert trace.round1.flagged_step_indices == (2,)
        instruction = rectification_prompt_template().format(
            previous_transcript=raw1, flagged_block="Step 2: second."
        )
        expected = hashlib.sha256(instruction.encode("utf-8")).hexdigest()
        assert trace.round2_prompt_digest == expected

    def test_trace_serialization_schema(self, vocab):
        template = _two_step_template(vocab)
        policy = CountingPolicy(_raw(["first.", "second."]))
        trace = run_trr(
            _study(), template, ScriptedJudge([0.1, 0.9]), policy, view_vocab=vocab
        )
        payload = trace.to_dict()
        assert list(payload) == ["round1", "decision", "round2", "final_answer", "threshold"]
        assert list(payload["round1"]) == [
            "transcript",
            "per_step_scores",
            "unscored_template_steps",
            "mean_score",
            "mad",
            "flagged_step_indices",
        ]
        assert payload["round1"]["per_step_scores"][0] == {"step": 1, "score": 0.1}
        if payload["decision"] == "Rectified":
            assert list(payload["round2"]) == ["prompt_digest", "transcript"]

    def test_never_more_than_two_calls(self, vocab):
        import random

        rng = random.Random(9)
        template = _two_step_template(vocab)
        for _ in range(20):
            scores = [rng.random() for _ in range(2)]
            policy = CountingPolicy(_raw(["first.", "second."]))
            run_trr(_study(), template, ScriptedJudge(scores), policy, view_vocab=vocab)
            assert len(policy.contexts) in (1, 2)


class TestRectificationContext:
    def test_prompt_template_has_both_placeholders_once(self):
        text = rectification_prompt_template()
        assert text.count("{previous_transcript}") == 1
        assert text.count("{flagged_block}") == 1

    def test_context_embeds_flagged_lines(self):
        context = build_rectification_context(
            "<think>x</think><answer>Yes</answer>",
            (FlaggedStep(step=2, text="the weak claim"), FlaggedStep(step=4, text="another")),
        )
        assert "Step 2: the weak claim\nStep 4: another" in context.instruction
        assert "<think>x</think><answer>Yes</answer>" in context.instruction

    def test_digest_is_stable_and_content_sensitive(self):
        a = build_rectification_context("t", (FlaggedStep(step=1, text="x"),))
        b = build_rectification_context("t", (FlaggedStep(step=1, text="x"),))
        c = build_rectification_context("t", (FlaggedStep(step=1, text="y"),))
        assert a.prompt_digest == b.prompt_digest
        assert a.prompt_digest != c.prompt_digest
        assert len(a.prompt_digest) == 64
