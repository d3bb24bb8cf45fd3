"""Shared fixtures plus the acceptance-criteria summary printed after runs."""

from __future__ import annotations

import re

import pytest

from echoreason import (
    EchoStudy,
    Video,
    bundled_template_dir,
    load_templates,
    load_vocabulary,
)
from echoreason.sim import VerifierSet

_ACCEPTANCE_PATTERN = re.compile(r"test_criterion_(\d+)_?(\w*)")
_acceptance_results: dict[str, list[tuple[str, str]]] = {}


@pytest.fixture(scope="session")
def vocab():
    return load_vocabulary()


@pytest.fixture(scope="session")
def templates(vocab):
    return load_templates(bundled_template_dir(), vocab)


@pytest.fixture(scope="session")
def template_by_id(templates):
    return {t.id: t for t in templates}


@pytest.fixture(scope="session")
def mock_verifiers(vocab):
    return VerifierSet.mock(vocab)


def build_perfect_fixture(template, ground_truth: str = "Yes") -> tuple[str, EchoStudy]:
    """A transcript/study pair where every reward component is exactly 1.

    Each step is a single sentence embedding its template step's question
    texts (question marks stripped so the sentence does not split), a view
    phrase, and a conclusion word; each view a sentence mentions gets a video
    captioned with that exact sentence, so the best same-view pair is an
    identical token set.
    """
    from echoreason import parse

    step_texts = []
    for step in template.steps:
        questions = " and ".join(q.text.rstrip("?") for q in step.questions)
        step_texts.append(
            f"Step {step.index}: I verify on imaging that the findings are consistent "
            f"and conclude for this stage on {questions}"
        )
    raw = "<think>\n" + "\n".join(step_texts) + f"\n</think>\n<answer>{ground_truth}</answer>"

    vocab = load_vocabulary()
    transcript = parse(raw, vocab)
    videos = []
    counter = 0
    for step in transcript.steps:
        for sentence in step.sentences:
            for view in sentence.view_mentions:
                videos.append(
                    Video(
                        id=f"clip-{counter}",
                        view_label=view,
                        uri=f"synthetic://perfect/{counter}",
                        caption=sentence.text,
                    )
                )
                counter += 1
    study = EchoStudy(
        patient_id="perfect-0001",
        videos=tuple(videos),
        measurements=(),
        query=template.name,
        ground_truth=ground_truth,
    )
    return raw, study


@pytest.fixture(scope="session")
def perfect_fixture(template_by_id):
    return build_perfect_fixture(template_by_id["crt-hcm"])


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    match = _ACCEPTANCE_PATTERN.search(report.nodeid)
    if not match:
        return
    number, label = match.groups()
    _acceptance_results.setdefault(number, []).append(
        (label.replace("_", " "), report.outcome)
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_acceptance_results, key=int):
        entries = _acceptance_results[number]
        outcome = "PASS" if all(o == "passed" for _, o in entries) else "FAIL"
        label = entries[0][0]
        terminalreporter.write_line(f"criterion {int(number):2d}: {outcome} — {label}")
