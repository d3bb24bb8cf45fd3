"""Exception hierarchy shared across the package.

Exit-code mapping in the CLI relies on the three top branches: template and
input validation problems, verifier failures, and GRPO input problems.
"""

from __future__ import annotations


class EchoReasonError(Exception):
    """Base class for every error raised by this package."""


# -- template / input validation -------------------------------------------

class TemplateError(EchoReasonError):
    """Base for template-library validation failures."""


class SchemaError(TemplateError):
    """A file does not conform to its schema. Carries location context."""

    def __init__(self, message: str, *, source: str | None = None, path: str | None = None):
        self.source = source
        self.path = path
        prefix = ""
        if source:
            prefix += f"{source}: "
        if path:
            prefix += f"at {path}: "
        super().__init__(prefix + message)


class DuplicateIdError(TemplateError):
    """Two templates in one set share an id."""


class VocabularyError(TemplateError):
    """A view name is not in the canonical vocabulary."""


class InvalidTemplate(TemplateError):
    """A template violates a structural precondition (e.g. zero steps)."""


# -- verifiers ---------------------------------------------------------------

class VerifierError(EchoReasonError):
    """Base for judge / scorer / embedder failures."""


class JudgeError(VerifierError):
    pass


class EmptyQuestionSet(JudgeError):
    """The judge was handed a step with no questions; callers must exclude those."""


class ScorerError(VerifierError):
    pass


class MissingCaption(ScorerError):
    """A video reference lacks the caption the mock scorer grounds on."""


class EmbedderError(VerifierError):
    pass


class TransportError(VerifierError):
    """The remote endpoint could not be reached after the retry budget."""


class ProtocolError(VerifierError):
    """The remote endpoint answered with a non-2xx status or a malformed body."""


class RangeError(VerifierError):
    """A remote verifier returned a score outside [0, 1]."""


# -- GRPO --------------------------------------------------------------------

class GrpoError(EchoReasonError):
    pass


class GroupTooSmall(GrpoError):
    """Advantage estimation needs at least two rollouts."""


class LengthMismatch(GrpoError):
    """Per-token log-probability sequences disagree in length or are empty."""


# -- rectification loop ------------------------------------------------------

class NoScoredSteps(EchoReasonError):
    """flag_low_steps was called with zero scored steps."""


class PolicyError(EchoReasonError):
    """The policy client failed to generate a transcript."""
