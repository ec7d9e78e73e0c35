"""Exception types shared across the engine."""


class AutomtError(Exception):
    """Base class for all engine errors."""


# Document / taxonomy loading


class ParseError(AutomtError):
    """An input document is malformed."""


class DuplicateEntry(ParseError):
    """A vocabulary entry occurs more than once within its set."""


class EmptyCategory(ParseError):
    """A required vocabulary section is empty."""


# MR grammar and validation


class InvalidMR(AutomtError):
    """A metamorphic relation breaks a structural invariant."""


class GrammarError(AutomtError):
    """Text does not match the three-line Given/When/Then grammar."""


class OntologyViolation(AutomtError):
    """A slot value falls outside the closed vocabulary."""

    def __init__(self, slot, value):
        name = getattr(slot, "name", str(slot))
        super().__init__(f"{name} value not in ontology: {value!r}")
        self.slot = slot
        self.value = value


class VerbMismatch(AutomtError):
    """The When-line verb disagrees with the target's presence class."""


class ArityError(AutomtError):
    """Wrong number of judgement answers."""


# Backend transport and replies


class BackendUnavailable(AutomtError):
    """A backend could not be reached after exhausting the retry policy."""


class Timeout(AutomtError):
    """Every attempt against a backend timed out."""


class DimensionMismatch(AutomtError):
    """An embedding backend returned vectors of inconsistent length."""


class EditRejected(AutomtError):
    """The image-edit backend refused or failed the request."""


class VideoRejected(AutomtError):
    """The video backend failed or returned the wrong frame count."""


class MalformedJudgement(AutomtError):
    """A judge reply could not be mapped to the expected answers."""


class MalformedSceneReply(AutomtError):
    """A scene-analysis reply is missing one of the four required keys."""


# Matching and aggregation


class NoApplicableMr(AutomtError):
    """Every retrieved candidate failed the applicability filter."""


class UnknownIndex(AutomtError):
    """No stored MR has the requested index."""


class EmptyBatch(AutomtError):
    """An aggregate was requested over zero verdicts."""


class EmptySeries(AutomtError):
    """A prediction series has no frames."""


class TooFewPredictors(AutomtError):
    """Variance bands need at least two predictors."""


class UnknownBehavior(AutomtError):
    """No violation rule exists for this expected behavior."""


class MissingStage(AutomtError):
    """A report was requested before the required stage outputs exist."""


class DegenerateMarginals(AutomtError):
    """Expected disagreement is zero but observed disagreement is not."""
