"""Exception types shared across the package."""


class AnalogyLabError(Exception):
    """Base class for errors raised by this package."""


class IncompatibleRelationError(AnalogyLabError):
    """A relation was applied to a domain it is not defined on."""


class InsufficientDecoysError(AnalogyLabError):
    """Fewer valid decoy contents exist than were requested."""


class UnsatisfiableQuestionError(AnalogyLabError):
    """Question constraints could not be met within the retry budget."""


class NoInstanceError(AnalogyLabError):
    """No relation instance exists under the given value restriction."""


class ContainerFormatError(AnalogyLabError):
    """A binary container failed to parse.

    Carries the byte offset at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DivergedError(AnalogyLabError):
    """Training produced a non-finite gradient or loss."""
