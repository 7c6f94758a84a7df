"""Exception types raised across the package."""


class AptEnsembleError(Exception):
    """Base class for all package errors."""


# dataset
class MalformedHeader(AptEnsembleError):
    pass


class NonBooleanCell(AptEnsembleError):
    def __init__(self, row: int, col: int, value: str):
        super().__init__(f"non-boolean cell at row {row}, col {col}: {value!r}")
        self.row = row
        self.col = col
        self.value = value


class RaggedRow(AptEnsembleError):
    def __init__(self, row: int, expected: int, got: int):
        super().__init__(f"row {row} has {got} cells, expected {expected}")
        self.row = row


class EmptyDataset(AptEnsembleError):
    pass


class InvalidConfig(AptEnsembleError):
    pass


class TooFewAPT(AptEnsembleError):
    pass


# neural_core
class DimensionMismatch(AptEnsembleError):
    pass


class StaleCache(AptEnsembleError):
    pass


class ShapeMismatch(AptEnsembleError):
    pass


# autoencoder
class EmptyTrainingSet(AptEnsembleError):
    pass


class LatentTooLarge(AptEnsembleError):
    pass


class EmptyFeedbackSet(AptEnsembleError):
    pass


# agents
class EmptyBatch(AptEnsembleError):
    pass


# metrics / ensemble
class DegenerateLabels(AptEnsembleError):
    pass


class LengthMismatch(AptEnsembleError):
    pass


class EmptyTrajectory(AptEnsembleError):
    pass


class EmptyVoteSet(AptEnsembleError):
    pass


class AllZeroWeights(AptEnsembleError):
    pass


# active learning / service
class OracleTimeout(AptEnsembleError):
    def __init__(self, unanswered: list[str]):
        super().__init__(f"{len(unanswered)} oracle queries unanswered at timeout")
        self.unanswered = unanswered


class CampaignAborted(AptEnsembleError):
    """Raised inside a campaign when the hosting process is shutting down.

    Not an error condition: the run stays resumable and a later process picks
    it up from the recorded label events.
    """


class UnknownRun(AptEnsembleError):
    def __init__(self, run_id: str):
        super().__init__(f"no run with id {run_id!r}")
        self.run_id = run_id
