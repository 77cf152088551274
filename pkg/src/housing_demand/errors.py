from typing import List, Optional


class HousingDemandError(Exception):
    """Base exception for data and model errors raised by housing_demand."""
    pass


class IngestError(HousingDemandError):
    """Raised when an event CSV row cannot be parsed."""

    def __init__(self, message: str, row: Optional[int] = None, field: Optional[str] = None):
        self.row = row
        self.field = field
        prefix = ""
        if row is not None:
            prefix = f"row {row}"
            if field is not None:
                prefix += f", field '{field}'"
            prefix += ": "
        super().__init__(prefix + message)


class AggregationError(HousingDemandError):
    """Raised when events cannot be reduced to a consistent weekly series."""
    pass


class IndexComputationError(HousingDemandError):
    """Raised when a demand index is undefined for some week."""

    def __init__(self, message: str, year: Optional[int] = None, week: Optional[int] = None):
        self.year = year
        self.week = week
        super().__init__(message)


class TimeSeriesError(HousingDemandError):
    """Raised by time-series primitives on invalid input."""
    pass


class DesignMatrixError(HousingDemandError):
    """Raised when a design matrix cannot be built or is missing columns."""
    pass


class ModelFitError(HousingDemandError):
    """Raised when a model cannot be fitted to the supplied design."""

    def __init__(self, message: str, columns: Optional[List[str]] = None):
        self.columns = list(columns or [])
        super().__init__(message)


class ConvergenceError(ModelFitError):
    """Raised when an iterative fit does not converge."""

    def __init__(self, message: str, trace: Optional[List[str]] = None):
        self.trace = list(trace or [])
        super().__init__(message)


class ForecastError(HousingDemandError):
    """Raised when a forecast cannot be produced."""
    pass


class EvaluationError(HousingDemandError):
    """Raised on invalid evaluation input (splits, metrics, folds)."""
    pass
