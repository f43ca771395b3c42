"""Exception types raised across the planning pipeline."""


class PlanningError(Exception):
    """Base class for planner failures that callers may want to handle."""

    stage = "unknown"


class InvalidRequest(PlanningError):
    """Request is malformed (bad coordinates, out-of-map poses, bad polygon)."""

    stage = "request"


class NoTrailNearStart(PlanningError):
    """No trail cell within the snapping radius of the wavefront source."""

    stage = "trails"


class NoTrailPath(PlanningError):
    """Start and target trail cells live in disconnected trail components."""

    stage = "trails"


class NoGridPath(PlanningError):
    """Grid search exhausted the open set without reaching the target."""

    stage = "grid_search"


class SliceExhausted(PlanningError):
    """Hybrid A* failed even after the slice grew to the full map bounds."""

    stage = "kino"

    def __init__(self, message: str, segment_index: int | None = None):
        super().__init__(message)
        self.segment_index = segment_index


class UnsupportedGeometry(ValueError):
    """A feature's geometry kind cannot be rasterized."""

    def __init__(self, message: str, feature_index: int | None = None):
        super().__init__(message)
        self.feature_index = feature_index
