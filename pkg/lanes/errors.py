# lanes/errors.py
"""
Error taxonomy shared by every lanepatch component.
"""


class LanePatchError(Exception):
    pass


class InvalidLane(LanePatchError, ValueError):
    """Dense lane fails ingestion checks (too few points, non-monotone y, NaN)."""


class OutOfRange(LanePatchError, ValueError):
    """Query y lies outside the lane's longitudinal extent."""


class InvalidConfig(LanePatchError, ValueError):
    pass


class NoOverlap(LanePatchError):
    """No preset point of the grid falls on the lane."""


class TooFewValid(LanePatchError):
    """Fewer than two visible preset points; endpoint patching is undefined."""


class DimensionMismatch(LanePatchError, ValueError):
    pass


class ShapeMismatch(LanePatchError, ValueError):
    pass


class StepFailed(LanePatchError):
    def __init__(self, step_id, message):
        super().__init__(f"step '{step_id}' failed: {message}")
        self.step_id = step_id
