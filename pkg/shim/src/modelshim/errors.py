"""Protocol error type mapped onto the wire error body."""


class ShimError(Exception):
    """Carries the HTTP status and wire error code for a failed request."""

    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def overloaded() -> "ShimError":
    return ShimError(503, "overloaded", "request queue is full; retry later")
