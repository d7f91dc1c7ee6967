class StreamError(ValueError):
    """Malformed or misaligned per-frame input."""

    def __init__(self, message: str, frame: int | None = None):
        self.frame = frame
        if frame is not None:
            message = f"frame {frame}: {message}"
        super().__init__(message)
