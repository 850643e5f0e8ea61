"""Exception types shared across the package."""


class HintedLQRError(Exception):
    pass


class NotStabilizable(HintedLQRError):
    """Riccati iteration failed to converge (pair not stabilizable or badly conditioned)."""


class Unstable(HintedLQRError):
    """Closed-loop matrix has spectral radius >= 1."""


class Singular(HintedLQRError):
    pass


class MissingNoise(HintedLQRError):
    """Noise-weighted sums were not recorded, so the closed-form identity cannot be evaluated."""


class DegenerateGamma(HintedLQRError):
    pass


class ScheduleViolation(HintedLQRError):
    pass


class HorizonTooShort(HintedLQRError):
    pass


class NoCurvature(HintedLQRError):
    pass


class NumericOverflow(HintedLQRError):
    pass


class ConfigError(HintedLQRError):
    """Bad experiment configuration; ``line`` and ``field`` locate the problem when known."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line, self.field = line, field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class InsufficientData(HintedLQRError):
    pass
