class IsacSlamError(Exception):
    pass


class InvalidGeometryError(IsacSlamError, ValueError):
    pass


class InvalidMeasurementError(IsacSlamError, ValueError):
    pass


class InsufficientDataError(IsacSlamError, ValueError):
    pass


class DegenerateFitError(IsacSlamError, ValueError):
    pass


class ConfigError(IsacSlamError, ValueError):
    """Raised for scenario / configuration problems.

    ``violations`` holds every problem found, not only the first one.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
