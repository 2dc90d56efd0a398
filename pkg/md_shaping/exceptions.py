"""Exceptions raised by md_shaping."""


class MdShapingError(Exception):
    """Base class for every error raised by the toolkit."""


class ConstellationError(MdShapingError, ValueError):
    pass


class ConstellationParseError(ConstellationError):
    """Malformed constellation or lattice file.

    ``line_no`` is 1-based and refers to the physical line in ``path``.
    """

    def __init__(self, message, path=None, line_no=None):
        self.path = path
        self.line_no = line_no
        location = ""
        if path is not None:
            location = f"{path}"
            if line_no is not None:
                location += f":{line_no}"
            location += ": "
        elif line_no is not None:
            location = f"line {line_no}: "
        super().__init__(f"{location}{message}")


class MetricError(MdShapingError, ValueError):
    pass


class LabelsRequiredError(MetricError):
    def __init__(self, message="GMI requires labels"):
        super().__init__(message)


class SolverError(MdShapingError, RuntimeError):
    pass


class UnreachableTargetError(SolverError):
    pass


class LatticeError(MdShapingError, ValueError):
    pass


class EnumerationTooLargeError(LatticeError):
    pass


class LinkConfigError(MdShapingError, ValueError):
    pass


class NliIntegrationError(MdShapingError, RuntimeError):
    """Numerical NLI integral did not converge.

    ``diagnostics`` holds the grid history (nodes, segment count and the
    value reached at each refinement level).
    """

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class ModelValidityError(MdShapingError, ValueError):
    pass
