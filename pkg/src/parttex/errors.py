"""Exception hierarchy for the parttex package."""


class PartTexError(Exception):
    """Base class for all parttex errors."""


class MeshFormatError(PartTexError):
    """A mesh file could not be parsed.

    Carries the offending location so callers can point at the bad input.
    """

    def __init__(self, message, path=None, line=None, offset=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if offset is not None:
            loc.append(f"byte {offset}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.path = path
        self.line = line
        self.offset = offset


class MeshValidationError(PartTexError):
    """Parsed data does not satisfy the mesh invariants."""


class ContractError(PartTexError):
    """A caller violated a documented precondition."""


class OracleError(PartTexError):
    """Base class for oracle transport and protocol failures."""


class OracleProtocolError(OracleError):
    """Malformed request or response on the wire."""


class OracleTimeoutError(OracleError):
    """The remote service did not answer in time."""


class TranscriptMissError(OracleError):
    """A replayed request has no recorded response."""

    def __init__(self, request_hash):
        super().__init__(f"no transcript entry for request hash {request_hash}")
        self.request_hash = request_hash


class OptimizationError(PartTexError):
    """The optimization loop hit a non-finite value and aborted."""

    def __init__(self, message, step=None, view=None):
        detail = []
        if step is not None:
            detail.append(f"step {step}")
        if view is not None:
            detail.append(f"view {view}")
        if detail:
            message = f"{message} ({', '.join(detail)})"
        super().__init__(message)
        self.step = step
        self.view = view
