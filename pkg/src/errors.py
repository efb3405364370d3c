"""Exception hierarchy shared by the engine, the simulator and the CLI."""


class EcBenchError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(EcBenchError):
    pass


class InvalidParamsError(EcBenchError):
    pass


# --- codec ---

class CodecError(EcBenchError):
    pass


class DimensionMismatchError(CodecError):
    pass


class ExtentMismatchError(CodecError):
    pass


class ExtentOutOfRangeError(CodecError):
    pass


class DuplicateBlockError(CodecError):
    pass


class DecodeError(CodecError):
    pass


# --- log pools ---

class PoolExhaustedError(EcBenchError):
    """No unit can take the record; the caller applies back-pressure."""


class IllegalTransitionError(EcBenchError):
    pass


# --- strategies / simulator ---

class BackPressureError(EcBenchError):
    pass


class StallError(EcBenchError):
    pass


class UnrecoverableError(EcBenchError):
    def __init__(self, stripe_id, failed_roles):
        self.stripe_id = stripe_id
        self.failed_roles = tuple(failed_roles)
        super().__init__(
            f"stripe {stripe_id} lost {len(self.failed_roles)} blocks "
            f"(roles {list(self.failed_roles)})"
        )


class AddressRangeError(EcBenchError):
    pass


# --- trace / reports ---

class TraceFormatError(EcBenchError):
    def __init__(self, field, message, line_no=None):
        self.field = field
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}{field}: {message}")


class VerificationError(EcBenchError):
    def __init__(self, detail):
        self.detail = detail
        super().__init__(detail)


class ReportMismatchError(EcBenchError):
    pass
