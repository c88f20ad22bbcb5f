"""Exception hierarchy shared by the library, the coordinator and the clients."""

from enum import Enum


class VFLError(Exception):
    pass


class ConfigurationError(VFLError):
    pass


class InputError(VFLError, ValueError):
    pass


class IngestionError(InputError):
    """Raised while reading a party table; carries the offending row and column."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class ProtocolCorruptionError(VFLError):
    pass


class ErrorCode(str, Enum):
    UNKNOWN_SESSION = "UNKNOWN_SESSION"
    DUPLICATE_SUBMISSION = "DUPLICATE_SUBMISSION"
    MALFORMED_GROUPS = "MALFORMED_GROUPS"
    NOT_READY = "NOT_READY"
    NO_OVERLAP = "NO_OVERLAP"
    UNAUTHORIZED_PARTY = "UNAUTHORIZED_PARTY"
    LABEL_FROM_DATA_PARTY = "LABEL_FROM_DATA_PARTY"
    INVALID_REQUEST = "INVALID_REQUEST"
    INTERNAL = "INTERNAL"


class ProtocolError(VFLError):
    """A coordinator-side rejection, identified by a fixed error code."""

    def __init__(self, code: ErrorCode, message: str = ""):
        super().__init__(f"{code.value}: {message}" if message else code.value)
        self.code = ErrorCode(code)
        self.message = message

    def to_dict(self) -> dict:
        return {"error_code": self.code.value, "message": self.message}


class TransportError(VFLError):
    pass
