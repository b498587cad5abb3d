"""
Các lỗi có kiểu của dự án. Mỗi lớp kế thừa thêm builtin tương ứng
(ValueError, RuntimeError, ...) để code gọi bên ngoài vẫn bắt được như cũ.
"""


class LutError(Exception):
    """Gốc của mọi lỗi do thư viện ném ra."""


class DimensionError(LutError, ValueError):
    pass


class ConfigError(LutError, ValueError):
    pass


class EmptyInputError(LutError, ValueError):
    pass


class NumericError(LutError, ArithmeticError):
    pass


class UsageError(LutError, RuntimeError):
    pass


class InfeasibleAlignmentError(LutError, ValueError):
    def __init__(self, n_frames: int, required: int, target_len: int):
        self.n_frames = n_frames
        self.required = required
        self.target_len = target_len
        super().__init__(
            f"No CTC alignment: {n_frames} frames < {required} lattice steps "
            f"required for a target of length {target_len}"
        )


class SearchSpaceError(LutError, ValueError):
    pass


class FrozenModelError(LutError, RuntimeError):
    pass


class NonFiniteGradientError(LutError, ArithmeticError):
    def __init__(self, names):
        self.names = list(names)
        shown = ", ".join(self.names[:5])
        more = "" if len(self.names) <= 5 else f" (+{len(self.names) - 5} more)"
        super().__init__(f"Non-finite gradient in: {shown}{more}")


class UndefinedCorrelationError(LutError, ValueError):
    pass


class CheckpointError(LutError, ValueError):
    pass


class CheckpointMismatchError(CheckpointError):
    def __init__(self, expected: str, found: str):
        self.expected = expected
        self.found = found
        super().__init__(
            f"Checkpoint config hash mismatch: config={expected[:12]} checkpoint={found[:12]}"
        )


class SchemaValidationError(LutError, ValueError):
    pass
