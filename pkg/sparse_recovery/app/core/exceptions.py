from typing import Optional, Sequence


class SparseRecoveryError(Exception):
    """Base class for every error raised by the toolkit"""
    exit_code = 1


class InvalidArgumentError(SparseRecoveryError, ValueError):
    """A precondition on an operation's arguments does not hold"""
    exit_code = 2


class ConfigError(SparseRecoveryError):
    """A configuration document failed validation"""
    exit_code = 2

    def __init__(self, message: str, field_paths: Optional[Sequence[str]] = None):
        super().__init__(message)
        self.field_paths = list(field_paths or [])


class NumericFailureError(SparseRecoveryError):
    """A linear system or training step produced a singular or non-finite result"""
    exit_code = 3

    def __init__(self, message: str, support: Optional[Sequence[int]] = None,
                 iteration: Optional[int] = None, epoch: Optional[int] = None,
                 batch: Optional[int] = None):
        super().__init__(message)
        self.support = tuple(support) if support is not None else None
        self.iteration = iteration
        self.epoch = epoch
        self.batch = batch


class ModelFormatError(SparseRecoveryError):
    """A persisted scorer model cannot be read"""
    exit_code = 4


class UnsupportedFormatError(ModelFormatError):
    pass


class CorruptModelError(ModelFormatError):
    """offset: byte offset of a decoding error, char offset of a JSON syntax error"""

    def __init__(self, message: str, offset: Optional[int] = None):
        super().__init__(message)
        self.offset = offset
