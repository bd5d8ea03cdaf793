"""Hierarquia de exceções do serviço CA3D.

O CLI traduz estas classes para o contrato de códigos de saída
(0 ok, 1 I/O, 2 uso, 3 numérico, 4 verificação).
"""

from __future__ import annotations

from typing import Sequence


class CA3DError(Exception):
    exit_code = 1


class UsageError(CA3DError, ValueError):
    exit_code = 2


class ConfigError(UsageError):
    pass


class ShapeError(UsageError):
    """Formas incompatíveis numa operação; a mensagem nomeia a operação e as formas."""

    def __init__(self, op: str, *shapes: Sequence[int], detail: str = "") -> None:
        rendered = " vs ".join(str(tuple(shape)) for shape in shapes)
        message = f"{op}: incompatible shapes {rendered}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
        self.op = op
        self.shapes = [tuple(shape) for shape in shapes]


class GeometryError(UsageError):
    pass


class GradientError(CA3DError, RuntimeError):
    exit_code = 3


class NumericalError(CA3DError, ArithmeticError):
    exit_code = 3


class VerificationError(CA3DError):
    exit_code = 4


class ContainerError(CA3DError, IOError):
    exit_code = 1


class BadMagicError(ContainerError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


class UnsupportedDTypeError(ContainerError):
    pass


class TruncatedPayloadError(ContainerError):
    pass


class DuplicateNameError(ContainerError):
    pass


class ChecksumMismatchError(ContainerError):
    def __init__(self, names: Sequence[str]) -> None:
        super().__init__(f"CRC32 mismatch in records: {', '.join(names)}")
        self.names = list(names)
