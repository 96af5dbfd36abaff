#!/usr/bin/env python3
"""
Error Types
# Two families: ValidationError (bad input, exit 1) and NumericalError (solver failure, exit 2)
"""

from typing import Any, Dict


class WaveLabError(Exception):
    """Base class for every error raised by the laboratory"""

    exit_code = 2

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        payload = {
            'error': type(self).__name__,
            'message': self.message,
            'exit_code': self.exit_code,
        }
        payload.update({k: _jsonable(v) for k, v in self.details.items()})
        return payload


class ValidationError(WaveLabError):
    exit_code = 1


class ParameterError(ValidationError):
    """A model or solver parameter is outside its admissible range"""

    def __init__(self, parameter: str, value: Any, expected: str):
        super().__init__(f"parameter '{parameter}'={value} must satisfy {expected}",
                         parameter=parameter, value=value, expected=expected)
        self.parameter = parameter


class ConfigError(ValidationError):
    pass


class GridMismatchError(ValidationError):
    pass


class NumericalError(WaveLabError):
    exit_code = 2


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float, **details: Any):
        super().__init__(message, residual=residual, **details)
        self.residual = residual


class SingularSystemError(NumericalError):
    pass


class StagnationError(NumericalError):
    pass


class BlowUpError(NumericalError):
    def __init__(self, time: float, **details: Any):
        super().__init__(f"non-finite state at t={time:.6g}", time=time, **details)
        self.time = time


class DecayError(NumericalError):
    def __init__(self, message: str, gap_beta: float, **details: Any):
        super().__init__(message, gap_beta=gap_beta, **details)
        self.gap_beta = gap_beta


class BracketError(NumericalError):
    pass


class InsufficientDataError(NumericalError):
    pass


def _jsonable(value: Any) -> Any:
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    try:
        return float(value)
    except (TypeError, ValueError):
        return str(value)
