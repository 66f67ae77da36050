"""
Result types, from https://github.com/karlicoss/HPI/blob/master/my/core/error.py
and the exceptions raised throughout the package
"""

import json
import math
import warnings
from typing import Any, Literal, Union, TypeVar
from collections.abc import Iterable, Iterator
from pathlib import Path

T = TypeVar("T")
E = TypeVar("E", bound=Exception)

ResT = Union[T, E]

Res = ResT[T, Exception]

PathIsh = Union[str, Path]

ErrorPolicy = Literal["yield", "raise", "drop"]


class HartreeLifespanError(Exception):
    """Base class for every error raised by this package"""


class ConfigurationError(HartreeLifespanError, ValueError):
    """An invalid ProblemSpec, SolverConfig or experiment plan"""


class GridMismatchError(ConfigurationError):
    """A field was sampled on a different grid than the operator expects"""


class DomainError(HartreeLifespanError, ValueError):
    """An argument lies outside the domain of an operation"""


class QuadratureError(HartreeLifespanError, RuntimeError):
    def __init__(self, message: str, *, estimate: float, error: float) -> None:
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.message = message
        self.estimate = estimate
        self.error = error

    # keyword-only arguments survive the trip back from a worker process
    def __reduce__(self) -> Any:
        return (_rebuild_quadrature_error, (self.message, self.estimate, self.error))


def _rebuild_quadrature_error(message: str, estimate: float, error: float) -> QuadratureError:
    return QuadratureError(message, estimate=estimate, error=error)


class PicardDivergenceError(HartreeLifespanError, RuntimeError):
    """Picard iterates stopped contracting; the time horizon is too long"""


class NoBlowupObserved(HartreeLifespanError, RuntimeError):
    """A run reached t_max without triggering the blow-up monitor"""


class VerificationFailure(HartreeLifespanError, AssertionError):
    """A verification case exceeded its tolerance"""


def handle_errors(
    results: Iterable[Res[T]],
    *,
    error_policy: ErrorPolicy = "yield",
    warn_exceptions: bool = True,
) -> Iterator[Res[T]]:
    """Wrap the results and handle any errors according to the policy"""
    from .log import logger

    for e in results:
        if not isinstance(e, Exception):
            yield e
        else:
            if warn_exceptions:
                logger.warning(str(e))
            # return errors as part of the result, default
            if error_policy == "yield":
                yield e
            # raise errors; crash
            elif error_policy == "raise":
                raise e
            # ignore errors
            elif error_policy == "drop":
                continue


def _plain(obj: Any) -> Any:
    """numpy values to builtins and non-finite floats to None, as orjson writes them"""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        # numpy arrays and scalars
        return _plain(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps_json(obj: Any) -> str:
    """Single-document UTF-8 JSON with sorted keys, so artifacts are reproducible"""
    try:
        import orjson
    except ModuleNotFoundError:
        warnings.warn(
            "orjson not found, it can significantly speed up json serialization. Consider installing via 'pip install orjson'. Falling back onto stdlib json"
        )
        return json.dumps(_plain(obj), sort_keys=True, ensure_ascii=False, allow_nan=False)
    else:
        return orjson.dumps(
            obj, option=orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY
        ).decode("utf-8")


def loads_json(p: Path) -> Any:
    try:
        import orjson
    except ModuleNotFoundError:
        return json.loads(p.read_text(encoding="utf-8"))
    else:
        return orjson.loads(p.read_bytes())
