from __future__ import annotations

import hashlib
from contextlib import contextmanager
from functools import lru_cache
from typing import Iterator, Type

import numpy as np

__all__ = [
    "UsageError",
    "GeometryError",
    "RegionError",
    "SolverError",
    "DegenerateReportError",
    "ScenarioError",
    "VerificationError",
    "make_generator",
    "sha256_digest_of",
    "ensure_finite",
]


class UsageError(ValueError):
    """Raised when an operation is called with invalid arguments."""


class GeometryError(Exception):
    """Raised when a geometric precondition of an operation does not hold."""


class RegionError(Exception):
    """Raised when a query falls outside of the stored (or padded) data."""


class SolverError(Exception):
    """Raised when the time march cannot be started or continued."""


class DegenerateReportError(Exception):
    """Raised when there is not enough usable data to fit a report."""


class ScenarioError(UsageError):
    """Raised when a scenario file cannot be parsed or validated."""


class VerificationError(Exception):
    """Raised when a verification property is violated."""


@contextmanager
def _step(message: str, error_cls: Type[Exception] = UsageError) -> Iterator[None]:
    """Capture every expression underneath it and re-raise any failure as
    `error_cls` with the given message."""

    try:
        yield
    except error_cls:
        raise
    except Exception as exception:
        raise error_cls(f"Error while {message}: {exception}") from exception


def make_generator(seed: int) -> np.random.Generator:
    """Return a fresh counter-based random stream for the given seed."""
    if seed < 0:
        raise UsageError(f"Seed must be non-negative, got {seed}.")
    return np.random.Generator(np.random.Philox(seed))


@lru_cache(maxsize=None)
def sha256_digest_of(*unique_fields: str, _join_char: str = "\n") -> str:
    """Return the SHA256 digest that corresponds to the combined version
    of 'unique_fields'. The order is preserved."""

    inner_text = _join_char.join(unique_fields).encode()
    return hashlib.sha256(inner_text).hexdigest()


def ensure_finite(name: str, *values: np.ndarray) -> None:
    for value in values:
        if not np.all(np.isfinite(value)):
            raise UsageError(f"All components of '{name}' must be finite.")
