import re
from fractions import Fraction
from typing import Annotated, Any, Iterable, Iterator, Mapping, Sequence
from pydantic import PlainSerializer, PlainValidator

DEFAULT_LP_BUDGET = 100_000

_RATIONAL_RE = re.compile(r"^(-?\d+)(?:/(\d+))?$")


def as_rational(value: Any) -> Fraction:
    """
    Coerce ``value`` to an exact Fraction.

    Accepts Fractions, ints and strings of the form "p/q" or "p".
    Floats are rejected: there is no exact reading of a binary float here.
    """
    if isinstance(value, bool):
        raise ValueError(f"not a rational: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        match = _RATIONAL_RE.match(value.strip())
        if not match:
            raise ValueError(f"not a rational: {value!r}")
        den = int(match.group(2) or 1)
        if den == 0:
            raise ValueError(f"zero denominator: {value!r}")
        return Fraction(int(match.group(1)), den)
    raise ValueError(f"not an exact rational: {value!r}")


def format_rational(value: Fraction) -> str:
    # Fraction.__str__ is already canonical: "3/2", "1", "-1/4"
    return str(value)


Rational = Annotated[
    Fraction,
    PlainValidator(as_rational),
    PlainSerializer(format_rational, return_type=str),
]


def subsets(ground: Sequence[int], *, empty: bool = False) -> Iterator[frozenset[int]]:
    """
    Subsets of ``ground`` in bitmask order, e.g. {1}, {2}, {1, 2}, {3}, ...
    """
    for mask in range(0 if empty else 1, 1 << len(ground)):
        yield frozenset(g for bit, g in enumerate(ground) if mask >> bit & 1)


def restrict(rewards: Mapping[int, Fraction], subset: Iterable[int]) -> dict[int, Fraction]:
    return {ell: rewards[ell] for ell in subset if ell in rewards}


def assignment(history: Sequence[Fraction], subset: Iterable[int]) -> dict[int, Fraction]:
    """
    Map each 1-based index of ``subset`` to its reward in ``history``.
    """
    return {ell: history[ell - 1] for ell in subset}
