from concurrent.futures import Executor
import typing

import numpy as np
from scipy import stats

T = typing.TypeVar("T")
R = typing.TypeVar("R")


class RetrodecodeError(Exception):
    """
    Base class of every error raised by :mod:`retrodecode`.
    """


def raise_type_error_if_not_type_of(variable: typing.Any, type: type) -> None:
    if not isinstance(variable, type):
        raise TypeError("expected {}, got {}".format(type.__name__, variable.__class__.__name__))


def raise_type_error_if_not_type_of_multiple(variable: typing.Any, types: typing.List[type]) -> None:
    match = False

    for type in types:
        if not isinstance(variable, type):
            continue
        match = True
        break

    if not match:
        names = ", ".join(type.__name__ for type in types)
        raise TypeError("expected one of ({}), got {}".format(names, variable.__class__.__name__))


def derive_seed(master_seed: int, *keys: int) -> int:
    """
    Derives a 64-bit child seed from a master seed and a path of integer keys.

    The result depends only on its arguments, so work items seeded this way give the same results
    whatever order or process they run in.

    >>> derive_seed(7, 0) == derive_seed(7, 0)
    True
    >>> derive_seed(7, 0) == derive_seed(7, 1)
    False
    """
    sequence = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF] + [int(key) for key in keys])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def percentile(values: np.ndarray, q: float) -> float:
    """
    Percentile with linear interpolation between order statistics.

    :raise ValueError: If :attr:`values` is empty or :attr:`q` is outside [0, 100].

    >>> percentile(np.array([1.0, 2.0, 3.0, 4.0]), 50)
    2.5
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("percentile of an empty set")
    if not 0.0 <= q <= 100.0:
        raise ValueError("q must be in [0, 100], got {}".format(q))

    return float(np.percentile(values, q, method="linear"))


def median(values: typing.Sequence[float]) -> float:
    """
    :raise ValueError: If :attr:`values` is empty.

    >>> median([0.0, 1.0, 2.0])
    1.0
    """
    if len(values) == 0:
        raise ValueError("median of an empty set")

    return float(np.median(np.asarray(values, dtype=float)))


def rank_sum_test(first: typing.Sequence[float], second: typing.Sequence[float]) -> typing.Tuple[float, float]:
    """
    Two-sided Wilcoxon rank-sum test.

    :return: The test statistic and the p-value. The statistic is positive when :attr:`first` tends
             to rank above :attr:`second`.
    :rtype: tuple[float, float]
    """
    if len(first) == 0 or len(second) == 0:
        raise ValueError("rank-sum test needs two nonempty samples")

    result = stats.ranksums(np.asarray(first, dtype=float), np.asarray(second, dtype=float))
    return float(result.statistic), float(result.pvalue)


def parallel_map(
    function: typing.Callable[[T], R], items: typing.Iterable[T], executor: typing.Optional[Executor] = None
) -> typing.List[R]:
    """
    Maps :attr:`function` over :attr:`items`, keeping the input order.

    Runs serially when no :attr:`executor` is given. Work items must not depend on execution order,
    so serial and parallel runs return the same list.
    """
    if executor is None:
        return [function(item) for item in items]

    return list(executor.map(function, items))
