"""Significance tests for nonzero importance.

Both tests consume per-observation loss differences d_i (perturbed minus
baseline) and ask whether their mean is positive: the paired one-sided t
test for ordinary sample sizes, and a sign-flip permutation test as the
exact small-sample analogue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

PAIRED_T = "paired-t-one-sided"
SIGN_FLIP = "sign-flip-exact"

DEFAULT_ALPHA = 0.01


class InsufficientDataError(ValueError):
    """Too few observations for the requested test."""


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: int
    kind: str
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value must lie in [0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")

    @property
    def rejects(self) -> bool:
        return self.p_value < self.alpha


def _as_differences(differences, minimum: int) -> np.ndarray:
    d = np.asarray(differences, dtype=float).ravel()
    if d.size < minimum:
        raise InsufficientDataError(
            f"need at least {minimum} loss differences, got {d.size}"
        )
    if not np.isfinite(d).all():
        raise ValueError("loss differences must be finite")
    return d


def paired_t_one_sided(differences, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Upper-tail paired t test of mean(d) > 0.

    A zero-variance sample is degenerate: all-zero differences carry no
    evidence (p = 1), a constant positive difference is conclusive
    (p = 0), a constant negative one is conclusive the other way.
    """
    d = _as_differences(differences, 2)
    n = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TestResult(0.0, 1.0, n, PAIRED_T, alpha)
        stat = math.inf if mean > 0 else -math.inf
        return TestResult(stat, 0.0 if mean > 0 else 1.0, n, PAIRED_T, alpha)
    t = mean / (sd / math.sqrt(n))
    p = float(stats.t.sf(t, df=n - 1))
    return TestResult(t, p, n, PAIRED_T, alpha)


def sign_flip_exact(
    differences,
    max_permutations: int = 2**14,
    seed: int = 0,
    alpha: float = DEFAULT_ALPHA,
) -> TestResult:
    """Sign-flip permutation test of mean(d) > 0.

    Every assignment of signs to the differences is equally likely under
    the null of a symmetric zero-centered law; the p-value is the share
    of assignments whose mean reaches the observed one. Enumeration is
    exhaustive while 2^n fits in ``max_permutations``, Monte-Carlo with
    add-one smoothing beyond that.

    The differences are sorted (descending) before enumeration so the
    result depends only on their multiset, keeping the exhaustive test
    exactly permutation-invariant despite float addition order.
    """
    if max_permutations < 1:
        raise ValueError("max_permutations must be >= 1")
    d = _as_differences(differences, 1)
    n = d.size
    d = np.sort(d)[::-1]
    statistic = float(d.mean())
    if 2**n <= max_permutations:
        # bit k of the assignment index selects the sign of d[k]
        assignments = np.arange(2**n, dtype=np.uint64)
        bits = (assignments[:, None] >> np.arange(n, dtype=np.uint64)) & 1
        signs = 1.0 - 2.0 * bits
        sums = signs @ d
        observed = sums[0]  # index 0 is the all-plus assignment
        p = float(np.count_nonzero(sums >= observed)) / 2**n
        return TestResult(statistic, p, n, SIGN_FLIP, alpha)
    rng = np.random.default_rng(seed)
    signs = rng.choice((-1.0, 1.0), size=(max_permutations, n))
    sums = signs @ d
    observed = np.ones(n) @ d
    hits = int(np.count_nonzero(sums >= observed))
    p = (1.0 + hits) / (max_permutations + 1.0)
    return TestResult(statistic, p, n, SIGN_FLIP, alpha)


def confidence_interval(differences, level: float = 0.95) -> tuple[float, float]:
    """Symmetric t interval for the mean loss difference."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly between 0 and 1")
    d = _as_differences(differences, 2)
    n = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return (mean, mean)
    half = float(stats.t.ppf(0.5 + level / 2.0, df=n - 1)) * sd / math.sqrt(n)
    return (mean - half, mean + half)


def get_test(kind: str):
    if kind == "paired-t":
        return paired_t_one_sided
    if kind == "sign-flip":
        return sign_flip_exact
    raise ValueError(f"unknown test kind {kind!r}; available: paired-t, sign-flip")
