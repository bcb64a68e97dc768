"""Relative feature importance over seeded replications.

The importance of a feature relative to a conditioning set is the rise
in empirical risk when the feature's observed column is swapped for a
replacement drawn from its conditional law given that set:

    estimate = mean L(y_i, f(xtilde_j^(i), x_R^(i)))
             - mean L(y_i, f(x_j^(i),      x_R^(i)))

with R the other model features, both means over the test rows. The
baseline term has no perturbation noise, so it is computed once; the
perturbed term is averaged over seeded replications, each drawing a
fresh replacement column.

Two boundary cases are exact. A feature inside its own conditioning set
is replaced by itself (the conditional law is a point mass at the
observed value), so every replication reproduces the baseline losses
bit for bit and the estimate is exactly 0.0. Likewise a model whose
prediction ignores the feature yields identical predictions under any
replacement, so the estimate is exactly 0.0 rather than merely small.

Replication r of every computation shares the seed pair (base seed, r),
which couples the underlying noise across conditioning sets and makes
importance-change comparisons a matched-noise contrast.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .core import (
    TEST,
    Dataset,
    InvalidPartitionError,
    LossFunction,
    PredictiveModel,
    SchemaError,
)
from .inference import TestResult
from .samplers import ConditionalSampler

DIFFERENCE = "difference"
RATIO = "ratio"
FORMS = (DIFFERENCE, RATIO)

CSV_HEADER = ("feature", "G", "estimate", "se", "t", "p", "replications", "seed")

SamplerFactory = Callable[[str, tuple[str, ...]], ConditionalSampler]


@dataclass(frozen=True, eq=False)
class RfiEstimate:
    """Replication-level record of one importance computation.

    ``perturbed_risks`` holds the per-replication risk under replacement;
    ``baseline_risk`` is shared by all replications. ``first_differences``
    keeps the per-observation loss differences of replication 0, the
    input to the significance tests.
    """

    feature: str
    conditioning: tuple[str, ...]
    baseline_risk: float
    perturbed_risks: tuple[float, ...]
    first_differences: np.ndarray
    base_seed: int

    def __post_init__(self) -> None:
        if len(self.perturbed_risks) < 1:
            raise ValueError("need at least one replication")
        d = np.asarray(self.first_differences, dtype=float)
        d.setflags(write=False)
        object.__setattr__(self, "first_differences", d)

    @property
    def replications(self) -> int:
        return len(self.perturbed_risks)

    @property
    def replication_risks(self) -> tuple[tuple[float, float], ...]:
        """(perturbed, baseline) per replication."""
        return tuple((r, self.baseline_risk) for r in self.perturbed_risks)

    @property
    def point(self) -> float:
        """Mean risk difference across replications."""
        return float(np.mean(self.perturbed_risks) - self.baseline_risk)

    @property
    def se(self) -> float:
        """Standard error of the point estimate across replications.

        A single replication carries no spread information; the standard
        error is NaN in that case.
        """
        return self._spread(np.asarray(self.perturbed_risks) - self.baseline_risk)

    @property
    def ratio(self) -> float:
        """Risk-ratio form of the estimate, perturbed over baseline."""
        return float(np.mean(self.perturbed_risks) / self.baseline_risk)

    @property
    def ratio_se(self) -> float:
        return self._spread(np.asarray(self.perturbed_risks) / self.baseline_risk)

    def value(self, form: str = DIFFERENCE) -> float:
        _check_form(form)
        return self.point if form == DIFFERENCE else self.ratio

    def value_se(self, form: str = DIFFERENCE) -> float:
        _check_form(form)
        return self.se if form == DIFFERENCE else self.ratio_se

    @staticmethod
    def _spread(values: np.ndarray) -> float:
        if values.size < 2:
            return math.nan
        return float(values.std(ddof=1) / math.sqrt(values.size))


@dataclass(frozen=True, eq=False)
class DeltaRfi:
    """Importance change when the conditioning set grows by an extension.

    ``value`` is base minus extended importance; a nonzero value
    witnesses dependence between the feature and the extension variables
    given the original conditioning set. The standard error combines the
    two arms in quadrature, which stays valid (conservatively) even
    though the arms share replication seeds.
    """

    feature: str
    conditioning: tuple[str, ...]
    extension: tuple[str, ...]
    base: RfiEstimate
    extended: RfiEstimate

    @property
    def value(self) -> float:
        return self.base.point - self.extended.point

    @property
    def se(self) -> float:
        return math.hypot(self.base.se, self.extended.se)


def _check_form(form: str) -> None:
    if form not in FORMS:
        raise ValueError(f"form must be one of {', '.join(FORMS)}; got {form!r}")


def _canonical_names(names) -> tuple[str, ...]:
    return tuple(sorted(str(n) for n in set(names)))


def _validate_cell(
    model: PredictiveModel,
    data: Dataset,
    feature: str,
    conditioning: tuple[str, ...],
) -> None:
    order = tuple(model.feature_order)
    if feature not in order:
        raise SchemaError(f"feature {feature!r} is not a model feature")
    if data.target_name in conditioning:
        raise InvalidPartitionError(
            f"the response {data.target_name!r} may not appear in a conditioning set"
        )
    for name in order + conditioning:
        data.column_index(name)  # raises SchemaError when absent


def compute_rfi(
    model: PredictiveModel,
    loss: LossFunction,
    data: Dataset,
    feature: str,
    conditioning,
    sampler: ConditionalSampler | None = None,
    replications: int = 30,
    base_seed: int = 0,
) -> RfiEstimate:
    """Estimate the importance of ``feature`` relative to ``conditioning``.

    ``sampler`` must be fitted for exactly this (feature, conditioning)
    pair; it is ignored (and may be None) when the feature belongs to its
    own conditioning set, where the replacement is the identity.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    conditioning = _canonical_names(conditioning)
    _validate_cell(model, data, feature, conditioning)
    identity = feature in conditioning
    X = data.matrix(model.feature_order, TEST)
    if X.shape[0] < 1:
        raise SchemaError("no test rows to evaluate on")
    y = data.target_values(TEST)
    base_losses = loss.pointwise(y, model.predict(X))
    baseline = float(base_losses.mean())
    j = tuple(model.feature_order).index(feature)
    if identity:
        required = X[:, [j]]
    else:
        if sampler is None:
            raise SchemaError("a fitted sampler is required when feature not in G")
        if sampler.target != feature or set(sampler.conditioning) != set(conditioning):
            raise SchemaError(
                f"sampler fitted for {sampler.target!r} given "
                f"{sampler.conditioning} does not match ({feature!r}, {conditioning})"
            )
        required = data.matrix(sampler.required_columns, TEST)
    perturbed: list[float] = []
    first_diff: np.ndarray | None = None
    for r in range(int(replications)):
        if identity:
            replacement = required[:, 0]
        else:
            replacement = sampler.sample(required, [int(base_seed), r])
        Xp = X.copy()
        Xp[:, j] = replacement
        losses = loss.pointwise(y, model.predict(Xp))
        perturbed.append(float(losses.mean()))
        if r == 0:
            first_diff = losses - base_losses
    assert first_diff is not None
    return RfiEstimate(
        feature, conditioning, baseline, tuple(perturbed), first_diff, int(base_seed)
    )


def compute_delta_rfi(
    model: PredictiveModel,
    loss: LossFunction,
    data: Dataset,
    feature: str,
    conditioning,
    extension,
    sampler_factory: SamplerFactory,
    replications: int = 30,
    base_seed: int = 0,
) -> DeltaRfi:
    """Importance with ``conditioning`` minus importance with it extended.

    Both arms run on the same seed family, so their replacement draws
    share underlying noise.
    """
    conditioning = _canonical_names(conditioning)
    extension = _canonical_names(extension)
    overlap = set(conditioning) & set(extension)
    if overlap:
        raise InvalidPartitionError(
            f"extension overlaps the conditioning set: {', '.join(sorted(overlap))}"
        )
    if feature in extension:
        raise InvalidPartitionError(
            f"feature {feature!r} may not appear in the extension set"
        )
    if data.target_name in extension:
        raise InvalidPartitionError(
            f"the response {data.target_name!r} may not appear in the extension set"
        )
    union = _canonical_names(conditioning + extension)
    estimates = []
    for cond in (conditioning, union):
        sampler = None if feature in cond else sampler_factory(feature, cond)
        estimates.append(
            compute_rfi(
                model, loss, data, feature, cond, sampler, replications, base_seed
            )
        )
    return DeltaRfi(feature, conditioning, extension, estimates[0], estimates[1])


def rfi_profile(
    model: PredictiveModel,
    loss: LossFunction,
    data: Dataset,
    features: Sequence[str],
    conditioning_sets: Sequence,
    sampler_factory: SamplerFactory,
    replications: int = 30,
    base_seed: int = 0,
) -> tuple[RfiEstimate, ...]:
    """Importance for every (feature, conditioning set) pair.

    Cells are evaluated in row-major order (features outer). The output
    order, and every estimate in it, is deterministic given the inputs.
    """
    results = []
    for feature, cond in product(features, conditioning_sets):
        cond = _canonical_names(cond)
        sampler = None if feature in cond else sampler_factory(feature, cond)
        results.append(
            compute_rfi(
                model, loss, data, feature, cond, sampler, replications, base_seed
            )
        )
    return tuple(results)


def format_conditioning(conditioning) -> str:
    return ";".join(_canonical_names(conditioning))


def result_row(estimate: RfiEstimate, test: TestResult, form: str = DIFFERENCE) -> list[str]:
    """One CSV record: feature, G, estimate, se, t, p, replications, seed.

    Floats are rendered with repr so equal results serialize to equal
    bytes and round-trip without precision loss.
    """
    return [
        estimate.feature,
        format_conditioning(estimate.conditioning),
        repr(estimate.value(form)),
        repr(estimate.value_se(form)),
        repr(float(test.statistic)),
        repr(float(test.p_value)),
        str(estimate.replications),
        str(estimate.base_seed),
    ]


def write_results_csv(path, rows: Sequence[Sequence[str]]) -> None:
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(rows)
