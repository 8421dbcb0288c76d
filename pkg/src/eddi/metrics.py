"""Information-curve metrics: AUIC and cross-method average ranking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .acquisition import InfoCurve
from .errors import CoverageError, NumericError


def auic(curve: InfoCurve, grouped: bool = False) -> float:
    """Area under the information curve; lower is better.

    Ungrouped selection sums the per-step negative log-likelihoods
    (step 0 included). Grouped selection integrates the piecewise-linear
    interpolant of (cumulative cost, NLL) over cost, so a candidate's
    cost weight stretches its segment of the curve.
    """
    nll = curve.nll
    if not grouped:
        return float(nll.sum())
    cost = curve.cumulative_cost
    widths = np.diff(cost)
    return float((0.5 * (nll[1:] + nll[:-1]) * widths).sum())


@dataclass(frozen=True)
class AuicEntry:
    variant: str
    strategy: str
    repetition: int
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NumericError(
                f"non-finite AUIC for {self.variant}/{self.strategy} rep {self.repetition}"
            )


@dataclass(frozen=True)
class AuicTable:
    entries: tuple[AuicEntry, ...]

    def values(self, variant: str, strategy: str) -> np.ndarray:
        return np.array(
            [e.value for e in self.entries if e.variant == variant and e.strategy == strategy]
        )

    def mean(self, variant: str, strategy: str) -> float:
        return float(self.values(variant, strategy).mean())

    def stderr(self, variant: str, strategy: str) -> float:
        v = self.values(variant, strategy)
        if v.size < 2:
            return float("nan")
        return float(v.std(ddof=1) / np.sqrt(v.size))

    def to_csv_lines(self) -> list[str]:
        lines = ["variant,strategy,repetition,auic"]
        for e in self.entries:
            lines.append(f"{e.variant},{e.strategy},{e.repetition},{e.value!r}")
        return lines


def average_ranking(
    scores: Mapping[str, Mapping[str, Sequence[float]]],
) -> dict[str, float]:
    """Mean rank of each method over all (dataset, test point) cells.

    ``scores[method][dataset]`` lists one AUIC per test point. Every
    method must cover the same datasets with the same point counts; at
    each point methods are ranked ascending (rank 1 best, ties averaged)
    and ranks are pooled over all points of all datasets.
    """
    methods = sorted(scores)
    if not methods:
        raise CoverageError("no methods to rank")
    datasets = sorted(scores[methods[0]])
    gaps = []
    for m in methods:
        for d in datasets:
            if d not in scores[m]:
                gaps.append(f"{m}/{d}: missing dataset")
            elif len(scores[m][d]) != len(scores[methods[0]][d]):
                gaps.append(f"{m}/{d}: {len(scores[m][d])} points, expected {len(scores[methods[0]][d])}")
        extra = set(scores[m]) - set(datasets)
        if extra:
            gaps.append(f"{m}: unexpected datasets {sorted(extra)}")
    if gaps:
        raise CoverageError("incomplete AUIC coverage: " + "; ".join(gaps))

    totals = {m: 0.0 for m in methods}
    count = 0
    for d in datasets:
        per_point = np.array([scores[m][d] for m in methods], dtype=np.float64)
        for k in range(per_point.shape[1]):
            ranks = rankdata(per_point[:, k], method="average")
            for m, r in zip(methods, ranks):
                totals[m] += float(r)
            count += 1
    if count == 0:
        raise CoverageError("no test points to rank")
    return {m: totals[m] / count for m in methods}
