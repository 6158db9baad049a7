"""Corpus-level structural statistics for reasoning chains.

Per-chain counts (evidence, derivations, parent-reference edges) are
aggregated into averages, the evidence share of all variables, path
efficiency (edges per variable), a through-origin slope of edges against
total variables, the Pearson correlation of the same pair, Welch t-tests
against a comparison corpus, and an accuracy-by-length profile with an
inverted-U detector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special

from .chainformat import ChainDocument
from .errors import (
    BadBins,
    ConstantSeries,
    DegenerateInput,
    DegenerateVariance,
    EmptyCorpus,
    TooFewBins,
)
from .rewards import match_answers

WELCH_METRICS = ("exogenous", "endogenous", "paths")


@dataclass(frozen=True)
class ChainStats:
    """Structural counts for one chain; ``correct`` is None when no gold label exists."""

    n_exogenous: int
    n_endogenous: int
    n_paths: int
    total_vars: int
    length: int
    correct: Optional[bool] = None


def chain_stats(doc: ChainDocument) -> ChainStats:
    """Counts as used throughout: paths = total parent references (edge count),
    length = number of derivation steps."""
    n_exo = len(doc.chain.exogenous)
    n_endo = len(doc.chain.endogenous)
    n_paths = sum(len(endo.parents) for endo in doc.chain.endogenous)
    correct = None
    if doc.gold_label is not None:
        answer = doc.predicted_label if doc.predicted_label is not None else doc.chain.verdict
        correct = match_answers(answer, doc.gold_label, "exact")
    return ChainStats(
        n_exogenous=n_exo,
        n_endogenous=n_endo,
        n_paths=n_paths,
        total_vars=n_exo + n_endo,
        length=n_endo,
        correct=correct,
    )


def fit_slope_origin(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of y = k*x through the origin: sum(xy) / sum(x^2)."""
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.shape != ys.shape or xs.size < 2:
        raise DegenerateInput("need two equal-length series of at least 2 points")
    sxx = float(np.dot(xs, xs))
    if sxx == 0.0:
        raise DegenerateInput("x is identically zero")
    return float(np.dot(xs, ys)) / sxx


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    if xs.shape != ys.shape or xs.size < 2:
        raise DegenerateInput("need two equal-length series of at least 2 points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sx = float(np.dot(dx, dx))
    sy = float(np.dot(dy, dy))
    if sx == 0.0 or sy == 0.0:
        raise ConstantSeries("correlation undefined for a constant series")
    return float(np.dot(dx, dy) / math.sqrt(sx * sy))


@dataclass(frozen=True)
class WelchResult:
    t: float
    dof: float
    p: float

    def to_json_dict(self) -> dict:
        return {"t": self.t, "dof": self.dof, "p": self.p}


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """Welch's unequal-variance t-test with a two-sided p-value.

    The p-value comes from the Student-t survival function expressed through
    the regularized incomplete beta: p = I_{dof/(dof+t^2)}(dof/2, 1/2).
    Underflow below the double range clamps to 0.
    """
    xs = np.asarray(a, dtype=np.float64)
    ys = np.asarray(b, dtype=np.float64)
    if xs.size < 2 or ys.size < 2:
        raise DegenerateVariance("each sample needs at least 2 points")
    var_a = float(xs.var(ddof=1))
    var_b = float(ys.var(ddof=1))
    if var_a == 0.0 or var_b == 0.0:
        raise DegenerateVariance("zero variance sample")
    sa = var_a / xs.size
    sb = var_b / ys.size
    se2 = sa + sb
    t = (float(xs.mean()) - float(ys.mean())) / math.sqrt(se2)
    dof = se2 * se2 / (sa * sa / (xs.size - 1) + sb * sb / (ys.size - 1))
    p = float(special.betainc(dof / 2.0, 0.5, dof / (dof + t * t))) if t != 0.0 else 1.0
    return WelchResult(t=t, dof=dof, p=p)


@dataclass(frozen=True)
class ProfileBin:
    lo: float
    hi: float
    accuracy: float
    count: int

    @property
    def midpoint(self) -> float:
        return (self.lo + self.hi) / 2.0

    def to_json_dict(self) -> dict:
        return {
            "bin": [self.lo, self.hi],
            "accuracy": self.accuracy,
            "count": self.count,
        }


def length_accuracy_profile(
    corpus: Iterable[ChainStats], bin_edges: Optional[Sequence[float]] = None
) -> list[ProfileBin]:
    """Per-bin accuracy over items carrying correctness; empty bins are dropped.

    Bins are [lo, hi) with the last bin closed. Default edges give every
    observed step count its own unit-width bin.
    """
    items = [(s.length, s.correct) for s in corpus if s.correct is not None]
    if bin_edges is None:
        if not items:
            return []
        lo = min(length for length, _ in items)
        hi = max(length for length, _ in items)
        edges = [float(v) for v in range(int(lo), int(hi) + 2)]
    else:
        edges = [float(e) for e in bin_edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise BadBins("bin edges must be strictly increasing, with at least two")

    counts = [0] * (len(edges) - 1)
    hits = [0] * (len(edges) - 1)
    last = len(edges) - 2
    for length, correct in items:
        for i in range(len(edges) - 1):
            inside = edges[i] <= length < edges[i + 1] or (i == last and length == edges[-1])
            if inside:
                counts[i] += 1
                hits[i] += 1 if correct else 0
                break
    return [
        ProfileBin(lo=edges[i], hi=edges[i + 1], accuracy=hits[i] / counts[i], count=counts[i])
        for i in range(len(edges) - 1)
        if counts[i] > 0
    ]


@dataclass(frozen=True)
class InvertedUResult:
    is_inverted_u: bool
    peak_bin: Optional[ProfileBin]
    quad_coeff: float

    def to_json_dict(self) -> dict:
        return {
            "is_inverted_u": self.is_inverted_u,
            "peak_bin": None if self.peak_bin is None else self.peak_bin.to_json_dict(),
            "quad_coeff": self.quad_coeff,
        }


def inverted_u_check(profile: Sequence[ProfileBin]) -> InvertedUResult:
    """Detect a rise-then-fall accuracy profile.

    Fits accuracy against bin midpoints with a least-squares quadratic;
    the profile counts as inverted-U when the curvature is negative and
    the fitted peak lies strictly inside the midpoint range. peak_bin is
    the highest-accuracy bin (first on ties).
    """
    bins = list(profile)
    if len(bins) < 3:
        raise TooFewBins(len(bins))
    mids = np.array([b.midpoint for b in bins])
    accs = np.array([b.accuracy for b in bins])
    quad, lin, _ = np.polyfit(mids, accs, 2)
    quad = float(quad)
    peak_bin = max(bins, key=lambda b: (b.accuracy, -b.midpoint))
    span = float(mids.max() - mids.min())
    # curvature must bend accuracy by more than fit noise over the span
    if not math.isfinite(quad) or quad * span * span > -1e-9:
        return InvertedUResult(False, peak_bin, quad)
    vertex = -float(lin) / (2.0 * quad)
    margin = 1e-9 * span
    interior = float(mids.min()) + margin < vertex < float(mids.max()) - margin
    return InvertedUResult(interior, peak_bin, quad)


@dataclass(frozen=True)
class CorpusReport:
    """Aggregate structural statistics; see module docstring for field meanings."""

    avg_exogenous: float
    avg_endogenous: float
    avg_paths: float
    accuracy: Optional[float]
    exo_proportion: float
    path_efficiency: float
    slope: Optional[float]
    pearson_r: Optional[float]
    welch: Optional[dict]
    length_profile: list[ProfileBin]

    def to_json_dict(self) -> dict:
        return {
            "avg_exogenous": self.avg_exogenous,
            "avg_endogenous": self.avg_endogenous,
            "avg_paths": self.avg_paths,
            "accuracy": self.accuracy,
            "exo_proportion": self.exo_proportion,
            "path_efficiency": self.path_efficiency,
            "slope": self.slope,
            "pearson_r": self.pearson_r,
            "welch": (
                None
                if self.welch is None
                else {
                    k: (None if v is None else v.to_json_dict())
                    for k, v in self.welch.items()
                }
            ),
            "length_profile": [b.to_json_dict() for b in self.length_profile],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        """Human-readable summary; p-values below 1e-300 print as <1e-300."""
        lines = [
            f"chains: exo {self.avg_exogenous:.4f}  endo {self.avg_endogenous:.4f}  "
            f"paths {self.avg_paths:.4f}",
            f"exo proportion {self.exo_proportion:.4f}  path efficiency "
            f"{self.path_efficiency:.4f}",
        ]
        if self.accuracy is not None:
            lines.append(f"accuracy {self.accuracy:.4f}")
        if self.slope is not None:
            lines.append(f"slope(paths~vars) {self.slope:.4f}")
        if self.pearson_r is not None:
            lines.append(f"pearson(vars,paths) {self.pearson_r:.4f}")
        if self.welch:
            for metric, result in self.welch.items():
                if result is None:
                    lines.append(f"welch {metric}: degenerate variance")
                    continue
                shown = "<1e-300" if 0 < result.p < 1e-300 else f"{result.p:.3g}"
                lines.append(f"welch {metric}: t={result.t:.4f} dof={result.dof:.1f} p={shown}")
        return "\n".join(lines) + "\n"


def _metric_series(stats: Sequence[ChainStats]) -> dict[str, list[float]]:
    return {
        "exogenous": [float(s.n_exogenous) for s in stats],
        "endogenous": [float(s.n_endogenous) for s in stats],
        "paths": [float(s.n_paths) for s in stats],
    }


def corpus_report(
    corpus: Iterable[ChainStats],
    compare: Optional[Iterable[ChainStats]] = None,
    bin_edges: Optional[Sequence[float]] = None,
) -> CorpusReport:
    """Aggregate a corpus; Welch tests are populated only when a comparison
    corpus is given. Slope and correlation are None when the corpus is
    degenerate for them (e.g. constant variable counts)."""
    stats = list(corpus)
    if not stats:
        raise EmptyCorpus("no chains to aggregate")
    n = len(stats)
    sum_exo = sum(s.n_exogenous for s in stats)
    sum_endo = sum(s.n_endogenous for s in stats)
    sum_paths = sum(s.n_paths for s in stats)
    sum_vars = sum(s.total_vars for s in stats)

    judged = [s for s in stats if s.correct is not None]
    accuracy = sum(1 for s in judged if s.correct) / len(judged) if judged else None

    total_vars = [float(s.total_vars) for s in stats]
    paths = [float(s.n_paths) for s in stats]
    try:
        slope = fit_slope_origin(total_vars, paths)
    except DegenerateInput:
        slope = None
    try:
        pearson_r = pearson(total_vars, paths)
    except (DegenerateInput, ConstantSeries):
        pearson_r = None

    welch = None
    if compare is not None:
        other = list(compare)
        if not other:
            raise EmptyCorpus("comparison corpus is empty")
        ours = _metric_series(stats)
        theirs = _metric_series(other)
        welch = {}
        for metric in WELCH_METRICS:
            try:
                welch[metric] = welch_t_test(ours[metric], theirs[metric])
            except DegenerateVariance:
                welch[metric] = None

    profile = length_accuracy_profile(stats, bin_edges) if judged else []

    return CorpusReport(
        avg_exogenous=sum_exo / n,
        avg_endogenous=sum_endo / n,
        avg_paths=sum_paths / n,
        accuracy=accuracy,
        exo_proportion=sum_exo / sum_vars,
        path_efficiency=sum_paths / sum_vars,
        slope=slope,
        pearson_r=pearson_r,
        welch=welch,
        length_profile=profile,
    )


def profile_to_csv(profile: Sequence[ProfileBin]) -> str:
    """CSV export of a length profile for plotting."""
    lines = ["bin_lo,bin_hi,accuracy,count"]
    lines.extend(f"{b.lo},{b.hi},{b.accuracy},{b.count}" for b in profile)
    return "\n".join(lines) + "\n"
