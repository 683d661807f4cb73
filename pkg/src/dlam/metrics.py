"""Pixel confusion counts and the seven background-subtraction metrics."""

import csv
from dataclasses import dataclass, field
from typing import FrozenSet, Optional

import numpy as np

from .errors import ArgumentError, InputError

CSV_HEADER = ("video", "frames", "TP", "TN", "FP", "FN", "recall", "specificity",
              "fpr", "fnr", "pwc", "precision", "fmeasure")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise InputError(f"{name} must be a nonnegative integer, got {value}")
            object.__setattr__(self, name, int(value))

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn,
                               self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class MetricReport:
    """Rates in [0, 1] and ``pwc`` in percent.

    ``degenerate`` names every metric whose denominator was zero; those are
    reported as 0. ``macro_f_measure`` is only set by :func:`aggregate`.
    """

    detection_rate: float
    specificity: float
    fpr: float
    fnr: float
    pwc: float
    precision: float
    f_measure: float
    degenerate: FrozenSet[str] = field(default_factory=frozenset)
    macro_f_measure: Optional[float] = None

    @property
    def recall(self):
        return self.detection_rate


def confusion(mask, truth):
    """Compare two masks pixelwise with foreground as the positive class."""
    m = np.asarray(getattr(mask, "bits", mask), dtype=bool)
    t = np.asarray(getattr(truth, "bits", truth), dtype=bool)
    if m.shape != t.shape:
        raise InputError(f"mask shape {m.shape} differs from truth shape {t.shape}")
    tp = int(np.count_nonzero(m & t))
    fp = int(np.count_nonzero(m & ~t))
    fn = int(np.count_nonzero(~m & t))
    return ConfusionCounts(tp, m.size - tp - fp - fn, fp, fn)


def compute_metrics(c):
    degenerate = set()

    def ratio(name, num, den):
        if den == 0:
            degenerate.add(name)
            return 0.0
        return num / den

    dr = ratio("detection_rate", c.tp, c.tp + c.fn)
    spec = ratio("specificity", c.tn, c.tn + c.fp)
    fpr = ratio("fpr", c.fp, c.fp + c.tn)
    fnr = ratio("fnr", c.fn, c.tp + c.fn)
    pwc = 100.0 * ratio("pwc", c.fn + c.fp, c.total)
    precision = ratio("precision", c.tp, c.tp + c.fp)
    f = ratio("f_measure", 2.0 * dr * precision, dr + precision)
    return MetricReport(dr, spec, fpr, fnr, pwc, precision, f, frozenset(degenerate))


def aggregate(reports, counts):
    """Micro-average: metrics of the pooled counts.

    The arithmetic mean of the per-frame F-measures is kept in
    ``macro_f_measure``.
    """
    reports, counts = list(reports), list(counts)
    if not counts:
        raise ArgumentError("cannot aggregate an empty frame sequence")
    if len(reports) != len(counts):
        raise ArgumentError(f"{len(reports)} reports but {len(counts)} count records")
    pooled = sum(counts, ConfusionCounts())
    micro = compute_metrics(pooled)
    macro = float(np.mean([r.f_measure for r in reports]))
    return MetricReport(micro.detection_rate, micro.specificity, micro.fpr, micro.fnr,
                        micro.pwc, micro.precision, micro.f_measure, micro.degenerate, macro)


def _row(name, frames, c, r):
    return [name, str(frames), str(c.tp), str(c.tn), str(c.fp), str(c.fn)] + [
        f"{v:.6f}" for v in (r.detection_rate, r.specificity, r.fpr, r.fnr, r.pwc,
                             r.precision, r.f_measure)]


def write_report(path, videos):
    """Write the CSV report.

    ``videos`` maps a video name to its list of per-frame counts. The final
    ``AVERAGE`` row pools every frame of every video.
    """
    if not videos:
        raise ArgumentError("no videos to report")
    all_counts, all_reports = [], []
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CSV_HEADER)
        for name in sorted(videos):
            counts = list(videos[name])
            reports = [compute_metrics(c) for c in counts]
            agg = aggregate(reports, counts)
            out.writerow(_row(name, len(counts), sum(counts, ConfusionCounts()), agg))
            all_counts += counts
            all_reports += reports
        agg = aggregate(all_reports, all_counts)
        out.writerow(_row("AVERAGE", len(all_counts), sum(all_counts, ConfusionCounts()), agg))
    return agg
