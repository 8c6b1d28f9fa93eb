"""Verification metrics: FRR/FAR, ROC, EER, AUC and report aggregation.

Higher scores mean "more genuine"; a sample is accepted when its score is
``>= t``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, ReportingError

FORGERY_KINDS = ("random", "simple", "skilled")


def _scores(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ReportingError(f"{what} score list is empty")
    return arr


def far_frr_at_threshold(genuine, forgery, t: float) -> tuple[float, float | None]:
    """``(FRR, FAR)`` at threshold ``t``; FAR is None without forgeries."""
    g = _scores(genuine, "genuine")
    frr = float(np.mean(g < t))
    f = np.asarray(forgery, dtype=np.float64).ravel()
    far = float(np.mean(f >= t)) if f.size else None
    return frr, far


@dataclass(frozen=True)
class RocPoint:
    far: float
    frr: float
    threshold: float


def roc_curve(genuine, forgery) -> list[RocPoint]:
    """One point per distinct score plus the two infinite sentinels, by FAR."""
    g = np.sort(_scores(genuine, "genuine"))
    f = np.sort(_scores(forgery, "forgery"))
    thresholds = np.concatenate([[-np.inf], np.unique(np.concatenate([g, f])), [np.inf]])
    frr = np.searchsorted(g, thresholds, side="left") / len(g)
    far = 1.0 - np.searchsorted(f, thresholds, side="left") / len(f)
    points = [RocPoint(float(a), float(r), float(t)) for a, r, t in zip(far, frr, thresholds)]
    return points[::-1]


def eer(genuine, forgery) -> float:
    """Equal error rate by linear interpolation where FAR - FRR changes sign."""
    points = roc_curve(genuine, forgery)[::-1]  # threshold ascending, FAR - FRR non-increasing
    prev = points[0]
    for p in points:
        d = p.far - p.frr
        if d == 0:
            return p.far
        if d < 0:
            d_prev = prev.far - prev.frr
            w = d_prev / (d_prev - d)
            return prev.far + w * (p.far - prev.far)
        prev = p
    raise AssertionError("ROC curve must end at FAR=0, FRR=1")


def auc(genuine, forgery) -> float:
    """P(genuine score > forgery score), ties counted one half."""
    g = _scores(genuine, "genuine")
    f = np.sort(_scores(forgery, "forgery"))
    below = np.searchsorted(f, g, side="left")
    not_above = np.searchsorted(f, g, side="right")
    return float((below.sum() + 0.5 * (not_above - below).sum()) / (len(g) * len(f)))


def average_error_rate(*rates: float) -> float:
    if not rates or any(r is None for r in rates):
        raise ReportingError("AER needs every constituent error rate")
    return float(sum(rates) / len(rates))


def format_percent(rate: float | None) -> str:
    """Rate in [0, 1] as a percentage with 2 decimals, halves rounded up."""
    if rate is None or (isinstance(rate, float) and math.isnan(rate)):
        return "-"
    # strip binary noise first so 7.585 does not print as 7.58
    value = Decimal(repr(rate * 100)).quantize(Decimal("1e-9"), ROUND_HALF_EVEN)
    return str(value.quantize(Decimal("0.01"), ROUND_HALF_UP))


@dataclass
class UserScores:
    genuine: Sequence[float]
    random: Sequence[float] | None = None
    simple: Sequence[float] | None = None
    skilled: Sequence[float] | None = None

    def __post_init__(self):
        if len(self.genuine) == 0:
            raise ConfigError("every evaluated user needs genuine scores")

    def forgeries(self, kind: str):
        values = getattr(self, kind)
        return None if values is None or len(values) == 0 else values


@dataclass
class UserMetrics:
    user: int
    FRR: float
    FAR_random: float | None = None
    FAR_simple: float | None = None
    FAR_skilled: float | None = None
    EER: float | None = None
    AUC: float | None = None
    AER: float | None = None
    AER_genuine_skilled: float | None = None


def user_metrics(user: int, scores: UserScores, threshold: float = 0.0) -> UserMetrics:
    frr, _ = far_frr_at_threshold(scores.genuine, [], threshold)
    m = UserMetrics(user=user, FRR=frr)
    for kind in FORGERY_KINDS:
        f = scores.forgeries(kind)
        if f is not None:
            setattr(m, f"FAR_{kind}", far_frr_at_threshold(scores.genuine, f, threshold)[1])
    skilled = scores.forgeries("skilled")
    if skilled is not None:
        m.EER = eer(scores.genuine, skilled)
        m.AUC = auc(scores.genuine, skilled)
        m.AER_genuine_skilled = average_error_rate(m.FRR, m.FAR_skilled)
    if all(getattr(m, f"FAR_{k}") is not None for k in FORGERY_KINDS):
        m.AER = average_error_rate(m.FRR, m.FAR_random, m.FAR_simple, m.FAR_skilled)
    return m


METRIC_COLUMNS = ("FRR", "FAR_random", "FAR_simple", "FAR_skilled", "EER", "AUC", "AER", "AER_genuine_skilled")
GPDS_COLUMNS = ("FRR", "FAR_skilled", "EER", "AUC")
BRAZILIAN_COLUMNS = ("FRR", "FAR_random", "FAR_simple", "FAR_skilled", "EER", "AUC")


def _mean(values):
    present = [v for v in values if v is not None]
    if not present:
        return None
    if len(present) != len(values):
        raise ReportingError("metric present for some users but not others")
    return float(np.mean(present))


@dataclass
class EvalReport:
    """Per-user metrics plus aggregates.

    Aggregate FRR/FAR are the t=0 (global threshold) rates averaged over
    users; EER is the mean of per-user EERs; AER variants are computed from
    the aggregate rates.
    """

    users: list[UserMetrics]
    aggregate: UserMetrics = field(init=False)
    protocol: str = "gpds"

    def __post_init__(self):
        if not self.users:
            raise ReportingError("report needs at least one user")
        agg = UserMetrics(user=-1, FRR=_mean([u.FRR for u in self.users]))
        for name in ("FAR_random", "FAR_simple", "FAR_skilled", "EER", "AUC"):
            setattr(agg, name, _mean([getattr(u, name) for u in self.users]))
        if agg.FAR_skilled is not None:
            agg.AER_genuine_skilled = average_error_rate(agg.FRR, agg.FAR_skilled)
        if None not in (agg.FAR_random, agg.FAR_simple, agg.FAR_skilled):
            agg.AER = average_error_rate(agg.FRR, agg.FAR_random, agg.FAR_simple, agg.FAR_skilled)
        self.aggregate = agg

    @property
    def mean_auc(self) -> float | None:
        return self.aggregate.AUC

    @property
    def mean_eer(self) -> float | None:
        return self.aggregate.EER

    def columns(self) -> tuple[str, ...]:
        return BRAZILIAN_COLUMNS if self.protocol == "brazilian" else GPDS_COLUMNS

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("scope", "user", *METRIC_COLUMNS))
        rows = [("user", u) for u in self.users] + [("mean", self.aggregate)]
        for scope, m in rows:
            writer.writerow((scope, "" if m.user < 0 else m.user,
                             *("" if getattr(m, c) is None else repr(getattr(m, c)) for c in METRIC_COLUMNS)))
        return buf.getvalue()

    def summary(self) -> str:
        """Text table: rates as %, AUC to 4 decimals."""
        cols = list(self.columns())
        if self.protocol == "brazilian":
            cols += ["AER", "AER_genuine_skilled"]
        else:
            cols += ["AER_genuine_skilled"]
        labels = [("Mean AUC" if c == "AUC" else c) for c in cols]
        values = []
        for c in cols:
            v = getattr(self.aggregate, c)
            if c == "AUC":
                values.append("-" if v is None else f"{v:.4f}")
            else:
                values.append(format_percent(v))
        widths = [max(len(a), len(b)) for a, b in zip(labels, values)]
        head = "  ".join(a.rjust(w) for a, w in zip(labels, widths))
        body = "  ".join(b.rjust(w) for b, w in zip(values, widths))
        return f"{head}\n{body}\n({len(self.users)} users, errors in %)\n"


def aggregate(per_user: Mapping[int, UserScores], protocol: str = "gpds",
              threshold: float = 0.0) -> EvalReport:
    """Build the report for ``protocol`` ('gpds' or 'brazilian')."""
    if protocol not in ("gpds", "brazilian"):
        raise ConfigError(f"unknown protocol {protocol!r}")
    users = [user_metrics(u, s, threshold) for u, s in sorted(per_user.items())]
    needed = ("random", "simple", "skilled") if protocol == "brazilian" else ("skilled",)
    for m in users:
        missing = [k for k in needed if getattr(m, f"FAR_{k}") is None]
        if missing:
            raise ReportingError(f"user {m.user}: {protocol} report needs {', '.join(missing)} forgeries")
    return EvalReport(users, protocol=protocol)
