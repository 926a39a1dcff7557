"""
Monthly event tables, the product-limit estimator with Greenwood intervals and the k-sample log-rank test.

One-year and five-year survival are read at months 12 and 60 inclusive of that month's row.
"""

from scipy.stats import chi2
from math import sqrt
import numpy as np

import logging

logger = logging.getLogger(__name__)


Z_95 = 1.96


class SurvivalError(Exception):
    pass


class EventTableError(SurvivalError):
    pass


class DegenerateGroupError(SurvivalError):
    pass


class EventRow(object):
    def __init__(self, time: int, removed: int, observed: int, censored: int, atRisk: int):
        self.time = time
        self.removed = removed
        self.observed = observed
        self.censored = censored
        self.atRisk = atRisk

    def toRow(self):
        return {
            "time": self.time,
            "removed": self.removed,
            "observed": self.observed,
            "censored": self.censored,
            "at_risk": self.atRisk,
        }

    def __eq__(self, other):
        return isinstance(other, EventRow) and self.toRow() == other.toRow()

    def __repr__(self):
        return "EventRow({0})".format(self.toRow())


class EventTable(object):
    fields = ["time", "removed", "observed", "censored", "at_risk"]

    def __init__(self, rows):
        self.rows = [r if isinstance(r, EventRow) else EventRow(*r) for r in rows]
        self.validate()

    def validate(self):
        for index, row in enumerate(self.rows):
            if row.time != index:
                raise EventTableError("row {0} has time {1}; months must run 0, 1, 2, ...".format(index, row.time))
            if min(row.removed, row.observed, row.censored, row.atRisk) < 0:
                raise EventTableError("negative count at month {0}".format(row.time))
            if row.removed != row.observed + row.censored:
                raise EventTableError("removed != observed + censored at month {0}".format(row.time))
            if row.removed > row.atRisk:
                raise EventTableError("more subjects removed than at risk at month {0}".format(row.time))
        for current, following in zip(self.rows, self.rows[1:]):
            if following.atRisk != current.atRisk - current.removed:
                raise EventTableError("at-risk count does not carry over into month {0}".format(following.time))

    @property
    def horizon(self):
        return len(self.rows) - 1

    def getSize(self):
        return self.rows[0].atRisk if self.rows else 0

    def getDeaths(self):
        return sum(r.observed for r in self.rows)

    def row(self, time):
        return self.rows[time]

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other):
        return isinstance(other, EventTable) and self.rows == other.rows

    def __add__(self, other):
        if len(self) != len(other):
            raise EventTableError("cannot add event tables of different horizons")
        return EventTable(
            [
                EventRow(a.time, a.removed + b.removed, a.observed + b.observed, a.censored + b.censored, a.atRisk + b.atRisk)
                for a, b in zip(self.rows, other.rows)
            ]
        )

    def scaled(self, factor: int):
        return EventTable(
            [EventRow(r.time, r.removed * factor, r.observed * factor, r.censored * factor, r.atRisk * factor) for r in self.rows]
        )

    def toRows(self):
        return [r.toRow() for r in self.rows]

    @staticmethod
    def fromRows(rows):
        try:
            return EventTable([EventRow(*(int(row[f]) for f in EventTable.fields)) for row in rows])
        except (KeyError, ValueError) as e:
            raise EventTableError("invalid event table row: {0}".format(e))


def event_table_from_times(times, events, horizon: int):
    """
    `times` in whole months and `events` (True for a death); everybody still at risk at `horizon`
    is censored there, deaths at exactly `horizon` stay deaths
    """
    if horizon < 1:
        raise SurvivalError("horizon must be at least one month")
    observed = [0] * (horizon + 1)
    censored = [0] * (horizon + 1)
    for time, event in zip(times, events):
        if time < 0:
            raise EventTableError("negative survival time {0}".format(time))
        if time > horizon:
            censored[horizon] += 1
        elif event:
            observed[time] += 1
        else:
            censored[time] += 1
    rows = []
    atRisk = len(times)
    for t in range(horizon + 1):
        if t == horizon:
            # administrative censoring of the remaining subjects
            censored[t] = atRisk - observed[t]
        removed = observed[t] + censored[t]
        rows.append(EventRow(t, removed, observed[t], censored[t], atRisk))
        atRisk -= removed
    return EventTable(rows)


def survival_subjects(timelines):
    return [t for t in timelines if t.isSurvivalSubject()]


def build_event_table(timelines, horizon: int):
    timelines = list(timelines)
    return event_table_from_times([t.getSurvivalTime() for t in timelines], [t.isDeath() for t in timelines], horizon)


class SurvivalPoint(object):
    def __init__(self, time, survival, variance, ciLow, ciHigh):
        self.time = time
        self.survival = survival
        self.variance = variance
        self.ciLow = ciLow
        self.ciHigh = ciHigh

    def getHalfWidth(self):
        return Z_95 * sqrt(self.variance)


class SurvivalCurve(object):
    fields = ["t", "S", "ci_low", "ci_high"]

    def __init__(self, points, extended=False):
        self.points = points
        # set when a prediction runs past the last observed time
        self.extended = extended

    def at(self, time: int) -> float:
        return self.point(time).survival

    def point(self, time: int) -> SurvivalPoint:
        if time < 0:
            raise SurvivalError("negative time {0}".format(time))
        if time >= len(self.points):
            raise SurvivalError("month {0} is beyond the curve horizon {1}".format(time, len(self.points) - 1))
        return self.points[time]

    def median(self):
        for p in self.points:
            if p.survival <= 0.5:
                return p.time
        return None

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def toRows(self):
        return [
            {
                "t": p.time,
                "S": "{0:.6f}".format(p.survival),
                "ci_low": "{0:.6f}".format(p.ciLow),
                "ci_high": "{0:.6f}".format(p.ciHigh),
            }
            for p in self.points
        ]


def kaplan_meier(table: EventTable) -> SurvivalCurve:
    """
    Within a month deaths come before censorings, so both are drawn from the same at-risk count.
    """
    table.validate()
    points = []
    s = 1.0
    greenwood = 0.0
    for row in table:
        d = row.observed
        n = row.atRisk
        if n > 0 and d > 0:
            s *= 1.0 - d / n
            if n > d:
                greenwood += d / (n * (n - d))
        variance = s * s * greenwood if s > 0 else 0.0
        half = Z_95 * sqrt(variance)
        points.append(SurvivalPoint(row.time, s, variance, max(0.0, s - half), min(1.0, s + half)))
    return SurvivalCurve(points)


class LogRankResult(object):
    def __init__(self, chiSquare, dof, pValue, observed, expected):
        self.chiSquare = chiSquare
        self.dof = dof
        self.pValue = pValue
        self.observed = observed
        self.expected = expected

    def toJson(self):
        return {
            "chi_square": self.chiSquare,
            "dof": self.dof,
            "p_value": self.pValue,
            "observed": list(self.observed),
            "expected": list(self.expected),
        }


def log_rank_test(tables) -> LogRankResult:
    if len(tables) < 2:
        raise SurvivalError("the log-rank test needs at least two groups")
    for index, table in enumerate(tables):
        if table.getSize() == 0:
            raise DegenerateGroupError("group {0} has no subjects".format(index))
    if len(set(len(t) for t in tables)) != 1:
        raise EventTableError("event tables must share one monthly grid")

    k = len(tables)
    deaths = np.array([[r.observed for r in t] for t in tables], dtype=float)
    atRisk = np.array([[r.atRisk for r in t] for t in tables], dtype=float)
    d = deaths.sum(axis=0)
    n = atRisk.sum(axis=0)

    observed = deaths.sum(axis=1)
    expected = np.zeros(k)
    covariance = np.zeros((k, k))
    for t in range(deaths.shape[1]):
        if n[t] <= 0 or d[t] == 0:
            continue
        share = atRisk[:, t] / n[t]
        expected += d[t] * share
        if n[t] > 1:
            factor = d[t] * (n[t] - d[t]) / (n[t] - 1)
            covariance += factor * (np.diag(share) - np.outer(share, share))

    difference = (observed - expected)[:-1]
    reduced = covariance[:-1, :-1]
    if not difference.any():
        statistic = 0.0
    else:
        statistic = float(difference @ np.linalg.pinv(reduced) @ difference)
    dof = k - 1
    pValue = float(chi2.sf(statistic, dof))
    logger.debug("log-rank: chi2=%f, dof=%i, p=%g", statistic, dof, pValue)
    return LogRankResult(statistic, dof, pValue, observed, expected)
