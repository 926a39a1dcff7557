"""
Incidence, mortality and case-fatality rates per 100,000 women, crude and directly age-standardized.
"""

from regsurv.cohort import PatientTimeline, MissingIdScenario, missing_id_sensitivity
from regsurv.registry import DeathRecord, ParseError
from regsurv.storage import read_frame
from enum import Enum
from functools import total_ordering
from math import floor
import numpy as np
import pandas as pd
import os

import logging

logger = logging.getLogger(__name__)


PER_100K = 100000.0


class RateError(Exception):
    pass


class UndefinedRateError(RateError):
    pass


class CoverageError(RateError):
    pass


class InsufficientDataError(RateError):
    pass


@total_ordering
class AgeBand(object):
    def __init__(self, lower: int, upper: int = None):
        if lower < 0 or (upper is not None and upper < lower):
            raise ParseError("{0}-{1}".format(lower, upper), "invalid age band")
        self.lower = lower
        # inclusive; None is open-ended
        self.upper = upper

    @staticmethod
    def parse(token):
        t = (token or "").strip()
        try:
            if t.endswith("+"):
                return AgeBand(int(t[:-1]))
            lower, upper = t.split("-")
            return AgeBand(int(lower), int(upper))
        except ValueError:
            raise ParseError(token, "invalid age band")

    def contains(self, age):
        return age >= self.lower and (self.upper is None or age <= self.upper)

    def __eq__(self, other):
        return isinstance(other, AgeBand) and self.lower == other.lower and self.upper == other.upper

    def __lt__(self, other):
        return self.lower < other.lower

    def __hash__(self):
        return hash((self.lower, self.upper))

    def __str__(self):
        if self.upper is None:
            return "{0}+".format(self.lower)
        return "{0}-{1}".format(self.lower, self.upper)

    def __repr__(self):
        return "AgeBand({0})".format(self)


DEFAULT_AGE_BANDS = [AgeBand(0, 19)] + [AgeBand(lower, lower + 4) for lower in range(20, 85, 5)] + [AgeBand(85)]


def age_band_of(age, bands=None):
    for band in bands or DEFAULT_AGE_BANDS:
        if band.contains(age):
            return band
    raise CoverageError("age {0} is not covered by any band".format(age))


class StratumKind(Enum):
    NATIONAL = "national"
    REGION = "region"
    INSURER = "insurer"


NATIONAL = "national"


class PopulationTable(object):
    """
    women per (year, stratum kind, stratum, age band), one row each in a DataFrame
    """

    fields = ["year", "stratum_kind", "stratum", "age_band", "count"]
    keys = ["year", "stratum_kind", "stratum", "age_band"]

    def __init__(self, frame: pd.DataFrame = None):
        self._frame = frame if frame is not None else pd.DataFrame(columns=PopulationTable.fields)
        self._pending = []

    def add(self, year: int, kind: StratumKind, stratum: str, band: AgeBand, count: int):
        if count < 0:
            raise RateError("negative population for {0} {1} {2} {3}".format(year, kind.value, stratum, band))
        self._pending.append({"year": year, "stratum_kind": kind.value, "stratum": stratum, "age_band": band, "count": count})

    def remove(self, year, kind, stratum, band):
        frame = self.frame
        self._frame = frame[~self._mask(year, kind, stratum, band)].reset_index(drop=True)

    @property
    def frame(self):
        if self._pending:
            added = pd.DataFrame(self._pending, columns=PopulationTable.fields)
            frame = added if self._frame.empty else pd.concat([self._frame, added], ignore_index=True)
            # later additions replace earlier ones
            self._frame = frame.drop_duplicates(subset=PopulationTable.keys, keep="last").reset_index(drop=True)
            self._frame = self._frame.astype({"year": int, "count": int})
            self._pending = []
        return self._frame

    def _mask(self, year, kind, stratum, band=None):
        frame = self.frame
        mask = (frame["year"] == year) & (frame["stratum_kind"] == kind.value) & (frame["stratum"] == stratum)
        if band is not None:
            mask &= frame["age_band"] == band
        return mask

    def get(self, year, kind, stratum, band):
        counts = self.frame.loc[self._mask(year, kind, stratum, band), "count"]
        if counts.empty:
            raise KeyError((year, kind, stratum, band))
        return int(counts.iloc[0])

    def has(self, year, kind, stratum):
        return bool(self._mask(year, kind, stratum).any())

    def counts(self, kind: StratumKind):
        """
        population of one stratum kind as a series indexed by (year, stratum, age_band)
        """
        frame = self.frame
        return frame[frame["stratum_kind"] == kind.value].set_index(["year", "stratum", "age_band"])["count"]

    def bandsFor(self, year, kind: StratumKind, stratum, bands=None):
        """
        population per age band of one (year, stratum); every band has to be present
        """
        bands = bands or DEFAULT_AGE_BANDS
        rows = self.frame[self._mask(year, kind, stratum)]
        present = dict(zip(rows["age_band"], rows["count"]))
        for band in bands:
            if band not in present:
                raise CoverageError("no population for {0} {1} {2} {3}".format(year, kind.value, stratum, band))
        return {band: int(present[band]) for band in bands}

    def total(self, year, kind, stratum):
        return int(self.frame.loc[self._mask(year, kind, stratum), "count"].sum())

    def years(self):
        return sorted(int(y) for y in self.frame["year"].unique())

    def strata(self, kind: StratumKind):
        frame = self.frame
        return sorted(frame.loc[frame["stratum_kind"] == kind.value, "stratum"].unique())

    def series(self):
        result = {}
        for (kind, stratum, band), group in self.frame.groupby(["stratum_kind", "stratum", "age_band"], sort=False):
            result[(StratumKind(kind), stratum, band)] = {int(y): int(c) for y, c in zip(group["year"], group["count"])}
        return result

    def extrapolated(self, years):
        """
        a copy where every (stratum, band) series is completed for `years` by a least-squares line
        """
        table = PopulationTable(self.frame.copy())
        for (kind, stratum, band), series in self.series().items():
            missing = [y for y in years if y not in series]
            if not missing:
                continue
            for year, count in extrapolate_population(series, missing).items():
                table.add(year, kind, stratum, band, count)
            logger.debug("extrapolated %s %s %s to %s", kind.value, stratum, band, missing)
        return table

    def toRows(self):
        frame = self.frame.assign(lower=self.frame["age_band"].map(lambda b: b.lower))
        frame = frame.sort_values(["year", "stratum_kind", "stratum", "lower"])
        return [
            {
                "year": int(r["year"]),
                "stratum_kind": r["stratum_kind"],
                "stratum": r["stratum"],
                "age_band": str(r["age_band"]),
                "count": int(r["count"]),
            }
            for r in frame.to_dict("records")
        ]

    @staticmethod
    def fromFrame(frame: pd.DataFrame):
        """
        parse a frame of text columns as read from a population file
        """
        try:
            parsed = pd.DataFrame(
                {
                    "year": pd.to_numeric(frame["year"]).astype(int),
                    "stratum_kind": frame["stratum_kind"].str.strip().str.lower().map(lambda k: StratumKind(k).value),
                    "stratum": frame["stratum"].fillna("").str.strip().replace("", NATIONAL),
                    "age_band": frame["age_band"].map(AgeBand.parse),
                    "count": pd.to_numeric(frame["count"]).astype(int),
                }
            )
        except (KeyError, ValueError, TypeError, AttributeError) as e:
            raise ParseError("population", "invalid population table ({0})".format(e))
        if (parsed["count"] < 0).any():
            raise RateError("negative population in {0} rows".format(int((parsed["count"] < 0).sum())))
        table = PopulationTable()
        table._pending = parsed.to_dict("records")
        return table

    @staticmethod
    def fromRows(rows):
        return PopulationTable.fromFrame(pd.DataFrame(list(rows)))

    @staticmethod
    def load(path):
        return PopulationTable.fromFrame(read_frame(path))


class StandardPopulation(object):
    defaultFile = os.path.join(os.path.dirname(__file__), "data", "standard_population.csv")

    def __init__(self, weights: dict):
        if any(w < 0 for w in weights.values()):
            raise RateError("standard population weights must be non-negative")
        total = sum(weights.values())
        if total <= 0:
            raise RateError("standard population weights sum to zero")
        self.weights = {band: w / total for band, w in weights.items()}

    def bands(self):
        return sorted(self.weights)

    @staticmethod
    def load(path=None):
        frame = read_frame(path or StandardPopulation.defaultFile)
        try:
            bands = frame["age_band"].map(AgeBand.parse)
            weights = pd.to_numeric(frame["weight"]).astype(float)
        except (KeyError, ValueError) as e:
            raise ParseError(str(path), "invalid standard population ({0})".format(e))
        return StandardPopulation(dict(zip(bands, weights)))


def crude_rate(cases, population):
    if population <= 0:
        raise UndefinedRateError("rate undefined for population {0}".format(population))
    return cases / population * PER_100K


def age_adjusted_rate(ageSpecific: dict, std: StandardPopulation):
    total = 0.0
    for band, weight in std.weights.items():
        if weight == 0:
            continue
        if band not in ageSpecific or ageSpecific[band] is None:
            raise CoverageError("no age-specific rate for band {0}".format(band))
        total += weight * ageSpecific[band]
    return total


def case_fatality_rate(crudeMortality, crudeIncidence):
    if crudeIncidence <= 0:
        raise UndefinedRateError("case fatality undefined for incidence {0}".format(crudeIncidence))
    return crudeMortality / crudeIncidence * 100.0


def _roundHalfUp(value):
    return int(floor(value + 0.5))


def extrapolate_population(series: dict, targetYears):
    """
    ordinary least-squares line through (year, count), evaluated at each target year and rounded to
    whole persons
    """
    if len(series) < 2:
        raise InsufficientDataError("at least two points are needed, got {0}".format(len(series)))
    years = np.array(sorted(series), dtype=float)
    counts = np.array([series[int(y)] for y in years], dtype=float)
    center = years.mean()
    slope, intercept = np.polyfit(years - center, counts, 1)
    result = {}
    for year in targetYears:
        value = _roundHalfUp(slope * (year - center) + intercept)
        if value < 0:
            logger.warning("extrapolated population for %i is negative, clamping to 0", year)
            value = 0
        result[year] = value
    return result


def _fmt(value, digits=1):
    if value is None:
        return ""
    return "{0:.{1}f}".format(value, digits)


class RateRow(object):
    def __init__(self, year, stratum, cases, population, crudeRate=None, adjustedRate=None, ageSpecific=None, flag=""):
        self.year = year
        self.stratum = stratum
        self.cases = cases
        self.population = population
        self.crudeRate = crudeRate
        self.adjustedRate = adjustedRate
        self.ageSpecific = ageSpecific or {}
        self.flag = flag

    def isFlagged(self):
        return bool(self.flag)

    def toRow(self):
        return {
            "year": self.year,
            "stratum": self.stratum,
            "cases": self.cases,
            "population": self.population,
            "crude_rate": _fmt(self.crudeRate),
            "adjusted_rate": _fmt(self.adjustedRate),
            "flag": self.flag,
        }


class RateTable(object):
    fields = ["year", "stratum", "cases", "population", "crude_rate", "adjusted_rate", "flag"]

    def __init__(self, measure, by, rows=None):
        self.measure = measure
        self.by = by
        self.rows = sorted(rows or [], key=lambda r: (r.year, r.stratum))

    def get(self, year, stratum=NATIONAL):
        for row in self.rows:
            if row.year == year and row.stratum == stratum:
                return row
        raise KeyError((year, stratum))

    def years(self):
        return sorted(set(r.year for r in self.rows))

    def strata(self):
        return sorted(set(r.stratum for r in self.rows))

    def toRows(self):
        return [r.toRow() for r in self.rows]


class StratifiedRates(object):
    fields = [
        "year",
        "stratum",
        "incident_cases",
        "incidence_population",
        "crude_incidence",
        "adjusted_incidence",
        "deaths",
        "mortality_population",
        "crude_mortality",
        "adjusted_mortality",
        "case_fatality",
        "flag",
    ]

    def __init__(self, by, incidence: RateTable, mortality: RateTable, missingInsurerPercent: dict = None):
        self.by = by
        self.incidence = incidence
        self.mortality = mortality
        # per year; only filled when stratifying by insurer
        self.missingInsurerPercent = missingInsurerPercent or {}

    def caseFatality(self, year, stratum=NATIONAL):
        incidence = self.incidence.get(year, stratum)
        mortality = self.mortality.get(year, stratum)
        if incidence.crudeRate is None or mortality.crudeRate is None or incidence.crudeRate == 0:
            return None
        return case_fatality_rate(mortality.crudeRate, incidence.crudeRate)

    def getFields(self):
        if self.by == "insurer":
            return StratifiedRates.fields + ["missing_insurer_pct"]
        return StratifiedRates.fields

    def toRows(self):
        rows = []
        for incidence in self.incidence.rows:
            mortality = self.mortality.get(incidence.year, incidence.stratum)
            row = {
                "year": incidence.year,
                "stratum": incidence.stratum,
                "incident_cases": incidence.cases,
                "incidence_population": incidence.population,
                "crude_incidence": _fmt(incidence.crudeRate),
                "adjusted_incidence": _fmt(incidence.adjustedRate),
                "deaths": mortality.cases,
                "mortality_population": mortality.population,
                "crude_mortality": _fmt(mortality.crudeRate),
                "adjusted_mortality": _fmt(mortality.adjustedRate),
                "case_fatality": _fmt(self.caseFatality(incidence.year, incidence.stratum)),
                "flag": ";".join(f for f in sorted(set([incidence.flag, mortality.flag])) if f),
            }
            if self.by == "insurer":
                row["missing_insurer_pct"] = _fmt(self.missingInsurerPercent.get(incidence.year))
            rows.append(row)
        return rows


class Stratifier(object):
    """
    maps timelines and deaths onto (stratum label, population kind) for one `by` choice
    """

    kinds = {
        "year": StratumKind.NATIONAL,
        "age_band": StratumKind.NATIONAL,
        "region": StratumKind.REGION,
        "insurer": StratumKind.INSURER,
    }

    def __init__(self, by, insurers: dict = None, bands=None):
        if by not in Stratifier.kinds:
            raise RateError("cannot stratify by {0}".format(by))
        self.by = by
        self.kind = Stratifier.kinds[by]
        self.insurers = insurers or {}
        self.bands = bands or DEFAULT_AGE_BANDS

    def ofTimeline(self, timeline: PatientTimeline):
        if self.by == "region":
            return timeline.region.value
        if self.by == "insurer":
            return timeline.insurer.kind.value if timeline.insurer.isKnown() else None
        return NATIONAL

    def ofDeath(self, death: DeathRecord):
        if self.by == "region":
            return death.region.value
        if self.by == "insurer":
            insurer = self.insurers.get(death.id)
            return insurer.kind.value if insurer is not None and insurer.isKnown() else None
        return NATIONAL


def _tally(items, yearOf, stratumOf, ageOf, bands):
    """
    case counts as a series indexed by (year, stratum, age_band), then per year the items without a stratum
    and all items
    """
    frame = pd.DataFrame(
        [(yearOf(item), stratumOf(item), ageOf(item)) for item in items], columns=["year", "stratum", "age"]
    )
    empty = pd.Series([], index=pd.MultiIndex.from_tuples([], names=["year", "stratum", "age_band"]), dtype=int)
    if frame.empty:
        return empty, pd.Series([], dtype=int), pd.Series([], dtype=int)
    frame["age_band"] = frame["age"].map(lambda age: age_band_of(age, bands))
    unmatched = frame["stratum"].isna()
    matched = frame[~unmatched]
    counts = matched.groupby(["year", "stratum", "age_band"], sort=False).size() if not matched.empty else empty
    return counts, frame[unmatched].groupby("year").size(), frame.groupby("year").size()


def _caseGrid(counts, pop: PopulationTable, stratifier: Stratifier, years, strata):
    """
    cases and population for every (year, stratum, band) combination that is reported
    """
    index = pd.MultiIndex.from_product([years, strata, stratifier.bands], names=["year", "stratum", "age_band"])
    population = pop.counts(stratifier.kind).reindex(index)
    if population.isna().any():
        year, stratum, band = population[population.isna()].index[0]
        raise CoverageError("no population for {0} {1} {2} {3}".format(year, stratifier.kind.value, stratum, band))
    return pd.DataFrame({"cases": counts.reindex(index, fill_value=0).astype(int), "population": population.astype(int)})


def _rateTable(measure, counts, pop: PopulationTable, std: StandardPopulation, stratifier: Stratifier, years, strata, adjust):
    grid = _caseGrid(counts, pop, stratifier, years, strata)
    grid["rate"] = (grid["cases"] / grid["population"].where(grid["population"] > 0) * PER_100K).astype(float)
    rows = []
    if stratifier.by == "age_band":
        for (year, _, band), cell in grid.iterrows():
            if cell["population"] == 0:
                rows.append(RateRow(int(year), str(band), int(cell["cases"]), 0, flag="zero_population"))
            else:
                rows.append(RateRow(int(year), str(band), int(cell["cases"]), int(cell["population"]), float(cell["rate"])))
        return RateTable(measure, stratifier.by, rows)
    for (year, stratum), group in grid.groupby(level=["year", "stratum"], sort=False):
        year = int(year)
        cases = int(group["cases"].sum())
        population = int(group["population"].sum())
        if population == 0:
            logger.warning("%s %s %i: zero population", measure, stratum, year)
            rows.append(RateRow(year, stratum, cases, 0, flag="zero_population"))
            continue
        ageSpecific = {
            band: None if pd.isna(rate) else float(rate) for band, rate in zip(group.index.get_level_values("age_band"), group["rate"])
        }
        row = RateRow(year, stratum, cases, population, crude_rate(cases, population), ageSpecific=ageSpecific)
        if adjust:
            try:
                row.adjustedRate = age_adjusted_rate(ageSpecific, std)
            except CoverageError:
                row.flag = "zero_band_population"
        rows.append(row)
    return RateTable(measure, stratifier.by, rows)


def stratified_rates(
    cohort,
    deaths,
    pop: PopulationTable,
    std: StandardPopulation,
    by="year",
    adjust=True,
    years=None,
    insurers: dict = None,
):
    """
    Incidence counts every timeline (imputed ones included) by diagnosis year, mortality counts the study
    deaths by death year. Deaths are assigned an insurer through `insurers` (id -> Insurer); those without
    one are left out of insurer rows and reported as a percentage per year.
    """
    stratifier = Stratifier(by, insurers)
    years = sorted(years) if years is not None else pop.years()
    strata = [NATIONAL] if stratifier.kind is StratumKind.NATIONAL else pop.strata(stratifier.kind)
    if not strata:
        raise CoverageError("population table has no {0} strata".format(stratifier.kind.value))

    incidenceCounts, incidenceUnmatched, _ = _tally(
        cohort, lambda t: t.diagnosisYear, stratifier.ofTimeline, lambda t: t.ageAtDiagnosis, stratifier.bands
    )
    mortalityCounts, mortalityUnmatched, mortalityTotals = _tally(
        deaths, lambda d: d.deathDate.year, stratifier.ofDeath, lambda d: d.ageAtDeath(), stratifier.bands
    )
    for label, counts in [("incidence", incidenceCounts), ("mortality", mortalityCounts)]:
        dropped = sum(int(c) for (y, s, b), c in counts.items() if y in years and s not in strata)
        if dropped:
            logger.info("%i %s cases fall into strata without population", dropped, label)

    incidence = _rateTable("incidence", incidenceCounts, pop, std, stratifier, years, strata, adjust)
    mortality = _rateTable("mortality", mortalityCounts, pop, std, stratifier, years, strata, adjust)

    missing = {}
    if by == "insurer":
        totals = mortalityTotals.reindex(years).dropna()
        percent = mortalityUnmatched.reindex(totals.index, fill_value=0) / totals * 100.0
        missing = {int(year): float(value) for year, value in percent.items()}
        if not incidenceUnmatched.empty:
            logger.info(
                "incident cases without insurer per year: %s", {int(y): int(c) for y, c in incidenceUnmatched.sort_index().items()}
            )
    return StratifiedRates(by, incidence, mortality, missing)


def incidence_counts_by_year(cohort, years=None):
    counts = {int(y): int(c) for y, c in pd.Series([t.diagnosisYear for t in cohort], dtype=int).value_counts().items()}
    if years is not None:
        return {y: counts.get(y, 0) for y in years}
    return counts


def missing_id_rows(cohort, missingByYear: dict, scenario: MissingIdScenario, ratio, pop: PopulationTable, years):
    """
    per-year incidence with discharges lacking an id added back under one scenario
    """
    base = incidence_counts_by_year(cohort, years)
    adjusted = missing_id_sensitivity({y: missingByYear.get(y, 0) for y in years}, base, scenario, ratio)
    rows = []
    for year in years:
        population = pop.total(year, StratumKind.NATIONAL, NATIONAL)
        rows.append(
            {
                "year": year,
                "base_cases": base[year],
                "missing_id_discharges": missingByYear.get(year, 0),
                "added_cases": adjusted[year] - base[year],
                "adjusted_cases": adjusted[year],
                "population": population,
                "crude_incidence": _fmt(crude_rate(adjusted[year], population)) if population > 0 else "",
            }
        )
    return rows


def _ageSummary(pairs, years):
    """
    count, mean and sample standard deviation of age per year, followed by a "total" row
    """
    frame = pd.DataFrame(pairs, columns=["year", "age"]).astype({"year": int, "age": float})
    summary = frame.groupby("year")["age"].agg(["count", "mean", "std"]).reindex(years)
    summary.loc["total"] = [len(frame), frame["age"].mean(), frame["age"].std()]
    summary["count"] = summary["count"].fillna(0).astype(int)
    return summary


def _fmtMissing(value, digits=1):
    return _fmt(None if pd.isna(value) else float(value), digits)


class YearlyDescription(object):
    fields = [
        "year",
        "deaths",
        "death_mean_age",
        "death_age_sd",
        "without_discharge",
        "without_discharge_pct",
        "without_discharge_mean_age",
        "without_discharge_age_sd",
        "new_cases",
        "diagnosis_mean_age",
        "diagnosis_age_sd",
    ]

    def __init__(self, deaths: pd.DataFrame, orphans: pd.DataFrame, cases: pd.DataFrame):
        self.deaths = deaths
        self.orphans = orphans
        self.cases = cases

    def orphanPercent(self, year):
        deaths = self.deaths.loc[year, "count"]
        if deaths == 0:
            return None
        return self.orphans.loc[year, "count"] / deaths * 100.0

    def toRows(self):
        rows = []
        for year in self.deaths.index:
            rows.append(
                {
                    "year": year,
                    "deaths": int(self.deaths.loc[year, "count"]),
                    "death_mean_age": _fmtMissing(self.deaths.loc[year, "mean"]),
                    "death_age_sd": _fmtMissing(self.deaths.loc[year, "std"]),
                    "without_discharge": int(self.orphans.loc[year, "count"]),
                    "without_discharge_pct": _fmt(self.orphanPercent(year)),
                    "without_discharge_mean_age": _fmtMissing(self.orphans.loc[year, "mean"]),
                    "without_discharge_age_sd": _fmtMissing(self.orphans.loc[year, "std"]),
                    "new_cases": int(self.cases.loc[year, "count"]),
                    "diagnosis_mean_age": _fmtMissing(self.cases.loc[year, "mean"]),
                    "diagnosis_age_sd": _fmtMissing(self.cases.loc[year, "std"]),
                }
            )
        return rows


def descriptive_by_year(cohort, studyDeaths, orphans, years=None):
    """
    Deaths, deaths without any breast cancer discharge and new cases per year with their age at death or
    diagnosis. New cases are the timelines found through discharges; imputed ones are left out.
    """
    deathPairs = [(d.deathDate.year, d.ageAtDeath()) for d in studyDeaths]
    orphanPairs = [(d.deathDate.year, d.ageAtDeath()) for d in orphans]
    casePairs = [(t.diagnosisYear, t.ageAtDiagnosis) for t in cohort if not t.imputed]
    if years is None:
        years = sorted(set(y for y, _ in deathPairs + casePairs))
    years = list(years)
    return YearlyDescription(_ageSummary(deathPairs, years), _ageSummary(orphanPairs, years), _ageSummary(casePairs, years))
