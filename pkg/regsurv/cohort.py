"""
Reconstruction of the incident cohort from the death and discharge registries.

The pipeline links both registries by person id, keeps patients whose first breast cancer discharge
falls inside the study window (with a clean washout period before it), resolves conflicting sex
entries, and closes every timeline with a breast cancer death, a death by other causes or the end of
the study. Breast cancer deaths without any discharge get an imputed diagnosis month.
"""

from regsurv.registry import (
    DeathRecord,
    DischargeRecord,
    PersonId,
    MonthIndex,
    Sex,
    Region,
    Insurer,
    InsurerKind,
    RegistryError,
    OrderingError,
    age_at,
    month_between,
)
from regsurv.rules import CodeRuleSet
from regsurv.config.error import ConfigError
from collections import Counter
from datetime import date
from enum import Enum
from math import floor
import numpy as np

import logging

logger = logging.getLogger(__name__)


class MissingIdScenario(Enum):
    DROP = "drop"
    WORST_CASE = "worst_case"
    LIKELY = "likely"


class EndKind(Enum):
    DEATH_BC = "death_bc"
    CENSORED = "censored"


class CohortConfig(object):
    def __init__(
        self,
        windowStartYear=2007,
        windowEndYear=2018,
        washoutStartYear=2001,
        imputationSeed=20070101,
        missingIdScenario=MissingIdScenario.DROP,
        dischargeRatio=None,
    ):
        if not washoutStartYear < windowStartYear <= windowEndYear:
            raise ConfigError(
                "window_start_year", "expected washout_start_year < window_start_year <= window_end_year"
            )
        if not isinstance(imputationSeed, int) or not 0 <= imputationSeed < 2 ** 64:
            raise ConfigError("seed", "imputation seed must be a 64-bit unsigned integer")
        if dischargeRatio is not None and dischargeRatio <= 0:
            raise ConfigError("discharge_ratio", "must be positive")
        self.windowStartYear = windowStartYear
        self.windowEndYear = windowEndYear
        self.washoutStartYear = washoutStartYear
        self.imputationSeed = imputationSeed
        self.missingIdScenario = missingIdScenario
        # None is AUTO: discharges per patient as observed in the built cohort
        self.dischargeRatio = dischargeRatio

    def getWindowStart(self):
        return MonthIndex.fromYearMonth(self.windowStartYear, 1)

    def getWindowEnd(self):
        return MonthIndex.fromYearMonth(self.windowEndYear, 12)

    def inWindow(self, month: MonthIndex):
        return self.getWindowStart() <= month <= self.getWindowEnd()

    def inWindowYear(self, year):
        return self.windowStartYear <= year <= self.windowEndYear

    def getYears(self):
        return list(range(self.windowStartYear, self.windowEndYear + 1))


class PatientTimeline(object):
    fields = [
        "id",
        "sex",
        "diagnosis_month",
        "end_month",
        "end_kind",
        "imputed",
        "inconsistent",
        "insurer",
        "region",
        "age_at_diagnosis",
        "discharge_count",
    ]

    def __init__(
        self,
        id: PersonId,
        diagnosisMonth: MonthIndex,
        endMonth: MonthIndex,
        endKind: EndKind,
        insurer: Insurer,
        region: Region,
        ageAtDiagnosis: int,
        dischargeCount: int = 0,
        imputed: bool = False,
        inconsistent: bool = False,
        sex: Sex = Sex.FEMALE,
    ):
        # inconsistent timelines (discharges after death) may end before they start
        if not inconsistent and endMonth < diagnosisMonth:
            raise OrderingError(diagnosisMonth, endMonth)
        if imputed:
            if endKind is not EndKind.DEATH_BC or not 1 <= endMonth - diagnosisMonth <= 12:
                raise RegistryError("imputed timeline {0} must end in a death 1 to 12 months after diagnosis".format(id))
        if dischargeCount < 0:
            raise RegistryError("negative discharge count for {0}".format(id))
        self.id = id
        self.sex = sex
        self.diagnosisMonth = diagnosisMonth
        self.endMonth = endMonth
        self.endKind = endKind
        self.imputed = imputed
        self.inconsistent = inconsistent
        self.insurer = insurer
        self.region = region
        self.ageAtDiagnosis = ageAtDiagnosis
        self.dischargeCount = dischargeCount

    def getSurvivalTime(self):
        return self.endMonth - self.diagnosisMonth

    def isDeath(self):
        return self.endKind is EndKind.DEATH_BC

    def isSurvivalSubject(self):
        return not self.imputed and not self.inconsistent

    @property
    def diagnosisYear(self):
        return self.diagnosisMonth.year

    def toRow(self):
        return {
            "id": str(self.id),
            "sex": self.sex.value,
            "diagnosis_month": str(self.diagnosisMonth),
            "end_month": str(self.endMonth),
            "end_kind": self.endKind.value,
            "imputed": int(self.imputed),
            "inconsistent": int(self.inconsistent),
            "insurer": str(self.insurer),
            "region": self.region.value,
            "age_at_diagnosis": self.ageAtDiagnosis,
            "discharge_count": self.dischargeCount,
        }

    @staticmethod
    def fromRow(row: dict):
        try:
            return PatientTimeline(
                PersonId(row["id"]),
                MonthIndex.parse(row["diagnosis_month"]),
                MonthIndex.parse(row["end_month"]),
                EndKind(row["end_kind"]),
                Insurer.parse(row["insurer"]),
                Region.parse(row["region"]),
                int(row["age_at_diagnosis"]),
                dischargeCount=int(row["discharge_count"]),
                imputed=str(row["imputed"]) == "1",
                inconsistent=str(row["inconsistent"]) == "1",
                sex=Sex.parse(row["sex"]),
            )
        except (KeyError, ValueError) as e:
            raise RegistryError("invalid cohort row {0}: {1}".format(row, e))

    def __eq__(self, other):
        return isinstance(other, PatientTimeline) and self.toRow() == other.toRow()

    def __hash__(self):
        return hash(str(self.id))

    def __repr__(self):
        return "PatientTimeline({0})".format(self.toRow())


class FlowStep(object):
    def __init__(self, flow, name, inCount, outCount, removed, added=0):
        self.flow = flow
        self.name = name
        self.inCount = inCount
        self.outCount = outCount
        self.removed = removed
        self.added = added

    def isBalanced(self):
        return self.inCount + self.added == self.outCount + self.removed

    def toJson(self):
        return {
            "flow": self.flow,
            "step": self.name,
            "in": self.inCount,
            "added": self.added,
            "removed": self.removed,
            "out": self.outCount,
        }


class CohortAccounting(object):
    """
    Counts for every inclusion and exclusion box of the death, discharge and imputation flows.
    """

    counterNames = [
        "total_death_rows",
        "rejected_death_rows",
        "bc_deaths",
        "deaths_outside_window_removed",
        "deaths_missing_id_removed",
        "duplicate_deaths_removed",
        "non_female_deaths_removed",
        "study_deaths",
        "total_discharge_rows",
        "rejected_discharge_rows",
        "bc_primary_discharges",
        "related_added_discharges",
        "related_added_patients",
        "washout_excluded_patients",
        "in_window_records",
        "missing_id_discharges_removed",
        "gender_corrected",
        "gender_inconclusive_removed",
        "male_patients_removed",
        "final_records",
        "final_patients",
        "multi_insurer_patients",
        "matched_deaths",
        "other_cause_censored",
        "inconsistent_patients",
        "deaths_without_discharge",
        "imputed_included",
    ]

    def __init__(self):
        self.counters = {name: 0 for name in CohortAccounting.counterNames}
        self.steps = []
        self.missingIdByYear = {}
        self.dischargesPerPatient = None

    def __getitem__(self, item):
        return self.counters[item]

    def __setitem__(self, key, value):
        if key not in self.counters:
            raise KeyError(key)
        self.counters[key] = value

    def addStep(self, flow, name, inCount, outCount, removed, added=0):
        step = FlowStep(flow, name, inCount, outCount, removed, added)
        if not step.isBalanced():
            logger.error("unbalanced accounting step %s/%s: %s", flow, name, step.toJson())
        logger.info("%s / %s: %i in, %i added, %i removed, %i out", flow, name, inCount, added, removed, outCount)
        self.steps.append(step)
        return step

    def getSteps(self, flow):
        return [s for s in self.steps if s.flow == flow]

    def isBalanced(self):
        if not all(s.isBalanced() for s in self.steps):
            return False
        # consecutive steps of one flow must chain
        for flow in set(s.flow for s in self.steps):
            steps = self.getSteps(flow)
            if any(a.outCount != b.inCount for a, b in zip(steps, steps[1:])):
                return False
        return True

    def toJson(self):
        return {
            "counters": dict(self.counters),
            "steps": [s.toJson() for s in self.steps],
            "missing_id_by_year": {str(y): c for y, c in sorted(self.missingIdByYear.items())},
            "discharges_per_patient": self.dischargesPerPatient,
        }

    @staticmethod
    def fromJson(d: dict):
        accounting = CohortAccounting()
        for k, v in d.get("counters", {}).items():
            accounting[k] = v
        for s in d.get("steps", []):
            accounting.steps.append(FlowStep(s["flow"], s["step"], s["in"], s["out"], s["removed"], s["added"]))
        accounting.missingIdByYear = {int(y): c for y, c in d.get("missing_id_by_year", {}).items()}
        accounting.dischargesPerPatient = d.get("discharges_per_patient")
        return accounting


def reconcile_gender(recordsForId, death: DeathRecord = None):
    """
    Sex of one patient: the death record wins when it states a sex, otherwise the mode of the discharge
    records. A tied mode without a death record returns None (the patient is dropped).
    """
    if death is not None and death.sex is not Sex.UNKNOWN:
        return death.sex
    counts = Counter(r.sex for r in recordsForId if r.sex is not Sex.UNKNOWN)
    if counts[Sex.FEMALE] > counts[Sex.MALE]:
        return Sex.FEMALE
    if counts[Sex.MALE] > counts[Sex.FEMALE]:
        return Sex.MALE
    return None


def _dateInMonth(month: MonthIndex, day: int):
    return date(month.year, month.month, min(day, 28))


def impute_deaths_without_discharge(orphanDeaths, cfg: CohortConfig, insurers: dict = None):
    """
    Diagnosis month = death month - k with k uniform on 1..12, drawn in id order from a generator seeded
    with the imputation seed. Timelines whose diagnosis falls outside the window are discarded.
    """
    insurers = insurers or {}
    orphans = sorted(orphanDeaths, key=lambda d: str(d.id))
    rng = np.random.default_rng(cfg.imputationSeed)
    draws = rng.integers(1, 13, size=len(orphans))
    timelines = []
    for death, k in zip(orphans, draws):
        deathMonth = death.getDeathMonth()
        diagnosisMonth = deathMonth - int(k)
        if not cfg.inWindow(diagnosisMonth):
            continue
        diagnosisDate = _dateInMonth(diagnosisMonth, death.deathDate.day)
        age = age_at(death.birthDate, diagnosisDate) if diagnosisDate >= death.birthDate else 0
        timelines.append(
            PatientTimeline(
                death.id,
                diagnosisMonth,
                deathMonth,
                EndKind.DEATH_BC,
                insurers.get(death.id, Insurer(InsurerKind.UNKNOWN)),
                death.region,
                age,
                dischargeCount=0,
                imputed=True,
            )
        )
    return timelines


def missing_id_sensitivity(missingCountsByYear: dict, baseIncidenceCounts: dict, scenario: MissingIdScenario, ratio=None):
    """
    incidence counts per year with discharges lacking an id added back: all of them in the worst case,
    one new patient per `ratio` discharges in the likely case
    """
    if scenario is MissingIdScenario.LIKELY:
        if ratio is None or ratio <= 0:
            raise ConfigError("discharge_ratio", "the likely scenario needs a positive discharges-per-patient ratio")
        if ratio <= 1:
            logger.warning("discharges-per-patient ratio %s <= 1 adds more patients than missing discharges", ratio)
    years = sorted(set(missingCountsByYear) | set(baseIncidenceCounts))
    adjusted = {}
    for year in years:
        base = baseIncidenceCounts.get(year, 0)
        missing = missingCountsByYear.get(year, 0)
        if scenario is MissingIdScenario.WORST_CASE:
            adjusted[year] = base + missing
        elif scenario is MissingIdScenario.LIKELY:
            adjusted[year] = base + int(floor(missing / ratio + 0.5))
        else:
            adjusted[year] = base
    return adjusted


def build_insurer_index(discharges):
    """
    insurer per person id, taken from its earliest discharge with a known insurer (any diagnosis)
    """
    index = {}
    dates = {}
    for record in discharges:
        if record.id.isAbsent() or not record.insurer.isKnown():
            continue
        if record.id not in dates or record.dischargeDate < dates[record.id]:
            dates[record.id] = record.dischargeDate
            index[record.id] = record.insurer
    return index


class CohortBuilder(object):
    def __init__(self, rules: CodeRuleSet, cfg: CohortConfig):
        self.rules = rules
        self.cfg = cfg
        self._classifications = {}

    def _classify(self, code):
        if code not in self._classifications:
            self._classifications[code] = self.rules.classify(code)
        return self._classifications[code]

    def selectDeaths(self, deaths, accounting: CohortAccounting):
        """
        returns the breast cancer deaths used for linkage (any sex), the study deaths (female) and the
        deaths from other causes, the latter two keyed by id
        """
        accounting["total_death_rows"] = len(deaths)
        bc = [d for d in deaths if self._classify(d.causeCode).isPrimary()]
        other = [d for d in deaths if not self._classify(d.causeCode).isPrimary()]
        accounting["bc_deaths"] = len(bc)
        accounting.addStep("deaths", "breast_cancer_cause", len(deaths), len(bc), len(other))

        inWindow = [d for d in bc if self.cfg.inWindowYear(d.deathDate.year)]
        accounting["deaths_outside_window_removed"] = len(bc) - len(inWindow)
        accounting.addStep("deaths", "window", len(bc), len(inWindow), len(bc) - len(inWindow))

        withId = [d for d in inWindow if not d.id.isAbsent()]
        missing = sum(1 for d in inWindow if d.id.isAbsent())
        accounting["deaths_missing_id_removed"] = missing
        accounting.addStep("deaths", "missing_id", len(inWindow), len(withId), missing)

        linked = {}
        duplicates = 0
        for d in sorted(withId, key=lambda d: (str(d.id), d.deathDate)):
            if d.id in linked:
                duplicates += 1
                continue
            linked[d.id] = d
        accounting["duplicate_deaths_removed"] = duplicates
        accounting.addStep("deaths", "duplicates", len(withId), len(linked), duplicates)

        study = {i: d for i, d in linked.items() if d.sex is Sex.FEMALE}
        nonFemale = sum(1 for d in linked.values() if d.sex is not Sex.FEMALE)
        accounting["non_female_deaths_removed"] = nonFemale
        accounting["study_deaths"] = len(study)
        accounting.addStep("deaths", "female", len(linked), len(study), nonFemale)

        otherDeaths = {}
        for d in sorted(other, key=lambda d: (str(d.id), d.deathDate)):
            if d.id.isAbsent() or not self.cfg.inWindowYear(d.deathDate.year):
                continue
            if d.id in linked or d.id in otherDeaths:
                continue
            otherDeaths[d.id] = d
        return linked, study, otherDeaths

    def _expandRelated(self, bcPrimary, discharges, linked):
        """
        related-diagnosis discharges of breast cancer decedents without any primary breast cancer discharge
        """
        withPrimary = set(r.id for r in bcPrimary if not r.id.isAbsent())
        candidates = set(i for i in linked if i not in withPrimary)
        added = []
        for record in discharges:
            if record.id.isAbsent() or record.id not in candidates:
                continue
            classification = self._classify(record.primaryDx)
            if not classification.isRelated():
                continue
            death = linked[record.id]
            if record.dischargeDate > death.deathDate:
                admitted = classification.period is None
            else:
                admitted = classification.admitsGap(month_between(record.dischargeDate, death.deathDate))
            if admitted:
                added.append(record)
        return added

    def orphanDeaths(self, deaths, discharges):
        """
        study deaths of women without any breast cancer discharge, related diagnoses included
        """
        linked, study, _ = self.selectDeaths(deaths, CohortAccounting())
        bcPrimary = [r for r in discharges if self._classify(r.primaryDx).isPrimary()]
        bcRecords = bcPrimary + self._expandRelated(bcPrimary, discharges, linked)
        everDischarged = set(r.id for r in bcRecords if not r.id.isAbsent())
        return [study[k] for k in sorted(study, key=str) if k not in everDischarged]

    def build(self, deaths, discharges, rejectedDeaths=0, rejectedDischarges=0):
        cfg = self.cfg
        accounting = CohortAccounting()
        accounting["rejected_death_rows"] = rejectedDeaths
        accounting["rejected_discharge_rows"] = rejectedDischarges

        linked, study, otherDeaths = self.selectDeaths(deaths, accounting)

        # discharge flow
        accounting["total_discharge_rows"] = len(discharges)
        bcPrimary = [r for r in discharges if self._classify(r.primaryDx).isPrimary()]
        accounting["bc_primary_discharges"] = len(bcPrimary)
        accounting.addStep(
            "discharges", "breast_cancer_primary", len(discharges), len(bcPrimary), len(discharges) - len(bcPrimary)
        )

        related = self._expandRelated(bcPrimary, discharges, linked)
        accounting["related_added_discharges"] = len(related)
        accounting["related_added_patients"] = len(set(r.id for r in related))
        bcRecords = bcPrimary + related
        accounting.addStep("discharges", "related_diagnoses", len(bcPrimary), len(bcRecords), 0, added=len(related))
        everDischarged = set(r.id for r in bcRecords if not r.id.isAbsent())

        # cohort window and washout
        byId = {}
        windowRecords = []
        removed = 0
        for record in bcRecords:
            if record.id.isAbsent():
                if cfg.inWindowYear(record.dischargeDate.year):
                    windowRecords.append(record)
                else:
                    removed += 1
            elif record.dischargeDate.year < cfg.washoutStartYear:
                # before registry coverage
                removed += 1
            else:
                byId.setdefault(record.id, []).append(record)
        washoutExcluded = 0
        for pid, records in byId.items():
            records.sort(key=lambda r: (r.dischargeDate, r.admissionDate))
            first = records[0]
            if not cfg.inWindowYear(first.dischargeDate.year):
                if first.dischargeDate.year < cfg.windowStartYear:
                    washoutExcluded += 1
                removed += len(records)
                continue
            for record in records:
                if record.dischargeDate.year <= cfg.windowEndYear:
                    windowRecords.append(record)
                else:
                    removed += 1
        accounting["washout_excluded_patients"] = washoutExcluded
        accounting["in_window_records"] = len(windowRecords)
        accounting.addStep("discharges", "cohort_window", len(bcRecords), len(windowRecords), removed)

        # records without an id cannot be linked to any patient
        identified = []
        missingByYear = {}
        for record in windowRecords:
            if record.id.isAbsent():
                year = record.dischargeDate.year
                missingByYear[year] = missingByYear.get(year, 0) + 1
            else:
                identified.append(record)
        accounting.missingIdByYear = missingByYear
        accounting["missing_id_discharges_removed"] = len(windowRecords) - len(identified)
        accounting.addStep("discharges", "missing_id", len(windowRecords), len(identified), len(windowRecords) - len(identified))

        # sex reconciliation
        patients = {}
        for record in identified:
            patients.setdefault(record.id, []).append(record)
        female = {}
        removed = 0
        for pid in sorted(patients, key=str):
            records = patients[pid]
            sex = reconcile_gender(records, linked.get(pid))
            if sex is None:
                accounting["gender_inconclusive_removed"] += 1
                removed += len(records)
                continue
            if any(r.sex is not Sex.UNKNOWN and r.sex is not sex for r in records):
                accounting["gender_corrected"] += 1
            if sex is not Sex.FEMALE:
                accounting["male_patients_removed"] += 1
                removed += len(records)
                continue
            female[pid] = sorted(records, key=lambda r: (r.dischargeDate, r.admissionDate))
        finalRecords = sum(len(r) for r in female.values())
        accounting["final_records"] = finalRecords
        accounting["final_patients"] = len(female)
        accounting.addStep("discharges", "sex", len(identified), finalRecords, removed)

        timelines = [self._timeline(pid, records, linked, otherDeaths, accounting) for pid, records in female.items()]
        if female:
            accounting.dischargesPerPatient = finalRecords / len(female)

        # breast cancer deaths that never had a breast cancer discharge
        orphans = [d for pid, d in study.items() if pid not in everDischarged]
        accounting["deaths_without_discharge"] = len(orphans)
        imputed = impute_deaths_without_discharge(orphans, cfg, build_insurer_index(discharges))
        accounting["imputed_included"] = len(imputed)
        accounting.addStep("imputation", "window", len(orphans), len(imputed), len(orphans) - len(imputed))

        timelines = sorted(timelines + imputed, key=lambda t: str(t.id))
        logger.info(
            "cohort built: %i patients from discharges, %i imputed, %i inconsistent",
            len(female),
            len(imputed),
            accounting["inconsistent_patients"],
        )
        return timelines, accounting

    def _timeline(self, pid, records, linked, otherDeaths, accounting):
        first = records[0]
        diagnosisMonth = first.getDischargeMonth()
        if len(set(r.insurer for r in records if r.insurer.isKnown())) > 1:
            accounting["multi_insurer_patients"] += 1
        inconsistent = False
        if pid in linked:
            death = linked[pid]
            accounting["matched_deaths"] += 1
            endMonth = death.getDeathMonth()
            endKind = EndKind.DEATH_BC
            inconsistent = any(r.dischargeDate > death.deathDate for r in records)
        elif pid in otherDeaths:
            death = otherDeaths[pid]
            accounting["other_cause_censored"] += 1
            endMonth = death.getDeathMonth()
            endKind = EndKind.CENSORED
            inconsistent = any(r.dischargeDate > death.deathDate for r in records)
        else:
            endMonth = self.cfg.getWindowEnd()
            endKind = EndKind.CENSORED
        if inconsistent:
            accounting["inconsistent_patients"] += 1
            logger.debug("patient %s has discharges after the death date", pid)
        return PatientTimeline(
            pid,
            diagnosisMonth,
            endMonth,
            endKind,
            first.insurer,
            first.region,
            age_at(first.birthDate, first.dischargeDate),
            dischargeCount=len(records),
            inconsistent=inconsistent,
        )


def build_cohort(deaths, discharges, rules: CodeRuleSet, cfg: CohortConfig):
    return CohortBuilder(rules, cfg).build(deaths, discharges)


def select_study_deaths(deaths, rules: CodeRuleSet, cfg: CohortConfig):
    """
    the mortality set: female breast cancer deaths within the window that carry an id, one per person
    """
    _, study, _ = CohortBuilder(rules, cfg).selectDeaths(deaths, CohortAccounting())
    return [study[k] for k in sorted(study, key=str)]


def select_orphan_deaths(deaths, discharges, rules: CodeRuleSet, cfg: CohortConfig):
    return CohortBuilder(rules, cfg).orphanDeaths(deaths, discharges)
