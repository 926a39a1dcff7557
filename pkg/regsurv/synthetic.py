"""
Seeded generator of synthetic death and discharge registries with known ground truth.

Besides regular patients the registries carry every data problem the cohort pipeline deals with:
discharges without id, contradicting sex entries, breast cancer deaths without any discharge, patients
first seen in the washout years, discharges after death, decedents seen only under related diagnoses,
male patients and unrelated admissions. Each is added in a fixed number, rate times patient count.
"""

from regsurv.registry import (
    DeathRecord,
    DischargeRecord,
    PersonId,
    MissingId,
    MonthIndex,
    Sex,
    Region,
    Insurer,
    ParseError,
)
from regsurv.cohort import PatientTimeline, EndKind
from regsurv.cox import CovariateSpec, CoxError, EncodingError
from regsurv.rates import PopulationTable, StandardPopulation, StratumKind, NATIONAL
from regsurv.config.error import ConfigError
from regsurv.property.validators import ProbabilityValidator
from regsurv import storage
from datetime import date, timedelta
from math import floor, inf
import numpy as np
import os

import logging

logger = logging.getLogger(__name__)


BC_CAUSE = "C509"
OTHER_CAUSE = "I219"
RELATED_CODE = "Z511"
UNRELATED_CODE = "J189"


class SyntheticSpecError(ConfigError):
    pass


def _defaultRegions():
    major = {Region.RM: 0.4, Region.V: 0.11, Region.VIII: 0.09}
    rest = [r for r in Region if r not in major]
    share = (1.0 - sum(major.values())) / len(rest)
    return {r.value: major.get(r, share) for r in Region}


class SyntheticSpec(object):
    noiseKeys = [
        "missing_id_rate",
        "gender_noise_rate",
        "orphan_death_rate",
        "washout_rate",
        "inconsistent_rate",
        "related_only_rate",
        "male_patient_rate",
        "unrelated_rate",
    ]

    defaults = {
        "n_patients": 2000,
        "window_start_year": 2007,
        "window_end_year": 2018,
        "washout_start_year": 2001,
        "insurer_proportions": {
            "FONASA_A": 0.2,
            "FONASA_B": 0.3,
            "FONASA_C": 0.15,
            "FONASA_D": 0.15,
            "ISAPRE": 0.17,
            "ARMED_FORCES": 0.03,
        },
        "region_proportions": None,
        "age_mean": 58.0,
        "age_sd": 13.0,
        "baseline_hazard": 0.003,
        "effects": {"insurer_isapre": -0.5, "segment_a": 0.25, "age": 1.5},
        "censoring_rate": 0.001,
        "follow_up_discharges": 0.7,
        "population_size": 8000000,
        "missing_id_rate": 0.02,
        "gender_noise_rate": 0.02,
        "orphan_death_rate": 0.05,
        "washout_rate": 0.03,
        "inconsistent_rate": 0.005,
        "related_only_rate": 0.02,
        "male_patient_rate": 0.01,
        "unrelated_rate": 0.2,
    }

    def __init__(self, **kwargs):
        unknown = [k for k in kwargs if k not in SyntheticSpec.defaults]
        if unknown:
            raise SyntheticSpecError(unknown[0], "unknown synthetic registry setting")
        values = dict(SyntheticSpec.defaults)
        values.update(kwargs)
        if values["region_proportions"] is None:
            values["region_proportions"] = _defaultRegions()
        self.values = values
        self.insurers = self._parseProportions("insurer_proportions", Insurer.parse)
        self.regions = self._parseProportions("region_proportions", Region.parse)
        self.validate()

    @staticmethod
    def noiseless(**kwargs):
        clean = {k: 0.0 for k in SyntheticSpec.noiseKeys}
        clean.update(kwargs)
        return SyntheticSpec(**clean)

    def __getitem__(self, item):
        return self.values[item]

    def _parseProportions(self, key, parser):
        try:
            parsed = {parser(k): float(v) for k, v in self.values[key].items()}
        except (ParseError, ValueError, AttributeError) as e:
            raise SyntheticSpecError(key, str(e))
        if not parsed:
            raise SyntheticSpecError(key, "no categories")
        if any(v < 0 for v in parsed.values()) or abs(sum(parsed.values()) - 1.0) > 1e-9:
            raise SyntheticSpecError(key, "proportions must be non-negative and sum to 1")
        return parsed

    def validate(self):
        v = self.values
        if not isinstance(v["n_patients"], int) or v["n_patients"] < 0:
            raise SyntheticSpecError("n_patients", "must be a non-negative integer")
        if not v["washout_start_year"] < v["window_start_year"] <= v["window_end_year"]:
            raise SyntheticSpecError("window_start_year", "expected washout_start_year < window_start_year <= window_end_year")
        if any(not i.isKnown() for i in self.insurers):
            raise SyntheticSpecError("insurer_proportions", "insurer must be known")
        for key in SyntheticSpec.noiseKeys:
            if not ProbabilityValidator().isValid(v[key]):
                raise SyntheticSpecError(key, "rate must lie in [0, 1]")
        if v["baseline_hazard"] <= 0:
            raise SyntheticSpecError("baseline_hazard", "hazard must be positive")
        if not ProbabilityValidator().isValid(v["censoring_rate"]):
            raise SyntheticSpecError("censoring_rate", "rate must lie in [0, 1]")
        if v["age_sd"] < 0 or not 20 <= v["age_mean"] <= 95:
            raise SyntheticSpecError("age_mean", "age distribution out of range")
        if v["follow_up_discharges"] < 0:
            raise SyntheticSpecError("follow_up_discharges", "must be non-negative")
        if v["population_size"] <= 0:
            raise SyntheticSpecError("population_size", "must be positive")
        try:
            CovariateSpec(list(v["effects"]))
        except (CoxError, TypeError) as e:
            raise SyntheticSpecError("effects", str(e))

    def count(self, key):
        return int(floor(self.values[key] * self.values["n_patients"] + 0.5))

    def toJson(self):
        return dict(self.values)

    @staticmethod
    def fromJson(d: dict):
        return SyntheticSpec(**d)

    @staticmethod
    def load(path):
        return SyntheticSpec.fromJson(storage.read_json(path))


class SyntheticRegistry(object):
    def __init__(self, deaths, discharges, population: PopulationTable, truth: dict):
        self.deaths = deaths
        self.discharges = discharges
        self.population = population
        self.truth = truth

    def getTruthCohort(self):
        return [PatientTimeline.fromRow(r) for r in self.truth["cohort"]]

    def write(self, directory):
        os.makedirs(directory, exist_ok=True)
        paths = {
            "deaths": os.path.join(directory, "deaths.csv"),
            "discharges": os.path.join(directory, "discharges.csv"),
            "population": os.path.join(directory, "population.csv"),
            "truth": os.path.join(directory, "truth.json"),
        }
        storage.write_deaths(paths["deaths"], self.deaths)
        storage.write_discharges(paths["discharges"], self.discharges)
        storage.write_csv(paths["population"], PopulationTable.fields, self.population.toRows())
        storage.write_json(paths["truth"], self.truth)
        return paths


class RegistryGenerator(object):
    def __init__(self, spec: SyntheticSpec, seed: int):
        self.spec = spec
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.windowStart = MonthIndex.fromYearMonth(spec["window_start_year"], 1)
        self.windowEnd = MonthIndex.fromYearMonth(spec["window_end_year"], 12)
        self.lastId = 0
        self.deaths = []
        self.discharges = []
        self.cohort = {}
        self.core = []
        self.ids = {k: [] for k in ["orphan", "washout", "inconsistent", "related_only", "male", "gender_corrected"]}
        self.missingIdByYear = {}
        self.covariates = CovariateSpec(list(spec["effects"]))
        self.effects = np.array([spec["effects"][n] for n in self.covariates.names], dtype=float)

    def _newId(self):
        self.lastId += 1
        return PersonId("P{0:07d}".format(self.lastId))

    def _month(self, first: MonthIndex, last: MonthIndex):
        """uniform on first..last inclusive"""
        return first + int(self.rng.integers(0, last - first + 1))

    def _date(self, month: MonthIndex, minDay=1):
        return date(month.year, month.month, int(self.rng.integers(minDay, 29)))

    def _choice(self, proportions: dict):
        keys = list(proportions)
        return keys[int(self.rng.choice(len(keys), p=[proportions[k] for k in keys]))]

    def _age(self):
        return int(min(95, max(20, round(self.rng.normal(self.spec["age_mean"], self.spec["age_sd"])))))

    def _birth(self, age, at: date):
        month = int(self.rng.integers(1, at.month + 1))
        day = int(self.rng.integers(1, (at.day if month == at.month else 28) + 1))
        return date(at.year - age, month, day)

    def _discharge(self, id, birth, sex, region, insurer, dischargeDate, code=BC_CAUSE):
        admission = dischargeDate - timedelta(days=int(self.rng.integers(0, 8)))
        record = DischargeRecord(id, birth, sex, region, insurer, admission, dischargeDate, code)
        self.discharges.append(record)
        return record

    def _death(self, id, birth, deathDate, region, cause=BC_CAUSE, sex=Sex.FEMALE):
        self.deaths.append(DeathRecord(id, birth, deathDate, sex, region, cause))

    def _linearPredictor(self, insurer, region, year, age):
        if not len(self.effects):
            return 0.0
        try:
            x = self.covariates.encodeFields({"insurer": insurer, "region": region, "year": year, "age": age})
        except EncodingError as e:
            raise SyntheticSpecError("effects", str(e))
        # years count from the window start so the baseline hazard stays on its scale
        return float(np.dot(self.effects, x)) - self.spec["effects"].get("year", 0.0) * self.spec["window_start_year"]

    def _patient(self):
        spec = self.spec
        pid = self._newId()
        insurer = self._choice(self.spec.insurers)
        region = self._choice(self.spec.regions)
        age = self._age()
        diagnosis = self._month(self.windowStart, self.windowEnd)
        first = self._date(diagnosis)
        birth = self._birth(age, first)
        hazard = spec["baseline_hazard"] * np.exp(self._linearPredictor(insurer, region, diagnosis.year, age))
        toDeath = self.rng.exponential(1.0 / hazard)
        toOther = self.rng.exponential(1.0 / spec["censoring_rate"]) if spec["censoring_rate"] > 0 else inf
        followUp = self.windowEnd - diagnosis

        if toDeath <= toOther and floor(toDeath) <= followUp:
            end, kind, cause = diagnosis + int(floor(toDeath)), EndKind.DEATH_BC, BC_CAUSE
        elif toOther < inf and floor(toOther) <= followUp:
            end, kind, cause = diagnosis + int(floor(toOther)), EndKind.CENSORED, OTHER_CAUSE
        else:
            end, kind, cause = self.windowEnd, EndKind.CENSORED, None

        self._discharge(pid, birth, Sex.FEMALE, region, insurer, first)
        count = 1
        if end - diagnosis >= 2:
            for _ in range(int(self.rng.poisson(spec["follow_up_discharges"]))):
                self._discharge(pid, birth, Sex.FEMALE, region, insurer, self._date(self._month(diagnosis + 1, end - 1)))
                count += 1
        if cause is not None:
            self._death(pid, birth, self._date(end, first.day if end == diagnosis else 1), region, cause)
        self.cohort[pid] = PatientTimeline(pid, diagnosis, end, kind, insurer, region, age, dischargeCount=count)
        self.core.append((pid, birth, insurer, region, first))

    def _genderNoise(self):
        count = self.spec.count("gender_noise_rate")
        eligible = [c for c in self.core if self.cohort[c[0]].endMonth - self.cohort[c[0]].diagnosisMonth >= 2]
        if count > len(eligible):
            message = "not enough patients with follow-up for {0} sex conflicts".format(count)
            raise SyntheticSpecError("gender_noise_rate", message)
        for index in sorted(self.rng.choice(len(eligible), size=count, replace=False)):
            pid, birth, insurer, region, _ = eligible[int(index)]
            timeline = self.cohort[pid]
            # one extra female record keeps the mode female
            for sex in [Sex.FEMALE, Sex.MALE]:
                month = self._month(timeline.diagnosisMonth + 1, timeline.endMonth - 1)
                self._discharge(pid, birth, sex, region, insurer, self._date(month))
            timeline.dischargeCount += 2
            self.ids["gender_corrected"].append(str(pid))

    def _missingIds(self):
        if not self.core:
            return
        for _ in range(self.spec.count("missing_id_rate")):
            _, birth, insurer, region, first = self.core[int(self.rng.integers(0, len(self.core)))]
            self._discharge(MissingId(), birth, Sex.FEMALE, region, insurer, first)
            self.missingIdByYear[first.year] = self.missingIdByYear.get(first.year, 0) + 1

    def _relatedOnly(self):
        for _ in range(self.spec.count("related_only_rate")):
            pid = self._newId()
            insurer, region, age = self._choice(self.spec.insurers), self._choice(self.spec.regions), self._age()
            deathMonth = self._month(self.windowStart + 1, self.windowEnd)
            diagnosis = self._month(max(self.windowStart, deathMonth - 12), deathMonth - 1)
            first = self._date(diagnosis)
            birth = self._birth(age, first)
            self._discharge(pid, birth, Sex.FEMALE, region, insurer, first, RELATED_CODE)
            self._death(pid, birth, self._date(deathMonth), region)
            self.cohort[pid] = PatientTimeline(
                pid, diagnosis, deathMonth, EndKind.DEATH_BC, insurer, region, age, dischargeCount=1
            )
            self.ids["related_only"].append(str(pid))

    def _inconsistent(self):
        for _ in range(self.spec.count("inconsistent_rate")):
            pid = self._newId()
            insurer, region, age = self._choice(self.spec.insurers), self._choice(self.spec.regions), self._age()
            diagnosis = self._month(self.windowStart, self.windowEnd - 3)
            deathMonth = self._month(diagnosis + 1, self.windowEnd - 1)
            first = self._date(diagnosis)
            birth = self._birth(age, first)
            self._discharge(pid, birth, Sex.FEMALE, region, insurer, first)
            self._discharge(pid, birth, Sex.FEMALE, region, insurer, self._date(self._month(deathMonth + 1, self.windowEnd)))
            self._death(pid, birth, self._date(deathMonth), region)
            self.cohort[pid] = PatientTimeline(
                pid, diagnosis, deathMonth, EndKind.DEATH_BC, insurer, region, age, dischargeCount=2, inconsistent=True
            )
            self.ids["inconsistent"].append(str(pid))

    def _orphans(self):
        for _ in range(self.spec.count("orphan_death_rate")):
            pid = self._newId()
            deathDate = self._date(self._month(self.windowStart, self.windowEnd))
            self._death(pid, self._birth(self._age(), deathDate), deathDate, self._choice(self.spec.regions))
            self.ids["orphan"].append(str(pid))

    def _washoutViolators(self):
        washoutStart = MonthIndex.fromYearMonth(self.spec["washout_start_year"], 1)
        for _ in range(self.spec.count("washout_rate")):
            pid = self._newId()
            insurer, region = self._choice(self.spec.insurers), self._choice(self.spec.regions)
            early = self._date(self._month(washoutStart, self.windowStart - 1))
            birth = self._birth(self._age(), early)
            self._discharge(pid, birth, Sex.FEMALE, region, insurer, early)
            self._discharge(pid, birth, Sex.FEMALE, region, insurer, self._date(self._month(self.windowStart, self.windowEnd)))
            self.ids["washout"].append(str(pid))

    def _malePatients(self):
        for _ in range(self.spec.count("male_patient_rate")):
            pid = self._newId()
            first = self._date(self._month(self.windowStart, self.windowEnd))
            birth = self._birth(self._age(), first)
            self._discharge(pid, birth, Sex.MALE, self._choice(self.spec.regions), self._choice(self.spec.insurers), first)
            self.ids["male"].append(str(pid))

    def _unrelated(self):
        if not self.core:
            return
        for _ in range(self.spec.count("unrelated_rate")):
            pid, birth, insurer, region, _ = self.core[int(self.rng.integers(0, len(self.core)))]
            dischargeDate = self._date(self._month(self.windowStart, self.windowEnd))
            self._discharge(pid, birth, Sex.FEMALE, region, insurer, dischargeDate, UNRELATED_CODE)

    def _population(self):
        std = StandardPopulation.load()
        size = self.spec["population_size"]
        kinds = {}
        for insurer, share in self.spec.insurers.items():
            kinds[insurer.kind.value] = kinds.get(insurer.kind.value, 0.0) + share
        table = PopulationTable()
        for year in range(self.spec["window_start_year"], self.spec["window_end_year"] + 1):
            for band, weight in std.weights.items():
                table.add(year, StratumKind.NATIONAL, NATIONAL, band, int(round(size * weight)))
                for region, share in self.spec.regions.items():
                    table.add(year, StratumKind.REGION, region.value, band, int(round(size * weight * share)))
                for kind, share in kinds.items():
                    table.add(year, StratumKind.INSURER, kind, band, int(round(size * weight * share)))
        return table

    def generate(self):
        for _ in range(self.spec["n_patients"]):
            self._patient()
        self._genderNoise()
        self._missingIds()
        self._relatedOnly()
        self._inconsistent()
        self._orphans()
        self._washoutViolators()
        self._malePatients()
        self._unrelated()

        deaths = [self.deaths[i] for i in self.rng.permutation(len(self.deaths))]
        discharges = [self.discharges[i] for i in self.rng.permutation(len(self.discharges))]
        cohort = [self.cohort[k] for k in sorted(self.cohort, key=str)]
        truth = {
            "seed": self.seed,
            "spec": self.spec.toJson(),
            "cohort": [t.toRow() for t in cohort],
            "ids": self.ids,
            "missing_id_by_year": {str(y): c for y, c in sorted(self.missingIdByYear.items())},
            "expected": {
                "final_patients": len(cohort),
                "gender_corrected": len(self.ids["gender_corrected"]),
                "male_patients_removed": len(self.ids["male"]),
                "washout_excluded_patients": len(self.ids["washout"]),
                "deaths_without_discharge": len(self.ids["orphan"]),
                "inconsistent_patients": len(self.ids["inconsistent"]),
            },
        }
        logger.info(
            "generated %i deaths and %i discharges for %i cohort patients", len(deaths), len(discharges), len(cohort)
        )
        return SyntheticRegistry(deaths, discharges, self._population(), truth)


def generate_synthetic(spec: SyntheticSpec, seed: int) -> SyntheticRegistry:
    return RegistryGenerator(spec, seed).generate()
