from unittest import TestCase
from regsurv.synthetic import SyntheticSpec, SyntheticSpecError, generate_synthetic, BC_CAUSE, OTHER_CAUSE
from regsurv.config.error import ConfigError
from regsurv.cohort import EndKind, PatientTimeline
from regsurv.cox import CovariateSpec, encode, fit
from regsurv.rates import PopulationTable, StratumKind, NATIONAL
from regsurv import storage
import tempfile
import os


class SyntheticSpecTest(TestCase):
    def testDefaults(self):
        spec = SyntheticSpec()
        self.assertEqual(spec["n_patients"], 2000)
        self.assertAlmostEqual(sum(spec.regions.values()), 1.0)
        self.assertAlmostEqual(sum(spec.insurers.values()), 1.0)

    def testNoiseless(self):
        spec = SyntheticSpec.noiseless(n_patients=50)
        for key in SyntheticSpec.noiseKeys:
            self.assertEqual(spec[key], 0.0)
        self.assertEqual(spec["n_patients"], 50)

    def testCountRounding(self):
        spec = SyntheticSpec(n_patients=300)
        self.assertEqual(spec.count("orphan_death_rate"), 15)
        self.assertEqual(spec.count("inconsistent_rate"), 2)
        self.assertEqual(SyntheticSpec(n_patients=100).count("inconsistent_rate"), 1)
        self.assertEqual(SyntheticSpec(n_patients=50).count("male_patient_rate"), 1)

    def testUnknownSetting(self):
        with self.assertRaises(SyntheticSpecError) as cm:
            SyntheticSpec(n_patient=10)
        self.assertEqual(cm.exception.key, "n_patient")

    def testErrorsAreConfigErrors(self):
        with self.assertRaises(ConfigError):
            SyntheticSpec(missing_id_rate=1.5)

    def testInvalidSettings(self):
        invalid = [
            {"insurer_proportions": {"FONASA_A": 0.5, "ISAPRE": 0.4}},
            {"insurer_proportions": {"FONASA_A": 0.5, "BOGUS": 0.5}},
            {"insurer_proportions": {}},
            {"region_proportions": {"RM": 1.5, "V": -0.5}},
            {"missing_id_rate": -0.1},
            {"censoring_rate": 2.0},
            {"baseline_hazard": 0.0},
            {"age_mean": 10.0},
            {"n_patients": -1},
            {"n_patients": 2.5},
            {"window_start_year": 2000},
            {"window_end_year": 2006},
            {"effects": {"height": 1.0}},
            {"population_size": 0},
        ]
        for settings in invalid:
            with self.assertRaises(SyntheticSpecError, msg=str(settings)):
                SyntheticSpec(**settings)

    def testJsonFile(self):
        spec = SyntheticSpec(n_patients=120, washout_rate=0.1)
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "spec.json")
            storage.write_json(path, spec.toJson())
            loaded = SyntheticSpec.load(path)
        self.assertEqual(loaded["n_patients"], 120)
        self.assertEqual(loaded["washout_rate"], 0.1)
        self.assertEqual(loaded.regions, spec.regions)


class SyntheticRegistryTest(TestCase):
    def testSameSeedSameRegistry(self):
        spec = SyntheticSpec(n_patients=150)
        first = generate_synthetic(spec, 11)
        second = generate_synthetic(spec, 11)
        self.assertEqual(first.truth, second.truth)
        self.assertEqual([d.toRow() for d in first.deaths], [d.toRow() for d in second.deaths])
        self.assertEqual([d.toRow() for d in first.discharges], [d.toRow() for d in second.discharges])

    def testSeedMatters(self):
        spec = SyntheticSpec(n_patients=150)
        self.assertNotEqual(generate_synthetic(spec, 1).truth["cohort"], generate_synthetic(spec, 2).truth["cohort"])

    def testNoiseCounts(self):
        spec = SyntheticSpec(n_patients=300)
        registry = generate_synthetic(spec, 3)
        ids = registry.truth["ids"]
        self.assertEqual(len(ids["orphan"]), 15)
        self.assertEqual(len(ids["washout"]), 9)
        self.assertEqual(len(ids["male"]), 3)
        self.assertEqual(len(ids["inconsistent"]), 2)
        self.assertEqual(len(ids["related_only"]), 6)
        self.assertEqual(len(ids["gender_corrected"]), 6)
        missing = [d for d in registry.discharges if d.id.isAbsent()]
        self.assertEqual(len(missing), 6)
        self.assertEqual(sum(registry.truth["missing_id_by_year"].values()), 6)
        expected = registry.truth["expected"]
        self.assertEqual(expected["final_patients"], 300 + 6 + 2)
        self.assertEqual(expected["deaths_without_discharge"], 15)

    def testNoiselessRegistry(self):
        registry = generate_synthetic(SyntheticSpec.noiseless(n_patients=200), 8)
        self.assertTrue(all(not ids for ids in registry.truth["ids"].values()))
        self.assertFalse(any(d.id.isAbsent() for d in registry.discharges))
        self.assertEqual(registry.truth["missing_id_by_year"], {})
        self.assertEqual(len(registry.truth["cohort"]), 200)
        self.assertEqual(len(registry.discharges), sum(t.dischargeCount for t in registry.getTruthCohort()))

    def testTimelinesAgreeWithDeaths(self):
        registry = generate_synthetic(SyntheticSpec.noiseless(n_patients=250), 9)
        causes = {str(d.id): d.causeCode for d in registry.deaths}
        for timeline in registry.getTruthCohort():
            self.assertLessEqual(timeline.diagnosisMonth, timeline.endMonth)
            self.assertGreaterEqual(timeline.diagnosisMonth.year, 2007)
            self.assertLessEqual(timeline.endMonth.year, 2018)
            if timeline.endKind is EndKind.DEATH_BC:
                self.assertEqual(causes[str(timeline.id)], BC_CAUSE)
            elif str(timeline.id) in causes:
                self.assertEqual(causes[str(timeline.id)], OTHER_CAUSE)

    def testPopulationCoversWindow(self):
        spec = SyntheticSpec.noiseless(n_patients=10, window_start_year=2010, window_end_year=2012, washout_start_year=2005)
        population = generate_synthetic(spec, 4).population
        self.assertEqual(population.years(), [2010, 2011, 2012])
        self.assertAlmostEqual(population.total(2011, StratumKind.NATIONAL, NATIONAL), 8000000, delta=20)
        self.assertIn("RM", population.strata(StratumKind.REGION))

    def testWrite(self):
        registry = generate_synthetic(SyntheticSpec(n_patients=100), 6)
        with tempfile.TemporaryDirectory() as directory:
            paths = registry.write(os.path.join(directory, "synthetic"))
            self.assertEqual(set(paths), {"deaths", "discharges", "population", "truth"})
            deaths, rejected = storage.read_deaths(paths["deaths"])
            self.assertEqual((len(deaths), rejected), (len(registry.deaths), 0))
            discharges, rejected = storage.read_discharges(paths["discharges"])
            self.assertEqual((len(discharges), rejected), (len(registry.discharges), 0))
            population = PopulationTable.load(paths["population"])
            self.assertEqual(population.years(), registry.population.years())
            truth = storage.read_json(paths["truth"])
        self.assertEqual(truth["expected"], registry.truth["expected"])
        self.assertEqual(truth["cohort"], registry.truth["cohort"])


class CoverageTest(TestCase):
    def testNullEffectIntervalCoversZero(self):
        covered = 0
        spec = SyntheticSpec.noiseless(n_patients=300, effects={"insurer_isapre": 0.0, "age": 1.5})
        for seed in range(100):
            registry = generate_synthetic(spec, 500 + seed)
            cohort = [PatientTimeline.fromRow(row) for row in registry.truth["cohort"]]
            model = fit(encode(cohort, CovariateSpec(["insurer_isapre", "age"])))
            beta, halfWidth = model.coefficient("insurer_isapre"), model.ciHalfWidths[0]
            if beta - halfWidth <= 0.0 <= beta + halfWidth:
                covered += 1
        self.assertGreaterEqual(covered, 90)
