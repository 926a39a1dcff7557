from unittest import TestCase
from regsurv.cox import (
    CovariateSpec,
    CovariateProfile,
    CoxModel,
    CoxError,
    DesignMatrix,
    EncodingError,
    NoEventsError,
    ProfileDefaults,
    ProfileError,
    SingularityError,
    encode,
    fit,
    hazard_ratio,
    log_partial_likelihood,
    predict_survival,
)
from regsurv.cohort import PatientTimeline, EndKind
from regsurv.registry import PersonId, MonthIndex, Insurer, InsurerKind, FonasaSegment, Region
from test.fixtures import REFERENCE_COEFFICIENTS
from math import exp, log
import numpy as np


def design(X, time, event, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    names = names or ["x{0}".format(i) for i in range(X.shape[1])]
    return DesignMatrix(X, time, event, names)


def random_design(seed, n=60, p=2, tied=True):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    time = rng.integers(0, 8, size=n) if tied else rng.permutation(n)
    event = rng.random(n) < 0.7
    event[0] = True
    return design(X, time, event)


def simulated_design(seed, n, effect):
    rng = np.random.default_rng(seed)
    x = (rng.random(n) < 0.5).astype(float)
    age = rng.uniform(0.3, 0.8, size=n)
    hazard = 0.02 * np.exp(effect * x + 1.0 * age)
    time = np.floor(rng.exponential(1.0 / hazard)).astype(int)
    censor = rng.integers(12, 120, size=n)
    event = time <= censor
    return design(np.column_stack([x, age]), np.minimum(time, censor), event, ["x", "age"])


class PartialLikelihoodTest(TestCase):
    def testTwoSubjects(self):
        X = design([1.0, 0.0], [1, 2], [True, False])
        for beta in [-1.5, 0.0, 0.7]:
            result = log_partial_likelihood(X, [beta])
            self.assertAlmostEqual(result.value, beta - log(exp(beta) + 1))
            self.assertAlmostEqual(result.gradient[0], 1 - exp(beta) / (exp(beta) + 1))
            self.assertAlmostEqual(result.information[0, 0], exp(beta) / (exp(beta) + 1) ** 2)
            self.assertAlmostEqual(result.hessian[0, 0], -result.information[0, 0])

    def testZeroBetaWithoutTies(self):
        X = design(np.arange(4.0), [1, 2, 3, 4], [True] * 4)
        expected = -(log(4) + log(3) + log(2))
        for ties in ["efron", "breslow"]:
            self.assertAlmostEqual(log_partial_likelihood(X, [0.0], ties).value, expected)

    def testTiedDeathsAtZeroBeta(self):
        # three deaths among four subjects in one month
        X = design([0.1, 0.2, 0.3, 0.4], [1, 1, 1, 2], [True, True, True, False])
        self.assertAlmostEqual(log_partial_likelihood(X, [0.0], "breslow").value, -3 * log(4))
        self.assertAlmostEqual(log_partial_likelihood(X, [0.0], "efron").value, -(log(4) + log(3) + log(2)))

    def testFiniteDifferences(self):
        h = 1e-5
        for ties in ["efron", "breslow"]:
            X = random_design(3)
            beta = np.array([0.3, -0.4])
            result = log_partial_likelihood(X, beta, ties)
            for i in range(2):
                step = np.zeros(2)
                step[i] = h
                up = log_partial_likelihood(X, beta + step, ties)
                down = log_partial_likelihood(X, beta - step, ties)
                self.assertAlmostEqual((up.value - down.value) / (2 * h), result.gradient[i], places=5)
                numeric = (up.gradient - down.gradient) / (2 * h)
                np.testing.assert_allclose(numeric, result.hessian[:, i], rtol=1e-4, atol=1e-6)

    def testFiniteDifferencesOnSmallFixtures(self):
        h = 1e-5
        rng = np.random.default_rng(77)
        for seed in range(100):
            X = random_design(1000 + seed, n=30)
            beta = rng.normal(scale=0.5, size=2)
            for ties in ["efron", "breslow"]:
                result = log_partial_likelihood(X, beta, ties)
                for i in range(2):
                    step = np.zeros(2)
                    step[i] = h
                    up = log_partial_likelihood(X, beta + step, ties)
                    down = log_partial_likelihood(X, beta - step, ties)
                    numeric = (up.value - down.value) / (2 * h)
                    error = abs(numeric - result.gradient[i]) / max(1.0, abs(result.gradient[i]))
                    self.assertLess(error, 1e-6, "fixture {0} {1}".format(seed, ties))
                    hessian = (up.gradient - down.gradient) / (2 * h)
                    np.testing.assert_allclose(hessian, result.hessian[:, i], rtol=1e-4, atol=1e-6)

    def testLargeLinearPredictorStaysFinite(self):
        # unshifted, exp(900) would overflow
        X = design([1.0, 2.0, 3.0], [1, 2, 3], [True, True, False])
        result = log_partial_likelihood(X, [300.0])
        self.assertAlmostEqual(result.value, -log(1 + exp(-300.0) + exp(-600.0)) - 900.0 - log(1 + exp(-300.0)), places=6)
        self.assertTrue(np.all(np.isfinite(result.gradient)))

    def testInvalidArguments(self):
        X = random_design(5)
        with self.assertRaises(CoxError):
            log_partial_likelihood(X, [0.0])
        with self.assertRaises(CoxError):
            log_partial_likelihood(X, [0.0, 0.0], ties="exact")


class FitTest(TestCase):
    def testMaximizesLikelihood(self):
        X = random_design(11)
        for ties in ["efron", "breslow"]:
            model = fit(X, ties=ties)
            self.assertTrue(model.converged)
            beta = model.beta
            best = log_partial_likelihood(X, beta, ties).value
            self.assertAlmostEqual(best, model.logPartialLikelihood)
            for delta in [np.array([0.05, 0]), np.array([0, -0.05]), np.array([0.03, 0.03])]:
                self.assertGreater(best, log_partial_likelihood(X, beta + delta, ties).value)
            self.assertAlmostEqual(model.aic, 4 - 2 * best)

    def testGridSearch(self):
        X = random_design(21, p=1)
        model = fit(X)
        grid = np.linspace(-2, 2, 4001)
        values = [log_partial_likelihood(X, [b]).value for b in grid]
        self.assertAlmostEqual(model.beta[0], grid[int(np.argmax(values))], delta=1e-3)

    def testEfronEqualsBreslowWithoutTies(self):
        X = random_design(8, tied=False)
        np.testing.assert_allclose(fit(X, ties="efron").beta, fit(X, ties="breslow").beta, atol=1e-8)

    def testBreslowDuplicateInvariance(self):
        X = random_design(13)
        doubled = DesignMatrix(np.vstack([X.X, X.X]), np.concatenate([X.time, X.time]), np.concatenate([X.event, X.event]), X.names)
        single = fit(X, ties="breslow")
        double = fit(doubled, ties="breslow")
        np.testing.assert_allclose(double.beta, single.beta, atol=1e-6)
        np.testing.assert_allclose(double.standardErrors * np.sqrt(2), single.standardErrors, rtol=1e-6)

    def testRecoversPlantedEffect(self):
        model = fit(simulated_design(42, 3000, 0.7))
        self.assertAlmostEqual(model.coefficient("x"), 0.7, delta=0.15)
        self.assertLess(model.pValues[0], 1e-6)
        self.assertFalse(model.monotone)
        low, high = model.beta[0] - model.ciHalfWidths[0], model.beta[0] + model.ciHalfWidths[0]
        self.assertLess(low, model.beta[0])
        self.assertGreater(high, model.beta[0])

    def testCenteringIsRecorded(self):
        X = simulated_design(2, 400, 0.5)
        model = fit(X)
        np.testing.assert_allclose(model.means, X.X.mean(axis=0))
        self.assertEqual(model.observations, 400)
        self.assertEqual(model.events, X.getEventCount())
        shifted = DesignMatrix(X.X + 10.0, X.time, X.event, X.names)
        np.testing.assert_allclose(fit(shifted).beta, model.beta, atol=1e-7)

    def testBaselineHazard(self):
        X = simulated_design(4, 400, 0.5)
        model = fit(X)
        H0 = model.baselineCumHazard
        self.assertEqual(len(H0), X.time.max() + 1)
        self.assertTrue(np.all(np.diff(H0) >= 0))
        self.assertEqual(len(model.baselineRows()), len(H0))

    def testNoEvents(self):
        X = design([0.1, 0.2, 0.3], [1, 2, 3], [False] * 3)
        with self.assertRaises(NoEventsError):
            fit(X)
        with self.assertRaises(NoEventsError):
            fit(design(np.zeros((0, 1)), [], []))

    def testConstantColumn(self):
        X = design(np.column_stack([np.ones(10), np.arange(10.0)]), np.arange(10), [True] * 10, ["c", "x"])
        with self.assertRaises(SingularityError) as context:
            fit(X)
        self.assertEqual(context.exception.columns, ["c"])

    def testMonotoneLikelihood(self):
        # every death carries x = 1 and dies before everybody with x = 0
        X = design([1, 1, 1, 0, 0, 0], [1, 2, 3, 4, 5, 6], [True, True, True, False, False, False])
        model = fit(X, maxIter=60)
        self.assertTrue(model.monotone)
        self.assertGreater(model.beta[0], 15)

    def testIterationLimit(self):
        X = simulated_design(6, 300, 0.5)
        model = fit(X, maxIter=1, tolerance=1e-14)
        self.assertFalse(model.converged)
        self.assertEqual(model.iterations, 1)

    def testNullModel(self):
        X = simulated_design(6, 100, 0.5)
        model = fit(X.select([]))
        self.assertTrue(model.converged)
        self.assertEqual(model.aic, -2 * model.logPartialLikelihood)


class ModelTest(TestCase):
    def testJsonRoundTrip(self):
        model = fit(simulated_design(9, 300, 0.4))
        model.defaults = ProfileDefaults(age=60, year=2012, insurerKind=InsurerKind.FONASA, segment=FonasaSegment.B, region=Region.RM)
        restored = CoxModel.fromJson(model.toJson())
        np.testing.assert_allclose(restored.beta, model.beta)
        np.testing.assert_allclose(restored.pValues, model.pValues)
        self.assertEqual(restored.aic, model.aic)
        self.assertEqual(restored.defaults.toJson(), model.defaults.toJson())
        with self.assertRaises(CoxError):
            CoxModel.fromJson({"beta": [1.0]})

    def testCoefficientRows(self):
        model = CoxModel(["x"], [np.log(2)], covariance=[[0.01]])
        row = model.coefficientRows()[0]
        self.assertEqual(row["hazard_ratio"], "2.0000")
        self.assertEqual(row["ci_half_width"], "0.1960")
        self.assertAlmostEqual(model.hazardRatios()["x"], 2.0)


class EncodingTest(TestCase):
    def timeline(self, insurer="FONASA_A", age=60, region=Region.V):
        diagnosis = MonthIndex.parse("2012-05")
        return PatientTimeline(PersonId("P1"), diagnosis, diagnosis + 14, EndKind.DEATH_BC, Insurer.parse(insurer), region, age)

    def testDefaultColumns(self):
        names = CovariateSpec.defaultNames()
        self.assertEqual(len(names), 26)
        self.assertEqual(names[:3], ["insurer_fonasa", "insurer_isapre", "insurer_armed_forces"])
        self.assertEqual(names[-3:], ["year", "age", "age_squared"])
        self.assertTrue(all(c in names for c in CovariateSpec.referenceColumns))

    def testEncode(self):
        X = encode([self.timeline(), self.timeline(insurer="ISAPRE", age=45, region=Region.RM)])
        self.assertEqual(X.time.tolist(), [14, 14])
        self.assertEqual(X.getEventCount(), 2)
        self.assertEqual(X.column("insurer_fonasa").tolist(), [1.0, 0.0])
        self.assertEqual(X.column("segment_a").tolist(), [1.0, 0.0])
        self.assertEqual(X.column("region_V").tolist(), [1.0, 0.0])
        self.assertEqual(X.column("year").tolist(), [2012.0, 2012.0])
        np.testing.assert_allclose(X.column("age"), [0.6, 0.45])
        np.testing.assert_allclose(X.column("age_squared"), [0.36, 0.2025])

    def testEncodingErrors(self):
        with self.assertRaises(EncodingError) as context:
            encode([self.timeline(insurer="")])
        self.assertEqual(context.exception.field, "insurer")
        with self.assertRaises(EncodingError):
            encode([self.timeline(age=-1)])
        # columns not touching the insurer do not need one
        X = encode([self.timeline(insurer="")], CovariateSpec(["age"]))
        self.assertEqual(X.names, ["age"])

    def testAgeIsCapped(self):
        with self.assertLogs("regsurv.cox", level="WARNING") as logs:
            X = encode([self.timeline(age=101), self.timeline(age=0), self.timeline(age=100)], CovariateSpec(["age", "age_squared"]))
        np.testing.assert_allclose(X.column("age"), [1.0, 0.0, 1.0])
        np.testing.assert_allclose(X.column("age_squared"), [1.0, 0.0, 1.0])
        self.assertIn("1 subjects older than 100", logs.output[0])

    def testFitWithCentenarian(self):
        diagnosis = MonthIndex.parse("2012-05")
        subjects = [(101, 3, True), (45, 4, True), (70, 6, False), (60, 8, True), (85, 10, True), (55, 12, False), (90, 14, False)]
        timelines = [
            PatientTimeline(
                PersonId("P{0}".format(i)),
                diagnosis,
                diagnosis + months,
                EndKind.DEATH_BC if died else EndKind.CENSORED,
                Insurer.parse("ISAPRE"),
                Region.RM,
                age,
            )
            for i, (age, months, died) in enumerate(subjects)
        ]
        model = fit(encode(timelines, CovariateSpec(["age"])))
        self.assertTrue(model.converged)
        self.assertTrue(np.isfinite(model.beta[0]))
        self.assertEqual(model.observations, 7)

    def testInvalidSpec(self):
        with self.assertRaises(CoxError):
            CovariateSpec(["height"])
        with self.assertRaises(CoxError):
            CovariateSpec(["age", "age"])

    def testSelect(self):
        X = encode([self.timeline()])
        self.assertEqual(X.select(["age", "year"]).X.tolist(), [[0.6, 2012.0]])
        with self.assertRaises(CoxError):
            X.select(["height"])

    def testProfileDefaults(self):
        timelines = [
            self.timeline(age=50),
            self.timeline(insurer="FONASA_B", age=60),
            self.timeline(insurer="FONASA_B", age=70, region=Region.RM),
            self.timeline(insurer="ISAPRE", age=80),
            self.timeline(insurer="", age=90),
        ]
        defaults = ProfileDefaults.fromTimelines(timelines)
        self.assertEqual(defaults.age, 70)
        self.assertEqual(defaults.year, 2012)
        self.assertIs(defaults.insurerKind, InsurerKind.FONASA)
        self.assertIs(defaults.segment, FonasaSegment.B)
        self.assertIs(defaults.region, Region.V)
        self.assertIsNone(ProfileDefaults.fromTimelines([]).age)


class ProfileTest(TestCase):
    def testParse(self):
        profile = CovariateProfile.parse("age=60, insurer=ISAPRE")
        self.assertEqual(profile.age, 60.0)
        self.assertIs(profile.insurerKind, InsurerKind.ISAPRE)
        self.assertEqual(str(profile), "age=60,insurer=ISAPRE")
        profile = CovariateProfile.parse("insurer=fonasa_a,region=xiii,year=2012")
        self.assertIs(profile.insurerKind, InsurerKind.FONASA)
        self.assertIs(profile.segment, FonasaSegment.A)
        self.assertIs(profile.region, Region.RM)
        self.assertEqual(profile.year, 2012)
        self.assertIs(CovariateProfile.parse("insurer=FONASA,segment=c").segment, FonasaSegment.C)

    def testParseErrors(self):
        for text in [
            "age",
            "weight=3",
            "age=old",
            "region=XX",
            "insurer=FONASA_A,segment=B",
            "insurer=ISAPRE,segment=A",
            "insurer=UNKNOWN",
            "segment=E",
        ]:
            with self.assertRaises(ProfileError):
                CovariateProfile.parse(text)

    def testExpand(self):
        names = ["insurer_fonasa", "segment_a", "region_RM", "age"]
        defaults = ProfileDefaults(age=60, insurerKind=InsurerKind.FONASA, segment=FonasaSegment.A, region=Region.V)
        x = CovariateProfile.parse("region=RM").expand(names, defaults)
        self.assertEqual(x.tolist(), [1.0, 1.0, 1.0, 0.6])
        with self.assertRaises(ProfileError):
            CovariateProfile.parse("region=RM").expand(names)
        with self.assertRaises(ProfileError):
            CovariateProfile.parse("age=-5").expand(names, defaults)
        self.assertEqual(CovariateProfile.parse("age=150").expand(names, defaults).tolist()[-1], 1.0)


class ReferenceModelTest(TestCase):
    def setUp(self):
        self.defaults = ProfileDefaults(
            age=60, year=2012, insurerKind=InsurerKind.FONASA, segment=FonasaSegment.B, region=Region.RM
        )
        self.model = CoxModel.fromCoefficients(REFERENCE_COEFFICIENTS, CovariateSpec.defaultNames(), defaults=self.defaults)

    def assertRatio(self, source, target, expected):
        ratio = hazard_ratio(self.model, CovariateProfile.parse(source), CovariateProfile.parse(target))
        self.assertAlmostEqual(ratio, expected, delta=0.01, msg="{0} -> {1}".format(source, target))

    def testAgeRatios(self):
        self.assertRatio("age=40", "age=50", 1.00)
        self.assertRatio("age=40", "age=60", 1.15)
        self.assertRatio("age=50", "age=60", 1.15)
        self.assertRatio("age=50", "age=70", 1.52)

    def testInsurerRatios(self):
        self.assertRatio("insurer=ISAPRE", "insurer=FONASA_B", 1.72)
        self.assertRatio("insurer=FONASA_B", "insurer=FONASA_A", 1.29)
        self.assertRatio("insurer=ISAPRE", "insurer=FONASA_A", 2.22)

    def testYearRatios(self):
        self.assertRatio("year=2007", "year=2010", 0.86)
        self.assertRatio("year=2007", "year=2013", 0.74)
        self.assertRatio("year=2007", "year=2018", 0.57)

    def testRegionRatios(self):
        self.assertRatio("region=RM", "region=XV", 0.76)
        self.assertRatio("region=RM", "region=II", 0.96)
        self.assertRatio("region=RM", "region=V", 1.06)
        self.assertRatio("region=RM", "region=VI", 1.44)
        self.assertRatio("region=RM", "region=IV", 1.22)

    def testPredictedFiveYearSurvival(self):
        reference = CovariateProfile.parse("age=40,insurer=ISAPRE")
        risk = exp(self.model.linearPredictor(reference.expand(self.model.names, self.defaults)))
        # a baseline that puts the reference profile at 0.911 after 60 months
        self.model.baselineCumHazard = np.linspace(0, -log(0.911) / risk, 61)
        expected = {
            "ISAPRE": [0.911, 0.911, 0.899, 0.868, 0.806, 0.684],
            "FONASA_B": [0.852, 0.852, 0.832, 0.784, 0.689, 0.519],
        }
        for insurer, values in expected.items():
            for age, value in zip([40, 50, 60, 70, 80, 90], values):
                profile = CovariateProfile.parse("age={0},insurer={1}".format(age, insurer))
                curve = predict_survival(self.model, profile, 60)
                self.assertAlmostEqual(curve.at(60), value, delta=0.003, msg=str(profile))
                self.assertFalse(curve.extended)

    def testExtendedPrediction(self):
        profile = CovariateProfile.parse("age=50")
        risk = exp(self.model.linearPredictor(profile.expand(self.model.names, self.defaults)))
        self.model.baselineCumHazard = np.linspace(0, 0.1 / risk, 25)
        curve = predict_survival(self.model, profile, 60)
        self.assertTrue(curve.extended)
        self.assertEqual(len(curve), 61)
        self.assertEqual(curve.at(60), curve.at(24))
        self.assertLess(curve.at(24), curve.at(12))

    def testPredictionNeedsBaseline(self):
        with self.assertRaises(CoxError):
            predict_survival(self.model, CovariateProfile.parse("age=50"), 60)
