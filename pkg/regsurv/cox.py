"""
Cox proportional hazards on monthly survival times.

The design matrix is centered on its column means before fitting; the means travel with the model and
the baseline hazard refers to the mean subject. Risk-set sums are accumulated over distinct times from the
last to the first, with the linear predictor shifted by its maximum so exponentials stay finite.
"""

from regsurv.registry import Insurer, InsurerKind, FonasaSegment, Region, ParseError
from regsurv.survival import SurvivalCurve, SurvivalPoint
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.stats import norm
from statistics import median
from collections import Counter
import numpy as np

import logging

logger = logging.getLogger(__name__)


Z_95 = 1.96
# a coefficient this large in absolute value means the likelihood keeps increasing along it
MONOTONE_LIMIT = 15.0


class CoxError(Exception):
    pass


class EncodingError(CoxError):
    def __init__(self, row, field, value):
        super().__init__('cannot encode {field} = "{value}" in row {row}'.format(row=row, field=field, value=value))
        self.row = row
        self.field = field
        self.value = value


class ComputationError(CoxError):
    pass


class SingularityError(CoxError):
    def __init__(self, columns):
        super().__init__("information matrix is singular; collinear columns: {0}".format(", ".join(columns)))
        self.columns = columns


class NoEventsError(CoxError):
    pass


class ProfileError(CoxError):
    pass


# ages above this encode like this age
AGE_CAP = 100


def _normalizedAge(age):
    if age < 0:
        raise ValueError(age)
    return min(age, AGE_CAP) / 100.0


class CovariateSpec(object):
    """
    Ordered design columns. Insurer, segment and region columns are dummies; the reference levels are an
    insurer without coverage, and any segment or region whose column is left out.
    """

    insurerKinds = [InsurerKind.FONASA, InsurerKind.ISAPRE, InsurerKind.ARMED_FORCES]
    # one level per dummy group that is left out of a full fit
    referenceColumns = ["insurer_armed_forces", "segment_b", "region_RM"]

    def __init__(self, names=None):
        self.encoders = CovariateSpec._encoders()
        self.names = list(names) if names is not None else CovariateSpec.defaultNames()
        unknown = [n for n in self.names if n not in self.encoders]
        if unknown:
            raise CoxError("unknown covariate columns: {0}".format(", ".join(unknown)))
        if len(set(self.names)) != len(self.names):
            raise CoxError("duplicate covariate columns")

    @staticmethod
    def defaultNames():
        names = ["insurer_" + k.value.lower() for k in CovariateSpec.insurerKinds]
        names += ["segment_" + s.value.lower() for s in FonasaSegment]
        names += ["region_" + r.value for r in Region]
        names += ["year", "age", "age_squared"]
        return names

    @staticmethod
    def _encoders():
        # column name -> (raw field, function of that field's value)
        encoders = {}
        for kind in CovariateSpec.insurerKinds:
            encoders["insurer_" + kind.value.lower()] = ("insurer", lambda v, kind=kind: float(v.kind is kind))
        for segment in FonasaSegment:
            encoders["segment_" + segment.value.lower()] = ("insurer", lambda v, segment=segment: float(v.segment is segment))
        for region in Region:
            encoders["region_" + region.value] = ("region", lambda v, region=region: float(v is region))
        encoders["year"] = ("year", lambda v: float(v))
        encoders["age"] = ("age", _normalizedAge)
        encoders["age_squared"] = ("age", lambda v: _normalizedAge(v) ** 2)
        return encoders

    def fieldOf(self, name):
        return self.encoders[name][0]

    def requiredFields(self):
        return sorted(set(self.fieldOf(n) for n in self.names))

    def encodeFields(self, fields: dict, row=None):
        values = []
        for name in self.names:
            field, encoder = self.encoders[name]
            value = fields.get(field)
            if value is None:
                raise EncodingError(row, field, value)
            if field == "insurer" and not value.isKnown():
                raise EncodingError(row, field, value)
            try:
                values.append(encoder(value))
            except (ValueError, TypeError):
                raise EncodingError(row, field, value)
        return values

    @staticmethod
    def fieldsOf(timeline):
        return {
            "insurer": timeline.insurer,
            "region": timeline.region,
            "year": timeline.diagnosisYear,
            "age": timeline.ageAtDiagnosis,
        }


class DesignMatrix(object):
    def __init__(self, X, time, event, names, ids=None):
        self.X = np.asarray(X, dtype=float).reshape(len(time), len(names))
        self.time = np.asarray(time, dtype=int)
        self.event = np.asarray(event, dtype=bool)
        self.names = list(names)
        self.ids = ids
        if not np.all(np.isfinite(self.X)):
            raise CoxError("design matrix has missing entries")
        if len(self.event) != len(self.time):
            raise CoxError("time and event vectors differ in length")
        if len(self.time) and self.time.min() < 0:
            raise CoxError("negative survival time in design matrix")

    def __len__(self):
        return len(self.time)

    def getEventCount(self):
        return int(self.event.sum())

    def column(self, name):
        return self.X[:, self.names.index(name)]

    def select(self, names):
        missing = [n for n in names if n not in self.names]
        if missing:
            raise CoxError("columns not in design matrix: {0}".format(", ".join(missing)))
        indices = [self.names.index(n) for n in names]
        return DesignMatrix(self.X[:, indices], self.time, self.event, names, self.ids)


def encode(timelines, spec: CovariateSpec = None) -> DesignMatrix:
    spec = spec or CovariateSpec()
    rows = []
    for index, timeline in enumerate(timelines):
        rows.append(spec.encodeFields(CovariateSpec.fieldsOf(timeline), row=str(timeline.id) or index))
    if "age" in spec.requiredFields():
        capped = sum(1 for t in timelines if t.ageAtDiagnosis is not None and t.ageAtDiagnosis > AGE_CAP)
        if capped:
            logger.warning("%i subjects older than %i are encoded as %i", capped, AGE_CAP, AGE_CAP)
    return DesignMatrix(
        np.array(rows, dtype=float).reshape(len(rows), len(spec.names)),
        [t.getSurvivalTime() for t in timelines],
        [t.isDeath() for t in timelines],
        spec.names,
        ids=[str(t.id) for t in timelines],
    )


class LikelihoodResult(object):
    def __init__(self, value, gradient, information):
        self.value = value
        self.gradient = gradient
        # negative hessian
        self.information = information

    @property
    def hessian(self):
        return -self.information


def _riskSetSums(X, time, event, beta, ties):
    """
    walks the distinct times from last to first, growing the risk set, and yields per event time the
    tied-death contribution to value, gradient and information
    """
    n, p = X.shape
    eta = X @ beta if p else np.zeros(n)
    shift = eta.max() if n else 0.0
    w = np.exp(eta - shift)
    order = np.argsort(-time, kind="stable")
    sortedTime = time[order]
    boundaries = np.flatnonzero(np.diff(sortedTime)) + 1
    groups = np.split(order, boundaries) if n else []

    s0 = 0.0
    s1 = np.zeros(p)
    s2 = np.zeros((p, p))
    for group in groups:
        xg = X[group]
        wg = w[group]
        s0 += wg.sum()
        s1 += wg @ xg
        s2 += (xg * wg[:, None]).T @ xg
        deaths = group[event[group]]
        d = len(deaths)
        if d == 0:
            continue
        xd = X[deaths]
        wd = w[deaths]
        value = (eta[deaths] - shift).sum()
        gradient = xd.sum(axis=0)
        information = np.zeros((p, p))
        baseline = 0.0
        if ties == "breslow":
            value -= d * np.log(s0)
            mean = s1 / s0
            gradient = gradient - d * mean
            information += d * (s2 / s0 - np.outer(mean, mean))
            baseline = d / s0
        else:
            d0 = wd.sum()
            d1 = wd @ xd
            d2 = (xd * wd[:, None]).T @ xd
            for l in range(d):
                f = l / d
                denominator = s0 - f * d0
                m1 = s1 - f * d1
                m2 = s2 - f * d2
                value -= np.log(denominator)
                gradient = gradient - m1 / denominator
                information += m2 / denominator - np.outer(m1, m1) / denominator ** 2
                baseline += 1.0 / denominator
        yield int(time[group[0]]), value, gradient, information, baseline * np.exp(-shift)


def _checkTies(ties):
    if ties not in ["efron", "breslow"]:
        raise CoxError("unknown tie handling: {0}".format(ties))


def _evaluate(X, time, event, beta, ties):
    p = X.shape[1]
    value = 0.0
    gradient = np.zeros(p)
    information = np.zeros((p, p))
    for _, v, g, i, _ in _riskSetSums(X, time, event, beta, ties):
        value += v
        gradient += g
        information += i
    if not (np.isfinite(value) and np.all(np.isfinite(gradient)) and np.all(np.isfinite(information))):
        raise ComputationError("non-finite partial likelihood at beta = {0}".format(beta))
    return LikelihoodResult(float(value), gradient, information)


def log_partial_likelihood(X: DesignMatrix, beta, ties="efron") -> LikelihoodResult:
    _checkTies(ties)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (X.X.shape[1],):
        raise CoxError("beta has {0} entries, design matrix {1} columns".format(beta.shape, X.X.shape[1]))
    return _evaluate(X.X, X.time, X.event, beta, ties)


def baseline_cumulative_hazard(X, time, event, beta, ties, horizon=None):
    """
    H0 per month 0..horizon for a subject with covariates all zero (for centered data, the mean subject)
    """
    horizon = int(time.max()) if horizon is None else horizon
    increments = np.zeros(horizon + 1)
    for t, _, _, _, h in _riskSetSums(X, time, event, beta, ties):
        if t <= horizon:
            increments[t] = h
    return np.cumsum(increments)


def _collinearColumns(information, names):
    values, vectors = np.linalg.eigh(information)
    weakest = vectors[:, int(np.argmin(values))]
    columns = [names[i] for i in np.flatnonzero(np.abs(weakest) > 0.1)]
    return columns or list(names)


class CoxModel(object):
    def __init__(
        self,
        names,
        beta,
        covariance=None,
        logPartialLikelihood=None,
        means=None,
        baselineCumHazard=None,
        converged=True,
        iterations=0,
        ties="efron",
        monotone=False,
        observations=0,
        events=0,
        defaults=None,
    ):
        self.names = list(names)
        self.beta = np.asarray(beta, dtype=float)
        k = len(self.names)
        self.covariance = np.asarray(covariance, dtype=float) if covariance is not None else np.zeros((k, k))
        self.logPartialLikelihood = logPartialLikelihood
        self.means = np.asarray(means, dtype=float) if means is not None else np.zeros(k)
        self.baselineCumHazard = np.asarray(baselineCumHazard, dtype=float) if baselineCumHazard is not None else None
        self.converged = converged
        self.iterations = iterations
        self.ties = ties
        self.monotone = monotone
        self.observations = observations
        self.events = events
        self.defaults = defaults

    @staticmethod
    def fromCoefficients(coefficients: dict, names=None, baselineCumHazard=None, defaults=None):
        """
        a model with given coefficients; columns in `names` missing from `coefficients` are zero
        """
        names = list(names) if names is not None else list(coefficients)
        return CoxModel(names, [coefficients.get(n, 0.0) for n in names], baselineCumHazard=baselineCumHazard, defaults=defaults)

    @property
    def aic(self):
        if self.logPartialLikelihood is None:
            return None
        return 2 * len(self.names) - 2 * self.logPartialLikelihood

    @property
    def standardErrors(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))

    @property
    def ciHalfWidths(self):
        return Z_95 * self.standardErrors

    @property
    def pValues(self):
        se = self.standardErrors
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, np.abs(self.beta) / np.where(se > 0, se, 1), np.inf)
        return 2 * norm.sf(z)

    def coefficient(self, name):
        return float(self.beta[self.names.index(name)])

    def hazardRatios(self):
        return dict(zip(self.names, np.exp(self.beta)))

    def linearPredictor(self, x):
        return float((np.asarray(x, dtype=float) - self.means) @ self.beta)

    def toJson(self):
        return {
            "names": self.names,
            "beta": self.beta.tolist(),
            "se": self.standardErrors.tolist(),
            "p_values": self.pValues.tolist(),
            "ci_half_widths": self.ciHalfWidths.tolist(),
            "covariance": self.covariance.tolist(),
            "log_partial_likelihood": self.logPartialLikelihood,
            "aic": self.aic,
            "means": self.means.tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "ties": self.ties,
            "monotone": self.monotone,
            "observations": self.observations,
            "events": self.events,
            "defaults": self.defaults.toJson() if self.defaults is not None else None,
            "baseline_cum_hazard": self.baselineCumHazard.tolist() if self.baselineCumHazard is not None else None,
        }

    @staticmethod
    def fromJson(d: dict):
        try:
            return CoxModel(
                d["names"],
                d["beta"],
                covariance=d.get("covariance"),
                logPartialLikelihood=d.get("log_partial_likelihood"),
                means=d.get("means"),
                baselineCumHazard=d.get("baseline_cum_hazard"),
                converged=d.get("converged", True),
                iterations=d.get("iterations", 0),
                ties=d.get("ties", "efron"),
                monotone=d.get("monotone", False),
                observations=d.get("observations", 0),
                events=d.get("events", 0),
                defaults=ProfileDefaults.fromJson(d["defaults"]) if d.get("defaults") else None,
            )
        except KeyError as e:
            raise CoxError("model description lacks {0}".format(e))

    def coefficientRows(self):
        return [
            {
                "variable": name,
                "coefficient": "{0:.4f}".format(b),
                "ci_half_width": "{0:.4f}".format(h),
                "hazard_ratio": "{0:.4f}".format(np.exp(b)),
                "p_value": "{0:.4g}".format(p),
            }
            for name, b, h, p in zip(self.names, self.beta, self.ciHalfWidths, self.pValues)
        ]

    def baselineRows(self):
        if self.baselineCumHazard is None:
            return []
        return [{"month": t, "H0": "{0:.8f}".format(h)} for t, h in enumerate(self.baselineCumHazard)]


def fit(X: DesignMatrix, ties="efron", tolerance=1e-8, maxIter=50) -> CoxModel:
    """
    Newton-Raphson with step halving until the largest gradient entry drops below `tolerance`.
    Runs out of iterations return a model with converged = False.
    """
    _checkTies(ties)
    if len(X) == 0 or X.getEventCount() == 0:
        raise NoEventsError("no deaths among {0} subjects".format(len(X)))
    constant = [n for i, n in enumerate(X.names) if np.ptp(X.X[:, i]) == 0]
    if constant:
        raise SingularityError(constant)

    means = X.X.mean(axis=0)
    Xc = X.X - means
    p = len(X.names)
    beta = np.zeros(p)
    current = _evaluate(Xc, X.time, X.event, beta, ties)
    converged = p == 0
    iterations = 0
    while not converged and iterations < maxIter:
        if np.max(np.abs(current.gradient)) < tolerance:
            converged = True
            break
        iterations += 1
        try:
            factor = cho_factor(current.information)
        except LinAlgError:
            raise SingularityError(_collinearColumns(current.information, X.names))
        step = cho_solve(factor, current.gradient)
        candidate = None
        for _ in range(30):
            try:
                candidate = _evaluate(Xc, X.time, X.event, beta + step, ties)
            except ComputationError:
                candidate = None
            if candidate is not None and candidate.value >= current.value - 1e-12 * abs(current.value):
                break
            step = step / 2
        if candidate is None:
            raise ComputationError("step halving failed at iteration {0}".format(iterations))
        beta = beta + step
        current = candidate
        logger.debug("iteration %i: log PL = %f, |gradient| = %g", iterations, current.value, np.max(np.abs(current.gradient)))
    if not converged and np.max(np.abs(current.gradient)) < tolerance:
        converged = True

    if not converged:
        logger.warning("no convergence after %i iterations (|gradient| = %g)", iterations, np.max(np.abs(current.gradient)))
    monotone = bool(p and np.max(np.abs(beta)) > MONOTONE_LIMIT)
    if monotone:
        diverging = [n for n, b in zip(X.names, beta) if abs(b) > MONOTONE_LIMIT]
        logger.warning("monotone likelihood: coefficients diverge (%s)", ", ".join(diverging))

    if p:
        try:
            covariance = cho_solve(cho_factor(current.information), np.eye(p))
        except LinAlgError:
            raise SingularityError(_collinearColumns(current.information, X.names))
    else:
        covariance = np.zeros((0, 0))

    return CoxModel(
        X.names,
        beta,
        covariance=covariance,
        logPartialLikelihood=current.value,
        means=means,
        baselineCumHazard=baseline_cumulative_hazard(Xc, X.time, X.event, beta, ties),
        converged=converged,
        iterations=iterations,
        ties=ties,
        monotone=monotone,
        observations=len(X),
        events=X.getEventCount(),
    )


class ProfileDefaults(object):
    """
    values for profile fields left unspecified: median age and year, modal insurer kind, FONASA segment
    and region
    """

    def __init__(self, age=None, year=None, insurerKind=None, segment=None, region=None):
        self.age = age
        self.year = year
        self.insurerKind = insurerKind
        self.segment = segment
        self.region = region

    @staticmethod
    def fromTimelines(timelines):
        timelines = list(timelines)
        if not timelines:
            return ProfileDefaults()

        def mode(values):
            counts = Counter(values)
            if not counts:
                return None
            # ties go to the first value in sorted order
            best = max(counts.values())
            return sorted((v for v, c in counts.items() if c == best), key=lambda v: v.value)[0]

        known = [t.insurer for t in timelines if t.insurer.isKnown()]
        return ProfileDefaults(
            age=median(t.ageAtDiagnosis for t in timelines),
            year=median(t.diagnosisYear for t in timelines),
            insurerKind=mode(i.kind for i in known),
            segment=mode(i.segment for i in known if i.segment is not None),
            region=mode(t.region for t in timelines),
        )

    def toJson(self):
        return {
            "age": self.age,
            "year": self.year,
            "insurer": self.insurerKind.value if self.insurerKind else None,
            "segment": self.segment.value if self.segment else None,
            "region": self.region.value if self.region else None,
        }

    @staticmethod
    def fromJson(d):
        return ProfileDefaults(
            age=d.get("age"),
            year=d.get("year"),
            insurerKind=InsurerKind(d["insurer"]) if d.get("insurer") else None,
            segment=FonasaSegment(d["segment"]) if d.get("segment") else None,
            region=Region(d["region"]) if d.get("region") else None,
        )


class CovariateProfile(object):
    keys = ["age", "insurer", "segment", "region", "year"]

    def __init__(
        self, age=None, insurerKind: InsurerKind = None, segment: FonasaSegment = None, region: Region = None, year=None
    ):
        if insurerKind is not None and insurerKind is not InsurerKind.FONASA and segment is not None:
            raise ProfileError("only FONASA profiles carry a segment")
        if insurerKind is InsurerKind.UNKNOWN:
            raise ProfileError("a profile needs a known insurer")
        self.age = age
        self.insurerKind = insurerKind
        self.segment = segment
        self.region = region
        self.year = year

    @staticmethod
    def parse(text):
        """
        comma-separated assignments, e.g. "age=60,insurer=FONASA,segment=A,region=RM,year=2012";
        "insurer=FONASA_A" sets insurer and segment at once
        """
        values = {}
        for assignment in [a for a in (text or "").split(",") if a.strip()]:
            if "=" not in assignment:
                raise ProfileError('expected key=value, got "{0}"'.format(assignment))
            key, value = [s.strip() for s in assignment.split("=", 1)]
            key = key.lower()
            if key not in CovariateProfile.keys:
                raise ProfileError('unknown profile field "{0}"'.format(key))
            values[key] = value
        try:
            kwargs = {}
            if "age" in values:
                kwargs["age"] = float(values["age"])
            if "year" in values:
                kwargs["year"] = int(values["year"])
            if "region" in values:
                kwargs["region"] = Region.parse(values["region"])
            if "segment" in values:
                kwargs["segment"] = FonasaSegment(values["segment"].upper())
            if "insurer" in values:
                token = values["insurer"].upper()
                if token == "FONASA":
                    kwargs["insurerKind"] = InsurerKind.FONASA
                else:
                    insurer = Insurer.parse(token)
                    kwargs["insurerKind"] = insurer.kind
                    if insurer.segment is not None:
                        if "segment" in kwargs and kwargs["segment"] is not insurer.segment:
                            raise ProfileError("conflicting FONASA segments")
                        kwargs["segment"] = insurer.segment
        except (ValueError, ParseError) as e:
            raise ProfileError("invalid profile {0}: {1}".format(text, e))
        return CovariateProfile(**kwargs)

    def replace(self, **kwargs):
        fields = {
            "age": self.age,
            "insurerKind": self.insurerKind,
            "segment": self.segment,
            "region": self.region,
            "year": self.year,
        }
        fields.update(kwargs)
        return CovariateProfile(**fields)

    def resolve(self, defaults: ProfileDefaults = None):
        """
        raw fields with the gaps filled from `defaults`; fields that stay unknown are None
        """
        defaults = defaults or ProfileDefaults()
        kind = self.insurerKind if self.insurerKind is not None else defaults.insurerKind
        insurer = None
        if kind is InsurerKind.FONASA:
            segment = self.segment if self.segment is not None else defaults.segment
            if segment is not None:
                insurer = Insurer(kind, segment)
        elif kind is not None:
            insurer = Insurer(kind)
        return {
            "age": self.age if self.age is not None else defaults.age,
            "year": self.year if self.year is not None else defaults.year,
            "region": self.region if self.region is not None else defaults.region,
            "insurer": insurer,
        }

    def expand(self, names, defaults: ProfileDefaults = None):
        spec = CovariateSpec(names)
        fields = self.resolve(defaults)
        for field in spec.requiredFields():
            if fields[field] is None:
                raise ProfileError("profile lacks {0} and no default is available".format(field))
        try:
            return np.array(spec.encodeFields(fields, row="profile"))
        except EncodingError as e:
            raise ProfileError(str(e))

    def __str__(self):
        parts = []
        if self.age is not None:
            parts.append("age={0:g}".format(self.age))
        if self.insurerKind is not None:
            parts.append("insurer={0}".format(self.insurerKind.value))
        if self.segment is not None:
            parts.append("segment={0}".format(self.segment.value))
        if self.region is not None:
            parts.append("region={0}".format(self.region.value))
        if self.year is not None:
            parts.append("year={0}".format(self.year))
        return ",".join(parts)


def hazard_ratio(model: CoxModel, fromProfile: CovariateProfile, toProfile: CovariateProfile) -> float:
    xFrom = fromProfile.expand(model.names, model.defaults)
    xTo = toProfile.expand(model.names, model.defaults)
    return float(np.exp(model.beta @ (xTo - xFrom)))


def predict_survival(model: CoxModel, profile: CovariateProfile, horizon: int) -> SurvivalCurve:
    """
    S(t | x) = exp(-H0(t) exp((x - means) beta)), one point per month up to `horizon`; past the last
    observed month H0 is held flat and the curve is flagged as extended
    """
    if model.baselineCumHazard is None or len(model.baselineCumHazard) == 0:
        raise CoxError("model has no baseline hazard")
    if not model.converged:
        logger.warning("predicting from a model that did not converge")
    risk = np.exp(model.linearPredictor(profile.expand(model.names, model.defaults)))
    last = len(model.baselineCumHazard) - 1
    extended = horizon > last
    if extended:
        logger.warning("horizon %i exceeds the last observed month %i; extending the curve flat", horizon, last)
    points = []
    for t in range(horizon + 1):
        s = float(np.exp(-model.baselineCumHazard[min(t, last)] * risk))
        points.append(SurvivalPoint(t, s, 0.0, s, s))
    return SurvivalCurve(points, extended=extended)
