from regsurv.cox import DesignMatrix, CoxModel, CoxError, fit
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from math import inf

import logging

logger = logging.getLogger(__name__)


class SelectionMode(Enum):
    # every pending column is fitted per round and the lowest AIC wins
    BEST = "best"
    # the first column in declared order that improves on the incumbent wins
    FIRST = "first"


class StopReason(Enum):
    NO_IMPROVEMENT = "no_improvement"
    NO_SIGNIFICANT_MODEL = "no_significant_model"
    PENDING_EXHAUSTED = "pending_exhausted"


class SelectionStep(object):
    def __init__(self, index, variable, aic, pValues: dict):
        self.index = index
        self.variable = variable
        self.aic = aic
        self.pValues = pValues

    def getWorstP(self):
        return max(self.pValues.values())

    def toRow(self):
        return {
            "step": self.index,
            "variable": self.variable,
            "aic": "{0:.4f}".format(self.aic),
            "worst_p": "{0:.4g}".format(self.getWorstP()),
        }


class SelectionTrace(object):
    fields = ["step", "variable", "aic", "worst_p"]

    def __init__(self):
        self.steps = []
        self.failures = []
        self.stopReason = None

    @property
    def finalVariables(self):
        return [s.variable for s in self.steps]

    def addFailure(self, roundNumber, variable, reason):
        logger.info("round %i: %s not considered: %s", roundNumber, variable, reason)
        self.failures.append({"round": roundNumber, "variable": variable, "reason": reason})

    def toRows(self):
        return [s.toRow() for s in self.steps]

    def toJson(self):
        return {
            "steps": [dict(s.toRow(), p_values=s.pValues) for s in self.steps],
            "final_variables": self.finalVariables,
            "stop_reason": self.stopReason.value if self.stopReason else None,
            "failures": self.failures,
        }


class CandidateFit(object):
    def __init__(self, variable, model: CoxModel = None, failure=None):
        self.variable = variable
        self.model = model
        self.failure = failure

    def isSignificant(self, threshold):
        return self.model is not None and all(p <= threshold for p in self.model.pValues)


def greedy_select(
    X: DesignMatrix,
    candidates,
    pThreshold=0.05,
    ties="efron",
    tolerance=1e-8,
    maxIter=50,
    mode=SelectionMode.BEST,
    workers=1,
):
    """
    Forward selection: each round fits the current set plus one pending column, discards models with any
    p-value above `pThreshold` and accepts a column only if its model lowers the incumbent AIC. Fit failures
    count as non-significant models.

    returns a tuple of (final model, SelectionTrace)
    """
    mode = SelectionMode(mode)
    missing = [c for c in candidates if c not in X.names]
    if missing:
        raise CoxError("candidates not in design matrix: {0}".format(", ".join(missing)))

    def fitCandidate(columns, variable):
        try:
            model = fit(X.select(columns + [variable]), ties=ties, tolerance=tolerance, maxIter=maxIter)
        except CoxError as e:
            return CandidateFit(variable, failure=str(e))
        if not model.converged:
            return CandidateFit(variable, failure="no convergence")
        return CandidateFit(variable, model)

    trace = SelectionTrace()
    selected = []
    pending = list(candidates)
    incumbent = inf
    roundNumber = 0
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while True:
            if not pending:
                trace.stopReason = StopReason.PENDING_EXHAUSTED
                break
            roundNumber += 1
            columns = list(selected)
            if executor is not None:
                fits = list(executor.map(lambda v: fitCandidate(columns, v), pending))
            else:
                fits = [fitCandidate(columns, v) for v in pending]
            survivors = []
            for candidate in fits:
                if candidate.failure is not None:
                    trace.addFailure(roundNumber, candidate.variable, candidate.failure)
                elif candidate.isSignificant(pThreshold):
                    survivors.append(candidate)
            if not survivors:
                trace.stopReason = StopReason.NO_SIGNIFICANT_MODEL
                break
            if mode is SelectionMode.FIRST:
                winner = next((c for c in survivors if c.model.aic < incumbent), None)
            else:
                # min() keeps the first of equal values, i.e. declared order
                winner = min(survivors, key=lambda c: c.model.aic)
                if winner.model.aic >= incumbent:
                    winner = None
            if winner is None:
                trace.stopReason = StopReason.NO_IMPROVEMENT
                break
            incumbent = winner.model.aic
            selected.append(winner.variable)
            pending.remove(winner.variable)
            pValues = dict(zip(winner.model.names, winner.model.pValues.tolist()))
            trace.steps.append(SelectionStep(len(trace.steps) + 1, winner.variable, incumbent, pValues))
            logger.info("round %i: added %s, AIC %.4f", roundNumber, winner.variable, incumbent)
    finally:
        if executor is not None:
            executor.shutdown()

    model = fit(X.select(selected), ties=ties, tolerance=tolerance, maxIter=maxIter)
    logger.info("selected %i of %i columns (%s)", len(selected), len(candidates), trace.stopReason.value)
    return model, trace
