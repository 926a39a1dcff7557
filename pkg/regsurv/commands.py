from abc import ABC, abstractmethod
from regsurv.config import RunConfig
from regsurv.config.error import ConfigError
from regsurv.rules import CodeRuleSet
from regsurv.cohort import CohortBuilder, MissingIdScenario, build_insurer_index, select_study_deaths, select_orphan_deaths
from regsurv.rates import PopulationTable, StandardPopulation, stratified_rates, missing_id_rows, descriptive_by_year
from regsurv.survival import build_event_table, survival_subjects, kaplan_meier, log_rank_test
from regsurv.cox import CovariateSpec, CovariateProfile, ProfileDefaults, encode, fit, hazard_ratio, predict_survival
from regsurv.selection import greedy_select
from regsurv.synthetic import SyntheticSpec, generate_synthetic
from regsurv import storage
import os

import logging

logger = logging.getLogger(__name__)


class Command(ABC):
    @abstractmethod
    def run(self, config: RunConfig, args):
        pass


class CohortCommand(Command, ABC):
    """
    commands working on a built cohort: an existing cohort file is reused, otherwise the cohort is
    built from the registries (and written) first
    """

    def loadRules(self, config: RunConfig):
        return CodeRuleSet.load(config.optionalPath("rules"))

    def loadRegistries(self, config: RunConfig):
        config.requirePaths("deaths", "discharges")
        deaths, rejectedDeaths = storage.read_deaths(config["deaths"])
        discharges, rejectedDischarges = storage.read_discharges(config["discharges"])
        return deaths, discharges, rejectedDeaths, rejectedDischarges

    def buildCohort(self, config: RunConfig, deaths, discharges, rejectedDeaths=0, rejectedDischarges=0):
        builder = CohortBuilder(self.loadRules(config), config.cohortConfig())
        timelines, accounting = builder.build(deaths, discharges, rejectedDeaths, rejectedDischarges)
        config.getOutputDirectory()
        storage.write_cohort(config.getCohortFile(), timelines)
        storage.write_accounting(config.getAccountingFile(), accounting)
        return timelines, accounting

    def loadCohort(self, config: RunConfig):
        cohortFile = config.getCohortFile()
        accountingFile = config.getAccountingFile()
        if os.path.isfile(cohortFile) and os.path.isfile(accountingFile):
            logger.info("reusing cohort from %s", cohortFile)
            return storage.read_cohort(cohortFile), storage.read_accounting(accountingFile)
        if config["cohort"]:
            raise ConfigError("cohort", "{0} or its accounting report doesn't exist".format(cohortFile))
        return self.buildCohort(config, *self.loadRegistries(config))


class BuildCohort(CohortCommand):
    def run(self, config: RunConfig, args):
        timelines, accounting = self.buildCohort(config, *self.loadRegistries(config))
        print(
            "Cohort written to {0} ({1} patients, {2} imputed).".format(
                config.getCohortFile(), len(timelines), accounting["imputed_included"]
            )
        )
        for step in accounting.steps:
            print(
                "  {flow:<11} {name:<22} in {i:>8}  added {a:>6}  removed {r:>8}  out {o:>8}".format(
                    flow=step.flow, name=step.name, i=step.inCount, a=step.added, r=step.removed, o=step.outCount
                )
            )
        if not accounting.isBalanced():
            logger.error("cohort accounting does not balance")


class Rates(CohortCommand):
    def run(self, config: RunConfig, args):
        config.requirePaths("deaths", "discharges", "population")
        cohortConfig = config.cohortConfig()
        deaths, discharges, rejectedDeaths, rejectedDischarges = self.loadRegistries(config)
        if os.path.isfile(config.getCohortFile()) and os.path.isfile(config.getAccountingFile()):
            cohort, accounting = self.loadCohort(config)
        else:
            cohort, accounting = self.buildCohort(config, deaths, discharges, rejectedDeaths, rejectedDischarges)

        population = PopulationTable.load(config["population"])
        if config["extrapolate"]:
            population = population.extrapolated(cohortConfig.getYears())
        standard = StandardPopulation.load(config.optionalPath("standard_population"))
        studyDeaths = select_study_deaths(deaths, self.loadRules(config), cohortConfig)

        rates = stratified_rates(
            cohort,
            studyDeaths,
            population,
            standard,
            by=config["by"],
            adjust=config["adjust"],
            years=cohortConfig.getYears(),
            insurers=build_insurer_index(discharges),
        )
        output = os.path.join(config.getOutputDirectory(), "rates_{0}.csv".format(config["by"]))
        storage.write_csv(output, rates.getFields(), rates.toRows())
        print("Rates by {0} written to {1}".format(config["by"], output))

        orphans = select_orphan_deaths(deaths, discharges, self.loadRules(config), cohortConfig)
        description = descriptive_by_year(cohort, studyDeaths, orphans, cohortConfig.getYears())
        output = os.path.join(config.getOutputDirectory(), "descriptive_by_year.csv")
        storage.write_csv(output, description.fields, description.toRows())
        print("Deaths and new cases by year written to {0}".format(output))

        scenario = cohortConfig.missingIdScenario
        if scenario is not MissingIdScenario.DROP:
            ratio = cohortConfig.dischargeRatio if cohortConfig.dischargeRatio is not None else accounting.dischargesPerPatient
            if scenario is MissingIdScenario.LIKELY and ratio is None:
                raise ConfigError("discharge_ratio", "cannot derive a discharges-per-patient ratio from an empty cohort")
            rows = missing_id_rows(cohort, accounting.missingIdByYear, scenario, ratio, population, cohortConfig.getYears())
            output = os.path.join(config.getOutputDirectory(), "missing_id_{0}.csv".format(scenario.value))
            storage.write_csv(output, list(rows[0].keys()) if rows else ["year"], rows)
            print("Missing-id scenario {0} written to {1}".format(scenario.value, output))


class KaplanMeier(CohortCommand):
    stratifiers = {
        "all": lambda t: "all",
        "insurer": lambda t: t.insurer.kind.value if t.insurer.isKnown() else None,
        "segment": lambda t: str(t.insurer) if t.insurer.segment is not None else None,
        "metropolitan": lambda t: "RM" if t.region.value == "RM" else "other",
        "region": lambda t: t.region.value,
    }

    summaryFields = ["group", "subjects", "deaths", "s12", "ci12", "s60", "ci60", "median"]

    def run(self, config: RunConfig, args):
        cohort, _ = self.loadCohort(config)
        subjects = survival_subjects(cohort)
        logger.info("%i of %i timelines enter the survival analysis", len(subjects), len(cohort))
        horizon = config["horizon"]
        stratifier = KaplanMeier.stratifiers[config["strata"]]
        groups = {}
        for timeline in subjects:
            label = stratifier(timeline)
            if label is not None:
                groups.setdefault(label, []).append(timeline)

        directory = config.getOutputDirectory()
        tables = {}
        summary = []
        for label in sorted(groups):
            table = build_event_table(groups[label], horizon)
            curve = kaplan_meier(table)
            tables[label] = table
            storage.write_csv(os.path.join(directory, "events_{0}.csv".format(label)), table.fields, table.toRows())
            storage.write_csv(os.path.join(directory, "km_{0}.csv".format(label)), curve.fields, curve.toRows())
            row = {"group": label, "subjects": table.getSize(), "deaths": table.getDeaths(), "median": curve.median()}
            for month in [12, 60]:
                if month <= horizon:
                    point = curve.point(month)
                    row["s{0}".format(month)] = "{0:.3f}".format(point.survival)
                    row["ci{0}".format(month)] = "{0:.3f}".format(point.getHalfWidth())
            summary.append(row)
            print(
                "{0}: {1} subjects, S(12) = {2}, S(60) = {3}".format(
                    label, table.getSize(), row.get("s12", "-"), row.get("s60", "-")
                )
            )
        storage.write_csv(os.path.join(directory, "km_summary.csv"), KaplanMeier.summaryFields, summary)

        if len(tables) >= 2:
            result = log_rank_test([tables[label] for label in sorted(tables)])
            storage.write_json(os.path.join(directory, "logrank.json"), dict(result.toJson(), groups=sorted(tables)))
            print("log-rank: chi2 = {0:.3f}, dof = {1}, p = {2:.3g}".format(result.chiSquare, result.dof, result.pValue))


class Cox(CohortCommand):
    profileFields = ["profile", "s12", "s60", "extended"]

    def run(self, config: RunConfig, args):
        cohort, _ = self.loadCohort(config)
        subjects = [t for t in survival_subjects(cohort) if t.insurer.isKnown()]
        if len(subjects) < len(survival_subjects(cohort)):
            logger.warning("%i subjects without insurer left out of the model", len(survival_subjects(cohort)) - len(subjects))
        X = encode(subjects, CovariateSpec())
        directory = config.getOutputDirectory()
        options = {"ties": config["ties"], "tolerance": config["tolerance"], "maxIter": config["max_iter"]}

        if args.select:
            model, trace = greedy_select(
                X,
                X.names,
                pThreshold=config["p_threshold"],
                mode=config["selection_mode"],
                workers=config["workers"],
                **options,
            )
            storage.write_csv(os.path.join(directory, "selection_trace.csv"), trace.fields, trace.toRows())
            storage.write_json(os.path.join(directory, "selection.json"), trace.toJson())
            selected = trace.finalVariables
            print("Selected {0} of {1} columns: {2}".format(len(selected), len(X.names), ", ".join(selected)))
        else:
            columns = args.columns.split(",") if args.columns else self.defaultColumns(X)
            model = fit(X.select(columns), **options)
        model.defaults = ProfileDefaults.fromTimelines(subjects)

        storage.write_json(os.path.join(directory, "cox_model.json"), model.toJson())
        coefficientFields = ["variable", "coefficient", "ci_half_width", "hazard_ratio", "p_value"]
        storage.write_csv(os.path.join(directory, "cox_coefficients.csv"), coefficientFields, model.coefficientRows())
        storage.write_csv(os.path.join(directory, "cox_baseline.csv"), ["month", "H0"], model.baselineRows())
        print(
            "Cox model: {0} columns, log PL = {1:.3f}, AIC = {2:.3f}, converged: {3}".format(
                len(model.names), model.logPartialLikelihood, model.aic, model.converged
            )
        )

        for source, target in args.hazard_ratio or []:
            ratio = hazard_ratio(model, CovariateProfile.parse(source), CovariateProfile.parse(target))
            print("hazard ratio {0} -> {1}: {2:.3f}".format(source, target, ratio))

        horizon = config["horizon"]
        summary = []
        for index, text in enumerate(args.profile or [], start=1):
            profile = CovariateProfile.parse(text)
            curve = predict_survival(model, profile, horizon)
            storage.write_csv(os.path.join(directory, "cox_survival_{0}.csv".format(index)), curve.fields, curve.toRows())
            row = {"profile": str(profile), "extended": int(curve.extended)}
            for month in [12, 60]:
                if month <= horizon:
                    row["s{0}".format(month)] = "{0:.3f}".format(curve.at(month))
            summary.append(row)
            print("{0}: S(12) = {1}, S(60) = {2}".format(profile, row.get("s12", "-"), row.get("s60", "-")))
        if summary:
            storage.write_csv(os.path.join(directory, "cox_profiles.csv"), Cox.profileFields, summary)

    def defaultColumns(self, X):
        """
        every column that varies, minus one reference level per dummy group
        """
        columns = [n for n in X.names if n not in CovariateSpec.referenceColumns]
        constant = [n for n in columns if X.column(n).min() == X.column(n).max()]
        if constant:
            logger.info("leaving out constant columns: %s", ", ".join(constant))
        return [n for n in columns if n not in constant]


class Simulate(Command):
    def run(self, config: RunConfig, args):
        if args.spec:
            spec = SyntheticSpec.load(args.spec)
        else:
            settings = {
                "n_patients": args.patients,
                "window_start_year": config["window_start_year"],
                "window_end_year": config["window_end_year"],
                "washout_start_year": config["washout_start_year"],
            }
            spec = SyntheticSpec.noiseless(**settings) if args.clean else SyntheticSpec(**settings)
        registry = generate_synthetic(spec, config["seed"])
        paths = registry.write(config.getOutputDirectory())
        print("Synthetic registries with {0} cohort patients written:".format(len(registry.truth["cohort"])))
        for name in sorted(paths):
            print("  {0}: {1}".format(name, paths[name]))
