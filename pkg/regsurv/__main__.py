from regsurv.version import regsurv_version
from regsurv.commands import BuildCohort, Rates, KaplanMeier, Cox, Simulate
from regsurv.config import RunConfig
from regsurv.config.error import ConfigError
from regsurv.property import PropertyError
from regsurv.registry import RegistryError
from regsurv.rules import RuleSetError
from regsurv.rates import RateError
from regsurv.survival import SurvivalError
from regsurv.cox import CoxError, ProfileError, EncodingError
import argparse
import sys
import traceback
import logging

logger = logging.getLogger(__name__)

EXIT_VALIDATION = 1
EXIT_COMPUTATION = 2

# argparse destinations that are configuration keys
overrideKeys = [
    "deaths",
    "discharges",
    "population",
    "standard_population",
    "rules",
    "cohort",
    "output",
    "seed",
    "window_start_year",
    "window_end_year",
    "washout_start_year",
    "missing_id_scenario",
    "discharge_ratio",
    "by",
    "adjust",
    "extrapolate",
    "horizon",
    "strata",
    "ties",
    "p_threshold",
    "tolerance",
    "max_iter",
    "selection_mode",
    "workers",
]


def ratio(value):
    if value == "auto":
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError('expected a number or "auto", got "{0}"'.format(value))


def addRegistryArguments(parser):
    parser.add_argument("--deaths", help="Death registry (CSV)")
    parser.add_argument("--discharges", help="Hospital discharge registry (CSV)")
    parser.add_argument("--rules", help="Diagnosis rule set (defaults to the shipped code lists)")
    parser.add_argument("--cohort", help="Cohort file to read or write (default: <output>/cohort.csv)")
    parser.add_argument("--window-start-year", dest="window_start_year", type=int, help="First year of the study window")
    parser.add_argument("--window-end-year", dest="window_end_year", type=int, help="Last year of the study window")
    parser.add_argument(
        "--washout-start-year", dest="washout_start_year", type=int, help="First year covered by the discharge registry"
    )


def buildParser():
    parser = argparse.ArgumentParser(prog="regsurv", description="Breast cancer registry analytics")
    parser.add_argument("-v", "--version", action="store_true", help="Show the software version")
    parser.add_argument("-c", "--config", help="Configuration file (INI)")
    parser.add_argument("-o", "--output", help="Output directory")
    parser.add_argument("--seed", type=int, help="Seed of every random draw")
    parser.add_argument("--verbose", action="store_true", help="Log debugging information")
    parser.add_argument("--quiet", action="store_true", help="Log warnings and errors only")
    parser.add_argument("--debug-traceback", dest="debug_traceback", action="store_true", help="Print tracebacks on errors")
    subparsers = parser.add_subparsers(title="Commands", dest="command")

    build_parser = subparsers.add_parser("build-cohort", help="Reconstruct the incident cohort from the registries")
    addRegistryArguments(build_parser)
    build_parser.set_defaults(cls=BuildCohort)

    rates_parser = subparsers.add_parser("rates", help="Incidence, mortality and case fatality rates")
    addRegistryArguments(rates_parser)
    rates_parser.add_argument("--population", help="Population table (CSV)")
    rates_parser.add_argument("--standard-population", dest="standard_population", help="Standard population weights (CSV)")
    rates_parser.add_argument("--by", choices=["year", "region", "insurer", "age_band"], help="Stratification")
    rates_parser.add_argument("--no-adjust", dest="adjust", action="store_const", const=False, help="Skip age standardization")
    rates_parser.add_argument(
        "--extrapolate", action="store_const", const=True, help="Complete missing population years by linear regression"
    )
    rates_parser.add_argument(
        "--missing-id-scenario",
        dest="missing_id_scenario",
        choices=["drop", "worst_case", "likely"],
        help="Add discharges without id back to the incidence counts",
    )
    rates_parser.add_argument("--ratio", dest="discharge_ratio", type=ratio, help='Discharges per patient, or "auto"')
    rates_parser.set_defaults(cls=Rates)

    km_parser = subparsers.add_parser("km", help="Kaplan-Meier curves and the log-rank test")
    addRegistryArguments(km_parser)
    km_parser.add_argument("--strata", choices=sorted(KaplanMeier.stratifiers), help="Grouping of the curves")
    km_parser.add_argument("--horizon", type=int, help="Follow-up in months")
    km_parser.set_defaults(cls=KaplanMeier)

    cox_parser = subparsers.add_parser("cox", help="Cox proportional hazards model")
    addRegistryArguments(cox_parser)
    cox_parser.add_argument("--select", action="store_true", help="Greedy forward selection by AIC")
    cox_parser.add_argument("--columns", help="Comma-separated design columns to fit without selection")
    cox_parser.add_argument("--ties", choices=["efron", "breslow"], help="Tie handling")
    cox_parser.add_argument("--p-threshold", dest="p_threshold", type=float, help="Significance level during selection")
    cox_parser.add_argument("--tolerance", type=float, help="Gradient tolerance of the Newton iteration")
    cox_parser.add_argument("--max-iter", dest="max_iter", type=int, help="Newton iteration limit")
    cox_parser.add_argument("--selection-mode", dest="selection_mode", choices=["best", "first"], help="Candidate acceptance")
    cox_parser.add_argument("--workers", type=int, help="Concurrent candidate fits")
    cox_parser.add_argument("--horizon", type=int, help="Months of predicted survival")
    cox_parser.add_argument(
        "--profile", action="append", help='Covariate profile for predicted survival, e.g. "age=60,insurer=ISAPRE"'
    )
    cox_parser.add_argument(
        "--hazard-ratio", dest="hazard_ratio", nargs=2, action="append", metavar=("FROM", "TO"), help="Compare two profiles"
    )
    cox_parser.set_defaults(cls=Cox)

    simulate_parser = subparsers.add_parser("simulate", help="Write synthetic registries with known ground truth")
    simulate_parser.add_argument("--patients", type=int, default=2000, help="Number of regular patients")
    simulate_parser.add_argument("--spec", help="Generator settings (JSON)")
    simulate_parser.add_argument("--clean", action="store_true", help="Leave out every data problem")
    simulate_parser.add_argument("--window-start-year", dest="window_start_year", type=int, help="First year of the study window")
    simulate_parser.add_argument("--window-end-year", dest="window_end_year", type=int, help="Last year of the study window")
    simulate_parser.set_defaults(cls=Simulate)

    return parser


def main(argv=None):
    parser = buildParser()
    args = parser.parse_args(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    if args.version:
        print("regsurv version {version}".format(version=regsurv_version))
        sys.exit(0)

    if not hasattr(args, "cls"):
        parser.print_help()
        sys.exit(EXIT_VALIDATION)

    try:
        overrides = {key: getattr(args, key, None) for key in overrideKeys}
        config = RunConfig(args.config, overrides)
        for key, setting in config.describe().items():
            logger.debug("%s = %r (%s)", key, setting["value"], setting["source"])
        args.cls().run(config, args)
    except (ConfigError, PropertyError, RegistryError, RuleSetError, ProfileError, EncodingError, OSError) as e:
        logger.error("%s", e)
        if args.debug_traceback:
            traceback.print_exc()
        sys.exit(EXIT_VALIDATION)
    except (RateError, SurvivalError, CoxError) as e:
        logger.error("%s", e)
        if args.debug_traceback:
            traceback.print_exc()
        sys.exit(EXIT_COMPUTATION)
    sys.exit(0)


if __name__ == "__main__":
    main()
