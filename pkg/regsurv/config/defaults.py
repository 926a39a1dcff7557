from regsurv.property import PropertyLayer


defaultConfig = PropertyLayer(
    # input files; empty means "not configured" or, for rules and standard_population, the shipped default
    deaths="",
    discharges="",
    population="",
    standard_population="",
    rules="",
    cohort="",
    output="output",
    # cohort reconstruction
    window_start_year=2007,
    window_end_year=2018,
    washout_start_year=2001,
    seed=20070101,
    missing_id_scenario="drop",
    discharge_ratio="auto",
    # rates
    by="year",
    adjust=True,
    extrapolate=False,
    # survival
    horizon=60,
    strata="insurer",
    # cox
    ties="efron",
    p_threshold=0.05,
    tolerance=1e-8,
    max_iter=50,
    selection_mode="best",
    workers=1,
).readonly()
