//! The five subcommands. Each returns its files in memory so that the
//! caller decides where (and whether) to write them.

use std::fs::File;

use paneldid::diagnostics::{placebo_test, run_diagnostics, DiagnosticsConfig, PlaceboTest};
use paneldid::did::bacon_decompose;
use paneldid::estimate::check_setting;
use paneldid::fe::twfe_att;
use paneldid::inference::{cluster_bootstrap, percentile_ci, se_guidance};
use paneldid::panel::{
    build_dataset, compute_event_structure, read_csv, recode_carryover, status_summary, write_csv, CellStatus, Cohort,
};
use paneldid::sensitivity::{breakdown_value, robust_analysis, sensitivity_curve, Breakdown, RobustCs, RobustInputs};
use paneldid::simulate::{adversarial_negative_weighting, simulate_panel};
use paneldid::{run_estimator, Method, PanelDataset};

use crate::config::RunConfig;
use crate::report::*;
use crate::{svg, CliError, Outcome, EXIT_PRECONDITION};

/// Reads the input CSV, keeps only the configured covariates and applies
/// the carryover recoding.
pub fn load(cfg: &RunConfig) -> Result<(PanelDataset, Vec<String>), CliError> {
    let path = cfg.input.as_deref().ok_or_else(|| CliError::config("no input file: set `input`"))?;
    let file = File::open(path).map_err(|e| CliError::new(crate::EXIT_IO, format!("cannot open {path}: {e}")))?;
    let ds = read_csv(file, &cfg.columns())?;
    let mut wanted = cfg.covariates.clone();
    if let Some(g) = &cfg.group_fe {
        if !wanted.contains(g) {
            wanted.push(g.clone());
        }
    }
    let have = ds.covariate_names();
    for w in &wanted {
        if !have.contains(w) {
            return Err(CliError::config(format!("covariate column {w:?} not found in {path}")));
        }
    }
    let mut ds = if wanted == have {
        ds
    } else {
        let pick: Vec<usize> = wanted.iter().map(|w| have.iter().position(|h| h == w).expect("checked")).collect();
        let records: Vec<_> = ds
            .to_records()
            .into_iter()
            .map(|mut r| {
                r.covariates = pick.iter().map(|&k| r.covariates[k]).collect();
                r
            })
            .collect();
        build_dataset(&records, &wanted)?
    };
    let mut warnings: Vec<String> = ds.calendar_gap_warning().into_iter().collect();
    if cfg.recode_carryover > 0 {
        ds = recode_carryover(&ds, cfg.recode_carryover);
        warnings.push(format!("treatment recoded as 1 for {} period(s) after each exit", cfg.recode_carryover));
    }
    Ok((ds, warnings))
}

pub fn inspect(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (ds, warnings) = load(cfg)?;
    let es = compute_event_structure(&ds);
    let summary = status_summary(&ds, &es);
    let mut cohorts: Vec<(Cohort, usize)> = Vec::new();
    for &c in es.cohorts() {
        match cohorts.iter_mut().find(|x| x.0 == c) {
            Some(x) => x.1 += 1,
            None => cohorts.push((c, 1)),
        }
    }
    cohorts.sort();
    let count = |s: CellStatus| summary.cells.iter().filter(|&&c| c == s).count();
    let result = InspectResult {
        n_units: ds.n_units(),
        n_times: ds.n_times(),
        n_clusters: ds.n_clusters(),
        setting: es.setting().name().into(),
        balanced: ds.is_balanced(),
        missing_cells: ds.missing_cells(),
        covariates: ds.covariate_names(),
        treated_cells: count(CellStatus::Treated),
        control_cells: count(CellStatus::Control),
        cohorts: cohorts
            .into_iter()
            .map(|(c, units)| CohortCount {
                cohort: match c {
                    Cohort::Adopts(g) => ds.time_ids()[g].clone(),
                    Cohort::Never => "never".into(),
                    Cohort::LeftCensored => "left-censored".into(),
                    Cohort::Unknown => "unknown".into(),
                },
                units,
            })
            .collect(),
        per_period: ds
            .time_ids()
            .iter()
            .zip(&summary.per_period)
            .map(|(t, c)| PeriodRow { time: t.clone(), counts: *c })
            .collect(),
        always_treated: summary.always_treated.clone(),
        gap_flagged: summary.gap_flagged.clone(),
        reversal_units: (0..ds.n_units()).filter(|&u| es.has_reversal(u)).map(|u| ds.unit_ids()[u].clone()).collect(),
        available_estimators: Method::ALL.into_iter().filter(|&m| check_setting(m, es.setting()).is_ok()).collect(),
        se_guidance: se_guidance(ds.n_clusters()),
        warnings: warnings.clone(),
    };
    let mut stdout = format!(
        "{} units x {} periods, setting {}, {} treated / {} control / {} missing cells\n",
        result.n_units, result.n_times, result.setting, result.treated_cells, result.control_cells, result.missing_cells
    );
    if !result.always_treated.is_empty() {
        stdout.push_str(&format!("always-treated units: {}\n", result.always_treated.join(", ")));
    }
    Ok(Outcome {
        files: vec![
            ("inspect.json".into(), render("inspect", cfg, &result)),
            ("treatment.svg".into(), svg::treatment_pattern(&summary, ds.unit_ids(), ds.time_ids()).into_bytes()),
        ],
        stdout,
        warnings,
    })
}

fn estimate_row(
    ds: &PanelDataset,
    method: Method,
    cfg: &RunConfig,
) -> Result<(EstimateRow, Option<paneldid::EffectEstimates>), CliError> {
    let ecfg = cfg.estimator_config();
    let est = match run_estimator(ds, method, &ecfg) {
        Ok(e) => e,
        Err(e) if e.is_hard_failure() || e.is_schema() => return Err(e.into()),
        Err(e) => return Ok((EstimateRow::empty(method, RowStatus::Failed, e.to_string()), None)),
    };
    let ls = est.periods();
    let level = 1.0 - cfg.alpha;
    let boot =
        cluster_bootstrap(ds, |b| run_estimator(b, method, &ecfg).map(|e| e.statistic_vector(&ls)), cfg.bootstrap_reps, cfg.seed);
    let mut warnings = est.warnings.clone();
    let (ses, cis, summary) = match boot {
        Ok(d) => (d.standard_errors(), percentile_ci(&d, level), Some(BootstrapSummary::from(&d))),
        Err(e) => {
            warnings.push(format!("bootstrap unavailable: {e}"));
            (vec![f64::NAN; ls.len() + 1], vec![None; ls.len() + 1], None)
        }
    };
    let finite = |x: f64| x.is_finite().then_some(x);
    let analytic_se = if method == Method::Twfe { twfe_att(ds).ok().and_then(|t| finite(t.se)) } else { None };
    let row = EstimateRow {
        method,
        estimand: method.estimand(),
        status: RowStatus::Ok,
        att: Some(est.att),
        se: finite(ses[0]),
        ci: cis[0],
        analytic_se,
        n_treated_cells: Some(est.n_treated_cells),
        dynamic: est
            .dynamic
            .iter()
            .enumerate()
            .map(|(j, d)| DynamicRow {
                l: d.l,
                estimate: d.estimate,
                se: finite(ses[j + 1]),
                ci: cis[j + 1],
                n_cells: d.n_cells,
                low_support: d.low_support,
            })
            .collect(),
        bootstrap: summary,
        warnings,
        error: None,
    };
    Ok((row, Some(est)))
}

pub fn estimate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (ds, warnings) = load(cfg)?;
    let setting = compute_event_structure(&ds).setting();
    let (methods, explicit) = cfg.methods().map_err(CliError::config)?;
    let mut notes = Vec::new();
    let mut rows = Vec::new();
    let mut files = Vec::new();
    for method in methods {
        if let Err(e) = check_setting(method, setting) {
            if explicit {
                return Err(CliError::new(EXIT_PRECONDITION, e.to_string()));
            }
            notes.push(format!("{method} skipped: not defined in the {setting} setting"));
            rows.push(EstimateRow::empty(method, RowStatus::Skipped, format!("not defined in the {setting} setting")));
            continue;
        }
        let (row, est) = estimate_row(&ds, method, cfg)?;
        if let Some(est) = est {
            let cis: Vec<Option<(f64, f64)>> = row.dynamic.iter().map(|d| d.ci).collect();
            let table = paneldid::diagnostics::event_study_table(&est, &cis);
            let title = format!("Event study: {method}");
            files.push((format!("event_study_{method}.svg"), svg::event_study(&title, &table, &[]).into_bytes()));
        }
        rows.push(row);
    }
    if !rows.iter().any(|r| r.status == RowStatus::Ok) {
        let why: Vec<String> = rows.iter().filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.method))).collect();
        return Err(CliError::new(EXIT_PRECONDITION, format!("no estimator succeeded ({})", why.join("; "))));
    }
    let bacon = if setting.has_reversal() {
        None
    } else {
        match bacon_decompose(&ds) {
            Ok(b) => Some(b),
            Err(e) => {
                notes.push(format!("Goodman-Bacon decomposition unavailable: {e}"));
                None
            }
        }
    };
    let result = EstimateResult {
        setting: setting.name().into(),
        n_units: ds.n_units(),
        n_times: ds.n_times(),
        n_clusters: ds.n_clusters(),
        confidence_level: 1.0 - cfg.alpha,
        se_guidance: se_guidance(ds.n_clusters()),
        rows,
        bacon,
        notes,
    };
    let stdout = estimate_table(&result);
    files.insert(0, ("estimates.json".into(), render("estimate", cfg, &result)));
    Ok(Outcome { files, stdout, warnings })
}

fn placebo_summary(p: &PlaceboTest) -> PlaceboSummary {
    PlaceboSummary {
        estimate: p.estimate.clone(),
        delta_se: p.delta_se.clone(),
        att_se: p.att_se,
        joint: p.joint,
        bootstrap: BootstrapSummary::from(&p.draws),
    }
}

pub fn diagnose(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (ds, warnings) = load(cfg)?;
    let setting = compute_event_structure(&ds).setting();
    let dcfg = DiagnosticsConfig {
        spec: cfg.imputation_spec(),
        placebo_periods: cfg.placebo_periods.clone(),
        carryover_periods: cfg.carryover_periods,
        replicates: cfg.bootstrap_reps,
        seed: cfg.seed,
        level: 1.0 - cfg.alpha,
        alpha: cfg.alpha,
        min_support: cfg.min_support,
    };
    let r = run_diagnostics(&ds, &dcfg)?;
    let holdout: Vec<i64> = r.placebo.as_ref().map(|p| p.estimate.periods.clone()).unwrap_or_default();
    let figure = svg::event_study("Imputation event study (placebo holdout marked)", &r.event_study, &holdout);
    let result = DiagnoseResult {
        setting: setting.name().into(),
        estimates: r.estimates,
        event_study: r.event_study,
        f_test: r.f_test,
        placebo: r.placebo.as_ref().map(placebo_summary),
        carryover: r.carryover.as_ref().map(|c| CarryoverSummary {
            estimate: c.estimate.clone(),
            se: c.se.clone(),
            joint: c.joint,
            bootstrap: BootstrapSummary::from(&c.draws),
        }),
        pt_suspect: r.pt_suspect,
        carryover_suspect: r.carryover_suspect,
        notes: r.notes,
    };
    let p = |x: Option<f64>| x.map_or_else(|| "skipped".into(), |v| format!("p = {v:.4}"));
    let mut stdout = String::new();
    stdout.push_str(&format!("pretrend F test: {}\n", p(result.f_test.as_ref().map(|f| f.test.p_value))));
    stdout.push_str(&format!("placebo test:    {}\n", p(result.placebo.as_ref().map(|x| x.joint.p_value))));
    stdout.push_str(&format!("carryover test:  {}\n", p(result.carryover.as_ref().map(|x| x.joint.p_value))));
    stdout
        .push_str(&format!("parallel trends suspect: {}\ncarryover suspect: {}\n", result.pt_suspect, result.carryover_suspect));
    Ok(Outcome {
        files: vec![
            ("diagnostics.json".into(), render("diagnose", cfg, &result)),
            ("diagnostics.svg".into(), figure.into_bytes()),
        ],
        stdout,
        warnings,
    })
}

/// Robust set from the `cs-*` keys: the SE refers to `target - delta0`.
fn analysis_from_inputs(cfg: &RunConfig) -> Result<Option<RobustCs>, CliError> {
    let vals = [cfg.cs_target, cfg.cs_delta0, cfg.cs_violation, cfg.cs_se, cfg.cs_horizon];
    if vals.iter().all(Option::is_none) {
        return Ok(None);
    }
    let [Some(target), Some(delta0), Some(violation), Some(se), Some(horizon)] = vals else {
        return Err(CliError::config("cs-target, cs-delta0, cs-violation, cs-se and cs-horizon must be given together"));
    };
    if [se, violation, horizon].iter().any(|v| v.is_nan()) || se < 0.0 || violation < 0.0 || horizon <= 0.0 {
        return Err(CliError::config("cs-se and cs-violation must be nonnegative and cs-horizon positive"));
    }
    let vcov = nalgebra::DMatrix::from_row_slice(2, 2, &[se * se, 0.0, 0.0, 0.0]);
    let inputs = RobustInputs::new(target, delta0, violation, Some(&vcov), cfg.alpha, horizon)?;
    Ok(Some(RobustCs {
        label: "conservative robust CS".into(),
        target: "user-supplied estimate".into(),
        placebo_periods: Vec::new(),
        placebo_estimates: Vec::new(),
        intervals: sensitivity_curve(&inputs, &cfg.mbar_grid)?,
        breakdown: breakdown_value(&inputs),
        inputs,
        mbar_grid: cfg.mbar_grid.clone(),
        per_period: Vec::new(),
        caveats: vec!["inputs supplied directly; no placebo bootstrap was run".into()],
    }))
}

pub fn sensitivity(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (result, warnings) = match analysis_from_inputs(cfg)? {
        Some(analysis) => (SensitivityResult { source: "inputs", analysis, placebo: None }, Vec::new()),
        None => {
            let (ds, warnings) = load(cfg)?;
            let p = placebo_test(&ds, &cfg.placebo_periods, &cfg.imputation_spec(), cfg.bootstrap_reps, cfg.seed)?;
            let analysis = robust_analysis(&p, &cfg.mbar_grid, cfg.alpha)?;
            (SensitivityResult { source: "placebo-bootstrap", analysis, placebo: Some(placebo_summary(&p)) }, warnings)
        }
    };
    let a = &result.analysis;
    let marker = match a.breakdown {
        Breakdown::Value { mbar, .. } if mbar > 0.0 => Some(mbar),
        _ => None,
    };
    let mut stdout = format!("target {} = {:.4}, delta_0 = {:.4}\n", a.target, a.inputs.target, a.inputs.delta0);
    for cs in &a.intervals {
        stdout.push_str(&format!("M = {:<6} [{:.4}, {:.4}]\n", cs.mbar, cs.lower, cs.upper));
    }
    stdout.push_str(&match &a.breakdown {
        Breakdown::Value { mbar, .. } => format!("breakdown value: {mbar:.4}\n"),
        Breakdown::Unbounded => "breakdown value: none (no placebo violation to scale)\n".into(),
    });
    let figure = svg::sensitivity_curve(&format!("Robust confidence sets: {}", a.target), &a.intervals, marker);
    Ok(Outcome {
        files: vec![
            ("sensitivity.json".into(), render("sensitivity", cfg, &result)),
            ("sensitivity.svg".into(), figure.into_bytes()),
        ],
        stdout,
        warnings,
    })
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let panel = match cfg.sim_preset.as_str() {
        "none" => simulate_panel(&cfg.dgp().map_err(CliError::config)?)?,
        "adversarial" => adversarial_negative_weighting(),
        other => return Err(CliError::config(format!("sim-preset: unknown preset {other:?}"))),
    };
    let ds = &panel.dataset;
    let mut csv = Vec::new();
    write_csv(ds, &mut csv)?;
    let t = ds.n_times();
    let cells = (0..ds.n_cells())
        .map(|k| TruthCellRow {
            unit: ds.unit_ids()[k / t].clone(),
            time: ds.time_ids()[k % t].clone(),
            treated: ds.treatment_grid()[k] == Some(true),
            y0: panel.y0[k],
            y1: panel.y1[k],
            tau: panel.tau[k],
        })
        .collect();
    let result = SimulateResult {
        preset: cfg.sim_preset.clone(),
        setting: compute_event_structure(ds).setting().name().into(),
        truth: panel.truth.clone(),
        cells,
    };
    let stdout = format!("{} units x {} periods, true ATT {:.6}\n", ds.n_units(), t, result.truth.att);
    Ok(Outcome {
        files: vec![("panel.csv".into(), csv), ("truth.json".into(), render("simulate", cfg, &result))],
        stdout,
        warnings: Vec::new(),
    })
}
