//! Subcommand implementations. Every run re-derives what it needs from
//! the input tables, writes its artifacts with fixed-precision cells,
//! and leaves a manifest with content hashes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cces_core as core;
use cces_core::{
    CalibratedEconomy, EquilibriumState, LinkedIoTables, OrderPeriod, SolveOptions, SystemVariant,
};
use serde_json::json;

use crate::artifacts::{csv_table, sig, write_json, write_text, Manifest};
use crate::config::{resolve, resolve_opt, FileConfig};
use crate::{
    CalibrateArgs, CliError, ElasticitiesArgs, GenerateArgs, HouseholdArgs, OrderArgs,
    PipelineArgs, ShockArgs, SolveArgs,
};

const TABLE_FILES: [&str; 7] = [
    "flows_t0.csv",
    "flows_t1.csv",
    "primary_t0.csv",
    "primary_t1.csv",
    "final_t0.csv",
    "final_t1.csv",
    "factors.csv",
];

fn table_paths(dir: &Path) -> Vec<PathBuf> {
    TABLE_FILES.iter().map(|f| dir.join(f)).collect()
}

fn parse_order_period(text: Option<&str>) -> Result<OrderPeriod, CliError> {
    match text.unwrap_or("t0") {
        "0" | "t0" => Ok(OrderPeriod::T0),
        "1" | "t1" => Ok(OrderPeriod::T1),
        "union" => Ok(OrderPeriod::Union),
        other => Err(CliError::Validation(format!(
            "unknown incidence period '{other}' (expected t0, t1, or union)"
        ))),
    }
}

fn load_input(dir: &Path, balance_tol: Option<f64>) -> Result<LinkedIoTables, CliError> {
    let opts = core::ValidationOptions {
        hard_tol: balance_tol.unwrap_or(core::iot::BALANCE_HARD_TOL),
        warn_tol: core::iot::BALANCE_WARN_TOL,
    };
    let (tables, warnings) = core::load_tables_with(dir, &opts)?;
    for w in warnings {
        eprintln!(
            "warning: {} balance residual {:.3e} at index {} (t={})",
            w.balance, w.residual, w.index, w.period
        );
    }
    Ok(tables)
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

pub fn cmd_generate(args: &GenerateArgs, file: &FileConfig) -> Result<(), CliError> {
    let mut config = core::GeneratorConfig::new(
        resolve(args.n, file.generate.n, 10),
        resolve(args.seed, file.generate.seed, 0),
    );
    config.density = resolve(args.density, file.generate.density, 1.0);
    config.lambda = resolve(args.lambda, file.generate.lambda, config.lambda);
    config.beta = resolve(args.beta, file.generate.beta, config.beta);
    config.delta = resolve(args.delta, file.generate.delta, config.delta);
    if !(0.0..=1.0).contains(&config.density) {
        return Err(CliError::Validation("density must lie in [0,1]".into()));
    }

    let economy = core::generate_synthetic_economy(&config)?;
    let written = core::save_tables(&economy.tables, &args.out)?;

    let mut manifest = Manifest::new(
        "generate",
        json!({
            "n": config.n_sectors,
            "seed": config.seed,
            "density": config.density,
            "lambda": config.lambda,
            "beta": config.beta,
            "delta": config.delta,
        }),
    );
    for path in written {
        manifest.record_output(path);
    }
    manifest.write(&args.out, None)?;
    println!(
        "generated {}-sector economy (seed {}) into {}",
        config.n_sectors,
        config.seed,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// order
// ---------------------------------------------------------------------------

pub fn cmd_order(args: &OrderArgs, file: &FileConfig) -> Result<(), CliError> {
    let period = parse_order_period(
        args.period
            .as_deref()
            .or(file.order.period.as_deref()),
    )?;
    let tables = load_input(&args.input, None)?;
    let incidence = core::build_incidence_for(&tables, period)?;
    let order = core::derive_stream_order(&incidence)?;

    let stream_csv = csv_table("rank,sector_id,ratio,ranking_index", |out| {
        for (pos, &sector) in order.permutation.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                pos + 1,
                sector,
                sig(order.ratios[pos]),
                sig(order.ranking_index[pos])
            );
        }
    });
    let ccdf_csv = csv_table("ratio,ranking_index", |out| {
        for (ratio, idx) in core::ccdf_export(&order) {
            let _ = writeln!(out, "{},{}", sig(ratio), sig(idx));
        }
    });

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
    let stream_path = args.out.join("stream_order.csv");
    let ccdf_path = args.out.join("ccdf.csv");
    write_text(&stream_path, &stream_csv)?;
    write_text(&ccdf_path, &ccdf_csv)?;

    let mut manifest = Manifest::new("order", json!({ "period": format!("{period:?}") }));
    manifest.record_inputs(table_paths(&args.input));
    manifest.record_output(stream_path);
    manifest.record_output(ccdf_path);
    manifest.write(&args.out, None)?;

    println!(
        "stream order over {} sectors; {} triangularity violations in the direct incidence",
        tables.n_sectors, order.triangularity_violations
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

fn calibrate(args_input: &Path, order_period: OrderPeriod, balance_tol: Option<f64>)
    -> Result<(LinkedIoTables, CalibratedEconomy), CliError>
{
    let tables = load_input(args_input, balance_tol)?;
    let calibrated = core::calibrate_economy(&tables, order_period)?;
    for trace in &calibrated.traces {
        for flag in &trace.flags {
            if let core::CalibrationFlag::GammaClamped { nest, raw_gamma } = flag {
                eprintln!(
                    "warning: sector {} nest {nest}: gamma estimate {raw_gamma:.6} clamped below 1",
                    trace.sector_id
                );
            }
        }
    }
    Ok((tables, calibrated))
}

fn write_calibration_artifacts(
    out: &Path,
    calibrated: &CalibratedEconomy,
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    let tech_path = out.join("technology.json");
    write_json(&tech_path, &calibrated.model)?;
    manifest.record_output(tech_path);

    let tfp_csv = csv_table("sector,tfpg_cces,tfpg_tornqvist", |buf| {
        for record in &calibrated.tfp {
            let _ = writeln!(
                buf,
                "{},{},{}",
                record.sector_id,
                sig(record.tfpg_cces),
                sig(record.tfpg_tornqvist)
            );
        }
    });
    let tfp_path = out.join("tfp.csv");
    write_text(&tfp_path, &tfp_csv)?;
    manifest.record_output(tfp_path);
    Ok(())
}

pub fn cmd_calibrate(args: &CalibrateArgs, file: &FileConfig) -> Result<(), CliError> {
    let period = parse_order_period(
        args.order_period
            .as_deref()
            .or(file.calibrate.order_period.as_deref()),
    )?;
    let balance_tol = resolve_opt(args.balance_tol, file.calibrate.balance_tol);
    let (_, calibrated) = calibrate(&args.input, period, balance_tol)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
    let mut manifest = Manifest::new(
        "calibrate",
        json!({ "order_period": format!("{period:?}"), "balance_tol": balance_tol }),
    );
    manifest.record_inputs(table_paths(&args.input));
    write_calibration_artifacts(&args.out, &calibrated, &mut manifest)?;
    manifest.write(&args.out, None)?;
    println!(
        "calibrated {} sectors; worst restoration error {:.2e}",
        calibrated.model.n_sectors(),
        calibrated
            .traces
            .iter()
            .map(|t| t.restored_share_error)
            .fold(0.0f64, f64::max)
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

fn write_state_csvs(
    out: &Path,
    tag: &str,
    state: &EquilibriumState,
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    let n = state.prices.len();
    let eq_csv = csv_table("sector,price,theta,a_K,a_L", |buf| {
        for j in 0..n {
            let _ = writeln!(
                buf,
                "{},{},{},{},{}",
                j + 1,
                sig(state.prices[j]),
                sig(state.theta[j]),
                sig(state.a_k[j]),
                sig(state.a_l[j])
            );
        }
    });
    let eq_path = out.join(format!("equilibrium_{tag}.csv"));
    write_text(&eq_path, &eq_csv)?;
    manifest.record_output(eq_path);

    let mut a_csv = String::new();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| sig(state.a[(i, j)])).collect();
        let _ = writeln!(a_csv, "{}", row.join(","));
    }
    let a_path = out.join(format!("A_{tag}.csv"));
    write_text(&a_path, &a_csv)?;
    manifest.record_output(a_path);
    Ok(())
}

pub fn cmd_solve(args: &SolveArgs, file: &FileConfig) -> Result<(), CliError> {
    let (_, calibrated) = calibrate(&args.input, OrderPeriod::T0, None)?;
    let mut opts = SolveOptions::default();
    if let Some(tol) = resolve_opt(args.tol, file.solve.tol) {
        opts.tol = tol;
    }
    opts.damping = resolve_opt(args.damping, file.solve.damping);

    let (s0, s1) = core::restore_structures(&calibrated.model, calibrated.factor_prices, &opts)?;
    let halfway = core::halfway_state(&calibrated.model, calibrated.factor_prices, &opts)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
    let interpolate = resolve_opt(args.interpolate, file.solve.interpolate);
    let mut manifest = Manifest::new(
        "solve",
        json!({ "tol": opts.tol, "damping": opts.damping, "interpolate": interpolate }),
    );
    manifest.record_inputs(table_paths(&args.input));
    write_state_csvs(&args.out, "t0", &s0, &mut manifest)?;
    write_state_csvs(&args.out, "t1", &s1, &mut manifest)?;
    write_state_csvs(&args.out, "thalf", &halfway.state, &mut manifest)?;

    let li_csv = csv_table(
        "sector,a_L_t0,a_L_t1,a_L_half,growth_full,growth_halfway",
        |buf| {
            for j in 0..calibrated.model.n_sectors() {
                let _ = writeln!(
                    buf,
                    "{},{},{},{},{},{}",
                    j + 1,
                    sig(s0.a_l[j]),
                    sig(s1.a_l[j]),
                    sig(halfway.state.a_l[j]),
                    sig((s1.a_l[j] / s0.a_l[j]).ln()),
                    sig(halfway.labor_intensity_growth[j])
                );
            }
        },
    );
    let li_path = args.out.join("labor_intensity.csv");
    write_text(&li_path, &li_csv)?;
    manifest.record_output(li_path);

    if let Some(s) = interpolate {
        let state = core::interpolated_state(&calibrated.model, calibrated.factor_prices, s, &opts)?;
        write_state_csvs(&args.out, "interp", &state, &mut manifest)?;
    }
    manifest.write(&args.out, None)?;
    println!(
        "solved equilibria: t0 in {} iterations, t1 in {}, halfway in {}",
        s0.iterations, s1.iterations, halfway.state.iterations
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// household
// ---------------------------------------------------------------------------

struct HouseholdArtifacts {
    prefs: core::HouseholdPreferences,
    report: core::EstimationReport,
    accounts: core::AggregateAccounts,
}

fn estimate_household(
    tables: &LinkedIoTables,
    calibrated: &CalibratedEconomy,
    beta: f64,
    delta: f64,
) -> Result<HouseholdArtifacts, CliError> {
    let growths: Vec<f64> = calibrated.tfp.iter().map(|r| r.tfpg_cces).collect();
    let observations = core::observations_from_tables(tables, &growths)?;
    let report = core::estimate_lambda(&observations)?;
    if report.weak_instruments {
        eprintln!(
            "warning: first-stage F = {:.3} indicates weak instruments",
            report.first_stage_f
        );
    }

    // share weights are the period-1 expenditure shares under the t=1
    // normalization
    let h_total: f64 = tables.household[1].iter().sum();
    let mu: Vec<f64> = tables.household[1].iter().map(|&h| h / h_total).collect();
    let prefs = core::HouseholdPreferences {
        mu,
        lambda: report.lambda_hat,
        beta,
        delta,
    };
    prefs.validate()?;

    let normalized = tables.normalized_at_t1();
    let index0 = core::price_index(&normalized.price[0], &prefs.mu, prefs.lambda)?;
    let index1 = core::price_index(&normalized.price[1], &prefs.mu, prefs.lambda)?;
    let mut accounts = core::AggregateAccounts::from_tables(&normalized);
    let s_rho = core::recover_capital_prices(
        &accounts,
        [normalized.capital_price[0], normalized.capital_price[1]],
        [normalized.wage[0], normalized.wage[1]],
        index1 / index0,
        prefs.beta,
        prefs.delta,
    )?;
    if s_rho[0] <= 0.0 || s_rho[1] <= 0.0 {
        eprintln!("warning: recovered capital prices are not positive: {s_rho:?}");
    }
    accounts.s_rho = s_rho;
    Ok(HouseholdArtifacts {
        prefs,
        report,
        accounts,
    })
}

fn default_beta() -> f64 {
    (1.03f64).powi(5).recip()
}

fn default_delta() -> f64 {
    1.0 - (1.0 - 0.125f64).powi(5)
}

fn write_household_artifacts(
    out: &Path,
    artifacts: &HouseholdArtifacts,
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    let prefs_path = out.join("preferences.json");
    write_json(&prefs_path, &artifacts.prefs)?;
    manifest.record_output(prefs_path);

    let report_path = out.join("estimation_report.json");
    write_json(&report_path, &artifacts.report)?;
    manifest.record_output(report_path);

    let accounts_path = out.join("accounts.json");
    write_json(&accounts_path, &artifacts.accounts)?;
    manifest.record_output(accounts_path);
    Ok(())
}

pub fn cmd_household(args: &HouseholdArgs, file: &FileConfig) -> Result<(), CliError> {
    let beta = resolve(args.beta, file.household.beta, default_beta());
    let delta = resolve(args.delta, file.household.delta, default_delta());
    let tables = load_input(&args.input, None)?;
    let calibrated = core::calibrate_economy(&tables, OrderPeriod::T0)?;
    let artifacts = estimate_household(&tables, &calibrated, beta, delta)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
    let mut manifest = Manifest::new("household", json!({ "beta": beta, "delta": delta }));
    manifest.record_inputs(table_paths(&args.input));
    write_household_artifacts(&args.out, &artifacts, &mut manifest)?;
    manifest.write(&args.out, None)?;
    println!(
        "lambda = {:.6} (se {:.6}), first-stage F = {:.2}",
        artifacts.report.lambda_hat, artifacts.report.se_lambda, artifacts.report.first_stage_f
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// shock
// ---------------------------------------------------------------------------

fn parse_systems(text: Option<&[String]>) -> Result<Vec<SystemVariant>, CliError> {
    match text {
        None => Ok(SystemVariant::ALL.to_vec()),
        Some(items) => items
            .iter()
            .flat_map(|s| s.split(','))
            .map(|item| match item.trim() {
                "ces" => Ok(SystemVariant::EmpiricalCes),
                "cobb_douglas" | "cd" => Ok(SystemVariant::CobbDouglas),
                "leontief" => Ok(SystemVariant::Leontief),
                other => Err(CliError::Validation(format!("unknown system '{other}'"))),
            })
            .collect(),
    }
}

fn load_classification(path: &Path, n: usize) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let mut labels = vec![String::from("unclassified"); n];
    for (line_no, line) in text.lines().enumerate() {
        if line_no == 0 && line.starts_with("sector_id") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let id: usize = parts
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("bad classification line: {line}")))?;
        let label = parts.next().unwrap_or("").trim();
        if id == 0 || id > n {
            return Err(CliError::Validation(format!(
                "classification sector {id} out of range 1..={n}"
            )));
        }
        labels[id - 1] = label.to_string();
    }
    Ok(labels)
}

pub fn cmd_shock(args: &ShockArgs, file: &FileConfig) -> Result<(), CliError> {
    let shock_size = resolve(args.shock_size, file.shock.shock_size, 1.0);
    if shock_size <= 0.0 {
        return Err(CliError::Validation("shock size must be positive".into()));
    }
    let eta = resolve_opt(args.eta, file.shock.eta);
    let systems = parse_systems(
        args.systems
            .as_deref()
            .or(file.shock.systems.as_deref()),
    )?;
    let emit_outcomes = args.emit_outcomes || file.shock.emit_outcomes.unwrap_or(false);
    let beta = resolve(args.beta, file.household.beta, default_beta());
    let delta = resolve(args.delta, file.household.delta, default_delta());

    let tables = load_input(&args.input, None)?;
    let calibrated = core::calibrate_economy(&tables, OrderPeriod::T0)?;
    let household = estimate_household(&tables, &calibrated, beta, delta)?;
    let classification = match &args.classification {
        Some(path) => Some(load_classification(path, tables.n_sectors)?),
        None => None,
    };

    let baseline = core::Baseline::build(
        &tables,
        &calibrated,
        &household.prefs,
        household.accounts.s_rho,
        eta,
    )?;
    let config = core::CounterfactualConfig {
        shock_size,
        eta,
        ..Default::default()
    };
    let report = core::run_shock_sweep(
        &calibrated.model,
        &baseline,
        &config,
        &systems,
        classification.as_deref(),
    );

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
    let mut manifest = Manifest::new(
        "shock",
        json!({
            "shock_size": shock_size,
            "eta": baseline.eta,
            "eta_measured": baseline.eta_measured,
            "systems": systems.iter().map(|s| s.label()).collect::<Vec<_>>(),
            "beta": beta,
            "delta": delta,
        }),
    );
    manifest.record_inputs(table_paths(&args.input));

    let eff_csv = csv_table(
        "sector,system,welfare_gain,effectiveness,effectiveness_rank,stream_rank,classification",
        |buf| {
            for row in &report.rows {
                let _ = writeln!(
                    buf,
                    "{},{},{},{},{},{},{}",
                    row.sector,
                    row.system.label(),
                    sig(row.welfare_gain),
                    sig(row.effectiveness),
                    row.effectiveness_rank,
                    row.stream_rank,
                    row.classification.as_deref().unwrap_or("unclassified")
                );
            }
        },
    );
    let eff_path = args.out.join("effectiveness.csv");
    write_text(&eff_path, &eff_csv)?;
    manifest.record_output(eff_path);

    if emit_outcomes {
        for (system, outcome) in &report.outcomes {
            if *system == SystemVariant::EmpiricalCes {
                let path = args.out.join(format!("outcome_{}.json", outcome.sector));
                write_json(&path, outcome)?;
                manifest.record_output(path);
            }
        }
    }
    manifest.write(&args.out, None)?;

    let failures: Vec<&core::SweepRow> =
        report.rows.iter().filter(|r| r.error.is_some()).collect();
    for row in &failures {
        eprintln!(
            "warning: sector {} under {} failed: {}",
            row.sector,
            row.system.label(),
            row.error.as_deref().unwrap_or("?")
        );
    }
    println!(
        "swept {} shocks across {} systems (eta = {:.4}{})",
        report.rows.len(),
        systems.len(),
        baseline.eta,
        if baseline.eta_measured {
            ", measured from baseline"
        } else {
            ""
        }
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// elasticities
// ---------------------------------------------------------------------------

pub fn cmd_elasticities(args: &ElasticitiesArgs, _file: &FileConfig) -> Result<(), CliError> {
    let tables = load_input(&args.input, None)?;
    let calibrated = core::calibrate_economy(&tables, OrderPeriod::T0)?;
    let period = match args.period.as_deref() {
        None | Some("1") | Some("t1") => 1usize,
        Some("0") | Some("t0") => 0,
        Some(other) => {
            return Err(CliError::Validation(format!(
                "unknown period '{other}' (expected t0 or t1)"
            )))
        }
    };
    let prices = calibrated.price_vector(period);

    let sectors: Vec<usize> = if args.sector.is_empty() {
        (1..=calibrated.model.n_sectors()).collect()
    } else {
        args.sector.clone()
    };

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", args.out.display())))?;
    let mut manifest = Manifest::new(
        "elasticities",
        json!({ "period": period, "sectors": sectors }),
    );
    manifest.record_inputs(table_paths(&args.input));

    for &j in &sectors {
        let tech = calibrated
            .model
            .technologies
            .get(j - 1)
            .ok_or_else(|| CliError::Validation(format!("sector {j} out of range")))?;
        // outermost input first, mirroring the appendix table layout
        let mut inputs: Vec<(String, core::ElastInput)> = Vec::new();
        for nest in tech.nests.iter().rev() {
            match nest.input {
                core::NestInput::Capital => inputs.push(("K".into(), core::ElastInput::Capital)),
                core::NestInput::Commodity(id) => {
                    inputs.push((format!("c{id}"), core::ElastInput::Commodity(id)))
                }
            }
        }
        inputs.push(("L".into(), core::ElastInput::Labor));

        let matrix_csv = |f: &dyn Fn(core::ElastInput, core::ElastInput) -> f64| {
            let header = std::iter::once("input".to_string())
                .chain(inputs.iter().map(|(l, _)| l.clone()))
                .collect::<Vec<_>>()
                .join(",");
            csv_table(&header, |buf| {
                for (row_label, row_input) in &inputs {
                    let cells: Vec<String> = inputs
                        .iter()
                        .map(|(_, col_input)| {
                            if row_input == col_input {
                                "-".to_string()
                            } else {
                                sig(f(*row_input, *col_input))
                            }
                        })
                        .collect();
                    let _ = writeln!(buf, "{row_label},{}", cells.join(","));
                }
            })
        };

        let aues_csv = matrix_csv(&|a, b| core::aues(tech, &prices, a, b).unwrap());
        let mes_csv = matrix_csv(&|a, b| core::mes(tech, &prices, a, b).unwrap());
        let aues_path = args.out.join(format!("aues_sector_{j}.csv"));
        let mes_path = args.out.join(format!("mes_sector_{j}.csv"));
        write_text(&aues_path, &aues_csv)?;
        write_text(&mes_path, &mes_csv)?;
        manifest.record_output(aues_path);
        manifest.record_output(mes_path);
    }
    manifest.write(&args.out, None)?;
    println!("elasticity tables for {} sectors at t={period}", sectors.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

pub fn cmd_pipeline(args: &PipelineArgs, file: &FileConfig) -> Result<(), CliError> {
    let out = &args.out;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;

    let beta = resolve(args.beta, file.household.beta, default_beta());
    let delta = resolve(args.delta, file.household.delta, default_delta());
    let shock_size = resolve(args.shock_size, file.shock.shock_size, 1.0);
    let eta = resolve_opt(args.eta, file.shock.eta);
    let balance_tol = resolve_opt(args.balance_tol, file.calibrate.balance_tol);

    let mut manifest = Manifest::new(
        "pipeline",
        json!({
            "generate_n": args.generate_n,
            "seed": args.seed,
            "beta": beta,
            "delta": delta,
            "shock_size": shock_size,
            "eta": eta,
            "balance_tol": balance_tol,
        }),
    );

    let run = |manifest: &mut Manifest| -> Result<(), (String, CliError)> {
        let stage = |name: &str, e: CliError| (name.to_string(), e);

        // ingest (or generate) the tables
        let input_dir: PathBuf = if let Some(n) = args.generate_n {
            let mut config = core::GeneratorConfig::new(n, args.seed.unwrap_or(0));
            config.beta = beta;
            config.delta = delta;
            if let Some(lambda) = args.lambda {
                config.lambda = lambda;
            }
            let economy =
                core::generate_synthetic_economy(&config).map_err(|e| stage("generate", e.into()))?;
            let written =
                core::save_tables(&economy.tables, out).map_err(|e| stage("generate", e.into()))?;
            for path in written {
                manifest.record_output(path);
            }
            out.clone()
        } else {
            let dir = args.input.clone().ok_or_else(|| {
                stage(
                    "ingest",
                    CliError::Validation("either --input or --generate-n is required".into()),
                )
            })?;
            manifest.record_inputs(table_paths(&dir));
            dir
        };

        let tables = load_input(&input_dir, balance_tol).map_err(|e| stage("ingest", e))?;

        // order
        let incidence = core::build_incidence_for(&tables, OrderPeriod::T0)
            .map_err(|e| stage("order", e.into()))?;
        let order = core::derive_stream_order(&incidence).map_err(|e| stage("order", e.into()))?;
        let stream_csv = csv_table("rank,sector_id,ratio,ranking_index", |buf| {
            for (pos, &sector) in order.permutation.iter().enumerate() {
                let _ = writeln!(
                    buf,
                    "{},{},{},{}",
                    pos + 1,
                    sector,
                    sig(order.ratios[pos]),
                    sig(order.ranking_index[pos])
                );
            }
        });
        let stream_path = out.join("stream_order.csv");
        write_text(&stream_path, &stream_csv).map_err(|e| stage("order", e))?;
        manifest.record_output(stream_path);
        let ccdf_csv = csv_table("ratio,ranking_index", |buf| {
            for (ratio, idx) in core::ccdf_export(&order) {
                let _ = writeln!(buf, "{},{}", sig(ratio), sig(idx));
            }
        });
        let ccdf_path = out.join("ccdf.csv");
        write_text(&ccdf_path, &ccdf_csv).map_err(|e| stage("order", e))?;
        manifest.record_output(ccdf_path);

        // calibrate
        let calibrated = core::calibrate_economy(&tables, OrderPeriod::T0)
            .map_err(|e| stage("calibrate", e.into()))?;
        write_calibration_artifacts(out, &calibrated, manifest).map_err(|e| stage("calibrate", e))?;

        // solve
        let opts = SolveOptions::default();
        let (s0, s1) = core::restore_structures(&calibrated.model, calibrated.factor_prices, &opts)
            .map_err(|e| stage("solve", e.into()))?;
        let halfway = core::halfway_state(&calibrated.model, calibrated.factor_prices, &opts)
            .map_err(|e| stage("solve", e.into()))?;
        write_state_csvs(out, "t0", &s0, manifest).map_err(|e| stage("solve", e))?;
        write_state_csvs(out, "t1", &s1, manifest).map_err(|e| stage("solve", e))?;
        write_state_csvs(out, "thalf", &halfway.state, manifest).map_err(|e| stage("solve", e))?;
        let li_csv = csv_table(
            "sector,a_L_t0,a_L_t1,a_L_half,growth_full,growth_halfway",
            |buf| {
                for j in 0..calibrated.model.n_sectors() {
                    let _ = writeln!(
                        buf,
                        "{},{},{},{},{},{}",
                        j + 1,
                        sig(s0.a_l[j]),
                        sig(s1.a_l[j]),
                        sig(halfway.state.a_l[j]),
                        sig((s1.a_l[j] / s0.a_l[j]).ln()),
                        sig(halfway.labor_intensity_growth[j])
                    );
                }
            },
        );
        let li_path = out.join("labor_intensity.csv");
        write_text(&li_path, &li_csv).map_err(|e| stage("solve", e))?;
        manifest.record_output(li_path);

        // household
        let household =
            estimate_household(&tables, &calibrated, beta, delta).map_err(|e| stage("household", e))?;
        write_household_artifacts(out, &household, manifest).map_err(|e| stage("household", e))?;

        // shock
        let baseline = core::Baseline::build(
            &tables,
            &calibrated,
            &household.prefs,
            household.accounts.s_rho,
            eta,
        )
        .map_err(|e| stage("shock", e.into()))?;
        let config = core::CounterfactualConfig {
            shock_size,
            eta,
            ..Default::default()
        };
        let report = core::run_shock_sweep(
            &calibrated.model,
            &baseline,
            &config,
            &SystemVariant::ALL,
            None,
        );
        let eff_csv = csv_table(
            "sector,system,welfare_gain,effectiveness,effectiveness_rank,stream_rank,classification",
            |buf| {
                for row in &report.rows {
                    let _ = writeln!(
                        buf,
                        "{},{},{},{},{},{},{}",
                        row.sector,
                        row.system.label(),
                        sig(row.welfare_gain),
                        sig(row.effectiveness),
                        row.effectiveness_rank,
                        row.stream_rank,
                        row.classification.as_deref().unwrap_or("unclassified")
                    );
                }
            },
        );
        let eff_path = out.join("effectiveness.csv");
        write_text(&eff_path, &eff_csv).map_err(|e| stage("shock", e))?;
        manifest.record_output(eff_path);
        Ok(())
    };

    match run(&mut manifest) {
        Ok(()) => {
            manifest.write(out, None)?;
            println!("pipeline complete: artifacts in {}", out.display());
            Ok(())
        }
        Err((stage_name, err)) => {
            eprintln!("pipeline failed at stage '{stage_name}': {err}");
            manifest.write(out, Some(&stage_name))?;
            Err(err)
        }
    }
}
