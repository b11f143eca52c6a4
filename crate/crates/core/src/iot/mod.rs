//! Two-period linked input-output tables: data model, CSV ingestion,
//! validation, and cost-share extraction.
//!
//! All monetary cells are stored nominal. Real quantities are derived by
//! deflating with the matching price index (commodity price, wage, or
//! capital service price).

mod synth;

pub use synth::{generate_synthetic_economy, GeneratorConfig, GroundTruth, SyntheticEconomy};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Relative residual above which a balance violation is a hard error.
pub const BALANCE_HARD_TOL: f64 = 1e-8;
/// Relative residual above which a balance violation is warned about.
pub const BALANCE_WARN_TOL: f64 = 1e-10;

/// Two-period linked tables. Index convention: `t` is 0 or 1, commodities
/// and sectors are 1-based in the public accessors.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkedIoTables {
    pub n_sectors: usize,
    /// Nominal intermediate flows, row-major `[i * n + j]` (commodity i
    /// into sector j, 0-based internally).
    pub flows: [Vec<f64>; 2],
    /// Nominal capital compensation per sector.
    pub capital: [Vec<f64>; 2],
    /// Nominal labor compensation per sector.
    pub labor: [Vec<f64>; 2],
    /// Nominal gross output per sector.
    pub output: [Vec<f64>; 2],
    /// Commodity price indices.
    pub price: [Vec<f64>; 2],
    /// Nominal household consumption per commodity.
    pub household: [Vec<f64>; 2],
    /// Nominal fixed capital formation per commodity.
    pub capital_formation: [Vec<f64>; 2],
    /// Nominal net exports per commodity (may be negative).
    pub net_exports: [Vec<f64>; 2],
    pub wage: [f64; 2],
    pub capital_price: [f64; 2],
}

/// A soft balance issue found during validation.
#[derive(Debug, Clone)]
pub struct BalanceWarning {
    pub balance: &'static str,
    pub index: usize,
    pub period: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub hard_tol: f64,
    pub warn_tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            hard_tol: BALANCE_HARD_TOL,
            warn_tol: BALANCE_WARN_TOL,
        }
    }
}

impl LinkedIoTables {
    pub fn zeros(n: usize) -> Self {
        LinkedIoTables {
            n_sectors: n,
            flows: [vec![0.0; n * n], vec![0.0; n * n]],
            capital: [vec![0.0; n], vec![0.0; n]],
            labor: [vec![0.0; n], vec![0.0; n]],
            output: [vec![0.0; n], vec![0.0; n]],
            price: [vec![1.0; n], vec![1.0; n]],
            household: [vec![0.0; n], vec![0.0; n]],
            capital_formation: [vec![0.0; n], vec![0.0; n]],
            net_exports: [vec![0.0; n], vec![0.0; n]],
            wage: [1.0, 1.0],
            capital_price: [1.0, 1.0],
        }
    }

    /// Nominal flow of commodity i into sector j (1-based).
    pub fn flow(&self, t: usize, i: usize, j: usize) -> f64 {
        self.flows[t][(i - 1) * self.n_sectors + (j - 1)]
    }

    pub fn set_flow(&mut self, t: usize, i: usize, j: usize, value: f64) {
        self.flows[t][(i - 1) * self.n_sectors + (j - 1)] = value;
    }

    /// Real gross output of sector j.
    pub fn output_real(&self, t: usize, j: usize) -> f64 {
        self.output[t][j - 1] / self.price[t][j - 1]
    }

    /// Capital service total in service units.
    pub fn capital_total(&self, t: usize) -> f64 {
        self.capital[t].iter().sum::<f64>() / self.capital_price[t]
    }

    /// Labor total in labor units.
    pub fn labor_total(&self, t: usize) -> f64 {
        self.labor[t].iter().sum::<f64>() / self.wage[t]
    }

    /// Total nominal value added.
    pub fn value_added(&self, t: usize) -> f64 {
        self.capital[t].iter().sum::<f64>() + self.labor[t].iter().sum::<f64>()
    }

    /// Totals of the three final-demand components.
    pub fn final_demand_totals(&self, t: usize) -> (f64, f64, f64) {
        (
            self.household[t].iter().sum(),
            self.capital_formation[t].iter().sum(),
            self.net_exports[t].iter().sum(),
        )
    }

    /// Check structure, positivity, sparsity symmetry and both balances.
    /// Residuals between `warn_tol` and `hard_tol` are returned as
    /// warnings; anything larger is an error.
    pub fn validate(&self, opts: &ValidationOptions) -> Result<Vec<BalanceWarning>> {
        let n = self.n_sectors;
        if n == 0 {
            return Err(Error::validation("economy must have at least one sector"));
        }
        for t in 0..2 {
            for (name, v, len) in [
                ("flows", &self.flows[t], n * n),
                ("capital", &self.capital[t], n),
                ("labor", &self.labor[t], n),
                ("output", &self.output[t], n),
                ("price", &self.price[t], n),
                ("household", &self.household[t], n),
                ("capital_formation", &self.capital_formation[t], n),
                ("net_exports", &self.net_exports[t], n),
            ] {
                if v.len() != len {
                    return Err(Error::validation(format!(
                        "{name} at t={t} has {} entries, expected {len}",
                        v.len()
                    )));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::validation(format!("{name} at t={t} has non-finite entries")));
                }
            }
            if self.wage[t] <= 0.0 || self.capital_price[t] <= 0.0 {
                return Err(Error::validation(format!(
                    "wage and capital price must be strictly positive at t={t}"
                )));
            }
            if self.price[t].iter().any(|&p| p <= 0.0) {
                return Err(Error::validation(format!(
                    "all commodity prices must be strictly positive at t={t}"
                )));
            }
            if self.flows[t].iter().any(|&x| x < 0.0) {
                return Err(Error::validation(format!("negative intermediate flow at t={t}")));
            }
            for j in 1..=n {
                if self.capital[t][j - 1] < 0.0 {
                    return Err(Error::validation(format!(
                        "negative capital compensation in sector {j} at t={t}"
                    )));
                }
                if self.labor[t][j - 1] <= 0.0 {
                    return Err(Error::validation(format!(
                        "labor compensation must be strictly positive in sector {j} at t={t}"
                    )));
                }
                if self.output[t][j - 1] <= 0.0 {
                    return Err(Error::validation(format!(
                        "gross output must be strictly positive in sector {j} at t={t}"
                    )));
                }
                if self.household[t][j - 1] < 0.0 {
                    return Err(Error::validation(format!(
                        "negative household consumption of commodity {j} at t={t}"
                    )));
                }
            }
        }
        // Sparsity symmetry: the variety of inputs is preserved across periods.
        for i in 1..=n {
            for j in 1..=n {
                let f0 = self.flow(0, i, j) > 0.0;
                let f1 = self.flow(1, i, j) > 0.0;
                if f0 != f1 {
                    return Err(Error::validation(format!(
                        "sparsity symmetry violated for flow ({i} -> {j}): present at t={} only",
                        if f0 { 0 } else { 1 }
                    )));
                }
            }
        }

        let mut warnings = Vec::new();
        for t in 0..2 {
            for j in 1..=n {
                let inputs: f64 = (1..=n).map(|i| self.flow(t, i, j)).sum();
                let lhs = self.capital[t][j - 1] + self.labor[t][j - 1] + inputs;
                let rhs = self.output[t][j - 1];
                let residual = (lhs - rhs).abs() / rhs.abs().max(1.0);
                if residual > opts.hard_tol {
                    return Err(Error::Balance {
                        balance: "row",
                        index: j,
                        period: t,
                        residual,
                        tolerance: opts.hard_tol,
                    });
                }
                if residual > opts.warn_tol {
                    warnings.push(BalanceWarning {
                        balance: "row",
                        index: j,
                        period: t,
                        residual,
                    });
                }
            }
            for i in 1..=n {
                let uses: f64 = (1..=n).map(|j| self.flow(t, i, j)).sum();
                let lhs = self.household[t][i - 1]
                    + self.capital_formation[t][i - 1]
                    + self.net_exports[t][i - 1]
                    + uses;
                let rhs = self.output[t][i - 1];
                let residual = (lhs - rhs).abs() / rhs.abs().max(1.0);
                if residual > opts.hard_tol {
                    return Err(Error::Balance {
                        balance: "column",
                        index: i,
                        period: t,
                        residual,
                        tolerance: opts.hard_tol,
                    });
                }
                if residual > opts.warn_tol {
                    warnings.push(BalanceWarning {
                        balance: "column",
                        index: i,
                        period: t,
                        residual,
                    });
                }
            }
            // Aggregate identity: value added equals final demand.
            let va = self.value_added(t);
            let (h, g, e) = self.final_demand_totals(t);
            let residual = (va - (h + g + e)).abs() / va.abs().max(1.0);
            if residual > opts.hard_tol {
                return Err(Error::Balance {
                    balance: "aggregate",
                    index: 0,
                    period: t,
                    residual,
                    tolerance: opts.hard_tol,
                });
            }
        }
        Ok(warnings)
    }

    /// Rescale every commodity, the wage, and the capital price so that
    /// all period-1 indices are exactly 1. Nominal cells are unchanged;
    /// only price indices move (a pure change of measurement units).
    pub fn normalized_at_t1(&self) -> LinkedIoTables {
        let mut out = self.clone();
        for t in 0..2 {
            for i in 0..self.n_sectors {
                out.price[t][i] = self.price[t][i] / self.price[1][i];
            }
            out.wage[t] = self.wage[t] / self.wage[1];
            out.capital_price[t] = self.capital_price[t] / self.capital_price[1];
        }
        out
    }
}

/// Observed cost shares per sector and period. The labor share is the
/// residual, so shares sum to exactly one.
#[derive(Debug, Clone)]
pub struct CostShareTable {
    pub n_sectors: usize,
    /// a[t][i * n + j]: share of commodity i in sector j's cost.
    pub a: [Vec<f64>; 2],
    pub a_k: [Vec<f64>; 2],
    pub a_l: [Vec<f64>; 2],
}

impl CostShareTable {
    pub fn share(&self, t: usize, i: usize, j: usize) -> f64 {
        self.a[t][(i - 1) * self.n_sectors + (j - 1)]
    }
}

/// Cost shares from the nominal cells: a_ij = flow/(pY), a_K = rK/(pY),
/// and a_L as the residual 1 - a_K - sum_i a_ij.
pub fn compute_cost_shares(tables: &LinkedIoTables) -> Result<CostShareTable> {
    let n = tables.n_sectors;
    let mut out = CostShareTable {
        n_sectors: n,
        a: [vec![0.0; n * n], vec![0.0; n * n]],
        a_k: [vec![0.0; n], vec![0.0; n]],
        a_l: [vec![0.0; n], vec![0.0; n]],
    };
    for t in 0..2 {
        for j in 1..=n {
            let y = tables.output[t][j - 1];
            if y == 0.0 {
                return Err(Error::validation(format!(
                    "sector {j} has zero output at t={t}"
                )));
            }
            let mut used = tables.capital[t][j - 1] / y;
            out.a_k[t][j - 1] = used;
            for i in 1..=n {
                let share = tables.flow(t, i, j) / y;
                out.a[t][(i - 1) * n + (j - 1)] = share;
                used += share;
            }
            let residual = 1.0 - used;
            if residual <= 0.0 {
                return Err(Error::validation(format!(
                    "sector {j} at t={t}: residual labor share {residual:.3e} is not positive"
                )));
            }
            out.a_l[t][j - 1] = residual;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV schema
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct FlowRow {
    input_id: usize,
    sector_id: usize,
    value: f64,
}

#[derive(Debug, Deserialize)]
struct PrimaryRow {
    sector_id: usize,
    #[serde(rename = "K")]
    k: f64,
    #[serde(rename = "L")]
    l: f64,
    #[serde(rename = "Y_nominal")]
    y_nominal: f64,
}

#[derive(Debug, Deserialize)]
struct FinalRow {
    commodity_id: usize,
    #[serde(rename = "H")]
    h: f64,
    #[serde(rename = "G")]
    g: f64,
    #[serde(rename = "E")]
    e: f64,
    price: f64,
}

#[derive(Debug, Deserialize)]
struct FactorRow {
    t: usize,
    r: f64,
    w: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
        ),
        _ => Error::parse(path, e.to_string()),
    })?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record.map_err(|e| Error::parse(path, e.to_string()))?);
    }
    Ok(rows)
}

/// Load and validate a table set from a directory holding
/// `flows_t{0,1}.csv`, `primary_t{0,1}.csv`, `final_t{0,1}.csv`, and
/// `factors.csv`.
pub fn load_tables(dir: impl AsRef<Path>) -> Result<LinkedIoTables> {
    load_tables_with(dir, &ValidationOptions::default()).map(|(t, _)| t)
}

pub fn load_tables_with(
    dir: impl AsRef<Path>,
    opts: &ValidationOptions,
) -> Result<(LinkedIoTables, Vec<BalanceWarning>)> {
    let dir = dir.as_ref();
    let primary: [Vec<PrimaryRow>; 2] = [
        read_rows(&dir.join("primary_t0.csv"))?,
        read_rows(&dir.join("primary_t1.csv"))?,
    ];
    let n = primary[0].len();
    if n == 0 {
        return Err(Error::parse(dir.join("primary_t0.csv"), "no sectors"));
    }
    if primary[1].len() != n {
        return Err(Error::validation(format!(
            "sector count differs between periods: {} vs {}",
            n,
            primary[1].len()
        )));
    }
    let mut tables = LinkedIoTables::zeros(n);

    for t in 0..2 {
        let mut seen = vec![false; n];
        for row in &primary[t] {
            if row.sector_id == 0 || row.sector_id > n {
                return Err(Error::validation(format!(
                    "sector id {} out of range 1..={n}",
                    row.sector_id
                )));
            }
            if std::mem::replace(&mut seen[row.sector_id - 1], true) {
                return Err(Error::validation(format!(
                    "duplicate sector id {} in primary_t{t}.csv",
                    row.sector_id
                )));
            }
            tables.capital[t][row.sector_id - 1] = row.k;
            tables.labor[t][row.sector_id - 1] = row.l;
            tables.output[t][row.sector_id - 1] = row.y_nominal;
        }
        if seen.iter().any(|&s| !s) {
            return Err(Error::validation(format!(
                "primary_t{t}.csv is missing sectors"
            )));
        }

        let finals: Vec<FinalRow> = read_rows(&dir.join(format!("final_t{t}.csv")))?;
        if finals.len() != n {
            return Err(Error::validation(format!(
                "final_t{t}.csv has {} rows, expected {n}",
                finals.len()
            )));
        }
        for row in &finals {
            if row.commodity_id == 0 || row.commodity_id > n {
                return Err(Error::validation(format!(
                    "commodity id {} out of range 1..={n}",
                    row.commodity_id
                )));
            }
            let i = row.commodity_id - 1;
            tables.household[t][i] = row.h;
            tables.capital_formation[t][i] = row.g;
            tables.net_exports[t][i] = row.e;
            tables.price[t][i] = row.price;
        }

        let flows: Vec<FlowRow> = read_rows(&dir.join(format!("flows_t{t}.csv")))?;
        for row in &flows {
            if row.input_id == 0 || row.input_id > n || row.sector_id == 0 || row.sector_id > n {
                return Err(Error::validation(format!(
                    "flow ids ({}, {}) out of range 1..={n}",
                    row.input_id, row.sector_id
                )));
            }
            tables.set_flow(t, row.input_id, row.sector_id, row.value);
        }
    }

    let factors: Vec<FactorRow> = read_rows(&dir.join("factors.csv"))?;
    let mut seen = [false; 2];
    for row in &factors {
        if row.t > 1 {
            return Err(Error::validation(format!("factor period {} out of range", row.t)));
        }
        seen[row.t] = true;
        tables.capital_price[row.t] = row.r;
        tables.wage[row.t] = row.w;
    }
    if !(seen[0] && seen[1]) {
        return Err(Error::validation("factors.csv must list both periods"));
    }

    let warnings = tables.validate(opts)?;
    Ok((tables, warnings))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Write the table set to a directory using the same schema that
/// [`load_tables`] reads. Values are written with Rust's shortest
/// round-trip float formatting, so reloading reproduces identical bits.
pub fn save_tables(tables: &LinkedIoTables, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = tables.n_sectors;
    let mut written = Vec::new();

    for t in 0..2 {
        let mut flows = String::from("input_id,sector_id,value\n");
        for i in 1..=n {
            for j in 1..=n {
                let v = tables.flow(t, i, j);
                if v != 0.0 {
                    let _ = writeln!(flows, "{i},{j},{v}");
                }
            }
        }
        let path = dir.join(format!("flows_t{t}.csv"));
        write_file(&path, &flows)?;
        written.push(path);

        let mut primary = String::from("sector_id,K,L,Y_nominal\n");
        for j in 1..=n {
            let _ = writeln!(
                primary,
                "{j},{},{},{}",
                tables.capital[t][j - 1],
                tables.labor[t][j - 1],
                tables.output[t][j - 1]
            );
        }
        let path = dir.join(format!("primary_t{t}.csv"));
        write_file(&path, &primary)?;
        written.push(path);

        let mut finals = String::from("commodity_id,H,G,E,price\n");
        for i in 1..=n {
            let _ = writeln!(
                finals,
                "{i},{},{},{},{}",
                tables.household[t][i - 1],
                tables.capital_formation[t][i - 1],
                tables.net_exports[t][i - 1],
                tables.price[t][i - 1]
            );
        }
        let path = dir.join(format!("final_t{t}.csv"));
        write_file(&path, &finals)?;
        written.push(path);
    }

    let mut factors = String::from("t,r,w\n");
    for t in 0..2 {
        let _ = writeln!(factors, "{t},{},{}", tables.capital_price[t], tables.wage[t]);
    }
    let path = dir.join("factors.csv");
    write_file(&path, &factors)?;
    written.push(path);

    Ok(written)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// A small hand-balanced two-period economy: sector 1 sells to 2,
    /// sector 2 sells to 3.
    pub(crate) fn three_sector_fixture() -> LinkedIoTables {
        let mut t = LinkedIoTables::zeros(3);
        for period in 0..2 {
            let bump = 1.0 + period as f64 * 0.1;
            t.set_flow(period, 1, 2, 30.0 * bump);
            t.set_flow(period, 2, 3, 60.0 * bump);
            t.output[period] = vec![100.0 * bump, 200.0 * bump, 300.0 * bump];
            t.capital[period] = vec![40.0 * bump, 70.0 * bump, 90.0 * bump];
            t.labor[period] = vec![60.0 * bump, 100.0 * bump, 150.0 * bump];
            // column balances: f_i = Y_i - sum_j X_ij
            let f = [70.0 * bump, 140.0 * bump, 300.0 * bump];
            for i in 0..3 {
                t.household[period][i] = 0.5 * f[i];
                t.capital_formation[period][i] = 0.3 * f[i];
                t.net_exports[period][i] = 0.2 * f[i];
            }
            t.price[period] = vec![1.0, 1.0, 1.0];
            t.wage[period] = 1.0;
            t.capital_price[period] = 1.0;
        }
        t
    }

    #[test]
    fn fixture_roundtrips_through_csv() {
        let tables = three_sector_fixture();
        tables.validate(&ValidationOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_tables(&tables, dir.path()).unwrap();
        let loaded = load_tables(dir.path()).unwrap();
        assert_eq!(loaded.n_sectors, 3);
        assert_eq!(loaded, tables);
    }

    #[test]
    fn sparsity_symmetry_violation_is_rejected() {
        let mut tables = three_sector_fixture();
        // introduce a flow only at t=1 and keep the row balanced
        tables.set_flow(1, 1, 2, 0.0);
        tables.labor[1][1] += 33.0;
        let err = tables.validate(&ValidationOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sparsity"), "unexpected error: {msg}");
    }

    #[test]
    fn row_imbalance_is_reported_with_sector() {
        let mut tables = three_sector_fixture();
        tables.capital[0][1] += 5.0;
        let err = tables.validate(&ValidationOptions::default()).unwrap_err();
        match err {
            Error::Balance {
                balance, index, period, ..
            } => {
                assert_eq!(balance, "row");
                assert_eq!(index, 2);
                assert_eq!(period, 0);
            }
            other => panic!("expected balance error, got {other}"),
        }
    }

    #[test]
    fn negative_flow_is_rejected() {
        let mut tables = three_sector_fixture();
        tables.set_flow(0, 1, 2, -1.0);
        assert!(tables.validate(&ValidationOptions::default()).is_err());
    }

    #[test]
    fn shares_sum_to_one_by_construction() {
        let tables = three_sector_fixture();
        let shares = compute_cost_shares(&tables).unwrap();
        for t in 0..2 {
            for j in 1..=3 {
                let total = shares.a_k[t][j - 1]
                    + shares.a_l[t][j - 1]
                    + (1..=3).map(|i| shares.share(t, i, j)).sum::<f64>();
                assert_eq!(total, 1.0, "sector {j} t={t}");
            }
        }
    }

    #[test]
    fn labor_only_sector_has_unit_labor_share() {
        let mut t = LinkedIoTables::zeros(1);
        for period in 0..2 {
            t.output[period] = vec![50.0];
            t.labor[period] = vec![50.0];
            t.capital[period] = vec![0.0];
            t.household[period] = vec![50.0];
        }
        let shares = compute_cost_shares(&t).unwrap();
        assert_eq!(shares.a_l[0][0], 1.0);
        assert_eq!(shares.a_k[0][0], 0.0);
    }

    #[test]
    fn nonpositive_residual_labor_share_is_rejected() {
        let mut tables = three_sector_fixture();
        // make intermediate plus capital exceed output in sector 2
        tables.set_flow(0, 1, 2, 250.0);
        let err = compute_cost_shares(&tables).unwrap_err();
        assert!(err.to_string().contains("labor share"));
    }

    #[test]
    fn normalization_rescales_prices_only() {
        let mut tables = three_sector_fixture();
        tables.price[0] = vec![0.9, 1.2, 0.8];
        tables.price[1] = vec![1.1, 0.9, 1.3];
        tables.wage = [0.95, 1.07];
        tables.capital_price = [1.02, 0.98];
        let norm = tables.normalized_at_t1();
        for i in 0..3 {
            assert_eq!(norm.price[1][i], 1.0);
            assert!((norm.price[0][i] - tables.price[0][i] / tables.price[1][i]).abs() < 1e-15);
        }
        assert_eq!(norm.wage[1], 1.0);
        assert_eq!(norm.capital_price[1], 1.0);
        assert_eq!(norm.flows, tables.flows);
        assert_eq!(norm.output, tables.output);
    }

    #[test]
    fn missing_file_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_tables(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("primary_t0.csv"));
    }

    #[test]
    fn malformed_csv_reports_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let tables = three_sector_fixture();
        save_tables(&tables, dir.path()).unwrap();
        std::fs::write(dir.path().join("factors.csv"), "t,r,w\n0,abc,1\n1,1,1\n").unwrap();
        let err = load_tables(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "got {err}");
    }
}
