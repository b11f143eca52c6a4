//! Counterfactual productivity shocks and the alternative equilibrium.
//!
//! A shock scales one sector's TFP by the ratio of shocked to baseline
//! nominal output. Holding factor prices, capital services, and net
//! exports fixed, the alternative equilibrium re-solves commodity prices,
//! adjusts the capital price through the Euler condition, responds
//! capital formation through its price elasticity, and closes the
//! household budget and labor demand by iteration. Welfare is the change
//! in deflated consumption net of the labor cost change, valued at the
//! ex ante price index.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibratedEconomy;
use crate::ces::NestForm;
use crate::equilibrium::{share_structure, solve_prices, EconomyModel, FactorPrices, SolveOptions};
use crate::error::{Error, Result};
use crate::household::{price_index, HouseholdPreferences};
use crate::iot::LinkedIoTables;

/// Paper-scale default for the price elasticity of fixed capital
/// formation, used when the baseline data cannot identify it.
pub const DEFAULT_ETA: f64 = -0.80;

#[derive(Debug, Clone)]
pub struct CounterfactualConfig {
    /// Shock size in the tables' money units.
    pub shock_size: f64,
    /// Price elasticity of capital formation; `None` measures it from the
    /// baseline capital path.
    pub eta: Option<f64>,
    pub outer_tol: f64,
    pub max_outer_iterations: usize,
    pub solve: SolveOptions,
}

impl Default for CounterfactualConfig {
    fn default() -> Self {
        CounterfactualConfig {
            shock_size: 1.0,
            eta: None,
            outer_tol: 1e-10,
            max_outer_iterations: 1000,
            solve: SolveOptions::default(),
        }
    }
}

/// Baseline quantities (period-1 normalized units) that every
/// counterfactual solve holds fixed or perturbs.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub prefs: HouseholdPreferences,
    pub factors: FactorPrices,
    pub prices: Vec<f64>,
    pub index: f64,
    /// Consumption expenditure total.
    pub b: f64,
    /// Net export total and its fixed nominal vector.
    pub r_net: f64,
    pub net_exports: Vec<f64>,
    /// Capital formation allocation ratios (period 1).
    pub g_alloc: Vec<f64>,
    /// Capital service totals, periods 0 and 1.
    pub k: [f64; 2],
    /// Labor total (period 1).
    pub l: f64,
    /// Nominal capital formation total (period 1).
    pub gt: f64,
    /// Nominal gross outputs (period 1), the shock denominators.
    pub outputs: Vec<f64>,
    /// Composite capital prices s_t * rho.
    pub s_rho: [f64; 2],
    /// Price elasticity of capital formation in effect.
    pub eta: f64,
    /// Whether eta was measured from the data rather than supplied.
    pub eta_measured: bool,
}

impl Baseline {
    /// Assemble the baseline from normalized tables, household
    /// preferences, and the recovered capital prices.
    pub fn build(
        tables: &LinkedIoTables,
        calibrated: &CalibratedEconomy,
        prefs: &HouseholdPreferences,
        s_rho: [f64; 2],
        eta_override: Option<f64>,
    ) -> Result<Baseline> {
        prefs.validate()?;
        if s_rho[0] <= 0.0 || s_rho[1] <= 0.0 {
            return Err(Error::validation(format!(
                "capital prices must be positive, got {s_rho:?}"
            )));
        }
        let normalized = tables.normalized_at_t1();
        let (h1, gt1, e1) = normalized.final_demand_totals(1);
        if h1 <= 0.0 {
            return Err(Error::validation("baseline consumption must be positive"));
        }
        let g_alloc: Vec<f64> = if gt1.abs() > 0.0 {
            normalized.capital_formation[1]
                .iter()
                .map(|&g| g / gt1)
                .collect()
        } else {
            vec![0.0; normalized.n_sectors]
        };
        let k = [normalized.capital_total(0), normalized.capital_total(1)];
        let prices1 = calibrated.observed_prices[1].clone();
        let index = price_index(&prices1, &prefs.mu, prefs.lambda)?;

        let ncf0 = k[1] - (1.0 - prefs.delta) * k[0];
        let ncf1 = gt1 / s_rho[1];
        let ds = s_rho[1] - s_rho[0];
        let measured = if ncf0.abs() > 1e-12 && ds.abs() > 1e-9 * s_rho[0].abs() {
            Some((ncf1 - ncf0) / ds * s_rho[0] / ncf0)
        } else {
            None
        };
        let (eta, eta_measured) = match (eta_override, measured) {
            (Some(e), _) => (e, false),
            (None, Some(m)) => (m, true),
            (None, None) => (DEFAULT_ETA, false),
        };

        Ok(Baseline {
            prefs: prefs.clone(),
            factors: calibrated.factor_prices[1],
            prices: prices1,
            index,
            b: h1,
            r_net: e1,
            net_exports: normalized.net_exports[1].clone(),
            g_alloc,
            k,
            l: normalized.labor_total(1),
            gt: gt1,
            outputs: normalized.output[1].clone(),
            s_rho,
            eta,
            eta_measured,
        })
    }
}

/// The alternative TFP vector with a money-denominated shock injected
/// into sector k: theta'_k = theta_k (p_k Y_k + size)/(p_k Y_k).
pub fn inject_shock(theta1: &[f64], sector: usize, size: f64, output_nominal: f64) -> Result<Vec<f64>> {
    if sector == 0 || sector > theta1.len() {
        return Err(Error::invalid(format!(
            "sector {sector} out of range 1..={}",
            theta1.len()
        )));
    }
    if output_nominal <= 0.0 {
        return Err(Error::invalid("baseline output must be positive"));
    }
    let mut theta = theta1.to_vec();
    theta[sector - 1] *= (output_nominal + size) / output_nominal;
    Ok(theta)
}

/// The solved alternative equilibrium for one shock.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterfactualOutcome {
    pub sector: usize,
    pub theta_prime: Vec<f64>,
    pub prices: Vec<f64>,
    pub price_index: f64,
    pub b_prime: f64,
    pub l_prime: f64,
    pub k2_prime: f64,
    pub s_rho1_prime: f64,
    pub welfare_gain: f64,
    pub effectiveness: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Relative residual of the final demand system (I - A') v' = f'.
    pub leontief_residual: f64,
}

/// Discounted present value of the welfare gain per unit of shock:
/// gain / ((1 - beta) size).
pub fn effectiveness(welfare_gain: f64, beta: f64, size: f64) -> f64 {
    welfare_gain / ((1.0 - beta) * size)
}

/// Solve the alternative equilibrium under `theta_prime`, holding
/// (r1, w1, K1, net exports) fixed.
pub fn solve_alternative_equilibrium(
    model: &EconomyModel,
    baseline: &Baseline,
    config: &CounterfactualConfig,
    theta_prime: &[f64],
    shocked_sector: usize,
) -> Result<CounterfactualOutcome> {
    let n = model.n_sectors();
    let prefs = &baseline.prefs;

    // 1. New commodity prices.
    let state = solve_prices(
        model,
        baseline.factors,
        theta_prime,
        Some(&baseline.prices),
        &config.solve,
    )?;
    let index_prime = price_index(&state.prices, &prefs.mu, prefs.lambda)?;

    // 2. Capital price through the Euler condition, 3. capital formation
    //    through its price elasticity.
    let one_minus_delta = 1.0 - prefs.delta;
    let s_rho1_prime = ((index_prime / baseline.index)
        * (baseline.s_rho[1] * one_minus_delta + baseline.factors.r)
        - baseline.factors.r)
        / one_minus_delta;
    let ncf0 = baseline.k[1] - one_minus_delta * baseline.k[0];
    let ncf_prime =
        ncf0 * (1.0 + baseline.eta * (s_rho1_prime - baseline.s_rho[0]) / baseline.s_rho[0]);
    let k2_prime = one_minus_delta * baseline.k[1] + ncf_prime;
    let gt_prime = s_rho1_prime * ncf_prime;

    // 4. Transformed share structure and the Leontief system.
    let (a, _, a_l) = share_structure(model, &state.prices, baseline.factors)?;
    for j in 0..n {
        let col_sum: f64 = (0..n).map(|i| a[(i, j)]).sum();
        if col_sum >= 1.0 {
            return Err(Error::Singular(format!(
                "input coefficients of sector {} absorb the whole unit cost",
                j + 1
            )));
        }
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let lu = (&eye - &a).lu();

    // 5. Budget / consumption / labor loop from the observed baseline.
    let b_shares: Vec<f64> = (0..n)
        .map(|i| prefs.mu[i] * (state.prices[i] / index_prime).powf(prefs.lambda))
        .collect();
    let mut b = baseline.b;
    let mut l = baseline.l;
    let mut converged = false;
    let mut iterations = 0;
    let mut final_demand = DVector::zeros(n);
    let mut outputs = DVector::zeros(n);
    while iterations < config.max_outer_iterations {
        iterations += 1;
        let b_new = baseline.factors.r * baseline.k[1] + baseline.factors.w * l
            - gt_prime
            - baseline.r_net;
        if b_new <= 0.0 {
            return Err(Error::validation(format!(
                "alternative budget collapsed to {b_new:.3e} for sector {shocked_sector}"
            )));
        }
        for i in 0..n {
            final_demand[i] =
                b_shares[i] * b_new + baseline.g_alloc[i] * gt_prime + baseline.net_exports[i];
        }
        outputs = lu
            .solve(&final_demand)
            .ok_or_else(|| Error::Singular("I - A' is singular".into()))?;
        let wage_bill: f64 = (0..n).map(|j| a_l[j] * outputs[j]).sum();
        let l_new = wage_bill / baseline.factors.w;

        let db = (b_new - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        let dl = (l_new - l).abs() / l.abs().max(f64::MIN_POSITIVE);
        b = b_new;
        l = l_new;
        if db < config.outer_tol && dl < config.outer_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence {
            iterations,
            residual: f64::NAN,
        });
    }

    let residual_vec = (&eye - &a) * &outputs - &final_demand;
    let leontief_residual = residual_vec.amax() / final_demand.amax().max(f64::MIN_POSITIVE);

    // 6. Welfare valued at the ex ante price index.
    let welfare_gain =
        (b / index_prime - baseline.b / baseline.index) * baseline.index
            - baseline.factors.w * (l - baseline.l);

    Ok(CounterfactualOutcome {
        sector: shocked_sector,
        theta_prime: theta_prime.to_vec(),
        prices: state.prices,
        price_index: index_prime,
        b_prime: b,
        l_prime: l,
        k2_prime,
        s_rho1_prime,
        welfare_gain,
        effectiveness: f64::NAN,
        converged,
        iterations,
        leontief_residual,
    })
}

/// Technology systems compared by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemVariant {
    EmpiricalCes,
    CobbDouglas,
    Leontief,
}

impl SystemVariant {
    pub const ALL: [SystemVariant; 3] = [
        SystemVariant::EmpiricalCes,
        SystemVariant::CobbDouglas,
        SystemVariant::Leontief,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SystemVariant::EmpiricalCes => "ces",
            SystemVariant::CobbDouglas => "cobb_douglas",
            SystemVariant::Leontief => "leontief",
        }
    }
}

/// Swap every nest onto the variant's elasticity while keeping the share
/// parameters, which preserves the t = 1 cost shares exactly.
pub fn variant_model(model: &EconomyModel, variant: SystemVariant) -> EconomyModel {
    match variant {
        SystemVariant::EmpiricalCes => model.clone(),
        SystemVariant::CobbDouglas | SystemVariant::Leontief => {
            let mut out = model.clone();
            for tech in &mut out.technologies {
                for nest in &mut tech.nests {
                    match variant {
                        SystemVariant::CobbDouglas => {
                            nest.gamma = 0.0;
                            nest.form = NestForm::CobbDouglasLimit;
                        }
                        SystemVariant::Leontief => {
                            nest.gamma = 1.0;
                            nest.form = NestForm::Linear;
                        }
                        SystemVariant::EmpiricalCes => unreachable!(),
                    }
                }
            }
            out
        }
    }
}

/// One row of the sweep output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub system: SystemVariant,
    pub sector: usize,
    pub welfare_gain: f64,
    pub effectiveness: f64,
    /// 1 = most effective within the system.
    pub effectiveness_rank: usize,
    /// Position of the sector in the stream order.
    pub stream_rank: usize,
    pub classification: Option<String>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub outcomes: Vec<(SystemVariant, CounterfactualOutcome)>,
}

/// Inject the configured shock into every sector under each system
/// variant. Per-sector failures are recorded and the sweep continues.
pub fn run_shock_sweep(
    model: &EconomyModel,
    baseline: &Baseline,
    config: &CounterfactualConfig,
    systems: &[SystemVariant],
    classification: Option<&[String]>,
) -> SweepReport {
    let n = model.n_sectors();
    let theta1 = model.theta(1);
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();

    for &system in systems {
        let sys_model = variant_model(model, system);
        let results: Vec<(usize, Result<CounterfactualOutcome>)> = (1..=n)
            .into_par_iter()
            .map(|k| {
                let run = inject_shock(&theta1, k, config.shock_size, baseline.outputs[k - 1])
                    .and_then(|theta_prime| {
                        solve_alternative_equilibrium(&sys_model, baseline, config, &theta_prime, k)
                    })
                    .map(|mut outcome| {
                        outcome.effectiveness = effectiveness(
                            outcome.welfare_gain,
                            baseline.prefs.beta,
                            config.shock_size,
                        );
                        outcome
                    });
                (k, run)
            })
            .collect();

        // effectiveness ranks within the system (failures sink to the bottom)
        let mut ranked: Vec<(usize, f64)> = results
            .iter()
            .map(|(k, r)| {
                let eff = r
                    .as_ref()
                    .map(|o| o.effectiveness)
                    .unwrap_or(f64::NEG_INFINITY);
                (*k, eff)
            })
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let rank_of = |sector: usize| ranked.iter().position(|&(k, _)| k == sector).unwrap() + 1;

        for (k, result) in results {
            let stream_rank = model.order.rank_of(k).unwrap_or(k);
            let class = classification.and_then(|c| c.get(k - 1).cloned());
            match result {
                Ok(outcome) => {
                    rows.push(SweepRow {
                        system,
                        sector: k,
                        welfare_gain: outcome.welfare_gain,
                        effectiveness: outcome.effectiveness,
                        effectiveness_rank: rank_of(k),
                        stream_rank,
                        classification: class,
                        converged: outcome.converged,
                        error: None,
                    });
                    outcomes.push((system, outcome));
                }
                Err(e) => rows.push(SweepRow {
                    system,
                    sector: k,
                    welfare_gain: f64::NAN,
                    effectiveness: f64::NAN,
                    effectiveness_rank: rank_of(k),
                    stream_rank,
                    classification: class,
                    converged: false,
                    error: Some(e.to_string()),
                }),
            }
        }
    }

    SweepReport { rows, outcomes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_shock_leaves_theta_unchanged() {
        let theta = vec![1.0, 1.2, 0.9];
        let out = inject_shock(&theta, 2, 0.0, 100.0).unwrap();
        assert_eq!(out, theta);
    }

    #[test]
    fn shock_equal_to_output_doubles_theta() {
        let theta = vec![1.0, 1.2];
        let out = inject_shock(&theta, 2, 150.0, 150.0).unwrap();
        assert_relative_eq!(out[1], 2.4, epsilon = 1e-15);
        assert_eq!(out[0], 1.0);
    }

    #[test]
    fn marginal_shock_relative_change_is_exact_ratio() {
        let theta = vec![1.0];
        let (size, output) = (1e-6, 250.0);
        let out = inject_shock(&theta, 1, size, output).unwrap();
        assert_relative_eq!(out[0] / theta[0] - 1.0, size / output, epsilon = 1e-12);
    }

    #[test]
    fn invalid_sector_is_rejected() {
        assert!(inject_shock(&[1.0], 0, 1.0, 10.0).is_err());
        assert!(inject_shock(&[1.0], 2, 1.0, 10.0).is_err());
    }

    #[test]
    fn effectiveness_scales_gain_by_discount_and_size() {
        let beta = (1.03_f64).powi(5).recip();
        // gain equal to the shock size
        let got = effectiveness(5.0, beta, 5.0);
        let expected = 1.0 / (1.0 - beta);
        assert_relative_eq!(got, expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 7.278485713352529, epsilon = 1e-12);
        assert_eq!(effectiveness(0.0, beta, 5.0), 0.0);
    }

    #[test]
    fn variant_models_preserve_alpha_and_switch_forms() {
        use crate::ces::{NestInput, NestParams, SectorTechnology};
        use crate::stream::StreamOrder;
        let model = EconomyModel {
            technologies: vec![SectorTechnology {
                sector_id: 1,
                nests: vec![NestParams::new(NestInput::Capital, 0.3, -0.7)],
                theta0: 0.9,
                theta1: 1.0,
            }],
            order: StreamOrder::identity(1),
            normalization_period: 1,
        };
        let cd = variant_model(&model, SystemVariant::CobbDouglas);
        assert_eq!(cd.technologies[0].nests[0].form, NestForm::CobbDouglasLimit);
        assert_eq!(cd.technologies[0].nests[0].alpha, 0.3);
        let leo = variant_model(&model, SystemVariant::Leontief);
        assert_eq!(leo.technologies[0].nests[0].form, NestForm::Linear);
        assert_eq!(leo.technologies[0].nests[0].gamma, 1.0);
    }
}
