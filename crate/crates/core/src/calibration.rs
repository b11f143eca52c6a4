//! Restoring-parameter estimation.
//!
//! Each nest's share ratio obeys ln z = ln zeta + gamma ln(p/pi), where pi
//! is the compound price produced by the nest one stage inside. With two
//! observed periods the regression is a two-point fit: residuals vanish
//! and the fitted cascade reproduces both observed cost-share structures
//! exactly. Sectoral TFP falls out as the gap between the fitted unit
//! cost and the observed output price.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ces::{
    nest_unit_cost, NestForm, NestInput, NestParams, PriceVector, SectorTechnology,
    COBB_DOUGLAS_GAMMA_EPS,
};
use crate::equilibrium::{EconomyModel, FactorPrices};
use crate::error::{Error, Result};
use crate::iot::{compute_cost_shares, CostShareTable, LinkedIoTables};
use crate::stream::{build_incidence_for, derive_stream_order, OrderPeriod, StreamOrder};

/// Identification threshold on log price-ratio and log share-ratio
/// differences between the two periods.
pub const IDENT_EPS: f64 = 1e-12;

/// Upper clamp for a two-point gamma estimate that violates dual
/// concavity (gamma must stay below one).
pub const GAMMA_CLAMP: f64 = 0.999999;

/// Result of fitting one nest from two observations.
#[derive(Debug, Clone, Copy)]
pub struct TwoPointFit {
    pub alpha: f64,
    pub gamma: f64,
    pub form: NestForm,
    /// Set when the raw gamma estimate was >= 1 and had to be clamped.
    pub clamped: bool,
}

impl TwoPointFit {
    fn into_params(self, input: NestInput) -> NestParams {
        NestParams {
            input,
            alpha: self.alpha,
            gamma: self.gamma,
            form: self.form,
        }
    }
}

/// Exact two-point solution of the nest regression:
/// gamma = dln z / dx and ln zeta = (ln z0 x1 - ln z1 x0)/(x1 - x0),
/// with x_t the log price ratio ln(p_t/pi_t).
///
/// Degenerate inputs: when the price ratio did not move but the share
/// ratio did, the nest is unidentified; when neither moved the nest
/// collapses to the Cobb-Douglas limit with the period-1 implied share.
pub fn two_point_nest_params(z: [f64; 2], x: [f64; 2]) -> Result<TwoPointFit> {
    if z[0] <= 0.0 || z[1] <= 0.0 {
        return Err(Error::invalid(format!(
            "share ratios must be strictly positive, got {:?}",
            z
        )));
    }
    let lnz = [z[0].ln(), z[1].ln()];
    let dx = x[1] - x[0];
    let dz = lnz[1] - lnz[0];

    if dx.abs() < IDENT_EPS {
        if dz.abs() < IDENT_EPS {
            // Both ratios unchanged: the Cobb-Douglas limit with
            // zeta = z1 restores both periods.
            let alpha = z[1] / (1.0 + z[1]);
            return Ok(TwoPointFit {
                alpha,
                gamma: 0.0,
                form: NestForm::CobbDouglasLimit,
                clamped: false,
            });
        }
        return Err(Error::UnidentifiedNest {
            sector: 0,
            nest: 0,
            reason: format!(
                "price ratio unchanged (dx={dx:.3e}) while share ratio moved (dlnz={dz:.3e})"
            ),
        });
    }

    let mut gamma = dz / dx;
    let mut clamped = false;
    if gamma >= 1.0 {
        gamma = GAMMA_CLAMP;
        clamped = true;
    }
    let ln_zeta = (lnz[0] * x[1] - lnz[1] * x[0]) / dx;
    let zeta = ln_zeta.exp();
    let alpha = zeta / (1.0 + zeta);
    let form = if gamma.abs() < COBB_DOUGLAS_GAMMA_EPS {
        NestForm::CobbDouglasLimit
    } else {
        NestForm::Ces
    };
    Ok(TwoPointFit {
        alpha,
        gamma: if form == NestForm::CobbDouglasLimit { 0.0 } else { gamma },
        form,
        clamped,
    })
}

/// Calibration diagnostics worth surfacing per sector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum CalibrationFlag {
    GammaClamped { nest: usize, raw_gamma: f64 },
    CobbDouglasFallback { nest: usize },
    ZeroCapitalShare,
}

/// Per-nest intermediate quantities of one sector's calibration.
#[derive(Debug, Clone)]
pub struct CalibrationTrace {
    pub sector_id: usize,
    /// Compound state prices per nest level and period; pi[0] = wage.
    pub pi: Vec<[f64; 2]>,
    /// Share ratios z per nest and period (zero for a skipped capital nest).
    pub z: Vec<[f64; 2]>,
    /// Log price ratios ln(p/pi) per nest and period.
    pub x: Vec<[f64; 2]>,
    /// Max absolute regression residual per nest.
    pub residuals: Vec<f64>,
    /// Max absolute gap between restored and observed shares, both periods.
    pub restored_share_error: f64,
    pub flags: Vec<CalibrationFlag>,
}

/// Sectoral TFP measured two ways.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfpRecord {
    pub sector_id: usize,
    pub theta0: f64,
    pub theta1: f64,
    /// ln(theta1/theta0) from the calibrated unit cost.
    pub tfpg_cces: f64,
    /// Share-weighted Tornqvist log growth.
    pub tfpg_tornqvist: f64,
}

/// Calibrate one sector's cascade from observed shares and prices.
///
/// Nest 0 compounds capital with labor; intermediates follow in stream
/// order, skipping zero-flow inputs entirely. Prices must already be
/// normalized consistently across the two periods.
pub fn calibrate_sector(
    shares: &CostShareTable,
    prices: &[PriceVector; 2],
    order: &StreamOrder,
    sector: usize,
) -> Result<(SectorTechnology, CalibrationTrace)> {
    let n = shares.n_sectors;
    if sector == 0 || sector > n {
        return Err(Error::invalid(format!("sector {sector} out of range 1..={n}")));
    }
    let a_l = [shares.a_l[0][sector - 1], shares.a_l[1][sector - 1]];
    if a_l[0] <= 0.0 || a_l[1] <= 0.0 {
        return Err(Error::validation(format!(
            "sector {sector} must have a positive labor share in both periods"
        )));
    }
    let a_k = [shares.a_k[0][sector - 1], shares.a_k[1][sector - 1]];

    let mut flags = Vec::new();
    let mut nests = Vec::new();
    let mut trace_pi = vec![[prices[0].w, prices[1].w]];
    let mut trace_z = Vec::new();
    let mut trace_x = Vec::new();
    let mut residuals = Vec::new();

    // cumulative compound share (labor first, then capital, then inputs)
    let mut cum = a_l;
    let mut pi = [prices[0].w, prices[1].w];

    // Nest 0: capital against the labor state.
    let fit0 = if a_k[0] == 0.0 && a_k[1] == 0.0 {
        flags.push(CalibrationFlag::ZeroCapitalShare);
        trace_z.push([0.0, 0.0]);
        trace_x.push([
            (prices[0].r / pi[0]).ln(),
            (prices[1].r / pi[1]).ln(),
        ]);
        residuals.push(0.0);
        TwoPointFit {
            alpha: 0.0,
            gamma: 0.0,
            form: NestForm::CobbDouglasLimit,
            clamped: false,
        }
    } else if a_k[0] == 0.0 || a_k[1] == 0.0 {
        return Err(Error::UnidentifiedNest {
            sector,
            nest: 0,
            reason: "capital share is zero in exactly one period".into(),
        });
    } else {
        let z = [a_k[0] / cum[0], a_k[1] / cum[1]];
        let x = [(prices[0].r / pi[0]).ln(), (prices[1].r / pi[1]).ln()];
        let fit = attribute(two_point_nest_params(z, x), sector, 0)?;
        if fit.clamped {
            flags.push(CalibrationFlag::GammaClamped {
                nest: 0,
                raw_gamma: (z[1].ln() - z[0].ln()) / (x[1] - x[0]),
            });
        }
        if fit.form == NestForm::CobbDouglasLimit {
            flags.push(CalibrationFlag::CobbDouglasFallback { nest: 0 });
        }
        trace_z.push(z);
        trace_x.push(x);
        residuals.push(fit_residual(z, x, &fit));
        fit
    };
    let params0 = fit0.into_params(NestInput::Capital);
    for t in 0..2 {
        pi[t] = nest_unit_cost(prices[t].r, pi[t], &params0)?;
        cum[t] += a_k[t];
    }
    trace_pi.push(pi);
    nests.push(params0);

    // Intermediates in stream order, skipping zero-flow inputs.
    for &input_id in &order.permutation {
        let a = [
            shares.share(0, input_id, sector),
            shares.share(1, input_id, sector),
        ];
        if a[0] == 0.0 && a[1] == 0.0 {
            continue;
        }
        let nest_index = nests.len();
        if a[0] == 0.0 || a[1] == 0.0 {
            return Err(Error::UnidentifiedNest {
                sector,
                nest: nest_index,
                reason: format!("input {input_id} has a zero share in exactly one period"),
            });
        }
        if cum[0] <= 0.0 || cum[1] <= 0.0 {
            return Err(Error::validation(format!(
                "sector {sector}: cumulative share vanished before input {input_id}"
            )));
        }
        let z = [a[0] / cum[0], a[1] / cum[1]];
        let p_in = [prices[0].p[input_id - 1], prices[1].p[input_id - 1]];
        let x = [(p_in[0] / pi[0]).ln(), (p_in[1] / pi[1]).ln()];
        let fit = attribute(two_point_nest_params(z, x), sector, nest_index)?;
        if fit.clamped {
            flags.push(CalibrationFlag::GammaClamped {
                nest: nest_index,
                raw_gamma: (z[1].ln() - z[0].ln()) / (x[1] - x[0]),
            });
        }
        if fit.form == NestForm::CobbDouglasLimit {
            flags.push(CalibrationFlag::CobbDouglasFallback { nest: nest_index });
        }
        trace_z.push(z);
        trace_x.push(x);
        residuals.push(fit_residual(z, x, &fit));
        let params = fit.into_params(NestInput::Commodity(input_id));
        for t in 0..2 {
            pi[t] = nest_unit_cost(p_in[t], pi[t], &params)?;
            cum[t] += a[t];
        }
        trace_pi.push(pi);
        nests.push(params);
    }

    // TFP levels: theta_t = Pi_t / p_t for the sector's own commodity.
    let theta0 = pi[0] / prices[0].p[sector - 1];
    let theta1 = pi[1] / prices[1].p[sector - 1];
    let tech = SectorTechnology {
        sector_id: sector,
        nests,
        theta0,
        theta1,
    };

    // Restoration check: the fitted cascade must reproduce the observed
    // shares at both observed price points.
    let mut restored_share_error: f64 = 0.0;
    for t in 0..2 {
        let restored = crate::ces::cost_share_gradient(&prices[t], &tech)?;
        restored_share_error = restored_share_error
            .max((restored.a_k - a_k[t]).abs())
            .max((restored.a_l - a_l[t]).abs());
        for i in 1..=n {
            restored_share_error =
                restored_share_error.max((restored.a[i - 1] - shares.share(t, i, sector)).abs());
        }
    }

    Ok((
        tech,
        CalibrationTrace {
            sector_id: sector,
            pi: trace_pi,
            z: trace_z,
            x: trace_x,
            residuals,
            restored_share_error,
            flags,
        },
    ))
}

fn attribute(fit: Result<TwoPointFit>, sector: usize, nest: usize) -> Result<TwoPointFit> {
    fit.map_err(|e| match e {
        Error::UnidentifiedNest { reason, .. } => Error::UnidentifiedNest {
            sector,
            nest,
            reason,
        },
        other => other,
    })
}

fn fit_residual(z: [f64; 2], x: [f64; 2], fit: &TwoPointFit) -> f64 {
    let ln_zeta = (fit.alpha / (1.0 - fit.alpha)).ln();
    (0..2)
        .map(|t| (z[t].ln() - ln_zeta - fit.gamma * x[t]).abs())
        .fold(0.0, f64::max)
}

/// TFP growth of a calibrated sector: unit-cost growth less observed
/// output-price growth.
pub fn tfp_growth(tech: &SectorTechnology, prices: &[PriceVector; 2], p_out: [f64; 2]) -> Result<f64> {
    let pi0 = crate::ces::cascaded_unit_cost(&prices[0], tech)?;
    let pi1 = crate::ces::cascaded_unit_cost(&prices[1], tech)?;
    Ok((pi1 / pi0).ln() - (p_out[1] / p_out[0]).ln())
}

/// Tornqvist (translog-exact) TFP log growth for one sector.
pub fn tornqvist_tfpg(
    shares: &CostShareTable,
    prices: &[PriceVector; 2],
    sector: usize,
) -> Result<f64> {
    let n = shares.n_sectors;
    if sector == 0 || sector > n {
        return Err(Error::invalid(format!("sector {sector} out of range 1..={n}")));
    }
    let j = sector - 1;
    let mut total = 0.0;
    for i in 1..=n {
        let a0 = shares.share(0, i, sector);
        let a1 = shares.share(1, i, sector);
        if a0 > 0.0 || a1 > 0.0 {
            total += 0.5 * (a0 + a1) * (prices[1].p[i - 1] / prices[0].p[i - 1]).ln();
        }
    }
    total += 0.5 * (shares.a_l[0][j] + shares.a_l[1][j]) * (prices[1].w / prices[0].w).ln();
    total += 0.5 * (shares.a_k[0][j] + shares.a_k[1][j]) * (prices[1].r / prices[0].r).ln();
    total -= (prices[1].p[j] / prices[0].p[j]).ln();
    Ok(total)
}

/// A full calibrated economy in period-1 normalized units.
#[derive(Debug, Clone)]
pub struct CalibratedEconomy {
    pub model: EconomyModel,
    /// Normalized factor prices per period (period 1 is (1, 1)).
    pub factor_prices: [FactorPrices; 2],
    /// Normalized observed commodity prices per period.
    pub observed_prices: [Vec<f64>; 2],
    pub tfp: Vec<TfpRecord>,
    pub traces: Vec<CalibrationTrace>,
}

impl CalibratedEconomy {
    pub fn price_vector(&self, t: usize) -> PriceVector {
        PriceVector {
            p: self.observed_prices[t].clone(),
            r: self.factor_prices[t].r,
            w: self.factor_prices[t].w,
        }
    }
}

/// Calibrate every sector of a table set. Prices are standardized at
/// t = 1 first; the stream order is derived from the requested period's
/// incidence.
pub fn calibrate_economy(
    tables: &LinkedIoTables,
    order_period: OrderPeriod,
) -> Result<CalibratedEconomy> {
    let normalized = tables.normalized_at_t1();
    let shares = compute_cost_shares(&normalized)?;
    let incidence = build_incidence_for(&normalized, order_period)?;
    let order = derive_stream_order(&incidence)?;

    let prices = [
        PriceVector {
            p: normalized.price[0].clone(),
            r: normalized.capital_price[0],
            w: normalized.wage[0],
        },
        PriceVector {
            p: normalized.price[1].clone(),
            r: normalized.capital_price[1],
            w: normalized.wage[1],
        },
    ];

    let results: Result<Vec<_>> = (1..=normalized.n_sectors)
        .into_par_iter()
        .map(|j| calibrate_sector(&shares, &prices, &order, j))
        .collect();
    let results = results?;

    let mut technologies = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    let mut tfp = Vec::with_capacity(results.len());
    for (tech, trace) in results {
        let tfpg_cces = (tech.theta1 / tech.theta0).ln();
        let tfpg_tornqvist = tornqvist_tfpg(&shares, &prices, tech.sector_id)?;
        tfp.push(TfpRecord {
            sector_id: tech.sector_id,
            theta0: tech.theta0,
            theta1: tech.theta1,
            tfpg_cces,
            tfpg_tornqvist,
        });
        traces.push(trace);
        technologies.push(tech);
    }

    let model = EconomyModel {
        technologies,
        order,
        normalization_period: 1,
    };
    model.validate()?;
    Ok(CalibratedEconomy {
        model,
        factor_prices: [
            FactorPrices {
                r: prices[0].r,
                w: prices[0].w,
            },
            FactorPrices {
                r: prices[1].r,
                w: prices[1].w,
            },
        ],
        observed_prices: [normalized.price[0].clone(), normalized.price[1].clone()],
        tfp,
        traces,
    })
}

// ---------------------------------------------------------------------------
// Stagewise OLS for longer panels
// ---------------------------------------------------------------------------

/// Panel of nest observations over T+1 periods.
#[derive(Debug, Clone)]
pub struct NestPanel {
    /// z[n][t]: share ratio of nest n at period t.
    pub z: Vec<Vec<f64>>,
    /// p[n][t]: price of nest n's input at period t.
    pub p: Vec<Vec<f64>>,
    /// Initial compound state per period (the wage path).
    pub pi0: Vec<f64>,
}

/// Stagewise fit: per-nest parameters plus the value-function summands.
#[derive(Debug, Clone)]
pub struct StagewiseFit {
    pub nests: Vec<TwoPointFit>,
    /// Sum of squared residuals per nest.
    pub ssr: Vec<f64>,
    /// Advanced states pi[n][t] for n = 0..=N.
    pub states: Vec<Vec<f64>>,
}

/// Forward stagewise OLS for the nest-wise least squares problem: fit
/// each nest conditional on the current state, then advance the state by
/// the fitted transition. With exactly two periods this reduces to the
/// exact two-point solution and every summand is zero.
pub fn stagewise_ols_params(panel: &NestPanel) -> Result<StagewiseFit> {
    let n_nests = panel.z.len();
    let periods = panel.pi0.len();
    if periods < 2 {
        return Err(Error::invalid("panel needs at least two periods"));
    }
    if panel.p.len() != n_nests {
        return Err(Error::invalid("z and p must cover the same nests"));
    }
    for (n, (z, p)) in panel.z.iter().zip(panel.p.iter()).enumerate() {
        if z.len() != periods || p.len() != periods {
            return Err(Error::invalid(format!(
                "nest {n} observations do not cover all {periods} periods"
            )));
        }
        if z.iter().any(|&v| v <= 0.0) || p.iter().any(|&v| v <= 0.0) {
            return Err(Error::invalid(format!(
                "nest {n} has non-positive observations"
            )));
        }
    }

    let mut state = panel.pi0.clone();
    if state.iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("initial states must be strictly positive"));
    }
    let mut fits = Vec::with_capacity(n_nests);
    let mut ssr = Vec::with_capacity(n_nests);
    let mut states = vec![state.clone()];

    for n in 0..n_nests {
        let x: Vec<f64> = (0..periods)
            .map(|t| (panel.p[n][t] / state[t]).ln())
            .collect();
        let lnz: Vec<f64> = panel.z[n].iter().map(|&v| v.ln()).collect();

        let fit = if periods == 2 {
            attribute(two_point_nest_params([panel.z[n][0], panel.z[n][1]], [x[0], x[1]]), 0, n)?
        } else {
            ols_nest_fit(&lnz, &x, n)?
        };

        let ln_zeta = (fit.alpha / (1.0 - fit.alpha)).ln();
        let nest_ssr: f64 = (0..periods)
            .map(|t| {
                let e = lnz[t] - ln_zeta - fit.gamma * x[t];
                e * e
            })
            .sum();
        ssr.push(nest_ssr);

        let params = fit.into_params(NestInput::Commodity(n + 1));
        for t in 0..periods {
            state[t] = nest_unit_cost(panel.p[n][t], state[t], &params)?;
        }
        states.push(state.clone());
        fits.push(fit);
    }

    Ok(StagewiseFit {
        nests: fits,
        ssr,
        states,
    })
}

fn ols_nest_fit(lnz: &[f64], x: &[f64], nest: usize) -> Result<TwoPointFit> {
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_z = lnz.iter().sum::<f64>() / n;
    let var_x: f64 = x.iter().map(|&v| (v - mean_x).powi(2)).sum::<f64>() / n;
    let var_z: f64 = lnz.iter().map(|&v| (v - mean_z).powi(2)).sum::<f64>() / n;

    if var_x < 1e-18 {
        if var_z < 1e-18 {
            let zeta = mean_z.exp();
            return Ok(TwoPointFit {
                alpha: zeta / (1.0 + zeta),
                gamma: 0.0,
                form: NestForm::CobbDouglasLimit,
                clamped: false,
            });
        }
        return Err(Error::UnidentifiedNest {
            sector: 0,
            nest,
            reason: "regressor has no variance across the panel".into(),
        });
    }

    let cov: f64 = x
        .iter()
        .zip(lnz.iter())
        .map(|(&xv, &zv)| (xv - mean_x) * (zv - mean_z))
        .sum::<f64>()
        / n;
    let mut gamma = cov / var_x;
    let mut clamped = false;
    if gamma >= 1.0 {
        gamma = GAMMA_CLAMP;
        clamped = true;
    }
    let ln_zeta = mean_z - gamma * mean_x;
    let zeta = ln_zeta.exp();
    let form = if gamma.abs() < COBB_DOUGLAS_GAMMA_EPS {
        NestForm::CobbDouglasLimit
    } else {
        NestForm::Ces
    };
    Ok(TwoPointFit {
        alpha: zeta / (1.0 + zeta),
        gamma: if form == NestForm::CobbDouglasLimit { 0.0 } else { gamma },
        form,
        clamped,
    })
}
