//! Synthetic two-period economies with known ground truth.
//!
//! Technologies, TFP paths, factor prices, and household preferences are
//! drawn at random; both period equilibria are then solved exactly and
//! the tables are assembled so that every balance holds by construction.
//! Period 1 is generated already normalized (all prices one), which makes
//! the drawn parameters directly comparable with a later calibration.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::ces::{NestInput, NestParams, SectorTechnology};
use crate::equilibrium::{solve_prices, EconomyModel, FactorPrices, SolveOptions};
use crate::error::{Error, Result};
use crate::household::price_index;
use crate::iot::LinkedIoTables;
use crate::stream::StreamOrder;

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub n_sectors: usize,
    pub seed: u64,
    /// Probability that commodity i < j enters sector j's cascade.
    pub density: f64,
    pub alpha_range: (f64, f64),
    pub gamma_range: (f64, f64),
    /// Log TFP growth per sector; theta1 = 1 and theta0 = exp(-g).
    pub tfp_growth_range: (f64, f64),
    /// Log-uniform range for the period-0 factor prices.
    pub factor_price_range: (f64, f64),
    /// Household CES exponent (elasticity of substitution = 1 - lambda).
    pub lambda: f64,
    /// Five-year time preference factor.
    pub beta: f64,
    /// Five-year depreciation rate.
    pub delta: f64,
    /// Range for consumption as a fraction of value added.
    pub consumption_share: (f64, f64),
    pub final_demand_range: (f64, f64),
    pub max_retries: usize,
}

impl GeneratorConfig {
    pub fn new(n_sectors: usize, seed: u64) -> Self {
        GeneratorConfig {
            n_sectors,
            seed,
            density: 1.0,
            alpha_range: (0.05, 0.95),
            gamma_range: (-2.0, 0.9),
            tfp_growth_range: (-0.1, 0.1),
            factor_price_range: (0.8, 1.25),
            lambda: 1.09631,
            beta: (1.03_f64).powi(5).recip(),
            delta: 1.0 - (1.0 - 0.125_f64).powi(5),
            consumption_share: (0.5, 0.7),
            final_demand_range: (5.0, 15.0),
            max_retries: 10,
        }
    }
}

/// Everything the generator drew or derived, for use as a test oracle.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub technologies: Vec<SectorTechnology>,
    pub order: StreamOrder,
    pub factor_prices: [FactorPrices; 2],
    pub prices: [Vec<f64>; 2],
    pub mu: Vec<f64>,
    pub lambda: f64,
    pub beta: f64,
    pub delta: f64,
    /// Composite capital prices s_t * rho.
    pub s_rho: [f64; 2],
    /// Price elasticity of capital formation implied by the drawn path.
    pub eta_measured: f64,
    pub consumption_totals: [f64; 2],
    pub capital_formation_totals: [f64; 2],
    pub g_alloc: Vec<f64>,
    /// Capital service totals per period (service units).
    pub capital_services: [f64; 2],
    pub price_index: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SyntheticEconomy {
    pub tables: LinkedIoTables,
    pub truth: GroundTruth,
}

/// Draw an economy and assemble its linked tables. The same config and
/// seed always produce identical output.
pub fn generate_synthetic_economy(config: &GeneratorConfig) -> Result<SyntheticEconomy> {
    if config.n_sectors == 0 {
        return Err(Error::invalid("n_sectors must be at least 1"));
    }
    let mut last_reason = String::new();
    for attempt in 0..=config.max_retries {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed.wrapping_add(attempt as u64));
        match try_generate(config, &mut rng) {
            Ok(economy) => return Ok(economy),
            Err(e) => last_reason = e.to_string(),
        }
    }
    Err(Error::GenerationFailed {
        retries: config.max_retries,
        reason: last_reason,
    })
}

fn log_uniform(rng: &mut ChaCha12Rng, range: (f64, f64)) -> f64 {
    (rng.gen_range(range.0.ln()..range.1.ln())).exp()
}

fn try_generate(config: &GeneratorConfig, rng: &mut ChaCha12Rng) -> Result<SyntheticEconomy> {
    let n = config.n_sectors;

    // 1. Support: sector j may use commodities strictly upstream of it,
    //    so the incidence is triangular and the stream order is the
    //    identity by construction.
    let mut support = vec![false; n * n];
    for j in 1..=n {
        for i in 1..j {
            support[(i - 1) * n + (j - 1)] = rng.gen_bool(config.density);
        }
    }

    // 2. Technologies.
    let mut technologies = Vec::with_capacity(n);
    for j in 1..=n {
        let mut nests = vec![NestParams::new(
            NestInput::Capital,
            rng.gen_range(config.alpha_range.0..config.alpha_range.1),
            rng.gen_range(config.gamma_range.0..config.gamma_range.1),
        )];
        for i in 1..j {
            if support[(i - 1) * n + (j - 1)] {
                nests.push(NestParams::new(
                    NestInput::Commodity(i),
                    rng.gen_range(config.alpha_range.0..config.alpha_range.1),
                    rng.gen_range(config.gamma_range.0..config.gamma_range.1),
                ));
            }
        }
        let growth = rng.gen_range(config.tfp_growth_range.0..config.tfp_growth_range.1);
        technologies.push(SectorTechnology {
            sector_id: j,
            nests,
            theta0: (-growth).exp(),
            theta1: 1.0,
        });
    }

    // 3. Factor prices: period 1 normalized, period 0 drawn with an
    //    identification guard on the capital/labor price ratio.
    let mut r0 = log_uniform(rng, config.factor_price_range);
    let mut w0 = log_uniform(rng, config.factor_price_range);
    for _ in 0..32 {
        if (r0 / w0).ln().abs() >= 1e-3 {
            break;
        }
        r0 = log_uniform(rng, config.factor_price_range);
        w0 = log_uniform(rng, config.factor_price_range);
    }
    let factors = [
        FactorPrices { r: r0, w: w0 },
        FactorPrices { r: 1.0, w: 1.0 },
    ];

    let model = EconomyModel {
        technologies: technologies.clone(),
        order: StreamOrder::identity(n),
        normalization_period: 1,
    };
    let opts = SolveOptions::default();

    // 4. Both period equilibria.
    let state0 = solve_prices(&model, factors[0], &model.theta(0), None, &opts)?;
    let state1 = solve_prices(&model, factors[1], &model.theta(1), None, &opts)?;

    // 5. Gross outputs from drawn final demand: v = (I - A)^{-1} f.
    let solve_outputs = |a: &DMatrix<f64>, f: &[f64]| -> Result<Vec<f64>> {
        let eye = DMatrix::<f64>::identity(n, n);
        let lhs = &eye - a;
        let rhs = DVector::from_column_slice(f);
        lhs.lu()
            .solve(&rhs)
            .map(|v| v.iter().copied().collect())
            .ok_or_else(|| Error::Singular("I - A".into()))
    };
    let f0: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(config.final_demand_range.0..config.final_demand_range.1))
        .collect();
    let mut f1: Vec<f64> = (0..n)
        .map(|_| rng.gen_range(config.final_demand_range.0..config.final_demand_range.1))
        .collect();
    let v0 = solve_outputs(&state0.a, &f0)?;
    let mut v1 = solve_outputs(&state1.a, &f1)?;

    let capital_services = |state: &crate::equilibrium::EquilibriumState, v: &[f64], r: f64| {
        state
            .a_k
            .iter()
            .zip(v.iter())
            .map(|(&ak, &vj)| ak * vj / r)
            .sum::<f64>()
    };
    let k0 = capital_services(&state0, &v0, factors[0].r);
    let mut k1 = capital_services(&state1, &v1, factors[1].r);

    // keep net capital formation comfortably positive
    let floor = 1.25 * (1.0 - config.delta) * k0;
    if k1 < floor {
        let scale = floor / k1;
        for (v, f) in v1.iter_mut().zip(f1.iter_mut()) {
            *v *= scale;
            *f *= scale;
        }
        k1 = floor;
    }
    let ncf0 = k1 - (1.0 - config.delta) * k0;

    // 6. Household preferences and the capital-price path.
    let mut mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = mu.iter().sum();
    for m in mu.iter_mut() {
        *m /= total;
    }
    let i0 = price_index(&state0.prices, &mu, config.lambda)?;
    let i1 = price_index(&state1.prices, &mu, config.lambda)?;

    let s_rho0 = config.beta * factors[1].r * (i0 / i1) * rng.gen_range(1.5..3.0);
    let s_rho1 = ((i1 / i0) * s_rho0 / config.beta - factors[1].r) / (1.0 - config.delta);
    if s_rho1 <= 0.0 {
        return Err(Error::validation("drawn capital-price path is not positive"));
    }

    let gt0 = s_rho0 * ncf0;
    let ncf1 = ncf0 * rng.gen_range(0.9..1.3);
    let gt1 = s_rho1 * ncf1;
    let eta_measured = (ncf1 - ncf0) / (s_rho1 - s_rho0) * s_rho0 / ncf0;

    // 7. Consumption totals and allocations.
    let va0: f64 = (0..n)
        .map(|j| (state0.a_k[j] + state0.a_l[j]) * v0[j])
        .sum();
    let va1: f64 = (0..n)
        .map(|j| (state1.a_k[j] + state1.a_l[j]) * v1[j])
        .sum();
    let b0 = va0 * rng.gen_range(config.consumption_share.0..config.consumption_share.1);
    let b1 = va1 * rng.gen_range(config.consumption_share.0..config.consumption_share.1);

    let mut g_alloc: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = g_alloc.iter().sum();
    for g in g_alloc.iter_mut() {
        *g /= total;
    }

    // 8. Assemble nominal tables; labor and net exports are residuals so
    //    both balances hold bit-exactly.
    let mut tables = LinkedIoTables::zeros(n);
    for (t, (state, v)) in [(&state0, &v0), (&state1, &v1)].into_iter().enumerate() {
        let (b_total, gt_total, idx) = if t == 0 { (b0, gt0, i0) } else { (b1, gt1, i1) };
        tables.price[t] = state.prices.clone();
        tables.wage[t] = factors[t].w;
        tables.capital_price[t] = factors[t].r;
        for j in 1..=n {
            let vj = v[j - 1];
            tables.output[t][j - 1] = vj;
            tables.capital[t][j - 1] = state.a_k[j - 1] * vj;
            let mut inputs = 0.0;
            for i in 1..=n {
                let flow = state.a[(i - 1, j - 1)] * vj;
                tables.set_flow(t, i, j, flow);
                inputs += flow;
            }
            tables.labor[t][j - 1] = vj - tables.capital[t][j - 1] - inputs;
        }
        for i in 1..=n {
            let b_share = mu[i - 1] * (state.prices[i - 1] / idx).powf(config.lambda);
            tables.household[t][i - 1] = b_share * b_total;
            tables.capital_formation[t][i - 1] = g_alloc[i - 1] * gt_total;
            let uses: f64 = (1..=n).map(|j| tables.flow(t, i, j)).sum();
            tables.net_exports[t][i - 1] = tables.output[t][i - 1]
                - uses
                - tables.household[t][i - 1]
                - tables.capital_formation[t][i - 1];
        }
    }

    Ok(SyntheticEconomy {
        tables,
        truth: GroundTruth {
            technologies,
            order: StreamOrder::identity(n),
            factor_prices: factors,
            prices: [state0.prices, state1.prices],
            mu,
            lambda: config.lambda,
            beta: config.beta,
            delta: config.delta,
            s_rho: [s_rho0, s_rho1],
            eta_measured,
            consumption_totals: [b0, b1],
            capital_formation_totals: [gt0, gt1],
            g_alloc,
            capital_services: [k0, k1],
            price_index: [i0, i1],
        },
    })
}
