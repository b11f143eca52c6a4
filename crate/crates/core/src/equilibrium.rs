//! Equilibrium commodity prices as the fixed point of the unit-cost
//! feedback system p_j = C_j(p, r, w) / theta_j.
//!
//! The map is a contraction (each C_j is monotone and homogeneous of
//! degree one), so plain successive substitution converges to the unique
//! fixed point from any positive start.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ces::{cascaded_unit_cost, cost_share_gradient, PriceVector, SectorTechnology};
use crate::error::{Error, Result};
use crate::stream::StreamOrder;

/// Default relative sup-norm tolerance of the price iteration. Kept well
/// below the 1e-9 restoration acceptance so solver error never dominates.
pub const SOLVE_TOL: f64 = 1e-12;
pub const SOLVE_MAX_ITERATIONS: usize = 10_000;

/// The calibrated system: one technology per sector plus the ordering
/// metadata used to build the cascades.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EconomyModel {
    /// technologies[j-1] belongs to sector j.
    pub technologies: Vec<SectorTechnology>,
    pub order: StreamOrder,
    /// Period whose prices are standardized to one (always 1 here).
    pub normalization_period: usize,
}

impl EconomyModel {
    pub fn n_sectors(&self) -> usize {
        self.technologies.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.technologies.is_empty() {
            return Err(Error::invalid("model must cover at least one sector"));
        }
        for (idx, tech) in self.technologies.iter().enumerate() {
            if tech.sector_id != idx + 1 {
                return Err(Error::invalid(format!(
                    "technology at position {idx} has sector_id {}",
                    tech.sector_id
                )));
            }
            tech.validate()?;
        }
        Ok(())
    }

    pub fn theta(&self, t: usize) -> Vec<f64> {
        self.technologies
            .iter()
            .map(|tech| if t == 0 { tech.theta0 } else { tech.theta1 })
            .collect()
    }
}

/// Primary factor prices.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FactorPrices {
    pub r: f64,
    pub w: f64,
}

/// A solved price system together with the cost-share structure it
/// implies.
#[derive(Debug, Clone)]
pub struct EquilibriumState {
    pub prices: Vec<f64>,
    pub r: f64,
    pub w: f64,
    pub theta: Vec<f64>,
    /// Input coefficient matrix; entry (i, j) is commodity i's share in
    /// sector j's cost.
    pub a: DMatrix<f64>,
    pub a_k: Vec<f64>,
    pub a_l: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Optional under-relaxation: p_next = (1-d) F(p) + d p.
    pub damping: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: SOLVE_TOL,
            max_iterations: SOLVE_MAX_ITERATIONS,
            damping: None,
        }
    }
}

/// Solve the fixed point p = C(p, r, w) <theta>^-1 by successive
/// substitution from `p_init` (default: all ones).
pub fn solve_prices(
    model: &EconomyModel,
    factors: FactorPrices,
    theta: &[f64],
    p_init: Option<&[f64]>,
    opts: &SolveOptions,
) -> Result<EquilibriumState> {
    let n = model.n_sectors();
    if theta.len() != n {
        return Err(Error::invalid(format!(
            "theta has {} entries for {n} sectors",
            theta.len()
        )));
    }
    if factors.r <= 0.0 || factors.w <= 0.0 || theta.iter().any(|&t| t <= 0.0) {
        return Err(Error::invalid(
            "factor prices and TFP levels must be strictly positive",
        ));
    }
    let mut prices = match p_init {
        Some(p) if p.len() == n => p.to_vec(),
        Some(p) => {
            return Err(Error::invalid(format!(
                "p_init has {} entries for {n} sectors",
                p.len()
            )))
        }
        None => vec![1.0; n],
    };
    if prices.iter().any(|&p| p <= 0.0) {
        return Err(Error::invalid("initial prices must be strictly positive"));
    }

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let pv = PriceVector {
            p: prices.clone(),
            r: factors.r,
            w: factors.w,
        };
        let mut next = Vec::with_capacity(n);
        for (tech, &th) in model.technologies.iter().zip(theta) {
            next.push(cascaded_unit_cost(&pv, tech)? / th);
        }
        if let Some(d) = opts.damping {
            for (nx, &old) in next.iter_mut().zip(prices.iter()) {
                *nx = (1.0 - d) * *nx + d * old;
            }
        }
        residual = prices
            .iter()
            .zip(next.iter())
            .map(|(&old, &new)| (new - old).abs() / old.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        prices = next;
        if residual < opts.tol {
            let shares = share_structure(model, &prices, factors)?;
            return Ok(EquilibriumState {
                prices,
                r: factors.r,
                w: factors.w,
                theta: theta.to_vec(),
                a: shares.0,
                a_k: shares.1,
                a_l: shares.2,
                iterations,
                residual,
            });
        }
    }
    Err(Error::Convergence {
        iterations,
        residual,
    })
}

/// Cost-share structure (A, a_K, a_L) implied by the model at given
/// prices.
pub fn share_structure(
    model: &EconomyModel,
    prices: &[f64],
    factors: FactorPrices,
) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    let n = model.n_sectors();
    let pv = PriceVector {
        p: prices.to_vec(),
        r: factors.r,
        w: factors.w,
    };
    let mut a = DMatrix::zeros(n, n);
    let mut a_k = vec![0.0; n];
    let mut a_l = vec![0.0; n];
    for (j, tech) in model.technologies.iter().enumerate() {
        let shares = cost_share_gradient(&pv, tech)?;
        a_k[j] = shares.a_k;
        a_l[j] = shares.a_l;
        for i in 0..n {
            a[(i, j)] = shares.a[i];
        }
    }
    Ok((a, a_k, a_l))
}

/// Solve both observed periods. Under restoring parameters the returned
/// states reproduce the observed prices and cost-share structures.
pub fn restore_structures(
    model: &EconomyModel,
    factors: [FactorPrices; 2],
    opts: &SolveOptions,
) -> Result<(EquilibriumState, EquilibriumState)> {
    model.validate()?;
    let s0 = solve_prices(model, factors[0], &model.theta(0), None, opts)?;
    let s1 = solve_prices(model, factors[1], &model.theta(1), None, opts)?;
    Ok((s0, s1))
}

/// Equilibrium at a convex combination of the two periods' factor prices
/// and TFP levels: s = 0 is period 0, s = 1 is period 1.
pub fn interpolated_state(
    model: &EconomyModel,
    factors: [FactorPrices; 2],
    s: f64,
    opts: &SolveOptions,
) -> Result<EquilibriumState> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid(format!("interpolation weight {s} outside [0,1]")));
    }
    let mix = FactorPrices {
        r: (1.0 - s) * factors[0].r + s * factors[1].r,
        w: (1.0 - s) * factors[0].w + s * factors[1].w,
    };
    let theta: Vec<f64> = model
        .technologies
        .iter()
        .map(|t| (1.0 - s) * t.theta0 + s * t.theta1)
        .collect();
    solve_prices(model, mix, &theta, None, opts)
}

/// Halfway interpolation (arithmetic means of factor prices and TFPs)
/// with per-sector labor intensity growth relative to the restored
/// period-0 state.
#[derive(Debug, Clone)]
pub struct HalfwayReport {
    pub state: EquilibriumState,
    /// ln(a_L(halfway) / a_L(t=0)) per sector.
    pub labor_intensity_growth: Vec<f64>,
}

pub fn halfway_state(
    model: &EconomyModel,
    factors: [FactorPrices; 2],
    opts: &SolveOptions,
) -> Result<HalfwayReport> {
    let state0 = solve_prices(model, factors[0], &model.theta(0), None, opts)?;
    let state = interpolated_state(model, factors, 0.5, opts)?;
    let labor_intensity_growth = state
        .a_l
        .iter()
        .zip(state0.a_l.iter())
        .map(|(&half, &base)| (half / base).ln())
        .collect();
    Ok(HalfwayReport {
        state,
        labor_intensity_growth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ces::{NestInput, NestParams};
    use approx::assert_relative_eq;

    fn labor_only_model() -> EconomyModel {
        EconomyModel {
            technologies: vec![SectorTechnology {
                sector_id: 1,
                nests: vec![NestParams::new(NestInput::Capital, 0.0, 0.0)],
                theta0: 1.0,
                theta1: 1.0,
            }],
            order: StreamOrder::identity(1),
            normalization_period: 1,
        }
    }

    /// Two sectors feeding each other, Cobb-Douglas throughout.
    fn two_sector_cd_model() -> EconomyModel {
        let tech1 = SectorTechnology {
            sector_id: 1,
            nests: vec![
                NestParams::new(NestInput::Capital, 0.3, 0.0),
                NestParams::new(NestInput::Commodity(2), 0.25, 0.0),
            ],
            theta0: 0.8,
            theta1: 1.0,
        };
        let tech2 = SectorTechnology {
            sector_id: 2,
            nests: vec![
                NestParams::new(NestInput::Capital, 0.45, 0.0),
                NestParams::new(NestInput::Commodity(1), 0.35, 0.0),
            ],
            theta0: 1.2,
            theta1: 1.0,
        };
        EconomyModel {
            technologies: vec![tech1, tech2],
            order: StreamOrder::identity(2),
            normalization_period: 1,
        }
    }

    #[test]
    fn labor_only_sector_prices_at_wage_over_theta() {
        let model = labor_only_model();
        let state = solve_prices(
            &model,
            FactorPrices { r: 1.0, w: 1.0 },
            &[1.0],
            None,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(state.prices[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(state.a_l[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn theta_scaling_is_exact_without_intermediates() {
        // With no price feedback p_j = C_j(r, w)/theta_j, so scaling every
        // theta by c scales prices by exactly 1/c.
        let model = EconomyModel {
            technologies: vec![SectorTechnology {
                sector_id: 1,
                nests: vec![NestParams::new(NestInput::Capital, 0.4, -0.7)],
                theta0: 1.0,
                theta1: 1.0,
            }],
            order: StreamOrder::identity(1),
            normalization_period: 1,
        };
        let f = FactorPrices { r: 1.4, w: 0.8 };
        let base = solve_prices(&model, f, &[1.0], None, &SolveOptions::default()).unwrap();
        let scaled = solve_prices(&model, f, &[2.0], None, &SolveOptions::default()).unwrap();
        assert_relative_eq!(scaled.prices[0], base.prices[0] / 2.0, epsilon = 1e-12);
        assert_relative_eq!(scaled.a_k[0], base.a_k[0], epsilon = 1e-12);
    }

    #[test]
    fn cobb_douglas_fixed_point_matches_log_linear_solution() {
        // For a Cobb-Douglas system the fixed point solves
        // ln p = A^T ln p + (a_K ln r + a_L ln w - ln theta),
        // a 2x2 linear system invertible by hand.
        let model = two_sector_cd_model();
        let f = FactorPrices { r: 1.7, w: 0.6 };
        let theta = [0.9, 1.3];
        let state = solve_prices(&model, f, &theta, None, &SolveOptions::default()).unwrap();

        // constant CD shares
        let (a, a_k, a_l) = share_structure(&model, &[1.0, 1.0], f).unwrap();
        let c1 = a_k[0] * f.r.ln() + a_l[0] * f.w.ln() - theta[0].ln();
        let c2 = a_k[1] * f.r.ln() + a_l[1] * f.w.ln() - theta[1].ln();
        // ln p1 = a21 ln p2 + c1 ; ln p2 = a12 ln p1 + c2
        let (a21, a12) = (a[(1, 0)], a[(0, 1)]);
        let det = 1.0 - a21 * a12;
        let lp1 = (c1 + a21 * c2) / det;
        let lp2 = (c2 + a12 * c1) / det;
        assert_relative_eq!(state.prices[0], lp1.exp(), epsilon = 1e-10);
        assert_relative_eq!(state.prices[1], lp2.exp(), epsilon = 1e-10);
    }

    #[test]
    fn fixed_point_is_verified_on_return() {
        let model = two_sector_cd_model();
        let f = FactorPrices { r: 1.3, w: 0.9 };
        let theta = [1.1, 0.7];
        let state = solve_prices(&model, f, &theta, None, &SolveOptions::default()).unwrap();
        let pv = PriceVector {
            p: state.prices.clone(),
            r: f.r,
            w: f.w,
        };
        for (j, tech) in model.technologies.iter().enumerate() {
            let implied = cascaded_unit_cost(&pv, tech).unwrap() / theta[j];
            let rel = (implied - state.prices[j]).abs() / state.prices[j];
            assert!(rel < 1e-12, "sector {j}: residual {rel}");
        }
    }

    #[test]
    fn fixed_point_is_independent_of_start() {
        let model = two_sector_cd_model();
        let f = FactorPrices { r: 0.7, w: 1.8 };
        let theta = [1.0, 1.0];
        let base = solve_prices(&model, f, &theta, None, &SolveOptions::default()).unwrap();
        let doubled_init = vec![2.0, 2.0];
        let other = solve_prices(
            &model,
            f,
            &theta,
            Some(&doubled_init),
            &SolveOptions::default(),
        )
        .unwrap();
        for j in 0..2 {
            assert_relative_eq!(base.prices[j], other.prices[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn homogeneity_in_factor_prices() {
        let model = two_sector_cd_model();
        let theta = [1.0, 1.2];
        let base = solve_prices(
            &model,
            FactorPrices { r: 1.1, w: 0.9 },
            &theta,
            None,
            &SolveOptions::default(),
        )
        .unwrap();
        let k = 3.7;
        let scaled = solve_prices(
            &model,
            FactorPrices {
                r: 1.1 * k,
                w: 0.9 * k,
            },
            &theta,
            None,
            &SolveOptions::default(),
        )
        .unwrap();
        for j in 0..2 {
            assert_relative_eq!(scaled.prices[j], k * base.prices[j], epsilon = 1e-11);
        }
    }

    #[test]
    fn share_columns_sum_to_one() {
        let model = two_sector_cd_model();
        let state = solve_prices(
            &model,
            FactorPrices { r: 1.5, w: 0.5 },
            &[1.0, 1.0],
            None,
            &SolveOptions::default(),
        )
        .unwrap();
        for j in 0..2 {
            let total =
                state.a_k[j] + state.a_l[j] + (0..2).map(|i| state.a[(i, j)]).sum::<f64>();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_interpolation_returns_endpoint() {
        let model = two_sector_cd_model();
        let f = FactorPrices { r: 1.2, w: 0.8 };
        // same factor prices both periods and theta0 == theta1
        let mut m = model.clone();
        for tech in &mut m.technologies {
            tech.theta0 = 1.0;
            tech.theta1 = 1.0;
        }
        let report = halfway_state(&m, [f, f], &SolveOptions::default()).unwrap();
        let endpoint = solve_prices(&m, f, &m.theta(0), None, &SolveOptions::default()).unwrap();
        for j in 0..2 {
            assert_relative_eq!(report.state.prices[j], endpoint.prices[j], epsilon = 1e-11);
            assert!(report.labor_intensity_growth[j].abs() < 1e-11);
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let model = two_sector_cd_model();
        let opts = SolveOptions {
            tol: 1e-12,
            max_iterations: 2,
            damping: None,
        };
        let err = solve_prices(
            &model,
            FactorPrices { r: 9.0, w: 0.1 },
            &[3.0, 0.2],
            None,
            &opts,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }));
    }

    #[test]
    fn rejects_nonpositive_inputs() {
        let model = labor_only_model();
        assert!(solve_prices(
            &model,
            FactorPrices { r: -1.0, w: 1.0 },
            &[1.0],
            None,
            &SolveOptions::default()
        )
        .is_err());
        assert!(solve_prices(
            &model,
            FactorPrices { r: 1.0, w: 1.0 },
            &[0.0],
            None,
            &SolveOptions::default()
        )
        .is_err());
    }
}
