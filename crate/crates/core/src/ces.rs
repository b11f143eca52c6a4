//! Cascaded CES unit-cost (dual) functions.
//!
//! A sector's production is modeled as a chain of binary compounding
//! processes: nest 0 compounds capital with labor, and each further nest
//! adds one intermediate input to the running compound. Under constant
//! returns the dual of each nest is
//!
//!   pi_next = (alpha * p^gamma + (1 - alpha) * pi^gamma)^(1/gamma)
//!
//! where `1 - gamma` is the nest's elasticity of substitution. Chaining
//! the nests gives the sector unit-cost function, its price gradient
//! (cost shares via Shephard's lemma), and the Allen-Uzawa / Morishima
//! substitution elasticities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this |gamma| a nest is treated as the exact Cobb-Douglas limit.
pub const COBB_DOUGLAS_GAMMA_EPS: f64 = 1e-9;

/// Below this |gamma| the CES form is evaluated in log-price space to
/// avoid cancellation in the x^gamma terms.
pub const LOG_SPACE_GAMMA_EPS: f64 = 1e-3;

/// Functional form of a single nest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NestForm {
    /// General CES, gamma < 1 and away from zero.
    Ces,
    /// gamma -> 0 limit: pi_next = p^alpha * pi^(1-alpha).
    CobbDouglasLimit,
    /// gamma = 1, the dual of a Leontief (fixed proportions) nest.
    Linear,
}

/// The priced input entering a nest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NestInput {
    /// Capital service, priced at `r`. Always the input of nest 0.
    Capital,
    /// Commodity `id` (1-based), priced at `p[id-1]`.
    Commodity(usize),
}

/// Parameters of one binary compounding nest.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NestParams {
    pub input: NestInput,
    pub alpha: f64,
    pub gamma: f64,
    pub form: NestForm,
}

impl NestParams {
    pub fn new(input: NestInput, alpha: f64, gamma: f64) -> Self {
        let form = if gamma.abs() < COBB_DOUGLAS_GAMMA_EPS {
            NestForm::CobbDouglasLimit
        } else if gamma == 1.0 {
            NestForm::Linear
        } else {
            NestForm::Ces
        };
        NestParams {
            input,
            alpha,
            gamma,
            form,
        }
    }

    /// Effective exponent used in derivative formulas (0 for the
    /// Cobb-Douglas limit, 1 for the linear form).
    pub fn effective_gamma(&self) -> f64 {
        match self.form {
            NestForm::Ces => self.gamma,
            NestForm::CobbDouglasLimit => 0.0,
            NestForm::Linear => 1.0,
        }
    }
}

/// Ordered cascade of nests for one sector, plus its TFP levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorTechnology {
    pub sector_id: usize,
    /// Nest 0 compounds capital with labor; later nests add intermediates
    /// following the economy's stream order. Zero-flow inputs are absent.
    pub nests: Vec<NestParams>,
    pub theta0: f64,
    pub theta1: f64,
}

impl SectorTechnology {
    pub fn validate(&self) -> Result<()> {
        if self.nests.is_empty() {
            return Err(Error::invalid(format!(
                "sector {} has no nests",
                self.sector_id
            )));
        }
        if self.nests[0].input != NestInput::Capital {
            return Err(Error::invalid(format!(
                "sector {}: nest 0 must compound capital with labor",
                self.sector_id
            )));
        }
        for (n, nest) in self.nests.iter().enumerate() {
            if n > 0 && nest.input == NestInput::Capital {
                return Err(Error::invalid(format!(
                    "sector {}: capital may only enter nest 0",
                    self.sector_id
                )));
            }
            if !(0.0..=1.0).contains(&nest.alpha) {
                return Err(Error::invalid(format!(
                    "sector {} nest {}: alpha {} outside [0,1]",
                    self.sector_id, n, nest.alpha
                )));
            }
            if nest.form == NestForm::Ces && nest.gamma >= 1.0 {
                return Err(Error::invalid(format!(
                    "sector {} nest {}: CES gamma {} must be < 1",
                    self.sector_id, n, nest.gamma
                )));
            }
        }
        if self.theta0 <= 0.0 || self.theta1 <= 0.0 {
            return Err(Error::invalid(format!(
                "sector {}: TFP levels must be positive",
                self.sector_id
            )));
        }
        Ok(())
    }

    /// Commodity ids used as intermediate inputs, in nest order.
    pub fn intermediate_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nests.iter().filter_map(|n| match n.input {
            NestInput::Commodity(id) => Some(id),
            NestInput::Capital => None,
        })
    }
}

/// Commodity prices plus the two primary factor prices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceVector {
    /// p[i] is the price of commodity i+1.
    pub p: Vec<f64>,
    pub r: f64,
    pub w: f64,
}

impl PriceVector {
    pub fn ones(n: usize) -> Self {
        PriceVector {
            p: vec![1.0; n],
            r: 1.0,
            w: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r <= 0.0 || self.w <= 0.0 || self.p.iter().any(|&x| x <= 0.0) {
            return Err(Error::invalid("prices must be strictly positive"));
        }
        Ok(())
    }

    fn input_price(&self, input: NestInput) -> Result<f64> {
        match input {
            NestInput::Capital => Ok(self.r),
            NestInput::Commodity(id) => {
                if id == 0 || id > self.p.len() {
                    Err(Error::invalid(format!(
                        "commodity id {} out of range 1..={}",
                        id,
                        self.p.len()
                    )))
                } else {
                    Ok(self.p[id - 1])
                }
            }
        }
    }
}

/// Cost shares of one sector: capital, labor, and a dense per-commodity row.
#[derive(Debug, Clone)]
pub struct SectorShares {
    pub a_k: f64,
    pub a_l: f64,
    /// a[i] is the cost share of commodity i+1 (zero when unused).
    pub a: Vec<f64>,
}

/// An input admissible in elasticity queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElastInput {
    Labor,
    Capital,
    Commodity(usize),
}

/// Unit cost of a single nest: compound the input priced `p_n` with the
/// inner compound priced `pi_n`.
pub fn nest_unit_cost(p_n: f64, pi_n: f64, params: &NestParams) -> Result<f64> {
    if p_n <= 0.0 || pi_n <= 0.0 {
        return Err(Error::invalid(format!(
            "non-positive price in nest evaluation: p={p_n}, pi={pi_n}"
        )));
    }
    let a = params.alpha;
    Ok(match params.form {
        NestForm::Linear => a * p_n + (1.0 - a) * pi_n,
        NestForm::CobbDouglasLimit => (a * p_n.ln() + (1.0 - a) * pi_n.ln()).exp(),
        NestForm::Ces => {
            let g = params.gamma;
            if g.abs() < LOG_SPACE_GAMMA_EPS {
                // expm1/ln_1p keep full precision when x^g is within
                // rounding of 1.
                let s = a * (g * p_n.ln()).exp_m1() + (1.0 - a) * (g * pi_n.ln()).exp_m1();
                (s.ln_1p() / g).exp()
            } else {
                (a * p_n.powf(g) + (1.0 - a) * pi_n.powf(g)).powf(1.0 / g)
            }
        }
    })
}

/// Per-nest quantities produced by a forward evaluation pass.
#[derive(Debug, Clone)]
pub(crate) struct CascadeStates {
    /// pi[n] is the compound price entering nest n; pi[0] = w and
    /// pi[nests+1] = unit cost.
    pub pi: Vec<f64>,
    /// Within-nest cost share of nest n's priced input.
    pub s: Vec<f64>,
    /// Input prices resolved per nest.
    pub price: Vec<f64>,
}

pub(crate) fn forward_states(prices: &PriceVector, tech: &SectorTechnology) -> Result<CascadeStates> {
    prices.validate()?;
    let n = tech.nests.len();
    let mut pi = Vec::with_capacity(n + 1);
    let mut s = Vec::with_capacity(n);
    let mut price = Vec::with_capacity(n);
    pi.push(prices.w);
    for nest in &tech.nests {
        let p_n = prices.input_price(nest.input)?;
        let inner = *pi.last().unwrap();
        let next = nest_unit_cost(p_n, inner, nest)?;
        s.push(within_nest_share(p_n, next, nest));
        price.push(p_n);
        pi.push(next);
    }
    Ok(CascadeStates { pi, s, price })
}

/// Share of the priced input within its own nest's compound cost.
fn within_nest_share(p_n: f64, pi_next: f64, params: &NestParams) -> f64 {
    let a = params.alpha;
    match params.form {
        NestForm::Linear => a * p_n / pi_next,
        NestForm::CobbDouglasLimit => a,
        NestForm::Ces => a * (params.gamma * (p_n.ln() - pi_next.ln())).exp(),
    }
}

/// Sector unit cost at the given prices (TFP not applied).
pub fn cascaded_unit_cost(prices: &PriceVector, tech: &SectorTechnology) -> Result<f64> {
    Ok(*forward_states(prices, tech)?.pi.last().unwrap())
}

/// Cost shares by Shephard's lemma: one forward pass for the compound
/// prices, then a backward telescoping of within-nest shares.
pub fn cost_share_gradient(prices: &PriceVector, tech: &SectorTechnology) -> Result<SectorShares> {
    let states = forward_states(prices, tech)?;
    let n = tech.nests.len();
    // tail[m] = product over nests >= m of (1 - s); tail[0] is the labor share.
    let mut tail = vec![1.0; n + 1];
    for m in (0..n).rev() {
        tail[m] = tail[m + 1] * (1.0 - states.s[m]);
    }
    let mut shares = SectorShares {
        a_k: 0.0,
        a_l: tail[0],
        a: vec![0.0; prices.p.len()],
    };
    for (m, nest) in tech.nests.iter().enumerate() {
        let share = states.s[m] * tail[m + 1];
        match nest.input {
            NestInput::Capital => shares.a_k = share,
            NestInput::Commodity(id) => shares.a[id - 1] = share,
        }
    }
    Ok(shares)
}

/// First and second derivatives of the nest dual with respect to its two
/// arguments, expressed through the within-nest share. Valid for all
/// three forms with gamma = effective_gamma.
struct NestDerivs {
    /// d pi_next / d p_n
    g: f64,
    /// d pi_next / d pi_n
    h: f64,
    /// d2 pi_next / d p_n^2
    c_pp: f64,
    /// d2 pi_next / d pi_n^2
    c_qq: f64,
}

fn nest_derivs(p_n: f64, pi_n: f64, pi_next: f64, s: f64, params: &NestParams) -> NestDerivs {
    let gamma = params.effective_gamma();
    let g = s * pi_next / p_n;
    let h = (1.0 - s) * pi_next / pi_n;
    // The mixed partial is (1 - gamma) g h / pi_next; it enters the AUES
    // formula only through the (1 - gamma)/pi_next factor used below.
    NestDerivs {
        g,
        h,
        c_pp: (gamma - 1.0) * (g / p_n) * (1.0 - s),
        c_qq: (gamma - 1.0) * (h / pi_n) * s,
    }
}

/// Nest index at which an input enters the cascade; labor is the initial
/// state and sorts before every nest.
fn entry_nest(tech: &SectorTechnology, input: ElastInput) -> Result<isize> {
    match input {
        ElastInput::Labor => Ok(-1),
        ElastInput::Capital => Ok(0),
        ElastInput::Commodity(id) => tech
            .nests
            .iter()
            .position(|n| n.input == NestInput::Commodity(id))
            .map(|p| p as isize)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "commodity {} is not an input of sector {}",
                    id, tech.sector_id
                ))
            }),
    }
}

/// Backward spine derivatives: d[m] = dPi/dpi_m and d2[m] = d2Pi/dpi_m^2.
struct Spine {
    d: Vec<f64>,
    d2: Vec<f64>,
}

fn spine(states: &CascadeStates, tech: &SectorTechnology) -> Spine {
    let n = tech.nests.len();
    let mut d = vec![0.0; n + 1];
    let mut d2 = vec![0.0; n + 1];
    d[n] = 1.0;
    d2[n] = 0.0;
    for m in (0..n).rev() {
        let nd = nest_derivs(
            states.price[m],
            states.pi[m],
            states.pi[m + 1],
            states.s[m],
            &tech.nests[m],
        );
        d[m] = d[m + 1] * nd.h;
        d2[m] = d2[m + 1] * nd.h * nd.h + d[m + 1] * nd.c_qq;
    }
    Spine { d, d2 }
}

/// Allen-Uzawa elasticity of substitution between two distinct inputs:
/// (C / C_i)(C_ij / C_j), evaluated analytically. For any pair it depends
/// only on the outer of the two entry nests; against the outermost input
/// it reduces to 1 - gamma_N.
pub fn aues(
    tech: &SectorTechnology,
    prices: &PriceVector,
    i: ElastInput,
    j: ElastInput,
) -> Result<f64> {
    if i == j {
        return Err(Error::invalid("AUES requires two distinct inputs"));
    }
    let states = forward_states(prices, tech)?;
    let sp = spine(&states, tech);
    let outer = entry_nest(tech, i)?.max(entry_nest(tech, j)?);
    debug_assert!(outer >= 0);
    Ok(cross_aues_at(&states, &sp, tech, outer as usize))
}

/// AUES between nest `outer`'s input and anything strictly inside it.
fn cross_aues_at(states: &CascadeStates, sp: &Spine, tech: &SectorTechnology, outer: usize) -> f64 {
    let total = *states.pi.last().unwrap();
    let gamma = tech.nests[outer].effective_gamma();
    // D, D2 taken one level above the entry nest (with respect to the
    // compound price that both inputs feed into).
    let d = sp.d[outer + 1];
    let d2 = sp.d2[outer + 1];
    total * d2 / (d * d) + (1.0 - gamma) * total / (d * states.pi[outer + 1])
}

/// Own-AUES C*C_jj / C_j^2, needed by the Morishima elasticity.
fn own_aues(states: &CascadeStates, sp: &Spine, tech: &SectorTechnology, j: ElastInput) -> f64 {
    let total = *states.pi.last().unwrap();
    match j {
        ElastInput::Labor => total * sp.d2[0] / (sp.d[0] * sp.d[0]),
        _ => {
            let m = match j {
                ElastInput::Capital => 0usize,
                ElastInput::Commodity(id) => tech
                    .nests
                    .iter()
                    .position(|n| n.input == NestInput::Commodity(id))
                    .expect("validated by caller"),
                ElastInput::Labor => unreachable!(),
            };
            let nd = nest_derivs(
                states.price[m],
                states.pi[m],
                states.pi[m + 1],
                states.s[m],
                &tech.nests[m],
            );
            let c_j = sp.d[m + 1] * nd.g;
            let c_jj = sp.d2[m + 1] * nd.g * nd.g + sp.d[m + 1] * nd.c_pp;
            total * c_jj / (c_j * c_j)
        }
    }
}

fn share_of(shares: &SectorShares, input: ElastInput) -> f64 {
    match input {
        ElastInput::Labor => shares.a_l,
        ElastInput::Capital => shares.a_k,
        ElastInput::Commodity(id) => shares.a[id - 1],
    }
}

/// Morishima elasticity of substitution eta^M_ij = a_j (eta^AU_ij - eta^AU_jj).
///
/// When `j` sits in an outer nest than `i` the value is exactly
/// 1 - gamma of j's nest; the capital/labor pair is symmetric at nest 0's
/// elasticity.
pub fn mes(
    tech: &SectorTechnology,
    prices: &PriceVector,
    i: ElastInput,
    j: ElastInput,
) -> Result<f64> {
    if i == j {
        return Err(Error::invalid("MES requires two distinct inputs"));
    }
    let e_i = entry_nest(tech, i)?;
    let e_j = entry_nest(tech, j)?;
    if e_j > e_i {
        return Ok(1.0 - tech.nests[e_j as usize].effective_gamma());
    }
    // Core pair: labor with respect to capital is symmetric.
    if i == ElastInput::Capital && j == ElastInput::Labor {
        return Ok(1.0 - tech.nests[0].effective_gamma());
    }
    let states = forward_states(prices, tech)?;
    let sp = spine(&states, tech);
    let cross = cross_aues_at(&states, &sp, tech, e_i.max(e_j) as usize);
    let own = own_aues(&states, &sp, tech, j);
    let shares = cost_share_gradient(prices, tech)?;
    Ok(share_of(&shares, j) * (cross - own))
}
