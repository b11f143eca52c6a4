//! Multi-sector general-equilibrium engine built from cascaded CES
//! unit-cost functions.
//!
//! The pipeline: ingest two-period linked input-output tables
//! ([`iot`]), derive the economy-wide nesting sequence ([`stream`]),
//! fit restoring nest parameters and sectoral TFP ([`calibration`]),
//! solve equilibrium prices by fixed-point feedback ([`equilibrium`]),
//! estimate household CES preferences ([`household`]), and extrapolate
//! structural transformation under productivity shocks
//! ([`counterfactual`]).

pub mod calibration;
pub mod ces;
pub mod counterfactual;
mod error;
pub mod equilibrium;
pub mod household;
pub mod iot;
pub mod stream;

pub use error::{Error, Result};

pub use calibration::{
    calibrate_economy, calibrate_sector, stagewise_ols_params, tfp_growth, tornqvist_tfpg,
    CalibratedEconomy, CalibrationFlag, CalibrationTrace, NestPanel, StagewiseFit, TfpRecord,
    TwoPointFit,
};
pub use ces::{
    aues, cascaded_unit_cost, cost_share_gradient, mes, nest_unit_cost, ElastInput, NestForm,
    NestInput, NestParams, PriceVector, SectorShares, SectorTechnology,
};
pub use counterfactual::{
    effectiveness, inject_shock, run_shock_sweep, solve_alternative_equilibrium, variant_model,
    Baseline, CounterfactualConfig, CounterfactualOutcome, SweepReport, SweepRow, SystemVariant,
};
pub use equilibrium::{
    halfway_state, interpolated_state, restore_structures, share_structure, solve_prices,
    EconomyModel, EquilibriumState, FactorPrices, HalfwayReport, SolveOptions,
};
pub use household::{
    estimate_lambda, estimate_lambda_ols, expenditure_shares, observations_from_tables,
    price_index, recover_capital_prices, AggregateAccounts, EstimationReport,
    HouseholdPreferences, ShareObservation,
};
pub use iot::{
    compute_cost_shares, generate_synthetic_economy, load_tables, load_tables_with, save_tables,
    CostShareTable, GeneratorConfig, GroundTruth, LinkedIoTables, SyntheticEconomy,
    ValidationOptions,
};
pub use stream::{
    build_incidence, build_incidence_for, ccdf_export, degree_ratios, derive_stream_order,
    IncidenceMatrix, OrderPeriod, StreamOrder,
};
