//! Scenario sampling and Monte Carlo simulation of correlated GBM baskets
//! under CIR-driven rates and either time-varying or local volatility.

mod cir;
mod correlation;
mod gbm;
mod scenario;

pub use cir::{simulate_cir, steps_for, CirParams, RatePath};
pub use correlation::{cholesky_from_angles, CholeskyFactor};
pub use gbm::{
    log_basket_return, simulate_terminal_prices_lv, simulate_terminal_prices_tv, TerminalPrices,
};
pub use scenario::{
    local_vol, sample_dirichlet_flat, sample_scenario_lv, sample_scenario_lv_at,
    sample_scenario_tv, sample_scenario_tv_at, GbmScenarioLv, GbmScenarioTv, LocalVolBox,
    LocalVolParams, MaturityLaw, ScenarioConfig,
};
