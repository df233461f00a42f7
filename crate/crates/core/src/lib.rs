#![no_std]

//! Coalitional free-energy toolkit.
//!
//! Everything here works on the subset lattice of `N` agents, stored densely
//! as `2^N`-long tables indexed by coalition bit mask:
//!
//! - [`lattice`]: value functions, Harsanyi dividends (fast Möbius/zeta
//!   transforms), exact and sampled Shapley values, truncation, synergy labels.
//! - [`gibbs`]: Gibbs posteriors over coalitions, the collective variational
//!   free energy and participation marginals.
//! - [`meanfield`]: pairwise energies, the mean-field self-consistency solver
//!   and softmax attention weights.
//! - [`strategic`]: product-form strategy profiles, best responses and
//!   epsilon-Nash certificates.
//! - [`analytic`]: symmetric Gaussian coalition models and domain presets.
//! - [`sweep`]: replicate aggregation, quadratic regression, curvature t-test
//!   and peak-precision extraction.
//!
//! The crate is `no_std` and only needs `alloc`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops mirror
// the symmetric-matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analytic;
mod error;
pub mod gibbs;
pub mod lattice;
mod math;
pub mod meanfield;
pub mod rng;
pub mod special;
pub mod strategic;
pub mod sweep;

pub use crate::error::{Error, Result};

pub use crate::analytic::{
    analytic_peak, sample_influence, Domain, DomainPreset, GaussianCoalitionModel, InfluenceSample,
    NoiseModel,
};
pub use crate::gibbs::{
    collective_free_energy, energy_from_game, gibbs_posterior, participation_marginals,
    verify_gibbs_optimality, CoalitionDistribution, EnergyTable, GibbsPosterior,
};
pub use crate::lattice::{
    classify_synergy, harsanyi_dividends, reconstruct_values, shapley_from_dividends,
    shapley_monte_carlo, truncate_dividends, CoalitionMask, DividendTable, ShapleyVector, Synergy,
    ValueTable,
};
pub use crate::meanfield::{
    attention_weights, compare_exact_meanfield, meanfield_fixed_point, meanfield_free_energy,
    MeanFieldOptions, MeanFieldSolution, PairwiseEnergy,
};
pub use crate::strategic::{
    agent_cost, best_response, epsilon_decay_scan, nash_certificate, profile_distribution,
    NashCertificate, StrategyProfile,
};
pub use crate::sweep::{
    aggregate, curvature_significance, find_beta_star, normalize_overlay, quadratic_fit, BetaStar,
    BetaStarMethod, QuadraticFit, SweepResult, SweepRow,
};
