//! Distribution-aware polynomial replacement of neural-network activations
//! under an inference-latency budget.
//!
//! The crate fits Gaussian-weighted least-squares polynomial approximations
//! of scalar activations in an orthonormal Hermite basis ([`approx`]),
//! profiles per-layer input statistics and loss sensitivity on a small dense
//! network ([`net`], [`sensitivity`]), models per-layer latency from profile
//! tables ([`runtime`]), and allocates per-layer polynomial degrees with a
//! dynamic program that minimizes the modeled loss variance under a
//! discretized runtime budget ([`dp`]).

pub mod activation;
pub mod approx;
pub mod dp;
pub mod error;
pub mod net;
pub mod runtime;
pub mod sensitivity;

pub use activation::ScalarActivation;
pub use approx::{fit, hermite_ortho, GaussianWeight, HermiteSeries, MseReport, Quadrature};
pub use dp::{brute_force, search_budget, solve_dp, tune_r, DpTable, Solution};
pub use error::{Error, ErrorFamily, Result};
pub use net::{Dataset, NetModel};
pub use runtime::{discretize, load_profile, DegreeSpace, DiscreteCostTable, RuntimeProfile};
pub use sensitivity::{collect_stats, loss_variance, MseTable, SensitivityProfile};
