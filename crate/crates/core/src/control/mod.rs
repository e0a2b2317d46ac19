//! Controlled PDMPs: expectation-optimal and threshold-optimal feedback.

mod hjb;
mod policy;
mod threshold;

pub use hjb::solve_hjb_expectation;
pub use policy::{Policy, PolicyKind};
pub use threshold::{evaluate_policy_cdf, solve_threshold, synthesize_policy, ThresholdOptions, ThresholdValue, TIE_TOL};
