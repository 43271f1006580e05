//! Ground truth for known data-generating processes.
//!
//! A process is described by a small rule table (see [`DgpSpec`]). Its law
//! under any treatment assignment can be enumerated exactly, which gives the
//! true counterfactual risks and the exact value every estimator converges
//! to, or sampled to produce synthetic trials.

mod law;
mod spec;
mod truth;

pub use law::{dataset_from_law, enumerate, simulate, End, ExactLaw, Trajectory, MAX_TRAJECTORIES};
pub use spec::{Arms, DgpCovariate, DgpSpec, Draw, Rule, Target, When};
pub use truth::{
    dismissible_gaps, oracle_sensitivity_t, true_counterfactual_risk, true_risk_three_way, DismissibleGaps, ObservedLaw,
};
