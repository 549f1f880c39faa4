//! Discrete nonnegative distributions and the loss-function toolkit.
//!
//! Everything here works on finite-support distributions over `0..=K`. The
//! first-order loss function `L(q) = E[(D - q)^+]` and its complement
//! `L^(q) = E[(q - D)^+]` drive the stochastic routing model; the two are tied
//! by the identity `L^(q) - L(q) = q - E[D]` for every `q`.

mod dist;
mod linearize;
mod mle;

pub use dist::{DiscreteDist, DistError};
pub use linearize::{
    equal_probability_partition, linearize_complementary_loss, tangent_points, PartitionCell,
    PiecewiseLinear, Segment,
};
pub use mle::{fit_compound_poisson_mle, CompoundPoissonFit, MleError};

/// Per-period lost-sales shortage estimates for a given period `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LostSalesLoss {
    /// Exact decomposition: cumulative loss at `t` minus cumulative loss at `t-1`.
    pub exact: f64,
    /// Lost-sales approximation: cumulative loss evaluated at the argument
    /// inflated by the prior cumulative loss.
    pub approx: f64,
}

/// Shortage expected in period `t` (1-based) when the initial fuel position is
/// `q` and per-period consumptions are independent with the given
/// distributions.
///
/// Returns both the plain decomposition of the cumulative loss and the
/// lost-sales-corrected approximation. For `t = 1` the two coincide.
pub fn lost_sales_loss(per_period: &[DiscreteDist], t: usize, q: f64) -> LostSalesLoss {
    assert!(t >= 1 && t <= per_period.len(), "period out of range");
    let mut cum = DiscreteDist::point_mass(0);
    for d in &per_period[..t - 1] {
        cum = cum.convolve(d);
    }
    let prior = cum.loss(q);
    cum = cum.convolve(&per_period[t - 1]);
    LostSalesLoss {
        exact: cum.loss(q) - prior,
        approx: cum.loss(q + prior),
    }
}
