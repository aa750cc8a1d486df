//! Exact discrete optimal transport between weighted point sets.
//!
//! Costs are Euclidean distances raised to `p ∈ {1, 2}`; transport plans come
//! from a network simplex over the complete bipartite graph, so every plan is
//! a basic feasible solution with at most `n + m − 1` positive entries.

mod cost;
mod distribution;
mod simplex;
mod table;
mod transport;

pub use cost::{pairwise_costs, CostMatrix, Exponent};
pub(crate) use cost::euclidean;
pub use distribution::{DiscreteDistribution, MASS_TOL};
pub use table::{ColumnScale, SiteTable};
pub use transport::{solve_transport, wasserstein, PairCosts, TransportPlan};
