//! Stop-loss reinsurance and TVaR capital allocation for mixed Erlang risks
//! joined by a multivariate Sarmanov distribution whose kernels are the
//! centred marginal densities `phi(x) = f(x) - E[f(X)]`.

pub mod aggregation;
pub mod dependence;
pub mod erlang;
pub mod error;
pub mod mixed_erlang;
pub mod model_file;
pub mod numerics;
pub mod oracle;
pub mod sarmanov;
pub mod stop_loss;
pub mod transforms;

pub use aggregation::{aggregate_single, tvar_allocate, AggregateRepresentation, AllocationReport};
pub use error::{Error, Result};
pub use mixed_erlang::{MixedErlang, Moments};
pub use model_file::ModelFile;
pub use numerics::Numerics;
pub use sarmanov::{Feasibility, PairCoefficient, RiskId, SarmanovModel};
pub use stop_loss::ReinsuredLaw;
