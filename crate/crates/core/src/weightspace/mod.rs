//! MLP weight-space layout and its permutation symmetry group.

mod arch;
mod group;
mod proximity;
mod weights;

pub use arch::{Architecture, FixedLayer, LayerSlot};
pub use group::{apply_action, apply_action_flat, GroupElement};
pub use proximity::{ln_factorial, nearest_nontrivial, proximity_bound, SearchMode, BRUTE_FORCE_MAX_WIDTH};
pub use weights::WeightVector;
