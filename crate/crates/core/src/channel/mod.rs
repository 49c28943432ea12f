//! Synthetic position-tagged CSI: a geometric multipath model seen by a planar
//! array, scaled by a log-distance link budget.

mod geometry;
mod layout;
mod link;
mod scenario;
mod synth;

pub use geometry::{angles, direction, ArrayGeometry};
pub use layout::{LayoutKind, SpokeLayout};
pub use link::{fspl_1m_db, link_budget_snr, path_loss_db, LinkBudget};
pub use scenario::Scenario;
pub use synth::{grid_positions, synth_dataset, synth_map, synth_record, SceneConfig};
