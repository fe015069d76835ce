//! The learner: a recurrent network with dropout, its training loop, the
//! MC-dropout predictive distribution and the decision rules.

pub mod checkpoint;
pub mod decision;
pub mod network;
pub mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use decision::{decide, dkw_bound, DecisionRule, LearnerOutput, RuleVariant, DEFAULT_SAMPLES};
pub use network::{Architecture, ForwardMode, HiddenState, Normalization, PolicyInput, PolicyNetwork, INPUT_DIM};
pub use train::{train, Adam, Episode, TrainConfig};
