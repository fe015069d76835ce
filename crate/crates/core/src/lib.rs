pub mod config;
pub mod control;
pub mod error;
pub mod eval;
pub mod imitation;
pub mod patient;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/patient-model.md")]
    mod patient_model {}
    #[doc = include_str!("../../../book/src/optimal-control.md")]
    mod optimal_control {}
    #[doc = include_str!("../../../book/src/policy-network.md")]
    mod policy_network {}
    #[doc = include_str!("../../../book/src/imitation.md")]
    mod imitation {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
