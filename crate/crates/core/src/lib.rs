//! Transformer Q-networks whose feed-forward sublayer can be swapped for
//! (bi)directional recurrent cells, a sequence-replay DQN trainer, and an
//! experiment harness for partially observable tasks.
//!
//! ```
//! use dbgfqn::{EncoderConfig, QNetwork, Variant};
//! use rand::SeedableRng;
//!
//! let cfg = EncoderConfig::for_variant(Variant::Dbgfqn, 16, 3, 3);
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
//! let net: QNetwork = QNetwork::new(cfg, &mut rng).unwrap();
//! let q = net.act_values(&[vec![0.0, 0.0, 1.0]]).unwrap();
//! assert_eq!(q.len(), 3);
//! ```

pub mod config;
pub mod count;
pub mod error;
pub mod harness;
pub mod model;
pub mod rl;

#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    pub mod tensors {}
    #[doc = include_str!("../../../book/src/networks.md")]
    pub mod networks {}
    #[doc = include_str!("../../../book/src/environments.md")]
    pub mod environments {}
    #[doc = include_str!("../../../book/src/training.md")]
    pub mod training {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}

pub use dbgfqn_envs as envs;
pub use dbgfqn_tensor as tensor;

pub use config::{
    EncoderConfig, ExperimentConfig, LossPositions, SublayerVariant, TrainConfig, Variant,
};
pub use count::{parameter_count, ParameterReport};
pub use error::{Error, Result};
pub use model::{select_action, QNetwork};
