//! Dense tensors, a reverse-mode differentiation tape, Adam, finite-difference
//! gradient checks and a flat checkpoint archive.
//!
//! ```
//! use dbgfqn_tensor::{Tape, Tensor};
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.var(Tensor::from_f64([3], &[1.0, 2.0, 3.0]).unwrap());
//! let loss = x.mul(x).unwrap().sum();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).unwrap(), &[2.0, 4.0, 6.0]);
//! ```

pub mod archive;
mod attention;
mod error;
pub mod gradcheck;
mod ops;
mod optim;
mod params;
mod recurrent;
mod scalar;
mod tape;
mod tensor;

pub use archive::Archive;
pub use attention::AttentionSpec;
pub use error::{Result, TensorError};
pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use ops::Activation;
pub use optim::{AdamConfig, AdamState};
pub use params::{Param, ParamId, ParamSet};
pub use recurrent::{CellKind, ScanSpec};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
