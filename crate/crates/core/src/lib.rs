//! Momentum-adversarial domain-invariant representation learning for
//! zero-shot dense retrieval, at desk scale.
//!
//! A feed-forward dual encoder is trained with a ranking loss on a labeled
//! source domain while a linear domain classifier, fitted on a momentum
//! queue of detached embeddings from recent batches, supplies an
//! adversarial signal that pulls the unlabeled target domain into the same
//! representation space.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`numerics`] | dot products, stable softmax / log-sum-exp, seeded RNG streams, gradient checking |
//! | [`synthdata`] | paired source/target corpora with a shared latent topic structure |
//! | [`encoder`] | the shared query/document encoder and its backward pass |
//! | [`objectives`] | ranking, discrimination and adversarial losses; the λ schedule |
//! | [`momentum`] | the momentum queue and the domain classifier |
//! | [`retrieval`] | exact top-k search and hard-negative mining |
//! | [`metrics`] | nDCG, KNN-Source%, Global/Local Domain-Acc |
//! | [`trainer`] | the joint training loop, checkpoints and resume |
//! | [`cli`] | the commands behind the `modir` binary |
//!
//! See `examples/` for one runnable program per capability.

pub mod cli;
pub mod encoder;
pub mod error;
pub mod metrics;
pub mod momentum;
pub mod numerics;
pub mod objectives;
pub mod optim;
pub mod retrieval;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
