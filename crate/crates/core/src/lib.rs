//! Attention-wrapped hierarchical BLSTM relation classifier for drug-drug
//! interaction extraction.
//!
//! Pipeline: annotated corpus → entity-pair instances partitioned into
//! before/between/after parts → word, POS and distance embeddings → entity
//! attention → three part-wise BLSTMs → sentence-wide BLSTM → top attention →
//! softmax over five classes.

pub mod attention;
pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod evaluation;
pub mod init;
pub mod model;
pub mod recurrent;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod verify;

pub use autodiff::{Gradients, Tape, Var};
pub use corpus::Label;
pub use tensor::{Tensor, TensorError};
