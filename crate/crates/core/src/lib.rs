//! FORCE and full-FORCE training of recurrent leaky integrate-and-fire
//! networks with rate and time-to-first-spike readouts.

pub mod error;
pub mod linalg;
pub mod neuron;
pub mod rls;
pub mod network;
pub mod signals;
pub mod seeds;
pub mod metrics;
pub mod trainer;
pub mod checkpoint;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use neuron::{Coding, NeuronParams, NeuronState, TtfsActivity, TtfsParams};
pub use rls::RlsState;
pub use signals::{generate, SignalKind, SignalSpec, SignalTrace};
pub use trainer::{evaluate, train, train_force, train_full_force, Model, Procedure, TrainConfig, TrainReport};
