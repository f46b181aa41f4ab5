//! Link-level simulation of a coded QPSK link whose transmitter and receiver
//! mixers suffer from IQ imbalance, decoded by belief propagation, bit flipping
//! or a trainable graph neural network.

pub mod autodiff;
pub mod classic;
pub mod codec;
pub mod error;
pub mod gnn;
pub mod harness;
pub mod impairments;
pub mod link;
pub mod modem;
pub mod tanner;
pub mod training;

pub use error::{Error, Result};
