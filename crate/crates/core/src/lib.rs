//! Advice-conditioned coordinate prediction in a simulated blocks world.
//!
//! A predictor reads an instruction and a board and outputs the source block
//! and target location. Short advice sentences, restricting the answer to a
//! region or nudging it in a direction, are grounded by pretrained models and
//! fed to the predictor as extra input.

pub mod advgen;
pub mod data;
pub mod gradcheck;
pub mod grounding;
pub mod lang;
pub mod nn;
pub mod predictor;
pub mod protocols;
pub mod rng;
pub mod world;

use thiserror::Error;

pub use rng::Rng;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] nn::NnError),
    #[error(transparent)]
    Lang(#[from] lang::LangError),
    #[error(transparent)]
    World(#[from] world::WorldError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Protocol(#[from] protocols::ProtocolError),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("missing model: {0}")]
    MissingModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
