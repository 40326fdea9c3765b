//! Online PCA by truncated rank-one eigendecomposition updates.

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod online;
pub mod rank_one;

pub use error::{Error, Result};
pub use linalg::{DenseVector, EigenPairs, SymmetricMatrix};
pub use online::{Algorithm, MuPolicy, OnlinePcaConfig, SpectralState};
pub use rank_one::{EigvecFormula, Order, RankOneUpdate};
