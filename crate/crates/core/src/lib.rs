pub mod bdm;
pub mod classifier;
pub mod ctm;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod generators;
pub mod io;
pub mod ode;
pub mod optimizer;
pub mod par;
pub mod pipeline;
pub mod plot;
pub mod robustness;
pub mod tensor;
pub mod weighting;

pub use error::{Error, Result};
pub use tensor::{BinaryTensor, Block};
