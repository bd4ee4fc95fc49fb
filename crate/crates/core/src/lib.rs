pub mod error;
pub mod ganloss;
pub mod json;
pub mod metrics;
pub mod modality;
pub mod phantom;
pub mod pipeline;
pub mod registration;
mod spectral;
pub mod volume;

pub use error::{Error, Result};
