//! Three-stream recurrent classifier for dynamic hand gestures.
//!
//! Two pixel streams run per-frame convolutional feature extractors followed
//! by GRU/LSTM branches, a third stream runs stacked recurrent layers over
//! 258-value skeleton keypoints, and the three summaries are concatenated and
//! classified with a softmax head. Every gradient is computed by hand and can
//! be verified against central finite differences.

pub mod checks;
pub mod dataio;
pub mod error;
pub mod featurestreams;
pub mod linalg;
pub mod model;
pub mod params;
pub mod recurrent;
pub mod rng;
pub mod traineval;

pub use error::{Error, Result};
pub use linalg::Tensor;
pub use params::ParamSet;
