mod clock;
pub mod error;
pub mod eval;
pub mod events;
pub mod gibbs;
pub mod io;
pub mod mask;
pub mod model;
pub mod rng;
pub mod state_io;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use gibbs::{run_chain, ChainConfig, PosteriorSamples};
pub use mask::{make_fiber_mask, split, FiberMask, HeldoutSet};
pub use model::{ChainRng, CoreEntries, CoreMode, EffectiveDims, Hyperparameters, ModelConfig, ModelState};
pub use tensor::{MultiIndex, SparseCountTensor};
