//! Evolutionary embeddings of iterative high-dimensional trajectories.
//!
//! Every sampled iteration of a generative process gets its own vertical
//! band (rectilinear layout) or concentric ring (radial layout). Within an
//! iteration, elements are placed by t-SNE; across iterations, each
//! instance's elements are pulled into alignment so that branching shows up
//! as diverging pathways.
//!
//! ```no_run
//! use evoembed::{ingest, optimizer, EmbedConfig};
//!
//! let synth = ingest::generate_synthetic(&ingest::SynthSpec::hierarchical(200, 6, 16, 4, 7))?;
//! let result = optimizer::embed(&synth.dataset, &EmbedConfig::radial())?;
//! println!("final loss {}", result.history.last().unwrap().total);
//! # Ok::<(), evoembed::EvoError>(())
//! ```

pub mod affinity;
pub mod bundle;
mod error;
pub mod ingest;
pub mod model;
pub mod optimizer;
mod par;
pub mod pathway;
pub mod quality;

pub use error::{EvoError, Result};
pub use model::{
    iteration_offsets, validate_dataset, EmbedConfig, EmbeddingState, EvolutionDataset, InstanceMeta, Layout,
    RepresentationKind, Violation,
};
pub use par::is_parallel;
