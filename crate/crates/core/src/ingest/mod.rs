//! Reading and writing feature trajectories, PCA preprocessing and the
//! synthetic branching generator.

mod manifest;
mod pca;
mod synth;

use std::borrow::Cow;

pub use manifest::{
    load_dataset, load_with_manifest, write_dataset, Manifest, ManifestInstance, DTYPE_F32LE,
    MANIFEST_VERSION,
};
pub use pca::{pca_fit, pca_reduce, PcaModel, DENSE_PCA_MAX_DIM};
pub use synth::{generate_synthetic, parse_schedule, Branch, SynthOutput, SynthSpec};

use crate::error::Result;
use crate::model::{EmbedConfig, EvolutionDataset};

/// The features the optimizer consumes: PCA-reduced when `config.pca_dims`
/// is below the input dimension, otherwise the input as is.
pub fn prepare_features<'a>(
    dataset: &'a EvolutionDataset,
    config: &EmbedConfig,
) -> Result<Cow<'a, EvolutionDataset>> {
    match config.pca_dims {
        Some(dims) if dims < dataset.feature_dim => Ok(Cow::Owned(pca_reduce(dataset, dims)?)),
        _ => Ok(Cow::Borrowed(dataset)),
    }
}
