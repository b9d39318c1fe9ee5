//! Document-image token pruning.
//!
//! A small patch classifier scores every `P×P` tile of a page as text or
//! background, the resulting foreground mask is widened by a 3×3 max-pool,
//! and the surviving patches are emitted together with their original
//! raster indices so that a downstream vision encoder sees the same
//! positional layout it would have seen for the full page.
//!
//! The numeric code is generic over [`Real`]; the aliases below pin the
//! scalar types used by the file formats and the command-line tool.

pub mod classifier;
pub mod costmodel;
mod error;
pub mod imagegrid;
pub mod labeler;
pub mod maskops;
pub mod oracle;
pub mod pruner;
mod scalar;
pub mod synthdoc;
pub mod toyvit;

pub use error::{Error, ParseError, Result};
pub use scalar::Real;

pub use classifier::{average_precision, param_count, ClassifierModel, LogitMap, PatchDataset, TrainConfig};
pub use costmodel::{PipelineProfile, ReductionReport};
pub use imagegrid::{GrayImage, Patch, PatchGrid};
pub use labeler::{AnnotationSet, TextBox};
pub use maskops::BinaryMask;
pub use pruner::{IndexStrategy, PrunedTokenSet, Token};
pub use synthdoc::{SynthMode, SynthSpec};
pub use toyvit::{PosMode, ToyVit, ToyVitConfig};

/// Classifier with `f32` parameters, the precision of the model file.
pub type Classifier = ClassifierModel<f32>;
/// Double-precision classifier, used for gradient checks.
pub type Classifier64 = ClassifierModel<f64>;
/// Logits produced by [`Classifier`].
pub type Logits = LogitMap<f32>;
/// Toy encoder in `f64`; the index-equivalence checks run at this precision.
pub type ToyVit64 = ToyVit<f64>;
/// Toy encoder in `f32`.
pub type ToyVit32 = ToyVit<f32>;
