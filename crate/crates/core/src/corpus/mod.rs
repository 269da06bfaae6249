//! On-disk data: embeddings, manifests, labels, taxonomy, prompts and synthetic bundles.

pub mod embeddings;
pub mod labels;
pub mod synth;
pub mod taxonomy;

pub use embeddings::{load_embeddings, write_embeddings, EmbeddingMatrix, Kind, Manifest};
pub use labels::{consolidate_age, load_labels, AgeBand, AgeBucket, Gender, Label, LabelTable, Race};
pub use synth::{generate_synthetic_corpus, SynthSpec, SyntheticBundle};
pub use taxonomy::{render_prompts, Prompt, PromptSet, Taxonomy};
