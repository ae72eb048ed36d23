//! Grouped compression, synthetic instances, tensor files, reports, and the CLI.

pub mod bench;
pub mod cli;
mod group;
pub mod report;
pub mod run;
pub mod synth;
pub mod tensors;

pub use group::{compress_group, GroupCompression, LayerGroup};
pub use report::{RunRecord, CSV_HEADER};
pub use run::{run_unit, Artifact, Method, RunConfig};
pub use synth::{generate_synthetic, SynthKind, SynthSpec};
pub use tensors::{ingest_tensors, write_tensors, Dtype, TensorSet};
