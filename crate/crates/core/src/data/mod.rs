//! Audio I/O, the toy corpus, manifests, mixture preparation and checkpoints.

pub mod checkpoint;
pub mod manifest;
pub mod prepare;
pub mod toy;
pub mod wav;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use manifest::{Manifest, ManifestRow, Split};
pub use prepare::{load_sample, prepare, write_toy_corpus, PrepareConfig};
pub use toy::{toy_noise, toy_speech, ToyConfig};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav, BitDepth};
