//! File formats and command-line front end for `richspace-core`.
//!
//! * [`npy`]: NPY v1.0 tensors (`<f4`, C order), byte-compatible with numpy.
//! * [`formats`]: embedding manifests, similarity curves, video maps and
//!   witness reports.
//! * [`cli`]: the `richspace` binary.

pub mod cli;
pub mod formats;
pub mod npy;

pub use formats::{CurveFormat, FormatError, Manifest, MapFile};
pub use npy::{NpyError, Tensor};
