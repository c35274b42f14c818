//! Optimal interpolation between prompt embeddings.
//!
//! * [`interp`] finds the point on the segment between two prompt embeddings
//!   that best matches a guidance prompt, scored against the guidance's
//!   perpendicular foot on that segment, and chains the search for three
//!   prompts.
//! * [`toy`] is a small seeded text-to-video model (convolutional
//!   patchify, joint attention, linear un-patchify) with its denoise loop.
//! * [`theory`] constructs or searches for videos that no finite prompt
//!   space can reach within a given radius.
//!
//! The crate is `no_std` with `alloc`. The `parallel` feature enables `std`
//! and evaluates curve entries, frames and witness candidates with rayon;
//! results are identical to the sequential build.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod interp;
pub mod rng;
pub mod tensor;
pub mod theory;
pub mod toy;

pub use error::{Error, Result};
pub use interp::{
    cosine_sim_curve, find_optimal, mix3, perpendicular_foot, CurveEntry, FinderOptions,
    MixSelection, OptimalSelection, OutputRule, PromptEmbedding, SimilarityCurve, DEFAULT_STEPS,
};
pub use tensor::{
    frob_inner, lerp, row_cosine_mean, EmbeddingMatrix, FeatureMap, Matrix, VideoTensor,
};
pub use theory::{
    any_function_witness_1d, ball_volume, bilipschitz_witness, covering_witness, integer_witness,
    BiLipschitzSetup, BoundKind, DiscreteVideoMap, WitnessReport,
};
pub use toy::{
    attention, attn3d, conv2d, generate, linear, AttentionWeights, ConvKernelBank, ToyModel,
    ToyModelConfig,
};
