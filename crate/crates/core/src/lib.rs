//! Fourier-domain recognition of oscillatory actions in event-camera data.
//!
//! Events inside a region of interest are summarized into a per-bin rate
//! signal, transformed into a one-sided power spectrum, and classified either
//! by thresholding the normalized energy in a frequency band or by small
//! neural networks over the spectrum or the rate itself.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifiers;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod events_io;
pub mod pipeline;
pub mod rate;
pub mod spectral;
pub mod synth;
pub mod tuning;

pub use error::{Error, Result};
pub use events_io::{
    AnnotationTrack, Annotations, Event, EventStream, Label, LabeledWindow, Polarity, Roi, SensorSize,
};
pub use rate::{RateKind, RateSignal};
