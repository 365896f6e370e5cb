//! Desk-scale order-fulfillment shortcutting: a synthetic network and order
//! generator, an exact split/no-split labeling optimizer, pre-decision
//! feature extraction, from-scratch probabilistic split classifiers, a
//! repeated nested cross-validation harness, and a confidence-thresholded
//! router that bypasses the optimizer with a linear node scan and measures
//! the work saved and the cost regret incurred.

pub mod domain;
pub mod eval;
pub mod features;
pub mod io;
pub mod model;
pub mod optimizer;
pub mod router;
pub mod synth;
