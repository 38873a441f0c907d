//! Desk-scale laboratory for emergent compositional communication about
//! hidden physical properties.
//!
//! Senders observe frames of simulated scenes and emit factored discrete
//! messages through Gumbel-Softmax heads; a population of receivers answers
//! pairwise property comparisons from those messages. Training uses
//! population-based iterated learning, and the resulting protocols are scored
//! with positional disentanglement, bag-of-symbols disentanglement and
//! topographic similarity.

pub mod agents;
pub mod analysis;
pub mod env;
pub mod harness;
mod io;
pub mod metrics;
pub mod seed;
pub mod tensor;
pub mod training;
