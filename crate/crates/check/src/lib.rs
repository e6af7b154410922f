//! Reference computations for testing the main crate. Everything here is
//! written as directly as possible, with no code shared with the
//! implementations under test.

mod ari;
mod decode;
mod gradcheck;
mod pathlrp;
mod plant;
mod scalar_eval;

pub use ari::adjusted_rand;
pub use decode::{decode_class, decode_glyph, decode_tint, decoder_accuracy};
pub use gradcheck::{grad_check, GradCheckReport};
pub use pathlrp::path_relevance;
pub use plant::{gaussian_blobs, planted_affinity};
pub use scalar_eval::scalar_forward;
