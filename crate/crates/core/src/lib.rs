//! Instruction segmentation and a multi-level attention navigation model
//! for continuous vision-and-language navigation.
//!
//! - [`corpus`]: instruction records, the segmented JSON-lines format and vocabularies
//! - [`segment`]: rule-based sub-instruction segmentation with corpus statistics
//! - [`num`]: tensors, reverse-mode gradients, recurrent and attention layers
//! - [`model`]: the navigation model forward pass
//! - [`losses`]: peak attention loss, action and progress losses, the total objective
//! - [`harness`]: kinematics, metrics, synthetic episodes, training and trace export

pub mod corpus;
pub mod error;
pub mod num;
pub mod harness;
pub mod losses;
pub mod model;
pub mod segment;

pub use error::{Error, Result};
