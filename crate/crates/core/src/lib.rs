//! Online robust planning and learning for loop-free MDPs whose transition
//! kernel is known to be one of a finite set of prototypes.

pub mod analysis;
pub mod environments;
pub mod error;
pub mod family;
pub mod harness;
pub mod learning;
pub mod mdp;
pub mod occupancy;
pub mod planning;

pub use error::{Error, Result};
