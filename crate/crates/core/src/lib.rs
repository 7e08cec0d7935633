//! Room awareness for robots on a point-symmetric field.
//!
//! The visual background around the field is modelled as colour histograms
//! on the tiles of a virtual cylinder. A particle filter over the viewing
//! azimuth compares perceived tiles against that model, and a behaviour
//! controller turns the resulting confidences into flip, purge and reset
//! commands for a field-landmark Monte-Carlo localization.

pub mod angle;
pub mod background_model;
pub mod colour;
pub mod confidence;
pub mod controller;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod orientation_filter;
pub mod selfloc;
pub mod sim;

pub use error::{Error, Result};
