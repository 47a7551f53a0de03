//! Weakly-supervised boundary delineation with a reinforcement-learning
//! patch controller.
//!
//! A patch-level presence classifier, trained on binary labels only, acts
//! as the reward signal for a PPO controller that walks an image patch from
//! the image edge until the classifier fires. Termination centers from many
//! episodes are filtered, joined into a polygon and rasterized to a mask.

pub mod boundary;
pub mod classifier;
pub mod env;
pub mod error;
pub mod evalkit;
pub mod image;
pub mod nn;
pub mod patch;
pub mod pgm;
pub mod phantom;
pub mod ppo;
pub mod rng;

pub use boundary::geometry::{Point, Polygon};
pub use error::{Error, Result};
pub use image::{GrayImage, Mask};
pub use phantom::{Phantom, PhantomConfig};
