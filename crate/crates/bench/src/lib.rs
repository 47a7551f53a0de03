//! Shared fixtures for the criterion benches.

use boundary_rl::classifier::{ClassifierConfig, ClassifierModel};
use boundary_rl::phantom::{generate_phantom, Phantom, PhantomConfig};

pub fn phantom() -> Phantom {
    generate_phantom(&PhantomConfig::default(), 11).expect("default phantom")
}

pub fn classifier() -> ClassifierModel {
    ClassifierModel::init(&ClassifierConfig::default(), 5).expect("classifier init")
}
