//! Font-bootstrapped, MNIST-compatible Tamil vowel dataset generation and a
//! small from-scratch training engine for the fully-connected and
//! convolutional classifiers trained on it.

pub mod augment;
pub mod fontrender;
pub mod raster;
pub mod nn;
pub mod dataio;
pub mod traineval;
