//! Brown-Resnick max-stable models for spatial block maxima, fitted in a latent
//! space built by multidimensional scaling.

pub mod brown_resnick;
pub mod covariance;
pub mod data;
pub mod error;
pub mod gev;
pub mod ideal_covariance;
pub mod io;
pub mod latent_warp;
pub mod madogram;
pub mod mds;
pub mod normal;
pub mod optim;
pub mod pipeline;
pub mod simulator;

pub use data::{FrechetMatrix, MaximaMatrix, StationSet};
pub use error::{Error, Result};
