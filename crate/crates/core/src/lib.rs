//! Bias field correction for grayscale images.
//!
//! An observed image is modelled as `I(r) = i(r)·b(r) + n(r)`: a bias-free
//! image `i` multiplied by a smooth positive field `b`. The solver recovers
//! `b` by alternating closed-form minimization of a fuzzy c-means energy
//! over per-pixel memberships, class centers and a Gaussian-smoothed bias.
//!
//! Modules:
//! - [`grid`]: field types, masks, graymap and raw-float I/O
//! - [`energy`]: the energy functional, its three update rules and the smoothing kernel
//! - [`solver`]: initialization, alternation, stopping rule, corrected-image extraction
//! - [`synth`]: synthetic bias fields, phantoms and biased observations
//! - [`metrics`]: coefficient of variation, PSNR, SSIM
//! - [`cli`]: the `bfk` command-line front end

pub mod cli;
pub mod energy;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{ImageGrid, Mask, MembershipMap, ScalarField};
