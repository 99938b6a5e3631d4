//! Shared numeric kernel: Gaussian distribution functions, adaptive quadrature,
//! bracketed root finding, compensated summation, Kolmogorov–Smirnov helpers and
//! the counter-based random streams used by every simulation.

mod ks;
mod normal;
mod quad;
mod rng;
mod root;
mod sum;

pub use ks::{kolmogorov_pvalue, ks_one_sample, ks_two_sample};
pub use normal::{normal_cdf, normal_quantile, normal_sf};
pub use quad::{gauss_legendre_16, integrate, UpperLimit};
pub use rng::{component, RandomStream};
pub use root::find_root;
pub use sum::NeumaierSum;
