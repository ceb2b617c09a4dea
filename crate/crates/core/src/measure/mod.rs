//! Equilibrium measures: inverse-iteration sampling, pushforwards,
//! statistical comparison, Lyapunov exponents and product structure.

pub mod cloud;
pub mod compare;
pub mod lyapunov;
pub mod product;
pub mod sampler;
pub mod stats;

pub use cloud::{Cloud1, Cloud2, PointCloudMeasure, Provenance};
pub use compare::{compare_measures, Battery, ComparisonReport, TestFn, ZScore};
pub use lyapunov::{lyapunov, lyapunov_1d, LyapunovReport};
pub use product::{
    product_structure_1d, product_structure_2d, synthetic_cloud_1d, synthetic_cloud_2d, DiscDensity, LocalCoordinate,
    ProductReport, SliceProfile,
};
pub use sampler::{
    preimages_exact, pushforward_map, pushforward_pi, random_preimage, sample_chains, sample_chains_1d,
    sample_equilibrium, sample_equilibrium_1d,
};
