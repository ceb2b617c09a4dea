//! Endomorphisms of ℙ² and ℙ¹, skew products and the builtin families.

pub mod endo;
pub mod ratmap;
pub mod registry;

pub use endo::{eig2, op_norm2, perp_basis, EndoP2, ExceptionalMeta, Nondegeneracy};
pub use ratmap::{lattes_lemniscatic, power_map, RatMap1};
pub use registry::{
    builtin, f_star, f_star_fixed_point, f_star_perturbed, lattes_real_fixed_point, make_skew, make_skew_exact,
    monomial, resolve, MapRef,
};
