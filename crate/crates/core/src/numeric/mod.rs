pub mod exact;
pub mod jet;
pub mod poly;
pub mod proj;
pub mod scalar;
pub mod textfmt;
pub mod univariate;

pub use exact::Exact;
pub use jet::{Jet1, Jet2, JetMap};
pub use poly::{Coeff, HomPoly};
pub use proj::{Line, ProjPoint, P1, P2};
pub use scalar::{Cdd, Dd, Precision, Scalar, C64};
pub use univariate::{poly_roots, Root};
