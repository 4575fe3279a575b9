//! Dense kernels: SVD, polar factor, Newton-Schulz, norms and spectral metrics.
//!
//! Everything here is a pure function of its inputs.

mod matrix;
mod newton_schulz;
mod spectral;
mod svd;

pub use matrix::{sign, Matrix};
pub use newton_schulz::{
    newton_schulz, ns_scan, scalar_ns_map, CoefficientSchedule, NsEnvelope, DEFAULT_NS_STEPS,
    FIXED_QUINTIC,
};
pub use spectral::{
    l1_norm, l2_norm, linf_norm, matrix_norms, spectral_norm, spectral_report, vector_norms,
    MatrixNorms, SpectralReport, VectorNorms,
};
pub use svd::{polar_ortho, rank_tolerance, singular_values, svd, Svd};
