//! Control pairs, certificates, inequality chains, envelopes, Kato scans
//! and 3P constants.

mod certificate;
mod chain;
mod control;
mod envelope;
mod scans;

pub use certificate::{
    check_condition, fit_affine_control, AffineFit, Candidate, Certificate, DEFAULT_ETAS, NOISE_FACTOR,
};
pub use chain::{verify_envelope, verify_term_chain, ChainReport, ChainViolation, EnvelopeReport};
pub use control::{ControlPair, Superadditive};
pub use envelope::{envelope, product_bound, tail_sum};
pub use scans::{
    kato_implication, kato_scan, three_p_constant, three_p_ratio, three_p_sup, KatoImplication, KatoMode, KatoPoint,
    KatoScan, ThreePReport, Triple,
};
