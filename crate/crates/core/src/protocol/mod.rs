//! Sifting, error estimation and key accounting.

pub mod keyrate;
pub mod sifting;

pub use keyrate::{aes_gcm_capacity, binary_entropy, min_skr_for_capacity, secret_fraction, skr_from_rkr};
pub use sifting::{qber_estimate, sift, AliceRecord, BobRecord, QberEstimate, SiftedPair};
pub mod session;

pub use session::{analytic_rates, run_session, session_events, Mode, SessionConfig, SessionOutput, SessionResult};
