pub mod error;
pub mod equidist;
pub mod fixed;
pub mod phase;
pub mod rng;
pub mod sup;
pub mod vinogradov;
