//! Metasurface-style multi-harmonic target sensing: a semi-analytic cylinder
//! scattering simulator, dataset generation, a small binary64 neural network
//! core, the multitask inverse model, the forward surrogate and the
//! experiment harness that ties them together.

pub mod dataset;
pub mod harness;
pub mod illumination;
pub mod model;
pub mod nncore;
pub mod scatter;
pub mod surrogate;
