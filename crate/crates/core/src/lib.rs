//! Small-amplitude traveling waves of Whitham-type equations and their
//! spectral stability.

pub mod kdv;
pub mod model;
pub mod newton;
pub mod solver;
pub mod spectral;
pub mod stability;
