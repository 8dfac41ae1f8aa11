//! Linearly implicit two-point flux finite volume scheme for the
//! local-sensing chemotaxis system
//!
//! ```text
//! d_t u = Lap(gamma(v) u),   eps d_t v = delta Lap v - beta v + u
//! ```
//!
//! with homogeneous Neumann conditions, together with the discrete
//! functionals used to monitor it (entropy, dissipation, dual norm).

pub mod mesh;
pub mod linsolve;
pub mod scheme;
pub mod diagnostics;
