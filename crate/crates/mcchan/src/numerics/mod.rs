//! Numerically stable special functions, bracketed root finding and adaptive
//! quadrature used by the analytic channel formulas.

mod erf;
mod quad;
mod roots;

pub use erf::{erf, erfc, erfc_stable, erfcx, exp_erfc};
pub use quad::{integrate, QuadResult, QuadratureSpec};
pub use roots::{brent, solve_eigenvalues, EigenvalueSet};
