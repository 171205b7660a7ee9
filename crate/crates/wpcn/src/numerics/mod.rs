//! Self-contained numerical kernels used by the solvers.

mod lp;
mod projection;
mod roots;
mod special;

pub use lp::{solve_lp, LpProblem, LpRow, LpSolution, Relation};
pub use projection::{project_duals, DualConstraints, DualVector, DUAL_DIM};
pub use roots::{bisect, positive_quadratic_root};
pub use special::{erfc, lambert_w0, snr_from_level, snr_level, z_from_lambda};
