//! Special functions, small dense linear algebra, multivariate normal rectangle
//! probabilities and reproducible random streams.

mod linalg;
mod mvn;
mod normal;
mod rng;

pub use linalg::{cholesky, cholesky_solve, cholesky_with_tol, solve_factored, Matrix};
pub use mvn::{mvn_rect_prob, mvn_rect_prob_with, CorrMatrix, MvnEstimate, MvnOptions, MAX_DIM};
pub use normal::{chisq1_upper_quantile, chisq_sf, norm_cdf, norm_pdf, norm_quantile, norm_sf, two_sided_p};
pub use rng::{exp1, open01, stable_hash, RngStream};
