//! Exact draws from conditionally Gaussian coefficient blocks.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

/// Draws from `N(Lambda^-1 b, Lambda^-1)` with
/// `Lambda = X' W X + prior_prec` and `b = X' W y + prior_shift`, where
/// `W = diag(1/obs_var)`. `prior_shift` is the prior precision times the
/// prior mean.
pub(crate) fn conjugate_gaussian_draw(
    x: &DMatrix<f64>,
    y: &[f64],
    obs_var: &[f64],
    prior_prec: &DMatrix<f64>,
    prior_shift: &DVector<f64>,
    rng: &mut ChaCha20Rng,
) -> Result<DVector<f64>, String> {
    let n = x.nrows();
    let p = x.ncols();
    debug_assert_eq!(y.len(), n);
    debug_assert_eq!(obs_var.len(), n);
    debug_assert_eq!(prior_prec.nrows(), p);

    // scale rows by 1/sqrt(var) so X'WX = Xs'Xs
    let mut xs = x.clone();
    let mut ys = DVector::zeros(n);
    for i in 0..n {
        let w = 1.0 / obs_var[i].sqrt();
        if !w.is_finite() {
            return Err("conjugate update: non-finite observation weight".to_string());
        }
        xs.row_mut(i).scale_mut(w);
        ys[i] = y[i] * w;
    }
    let mut lambda = xs.tr_mul(&xs) + prior_prec;
    let b = xs.tr_mul(&ys) + prior_shift;

    let scale = lambda.diagonal().amax().max(1.0);
    let mut chol: Option<Cholesky<f64, nalgebra::Dyn>> = None;
    for attempt in 0..4 {
        if attempt > 0 {
            let jitter = scale * 10f64.powi(-12 + 2 * attempt);
            for i in 0..p {
                lambda[(i, i)] += jitter;
            }
        }
        if let Some(c) = Cholesky::new(lambda.clone()) {
            chol = Some(c);
            break;
        }
    }
    let chol = chol.ok_or_else(|| "conjugate update: precision not positive definite".to_string())?;

    let mean = chol.solve(&b);
    let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
    // theta = mean + L^-T z
    let u = chol
        .l()
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or_else(|| "conjugate update: triangular solve failed".to_string())?;
    let draw = mean + u;
    if draw.iter().any(|v| !v.is_finite()) {
        return Err("conjugate update: non-finite draw".to_string());
    }
    Ok(draw)
}
