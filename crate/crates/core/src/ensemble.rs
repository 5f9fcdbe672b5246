//! Fusion of per-layer head predictions.
//!
//! The fused distribution `q` minimizing `Σ_k KL(C^k ‖ q)` over the simplex is
//! the arithmetic mean of the head distributions `C^k`, so fusion is a plain
//! average. Regression heads are averaged the same way.

use alloc::format;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Mean of the head outputs.
pub fn fuse(heads: &[Matrix]) -> Result<Matrix> {
    let first = heads
        .first()
        .ok_or_else(|| Error::Parameter("cannot fuse an empty list of heads".into()))?;
    let mut total = first.clone();
    for (i, h) in heads.iter().enumerate().skip(1) {
        if h.shape() != first.shape() {
            return Err(Error::shape(
                "fuse",
                format!("{}x{}", first.rows(), first.cols()),
                format!("{}x{} at head {i}", h.rows(), h.cols()),
            ));
        }
        total.add_assign(h)?;
    }
    if heads.len() == 1 {
        return Ok(total);
    }
    Ok(total.scale(1.0 / heads.len() as f64))
}

/// `KL(r ‖ q) = Σ r_i·ln(r_i / q_i)`, with `0·ln 0 = 0`.
pub fn kl_divergence(r: &[f64], q: &[f64]) -> Result<f64> {
    if r.len() != q.len() {
        return Err(Error::shape("kl_divergence", r.len(), q.len()));
    }
    let mut total = 0.0;
    for (i, (&ri, &qi)) in r.iter().zip(q).enumerate() {
        if ri == 0.0 {
            continue;
        }
        if !(qi > 0.0) {
            return Err(Error::Domain(format!(
                "q[{i}] = {qi} is not positive where the head has mass {ri}"
            )));
        }
        total += ri * libm::log(ri / qi);
    }
    Ok(total)
}

/// `Σ_k KL(C^k ‖ q)` for single-sample head distributions.
pub fn kl_objective<R: AsRef<[f64]>>(heads: &[R], q: &[f64]) -> Result<f64> {
    heads.iter().map(|h| kl_divergence(h.as_ref(), q)).sum()
}
