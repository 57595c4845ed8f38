//! Objective terms: diagonal-Gaussian KL, margin ranking hinge and latent
//! entropy, each as a plain value function and (where trained) as a graph
//! builder.

use autodiff::{Graph, Var};

use crate::error::{Error, Result};
use crate::model::{LatentGaussian, LatentVars};

/// `KL(q || p) = sum_d [ln(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2]`.
pub fn kl_diag_gaussians(q: &LatentGaussian, p: &LatentGaussian) -> Result<f64> {
    if q.dim() != p.dim() || q.stddev.len() != q.dim() || p.stddev.len() != p.dim() {
        return Err(Error::Invalid(format!(
            "KL between dimensions {} and {}",
            q.dim(),
            p.dim()
        )));
    }
    if let Some(s) = q.stddev.iter().chain(&p.stddev).find(|s| !(**s > 0.0)) {
        return Err(Error::Invalid(format!("non-positive standard deviation {s}")));
    }
    Ok((0..q.dim())
        .map(|i| {
            let (mq, sq, mp, sp) = (q.mean[i], q.stddev[i], p.mean[i], p.stddev[i]);
            (sp / sq).ln() + (sq * sq + (mq - mp) * (mq - mp)) / (2.0 * sp * sp) - 0.5
        })
        .sum())
}

/// Graph form of [`kl_diag_gaussians`] (a `1 x 1` node).
pub fn kl_graph(g: &mut Graph, q: LatentVars, p: LatentVars) -> Result<Var> {
    let ln_sp = g.ln(p.std)?;
    let ln_sq = g.ln(q.std)?;
    let log_ratio = g.sub(ln_sp, ln_sq)?;
    let var_q = g.square(q.std)?;
    let gap = g.sub(q.mean, p.mean)?;
    let gap2 = g.square(gap)?;
    let num = g.add(var_q, gap2)?;
    let var_p = g.square(p.std)?;
    let den = g.scale(var_p, 2.0)?;
    let frac = g.div(num, den)?;
    let per_dim = g.add(log_ratio, frac)?;
    let per_dim = g.add_scalar(per_dim, -0.5)?;
    Ok(g.sum(per_dim)?)
}

/// `sum_{i,j} max(0, margin + pos_i - neg_ij)` over distances, where
/// `negatives[i]` are the corrupted distances paired with `positives[i]`.
pub fn margin_rank_loss(positives: &[f64], negatives: &[Vec<f64>], margin: f64) -> f64 {
    positives
        .iter()
        .zip(negatives)
        .flat_map(|(p, ns)| ns.iter().map(move |n| (margin + p - n).max(0.0)))
        .sum()
}

/// Graph form of [`margin_rank_loss`]: `pos` is `n x 1`, `neg` is
/// `(n * per_query) x 1` laid out query-major.
pub fn margin_rank_graph(
    g: &mut Graph,
    pos: Var,
    neg: Var,
    per_query: usize,
    margin: f64,
) -> Result<Var> {
    let n = g.shape(pos).0;
    if g.shape(neg).0 != n * per_query {
        return Err(Error::Invalid(format!(
            "{} negative scores for {n} queries x {per_query}",
            g.shape(neg).0
        )));
    }
    let rows: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, per_query)).collect();
    let pos = g.gather(pos, &rows)?;
    let gap = g.sub(pos, neg)?;
    let gap = g.add_scalar(gap, margin)?;
    let hinge = g.relu(gap)?;
    Ok(g.sum(hinge)?)
}

/// Differential entropy `d/2 ln(2 pi e) + sum ln sigma` of a diagonal Gaussian.
pub fn entropy_of_latent(dist: &LatentGaussian) -> f64 {
    let d = dist.stddev.len() as f64;
    0.5 * d * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
        + dist.stddev.iter().map(|s| s.ln()).sum::<f64>()
}
