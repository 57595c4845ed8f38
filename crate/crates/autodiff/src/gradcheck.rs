//! Central finite-difference gradient checking.

use crate::error::{shape_err, Result};
use crate::graph::{Graph, Matrix, Var};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero are judged on absolute error at this scale.
pub const REL_FLOOR: f64 = 1e-6;

/// Relative error between an analytic and a numeric derivative.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares reverse-mode gradients of a scalar-valued `f` with central
/// differences `(f(x + eps) - f(x - eps)) / 2 eps`, coordinate by
/// coordinate, and returns the worst relative error.
///
/// `f` receives a fresh graph and the input leaves each time it is called.
pub fn grad_check<F>(f: F, inputs: &[Matrix], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if eps <= 0.0 {
        return shape_err("grad_check", format!("eps {eps} must be positive"));
    }
    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = values
            .iter()
            .map(|v| g.input(v.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = f(&mut g, &vars)?;
        if g.shape(out) != (1, 1) {
            return shape_err("grad_check", format!("output {:?} is not scalar", g.shape(out)));
        }
        Ok(g.scalar(out))
    };

    let mut g = Graph::new();
    let vars = inputs
        .iter()
        .map(|v| g.input(v.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe: Vec<Matrix> = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(inputs[k].dim()));
        for idx in 0..inputs[k].len() {
            let (r, c) = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
            let orig = inputs[k][[r, c]];
            probe[k][[r, c]] = orig + eps;
            let up = eval(&probe)?;
            probe[k][[r, c]] = orig - eps;
            let down = eval(&probe)?;
            probe[k][[r, c]] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[[r, c]], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn squared_norm_is_exact() {
        let x = array![[0.3, -1.2, 2.5, 0.01]];
        let err = grad_check(
            |g, v| {
                let sq = g.square(v[0])?;
                g.sum(sq)
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn rejects_non_scalar_output() {
        let x = array![[1.0, 2.0]];
        assert!(grad_check(|g, v| g.relu(v[0]), &[x], 1e-5).is_err());
    }
}
