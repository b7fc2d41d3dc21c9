//! Central-finite-difference verification of backward rules.

use super::{Tape, Tensor, TensorError, Var};

/// Outcome of one gradient check. `max_rel_error` uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)` per coordinate.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Compare the tape's gradient of a scalar-valued function against central
/// finite differences, coordinate by coordinate.
pub fn grad_check(
    f: &dyn Fn(&Tape, Var) -> Result<Var, TensorError>,
    x: &Tensor,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport, TensorError> {
    let tape = Tape::new();
    let var = tape.param(x.clone());
    let loss = f(&tape, var.clone())?;
    loss.backward()?;
    let analytic = var
        .grad()
        .expect("param gradient populated by backward")
        .data()
        .to_vec();

    let eval = |point: &Tensor| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let var = tape.param(point.clone());
        f(&tape, var)?.value().scalar_value()
    };

    let mut numeric = vec![0.0; x.len()];
    for i in 0..x.len() {
        let mut hi = x.clone();
        hi.data_mut()[i] += step;
        let mut lo = x.clone();
        lo.data_mut()[i] -= step;
        numeric[i] = (eval(&hi)? - eval(&lo)?) / (2.0 * step);
    }

    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let denom = a.abs().max(n.abs()).max(1e-8);
        let rel = (a - n).abs() / denom;
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_has_exact_gradient() {
        let x = Tensor::from_vec(vec![0.3, -1.2, 4.0]);
        let report = grad_check(&|_t, v| Ok(v.sum_all()), &x, 1e-5, 1e-4).unwrap();
        assert!(report.passed());
        assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
    }

    #[test]
    fn softmax_cross_entropy_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let logits: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Tensor::from_vec(logits);
        // cross-entropy against class 2
        let f = |_t: &Tape, v: Var| -> Result<Var, TensorError> {
            let probs = v.softmax(0)?;
            let target = probs.slice_axis(0, 2, 1)?;
            Ok(target.log()?.neg().sum_all())
        };
        let report = grad_check(&f, &x, 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
    }

    #[test]
    fn wrong_backward_rule_is_reported() {
        // forward x^2 but claiming derivative 1
        let f = |_t: &Tape, v: Var| -> Result<Var, TensorError> {
            Ok(v.custom_unary(|x| x * x, |_| 1.0).sum_all())
        };
        let x = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let report = grad_check(&f, &x, 1e-5, 1e-4).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn three_layer_mlp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // pack weights for a 3-layer MLP 4 -> 5 -> 4 -> 1 into one vector
        let sizes = [(4, 5), (5, 4), (4, 1)];
        let total: usize = sizes.iter().map(|(a, b)| a * b + b).sum();
        let theta: Vec<f64> = (0..total).map(|_| rng.random_range(-0.5..0.5)).collect();
        let input = Tensor::from_rows(&[&[0.4, -1.0, 2.0, 0.1], &[1.1, 0.2, -0.3, 0.9]]).unwrap();

        let f = move |tape: &Tape, theta: Var| -> Result<Var, TensorError> {
            let mut offset = 0;
            let mut h = tape.constant(input.clone());
            for (i, &(rows, cols)) in sizes.iter().enumerate() {
                let w = theta
                    .slice_axis(0, offset, rows * cols)?
                    .reshape(&[rows, cols])?;
                offset += rows * cols;
                let b = theta.slice_axis(0, offset, cols)?;
                offset += cols;
                h = h.matmul(&w)?.add_bias(&b)?;
                if i + 1 < sizes.len() {
                    h = h.tanh();
                }
            }
            Ok(h.mul(&h)?.mean_all())
        };
        let report = grad_check(&f, &Tensor::from_vec(theta), 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
    }
}
