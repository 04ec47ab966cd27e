//! Central finite-difference checks of tape gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Number of scalar parameters compared.
    pub parameter_count: usize,
    /// Worst relative error within each parameter tensor.
    pub per_parameter_errors: Vec<f64>,
}

/// Relative error with denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the tape gradient of the scalar `f(params)` against central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε`, element by element.
///
/// `f` receives a fresh tape with every parameter registered as a leaf, in
/// order, and must return a scalar node.
pub fn check_gradients<F>(f: F, params: &[Tensor], epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = scalar(&tape, out)?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "gradient check objective".into(),
            });
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    scalar(&tape, out)?;
    let grads = tape.backward(out)?;

    let mut work: Vec<Tensor> = params.to_vec();
    let mut per_parameter_errors = Vec::with_capacity(params.len());
    let mut count = 0;
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var, params[pi].len());
        let mut worst: f64 = 0.0;
        for (e, &a) in analytic.iter().enumerate() {
            let orig = work[pi].data()[e];
            work[pi].data_mut()[e] = orig + epsilon;
            let plus = eval(&work)?;
            work[pi].data_mut()[e] = orig - epsilon;
            let minus = eval(&work)?;
            work[pi].data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(a, numeric));
            count += 1;
        }
        per_parameter_errors.push(worst);
    }
    let max_relative_error = per_parameter_errors.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        parameter_count: count,
        per_parameter_errors,
    })
}

fn scalar(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.len() != 1 {
        return Err(Error::shape("gradient check objective", t.shape(), &[1]));
    }
    Ok(t.data()[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_matches_closed_form() {
        let theta = Tensor::from_rows(&[&[0.3, -1.2], &[2.0, 0.7]]);
        let report = check_gradients(
            |tape, p| {
                let sq = tape.mul(p[0], p[0])?;
                tape.sum(sq)
            },
            &[theta],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.parameter_count, 4);
        assert!(report.max_relative_error < 1e-7, "{report:?}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let theta = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        let report = check_gradients(
            |tape, _| Ok(tape.constant(Tensor::scalar(4.0))),
            &[theta],
            1e-5,
        )
        .unwrap();
        assert_eq!(report.max_relative_error, 0.0);
    }

    #[test]
    fn rejects_non_positive_epsilon() {
        let r = check_gradients(|tape, p| tape.sum(p[0]), &[Tensor::scalar(1.0)], 0.0);
        assert!(r.is_err());
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let r = check_gradients(
            |tape, p| {
                let big = tape.scale(p[0], 1e300)?;
                let sq = tape.mul(big, big)?;
                tape.sum(sq)
            },
            &[Tensor::scalar(1.0)],
            1e-5,
        );
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }
}
