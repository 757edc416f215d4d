use super::{NumError, Tape, Tensor, Var};

/// Compares the tape gradient of a scalar function against central differences.
///
/// Returns `max_k |analytic_k − fd_k| / max(1, |analytic_k|)`.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64, NumError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, NumError>,
{
    if !(step > 0.0 && step <= 1e-3) {
        return Err(NumError::Dimension(format!("finite-difference step {step} outside (0, 1e-3]")));
    }
    let eval = |x: &Tensor| -> Result<f64, NumError> {
        let mut tape = Tape::new();
        let v = tape.constant(x);
        let out = f(&mut tape, v)?;
        let y = tape.scalar(out);
        if !y.is_finite() {
            return Err(NumError::NonFinite("function value".into()));
        }
        Ok(y)
    };

    let mut tape = Tape::new();
    let x = tape.variable(point);
    let out = f(&mut tape, x)?;
    if tape.value(out).len() != 1 {
        return Err(NumError::Dimension("function is not scalar-valued".into()));
    }
    if !tape.scalar(out).is_finite() {
        return Err(NumError::NonFinite("function value".into()));
    }
    tape.backward(out)?;
    let analytic = tape.grad(x).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; point.len()]);

    let mut worst: f64 = 0.0;
    let mut probe = point.clone();
    for k in 0..point.len() {
        let orig = point.data()[k];
        probe.data_mut()[k] = orig + step;
        let up = eval(&probe)?;
        probe.data_mut()[k] = orig - step;
        let down = eval(&probe)?;
        probe.data_mut()[k] = orig;
        let fd = (up - down) / (2.0 * step);
        let err = (analytic[k] - fd).abs() / analytic[k].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact_to_second_order() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap();
        let err = grad_check(|t, v| t.squared_l2(v), &x, 1e-5).unwrap();
        assert!(err <= 1e-7, "{err}");
    }

    #[test]
    fn relu_away_from_kink() {
        let x = Tensor::vector(vec![-1.0, 2.0]).unwrap();
        let mut tape = Tape::new();
        let v = tape.variable(&x);
        let r = tape.relu(v).unwrap();
        let s = tape.sum(r).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(v).unwrap(), &[0.0, 1.0]);
        let err = grad_check(
            |t, v| {
                let r = t.relu(v)?;
                t.sum(r)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9);
    }

    #[test]
    fn rejects_bad_step() {
        let x = Tensor::vector(vec![1.0]).unwrap();
        assert!(grad_check(|t, v| t.sum(v), &x, 1e-2).is_err());
        assert!(grad_check(|t, v| t.sum(v), &x, 0.0).is_err());
    }
}
