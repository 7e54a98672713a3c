use super::{DoubleDouble, NnError, Parameter};

/// Something with a scalar loss and analytic parameter gradients.
pub trait Differentiable {
    type Batch: ?Sized;

    /// Loss only; must not touch gradients.
    fn loss(&mut self, batch: &Self::Batch) -> Result<f64, NnError>;

    /// Zeroes gradients, then fills them with `d loss / d param`.
    fn loss_and_grad(&mut self, batch: &Self::Batch) -> Result<f64, NnError>;

    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;

    /// Loss in double-double precision, used for the finite-difference
    /// side of [`grad_check`]. The default widens [`Differentiable::loss`].
    fn loss_wide(&mut self, batch: &Self::Batch) -> Result<DoubleDouble, NnError> {
        self.loss(batch).map(DoubleDouble::from)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub entries_checked: usize,
    /// Entries re-estimated in double-double.
    pub entries_refined: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn finite(loss: f64) -> Result<f64, NnError> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(NnError::Numerical(format!("loss is {loss}")))
    }
}

fn finite_wide(loss: DoubleDouble) -> Result<DoubleDouble, NnError> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(NnError::Numerical(format!("loss is {}", loss.hi())))
    }
}

/// Entries whose quick estimate disagrees by more than this are re-estimated.
const REFINE_THRESHOLD: f64 = 1e-5;

/// Compares analytic gradients with central differences over every
/// parameter entry and reports the worst relative error
/// `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// Each entry first gets the quotient from f64 losses, whose rounding alone
/// contributes about `1e-16 / epsilon` (near `1e-11`). That only matters for
/// gradients close to the `1e-8` floor, so entries that disagree beyond
/// `1e-5` repeat the same quotient on [`Differentiable::loss_wide`], and that
/// estimate is the one reported.
pub fn grad_check<D: Differentiable>(
    model: &mut D,
    batch: &D::Batch,
    epsilon: f64,
) -> Result<GradCheckReport, NnError> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(NnError::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    finite(model.loss_and_grad(batch)?)?;
    let analytic: Vec<Vec<f64>> = model
        .parameters_mut()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        entries_checked: 0,
        entries_refined: 0,
    };
    for (pi, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let original = model.parameters_mut()[pi].value.data()[i];
            let (up, down) = (original + epsilon, original - epsilon);
            let plus = perturbed(model, pi, i, up, |m| m.loss(batch));
            let minus = perturbed(model, pi, i, down, |m| m.loss(batch));
            let (plus, minus) = (finite(plus?)?, finite(minus?)?);
            let mut numeric = (plus - minus) / (up - down);
            if relative_error(a, numeric) > REFINE_THRESHOLD {
                numeric = refined(model, batch, pi, i, epsilon)?;
                report.entries_refined += 1;
            }
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_parameter = model.parameters_mut()[pi].name.clone();
                report.worst_index = i;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Evaluates `f` with entry `i` of parameter `pi` set to `x`, then restores it.
fn perturbed<D: Differentiable, T>(
    model: &mut D,
    pi: usize,
    i: usize,
    x: f64,
    f: impl FnOnce(&mut D) -> T,
) -> T {
    let original = std::mem::replace(&mut model.parameters_mut()[pi].value.data_mut()[i], x);
    let out = f(model);
    model.parameters_mut()[pi].value.data_mut()[i] = original;
    out
}

fn refined<D: Differentiable>(
    model: &mut D,
    batch: &D::Batch,
    pi: usize,
    i: usize,
    epsilon: f64,
) -> Result<f64, NnError> {
    let x = model.parameters_mut()[pi].value.data()[i];
    let (up, down) = (x + epsilon, x - epsilon);
    let plus = perturbed(model, pi, i, up, |m| m.loss_wide(batch));
    let minus = perturbed(model, pi, i, down, |m| m.loss_wide(batch));
    let (plus, minus) = (finite_wide(plus?)?, finite_wide(minus?)?);
    let step = DoubleDouble::from(up) - DoubleDouble::from(down);
    Ok(((plus - minus) / step).hi())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor2D;

    /// `L = Σ (x·w - y)²` for a single linear unit.
    struct Linear {
        w: Parameter,
    }

    impl Differentiable for Linear {
        type Batch = [(Vec<f64>, f64)];

        fn loss(&mut self, batch: &Self::Batch) -> Result<f64, NnError> {
            Ok(batch
                .iter()
                .map(|(x, y)| {
                    let p: f64 = x.iter().zip(self.w.value.data()).map(|(a, b)| a * b).sum();
                    (p - y).powi(2)
                })
                .sum())
        }

        fn loss_and_grad(&mut self, batch: &Self::Batch) -> Result<f64, NnError> {
            self.w.zero_grad();
            for (x, y) in batch {
                let p: f64 = x.iter().zip(self.w.value.data()).map(|(a, b)| a * b).sum();
                for (g, xi) in self.w.grad.data_mut().iter_mut().zip(x) {
                    *g += 2.0 * (p - y) * xi;
                }
            }
            self.loss(batch)
        }

        fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
            vec![&mut self.w]
        }
    }

    fn linear() -> (Linear, Vec<(Vec<f64>, f64)>) {
        let w = Parameter::new("w", Tensor2D::new(1, 3, vec![0.2, -0.7, 1.1]).unwrap());
        let batch = vec![(vec![1.0, 2.0, -1.0], 0.5), (vec![-0.3, 0.4, 2.0], -1.0)];
        (Linear { w }, batch)
    }

    #[test]
    fn quadratic_loss_is_exact() {
        let (mut m, batch) = linear();
        let r = grad_check(&mut m, batch.as_slice(), 1e-5).unwrap();
        assert!(r.max_relative_error < 1e-9, "{r:?}");
        assert_eq!(r.entries_checked, 3);
    }

    #[test]
    fn non_positive_epsilon_is_rejected() {
        let (mut m, batch) = linear();
        assert!(matches!(grad_check(&mut m, batch.as_slice(), 0.0), Err(NnError::InvalidArgument(_))));
        assert!(grad_check(&mut m, batch.as_slice(), -1.0).is_err());
    }

    #[test]
    fn non_finite_loss_is_numerical_error() {
        let (mut m, _) = linear();
        let batch = vec![(vec![f64::INFINITY, 0.0, 0.0], 0.0)];
        assert!(matches!(grad_check(&mut m, batch.as_slice(), 1e-5), Err(NnError::Numerical(_))));
    }
}
