//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Max over checked coordinates of `|a − n| / max(|a|, |n|, 1e-8)`.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±eps probes changed the ReLU/max-pool branch
    /// pattern (the function is not differentiable there at this scale).
    pub excluded: Vec<usize>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<T, F>(f: &F, at: Tensor<T>) -> Result<(f64, Vec<usize>)>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.constant(at);
    let y = f(&mut tape, x)?;
    let value = tape.value(y).item().ok_or(Error::NotScalar(tape.value(y).numel()))?;
    Ok((value.as_f64(), tape.activation_pattern()))
}

/// Central difference formula used for the numeric derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `(f(x+h) − f(x−h)) / 2h`, error O(h²).
    #[default]
    TwoPoint,
    /// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`, error O(h⁴).
    FourPoint,
}

/// Compares tape gradients of the scalar function `f` at `at` against central
/// differences `(f(x+eps·e) − f(x−eps·e)) / 2eps`, coordinate by coordinate.
pub fn finite_diff_check<T, F>(f: F, at: &Tensor<T>, eps: f64) -> Result<GradCheck>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    finite_diff_check_with(f, at, eps, Stencil::TwoPoint)
}

/// [`finite_diff_check`] with a chosen stencil. A coordinate is excluded when
/// any probe lands on a different smooth piece than `at`.
pub fn finite_diff_check_with<T, F>(f: F, at: &Tensor<T>, eps: f64, stencil: Stencil) -> Result<GradCheck>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, Var) -> Result<Var>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::config("eps", format!("{eps} is outside (0, 1e-2]")));
    }
    let mut tape = Tape::new();
    let x = tape.param(at.clone());
    let y = f(&mut tape, x)?;
    tape.backward(y)?;
    let analytic = tape.grad(x).expect("parameter leaf");
    let base_pattern = tape.activation_pattern();

    let mut report = GradCheck { max_rel_error: 0.0, checked: 0, excluded: Vec::new() };
    for i in 0..at.numel() {
        let probe = |delta: f64| {
            let mut shifted = at.clone();
            let v = &mut shifted.data_mut()[i];
            *v = T::lit(v.as_f64() + delta);
            evaluate(&f, shifted)
        };
        let steps: &[(f64, f64)] = match stencil {
            Stencil::TwoPoint => &[(1.0, 0.5), (-1.0, -0.5)],
            Stencil::FourPoint => &[(2.0, -1.0 / 12.0), (1.0, 8.0 / 12.0), (-1.0, -8.0 / 12.0), (-2.0, 1.0 / 12.0)],
        };
        let mut numeric = 0.0;
        let mut smooth = true;
        for &(k, w) in steps {
            let (value, pattern) = probe(k * eps)?;
            smooth &= pattern == base_pattern;
            numeric += w * value;
        }
        if !smooth {
            report.excluded.push(i);
            continue;
        }
        let numeric = numeric / eps;
        let err = relative_error(analytic.data()[i].as_f64(), numeric);
        report.max_rel_error = report.max_rel_error.max(err);
        report.checked += 1;
    }
    Ok(report)
}
