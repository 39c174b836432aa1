//! Right-continuous piecewise-constant functions of time.
//!
//! Used for the censoring survival curve and for baseline cumulative
//! subhazards. The function takes `initial` on `[0, knots[0])` and
//! `values[i]` on `[knots[i], knots[i+1])`, extending flat past the last
//! knot.

use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    initial: f64,
    knots: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    /// Builds a step function; knots must be finite and strictly increasing.
    pub fn new(initial: f64, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: knots.len(),
                got: values.len(),
            });
        }
        for w in knots.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Invalid(alloc::format!(
                    "step-function knots not strictly increasing: {} then {}",
                    w[0],
                    w[1]
                )));
            }
        }
        if knots.iter().any(|k| !k.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(
                "step-function knot or value not finite".into(),
            ));
        }
        Ok(StepFunction {
            initial,
            knots,
            values,
        })
    }

    /// Function identically equal to `value`.
    pub fn constant(value: f64) -> Self {
        StepFunction {
            initial: value,
            knots: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Right-continuous evaluation: the value attached to the last knot `<= t`.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|&k| k <= t);
        if idx == 0 {
            self.initial
        } else {
            self.values[idx - 1]
        }
    }

    /// Increase over the half-open interval `(a, b]`. Meaningful for
    /// cumulative (nondecreasing) functions.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.value_at(b) - self.value_at(a)
    }

    pub fn initial_value(&self) -> f64 {
        self.initial
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value past the last knot.
    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(self.initial)
    }

    /// Per-knot jumps `(knot, value - previous value)`.
    pub fn increments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.knots.iter().enumerate().map(move |(i, &k)| {
            let prev = if i == 0 {
                self.initial
            } else {
                self.values[i - 1]
            };
            (k, self.values[i] - prev)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn right_continuous_evaluation() {
        let f = StepFunction::new(1.0, vec![2.0, 4.0], vec![0.5, 0.25]).unwrap();
        assert_eq!(f.value_at(0.0), 1.0);
        assert_eq!(f.value_at(1.999), 1.0);
        assert_eq!(f.value_at(2.0), 0.5); // jump value taken at the knot itself
        assert_eq!(f.value_at(3.9), 0.5);
        assert_eq!(f.value_at(4.0), 0.25);
        assert_eq!(f.value_at(100.0), 0.25);
        assert_eq!(f.final_value(), 0.25);
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(StepFunction::new(0.0, vec![2.0, 2.0], vec![1.0, 2.0]).is_err());
        assert!(StepFunction::new(0.0, vec![3.0, 2.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn mass_between_half_open() {
        let f = StepFunction::new(0.0, vec![1.0, 2.0, 3.0], vec![0.1, 0.3, 0.6]).unwrap();
        assert!((f.mass_between(1.0, 3.0) - 0.5).abs() < 1e-15); // excludes the jump at 1
        assert!((f.mass_between(0.0, 1.0) - 0.1).abs() < 1e-15);
        assert_eq!(f.mass_between(3.0, 10.0), 0.0);
        let incs: Vec<_> = f.increments().collect();
        assert_eq!(incs.len(), 3);
        assert!((incs[1].1 - 0.2).abs() < 1e-15);
    }
}
