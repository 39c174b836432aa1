//! Censoring survival estimation and inverse-probability-of-censoring
//! weights.
//!
//! The censoring tail function `G(h) = P(C > h)` is estimated by a reverse
//! Kaplan-Meier: censorings (event code 0) are treated as the event of
//! interest and all true events as censored. Weights follow the standard
//! Fine-Gray construction: a subject still under observation at the
//! reference time has weight 1; a subject who experienced a *different*
//! event earlier stays in the risk set with weight `G(y_i)/G(y_j)`; a
//! subject censored earlier leaves the risk set (weight 0) unless the
//! literal-risk-set policy is switched on.

use alloc::vec::Vec;

use crate::data::EventCode;
use crate::stepfn::StepFunction;
use crate::{Error, Result};

/// Default clamp applied to `G` denominators to avoid division by a
/// degenerate tail.
pub const DEFAULT_G_FLOOR: f64 = 1e-6;

/// Reverse Kaplan-Meier estimate of the censoring survival `G(h) = P(C > h)`.
///
/// Ties between a true event and a censoring at the same time are resolved
/// events-first: subjects with a true event at `t` are removed from the risk
/// set before the censoring decrement at `t` is applied. `G(0) = 1` and the
/// estimate is nonincreasing and right-continuous.
pub fn censoring_survival(labels: &[(f64, EventCode)]) -> Result<StepFunction> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("censoring_survival labels"));
    }
    for &(y, _) in labels {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::Invalid(alloc::format!(
                "observed time must be positive, got {y}"
            )));
        }
    }

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].0.total_cmp(&labels[b].0));

    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut g = 1.0_f64;
    let mut at_risk = labels.len();

    let mut i = 0;
    while i < order.len() {
        let t = labels[order[i]].0;
        let mut d_event = 0usize; // true events at t
        let mut d_cens = 0usize; // censorings at t
        let mut j = i;
        while j < order.len() && labels[order[j]].0 == t {
            if labels[order[j]].1.is_censored() {
                d_cens += 1;
            } else {
                d_event += 1;
            }
            j += 1;
        }
        if d_cens > 0 {
            // Events first: they no longer count toward the censoring risk set.
            let n_eff = (at_risk - d_event) as f64;
            g *= (n_eff - d_cens as f64) / n_eff;
            knots.push(t);
            values.push(g);
        }
        at_risk -= d_event + d_cens;
        i = j;
    }

    StepFunction::new(1.0, knots, values)
}

/// IPCW weight for subject `j` in the risk set of a reference time `y_i`,
/// for event `k`, under the standard policy (censored-earlier subjects leave
/// the risk set). Denominators below `floor` are clamped to `floor`.
pub fn ipcw_weight(
    g: &StepFunction,
    y_i: f64,
    y_j: f64,
    d_j: EventCode,
    k: EventCode,
    floor: f64,
) -> f64 {
    Ipcw {
        g,
        floor,
        censored_in_risk_set: false,
    }
    .weight(y_i, y_j, d_j, k)
}

/// Weight computer bound to one censoring curve, carrying the tail floor and
/// the risk-set policy for censored-earlier subjects.
#[derive(Debug, Clone)]
pub struct Ipcw<'a> {
    pub g: &'a StepFunction,
    pub floor: f64,
    /// When true, subjects censored before the reference time stay in the
    /// risk set with weight `G(y_i)/G(y_j)` (the literal risk-set reading);
    /// when false they get weight 0 (the standard estimator).
    pub censored_in_risk_set: bool,
}

impl<'a> Ipcw<'a> {
    pub fn new(g: &'a StepFunction) -> Self {
        Ipcw {
            g,
            floor: DEFAULT_G_FLOOR,
            censored_in_risk_set: false,
        }
    }

    /// Weight of subject `j` at reference time `y_i` for event `k`.
    pub fn weight(&self, y_i: f64, y_j: f64, d_j: EventCode, k: EventCode) -> f64 {
        if y_j >= y_i {
            return 1.0;
        }
        if d_j == k {
            // Event of interest already happened: out of the risk set.
            return 0.0;
        }
        if d_j.is_censored() && !self.censored_in_risk_set {
            return 0.0;
        }
        let denom = self.g.value_at(y_j).max(self.floor);
        self.g.value_at(y_i) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ev(code: u32) -> EventCode {
        EventCode::new(code)
    }

    /// Four-subject fixture: events at 1 and 3, censorings at 2 and 4.
    fn fixture_g() -> StepFunction {
        censoring_survival(&[(1.0, ev(1)), (2.0, ev(0)), (3.0, ev(2)), (4.0, ev(0))]).unwrap()
    }

    #[test]
    fn reverse_km_hand_computation() {
        // Risk set at t=2 is {2,3,4} (subject 1 removed by its event at 1):
        // G drops to 2/3; at t=4 the risk set is {4} alone, G drops to 0.
        let g = fixture_g();
        assert_eq!(g.value_at(0.0), 1.0);
        assert_eq!(g.value_at(1.999), 1.0);
        assert_eq!(g.value_at(2.0), 2.0 / 3.0);
        assert_eq!(g.value_at(3.9), 2.0 / 3.0);
        assert_eq!(g.value_at(4.0), 0.0);
        assert_eq!(g.value_at(100.0), 0.0);
    }

    #[test]
    fn no_censored_subjects_gives_unit_curve() {
        let g = censoring_survival(&[(1.0, ev(1)), (2.0, ev(2)), (5.0, ev(1))]).unwrap();
        assert!(g.knots().is_empty());
        assert_eq!(g.value_at(10.0), 1.0);
    }

    #[test]
    fn all_censored_at_same_time() {
        let g = censoring_survival(&[(3.0, ev(0)), (3.0, ev(0)), (3.0, ev(0))]).unwrap();
        assert_eq!(g.value_at(2.999), 1.0);
        assert_eq!(g.value_at(3.0), 0.0);
    }

    #[test]
    fn empty_and_nonpositive_inputs_rejected() {
        assert!(censoring_survival(&[]).is_err());
        assert!(censoring_survival(&[(0.0, ev(1))]).is_err());
        assert!(censoring_survival(&[(-1.0, ev(0))]).is_err());
    }

    #[test]
    fn weight_branches() {
        let g = fixture_g();
        // Still at risk.
        assert_eq!(ipcw_weight(&g, 3.0, 5.0, ev(2), ev(1), 1e-6), 1.0);
        // Earlier competing event: G(3.5)/G(1) = (2/3)/1.
        assert_eq!(ipcw_weight(&g, 3.5, 1.0, ev(2), ev(1), 1e-6), 2.0 / 3.0);
        // Censored earlier leaves the risk set under the standard policy.
        assert_eq!(ipcw_weight(&g, 3.5, 1.0, ev(0), ev(1), 1e-6), 0.0);
        // Earlier event of the same type is out of the risk set.
        assert_eq!(ipcw_weight(&g, 3.5, 1.0, ev(1), ev(1), 1e-6), 0.0);
    }

    #[test]
    fn literal_policy_keeps_censored_subjects() {
        let g = fixture_g();
        let ipcw = Ipcw {
            g: &g,
            floor: 1e-6,
            censored_in_risk_set: true,
        };
        let w = ipcw.weight(3.5, 2.5, ev(0), ev(1));
        assert_eq!(w, (2.0 / 3.0) / (2.0 / 3.0));
        let w_early = ipcw.weight(3.5, 1.0, ev(0), ev(1));
        assert_eq!(w_early, 2.0 / 3.0);
    }

    #[test]
    fn weights_stay_in_unit_interval() {
        // G nonincreasing implies G(y_i) <= G(y_j) whenever y_j < y_i.
        let labels = vec![
            (0.5, ev(1)),
            (1.0, ev(0)),
            (1.5, ev(2)),
            (2.0, ev(1)),
            (2.5, ev(0)),
            (3.0, ev(2)),
            (4.0, ev(0)),
        ];
        let g = censoring_survival(&labels).unwrap();
        let ipcw = Ipcw::new(&g);
        for &(yi, _) in &labels {
            for &(yj, dj) in &labels {
                let w = ipcw.weight(yi, yj, dj, ev(1));
                assert!((0.0..=1.0).contains(&w), "w={w} at yi={yi} yj={yj}");
            }
        }
    }

    #[test]
    fn floor_clamps_degenerate_tail() {
        // All subjects censored at 1 forces G(1)=0; a later reference time
        // must not divide by zero.
        let g = censoring_survival(&[(1.0, ev(0)), (1.0, ev(0))]).unwrap();
        let w = ipcw_weight(&g, 3.0, 2.0, ev(2), ev(1), 1e-6);
        assert_eq!(w, 0.0); // numerator G(3)=0 regardless of the clamp
        let ipcw = Ipcw {
            g: &g,
            floor: 1e-6,
            censored_in_risk_set: false,
        };
        assert!(ipcw.weight(3.0, 2.0, ev(2), ev(1)).is_finite());
    }
}
