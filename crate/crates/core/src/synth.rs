//! Known-truth competing-risks data generator and Monte Carlo CIF oracle.
//!
//! Two causes. Cause 1 is built so proportional subhazards hold exactly:
//! with linear predictor `eta = exp(x_static . beta_static [+ z . beta_dynamic])`,
//! its cumulative incidence in latent time `u` is
//!
//! ```text
//! F1(u | x) = 1 - (1 - mass * (1 - e^{-u}))^eta
//! ```
//!
//! so the log-log transform of `1 - F1` is linear in the covariates with a
//! horizon-free slope. Cause 2 happens with the remaining probability and an
//! exponential conditional time. Latent times are scaled to hours, censoring
//! is independent exponential, and when the dynamic signal is on the latent
//! dynamic covariates are emitted into a BP-and-dose hourly series so the
//! snapshot pipeline can recover them.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{Dataset, EventCode, FeatureRegistry, Subject, TimePoint, DOSE_CHANNELS};
use crate::num;
use crate::rng::Rng;
use crate::{Error, Result};

/// Baseline mean BP (mmHg) around which series are generated.
const BP_BASELINE: f64 = 80.0;
/// mmHg shift per unit of the first latent dynamic covariate.
const BP_GAIN: f64 = 12.0;
/// AR(1) persistence and marginal spread of the hourly BP noise.
const BP_AR_RHO: f64 = 0.8;
const BP_NOISE_SD: f64 = 6.0;
/// Hourly series are truncated here even for very late events.
const SERIES_CAP_HOURS: f64 = 480.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    /// Cause-1 effects of the static covariate block.
    pub beta_static: Vec<f64>,
    /// Cause-1 effects of the latent dynamic block (used when
    /// `dynamic_signal` is on).
    pub beta_dynamic: Vec<f64>,
    /// Cause-1 mass parameter in (0, 1): the cause-1 probability at the
    /// baseline covariate value.
    pub cause1_mass: f64,
    /// Rate of the independent exponential censoring in latent time units;
    /// 0 disables censoring.
    pub censor_rate: f64,
    pub static_dim: usize,
    pub dynamic_dim: usize,
    /// Whether cause hazards depend on the latent dynamic covariates.
    pub dynamic_signal: bool,
    /// Hours per latent time unit.
    pub time_scale_hours: f64,
    /// Rate of the conditional exponential cause-2 time.
    pub cause2_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 1000,
            beta_static: alloc::vec![0.5, -0.5, 0.3, 0.2],
            beta_dynamic: alloc::vec![0.8],
            cause1_mass: 0.6,
            censor_rate: 0.0,
            static_dim: 4,
            dynamic_dim: 1,
            dynamic_signal: false,
            time_scale_hours: 48.0,
            cause2_rate: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::Invalid("n_subjects must be positive".into()));
        }
        if self.beta_static.len() != self.static_dim {
            return Err(Error::DimensionMismatch {
                expected: self.static_dim,
                got: self.beta_static.len(),
            });
        }
        if self.beta_dynamic.len() != self.dynamic_dim {
            return Err(Error::DimensionMismatch {
                expected: self.dynamic_dim,
                got: self.beta_dynamic.len(),
            });
        }
        if !(self.cause1_mass > 0.0 && self.cause1_mass < 1.0) {
            return Err(Error::Invalid("cause1_mass must lie in (0,1)".into()));
        }
        if self.censor_rate < 0.0 || self.cause2_rate <= 0.0 || self.time_scale_hours <= 0.0 {
            return Err(Error::Invalid(
                "rates and time scale must be positive".into(),
            ));
        }
        if self.dynamic_dim > 1 + DOSE_CHANNELS {
            return Err(Error::Invalid(alloc::format!(
                "at most {} dynamic covariates can be emitted into the series",
                1 + DOSE_CHANNELS
            )));
        }
        Ok(())
    }

    /// Linear predictor exponent for covariates `(x_static, z_dynamic)`.
    fn eta(&self, x_static: &[f64], z_dynamic: &[f64]) -> f64 {
        let mut lin: f64 = x_static
            .iter()
            .zip(&self.beta_static)
            .map(|(x, b)| x * b)
            .sum();
        if self.dynamic_signal {
            lin += z_dynamic
                .iter()
                .zip(&self.beta_dynamic)
                .map(|(z, b)| z * b)
                .sum::<f64>();
        }
        num::exp(lin)
    }
}

/// Closed-form cause-1 CIF at `h` hours for covariates `(x_static, z)`.
pub fn closed_form_cif1(cfg: &SynthConfig, x_static: &[f64], z_dynamic: &[f64], h: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let u = h / cfg.time_scale_hours;
    let eta = cfg.eta(x_static, z_dynamic);
    1.0 - num::powf(1.0 - cfg.cause1_mass * (1.0 - num::exp(-u)), eta)
}

/// One latent event draw: `(latent time, cause)` with no censoring.
fn draw_event(cfg: &SynthConfig, eta: f64, rng: &mut Rng) -> (f64, u32) {
    let p = cfg.cause1_mass;
    let p_cause1 = 1.0 - num::powf(1.0 - p, eta);
    if rng.uniform() < p_cause1 {
        // Inverse transform of F1 conditioned on cause 1.
        let v = rng.uniform_open();
        let target = v * p_cause1;
        let root = num::powf(1.0 - target, 1.0 / eta);
        let t = -num::ln(1.0 - (1.0 - root) / p);
        (t.max(f64::MIN_POSITIVE), 1)
    } else {
        (rng.exponential(cfg.cause2_rate), 2)
    }
}

fn draw_static(cfg: &SynthConfig, rng: &mut Rng) -> Vec<f64> {
    // Alternating standard-normal and Bernoulli(1/2) coordinates.
    (0..cfg.static_dim)
        .map(|d| {
            if d % 2 == 0 {
                rng.normal()
            } else {
                f64::from(rng.bernoulli(0.5))
            }
        })
        .collect()
}

/// Stratum from the first static coordinate's standard-normal terciles, so
/// strata have ordered planted risk when its effect is positive.
fn stratum_of(x_static: &[f64]) -> i64 {
    const TERCILE: f64 = 0.430_727_299_295_457_4;
    match x_static.first() {
        None => 0,
        Some(&x0) if x0 < -TERCILE => 0,
        Some(&x0) if x0 < TERCILE => 1,
        Some(_) => 2,
    }
}

/// Generates a dataset conforming to the ingestion schema: numeric static
/// features `x0..`, hourly BP/dose series, observed hours, event code,
/// stratum. Deterministic for a fixed config.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = Rng::derive(cfg.seed, 0x73796e7468); // "synth"
    let mut subjects = Vec::with_capacity(cfg.n_subjects);
    for i in 0..cfg.n_subjects {
        let x_static = draw_static(cfg, &mut rng);
        let z: Vec<f64> = (0..cfg.dynamic_dim).map(|_| rng.normal()).collect();
        let eta = cfg.eta(&x_static, &z);
        let (t_latent, cause) = draw_event(cfg, eta, &mut rng);
        let (y_latent, event) = if cfg.censor_rate > 0.0 {
            let c = rng.exponential(cfg.censor_rate);
            if c < t_latent {
                (c, 0)
            } else {
                (t_latent, cause)
            }
        } else {
            (t_latent, cause)
        };
        let y_hours = y_latent * cfg.time_scale_hours;
        let series = emit_series(cfg, &z, y_hours, &mut rng);
        subjects.push(Subject {
            id: alloc::format!("synth-{i:05}"),
            y_hours,
            event: EventCode::new(event),
            static_features: x_static.clone(),
            series,
            stratum: stratum_of(&x_static),
        });
    }
    let names: Vec<String> = (0..cfg.static_dim)
        .map(|d| alloc::format!("x{d}"))
        .collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    Dataset::new(subjects, FeatureRegistry::numeric(&name_refs), 2)
}

/// Hourly BP around a level shifted by `z[0]`, plus dose channels shifted by
/// the remaining latent coordinates. The same series shape is emitted whether
/// or not the hazard actually uses `z`.
fn emit_series(cfg: &SynthConfig, z: &[f64], y_hours: f64, rng: &mut Rng) -> Vec<TimePoint> {
    let level = BP_BASELINE
        + if cfg.dynamic_dim > 0 {
            BP_GAIN * z[0]
        } else {
            0.0
        };
    let innovation_sd = BP_NOISE_SD * num::sqrt(1.0 - BP_AR_RHO * BP_AR_RHO);
    let end = y_hours.min(SERIES_CAP_HOURS);
    let mut series = Vec::new();
    let mut ar = BP_NOISE_SD * rng.normal();
    let mut hour = 0u32;
    while (hour as f64) < end {
        ar = BP_AR_RHO * ar + innovation_sd * rng.normal();
        let mean = level + ar;
        let below = 1.0 + 3.0 * rng.uniform();
        let above = 1.0 + 3.0 * rng.uniform();
        let mut doses = [None; DOSE_CHANNELS];
        for (c, dose) in doses.iter_mut().enumerate() {
            let z_idx = c + 1;
            let shift = if z_idx < cfg.dynamic_dim {
                0.4 * z[z_idx]
            } else {
                0.0
            };
            let value = 0.2 + shift + 0.1 * rng.normal();
            if value > 0.0 && rng.uniform() < 0.7 {
                *dose = Some(value);
            }
        }
        series.push(TimePoint {
            hour,
            mean_bp: Some(mean),
            min_bp: Some(mean - below),
            max_bp: Some(mean + above),
            doses,
        });
        hour += 1;
    }
    series
}

/// Monte Carlo estimate of each cause's CIF at `h` hours for fixed
/// covariates, with binomial standard errors and the cause-1 closed form for
/// cross-checking. Simulates latent events only (no censoring).
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCif {
    /// `estimates[k-1]` is the fraction of draws with `T <= h` and cause `k`.
    pub estimates: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub closed_form_cause1: f64,
}

pub fn oracle_cif(
    cfg: &SynthConfig,
    x_static: &[f64],
    z_dynamic: &[f64],
    h: f64,
    n_mc: usize,
    seed: u64,
) -> Result<OracleCif> {
    cfg.validate()?;
    if n_mc < 1000 {
        return Err(Error::Invalid(
            "oracle needs at least 1000 Monte Carlo draws".into(),
        ));
    }
    if x_static.len() != cfg.static_dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.static_dim,
            got: x_static.len(),
        });
    }
    if z_dynamic.len() != cfg.dynamic_dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.dynamic_dim,
            got: z_dynamic.len(),
        });
    }
    let eta = cfg.eta(x_static, z_dynamic);
    let mut rng = Rng::derive(seed, 0x6f7261636c65); // "oracle"
    let mut counts = [0usize; 2];
    for _ in 0..n_mc {
        let (t, cause) = draw_event(cfg, eta, &mut rng);
        if t * cfg.time_scale_hours <= h {
            counts[(cause - 1) as usize] += 1;
        }
    }
    let n = n_mc as f64;
    let estimates: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let stderrs: Vec<f64> = estimates
        .iter()
        .map(|&p| num::sqrt(p * (1.0 - p) / n))
        .collect();
    Ok(OracleCif {
        estimates,
        stderrs,
        closed_form_cause1: closed_form_cif1(cfg, x_static, z_dynamic, h),
    })
}
