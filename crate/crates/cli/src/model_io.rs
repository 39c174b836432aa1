//! Versioned JSON model files.
//!
//! A stepwise model file bundles both phase models and the threshold table;
//! phase 2 is stored without its offset copy and rewired to phase 1 on
//! load. Floats serialize with shortest round-trip decimals, so weights
//! survive a save/load cycle bit-for-bit.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stepfg_core::data::EventCode;
use stepfg_core::finegray::{FeatureSlice, PhaseModel};
use stepfg_core::risk_net::{MlpConfig, MlpParams};
use stepfg_core::stepfn::StepFunction;
use stepfg_core::stepwise::{StepwiseModel, ThresholdTable};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NetDto {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    dropout_rate: f64,
    seed: u64,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    feat_mean: Vec<f64>,
    feat_std: Vec<f64>,
}

impl NetDto {
    fn from_params(p: &MlpParams) -> Self {
        NetDto {
            input_dim: p.config.input_dim,
            hidden_dims: p.config.hidden_dims.clone(),
            dropout_rate: p.config.dropout_rate,
            seed: p.config.seed,
            weights: p.weights.clone(),
            biases: p.biases.clone(),
            feat_mean: p.feat_mean.clone(),
            feat_std: p.feat_std.clone(),
        }
    }

    fn into_params(self) -> MlpParams {
        MlpParams {
            config: MlpConfig {
                input_dim: self.input_dim,
                hidden_dims: self.hidden_dims,
                dropout_rate: self.dropout_rate,
                seed: self.seed,
            },
            weights: self.weights,
            biases: self.biases,
            feat_mean: self.feat_mean,
            feat_std: self.feat_std,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PhaseDto {
    event: u32,
    feature_slice: String,
    net: NetDto,
    baseline_knots: Vec<f64>,
    baseline_values: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offset: Option<Box<PhaseDto>>,
}

fn slice_name(slice: FeatureSlice) -> &'static str {
    match slice {
        FeatureSlice::Phase1 => "phase1",
        FeatureSlice::Phase1And2 => "phase1+2",
    }
}

fn slice_from_name(name: &str) -> Result<FeatureSlice> {
    match name {
        "phase1" => Ok(FeatureSlice::Phase1),
        "phase1+2" => Ok(FeatureSlice::Phase1And2),
        other => bail!("unknown feature slice {other:?}"),
    }
}

impl PhaseDto {
    fn from_model(model: &PhaseModel, include_offset: bool) -> Self {
        PhaseDto {
            event: model.event.code(),
            feature_slice: slice_name(model.feature_slice).to_string(),
            net: NetDto::from_params(&model.net),
            baseline_knots: model.baseline_cum.knots().to_vec(),
            baseline_values: model.baseline_cum.values().to_vec(),
            offset: if include_offset {
                model
                    .offset
                    .as_ref()
                    .map(|o| Box::new(PhaseDto::from_model(o, true)))
            } else {
                None
            },
        }
    }

    fn into_model(self) -> Result<PhaseModel> {
        Ok(PhaseModel {
            event: EventCode::new(self.event),
            net: self.net.into_params(),
            baseline_cum: StepFunction::new(0.0, self.baseline_knots, self.baseline_values)?,
            feature_slice: slice_from_name(&self.feature_slice)?,
            offset: match self.offset {
                Some(dto) => Some(Box::new(dto.into_model()?)),
                None => None,
            },
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StepwiseDto {
    version: u32,
    event: u32,
    phase1: PhaseDto,
    /// Stored without the offset copy; rewired to `phase1` on load.
    phase2: PhaseDto,
    horizons: Vec<f64>,
    deltas: Vec<f64>,
}

pub fn save_stepwise_model(path: &Path, model: &StepwiseModel) -> Result<()> {
    let dto = StepwiseDto {
        version: MODEL_FORMAT_VERSION,
        event: model.event.code(),
        phase1: PhaseDto::from_model(&model.phase1, true),
        phase2: PhaseDto::from_model(&model.phase2, false),
        horizons: model.thresholds.horizons().to_vec(),
        deltas: model.thresholds.deltas().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&dto)?;
    text.push('\n');
    crate::csv_io::write_text(path, &text)
}

pub fn load_stepwise_model(path: &Path) -> Result<StepwiseModel> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let dto: StepwiseDto =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if dto.version != MODEL_FORMAT_VERSION {
        bail!(
            "{}: unsupported model format version {} (expected {})",
            path.display(),
            dto.version,
            MODEL_FORMAT_VERSION
        );
    }
    let phase1 = dto.phase1.into_model()?;
    let mut phase2 = dto.phase2.into_model()?;
    phase2.offset = Some(Box::new(phase1.clone()));
    let thresholds = ThresholdTable::new(dto.horizons, dto.deltas)?;
    Ok(StepwiseModel::new(phase1, phase2, thresholds)?)
}

/// Standalone single-phase model file (offset model inlined when present).
pub fn save_phase_model(path: &Path, model: &PhaseModel) -> Result<()> {
    #[derive(Serialize)]
    struct Wrapper {
        version: u32,
        phase: PhaseDto,
    }
    let dto = Wrapper {
        version: MODEL_FORMAT_VERSION,
        phase: PhaseDto::from_model(model, true),
    };
    let mut text = serde_json::to_string_pretty(&dto)?;
    text.push('\n');
    crate::csv_io::write_text(path, &text)
}

pub fn load_phase_model(path: &Path) -> Result<PhaseModel> {
    #[derive(Deserialize)]
    struct Wrapper {
        version: u32,
        phase: PhaseDto,
    }
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let dto: Wrapper =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if dto.version != MODEL_FORMAT_VERSION {
        bail!(
            "{}: unsupported model format version {}",
            path.display(),
            dto.version
        );
    }
    dto.phase.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use stepfg_core::risk_net::init;
    use stepfg_core::rng::Rng;

    fn arbitrary_model(seed: u64) -> StepwiseModel {
        let mut rng = Rng::seed_from(seed);
        let mut noisy = |cfg: &MlpConfig| {
            let mut p = init(cfg).unwrap();
            for w in &mut p.weights {
                for x in w {
                    *x = rng.normal();
                }
            }
            p.set_standardization(
                (0..cfg.input_dim).map(|_| rng.normal()).collect(),
                (0..cfg.input_dim).map(|_| 0.5 + rng.uniform()).collect(),
            )
            .unwrap();
            p
        };
        let phase1 = PhaseModel {
            event: EventCode::new(1),
            net: noisy(&MlpConfig {
                input_dim: 3,
                hidden_dims: vec![4],
                dropout_rate: 0.2,
                seed,
            }),
            baseline_cum: StepFunction::new(0.0, vec![2.0, 7.5], vec![0.125, 0.5]).unwrap(),
            feature_slice: FeatureSlice::Phase1,
            offset: None,
        };
        let phase2 = PhaseModel {
            event: EventCode::new(1),
            net: noisy(&MlpConfig {
                input_dim: 5,
                hidden_dims: vec![],
                dropout_rate: 0.0,
                seed,
            }),
            baseline_cum: StepFunction::new(0.0, vec![3.0], vec![0.25]).unwrap(),
            feature_slice: FeatureSlice::Phase1And2,
            offset: Some(Box::new(phase1.clone())),
        };
        let table = ThresholdTable::new(vec![24.0, 48.0], vec![0.3, 0.0]).unwrap();
        StepwiseModel::new(phase1, phase2, table).unwrap()
    }

    #[test]
    fn stepwise_roundtrip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("stepfg-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let model = arbitrary_model(5);
        let path = dir.join("event1.json");
        save_stepwise_model(&path, &model).unwrap();
        let loaded = load_stepwise_model(&path).unwrap();
        assert_eq!(model, loaded);

        // Saving the loaded model reproduces the file byte for byte.
        let path2 = dir.join("event1-again.json");
        save_stepwise_model(&path2, &loaded).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn phase_roundtrip_preserves_offset_chain() {
        let dir = std::env::temp_dir().join(format!("stepfg-phase-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let model = arbitrary_model(9);
        let path = dir.join("phase.json");
        save_phase_model(&path, &model.phase2).unwrap();
        let loaded = load_phase_model(&path).unwrap();
        assert_eq!(model.phase2, loaded);
    }

    #[test]
    fn malformed_files_error_with_path_context() {
        let dir = std::env::temp_dir().join(format!("stepfg-mangled-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("broken.json");
        std::fs::write(&path, "{ not json").unwrap();
        let err = format!("{:#}", load_stepwise_model(&path).unwrap_err());
        assert!(err.contains("broken.json"), "{err}");
        let missing = dir.join("nowhere.json");
        let err = format!("{:#}", load_stepwise_model(&missing).unwrap_err());
        assert!(err.contains("nowhere.json"), "{err}");
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = std::env::temp_dir().join(format!("stepfg-ver-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let model = arbitrary_model(2);
        let path = dir.join("model.json");
        save_stepwise_model(&path, &model).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"version\": 1", "\"version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(load_stepwise_model(&path)
            .unwrap_err()
            .to_string()
            .contains("version"));
    }
}
