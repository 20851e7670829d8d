//! End-to-end training on a task in raw units and the on-disk model format.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::{nn_fit, nn_predict, NnRegressor};
use crate::config::{ModelConfig, ModelKind, RunConfig, TrainingConfig};
use crate::data::{fit_standardizer, Standardizer};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fit::{fit, FitOptions, FitTrace};
use crate::kernels::KernelParams;
use crate::mean::{MeanFunction, Mlp};
use crate::predictive::{PredictTarget, PredictiveDist};
use crate::svgp::{InducingSet, SvgpModel, VariationalState};

#[derive(Clone, Debug)]
pub enum Fitted {
    Svgp(SvgpModel<f64>),
    Nn(NnRegressor<f64>),
}

/// A fitted model together with the scaling it was trained under.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub model: Fitted,
    pub standardizer: Standardizer,
    pub input_names: Vec<String>,
    pub target_name: String,
}

/// Standardizes with training statistics, then fits the configured model.
pub fn train_model(
    train: &Dataset<f64>,
    valid: &Dataset<f64>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainingConfig,
    seed: u64,
) -> Result<(Fitted, Standardizer, FitTrace)> {
    if train.is_empty() {
        return Err(Error::EmptyTable);
    }
    let standardizer = fit_standardizer(train);
    let tr = standardizer.apply(train)?;
    let va = standardizer.apply(valid)?;
    let (model, trace) = match model_cfg.kind {
        ModelKind::Nn => {
            let out = nn_fit(&tr, &va, model_cfg.mlp.hidden, &FitOptions::from_training(train_cfg), seed)?;
            (Fitted::Nn(out.model), out.trace)
        }
        ModelKind::Proposed | ModelKind::Gp => {
            let out = fit(&tr, &va, model_cfg, train_cfg, seed)?;
            (Fitted::Svgp(out.model), out.trace)
        }
    };
    Ok((model, standardizer, trace))
}

impl TrainedModel {
    /// Predictive distribution of `y*` in raw target units.
    pub fn predict(&self, x_raw: &DMatrix<f64>) -> Result<PredictiveDist<f64>> {
        let x = self.standardizer.transform_x(x_raw)?;
        let pred = match &self.model {
            Fitted::Svgp(m) => m.predict(&x, PredictTarget::YStar)?,
            Fitted::Nn(m) => nn_predict(m, &x)?,
        };
        Ok(self.standardizer.invert_prediction(&pred))
    }
}

/// Current version of the model file layout.
pub const FORMAT_VERSION: u32 = 1;

/// Model parameters as flat arrays; matrices are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlatParams {
    Svgp {
        input_dim: usize,
        /// Hidden width of the mean network; 0 for a zero mean.
        hidden: usize,
        mean_params: Vec<f64>,
        log_alpha: f64,
        log_gamma: f64,
        log_beta: f64,
        num_inducing: usize,
        inducing: Vec<f64>,
        q_mean: Vec<f64>,
        q_cov: Vec<f64>,
        q_natural1: Vec<f64>,
        q_natural2: Vec<f64>,
    },
    Nn {
        input_dim: usize,
        hidden: usize,
        mean_params: Vec<f64>,
        log_beta: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub kind: ModelKind,
    pub input_names: Vec<String>,
    pub target_name: String,
    pub params: FlatParams,
    pub standardizer: Standardizer,
    pub config: RunConfig,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

fn from_row_major(rows: usize, cols: usize, v: &[f64]) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::SchemaMismatch(format!(
            "expected {} values for a {rows}x{cols} matrix, found {}",
            rows * cols,
            v.len()
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, v))
}

fn mlp_from(input_dim: usize, hidden: usize, params: &[f64]) -> Result<Mlp<f64>> {
    let mut mlp = Mlp::zeros(input_dim, hidden);
    mlp.set_params(params).map_err(|_| {
        Error::SchemaMismatch(format!("mean network of shape [{input_dim}, {hidden}, 1] does not match its parameters"))
    })?;
    Ok(mlp)
}

impl ModelFile {
    pub fn from_trained(model: &TrainedModel, config: &RunConfig) -> Result<Self> {
        let params = match &model.model {
            Fitted::Svgp(m) => {
                let (hidden, mean_params) = match &m.mean {
                    MeanFunction::Mlp(mlp) => (mlp.hidden(), mlp.params()),
                    MeanFunction::Zero => (0, Vec::new()),
                };
                let q = &m.variational;
                FlatParams::Svgp {
                    input_dim: m.input_dim(),
                    hidden,
                    mean_params,
                    log_alpha: m.kernel.log_alpha,
                    log_gamma: m.kernel.log_gamma,
                    log_beta: m.log_beta,
                    num_inducing: m.num_inducing(),
                    inducing: row_major(&m.inducing.z),
                    q_mean: q.m.iter().copied().collect(),
                    q_cov: row_major(&q.s),
                    q_natural1: q.lambda1.iter().copied().collect(),
                    q_natural2: row_major(&q.lambda2),
                }
            }
            Fitted::Nn(m) => FlatParams::Nn {
                input_dim: m.mlp.input_dim(),
                hidden: m.mlp.hidden(),
                mean_params: m.mlp.params(),
                log_beta: m.log_beta,
            },
        };
        let file = ModelFile {
            format_version: FORMAT_VERSION,
            kind: model.kind,
            input_names: model.input_names.clone(),
            target_name: model.target_name.clone(),
            params,
            standardizer: model.standardizer.clone(),
            config: config.clone(),
        };
        file.check_finite()?;
        Ok(file)
    }

    fn check_finite(&self) -> Result<()> {
        let ok = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let fine = match &self.params {
            FlatParams::Svgp {
                mean_params,
                log_alpha,
                log_gamma,
                log_beta,
                inducing,
                q_mean,
                q_cov,
                q_natural1,
                q_natural2,
                ..
            } => {
                ok(mean_params)
                    && ok(&[*log_alpha, *log_gamma, *log_beta])
                    && ok(inducing)
                    && ok(q_mean)
                    && ok(q_cov)
                    && ok(q_natural1)
                    && ok(q_natural2)
            }
            FlatParams::Nn {
                mean_params, log_beta, ..
            } => ok(mean_params) && log_beta.is_finite(),
        };
        if fine {
            Ok(())
        } else {
            Err(Error::NonFiniteGradient)
        }
    }

    pub fn to_trained(&self) -> Result<TrainedModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let model = match &self.params {
            FlatParams::Svgp {
                input_dim,
                hidden,
                mean_params,
                log_alpha,
                log_gamma,
                log_beta,
                num_inducing,
                inducing,
                q_mean,
                q_cov,
                q_natural1,
                q_natural2,
            } => {
                let (d, m) = (*input_dim, *num_inducing);
                let mean = if *hidden == 0 {
                    MeanFunction::Zero
                } else {
                    MeanFunction::Mlp(mlp_from(d, *hidden, mean_params)?)
                };
                if q_mean.len() != m || q_natural1.len() != m {
                    return Err(Error::SchemaMismatch("variational mean has the wrong length".into()));
                }
                Fitted::Svgp(SvgpModel {
                    inducing: InducingSet::new(from_row_major(m, d, inducing)?)?,
                    kernel: KernelParams {
                        log_alpha: *log_alpha,
                        log_gamma: *log_gamma,
                    },
                    mean,
                    log_beta: *log_beta,
                    variational: VariationalState {
                        m: DVector::from_column_slice(q_mean),
                        s: from_row_major(m, m, q_cov)?,
                        lambda1: DVector::from_column_slice(q_natural1),
                        lambda2: from_row_major(m, m, q_natural2)?,
                    },
                })
            }
            FlatParams::Nn {
                input_dim,
                hidden,
                mean_params,
                log_beta,
            } => Fitted::Nn(NnRegressor {
                mlp: mlp_from(*input_dim, *hidden, mean_params)?,
                log_beta: *log_beta,
            }),
        };
        let dim = match &model {
            Fitted::Svgp(m) => m.input_dim(),
            Fitted::Nn(m) => m.mlp.input_dim(),
        };
        if dim != self.input_names.len() || dim != self.standardizer.input_mean.len() {
            return Err(Error::SchemaMismatch("input names, scaling and parameters disagree on dimension".into()));
        }
        Ok(TrainedModel {
            kind: self.kind,
            model,
            standardizer: self.standardizer.clone(),
            input_names: self.input_names.clone(),
            target_name: self.target_name.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::<f64>::from_fn(n, 2, |_, c| rng.random_range(-3.0..3.0) * (c + 1) as f64 + 10.0);
        let y = DVector::from_fn(n, |i, _| 50.0 + 4.0 * (x[(i, 0)] - 10.0).sin() + rng.random_range(-0.5..0.5));
        Dataset::new(x, y).unwrap()
    }

    fn quick(kind: ModelKind) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.model.kind = kind;
        cfg.model.inducing.m = 8;
        cfg.training.max_epochs = 15;
        cfg.training.pretrain_epochs = 15;
        cfg.training.adam.lr = 1e-2;
        cfg
    }

    fn trained(kind: ModelKind) -> (TrainedModel, RunConfig) {
        let train = toy(60, 1);
        let valid = toy(10, 2);
        let cfg = quick(kind);
        let (model, standardizer, _) = train_model(&train, &valid, &cfg.model, &cfg.training, 5).unwrap();
        let t = TrainedModel {
            kind,
            model,
            standardizer,
            input_names: vec!["a".into(), "b".into()],
            target_name: "y".into(),
        };
        (t, cfg)
    }

    #[test]
    fn model_file_round_trip_is_bitwise() {
        let x = toy(25, 9).x;
        for kind in ModelKind::ALL {
            let (model, cfg) = trained(kind);
            let file = ModelFile::from_trained(&model, &cfg).unwrap();
            let back = ModelFile::from_json(&file.to_json().unwrap()).unwrap();
            assert_eq!(back, file);
            let reloaded = back.to_trained().unwrap();
            let p0 = model.predict(&x).unwrap();
            let p1 = reloaded.predict(&x).unwrap();
            for i in 0..x.nrows() {
                assert_eq!(p0.mean[i].to_bits(), p1.mean[i].to_bits(), "{kind:?}");
                assert_eq!(p0.var[i].to_bits(), p1.var[i].to_bits(), "{kind:?}");
            }
        }
    }

    #[test]
    fn predictions_are_in_raw_units() {
        let (model, _) = trained(ModelKind::Proposed);
        let data = toy(40, 3);
        let pred = model.predict(&data.x).unwrap();
        let mean_err = (&pred.mean - &data.y).map(|v| v.abs()).mean();
        assert!(mean_err < 4.0, "mean abs error {mean_err}");
        assert!(pred.mean.mean() > 40.0);
    }

    #[test]
    fn wrong_width_is_schema_error() {
        let (model, _) = trained(ModelKind::Nn);
        assert!(model.predict(&DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn rejects_other_versions_and_keys() {
        let (model, cfg) = trained(ModelKind::Nn);
        let mut file = ModelFile::from_trained(&model, &cfg).unwrap();
        file.format_version = 2;
        assert!(matches!(file.to_trained(), Err(Error::SchemaMismatch(_))));
        let text = ModelFile::from_trained(&model, &cfg).unwrap().to_json().unwrap();
        let bad = text.replacen("\"kind\"", "\"extra\": 1, \"kind\"", 1);
        assert!(ModelFile::from_json(&bad).is_err());
    }
}
