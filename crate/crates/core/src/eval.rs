//! Metrics, paired significance testing and the benchmark runner.

use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, ModelConfig, ModelKind, TrainingConfig};
use crate::data::{load_table, make_task, split_by_location, synth_spatiotemporal, SplitSpec, Table, TableSchema};
use crate::error::{Error, Result};
use crate::pipeline::{train_model, TrainedModel};
use crate::predictive::PredictiveDist;

/// Largest reported mean log density; larger values (including `+inf` from
/// zero-variance exact hits) are clamped to this and flagged.
pub const LOGLIK_CAP: f64 = 1e6;

/// `log N(y | mean, var)`, with the `var -> 0` limits for `var <= 0`.
pub fn gaussian_log_density(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    if var <= 0.0 {
        return if r == 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    -0.5 * ((2.0 * std::f64::consts::PI).ln() + var.ln() + r * r / var)
}

pub fn point_log_densities(pred: &PredictiveDist<f64>, y: &DVector<f64>) -> Result<Vec<f64>> {
    if pred.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: pred.len(),
            got: y.len(),
        });
    }
    Ok((0..y.len())
        .map(|i| gaussian_log_density(y[i], pred.mean[i], pred.var[i]))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLik {
    pub value: f64,
    pub capped: bool,
}

fn capped_mean(scores: &[f64]) -> LogLik {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    if mean > LOGLIK_CAP {
        LogLik {
            value: LOGLIK_CAP,
            capped: true,
        }
    } else {
        LogLik {
            value: mean,
            capped: false,
        }
    }
}

/// Mean predictive log density per test point.
pub fn test_loglik(pred: &PredictiveDist<f64>, y: &DVector<f64>) -> Result<LogLik> {
    let scores = point_log_densities(pred, y)?;
    if scores.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(capped_mean(&scores))
}

pub fn mse(means: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if means.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: means.len(),
            got: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok((means - y).norm_squared() / y.len() as f64)
}

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITERS: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITERS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student-t distribution function with `nu` degrees of freedom.
pub fn student_t_cdf(t: f64, nu: f64) -> f64 {
    let tail = 0.5 * reg_inc_beta(0.5 * nu, 0.5, nu / (nu + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t_stat: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub significant: bool,
    /// The differences had zero spread.
    pub degenerate: bool,
}

/// Two-sided paired t-test of `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        let significant = mean != 0.0;
        return Ok(TTest {
            t_stat: if significant { mean.signum() * f64::INFINITY } else { 0.0 },
            p_value: if significant { 0.0 } else { 1.0 },
            significant,
            degenerate: true,
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let nu = (n - 1) as f64;
    let p = reg_inc_beta(0.5 * nu, 0.5, nu / (nu + t * t));
    Ok(TTest {
        t_stat: t,
        p_value: p,
        significant: p < alpha,
        degenerate: false,
    })
}

/// Benchmark settings. `targets` lists the task variables; when empty every
/// column of the table is a task.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub data: DataConfig,
    pub methods: Vec<ModelKind>,
    pub targets: Vec<String>,
    pub alpha: Option<f64>,
}

impl BenchmarkConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: BenchmarkConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let run = crate::config::RunConfig {
            model: cfg.model.clone(),
            training: cfg.training.clone(),
            data: cfg.data.clone(),
        };
        run.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn methods(&self) -> Vec<ModelKind> {
        if self.methods.is_empty() {
            ModelKind::ALL.to_vec()
        } else {
            self.methods.clone()
        }
    }
}

/// Loads the configured table, from a file or the synthetic generator.
pub fn load_source(data: &DataConfig) -> Result<Table> {
    let schema = TableSchema {
        required_columns: Vec::new(),
        location_columns: data.location_columns.clone().map(|[a, b]| (a, b)),
    };
    match (&data.path, &data.synthetic) {
        (Some(path), None) => load_table(Path::new(path), &schema),
        (None, Some(synth)) => {
            let table = synth_spatiotemporal(synth, data.seed)?.table;
            match &schema.location_columns {
                Some((lat, lon)) => table.with_location(lat, lon),
                None => Ok(table),
            }
        }
        (Some(_), Some(_)) => Err(Error::Config("data.path and data.synthetic are exclusive".into())),
        (None, None) => Err(Error::Config("one of data.path or data.synthetic is required".into())),
    }
}

/// Mixes the master seed with a task id (SplitMix64 finalizer).
pub fn task_seed(master: u64, task: u64) -> u64 {
    let mut z = master ^ task.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub test_loglik: f64,
    pub loglik_capped: bool,
    pub mse: f64,
    pub train_seconds: f64,
    pub n_test: usize,
    /// Best on this variable or not significantly worse than the best.
    pub bold: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub variable: String,
    pub method: ModelKind,
    pub metrics: Option<CellMetrics>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodAverage {
    pub method: ModelKind,
    pub test_loglik: f64,
    pub mse: f64,
    pub train_seconds: f64,
    pub n_variables: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub methods: Vec<ModelKind>,
    pub variables: Vec<String>,
    pub cells: Vec<Cell>,
    pub averages: Vec<MethodAverage>,
}

/// Per-method averages over the variables where that method succeeded.
pub fn averages(methods: &[ModelKind], cells: &[Cell]) -> Vec<MethodAverage> {
    methods
        .iter()
        .map(|&method| {
            let ok: Vec<&CellMetrics> = cells
                .iter()
                .filter(|c| c.method == method)
                .filter_map(|c| c.metrics.as_ref())
                .collect();
            let n = ok.len();
            let avg = |f: fn(&CellMetrics) -> f64| {
                if n == 0 {
                    f64::NAN
                } else {
                    ok.iter().map(|m| f(m)).sum::<f64>() / n as f64
                }
            };
            MethodAverage {
                method,
                test_loglik: avg(|m| m.test_loglik),
                mse: avg(|m| m.mse),
                train_seconds: avg(|m| m.train_seconds),
                n_variables: n,
            }
        })
        .collect()
}

impl MetricsReport {
    pub fn cell(&self, variable: &str, method: ModelKind) -> Option<&Cell> {
        self.cells.iter().find(|c| c.variable == variable && c.method == method)
    }

    pub fn average(&self, method: ModelKind) -> Option<&MethodAverage> {
        self.averages.iter().find(|a| a.method == method)
    }

    pub fn successes(&self) -> usize {
        self.cells.iter().filter(|c| c.metrics.is_some()).count()
    }

    /// Aligned plain-text table; `*` marks bold entries.
    pub fn render(&self) -> String {
        let mut header = vec!["variable".to_string()];
        for m in &self.methods {
            header.push(format!("{} loglik", m.name()));
        }
        for m in &self.methods {
            header.push(format!("{} mse", m.name()));
        }
        for m in &self.methods {
            header.push(format!("{} sec", m.name()));
        }
        let mut rows = vec![header];
        for v in &self.variables {
            let mut row = vec![v.clone()];
            let get = |m: ModelKind| self.cell(v, m).and_then(|c| c.metrics.as_ref());
            for &m in &self.methods {
                row.push(match get(m) {
                    Some(c) => format!("{:.3}{}", c.test_loglik, if c.bold { "*" } else { "" }),
                    None => "failed".into(),
                });
            }
            for &m in &self.methods {
                row.push(get(m).map_or("failed".into(), |c| format!("{:.3}", c.mse)));
            }
            for &m in &self.methods {
                row.push(get(m).map_or("failed".into(), |c| format!("{:.2}", c.train_seconds)));
            }
            rows.push(row);
        }
        let mut avg = vec!["average".to_string()];
        for &m in &self.methods {
            avg.push(self.average(m).map_or(String::new(), |a| format!("{:.3}", a.test_loglik)));
        }
        for &m in &self.methods {
            avg.push(self.average(m).map_or(String::new(), |a| format!("{:.3}", a.mse)));
        }
        for &m in &self.methods {
            avg.push(self.average(m).map_or(String::new(), |a| format!("{:.2}", a.train_seconds)));
        }
        rows.push(avg);

        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        for cell in self.cells.iter().filter(|c| c.error.is_some()) {
            out.push_str(&format!(
                "{} / {}: {}\n",
                cell.variable,
                cell.method.name(),
                cell.error.as_deref().unwrap_or_default()
            ));
        }
        out
    }
}

struct Scored {
    metrics: CellMetrics,
    scores: Vec<f64>,
}

/// Marks the best method per variable and every method whose per-point
/// scores are not significantly below the best's.
fn mark_bold(scored: &mut [Option<Scored>], alpha: f64) -> Result<()> {
    let best = scored
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.as_ref().map(|s| (i, s.metrics.test_loglik)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i);
    let Some(best) = best else { return Ok(()) };
    let best_scores = scored[best].as_ref().map(|s| s.scores.clone()).unwrap_or_default();
    for (i, s) in scored.iter_mut().enumerate() {
        let Some(s) = s else { continue };
        s.metrics.bold = if i == best {
            true
        } else {
            assert_eq!(s.scores.len(), best_scores.len(), "per-point scores must be aligned");
            let clean = |v: &[f64]| v.iter().all(|x| x.is_finite());
            if !(clean(&best_scores) && clean(&s.scores)) {
                false
            } else {
                !paired_t_test(&best_scores, &s.scores, alpha)?.significant
            }
        };
    }
    Ok(())
}

fn evaluate(model: &TrainedModel, x: &nalgebra::DMatrix<f64>, y: &DVector<f64>, seconds: f64) -> Result<Scored> {
    let pred = model.predict(x)?;
    let scores = point_log_densities(&pred, y)?;
    let ll = capped_mean(&scores);
    Ok(Scored {
        metrics: CellMetrics {
            test_loglik: ll.value,
            loglik_capped: ll.capped,
            mse: mse(&pred.mean, y)?,
            train_seconds: seconds,
            n_test: y.len(),
            bold: false,
        },
        scores,
    })
}

/// Runs every (variable, method) cell on one shared split per variable.
/// Failures are recorded in their cell; `progress` is called after each one.
pub fn run_benchmark_with(cfg: &BenchmarkConfig, mut progress: impl FnMut(&Cell)) -> Result<MetricsReport> {
    let table = load_source(&cfg.data)?;
    let variables: Vec<String> = if cfg.targets.is_empty() {
        table.column_names.clone()
    } else {
        cfg.targets.clone()
    };
    let methods = cfg.methods();
    let alpha = cfg.alpha.unwrap_or(0.05);
    let split = split_by_location(
        &table,
        &SplitSpec {
            test_location_fraction: cfg.data.test_location_fraction,
            valid_fraction: cfg.data.valid_fraction,
            seed: cfg.data.seed,
        },
    )?;

    let mut cells = Vec::new();
    for (vi, variable) in variables.iter().enumerate() {
        let seed = task_seed(cfg.data.seed, vi as u64);
        let task = make_task(&table, variable);
        let mut scored: Vec<Option<Scored>> = Vec::new();
        let mut errors: Vec<Option<String>> = Vec::new();
        for &method in &methods {
            let outcome = task.as_ref().map_err(|e| e.to_string()).and_then(|task| {
                let train = task.data.select(&split.train);
                let valid = task.data.select(&split.valid);
                let test = task.data.select(&split.test);
                let model_cfg = ModelConfig {
                    kind: method,
                    ..cfg.model.clone()
                };
                let start = Instant::now();
                let (model, standardizer, _) =
                    train_model(&train, &valid, &model_cfg, &cfg.training, seed).map_err(|e| e.to_string())?;
                let seconds = start.elapsed().as_secs_f64();
                let trained = TrainedModel {
                    kind: method,
                    model,
                    standardizer,
                    input_names: task.input_names.clone(),
                    target_name: variable.clone(),
                };
                evaluate(&trained, &test.x, &test.y, seconds).map_err(|e| e.to_string())
            });
            match outcome {
                Ok(s) => {
                    scored.push(Some(s));
                    errors.push(None);
                }
                Err(e) => {
                    scored.push(None);
                    errors.push(Some(e));
                }
            }
        }
        mark_bold(&mut scored, alpha)?;
        for ((method, s), error) in methods.iter().zip(scored).zip(errors) {
            let cell = Cell {
                variable: variable.clone(),
                method: *method,
                metrics: s.map(|s| s.metrics),
                error,
            };
            progress(&cell);
            cells.push(cell);
        }
    }
    let averages = averages(&methods, &cells);
    Ok(MetricsReport {
        methods,
        variables,
        cells,
        averages,
    })
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<MetricsReport> {
    run_benchmark_with(cfg, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictive::PredictTarget;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(mean: Vec<f64>, var: Vec<f64>) -> PredictiveDist<f64> {
        PredictiveDist {
            mean: DVector::from_vec(mean),
            var: DVector::from_vec(var),
            target: PredictTarget::YStar,
        }
    }

    #[test]
    fn standard_normal_at_zero() {
        let ll = test_loglik(&dist(vec![0.0], vec![1.0]), &DVector::from_element(1, 0.0)).unwrap();
        assert!((ll.value + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
        assert!((ll.value + 0.9189).abs() < 1e-4);
        assert!(!ll.capped);
    }

    #[test]
    fn doubling_variance_lowers_exact_hits() {
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a = test_loglik(&dist(y.iter().copied().collect(), vec![0.3, 1.0, 2.0]), &y).unwrap();
        let b = test_loglik(&dist(y.iter().copied().collect(), vec![0.6, 2.0, 4.0]), &y).unwrap();
        assert!(b.value < a.value);
    }

    #[test]
    fn zero_variance_is_capped() {
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let ll = test_loglik(&dist(vec![1.0, 2.0], vec![0.0, 0.0]), &y).unwrap();
        assert_eq!(ll.value, LOGLIK_CAP);
        assert!(ll.capped);
        assert!(test_loglik(&dist(vec![1.0], vec![1.0]), &y).is_err());
    }

    #[test]
    fn mse_cases() {
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(mse(&y.add_scalar(2.0), &y).unwrap(), 4.0);
        assert!(mse(&DVector::zeros(2), &y).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DVector::<f64>::from_fn(97, |_, _| rng.random_range(-5.0..5.0));
        let b = DVector::<f64>::from_fn(97, |_, _| rng.random_range(-5.0..5.0));
        let mut brute = 0.0;
        for i in 0..97 {
            brute += (a[i] - b[i]) * (a[i] - b[i]);
        }
        assert!((mse(&a, &b).unwrap() - brute / 97.0).abs() < 1e-12);
    }

    #[test]
    fn t_test_cases() {
        let a = [1.0, 2.0, 3.0];
        let r = paired_t_test(&a, &a, 0.05).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert!(!r.significant);

        let d = [1.0, 2.0, 3.0, 4.0, 5.0];
        let zeros = [0.0; 5];
        let r = paired_t_test(&d, &zeros, 0.05).unwrap();
        let expected = 3.0 / (2.5f64.sqrt() / 5f64.sqrt());
        assert!((r.t_stat - expected).abs() < 1e-12);
        assert!((r.t_stat - 4.243).abs() < 1e-3);
        assert!(r.significant);
        assert!(r.t_stat > 2.776);

        let r = paired_t_test(&[1.0, -1.0], &[0.0, 0.0], 0.05).unwrap();
        assert_eq!(r.t_stat, 0.0);
        assert!(!r.significant);

        let r = paired_t_test(&[2.0, 2.0, 2.0], &[1.0, 1.0, 1.0], 0.05).unwrap();
        assert!(r.degenerate && r.significant);
        assert!(matches!(paired_t_test(&[1.0], &[0.0], 0.05), Err(Error::TooFewSamples(1))));
    }

    #[test]
    fn t_critical_values() {
        // two-sided 5% critical values from standard tables
        for (nu, crit) in [(1.0, 12.706), (4.0, 2.776), (10.0, 2.228), (30.0, 2.042)] {
            let p = 2.0 * (1.0 - student_t_cdf(crit, nu));
            assert!((p - 0.05).abs() < 2e-4, "nu {nu}: p {p}");
        }
        assert_eq!(student_t_cdf(0.0, 3.0), 0.5);
    }

    #[test]
    fn ln_gamma_values() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12 * fact.ln().max(1.0));
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn averages_are_means() {
        let mk = |v: &str, m: ModelKind, ll: f64| Cell {
            variable: v.into(),
            method: m,
            metrics: Some(CellMetrics {
                test_loglik: ll,
                loglik_capped: false,
                mse: 2.0 * ll,
                train_seconds: 1.0,
                n_test: 3,
                bold: false,
            }),
            error: None,
        };
        let cells = vec![
            mk("a", ModelKind::Nn, 1.0),
            mk("b", ModelKind::Nn, 2.5),
            Cell {
                variable: "c".into(),
                method: ModelKind::Nn,
                metrics: None,
                error: Some("boom".into()),
            },
        ];
        let avg = averages(&[ModelKind::Nn], &cells);
        assert_eq!(avg[0].n_variables, 2);
        assert!((avg[0].test_loglik - 1.75).abs() < 1e-12);
        assert!((avg[0].mse - 3.5).abs() < 1e-12);
    }

    #[test]
    fn seeds_differ_per_task() {
        assert_ne!(task_seed(1, 0), task_seed(1, 1));
        assert_ne!(task_seed(1, 0), task_seed(2, 0));
        assert_eq!(task_seed(5, 3), task_seed(5, 3));
    }
}
