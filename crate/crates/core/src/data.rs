//! Tabular ingestion, per-variable task construction, location-grouped
//! splits, standardization, k-means and synthetic spatio-temporal data.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{gram, KernelParams};
use crate::linalg::{chol_psd, JitterPolicy};
use crate::predictive::PredictiveDist;

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub column_names: Vec<String>,
    /// One row per record, columns in header order.
    pub rows: DMatrix<f64>,
    /// Column indices of `(latitude, longitude)`.
    pub location_key: Option<(usize, usize)>,
    pub dropped_rows: usize,
}

/// Columns a file must provide.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableSchema {
    pub required_columns: Vec<String>,
    pub location_columns: Option<(String, String)>,
}

/// Variable names of the comprehensive-climate table.
pub const CC_COLUMNS: [&str; 19] = [
    "MON", "LAT", "LON", "CO2", "CH4", "CO", "H2", "WET", "CLD", "VAP", "PRE", "FRS", "DTR", "TMN",
    "TMP", "TMX", "GLO", "ETR", "ETRN",
];

/// Variable names of the historical climatology network table.
pub const USHCN_COLUMNS: [&str; 7] = ["MON", "LAT", "LON", "ELE", "PRE", "TMIN", "TMAX"];

impl TableSchema {
    pub fn with_location(lat: &str, lon: &str) -> Self {
        TableSchema {
            required_columns: Vec::new(),
            location_columns: Some((lat.to_string(), lon.to_string())),
        }
    }

    pub fn climate() -> Self {
        TableSchema {
            required_columns: CC_COLUMNS.iter().map(|s| s.to_string()).collect(),
            location_columns: Some(("LAT".into(), "LON".into())),
        }
    }

    pub fn ushcn() -> Self {
        TableSchema {
            required_columns: USHCN_COLUMNS.iter().map(|s| s.to_string()).collect(),
            location_columns: Some(("LAT".into(), "LON".into())),
        }
    }
}

impl Table {
    pub fn new(column_names: Vec<String>, rows: DMatrix<f64>) -> Result<Self> {
        if column_names.len() != rows.ncols() {
            return Err(Error::DimensionMismatch {
                expected: column_names.len(),
                got: rows.ncols(),
            });
        }
        Ok(Table {
            column_names,
            rows,
            location_key: None,
            dropped_rows: 0,
        })
    }

    pub fn with_location(mut self, lat: &str, lon: &str) -> Result<Self> {
        self.location_key = Some((self.column_index(lat)?, self.column_index(lon)?));
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<DVector<f64>> {
        Ok(self.rows.column(self.column_index(name)?).into_owned())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Table {
        Table {
            column_names: self.column_names.clone(),
            rows: self.rows.select_rows(idx),
            location_key: self.location_key,
            dropped_rows: 0,
        }
    }

    /// Location id of every row; ids number distinct `(lat, lon)` pairs in
    /// order of first appearance. Without a location key each row is its own
    /// location.
    pub fn location_ids(&self) -> (Vec<usize>, usize) {
        let Some((lat, lon)) = self.location_key else {
            return ((0..self.len()).collect(), self.len());
        };
        let mut seen: BTreeMap<(u64, u64), usize> = BTreeMap::new();
        let ids = (0..self.len())
            .map(|r| {
                let key = (self.rows[(r, lat)].to_bits(), self.rows[(r, lon)].to_bits());
                let next = seen.len();
                *seen.entry(key).or_insert(next)
            })
            .collect();
        (ids, seen.len())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.column_names)?;
        for r in 0..self.len() {
            w.write_record(self.rows.row(r).iter().map(|v| format_number(*v)))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Shortest decimal string that parses back to the same value.
pub fn format_number(v: f64) -> String {
    format!("{v:?}")
}

fn parse_cell(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Reads a comma-separated numeric table with a header row. Rows with a
/// missing, non-numeric or non-finite cell are dropped and counted.
pub fn load_table(path: &Path, schema: &TableSchema) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, schema)
}

pub fn read_table<R: std::io::Read>(reader: R, schema: &TableSchema) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    for col in &schema.required_columns {
        if !header.contains(col) {
            return Err(Error::MissingColumn(col.clone()));
        }
    }
    let width = header.len();
    let mut values = Vec::new();
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record?;
        let parsed: Option<Vec<f64>> = if record.len() == width {
            record.iter().map(parse_cell).collect()
        } else {
            None
        };
        match parsed {
            Some(row) => values.extend(row),
            None => dropped += 1,
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyTable);
    }
    let n = values.len() / width;
    let mut table = Table::new(header, DMatrix::from_row_slice(n, width, &values))?;
    table.dropped_rows = dropped;
    if let Some((lat, lon)) = &schema.location_columns {
        table = table.with_location(lat, lon)?;
    }
    Ok(table)
}

/// One regression task: predict `target` from every other column.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub data: Dataset<f64>,
    pub input_names: Vec<String>,
    pub target_name: String,
}

pub fn make_task(table: &Table, target: &str) -> Result<Task> {
    let t = table.column_index(target)?;
    let inputs: Vec<usize> = (0..table.column_names.len()).filter(|&c| c != t).collect();
    let x = table.rows.select_columns(&inputs);
    let y = table.rows.column(t).into_owned();
    Ok(Task {
        data: Dataset::new(x, y)?,
        input_names: inputs.iter().map(|&c| table.column_names[c].clone()).collect(),
        target_name: target.to_string(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub test_location_fraction: f64,
    pub valid_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(test_location_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            test_location_fraction,
            valid_fraction: 0.1,
            seed,
        }
    }
}

/// Row indices of each side of a split.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Holds out every row of a random `ceil(fraction * L)` subset of the `L`
/// locations as test data, then splits the remaining rows at random into
/// training and validation.
pub fn split_by_location(table: &Table, spec: &SplitSpec) -> Result<Split> {
    if !(spec.test_location_fraction > 0.0 && spec.test_location_fraction < 1.0) {
        return Err(Error::DegenerateSplit("test fraction must be in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (ids, n_locations) = table.location_ids();
    let mut locations: Vec<usize> = (0..n_locations).collect();
    locations.shuffle(&mut rng);
    let n_test = (spec.test_location_fraction * n_locations as f64).ceil() as usize;
    let mut is_test = vec![false; n_locations];
    for &l in &locations[..n_test.min(n_locations)] {
        is_test[l] = true;
    }

    let (mut test, mut rest) = (Vec::new(), Vec::new());
    for (row, &loc) in ids.iter().enumerate() {
        if is_test[loc] {
            test.push(row);
        } else {
            rest.push(row);
        }
    }
    rest.shuffle(&mut rng);
    let n_valid = (spec.valid_fraction * rest.len() as f64).round() as usize;
    let valid = rest[..n_valid].to_vec();
    let train = rest[n_valid..].to_vec();
    for (name, side) in [("train", &train), ("valid", &valid), ("test", &test)] {
        if side.is_empty() {
            return Err(Error::DegenerateSplit(format!("{name} side is empty")));
        }
    }
    Ok(Split { train, valid, test })
}

/// Seeded random split of `n` rows into training and validation, with
/// `round(valid_fraction * n)` (at least one) validation rows.
pub fn split_train_valid(n: usize, valid_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_valid = ((valid_fraction * n as f64).round() as usize).max(1);
    if n_valid >= n {
        return Err(Error::DegenerateSplit(format!("{n} rows are too few for a validation split")));
    }
    let train = rows.split_off(n_valid);
    Ok((train, rows))
}

/// Per-column z-scoring fitted on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    pub target_mean: f64,
    pub target_sd: f64,
    /// Columns with zero variance; these map to 0 and keep `sd = 1`.
    pub zero_variance: Vec<bool>,
}

fn mean_sd(v: impl Iterator<Item = f64> + Clone) -> (f64, f64, bool) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        (mean, 1.0, true)
    } else {
        (mean, sd, false)
    }
}

pub fn fit_standardizer(train: &Dataset<f64>) -> Standardizer {
    let mut input_mean = Vec::new();
    let mut input_sd = Vec::new();
    let mut zero_variance = Vec::new();
    for c in 0..train.dim() {
        let (m, s, z) = mean_sd(train.x.column(c).iter().copied());
        input_mean.push(m);
        input_sd.push(s);
        zero_variance.push(z);
    }
    let (target_mean, target_sd, _) = mean_sd(train.y.iter().copied());
    Standardizer {
        input_mean,
        input_sd,
        target_mean,
        target_sd,
        zero_variance,
    }
}

impl Standardizer {
    pub fn transform_x(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.input_mean.len(),
                got: x.ncols(),
            });
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.input_mean[j]) / self.input_sd[j]
        }))
    }

    pub fn invert_x(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            x[(i, j)] * self.input_sd[j] + self.input_mean[j]
        })
    }

    pub fn transform_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| (v - self.target_mean) / self.target_sd)
    }

    pub fn invert_y(&self, y: &DVector<f64>) -> DVector<f64> {
        y.map(|v| v * self.target_sd + self.target_mean)
    }

    pub fn apply(&self, data: &Dataset<f64>) -> Result<Dataset<f64>> {
        Dataset::new(self.transform_x(&data.x)?, self.transform_y(&data.y))
    }

    /// Back to raw target units; variances scale by `sd^2`.
    pub fn invert_prediction(&self, pred: &PredictiveDist<f64>) -> PredictiveDist<f64> {
        pred.affine(self.target_mean, self.target_sd)
    }
}

/// Lloyd's algorithm with seeded random-row initialization.
///
/// Returns `m` centers. When `m` is at least the number of distinct rows the
/// distinct rows are returned (repeated cyclically to fill `m`).
pub fn kmeans(x: &DMatrix<f64>, m: usize, seed: u64) -> DMatrix<f64> {
    const MAX_ITERS: usize = 100;
    const TOL: f64 = 1e-6;
    let (n, d) = x.shape();
    assert!(n >= 1 && m >= 1, "kmeans needs at least one row and one center");

    let mut distinct: Vec<usize> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for r in 0..n {
        let key: Vec<u64> = x.row(r).iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            distinct.push(r);
        }
    }
    if m >= distinct.len() {
        return DMatrix::from_fn(m, d, |i, j| x[(distinct[i % distinct.len()], j)]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<usize> = distinct.choose_multiple(&mut rng, m).copied().collect();
    let mut centers = x.select_rows(&init);
    let mut assign = vec![0usize; n];
    let sq = |a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize| {
        (0..d).map(|c| (a[(i, c)] - b[(j, c)]).powi(2)).sum::<f64>()
    };

    for _ in 0..MAX_ITERS {
        for r in 0..n {
            let mut best = (f64::INFINITY, 0);
            for c in 0..m {
                let dist = sq(x, r, &centers, c);
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            assign[r] = best.1;
        }
        let mut sums = DMatrix::<f64>::zeros(m, d);
        let mut counts = vec![0usize; m];
        for r in 0..n {
            counts[assign[r]] += 1;
            for c in 0..d {
                sums[(assign[r], c)] += x[(r, c)];
            }
        }
        let mut next = centers.clone();
        for c in 0..m {
            if counts[c] > 0 {
                for k in 0..d {
                    next[(c, k)] = sums[(c, k)] / counts[c] as f64;
                }
            }
        }
        // re-seed empty clusters from the point farthest from its center
        for c in 0..m {
            if counts[c] == 0 {
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq(x, a, &next, assign[a]).total_cmp(&sq(x, b, &next, assign[b]))
                    })
                    .unwrap();
                for k in 0..d {
                    next[(c, k)] = x[(far, k)];
                }
                assign[far] = c;
            }
        }
        let shift = (0..m).map(|c| sq(&next, c, &centers, c).sqrt()).fold(0.0, f64::max);
        centers = next;
        if shift < TOL {
            break;
        }
    }
    centers
}

/// Generator settings for synthetic spatio-temporal tables.
///
/// Locations lie on a `grid_size x grid_size` grid with 2.5 degree spacing;
/// each location has one record per month. The target is a smooth random
/// network trend plus a GP residual over (month, lat, lon) plus noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub grid_size: usize,
    pub months: usize,
    pub trend_hidden: usize,
    /// Typical trend-network weight on the month input (larger is sharper).
    pub month_sharpness: f64,
    /// Typical trend-network weight on each location input.
    pub space_sharpness: f64,
    /// Standard deviation of the trend over the grid.
    pub trend_scale: f64,
    pub residual_alpha: f64,
    pub residual_gamma: f64,
    /// Observation noise variance, `1 / beta`.
    pub noise_variance: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            grid_size: 10,
            months: 28,
            trend_hidden: 3,
            month_sharpness: 8.0,
            space_sharpness: 0.3,
            trend_scale: 1.5,
            residual_alpha: 0.5,
            residual_gamma: 0.5,
            noise_variance: 0.02,
        }
    }
}

/// Dense residual sampling limit.
pub const SYNTH_MAX_ROWS: usize = 5000;

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    /// Trend `g_true(x)` per row.
    pub trend: DVector<f64>,
    /// Noise-free value `g_true(x) + residual` per row.
    pub latent: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub table: Table,
    pub truth: GroundTruth,
}

pub const SYNTH_TARGET: &str = "target";

pub fn synth_spatiotemporal(cfg: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    let g = cfg.grid_size;
    let t = cfg.months;
    let n = g * g * t;
    if n == 0 {
        return Err(Error::Config("synthetic grid is empty".into()));
    }
    if n > SYNTH_MAX_ROWS {
        return Err(Error::Config(format!("synthetic table of {n} rows exceeds {SYNTH_MAX_ROWS}")));
    }
    if cfg.residual_alpha < 0.0 || cfg.noise_variance < 0.0 || cfg.residual_gamma <= 0.0 {
        return Err(Error::Config("synthetic variances must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // raw columns: month, lat, lon, target
    let mut raw = DMatrix::zeros(n, 4);
    let mut r = 0;
    for i in 0..g {
        for j in 0..g {
            for m in 0..t {
                raw[(r, 0)] = (m + 1) as f64;
                raw[(r, 1)] = 30.0 + 2.5 * i as f64;
                raw[(r, 2)] = -120.0 + 2.5 * j as f64;
                r += 1;
            }
        }
    }
    // generator coordinates: each input centred with unit spread
    let norm = |k: usize, count: usize| {
        let c = (count as f64 - 1.0) / 2.0;
        let s = ((count * count) as f64 - 1.0).max(1.0).sqrt() / 12f64.sqrt();
        (k as f64 - c) / s
    };
    let mut coords = DMatrix::zeros(n, 3);
    let mut r = 0;
    for i in 0..g {
        for j in 0..g {
            for m in 0..t {
                coords[(r, 0)] = norm(m, t);
                coords[(r, 1)] = norm(i, g);
                coords[(r, 2)] = norm(j, g);
                r += 1;
            }
        }
    }

    let h = cfg.trend_hidden.max(1);
    let w1 = DMatrix::from_fn(h, 3, |_, c| {
        let sharpness = if c == 0 { cfg.month_sharpness } else { cfg.space_sharpness };
        sharpness * rng.sample::<f64, _>(StandardNormal)
    });
    let b1 = DVector::from_fn(h, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let w2 = DVector::from_fn(h, |_, _| rng.sample::<f64, _>(StandardNormal));
    let trend = DVector::from_fn(n, |row, _| {
        let mut acc = 0.0;
        for k in 0..h {
            let pre = (0..3).map(|c| w1[(k, c)] * coords[(row, c)]).sum::<f64>() + b1[k];
            acc += w2[k] * pre.tanh();
        }
        acc
    });
    // rescale so every draw has the same trend strength
    let centred = trend.add_scalar(-trend.mean());
    let sd = (centred.norm_squared() / n as f64).sqrt();
    let trend = if sd > 0.0 { centred * (cfg.trend_scale / sd) } else { centred };

    let residual = if cfg.residual_alpha > 0.0 {
        let kp = KernelParams::<f64>::new(cfg.residual_alpha, cfg.residual_gamma);
        let k = gram(&coords, &coords, &kp)?;
        let f = chol_psd(&k, &JitterPolicy::default())?;
        let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        f.lower() * eps
    } else {
        DVector::zeros(n)
    };
    let latent = &trend + residual;
    let sd = cfg.noise_variance.sqrt();
    for row in 0..n {
        let noise = if sd > 0.0 { sd * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
        raw[(row, 3)] = latent[row] + noise;
    }
    let names = vec!["month".into(), "lat".into(), "lon".into(), SYNTH_TARGET.into()];
    let table = Table::new(names, raw)?.with_location("lat", "lon")?;
    Ok(SynthOutput {
        table,
        truth: GroundTruth { trend, latent },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, schema: &TableSchema) -> Result<Table> {
        read_table(text.as_bytes(), schema)
    }

    #[test]
    fn well_formed_file() {
        let t = read("a,b,c\n1,2,3\n4,5,6\n7,8.5,-9e-1\n", &TableSchema::default()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.column_names, vec!["a", "b", "c"]);
        assert_eq!(t.rows[(2, 2)], -0.9);
        assert_eq!(t.dropped_rows, 0);
    }

    #[test]
    fn malformed_rows_dropped() {
        let t = read("a,b\n1,2\nx,3\n4,\n5,6,7\n8,nan\n9,10\n", &TableSchema::default()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dropped_rows, 4);
        let t = read("a,b\n1,2\nfoo,3\n", &TableSchema::default()).unwrap();
        assert_eq!(t.dropped_rows, 1);
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(
            read("a,b\n1,2\n", &TableSchema::with_location("LAT", "b")),
            Err(Error::MissingColumn(c)) if c == "LAT"
        ));
        assert!(matches!(read("a,b\nx,y\n", &TableSchema::default()), Err(Error::EmptyTable)));
        let header = CC_COLUMNS.join(",");
        let row = vec!["1"; 19].join(",");
        let t = read(&format!("{header}\n{row}\n"), &TableSchema::climate()).unwrap();
        assert!(t.column_index("CO2").is_ok() && t.column_index("TMP").is_ok());
        assert!(matches!(read("MON,LAT\n1,2\n", &TableSchema::climate()), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn tasks_drop_target_column() {
        let header = CC_COLUMNS.join(",");
        let row = (0..19).map(|i| i.to_string()).collect::<Vec<_>>().join(",");
        let t = read(&format!("{header}\n{row}\n{row}\n"), &TableSchema::climate()).unwrap();
        let tasks: Vec<Task> = CC_COLUMNS.iter().map(|c| make_task(&t, c).unwrap()).collect();
        assert_eq!(tasks.len(), 19);
        assert!(tasks.iter().all(|k| k.data.dim() == 18));
        let first = &tasks[0];
        let last = &tasks[18];
        assert_ne!(first.input_names, last.input_names);
        assert_eq!(first.data.len(), last.data.len());
        assert_eq!(first.data.y[0], 0.0);
        assert_eq!(last.input_names[0], "MON");

        let header = USHCN_COLUMNS.join(",");
        let row = vec!["1"; 7].join(",");
        let t = read(&format!("{header}\n{row}\n"), &TableSchema::ushcn()).unwrap();
        assert!(USHCN_COLUMNS.iter().all(|c| make_task(&t, c).unwrap().data.dim() == 6));
        assert!(matches!(make_task(&t, "NOPE"), Err(Error::MissingColumn(_))));
    }

    fn grid_table(locations: usize, per_location: usize) -> Table {
        let n = locations * per_location;
        let rows = DMatrix::from_fn(n, 3, |r, c| match c {
            0 => (r / per_location) as f64,
            1 => -((r / per_location) as f64),
            _ => r as f64,
        });
        Table::new(vec!["lat".into(), "lon".into(), "v".into()], rows)
            .unwrap()
            .with_location("lat", "lon")
            .unwrap()
    }

    fn test_locations(t: &Table, s: &Split) -> std::collections::BTreeSet<usize> {
        let (ids, _) = t.location_ids();
        s.test.iter().map(|&r| ids[r]).collect()
    }

    #[test]
    fn location_split_partitions() {
        let t = grid_table(10, 12);
        let s = split_by_location(&t, &SplitSpec::new(0.5, 3)).unwrap();
        assert_eq!(test_locations(&t, &s).len(), 5);
        let mut all = [s.train.clone(), s.valid.clone(), s.test.clone()].concat();
        all.sort();
        assert_eq!(all, (0..120).collect::<Vec<_>>());
        assert_eq!(s.valid.len(), 6);

        assert_eq!(s, split_by_location(&t, &SplitSpec::new(0.5, 3)).unwrap());
        assert_ne!(s, split_by_location(&t, &SplitSpec::new(0.5, 4)).unwrap());
    }

    #[test]
    fn no_location_leakage() {
        let t = grid_table(17, 5);
        let (ids, _) = t.location_ids();
        for seed in 0..20 {
            for frac in [0.2, 0.5, 0.8] {
                let s = split_by_location(&t, &SplitSpec::new(frac, seed)).unwrap();
                let test = test_locations(&t, &s);
                assert!(s.train.iter().chain(&s.valid).all(|r| !test.contains(&ids[*r])));
                assert_eq!(test.len(), (frac * 17.0f64).ceil() as usize);
            }
        }
    }

    #[test]
    fn degenerate_split() {
        let t = grid_table(1, 4);
        assert!(matches!(
            split_by_location(&t, &SplitSpec::new(0.5, 0)),
            Err(Error::DegenerateSplit(_))
        ));
    }

    #[test]
    fn train_valid_split() {
        let (train, valid) = split_train_valid(10, 0.1, 4).unwrap();
        assert_eq!((train.len(), valid.len()), (9, 1));
        let mut all = [train, valid].concat();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(split_train_valid(1, 0.1, 0).is_err());
    }

    #[test]
    fn standardizer_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(40, 3, |_, c| if c == 2 { 7.0 } else { rng.random_range(-5.0..20.0) });
        let y = DVector::from_fn(40, |_, _| rng.random_range(100.0..300.0));
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let s = fit_standardizer(&data);
        let z = s.apply(&data).unwrap();
        for c in 0..2 {
            let col = z.x.column(c);
            let mean = col.mean();
            let sd = (col.map(|v| (v - mean).powi(2)).sum() / 40.0).sqrt();
            assert!(mean.abs() < 1e-8 && (sd - 1.0).abs() < 1e-8);
        }
        assert_eq!(s.zero_variance, vec![false, false, true]);
        assert!(z.x.column(2).iter().all(|v| *v == 0.0));
        assert!((s.invert_x(&z.x) - &x).amax() < 1e-10);
        assert!((s.invert_y(&z.y) - &y).amax() < 1e-10);

        let pred = PredictiveDist {
            mean: DVector::from_element(1, 0.5),
            var: DVector::from_element(1, 0.3),
            target: crate::predictive::PredictTarget::YStar,
        };
        let raw = s.invert_prediction(&pred);
        assert!((raw.var[0] - 0.3 * s.target_sd * s.target_sd).abs() < 1e-9);
        assert!((raw.mean[0] - (0.5 * s.target_sd + s.target_mean)).abs() < 1e-9);
    }

    #[test]
    fn standardizer_ignores_other_rows() {
        let t = grid_table(10, 6);
        let task = make_task(&t, "v").unwrap();
        let split = split_by_location(&t, &SplitSpec::new(0.3, 1)).unwrap();
        let train = task.data.select(&split.train);
        let s = fit_standardizer(&train);
        let mean_v = train.y.mean();
        assert!((s.target_mean - mean_v).abs() < 1e-12);
        let all = fit_standardizer(&task.data);
        assert!((all.target_mean - s.target_mean).abs() > 1e-6);
    }

    #[test]
    fn kmeans_cases() {
        let x = DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 2.0, 3.0, 1.0, 1.0]);
        let c = kmeans(&x, 4, 1);
        for r in [0, 1, 3] {
            assert!((0..4).any(|i| c.row(i) == x.row(r)));
        }

        let c = kmeans(&x, 1, 1);
        assert!((c[(0, 0)] - 0.8).abs() < 1e-12 && (c[(0, 1)] - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let blob = |cx: f64, rng: &mut ChaCha8Rng| {
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r: f64 = rng.random_range(0.0..1.0);
            [cx + r * a.cos(), r * a.sin()]
        };
        let mut pts = Vec::new();
        for i in 0..60 {
            pts.extend(blob(if i % 2 == 0 { 0.0 } else { 100.0 }, &mut rng));
        }
        let x = DMatrix::from_row_slice(60, 2, &pts);
        let means = [x.select_rows(&(0..60).step_by(2).collect::<Vec<_>>()).row_mean(), x.select_rows(&(1..60).step_by(2).collect::<Vec<_>>()).row_mean()];
        for seed in 0..5 {
            let c = kmeans(&x, 2, seed);
            for m in &means {
                let near = (0..2).any(|i| ((c[(i, 0)] - m[0]).powi(2) + (c[(i, 1)] - m[1]).powi(2)).sqrt() <= 1.0);
                assert!(near, "seed {seed}: {c}");
            }
        }
    }

    #[test]
    fn synth_zero_residual_zero_noise() {
        let cfg = SynthConfig {
            grid_size: 3,
            months: 4,
            residual_alpha: 0.0,
            noise_variance: 0.0,
            ..Default::default()
        };
        let out = synth_spatiotemporal(&cfg, 1).unwrap();
        let y = out.table.column(SYNTH_TARGET).unwrap();
        assert_eq!(y, out.truth.trend);
        assert_eq!(out.table.len(), 36);
        assert_eq!(out.table.location_ids().1, 9);
    }

    #[test]
    fn synth_seeded() {
        let cfg = SynthConfig {
            grid_size: 4,
            months: 5,
            ..Default::default()
        };
        assert_eq!(synth_spatiotemporal(&cfg, 7).unwrap(), synth_spatiotemporal(&cfg, 7).unwrap());
        assert_ne!(synth_spatiotemporal(&cfg, 7).unwrap(), synth_spatiotemporal(&cfg, 8).unwrap());
        let big = SynthConfig {
            grid_size: 20,
            months: 13,
            ..Default::default()
        };
        assert!(synth_spatiotemporal(&big, 0).is_err());
    }

    #[test]
    fn synth_residual_variance() {
        // variance of y - trend is alpha + 1/beta in expectation; average
        // over independent draws to tame the spatial correlation
        let cfg = SynthConfig {
            grid_size: 10,
            months: 20,
            residual_alpha: 0.6,
            residual_gamma: 20.0,
            noise_variance: 0.2,
            ..Default::default()
        };
        let mut total = 0.0;
        let draws = 4;
        for seed in 0..draws {
            let out = synth_spatiotemporal(&cfg, seed).unwrap();
            let y = out.table.column(SYNTH_TARGET).unwrap();
            let d = y - &out.truth.trend;
            total += d.map(|v| v * v).mean();
        }
        let var = total / draws as f64;
        assert!((var - 0.8).abs() <= 0.08, "sample variance {var}");
    }
}
