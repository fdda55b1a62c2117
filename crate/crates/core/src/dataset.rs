//! Fatigue test records: CSV ingestion, two-stage outlier filtering, min-max
//! scaling of the three model inputs and seeded k-fold assignment.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed;

pub const CSV_HEADER: [&str; 7] = [
    "binder_content",
    "air_voids",
    "strain_microstrain",
    "temperature_c",
    "frequency_hz",
    "fatigue_life_cycles",
    "source",
];

/// Number of model inputs: binder content, air voids, strain.
pub const N_FEATURES: usize = 3;

/// Test temperatures (°C) accepted for modeling.
pub const MODELING_TEMPERATURES: [f64; 2] = [20.0, 21.1];
pub const MODELING_FREQUENCY: f64 = 10.0;

/// One four-point bending fatigue test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Binder content, % by mass.
    pub binder_content: f64,
    /// Air voids, % by volume.
    pub air_voids: f64,
    /// Strain amplitude in microstrain.
    pub strain: f64,
    pub temperature: f64,
    pub frequency: f64,
    /// Load cycles to failure.
    pub fatigue_life: f64,
    pub source_id: String,
}

impl Sample {
    pub fn new(
        binder_content: f64,
        air_voids: f64,
        strain: f64,
        temperature: f64,
        frequency: f64,
        fatigue_life: f64,
        source_id: impl Into<String>,
    ) -> Self {
        Sample {
            binder_content,
            air_voids,
            strain,
            temperature,
            frequency,
            fatigue_life,
            source_id: source_id.into(),
        }
    }

    /// Model inputs in column order `[binder, voids, strain]`.
    pub fn features(&self) -> [f64; N_FEATURES] {
        [self.binder_content, self.air_voids, self.strain]
    }

    /// Whether the test ran at the temperature and frequency used for modeling.
    pub fn has_modeling_conditions(&self) -> bool {
        MODELING_TEMPERATURES
            .iter()
            .any(|t| (self.temperature - t).abs() < 1e-9)
            && (self.frequency - MODELING_FREQUENCY).abs() < 1e-9
    }

    fn check(&self, row: usize) -> Result<()> {
        let bad = |column: &str, message: &str| Error::MalformedRow {
            row,
            column: column.to_string(),
            message: message.to_string(),
        };
        if !(self.fatigue_life > 0.0) {
            return Err(Error::NonPositiveFatigueLife(row));
        }
        if !(self.binder_content > 0.0 && self.binder_content < 100.0) {
            return Err(bad("binder_content", "must lie in (0, 100)"));
        }
        if !(self.air_voids >= 0.0 && self.air_voids < 100.0) {
            return Err(bad("air_voids", "must lie in [0, 100)"));
        }
        if !(self.strain > 0.0) {
            return Err(bad("strain_microstrain", "must be positive"));
        }
        Ok(())
    }
}

/// Fatigue life targets of `samples`, unscaled.
pub fn targets(samples: &[Sample]) -> Array1<f64> {
    samples.iter().map(|s| s.fatigue_life).collect()
}

fn parse_number(field: &str, row: usize, column: &str) -> Result<f64> {
    let value: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
        row,
        column: column.to_string(),
        message: format!("cannot parse `{field}` as a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::MalformedRow {
            row,
            column: column.to_string(),
            message: "value is not finite".to_string(),
        });
    }
    Ok(value)
}

/// Parses a temperature in °C. A trailing `F` or `°F` marks Fahrenheit, which
/// is converted and rounded to 0.1 °C (70 °F becomes 21.1 °C).
fn parse_temperature(field: &str, row: usize) -> Result<f64> {
    let trimmed = field.trim();
    let fahrenheit = trimmed
        .strip_suffix("°F")
        .or_else(|| trimmed.strip_suffix('F'))
        .or_else(|| trimmed.strip_suffix('f'));
    match fahrenheit {
        Some(value) => {
            let f = parse_number(value, row, "temperature_c")?;
            Ok(((f - 32.0) * 5.0 / 9.0 * 10.0).round() / 10.0)
        }
        None => parse_number(
            trimmed
                .strip_suffix("°C")
                .or_else(|| trimmed.strip_suffix('C'))
                .unwrap_or(trimmed),
            row,
            "temperature_c",
        ),
    }
}

/// Reads samples from any reader holding the dataset CSV.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Sample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != CSV_HEADER {
        return Err(Error::Header {
            expected: CSV_HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            column: "*".to_string(),
            message: e.to_string(),
        })?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let sample = Sample {
            binder_content: parse_number(field(0), row, CSV_HEADER[0])?,
            air_voids: parse_number(field(1), row, CSV_HEADER[1])?,
            strain: parse_number(field(2), row, CSV_HEADER[2])?,
            temperature: parse_temperature(field(3), row)?,
            frequency: parse_number(field(4), row, CSV_HEADER[4])?,
            fatigue_life: parse_number(field(5), row, CSV_HEADER[5])?,
            source_id: field(6).to_string(),
        };
        sample.check(row)?;
        samples.push(sample);
    }
    Ok(samples)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

fn sample_record(s: &Sample) -> [String; 7] {
    [
        s.binder_content.to_string(),
        s.air_voids.to_string(),
        s.strain.to_string(),
        s.temperature.to_string(),
        s.frequency.to_string(),
        s.fatigue_life.to_string(),
        s.source_id.clone(),
    ]
}

/// Writes samples in the input schema; `read_csv` recovers them exactly.
pub fn write_csv<W: Write>(writer: W, samples: &[Sample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for s in samples {
        w.write_record(sample_record(s))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Writes rejected samples with an extra `reason` column.
pub fn write_rejections<W: Write>(writer: W, rejected: &[Rejection]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = CSV_HEADER.to_vec();
    header.push("reason");
    w.write_record(&header)?;
    for r in rejected {
        let mut record = sample_record(&r.sample).to_vec();
        record.push(r.reason.to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// SHA-256 over the canonical CSV serialization, hex encoded.
pub fn content_hash(samples: &[Sample]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, samples).expect("writing to a Vec cannot fail");
    hex::encode(Sha256::digest(&buf))
}

/// How the stage-one fatigue-life bounds are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BoundsMode {
    /// Use `nf_lower_bound` / `nf_upper_bound` as given.
    Fixed,
    /// Take the bounds from percentiles (0–100) of the fatigue-life column.
    Percentile { lower: f64, upper: f64 },
}

/// How often the z-score stage is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZScoreMode {
    /// Recompute statistics on the survivors until nothing more is removed.
    UntilStable,
    SinglePass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub nf_lower_bound: f64,
    pub nf_upper_bound: f64,
    pub z_threshold: f64,
    pub bounds_mode: BoundsMode,
    pub z_mode: ZScoreMode,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            nf_lower_bound: 2e3,
            nf_upper_bound: 2e6,
            z_threshold: 3.0,
            bounds_mode: BoundsMode::Fixed,
            z_mode: ZScoreMode::UntilStable,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nf_lower_bound >= 0.0 && self.nf_lower_bound < self.nf_upper_bound) {
            return Err(Error::invalid(format!(
                "fatigue-life bounds must satisfy 0 <= lower < upper, got [{}, {}]",
                self.nf_lower_bound, self.nf_upper_bound
            )));
        }
        if !(self.z_threshold > 0.0) {
            return Err(Error::invalid("z_threshold must be positive"));
        }
        if let BoundsMode::Percentile { lower, upper } = self.bounds_mode {
            if !(0.0..=100.0).contains(&lower) || !(0.0..=100.0).contains(&upper) || lower >= upper
            {
                return Err(Error::invalid(format!(
                    "percentiles must satisfy 0 <= lower < upper <= 100, got {lower}, {upper}"
                )));
            }
        }
        Ok(())
    }
}

/// Variables screened by the z-score stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    BinderContent,
    AirVoids,
    Strain,
    FatigueLife,
}

impl Variable {
    pub const ALL: [Variable; 4] = [
        Variable::BinderContent,
        Variable::AirVoids,
        Variable::Strain,
        Variable::FatigueLife,
    ];

    pub fn of(self, s: &Sample) -> f64 {
        match self {
            Variable::BinderContent => s.binder_content,
            Variable::AirVoids => s.air_voids,
            Variable::Strain => s.strain,
            Variable::FatigueLife => s.fatigue_life,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variable::BinderContent => "binder_content",
            Variable::AirVoids => "air_voids",
            Variable::Strain => "strain",
            Variable::FatigueLife => "fatigue_life",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RejectReason {
    /// Temperature or frequency differ from the modeling conditions.
    TestConditions,
    BelowLowerBound,
    AboveUpperBound,
    ZScore { variable: Variable, z: f64 },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::TestConditions => write!(f, "stage 0: non-modeling test conditions"),
            RejectReason::BelowLowerBound => {
                write!(f, "stage 1: fatigue_life below lower bound")
            }
            RejectReason::AboveUpperBound => {
                write!(f, "stage 1: fatigue_life above upper bound")
            }
            RejectReason::ZScore { variable, z } => {
                write!(f, "stage 2: {} |z| = {:.3} above threshold", variable.name(), z.abs())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub sample: Sample,
    pub reason: RejectReason,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub retained: Vec<Sample>,
    pub rejected: Vec<Rejection>,
    /// Stage-one bounds actually applied (resolved percentiles in percentile mode).
    pub bounds: (f64, f64),
}

/// Splits off samples whose temperature/frequency differ from the modeling
/// conditions.
pub fn split_modeling_conditions(samples: Vec<Sample>) -> (Vec<Sample>, Vec<Rejection>) {
    let mut kept = Vec::with_capacity(samples.len());
    let mut rejected = Vec::new();
    for s in samples {
        if s.has_modeling_conditions() {
            kept.push(s);
        } else {
            rejected.push(Rejection {
                sample: s,
                reason: RejectReason::TestConditions,
            });
        }
    }
    (kept, rejected)
}

/// Full preparation: drop samples outside the modeling test conditions, then
/// run [`filter_outliers`]. Rejections of both steps are reported together.
pub fn prepare(samples: Vec<Sample>, cfg: &FilterConfig) -> Result<FilterOutcome> {
    let (kept, mut rejected) = split_modeling_conditions(samples);
    if kept.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }
    let mut outcome = filter_outliers(&kept, cfg)?;
    rejected.append(&mut outcome.rejected);
    outcome.rejected = rejected;
    Ok(outcome)
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Two-stage outlier removal: inclusive fatigue-life bounds, then a z-score
/// screen over binder, voids, strain and fatigue life computed on the
/// stage-one survivors. Constant columns are skipped by the z-score stage.
pub fn filter_outliers(samples: &[Sample], cfg: &FilterConfig) -> Result<FilterOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("cannot filter an empty dataset"));
    }
    let (lower, upper) = match cfg.bounds_mode {
        BoundsMode::Fixed => (cfg.nf_lower_bound, cfg.nf_upper_bound),
        BoundsMode::Percentile { lower, upper } => {
            let nf: Vec<f64> = samples.iter().map(|s| s.fatigue_life).collect();
            (percentile(&nf, lower), percentile(&nf, upper))
        }
    };

    let mut retained = Vec::with_capacity(samples.len());
    let mut rejected = Vec::new();
    for s in samples {
        let reason = if s.fatigue_life < lower {
            Some(RejectReason::BelowLowerBound)
        } else if s.fatigue_life > upper {
            Some(RejectReason::AboveUpperBound)
        } else {
            None
        };
        match reason {
            Some(reason) => rejected.push(Rejection {
                sample: s.clone(),
                reason,
            }),
            None => retained.push(s.clone()),
        }
    }

    loop {
        if retained.is_empty() {
            break;
        }
        let stats: Vec<(Variable, f64, f64)> = Variable::ALL
            .iter()
            .map(|&v| {
                let (mean, std) = mean_std(retained.iter().map(move |s| v.of(s)));
                (v, mean, std)
            })
            .filter(|&(_, _, std)| std > 0.0)
            .collect();
        let mut survivors = Vec::with_capacity(retained.len());
        let before = retained.len();
        for s in retained {
            let outlier = stats.iter().find_map(|&(v, mean, std)| {
                let z = (v.of(&s) - mean) / std;
                (z.abs() > cfg.z_threshold).then_some(RejectReason::ZScore { variable: v, z })
            });
            match outlier {
                Some(reason) => rejected.push(Rejection { sample: s, reason }),
                None => survivors.push(s),
            }
        }
        retained = survivors;
        if cfg.z_mode == ZScoreMode::SinglePass || retained.len() == before {
            break;
        }
    }

    if retained.is_empty() {
        return Err(Error::EmptyAfterFiltering);
    }
    Ok(FilterOutcome {
        retained,
        rejected,
        bounds: (lower, upper),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        values.fold(
            FeatureRange {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            },
            |r, v| FeatureRange {
                min: r.min.min(v),
                max: r.max.max(v),
            },
        )
    }

    /// Maps `[min, max]` onto `[0, 1]`; a degenerate range maps everything to 0.
    pub fn scale(&self, x: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            (x - self.min) / span
        } else {
            0.0
        }
    }

    pub fn unscale(&self, x: f64) -> f64 {
        self.min + x * (self.max - self.min)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

/// Per-feature min/max for the three inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub binder: FeatureRange,
    pub voids: FeatureRange,
    pub strain: FeatureRange,
}

impl ScalerParams {
    pub fn ranges(&self) -> [FeatureRange; N_FEATURES] {
        [self.binder, self.voids, self.strain]
    }

    pub fn scale(&self, x: [f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let r = self.ranges();
        [r[0].scale(x[0]), r[1].scale(x[1]), r[2].scale(x[2])]
    }

    pub fn unscale(&self, x: [f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let r = self.ranges();
        [r[0].unscale(x[0]), r[1].unscale(x[1]), r[2].unscale(x[2])]
    }

    /// True when every input lies inside the fitted ranges.
    pub fn contains(&self, x: [f64; N_FEATURES]) -> bool {
        self.ranges().iter().zip(x).all(|(r, v)| r.contains(v))
    }
}

pub fn fit_scaler(train: &[Sample]) -> Result<ScalerParams> {
    if train.is_empty() {
        return Err(Error::invalid("cannot fit a scaler on an empty split"));
    }
    Ok(ScalerParams {
        binder: FeatureRange::fit(train.iter().map(|s| s.binder_content)),
        voids: FeatureRange::fit(train.iter().map(|s| s.air_voids)),
        strain: FeatureRange::fit(train.iter().map(|s| s.strain)),
    })
}

/// Scaled feature matrix, one row per sample. Values outside the fitted
/// ranges are passed through unclipped.
pub fn transform(samples: &[Sample], params: &ScalerParams) -> Array2<f64> {
    let mut out = Array2::zeros((samples.len(), N_FEATURES));
    for (mut row, s) in out.rows_mut().into_iter().zip(samples) {
        let x = params.scale(s.features());
        row.iter_mut().zip(x).for_each(|(dst, v)| *dst = v);
    }
    out
}

/// Fold index of every sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub n_folds: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Shuffles `0..n_samples` with a seeded generator and cuts the permutation
/// into `n_folds` contiguous blocks; the first `n_samples % n_folds` blocks
/// get one extra sample.
pub fn kfold_split(n_samples: usize, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if n_folds < 2 {
        return Err(Error::invalid("k-fold split needs at least 2 folds"));
    }
    if n_folds > n_samples {
        return Err(Error::invalid(format!(
            "cannot split {n_samples} samples into {n_folds} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut seed::rng(seed));
    let base = n_samples / n_folds;
    let extra = n_samples % n_folds;
    let mut assignment = vec![0; n_samples];
    let mut pos = 0;
    for fold in 0..n_folds {
        let size = base + usize::from(fold < extra);
        for &i in &order[pos..pos + size] {
            assignment[i] = fold;
        }
        pos += size;
    }
    Ok(FoldAssignment {
        n_folds,
        seed,
        assignment,
    })
}

pub fn select(samples: &[Sample], indices: &[usize]) -> Vec<Sample> {
    indices.iter().map(|&i| samples[i].clone()).collect()
}
