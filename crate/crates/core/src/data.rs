//! Synthetic long-tailed class-conditional point datasets with known modes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Rng};

/// Long-tailed class-size profile with exponential decay from head to tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LTProfile {
    pub num_classes: usize,
    pub n_max: u64,
    /// Ratio between the most and least frequent class.
    pub rho: f64,
}

impl LTProfile {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::param("num_classes", "must be >= 1"));
        }
        if self.n_max == 0 {
            return Err(Error::param("n_max", "must be >= 1"));
        }
        if !self.rho.is_finite() || self.rho < 1.0 {
            return Err(Error::param("rho", format!("must be finite and >= 1, got {}", self.rho)));
        }
        Ok(())
    }
}

/// `n_c = max(1, round(n_max · ρ^{-c/(C-1)}))`.
pub fn lt_class_counts(profile: &LTProfile) -> Result<Vec<u64>> {
    profile.validate()?;
    let c = profile.num_classes;
    if c == 1 {
        return Ok(vec![profile.n_max]);
    }
    let n_max = profile.n_max as f64;
    Ok((0..c)
        .map(|i| {
            let exponent = -(i as f64) / (c - 1) as f64;
            (n_max * libm::pow(profile.rho, exponent)).round().max(1.0) as u64
        })
        .collect())
}

/// Per-class Gaussian mode centers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeGridSpec {
    pub modes_per_class: usize,
    /// `centers[c][m]` is mode `m` of class `c`.
    pub centers: Vec<Vec<[f64; 2]>>,
    pub mode_std: f64,
}

impl ModeGridSpec {
    /// Modes evenly spaced on a ring around each class's slot of a
    /// `grid_cols`-wide grid with the given spacing, centered on the origin.
    pub fn ring_grid(
        num_classes: usize,
        modes_per_class: usize,
        ring_radius: f64,
        grid_cols: usize,
        grid_spacing: f64,
        mode_std: f64,
    ) -> Result<Self> {
        if grid_cols == 0 || modes_per_class == 0 {
            return Err(Error::param("grid", "grid_cols and modes_per_class must be >= 1"));
        }
        let grid_rows = num_classes.div_ceil(grid_cols);
        let x0 = -(grid_cols as f64 - 1.0) * grid_spacing / 2.0;
        let y0 = -(grid_rows as f64 - 1.0) * grid_spacing / 2.0;
        let centers = (0..num_classes)
            .map(|c| {
                let cx = x0 + (c % grid_cols) as f64 * grid_spacing;
                let cy = y0 + (c / grid_cols) as f64 * grid_spacing;
                (0..modes_per_class)
                    .map(|m| {
                        let theta = 2.0 * std::f64::consts::PI * m as f64 / modes_per_class as f64;
                        [cx + ring_radius * libm::cos(theta), cy + ring_radius * libm::sin(theta)]
                    })
                    .collect()
            })
            .collect();
        let spec = ModeGridSpec { modes_per_class, centers, mode_std };
        spec.validate()?;
        Ok(spec)
    }

    /// 8 modes on a radius-2 ring per class, 4-wide grid with spacing 6, mode std 0.05.
    pub fn desk_default(num_classes: usize) -> Result<Self> {
        Self::ring_grid(num_classes, 8, 2.0, 4, 6.0, 0.05)
    }

    pub fn num_classes(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mode_std.is_finite() || self.mode_std < 0.0 {
            return Err(Error::param("mode_std", format!("must be finite and >= 0, got {}", self.mode_std)));
        }
        if self.centers.iter().any(|c| c.len() != self.modes_per_class) {
            return Err(Error::param("centers", format!("every class needs {} centers", self.modes_per_class)));
        }
        let all: Vec<[f64; 2]> = self.centers.iter().flatten().copied().collect();
        if all.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::param("centers", "must be finite"));
        }
        let min_sep = 6.0 * self.mode_std;
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                if ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() <= min_sep {
                    return Err(Error::param(
                        "centers",
                        format!("centers {a:?} and {b:?} closer than 6 mode std ({min_sep})"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Labeled 2-D samples whose per-class counts follow an [`LTProfile`].
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Matrix,
    labels: Vec<usize>,
    profile: LTProfile,
    spec: ModeGridSpec,
    by_class: Vec<Vec<usize>>,
}

impl Dataset {
    /// Validates that labels are in range and per-class counts match the profile.
    pub fn new(samples: Matrix, labels: Vec<usize>, profile: LTProfile, spec: ModeGridSpec) -> Result<Self> {
        if samples.cols() != 2 || samples.rows() != labels.len() {
            return Err(Error::shape("Dataset", format!("samples {:?} with {} labels", samples.shape(), labels.len())));
        }
        if !samples.is_finite() {
            return Err(Error::Numeric { term: "dataset samples".into() });
        }
        if spec.num_classes() != profile.num_classes {
            return Err(Error::param(
                "spec",
                format!("{} classes of centers for {} profile classes", spec.num_classes(), profile.num_classes),
            ));
        }
        let counts = lt_class_counts(&profile)?;
        let mut by_class = vec![Vec::new(); profile.num_classes];
        for (i, &l) in labels.iter().enumerate() {
            by_class.get_mut(l).ok_or(Error::Index { what: "class", index: l, len: profile.num_classes })?.push(i);
        }
        for (c, (rows, &n)) in by_class.iter().zip(&counts).enumerate() {
            if rows.len() as u64 != n {
                return Err(Error::contract(
                    "Dataset",
                    format!("class {c} has {} samples, profile expects {n}", rows.len()),
                ));
            }
        }
        Ok(Dataset { samples, labels, profile, spec, by_class })
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn profile(&self) -> &LTProfile {
        &self.profile
    }

    pub fn spec(&self) -> &ModeGridSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.profile.num_classes
    }

    pub fn class_counts(&self) -> Vec<u64> {
        self.by_class.iter().map(|r| r.len() as u64).collect()
    }

    /// Row indices belonging to class `c`.
    pub fn class_rows(&self, c: usize) -> &[usize] {
        &self.by_class[c]
    }

    /// Samples of class `c` as a matrix.
    pub fn class_samples(&self, c: usize) -> Matrix {
        self.samples.select_rows(&self.by_class[c])
    }
}

/// Draws every class's `n_c` points from a uniform mixture over its modes.
pub fn synth_dataset(profile: &LTProfile, spec: &ModeGridSpec, rng: &mut Rng) -> Result<Dataset> {
    spec.validate()?;
    let counts = lt_class_counts(profile)?;
    if spec.num_classes() != counts.len() {
        return Err(Error::param(
            "spec",
            format!("{} classes of centers for {} profile classes", spec.num_classes(), counts.len()),
        ));
    }
    let total: u64 = counts.iter().sum();
    let mut data = Vec::with_capacity(2 * total as usize);
    let mut labels = Vec::with_capacity(total as usize);
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let center = spec.centers[c][rng.below(spec.modes_per_class)];
            data.push(center[0] + spec.mode_std * rng.normal());
            data.push(center[1] + spec.mode_std * rng.normal());
            labels.push(c);
        }
    }
    Dataset::new(Matrix::new(total as usize, 2, data)?, labels, *profile, spec.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingStrategy {
    /// Uniform over rows, preserving the class imbalance.
    #[default]
    Instance,
    /// Uniform over classes, then uniform within the class.
    ClassBalanced,
}

/// Draws a batch of `bs` rows. Instance sampling is without replacement when
/// `bs <= N`; class-balanced sampling is with replacement.
pub fn sample_batch(
    ds: &Dataset,
    rng: &mut Rng,
    bs: usize,
    strategy: SamplingStrategy,
) -> Result<(Matrix, Vec<usize>)> {
    if ds.is_empty() {
        return Err(Error::contract("sample_batch", "empty dataset"));
    }
    if bs == 0 {
        return Err(Error::param("batch_size", "must be >= 1"));
    }
    let rows: Vec<usize> = match strategy {
        SamplingStrategy::Instance if bs <= ds.len() => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            for i in 0..bs {
                let j = i + rng.below(ds.len() - i);
                idx.swap(i, j);
            }
            idx.truncate(bs);
            idx
        }
        SamplingStrategy::Instance => (0..bs).map(|_| rng.below(ds.len())).collect(),
        SamplingStrategy::ClassBalanced => {
            let nonempty: Vec<usize> = (0..ds.num_classes()).filter(|&c| !ds.by_class[c].is_empty()).collect();
            (0..bs)
                .map(|_| {
                    let class = &ds.by_class[nonempty[rng.below(nonempty.len())]];
                    class[rng.below(class.len())]
                })
                .collect()
        }
    };
    let labels = rows.iter().map(|&r| ds.labels[r]).collect();
    Ok((ds.samples.select_rows(&rows), labels))
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    x0: f64,
    x1: f64,
    label: usize,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Csv { path: path.to_path_buf(), detail: format!("{kind:?}") },
    }
}

/// Writes `x0,x1,label` rows with a header.
pub fn write_points_csv(path: &Path, samples: &Matrix, labels: &[usize]) -> Result<()> {
    if samples.cols() != 2 || samples.rows() != labels.len() {
        return Err(Error::shape("write_points_csv", format!("samples {:?}", samples.shape())));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (r, &label) in labels.iter().enumerate() {
        let row = samples.row(r);
        w.serialize(CsvRow { x0: row[0], x1: row[1], label }).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `x0,x1,label` rows.
pub fn read_points_csv(path: &Path) -> Result<(Matrix, Vec<usize>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for row in r.deserialize::<CsvRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        data.extend([row.x0, row.x1]);
        labels.push(row.label);
    }
    Ok((Matrix::new(labels.len(), 2, data)?, labels))
}

pub fn write_dataset_csv(path: &Path, ds: &Dataset) -> Result<()> {
    write_points_csv(path, &ds.samples, &ds.labels)
}

/// Reads a dataset CSV and validates it against the profile and spec it was built from.
pub fn read_dataset_csv(path: &Path, profile: LTProfile, spec: ModeGridSpec) -> Result<Dataset> {
    let (samples, labels) = read_points_csv(path)?;
    Dataset::new(samples, labels, profile, spec)
}
