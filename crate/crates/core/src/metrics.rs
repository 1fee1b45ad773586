//! Sample-quality metrics: Fréchet distance, intra-class FID, k-NN precision
//! and recall, latent dispersion, and mode coverage. Also the binary feature
//! file format used to ingest externally computed embeddings.

use std::path::Path;

use crate::binio::{read_file, write_file, Reader, Writer};
use crate::data::ModeGridSpec;
use crate::error::{Error, Result};
use crate::numcore::{matrix_sqrt_psd, trace_sqrt_psd, Matrix};

/// Ridge added to both covariances before the matrix square root.
pub const COVARIANCE_RIDGE: f64 = 1e-10;
/// Negative Fréchet values down to this are treated as roundoff and clipped to 0.
pub const FRECHET_NEGATIVE_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_PR_K: usize = 3;
pub const DEFAULT_MIN_PER_CLASS: usize = 50;

pub const FEATURE_MAGIC: &[u8; 6] = b"FEATv1";

/// Feature vectors with optional class labels and a tag naming their origin.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    features: Matrix,
    labels: Option<Vec<usize>>,
    source: String,
}

impl FeatureSet {
    pub fn new(features: Matrix, labels: Option<Vec<usize>>, source: impl Into<String>) -> Result<Self> {
        if !features.is_finite() {
            return Err(Error::Numeric { term: "feature set".into() });
        }
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::shape("FeatureSet", format!("{} labels for {} rows", l.len(), features.rows())));
            }
        }
        Ok(FeatureSet { features, labels, source: source.into() })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows labeled `class`; empty if the set is unlabeled.
    pub fn class_features(&self, class: usize) -> Matrix {
        let rows: Vec<usize> = match &self.labels {
            Some(l) => (0..l.len()).filter(|&i| l[i] == class).collect(),
            None => Vec::new(),
        };
        self.features.select_rows(&rows)
    }
}

/// Mean, unbiased covariance, and sample count.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
    pub count: usize,
}

impl FeatureStats {
    pub fn from_matrix(x: &Matrix) -> Result<Self> {
        let n = x.rows();
        if n < 2 {
            return Err(Error::contract("gaussian_stats", format!("need at least 2 samples, got {n}")));
        }
        let mean: Vec<f64> = x.column_sums().data().iter().map(|s| s / n as f64).collect();
        let mut centered = x.clone();
        for r in 0..n {
            for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        let covariance = centered.matmul_tn(&centered)?.scale(1.0 / (n - 1) as f64);
        // Exact symmetry, independent of the product's summation order.
        let covariance =
            Matrix::from_fn(
                x.cols(),
                x.cols(),
                |i, j| {
                    if i <= j {
                        covariance.get(i, j)
                    } else {
                        covariance.get(j, i)
                    }
                },
            );
        Ok(FeatureStats { mean, covariance, count: n })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

pub fn gaussian_stats(fs: &FeatureSet) -> Result<FeatureStats> {
    FeatureStats::from_matrix(&fs.features)
}

/// `‖μ_a − μ_b‖² + Tr(Σ_a + Σ_b − 2(Σ_a Σ_b)^{1/2})`, with both covariances
/// ridged by [`COVARIANCE_RIDGE`].
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.dim() != b.dim() || a.covariance.shape() != (a.dim(), a.dim()) || b.covariance.shape() != (b.dim(), b.dim()) {
        return Err(Error::shape("frechet_distance", format!("feature dims {} and {}", a.dim(), b.dim())));
    }
    let d = a.dim();
    let ridge = Matrix::identity(d).scale(COVARIANCE_RIDGE);
    let sa = a.covariance.add(&ridge)?;
    let sb = b.covariance.add(&ridge)?;
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    // Tr (Σ_a Σ_b)^{1/2} = Tr (Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2}, the latter symmetric PSD.
    let root_a = matrix_sqrt_psd(&sa)?;
    let inner = root_a.matmul(&sb)?.matmul(&root_a)?;
    let inner = Matrix::from_fn(d, d, |i, j| 0.5 * (inner.get(i, j) + inner.get(j, i)));
    let cross = trace_sqrt_psd(&inner)?;
    let value = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
    if !value.is_finite() {
        return Err(Error::Numeric { term: "frechet_distance".into() });
    }
    if value < -FRECHET_NEGATIVE_TOLERANCE {
        return Err(Error::Numeric { term: format!("frechet_distance (negative value {value:e})") });
    }
    Ok(value.max(0.0))
}

/// Per-class Fréchet distances and their unweighted mean.
#[derive(Clone, Debug, PartialEq)]
pub struct IntraClassFid {
    pub per_class: Vec<(usize, f64)>,
    /// Classes with fewer than the minimum sample count on either side.
    pub skipped: Vec<usize>,
    pub mean: f64,
}

impl IntraClassFid {
    pub fn value(&self, class: usize) -> Option<f64> {
        self.per_class.iter().find(|(c, _)| *c == class).map(|&(_, v)| v)
    }
}

pub fn intra_class_fid(real: &FeatureSet, gen: &FeatureSet, min_per_class: usize) -> Result<IntraClassFid> {
    let (Some(rl), Some(gl)) = (real.labels(), gen.labels()) else {
        return Err(Error::contract("intra_class_fid", "both feature sets must be labeled"));
    };
    if real.dim() != gen.dim() {
        return Err(Error::shape("intra_class_fid", format!("feature dims {} and {}", real.dim(), gen.dim())));
    }
    let num_classes = rl.iter().chain(gl).max().map_or(0, |m| m + 1);
    let min_per_class = min_per_class.max(2);
    let mut per_class = Vec::new();
    let mut skipped = Vec::new();
    for c in 0..num_classes {
        let r = real.class_features(c);
        let g = gen.class_features(c);
        if r.rows() < min_per_class || g.rows() < min_per_class {
            skipped.push(c);
            continue;
        }
        let fid = frechet_distance(&FeatureStats::from_matrix(&r)?, &FeatureStats::from_matrix(&g)?)?;
        per_class.push((c, fid));
    }
    if per_class.is_empty() {
        return Err(Error::contract("intra_class_fid", format!("no class has {min_per_class} samples in both sets")));
    }
    let mean = per_class.iter().map(|(_, v)| v).sum::<f64>() / per_class.len() as f64;
    Ok(IntraClassFid { per_class, skipped, mean })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PRResult {
    pub precision: f64,
    pub recall: f64,
    pub k: usize,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Squared distance from every row to its `k`-th nearest other row.
fn knn_radii(x: &Matrix, k: usize) -> Vec<f64> {
    let n = x.rows();
    let mut dist = Vec::with_capacity(n - 1);
    (0..n)
        .map(|i| {
            dist.clear();
            dist.extend((0..n).filter(|&j| j != i).map(|j| squared_distance(x.row(i), x.row(j))));
            *dist.select_nth_unstable_by(k - 1, f64::total_cmp).1
        })
        .collect()
}

/// Fraction of `probe` rows inside at least one `k`-NN ball of `manifold`.
fn manifold_fraction(manifold: &Matrix, radii: &[f64], probe: &Matrix) -> f64 {
    let inside = (0..probe.rows())
        .filter(|&i| (0..manifold.rows()).any(|j| squared_distance(probe.row(i), manifold.row(j)) <= radii[j]))
        .count();
    inside as f64 / probe.rows() as f64
}

/// Improved precision and recall with `k`-NN radius manifolds.
pub fn precision_recall(real: &FeatureSet, gen: &FeatureSet, k: usize) -> Result<PRResult> {
    precision_recall_matrices(real.features(), gen.features(), k)
}

pub fn precision_recall_matrices(real: &Matrix, gen: &Matrix, k: usize) -> Result<PRResult> {
    if real.cols() != gen.cols() {
        return Err(Error::shape("precision_recall", format!("feature dims {} and {}", real.cols(), gen.cols())));
    }
    if real.rows() == 0 || gen.rows() == 0 {
        return Err(Error::contract("precision_recall", "both sets must be nonempty"));
    }
    let limit = real.rows().min(gen.rows());
    if k == 0 || k >= limit {
        return Err(Error::param("k", format!("must satisfy 1 <= k < {limit}, got {k}")));
    }
    let real_radii = knn_radii(real, k);
    let gen_radii = knn_radii(gen, k);
    Ok(PRResult {
        precision: manifold_fraction(real, &real_radii, gen),
        recall: manifold_fraction(gen, &gen_radii, real),
        k,
    })
}

/// Trace of the unbiased covariance of each class's rows; `None` for classes
/// with fewer than two rows.
pub fn latent_dispersion(w: &Matrix, labels: &[usize], num_classes: usize) -> Result<Vec<Option<f64>>> {
    if labels.len() != w.rows() {
        return Err(Error::shape("latent_dispersion", format!("{} labels for {} rows", labels.len(), w.rows())));
    }
    let mut rows = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        rows.get_mut(l).ok_or(Error::Index { what: "class", index: l, len: num_classes })?.push(i);
    }
    rows.iter()
        .map(|r| {
            if r.len() < 2 {
                return Ok(None);
            }
            Ok(Some(FeatureStats::from_matrix(&w.select_rows(r))?.covariance.trace()))
        })
        .collect()
}

/// Minimum and mean over the defined entries, if any.
pub fn dispersion_summary(values: &[Option<f64>]) -> Option<(f64, f64)> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return None;
    }
    let min = defined.iter().copied().fold(f64::INFINITY, f64::min);
    Some((min, defined.iter().sum::<f64>() / defined.len() as f64))
}

/// Per class, the fraction of its mode centers with at least one sample of
/// that class within `radius`.
pub fn mode_coverage(samples: &Matrix, labels: &[usize], spec: &ModeGridSpec, radius: f64) -> Result<Vec<f64>> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::param("radius", format!("must be finite and > 0, got {radius}")));
    }
    if samples.cols() != 2 || samples.rows() != labels.len() {
        return Err(Error::shape(
            "mode_coverage",
            format!("samples {:?} with {} labels", samples.shape(), labels.len()),
        ));
    }
    let r2 = radius * radius;
    let mut covered: Vec<Vec<bool>> = spec.centers.iter().map(|c| vec![false; c.len()]).collect();
    for (i, &l) in labels.iter().enumerate() {
        let Some(class) = spec.centers.get(l) else {
            return Err(Error::Index { what: "class", index: l, len: spec.centers.len() });
        };
        let x = samples.row(i);
        for (m, center) in class.iter().enumerate() {
            if squared_distance(x, center) <= r2 {
                covered[l][m] = true;
            }
        }
    }
    Ok(covered
        .iter()
        .map(|c| if c.is_empty() { 0.0 } else { c.iter().filter(|&&b| b).count() as f64 / c.len() as f64 })
        .collect())
}

pub fn write_features(path: &Path, fs: &FeatureSet) -> Result<()> {
    let mut w = Writer::default();
    w.bytes(FEATURE_MAGIC);
    w.len_u32(fs.len());
    w.len_u32(fs.dim());
    w.u8(u8::from(fs.labels.is_some()));
    w.f64s(fs.features.data());
    if let Some(labels) = &fs.labels {
        for &l in labels {
            w.len_u32(l);
        }
    }
    write_file(path, &w.buf)
}

/// Parses a feature file, checking its dimension when `expected_dim` is given.
pub fn read_features(path: &Path, expected_dim: Option<usize>) -> Result<FeatureSet> {
    let buf = read_file(path)?;
    let mut r = Reader::new(&buf, path);
    r.expect(FEATURE_MAGIC, "feature-file magic")?;
    let n = r.len()?;
    let dim_at = r.offset();
    let dim = r.len()?;
    if let Some(expected) = expected_dim {
        if dim != expected {
            return Err(r.error_at(dim_at, format!("feature dim {dim} does not match expected {expected}")));
        }
    }
    let flag_at = r.offset();
    let has_labels = match r.u8()? {
        0 => false,
        1 => true,
        f => return Err(r.error_at(flag_at, format!("label flag must be 0 or 1, got {f}"))),
    };
    let data_at = r.offset();
    let data = r.f64s(n.checked_mul(dim).ok_or_else(|| r.error("size overflow"))?)?;
    let features = Matrix::new(n, dim, data)?;
    let labels = if has_labels { Some((0..n).map(|_| r.len()).collect::<Result<Vec<_>>>()?) } else { None };
    if r.remaining() != 0 {
        return Err(r.error(format!("{} trailing bytes", r.remaining())));
    }
    let source = path.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    FeatureSet::new(features, labels, source).map_err(|e| r.error_at(data_at, e.to_string()))
}

/// Per-class metric table written as CSV with a trailing `__mean__` row.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassReport {
    pub metrics: Vec<String>,
    /// `(class, value per metric)`; `None` where a metric is undefined for the class.
    pub rows: Vec<(usize, Vec<Option<f64>>)>,
}

impl ClassReport {
    /// Mean of each metric over the classes where it is defined.
    pub fn means(&self) -> Vec<Option<f64>> {
        (0..self.metrics.len())
            .map(|m| {
                let vals: Vec<f64> = self.rows.iter().filter_map(|(_, v)| v[m]).collect();
                (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let fmt = |v: &Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        let mut w =
            csv::Writer::from_path(path).map_err(|e| Error::Csv { path: path.into(), detail: e.to_string() })?;
        let mut write = |rec: Vec<String>| {
            w.write_record(&rec).map_err(|e| Error::Csv { path: path.into(), detail: e.to_string() })
        };
        write(std::iter::once("class".to_string()).chain(self.metrics.iter().cloned()).collect())?;
        for (c, vals) in &self.rows {
            write(std::iter::once(c.to_string()).chain(vals.iter().map(fmt)).collect())?;
        }
        write(std::iter::once("__mean__".to_string()).chain(self.means().iter().map(fmt)).collect())?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{gaussian_sample, Rng};
    use proptest::prelude::*;

    fn stats(mean: &[f64], cov: Matrix) -> FeatureStats {
        FeatureStats { mean: mean.to_vec(), covariance: cov, count: 100 }
    }

    fn random_psd(rng: &mut Rng, d: usize) -> Matrix {
        let a = gaussian_sample(rng, d + 3, d, 0.0, 1.0).unwrap();
        let m = a.matmul_tn(&a).unwrap();
        Matrix::from_fn(d, d, |i, j| if i <= j { m.get(i, j) } else { m.get(j, i) })
    }

    #[test]
    fn stats_examples() {
        let fs = FeatureSet::new(Matrix::new(2, 2, vec![0.0, 0.0, 2.0, 0.0]).unwrap(), None, "t").unwrap();
        let s = gaussian_stats(&fs).unwrap();
        assert_eq!(s.mean, vec![1.0, 0.0]);
        assert_eq!(s.covariance, Matrix::new(2, 2, vec![2.0, 0.0, 0.0, 0.0]).unwrap());

        let same = FeatureStats::from_matrix(&Matrix::filled(5, 3, 1.5)).unwrap();
        assert!(same.covariance.data().iter().all(|&v| v == 0.0));

        let one = FeatureSet::new(Matrix::zeros(1, 2), None, "t").unwrap();
        assert!(matches!(gaussian_stats(&one), Err(Error::Contract { .. })));
    }

    #[test]
    fn stats_match_two_pass_oracle() {
        let x = gaussian_sample(&mut Rng::new(1), 100, 3, 2.0, 1.5).unwrap();
        let s = FeatureStats::from_matrix(&x).unwrap();
        for j in 0..3 {
            let mean = (0..100).map(|i| x.get(i, j)).sum::<f64>() / 100.0;
            assert!((s.mean[j] - mean).abs() < 1e-12);
        }
        for j in 0..3 {
            for k in 0..3 {
                let mut acc = 0.0;
                for i in 0..100 {
                    acc += (x.get(i, j) - s.mean[j]) * (x.get(i, k) - s.mean[k]);
                }
                assert!((s.covariance.get(j, k) - acc / 99.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frechet_analytic_cases() {
        let mut rng = Rng::new(2);
        let cov = random_psd(&mut rng, 4);
        let a = stats(&[1.0, 2.0, 3.0, 4.0], cov);
        assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-12);

        let i2 = Matrix::identity(2);
        let shifted = frechet_distance(&stats(&[0.0, 0.0], i2.clone()), &stats(&[3.0, 4.0], i2)).unwrap();
        assert!((shifted - 25.0).abs() < 1e-8);

        let one = frechet_distance(&stats(&[0.0], Matrix::scalar(1.0)), &stats(&[0.0], Matrix::scalar(4.0))).unwrap();
        assert!((one - 1.0).abs() < 1e-10);

        let bad = frechet_distance(&stats(&[0.0], Matrix::scalar(1.0)), &stats(&[0.0, 0.0], Matrix::identity(2)));
        assert!(matches!(bad, Err(Error::Shape { .. })));
    }

    #[test]
    fn frechet_is_symmetric_and_bounded_by_mean_term() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let a = stats(&gaussian_sample(&mut rng, 1, 5, 0.0, 1.0).unwrap().into_data(), random_psd(&mut rng, 5));
            let b = stats(&gaussian_sample(&mut rng, 1, 5, 0.0, 1.0).unwrap().into_data(), random_psd(&mut rng, 5));
            let ab = frechet_distance(&a, &b).unwrap();
            let ba = frechet_distance(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-10, "{ab} vs {ba}");
            let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).powi(2)).sum();
            assert!(ab >= mean_term - 1e-8);
        }
    }

    fn labeled(x: Matrix, labels: Vec<usize>) -> FeatureSet {
        FeatureSet::new(x, Some(labels), "t").unwrap()
    }

    #[test]
    fn intra_class_fid_examples() {
        let mut rng = Rng::new(4);
        let x = gaussian_sample(&mut rng, 300, 2, 0.0, 1.0).unwrap();
        let labels: Vec<usize> = (0..300).map(|i| if i < 280 { i % 2 } else { 2 }).collect();
        let real = labeled(x.clone(), labels.clone());
        let fid = intra_class_fid(&real, &real, 50).unwrap();
        assert_eq!(fid.skipped, vec![2]);
        assert!(fid.per_class.iter().all(|&(_, v)| v.abs() < 1e-12));
        let mean = fid.per_class.iter().map(|(_, v)| v).sum::<f64>() / fid.per_class.len() as f64;
        assert_eq!(fid.mean, mean);

        // Shift class 1 by v; its value becomes ‖v‖² exactly since covariances match.
        let shifted = Matrix::from_fn(300, 2, |i, j| x.get(i, j) + if labels[i] == 1 { [0.6, -0.8][j] } else { 0.0 });
        let fid = intra_class_fid(&real, &labeled(shifted, labels.clone()), 50).unwrap();
        assert!(fid.value(0).unwrap().abs() < 1e-12);
        assert!((fid.value(1).unwrap() - 1.0).abs() < 1e-8);

        assert!(intra_class_fid(&real, &real, 1000).is_err());
        let unlabeled = FeatureSet::new(x, None, "t").unwrap();
        assert!(intra_class_fid(&real, &unlabeled, 50).is_err());
    }

    #[test]
    fn intra_class_fid_prefers_matching_diversity_over_collapse() {
        let mut rng = Rng::new(5);
        let d = 8;
        let real = labeled(gaussian_sample(&mut rng, 2000, d, 0.0, 1.0).unwrap(), vec![0; 2000]);
        // Collapsed: tight cluster at the real mean.
        let collapsed = labeled(gaussian_sample(&mut rng, 2000, d, 0.0, 0.01).unwrap(), vec![0; 2000]);
        // Diverse: real spread, slightly off-center.
        let diverse = labeled(gaussian_sample(&mut rng, 2000, d, 0.2, 1.0).unwrap(), vec![0; 2000]);
        let fc = intra_class_fid(&real, &collapsed, 50).unwrap().mean;
        let fd = intra_class_fid(&real, &diverse, 50).unwrap().mean;
        assert!(fd < fc, "diverse {fd} collapsed {fc}");
    }

    /// Full-sort brute force used as the reference.
    fn brute_force_pr(real: &Matrix, gen: &Matrix, k: usize) -> (f64, f64) {
        fn radii(x: &Matrix, k: usize) -> Vec<f64> {
            (0..x.rows())
                .map(|i| {
                    let mut d: Vec<f64> = (0..x.rows())
                        .filter(|&j| j != i)
                        .map(|j| (0..x.cols()).map(|c| (x.get(i, c) - x.get(j, c)).powi(2)).sum())
                        .collect();
                    d.sort_by(f64::total_cmp);
                    d[k - 1]
                })
                .collect()
        }
        fn frac(m: &Matrix, r: &[f64], p: &Matrix) -> f64 {
            let mut hits = 0;
            for i in 0..p.rows() {
                let mut inside = false;
                for j in 0..m.rows() {
                    let d: f64 = (0..m.cols()).map(|c| (p.get(i, c) - m.get(j, c)).powi(2)).sum();
                    inside |= d <= r[j];
                }
                hits += usize::from(inside);
            }
            hits as f64 / p.rows() as f64
        }
        (frac(real, &radii(real, k), gen), frac(gen, &radii(gen, k), real))
    }

    #[test]
    fn precision_recall_matches_brute_force() {
        let mut rng = Rng::new(6);
        for k in [1, 3, 5] {
            let real = gaussian_sample(&mut rng, 50, 2, 0.0, 1.0).unwrap();
            let gen = gaussian_sample(&mut rng, 50, 2, 0.5, 0.7).unwrap();
            let pr = precision_recall_matrices(&real, &gen, k).unwrap();
            assert_eq!((pr.precision, pr.recall), brute_force_pr(&real, &gen, k));
        }
    }

    #[test]
    fn precision_recall_extremes() {
        let mut rng = Rng::new(7);
        let x = gaussian_sample(&mut rng, 40, 2, 0.0, 1.0).unwrap();
        let pr = precision_recall_matrices(&x, &x, 3).unwrap();
        assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
        let far = x.map(|v| v + 1e3);
        let pr = precision_recall_matrices(&x, &far, 3).unwrap();
        assert_eq!((pr.precision, pr.recall), (0.0, 0.0));
        assert!(matches!(precision_recall_matrices(&x, &far, 40), Err(Error::Parameter { .. })));
        assert!(matches!(precision_recall_matrices(&x, &far, 0), Err(Error::Parameter { .. })));
    }

    #[test]
    fn dispersion_examples() {
        let w = Matrix::filled(4, 3, 2.0);
        assert_eq!(latent_dispersion(&w, &[0, 0, 1, 1], 3).unwrap(), vec![Some(0.0), Some(0.0), None]);

        let d = 6;
        let w = gaussian_sample(&mut Rng::new(8), 10_000, d, 0.0, 1.0).unwrap();
        let labels = vec![0; 10_000];
        let disp = latent_dispersion(&w, &labels, 1).unwrap()[0].unwrap();
        assert!((disp - d as f64).abs() < 0.05 * d as f64);
        let doubled = latent_dispersion(&w.scale(2.0), &labels, 1).unwrap()[0].unwrap();
        assert!((doubled - 4.0 * disp).abs() < 1e-9 * disp);

        assert_eq!(dispersion_summary(&[None, Some(2.0), Some(4.0)]), Some((2.0, 3.0)));
        assert_eq!(dispersion_summary(&[None]), None);
    }

    #[test]
    fn mode_coverage_examples() {
        let spec = ModeGridSpec::desk_default(2).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, centers) in spec.centers.iter().enumerate() {
            for p in centers {
                rows.push(p.to_vec());
                labels.push(c);
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        assert_eq!(mode_coverage(&x, &labels, &spec, 0.15).unwrap(), vec![1.0, 1.0]);

        let one = Matrix::from_rows(&vec![spec.centers[0][3].to_vec(); 5]).unwrap();
        assert_eq!(mode_coverage(&one, &[0; 5], &spec, 0.15).unwrap(), vec![1.0 / 8.0, 0.0]);
        assert!(mode_coverage(&one, &[0; 5], &spec, 0.0).is_err());

        // 20 samples per mode at 3 std radius.
        let mut rng = Rng::new(9);
        let mut rows = Vec::new();
        for p in &spec.centers[1] {
            for _ in 0..20 {
                rows.push(vec![p[0] + 0.05 * rng.normal(), p[1] + 0.05 * rng.normal()]);
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        assert_eq!(mode_coverage(&x, &vec![1; 160], &spec, 0.15).unwrap()[1], 1.0);
    }

    #[test]
    fn feature_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.feat");
        let x = gaussian_sample(&mut Rng::new(10), 7, 3, 0.0, 1.0).unwrap();
        let fs = FeatureSet::new(x.clone(), Some(vec![0, 1, 2, 0, 1, 2, 9]), "f.feat").unwrap();
        write_features(&path, &fs).unwrap();
        assert_eq!(read_features(&path, Some(3)).unwrap(), fs);
        let unlabeled = FeatureSet::new(x, None, "f.feat").unwrap();
        write_features(&path, &unlabeled).unwrap();
        assert_eq!(read_features(&path, None).unwrap(), unlabeled);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_features(&path, None), Err(Error::Format { .. })));

        std::fs::write(&path, &bytes).unwrap();
        match read_features(&path, Some(4)) {
            Err(Error::Format { offset, detail, .. }) => {
                assert_eq!(offset, 10);
                assert!(detail.contains("dim"));
            }
            other => panic!("{other:?}"),
        }

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_features(&path.with_extension("x"), None), Err(Error::Io { .. })));
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_features(&path, None), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn class_report_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let report = ClassReport {
            metrics: vec!["ifid".into(), "coverage".into()],
            rows: vec![(0, vec![Some(1.0), Some(0.5)]), (1, vec![None, Some(1.0)])],
        };
        report.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "class,ifid,coverage\n0,1,0.5\n1,,1\n__mean__,1,0.75\n");
    }

    proptest! {
        #[test]
        fn swapping_sets_swaps_precision_and_recall(seed in 0u64..500, k in 1usize..5) {
            let mut rng = Rng::new(seed);
            let a = gaussian_sample(&mut rng, 20, 2, 0.0, 1.0).unwrap();
            let b = gaussian_sample(&mut rng, 25, 2, 0.3, 1.2).unwrap();
            let ab = precision_recall_matrices(&a, &b, k).unwrap();
            let ba = precision_recall_matrices(&b, &a, k).unwrap();
            prop_assert_eq!(ab.precision, ba.recall);
            prop_assert_eq!(ab.recall, ba.precision);
        }
    }
}
