//! Dataset construction: toy generator, CSV ingestion, normalization, splits.
//!
//! Datasets are immutable matrices of f64 features with optional integer
//! labels, per-column metadata, train-only normalization statistics and an
//! optional train/test split. Normalization statistics are always a pure
//! function of the train rows.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Continuous,
    /// Categorical value stored as a raw integer (no one-hot expansion).
    CategoricalInteger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitSide {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct TabularDataset {
    x: Tensor, // [n, d]
    labels: Option<Vec<usize>>,
    n_classes: usize,
    column_names: Vec<String>,
    column_meta: Vec<ColumnKind>,
    norm_stats: Option<Vec<ColumnStats>>,
    split: Option<Vec<SplitSide>>,
}

impl TabularDataset {
    pub fn from_parts(
        x: Tensor,
        labels: Option<Vec<usize>>,
        column_names: Vec<String>,
        column_meta: Vec<ColumnKind>,
    ) -> Result<Self> {
        if x.rank() != 2 {
            return Err(Error::Data("feature matrix must be 2-D".into()));
        }
        let (n, d) = (x.shape()[0], x.shape()[1]);
        if column_names.len() != d || column_meta.len() != d {
            return Err(Error::Data("column metadata length mismatch".into()));
        }
        if !x.is_finite() {
            return Err(Error::Data("features contain NaN/Inf".into()));
        }
        let n_classes = match &labels {
            Some(ys) => {
                if ys.len() != n {
                    return Err(Error::Data("label count mismatch".into()));
                }
                ys.iter().max().map_or(0, |&m| m + 1)
            }
            None => 0,
        };
        Ok(TabularDataset {
            x,
            labels,
            n_classes,
            column_names,
            column_meta,
            norm_stats: None,
            split: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn n_cols(&self) -> usize {
        self.x.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.x.row(i)
    }

    pub fn features(&self) -> &Tensor {
        &self.x
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column_meta(&self) -> &[ColumnKind] {
        &self.column_meta
    }

    pub fn norm_stats(&self) -> Option<&[ColumnStats]> {
        self.norm_stats.as_deref()
    }

    pub fn split_sides(&self) -> Option<&[SplitSide]> {
        self.split.as_deref()
    }

    /// Train rows; the whole dataset when no split was assigned.
    pub fn train_indices(&self) -> Vec<usize> {
        match &self.split {
            Some(sides) => (0..self.n_rows()).filter(|&i| sides[i] == SplitSide::Train).collect(),
            None => (0..self.n_rows()).collect(),
        }
    }

    pub fn test_indices(&self) -> Vec<usize> {
        match &self.split {
            Some(sides) => (0..self.n_rows()).filter(|&i| sides[i] == SplitSide::Test).collect(),
            None => Vec::new(),
        }
    }

    pub fn gather_rows(&self, rows: &[usize]) -> Result<Tensor> {
        let d = self.n_cols();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            if r >= self.n_rows() {
                return Err(Error::InvalidInput(format!("row {r} out of range")));
            }
            data.extend_from_slice(self.row(r));
        }
        Tensor::new(vec![rows.len(), d], data)
    }

    pub fn gather_labels(&self, rows: &[usize]) -> Option<Vec<usize>> {
        self.labels.as_ref().map(|ys| rows.iter().map(|&r| ys[r]).collect())
    }
}

// ── toy generator ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoCirclesOptions {
    /// Circle centers sit at (-offset, 0) and (+offset, 0).
    pub center_offset: f64,
    pub radius: f64,
    /// Std of Gaussian noise added to the radius (0 = exact circumference).
    pub radial_noise_std: f64,
    /// Sample the disk interior instead of the circumference.
    pub disk_sampling: bool,
}

impl Default for TwoCirclesOptions {
    fn default() -> Self {
        TwoCirclesOptions {
            center_offset: 0.5,
            radius: 1.0,
            radial_noise_std: 0.0,
            disk_sampling: false,
        }
    }
}

/// Binary 10-dimensional dataset: each example concatenates five i.i.d. 2-D
/// points from its class circle, laid out `(x1, y1, ..., x5, y5)`. The two
/// circles overlap (centers one radius apart), so the 2-D projections are
/// not linearly separable.
pub fn generate_two_circles(n_per_class: usize, seed: u64) -> Result<TabularDataset> {
    generate_two_circles_with(n_per_class, seed, &TwoCirclesOptions::default())
}

pub fn generate_two_circles_with(
    n_per_class: usize,
    seed: u64,
    opts: &TwoCirclesOptions,
) -> Result<TabularDataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidConfig("n_per_class must be >= 1".into()));
    }
    let mut rng = stream(seed, Stream::Data);
    let mut data = Vec::with_capacity(n_per_class * 2 * 10);
    let mut labels = Vec::with_capacity(n_per_class * 2);
    for class in 0..2usize {
        let cx = if class == 0 { -opts.center_offset } else { opts.center_offset };
        for _ in 0..n_per_class {
            for _ in 0..5 {
                let theta: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
                let mut r = if opts.disk_sampling {
                    opts.radius * rng.gen::<f64>().sqrt()
                } else {
                    opts.radius
                };
                if opts.radial_noise_std > 0.0 {
                    r += opts.radial_noise_std * rng.sample::<f64, _>(StandardNormal);
                }
                data.push(cx + r * theta.cos());
                data.push(r * theta.sin());
            }
            labels.push(class);
        }
    }
    let names = (1..=5).flat_map(|i| [format!("x{i}"), format!("y{i}")]).collect();
    let meta = vec![ColumnKind::Continuous; 10];
    TabularDataset::from_parts(
        Tensor::new(vec![n_per_class * 2, 10], data)?,
        Some(labels),
        names,
        meta,
    )
}

/// 2-D projection by alternate-coordinate means: the first output is the
/// mean of even-indexed entries, the second of odd-indexed entries. Defined
/// for any even-length vector (representations included).
pub fn project_2d(x: &[f64]) -> Result<(f64, f64)> {
    if x.is_empty() || x.len() % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "alternate-mean projection needs an even-length vector, got {}",
            x.len()
        )));
    }
    let half = (x.len() / 2) as f64;
    let px = x.iter().step_by(2).sum::<f64>() / half;
    let py = x.iter().skip(1).step_by(2).sum::<f64>() / half;
    Ok((px, py))
}

// ── CSV schema & ingestion ──────────────────────────────────────────────

/// Declares how CSV columns map to features. Parsed from key-value text:
///
/// ```text
/// label = cover_type
/// categorical = wilderness, soil
/// one_hot_group = 10..14
/// one_hot_group = 14..54
/// ```
///
/// One-hot group ranges are 0-based column positions in the file
/// (end-exclusive); each group collapses to a single integer feature by
/// argmax. `categorical` entries name columns (or give positions) stored as
/// raw integers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvSchema {
    pub label_column: Option<String>,
    pub categorical_columns: Vec<String>,
    pub one_hot_groups: Vec<(usize, usize)>,
}

impl CsvSchema {
    pub fn parse(text: &str) -> Result<Self> {
        let mut schema = CsvSchema::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("schema line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "label" => schema.label_column = Some(value.to_string()),
                "categorical" => {
                    schema
                        .categorical_columns
                        .extend(value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()));
                }
                "one_hot_group" => {
                    let (a, b) = value.split_once("..").ok_or_else(|| {
                        Error::Data(format!("schema line {}: expected start..end", lineno + 1))
                    })?;
                    let start: usize = a.trim().parse().map_err(|_| {
                        Error::Data(format!("schema line {}: bad range start", lineno + 1))
                    })?;
                    let end: usize = b.trim().parse().map_err(|_| {
                        Error::Data(format!("schema line {}: bad range end", lineno + 1))
                    })?;
                    if end <= start + 1 {
                        return Err(Error::Data(format!(
                            "schema line {}: one-hot group needs at least 2 columns",
                            lineno + 1
                        )));
                    }
                    schema.one_hot_groups.push((start, end));
                }
                other => {
                    return Err(Error::Data(format!("schema line {}: unknown key '{other}'", lineno + 1)))
                }
            }
        }
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_kept: usize,
    /// Rows dropped for missing/unparseable/non-finite fields or bad labels.
    pub rows_rejected: usize,
    /// One-hot argmax ties resolved to the lowest index.
    pub argmax_ties: usize,
}

/// Load a CSV with a header row. One-hot groups collapse to single integer
/// columns by argmax; categorical columns keep raw integer values; rows with
/// missing values are rejected and counted. `shuffle_seed` applies a seeded
/// row permutation (the usual path); `None` preserves file order.
pub fn load_csv(
    path: &Path,
    schema: &CsvSchema,
    shuffle_seed: Option<u64>,
) -> Result<(TabularDataset, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|s| s.to_string()).collect();
    let ncols = headers.len();

    let resolve = |name: &str| -> Result<usize> {
        if let Some(pos) = headers.iter().position(|h| h == name) {
            return Ok(pos);
        }
        name.parse::<usize>()
            .ok()
            .filter(|&i| i < ncols)
            .ok_or_else(|| Error::Data(format!("column '{name}' not found")))
    };

    let label_idx = schema.label_column.as_deref().map(&resolve).transpose()?;
    let categorical_idx: Vec<usize> =
        schema.categorical_columns.iter().map(|c| resolve(c)).collect::<Result<_>>()?;

    // Validate groups: in range, disjoint, not covering the label column.
    let mut groups = schema.one_hot_groups.clone();
    groups.sort_unstable();
    for w in groups.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::Data("one-hot groups overlap".into()));
        }
    }
    for &(start, end) in &groups {
        if end > ncols {
            return Err(Error::Data(format!("one-hot group {start}..{end} exceeds {ncols} columns")));
        }
        if let Some(li) = label_idx {
            if start <= li && li < end {
                return Err(Error::Data("one-hot group covers the label column".into()));
            }
        }
    }

    // Output column layout: original order, each group replaced in place.
    enum Field {
        Plain(usize),
        Group(usize, usize),
    }
    let mut fields = Vec::new();
    let mut col = 0usize;
    while col < ncols {
        if Some(col) == label_idx {
            col += 1;
            continue;
        }
        if let Some(&(start, end)) = groups.iter().find(|&&(s, _)| s == col) {
            fields.push(Field::Group(start, end));
            col = end;
        } else {
            fields.push(Field::Plain(col));
            col += 1;
        }
    }

    let column_names: Vec<String> = fields
        .iter()
        .map(|f| match f {
            Field::Plain(i) => headers[*i].clone(),
            Field::Group(s, _) => headers[*s].clone(),
        })
        .collect();
    let column_meta: Vec<ColumnKind> = fields
        .iter()
        .map(|f| match f {
            Field::Plain(i) if categorical_idx.contains(i) => ColumnKind::CategoricalInteger,
            Field::Plain(_) => ColumnKind::Continuous,
            Field::Group(..) => ColumnKind::CategoricalInteger,
        })
        .collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut report = IngestReport::default();

    'records: for record in reader.records() {
        let record = record?;
        if record.len() != ncols {
            report.rows_rejected += 1;
            continue;
        }
        let mut parsed = Vec::with_capacity(ncols);
        for field in record.iter() {
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => parsed.push(v),
                _ => {
                    report.rows_rejected += 1;
                    continue 'records;
                }
            }
        }
        if let Some(li) = label_idx {
            let y = parsed[li];
            if y < 0.0 || y.fract() != 0.0 {
                report.rows_rejected += 1;
                continue;
            }
            labels.push(y as usize);
        }
        let mut row = Vec::with_capacity(fields.len());
        for f in &fields {
            match *f {
                Field::Plain(i) => row.push(parsed[i]),
                Field::Group(s, e) => {
                    let slice = &parsed[s..e];
                    let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let arg = slice.iter().position(|&v| v == max).unwrap();
                    if slice.iter().filter(|&&v| v == max).count() > 1 {
                        report.argmax_ties += 1;
                    }
                    row.push(arg as f64);
                }
            }
        }
        rows.push(row);
    }
    report.rows_kept = rows.len();
    if rows.is_empty() {
        return Err(Error::Data(format!("no usable rows in {}", path.display())));
    }

    // Seeded row permutation.
    if let Some(seed) = shuffle_seed {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut stream(seed, Stream::Data));
        rows = order.iter().map(|&i| std::mem::take(&mut rows[i])).collect();
        if label_idx.is_some() {
            labels = order.iter().map(|&i| labels[i]).collect();
        }
    }

    let d = fields.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let ds = TabularDataset::from_parts(
        Tensor::new(vec![report.rows_kept, d], flat)?,
        label_idx.map(|_| labels),
        column_names,
        column_meta,
    )?;
    Ok((ds, report))
}

/// Write features (17 significant digits) and labels with a header row.
pub fn save_csv(ds: &TabularDataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = ds.column_names().join(",");
    if ds.labels().is_some() {
        header.push_str(",label");
    }
    writeln!(out, "{header}")?;
    for i in 0..ds.n_rows() {
        let mut line = ds.row(i).iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",");
        if let Some(ys) = ds.labels() {
            line.push_str(&format!(",{}", ys[i]));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

// ── normalization ───────────────────────────────────────────────────────

/// Per-column z-score with statistics from the train split only; columns
/// with vanishing spread map to zero. Statistics are stored for the inverse
/// transform and for applying to held-out data.
pub fn normalize_fit_apply(mut ds: TabularDataset) -> Result<TabularDataset> {
    if ds.norm_stats.is_some() {
        return Err(Error::InvalidInput("dataset is already normalized".into()));
    }
    let train = ds.train_indices();
    if train.is_empty() {
        return Err(Error::Data("normalization needs a nonempty train split".into()));
    }
    let d = ds.n_cols();
    let n = train.len() as f64;
    let mut stats = Vec::with_capacity(d);
    for c in 0..d {
        let mean = train.iter().map(|&r| ds.row(r)[c]).sum::<f64>() / n;
        let var = train.iter().map(|&r| (ds.row(r)[c] - mean).powi(2)).sum::<f64>() / n;
        stats.push(ColumnStats { mean, std: var.sqrt() });
    }
    let rows = ds.n_rows();
    for i in 0..rows {
        for c in 0..d {
            let s = stats[c];
            let v = &mut ds.x.data_mut()[i * d + c];
            *v = if s.std < 1e-12 { 0.0 } else { (*v - s.mean) / s.std };
        }
    }
    ds.norm_stats = Some(stats);
    Ok(ds)
}

/// Map a normalized row back to original units.
pub fn denormalize_row(stats: &[ColumnStats], row: &[f64]) -> Vec<f64> {
    row.iter().zip(stats).map(|(v, s)| v * s.std + s.mean).collect()
}

/// Apply stored train statistics to a new row (e.g. held-out data).
pub fn normalize_row(stats: &[ColumnStats], row: &[f64]) -> Vec<f64> {
    row.iter()
        .zip(stats)
        .map(|(v, s)| if s.std < 1e-12 { 0.0 } else { (v - s.mean) / s.std })
        .collect()
}

// ── splits ──────────────────────────────────────────────────────────────

/// Deterministic split, stratified by label when labels exist. Per-class
/// test counts are `round(fraction * n_class)`.
pub fn split(mut ds: TabularDataset, test_fraction: f64, seed: u64) -> Result<TabularDataset> {
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::InvalidConfig("test_fraction must be in (0, 1)".into()));
    }
    let n = ds.n_rows();
    let mut rng = stream(seed, Stream::Data);
    let mut sides = vec![SplitSide::Train; n];

    match ds.labels.clone() {
        Some(ys) => {
            let k = ds.n_classes.max(1);
            for class in 0..k {
                let mut members: Vec<usize> =
                    (0..n).filter(|&i| ys[i] == class).collect();
                members.shuffle(&mut rng);
                let t = (test_fraction * members.len() as f64).round() as usize;
                for &i in members.iter().take(t) {
                    sides[i] = SplitSide::Test;
                }
            }
        }
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let t = (test_fraction * n as f64).round() as usize;
            for &i in order.iter().take(t) {
                sides[i] = SplitSide::Test;
            }
        }
    }
    let n_test = sides.iter().filter(|s| **s == SplitSide::Test).count();
    if n_test == 0 || n_test == n {
        return Err(Error::Data("split leaves an empty side".into()));
    }
    ds.split = Some(sides);
    Ok(ds)
}

/// Split from an explicit index file: one test-row index per line.
pub fn split_from_index_file(mut ds: TabularDataset, path: &Path) -> Result<TabularDataset> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let n = ds.n_rows();
    let mut sides = vec![SplitSide::Train; n];
    let mut count = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let idx: usize = t
            .parse()
            .map_err(|_| Error::Data(format!("split file line {}: bad index", lineno + 1)))?;
        if idx >= n {
            return Err(Error::Data(format!("split file line {}: index {idx} out of range", lineno + 1)));
        }
        if sides[idx] == SplitSide::Test {
            return Err(Error::Data(format!("split file line {}: duplicate index {idx}", lineno + 1)));
        }
        sides[idx] = SplitSide::Test;
        count += 1;
    }
    if count == 0 || count == n {
        return Err(Error::Data("split file leaves an empty side".into()));
    }
    ds.split = Some(sides);
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_circles_shape_and_geometry() {
        let ds = generate_two_circles(50, 9).unwrap();
        assert_eq!(ds.n_rows(), 100);
        assert_eq!(ds.n_cols(), 10);
        assert_eq!(ds.n_classes(), 2);
        // Every class-0 point lies on the circle centered at (-0.5, 0).
        for i in 0..50 {
            let row = ds.row(i);
            for p in 0..5 {
                let (x, y) = (row[2 * p], row[2 * p + 1]);
                let r2 = (x + 0.5).powi(2) + y * y;
                assert!((r2 - 1.0).abs() < 1e-9, "point off circle: {r2}");
            }
        }
    }

    #[test]
    fn two_circles_projection_centers() {
        let ds = generate_two_circles(5000, 4).unwrap();
        let mut means = [[0.0f64; 2]; 2];
        let ys = ds.labels().unwrap().to_vec();
        let mut counts = [0usize; 2];
        for i in 0..ds.n_rows() {
            let (px, py) = project_2d(ds.row(i)).unwrap();
            means[ys[i]][0] += px;
            means[ys[i]][1] += py;
            counts[ys[i]] += 1;
        }
        for c in 0..2 {
            means[c][0] /= counts[c] as f64;
            means[c][1] /= counts[c] as f64;
        }
        assert!((means[0][0] + 0.5).abs() < 0.02);
        assert!((means[1][0] - 0.5).abs() < 0.02);
        assert!(means[0][1].abs() < 0.02);
        assert!(means[1][1].abs() < 0.02);
    }

    #[test]
    fn projection_rules() {
        let five_same: Vec<f64> = (0..5).flat_map(|_| [2.5, -1.5]).collect();
        assert_eq!(project_2d(&five_same).unwrap(), (2.5, -1.5));
        // Linearity.
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [0.5, -0.5, 1.5, 2.0];
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let (pa, qa) = project_2d(&a).unwrap();
        let (pb, qb) = project_2d(&b).unwrap();
        let (ps, qs) = project_2d(&sum).unwrap();
        assert!((ps - (pa + pb)).abs() < 1e-12);
        assert!((qs - (qa + qb)).abs() < 1e-12);
        assert!(project_2d(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn schema_parsing() {
        let text = "# comment\nlabel = cover\ncategorical = a, b\none_hot_group = 10..14\none_hot_group = 14..54\n";
        let s = CsvSchema::parse(text).unwrap();
        assert_eq!(s.label_column.as_deref(), Some("cover"));
        assert_eq!(s.categorical_columns, vec!["a", "b"]);
        assert_eq!(s.one_hot_groups, vec![(10, 14), (14, 54)]);
        assert!(CsvSchema::parse("one_hot_group = 3..4").is_err());
        assert!(CsvSchema::parse("bogus = 1").is_err());
    }

    #[test]
    fn one_hot_collapse_argmax() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,h0,h1,h2,h3,y\n1.5,0,0,1,0,1\n2.5,1,0,0,0,0\n").unwrap();
        let schema = CsvSchema {
            label_column: Some("y".into()),
            categorical_columns: vec![],
            one_hot_groups: vec![(1, 5)],
        };
        let (ds, report) = load_csv(&path, &schema, None).unwrap();
        assert_eq!(ds.n_cols(), 2);
        assert_eq!(ds.row(0), &[1.5, 2.0]);
        assert_eq!(ds.row(1), &[2.5, 0.0]);
        assert_eq!(ds.column_meta()[1], ColumnKind::CategoricalInteger);
        assert_eq!(report.rows_kept, 2);
        assert_eq!(report.argmax_ties, 0);
    }

    #[test]
    fn bad_rows_rejected_with_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "a,b,y\n1,2,0\n,2,0\nx,2,1\n3,4,1\n").unwrap();
        let schema = CsvSchema {
            label_column: Some("y".into()),
            ..CsvSchema::default()
        };
        let (ds, report) = load_csv(&path, &schema, None).unwrap();
        assert_eq!(report.rows_kept, 2);
        assert_eq!(report.rows_rejected, 2);
        assert_eq!(ds.n_rows(), 2);
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut text = String::from("a,b\n");
        for i in 0..20 {
            text.push_str(&format!("{i},{}\n", i * 2));
        }
        std::fs::write(&path, text).unwrap();
        let schema = CsvSchema::default();
        let (plain, _) = load_csv(&path, &schema, None).unwrap();
        let (shuffled, _) = load_csv(&path, &schema, Some(5)).unwrap();
        let mut a: Vec<Vec<u64>> =
            (0..20).map(|i| plain.row(i).iter().map(|v| v.to_bits()).collect()).collect();
        let mut b: Vec<Vec<u64>> =
            (0..20).map(|i| shuffled.row(i).iter().map(|v| v.to_bits()).collect()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        // Deterministic per seed.
        let (again, _) = load_csv(&path, &schema, Some(5)).unwrap();
        assert_eq!(shuffled.features(), again.features());
    }

    #[test]
    fn csv_roundtrip_exact() {
        let ds = generate_two_circles(25, 13).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        save_csv(&ds, &path).unwrap();
        let schema = CsvSchema { label_column: Some("label".into()), ..CsvSchema::default() };
        let (back, report) = load_csv(&path, &schema, None).unwrap();
        assert_eq!(report.rows_rejected, 0);
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
    }

    #[test]
    fn normalization_train_only_and_invertible() {
        let ds = generate_two_circles(200, 21).unwrap();
        let ds = split(ds, 0.25, 3).unwrap();
        let raw = ds.clone();
        let normed = normalize_fit_apply(ds).unwrap();
        let stats = normed.norm_stats().unwrap().to_vec();

        // Train columns have mean ~0, std ~1 after the transform.
        let train = normed.train_indices();
        let n = train.len() as f64;
        for c in 0..normed.n_cols() {
            let mean = train.iter().map(|&r| normed.row(r)[c]).sum::<f64>() / n;
            let var = train.iter().map(|&r| (normed.row(r)[c] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-10);
            assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }

        // Stats are a pure function of the raw train rows (leakage check).
        for c in 0..raw.n_cols() {
            let mean = train.iter().map(|&r| raw.row(r)[c]).sum::<f64>() / n;
            let var = train.iter().map(|&r| (raw.row(r)[c] - mean).powi(2)).sum::<f64>() / n;
            assert!((stats[c].mean - mean).abs() < 1e-12);
            assert!((stats[c].std - var.sqrt()).abs() < 1e-12);
        }

        // Round trip.
        for i in 0..raw.n_rows() {
            let back = denormalize_row(&stats, normed.row(i));
            for (a, b) in back.iter().zip(raw.row(i)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Tensor::new(vec![3, 2], vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0]).unwrap();
        let ds = TabularDataset::from_parts(
            x,
            None,
            vec!["c".into(), "v".into()],
            vec![ColumnKind::Continuous; 2],
        )
        .unwrap();
        let normed = normalize_fit_apply(ds).unwrap();
        for i in 0..3 {
            assert_eq!(normed.row(i)[0], 0.0);
        }
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let ds = generate_two_circles(100, 31).unwrap();
        let s1 = split(ds.clone(), 0.5, 7).unwrap();
        let s2 = split(ds, 0.5, 7).unwrap();
        assert_eq!(s1.split_sides(), s2.split_sides());
        let test = s1.test_indices();
        assert_eq!(test.len(), 100);
        let ys = s1.labels().unwrap();
        let per_class = test.iter().filter(|&&i| ys[i] == 0).count();
        assert_eq!(per_class, 50);
    }

    #[test]
    fn split_from_file() {
        let ds = generate_two_circles(5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.txt");
        std::fs::write(&path, "0\n3\n7\n").unwrap();
        let ds = split_from_index_file(ds, &path).unwrap();
        assert_eq!(ds.test_indices(), vec![0, 3, 7]);
        assert_eq!(ds.train_indices().len(), 7);
    }
}
