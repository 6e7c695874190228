//! Dataset ingestion, normalized-error metric, per-collection aggregation
//! and grid search over the sampling parameters.
//!
//! A collection is described by a CSV manifest with the columns
//! `image,mask,gt_x,gt_y` (mask may be empty; relative paths resolve against
//! the manifest's directory). A collections file lists `name = manifest.csv`
//! pairs. Ground truth is in original-frame pixels.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{parse_kv, DetectorParams, Method};
use crate::error::{invalid, PithError, Result};
use crate::geom::Point;
use crate::imgproc::{preprocess, Preprocessed, RgbImage, SliceMask};
use crate::io::{load_mask, load_rgb};
use crate::detect_preprocessed;

/// Label of the row aggregating every collection.
pub const ALL_COLLECTIONS: &str = "All";

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub image: PathBuf,
    /// Without a mask the whole image is foreground.
    pub mask: Option<PathBuf>,
    pub gt: Point<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize, Serialize)]
struct ManifestRow {
    image: String,
    #[serde(default)]
    mask: String,
    gt_x: f64,
    gt_y: f64,
}

impl DatasetManifest {
    /// Reads a manifest CSV and checks that every referenced file exists.
    pub fn load_csv(name: &str, path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut entries = Vec::new();
        for row in rdr.deserialize::<ManifestRow>() {
            let row = row?;
            let resolve = |p: &str| {
                let p = Path::new(p);
                if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
            };
            let image = resolve(&row.image);
            let mask = (!row.mask.is_empty()).then(|| resolve(&row.mask));
            for p in std::iter::once(&image).chain(mask.as_ref()) {
                if !p.exists() {
                    return invalid(format!("{}: referenced file {} does not exist", path.display(), p.display()));
                }
            }
            entries.push(ManifestEntry { image, mask, gt: Point::new(row.gt_x, row.gt_y) });
        }
        Ok(Self { name: name.to_string(), entries })
    }

    /// Writes the manifest with paths as given (callers choose relative or absolute).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wr = csv::Writer::from_path(path)?;
        for e in &self.entries {
            wr.serialize(ManifestRow {
                image: e.image.display().to_string(),
                mask: e.mask.as_ref().map(|m| m.display().to_string()).unwrap_or_default(),
                gt_x: e.gt.x,
                gt_y: e.gt.y,
            })?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Loads a `name = manifest.csv` collections file, in file order.
pub fn load_collections(path: &Path) -> Result<Vec<DatasetManifest>> {
    let text = fs::read_to_string(path).map_err(|error| PithError::Io { path: path.to_path_buf(), error })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_kv(&text, &path.display().to_string())?
        .into_iter()
        .map(|(_, name, csv)| DatasetManifest::load_csv(&name, &base.join(csv)))
        .collect()
}

/// Half the larger side of the slice bounding box, in pixels.
pub fn equivalent_radius(mask: &SliceMask) -> f64 {
    let b = mask.bbox();
    b.width().max(b.height()) as f64 / 2.0
}

/// Distance between prediction and ground truth as a percentage of the equivalent radius.
pub fn normalized_error(pred: Point<f64>, gt: Point<f64>, mask: &SliceMask) -> f64 {
    100.0 * pred.distance(gt) / equivalent_radius(mask)
}

/// Center of an image, used as the prediction when detection fails.
pub fn image_center(width: usize, height: usize) -> Point<f64> {
    Point::new((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRecord {
    pub collection: String,
    pub image_id: String,
    pub pred_x: f64,
    pub pred_y: f64,
    pub gt_x: f64,
    pub gt_y: f64,
    /// Normalized error, percent of the equivalent radius.
    pub err: f64,
    /// Pixel distance in the original frame.
    pub dist_px: f64,
    #[serde(skip)]
    pub elapsed_ms: f64,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollectionMetrics {
    pub collection: String,
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub max: f64,
    pub false_negatives: usize,
    #[serde(skip)]
    pub mean_elapsed_ms: f64,
}

impl CollectionMetrics {
    pub fn from_records<'a>(collection: &str, records: impl IntoIterator<Item = &'a EvalRecord>) -> Self {
        let recs: Vec<&EvalRecord> = records.into_iter().collect();
        let n = recs.len();
        let mut errs: Vec<f64> = recs.iter().map(|r| r.err).collect();
        errs.sort_by(f64::total_cmp);
        let (mean, std, median, max, mean_elapsed_ms) = if n == 0 {
            (0.0, 0.0, 0.0, 0.0, 0.0)
        } else {
            let mean = errs.iter().sum::<f64>() / n as f64;
            let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n as f64;
            let median = if n % 2 == 1 { errs[n / 2] } else { (errs[n / 2 - 1] + errs[n / 2]) / 2.0 };
            let elapsed = recs.iter().map(|r| r.elapsed_ms).sum::<f64>() / n as f64;
            (mean, var.sqrt(), median, errs[n - 1], elapsed)
        };
        Self {
            collection: collection.to_string(),
            n,
            mean,
            std,
            median,
            max,
            false_negatives: recs.iter().filter(|r| r.failed).count(),
            mean_elapsed_ms,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricsTable {
    pub rows: Vec<CollectionMetrics>,
}

impl MetricsTable {
    /// One row per collection in first-appearance order, plus an
    /// [`ALL_COLLECTIONS`] row when there is more than one collection.
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let mut names: Vec<&str> = Vec::new();
        for r in records {
            if !names.contains(&r.collection.as_str()) {
                names.push(&r.collection);
            }
        }
        let mut rows: Vec<CollectionMetrics> = names
            .iter()
            .map(|&name| CollectionMetrics::from_records(name, records.iter().filter(|r| r.collection == name)))
            .collect();
        if names.len() > 1 {
            rows.push(CollectionMetrics::from_records(ALL_COLLECTIONS, records));
        }
        Self { rows }
    }

    pub fn row(&self, collection: &str) -> Option<&CollectionMetrics> {
        self.rows.iter().find(|r| r.collection == collection)
    }
}

/// An entry that could not be evaluated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedEntry {
    pub collection: String,
    pub image: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evaluation {
    pub records: Vec<EvalRecord>,
    pub metrics: MetricsTable,
    pub skipped: Vec<SkippedEntry>,
}

/// An in-memory evaluation sample in the original frame.
#[derive(Clone, Debug)]
pub struct Sample {
    pub collection: String,
    pub id: String,
    pub image: RgbImage,
    pub mask: SliceMask,
    pub gt: Point<f64>,
}

impl Sample {
    pub fn new(collection: &str, id: &str, image: RgbImage, mask: SliceMask, gt: Point<f64>) -> Result<Self> {
        if image.width() != mask.width() || image.height() != mask.height() {
            return invalid(format!(
                "mask {:?} does not match image {}x{}",
                mask.size(),
                image.width(),
                image.height()
            ));
        }
        if !(gt.x >= 0.0 && gt.y >= 0.0 && gt.x <= (image.width() - 1) as f64 && gt.y <= (image.height() - 1) as f64) {
            return invalid(format!("ground truth ({}, {}) outside the image", gt.x, gt.y));
        }
        Ok(Self { collection: collection.to_string(), id: id.to_string(), image, mask, gt })
    }
}

fn load_sample(collection: &str, entry: &ManifestEntry) -> Result<Sample> {
    let image = load_rgb(&entry.image)?;
    let mask = match &entry.mask {
        Some(p) => load_mask(p)?,
        None => SliceMask::full(image.width(), image.height()),
    };
    let id = entry
        .image
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| entry.image.display().to_string());
    Sample::new(collection, &id, image, mask, entry.gt)
}

/// Loads every manifest entry; failures are reported, not dropped.
pub fn load_samples(manifests: &[DatasetManifest]) -> (Vec<Sample>, Vec<SkippedEntry>) {
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for m in manifests {
        for e in &m.entries {
            match load_sample(&m.name, e) {
                Ok(s) => samples.push(s),
                Err(err) => skipped.push(SkippedEntry {
                    collection: m.name.clone(),
                    image: e.image.display().to_string(),
                    reason: err.to_string(),
                }),
            }
        }
    }
    (samples, skipped)
}

/// Applies `f` to every index with up to `workers` threads; output keeps input order.
fn par_map<R: Send>(n: usize, workers: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                slots.lock().expect("no poisoned worker")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no poisoned worker").into_iter().map(|r| r.expect("every index computed")).collect()
}

fn run_one(sample: &Sample, pre: Option<&Preprocessed<f64>>, method: Method, params: &DetectorParams) -> Result<EvalRecord> {
    let start = Instant::now();
    let owned;
    let pre = match pre {
        Some(p) => p,
        None => {
            owned = preprocess::<f64>(&sample.image, &sample.mask, params.target_width)?;
            &owned
        }
    };
    let outcome = detect_preprocessed::<f64>(pre, method, params);
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let (pred, failed) = match outcome {
        Ok(est) => (est.c_original, false),
        Err(PithError::DetectionFailed(_)) => (image_center(sample.image.width(), sample.image.height()), true),
        Err(e) => return Err(e),
    };
    Ok(EvalRecord {
        collection: sample.collection.clone(),
        image_id: sample.id.clone(),
        pred_x: pred.x,
        pred_y: pred.y,
        gt_x: sample.gt.x,
        gt_y: sample.gt.y,
        err: normalized_error(pred, sample.gt, &sample.mask),
        dist_px: pred.distance(sample.gt),
        elapsed_ms,
        failed,
    })
}

/// Runs the detector over in-memory samples. Detection failures fall back to
/// the image center and count as false negatives.
pub fn evaluate_samples(samples: &[Sample], method: Method, params: &DetectorParams, workers: usize) -> Result<Evaluation> {
    params.validate()?;
    let outcomes = par_map(samples.len(), workers, |i| run_one(&samples[i], None, method, params));
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (s, r) in samples.iter().zip(outcomes) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => skipped.push(SkippedEntry { collection: s.collection.clone(), image: s.id.clone(), reason: e.to_string() }),
        }
    }
    let metrics = MetricsTable::from_records(&records);
    Ok(Evaluation { records, metrics, skipped })
}

/// Loads and evaluates every manifest entry.
pub fn evaluate(manifests: &[DatasetManifest], method: Method, params: &DetectorParams, workers: usize) -> Result<Evaluation> {
    let (samples, mut load_skipped) = load_samples(manifests);
    let mut eval = evaluate_samples(&samples, method, params, workers)?;
    load_skipped.append(&mut eval.skipped);
    eval.skipped = load_skipped;
    Ok(eval)
}

/// Grid over the sampling parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrid {
    pub percent_lo: Vec<f64>,
    pub st_w: Vec<usize>,
    pub lo_w: Vec<usize>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self { percent_lo: vec![0.3, 0.5, 0.7, 0.9], st_w: vec![3, 7, 9, 11], lo_w: vec![3, 7, 9, 11] }
    }
}

impl ParamGrid {
    /// `key = v1, v2, ...` lines for `percent_lo`, `st_w` and `lo_w`; missing keys keep the default axis.
    pub fn from_kv(text: &str, origin: &str) -> Result<Self> {
        let mut grid = Self::default();
        for (line, key, value) in parse_kv(text, origin)? {
            let err = |message: String| PithError::Config { path: origin.to_string(), line, message };
            fn list<V: std::str::FromStr>(v: &str) -> Option<Vec<V>> {
                v.split(',').map(|s| s.trim().parse().ok()).collect()
            }
            match key.as_str() {
                "percent_lo" => grid.percent_lo = list(&value).ok_or_else(|| err(format!("bad list {value:?}")))?,
                "st_w" => grid.st_w = list(&value).ok_or_else(|| err(format!("bad list {value:?}")))?,
                "lo_w" => grid.lo_w = list(&value).ok_or_else(|| err(format!("bad list {value:?}")))?,
                other => return Err(err(format!("unknown grid axis {other:?}"))),
            }
        }
        if grid.percent_lo.is_empty() || grid.st_w.is_empty() || grid.lo_w.is_empty() {
            return invalid("grid axes must be non-empty");
        }
        Ok(grid)
    }

    /// Cells in lexicographic `(percent_lo, st_w, lo_w)` order.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut pl = self.percent_lo.clone();
        pl.sort_by(f64::total_cmp);
        pl.dedup();
        let mut sw = self.st_w.clone();
        sw.sort_unstable();
        sw.dedup();
        let mut lw = self.lo_w.clone();
        lw.sort_unstable();
        lw.dedup();
        let mut cells = Vec::with_capacity(pl.len() * sw.len() * lw.len());
        for &percent_lo in &pl {
            for &st_w in &sw {
                for &lo_w in &lw {
                    cells.push(GridCell { percent_lo, st_w, lo_w });
                }
            }
        }
        cells
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridCell {
    pub percent_lo: f64,
    pub st_w: usize,
    pub lo_w: usize,
}

impl GridCell {
    pub fn apply(&self, base: &DetectorParams) -> DetectorParams {
        let mut p = *base;
        p.lo.percent_lo = self.percent_lo;
        p.st.st_w = self.st_w;
        p.lo.lo_w = self.lo_w;
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridScore {
    pub cell: GridCell,
    /// Mean original-frame pixel distance over all images.
    pub mean_distance: f64,
    pub mean_err: f64,
    pub false_negatives: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchResult {
    pub best: GridScore,
    pub table: Vec<GridScore>,
    pub skipped: Vec<SkippedEntry>,
}

/// Exhaustive search minimizing the mean pixel distance; ties go to the
/// lexicographically smallest cell.
pub fn grid_search_samples(
    samples: &[Sample],
    method: Method,
    base: &DetectorParams,
    grid: &ParamGrid,
    workers: usize,
) -> Result<GridSearchResult> {
    base.validate()?;
    if samples.is_empty() {
        return invalid("grid search needs at least one image");
    }
    // preprocessing does not depend on the grid axes
    let pre = par_map(samples.len(), workers, |i| {
        preprocess::<f64>(&samples[i].image, &samples[i].mask, base.target_width)
    });
    let mut skipped = Vec::new();
    let mut usable = Vec::new();
    for (s, p) in samples.iter().zip(pre) {
        match p {
            Ok(p) => usable.push((s, p)),
            Err(e) => skipped.push(SkippedEntry { collection: s.collection.clone(), image: s.id.clone(), reason: e.to_string() }),
        }
    }
    let mut table = Vec::new();
    for cell in grid.cells() {
        let params = cell.apply(base);
        params.validate()?;
        let recs = par_map(usable.len(), workers, |i| run_one(usable[i].0, Some(&usable[i].1), method, &params));
        let recs: Vec<EvalRecord> = recs.into_iter().collect::<Result<_>>()?;
        let n = recs.len().max(1) as f64;
        table.push(GridScore {
            cell,
            mean_distance: recs.iter().map(|r| r.dist_px).sum::<f64>() / n,
            mean_err: recs.iter().map(|r| r.err).sum::<f64>() / n,
            false_negatives: recs.iter().filter(|r| r.failed).count(),
        });
    }
    let best = table
        .iter()
        .fold(None::<&GridScore>, |acc, s| match acc {
            Some(b) if b.mean_distance <= s.mean_distance => Some(b),
            _ => Some(s),
        })
        .cloned()
        .expect("grid has at least one cell");
    Ok(GridSearchResult { best, table, skipped })
}

pub fn grid_search(
    manifests: &[DatasetManifest],
    method: Method,
    base: &DetectorParams,
    grid: &ParamGrid,
    workers: usize,
) -> Result<GridSearchResult> {
    let (samples, mut skipped) = load_samples(manifests);
    let mut res = grid_search_samples(&samples, method, base, grid, workers)?;
    skipped.append(&mut res.skipped);
    res.skipped = skipped;
    Ok(res)
}

fn csv_to<W: Write, S: Serialize>(w: W, rows: &[S]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Per-image records. Timing is written separately by [`write_timing_csv`]
/// so that this file is reproducible.
pub fn write_records_csv<W: Write>(records: &[EvalRecord], w: W) -> Result<()> {
    csv_to(w, records)
}

pub fn write_metrics_csv<W: Write>(metrics: &MetricsTable, w: W) -> Result<()> {
    csv_to(w, &metrics.rows)
}

pub fn write_metrics_json<W: Write>(metrics: &MetricsTable, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &metrics.rows)?;
    Ok(())
}

/// Per-image wall time and per-collection means, in milliseconds.
pub fn write_timing_csv<W: Write>(eval: &Evaluation, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["collection", "image", "elapsed_ms"])?;
    for r in &eval.records {
        wr.write_record([r.collection.as_str(), r.image_id.as_str(), &format!("{:.3}", r.elapsed_ms)])?;
    }
    for m in &eval.metrics.rows {
        wr.write_record([m.collection.as_str(), "mean", &format!("{:.3}", m.mean_elapsed_ms)])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_skipped_csv<W: Write>(skipped: &[SkippedEntry], w: W) -> Result<()> {
    csv_to(w, skipped)
}

pub fn write_grid_csv<W: Write>(table: &[GridScore], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["percent_lo", "st_w", "lo_w", "mean_distance", "mean_err", "false_negatives"])?;
    for s in table {
        wr.write_record([
            s.cell.percent_lo.to_string(),
            s.cell.st_w.to_string(),
            s.cell.lo_w.to_string(),
            s.mean_distance.to_string(),
            s.mean_err.to_string(),
            s.false_negatives.to_string(),
        ])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}
