//! Fully resolved commands. A job is what a manifest records and what replay
//! re-executes; running the same job twice writes the same bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use csikit::channel::Scenario;
use csikit::clustering::{kmeans, reduce_subcarriers, views_streamed, KmeansOptions, SubcarrierPolicy};
use csikit::dataset::{even_antennas, CsiRecord, Dataset, DatasetHeader, DatasetReader, GpsAxis, GpsCdf, GpsTag};
use csikit::evaluation::{mean_snr_map, sir_cluster, sweep, SweepConfig};
use csikit::ofdm::iq::{sidecar_path, IqCapture};
use csikit::ofdm::pipeline::{extract, loopback, ExtractOptions, LoopbackOptions};
use csikit::precoding::{beam_power_map, mrt_weights, po_weights, write_map_csv, MapPoint, MapPolicy, PrecoderKind};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::svg;
use crate::Failure;

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    #[default]
    Bin,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    Generate(GenerateJob),
    Loopback(LoopbackJob),
    Extract(ExtractJob),
    Cluster(ClusterJob),
    Sweep(SweepJob),
    Map(MapJob),
    Stats(StatsJob),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateJob {
    /// Complete scene description in `key = value` form.
    pub scenario: String,
    pub out: PathBuf,
    pub format: Format,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopbackJob {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub truth: Option<PathBuf>,
    /// Only the first `limit` records are sounded.
    pub limit: Option<usize>,
    pub pilot_seed: u64,
    pub cfo_hz: f64,
    pub noise_db: Option<f64>,
    pub chain_phase: Vec<f64>,
    pub chain_gain_db: Vec<f64>,
    pub gap: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractJob {
    pub iq: PathBuf,
    pub out: PathBuf,
    pub format: Format,
    pub n_taps: usize,
    pub threshold: f64,
    pub use_hints: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterJob {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub assignments: PathBuf,
    pub svg: Option<PathBuf>,
    pub k: usize,
    pub kind: PrecoderKind,
    pub iterations: usize,
    pub early_exit: bool,
    pub policy: SubcarrierPolicy,
    pub antennas: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepJob {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub svg: Option<PathBuf>,
    pub k_values: Vec<usize>,
    pub realizations: usize,
    pub iterations: usize,
    pub early_exit: bool,
    pub policy: SubcarrierPolicy,
    pub antennas: Option<usize>,
    pub base_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum MapLayer {
    Snr,
    /// Power of the beam built from one record's view.
    Beam {
        record: usize,
        kind: PrecoderKind,
        view: SubcarrierPolicy,
        evaluate: MapPolicy,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapJob {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub svg: Option<PathBuf>,
    pub layer: MapLayer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsJob {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub svg: Option<PathBuf>,
}

pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub results: Value,
    pub summary: String,
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Generate(_) => "generate",
            Job::Loopback(_) => "loopback",
            Job::Extract(_) => "extract",
            Job::Cluster(_) => "cluster",
            Job::Sweep(_) => "sweep",
            Job::Map(_) => "map",
            Job::Stats(_) => "stats",
        }
    }

    /// The output the manifest is named after.
    pub fn primary_output(&self) -> &Path {
        match self {
            Job::Generate(j) => &j.out,
            Job::Loopback(j) => &j.out,
            Job::Extract(j) => &j.out,
            Job::Cluster(j) => &j.out,
            Job::Sweep(j) => &j.out,
            Job::Map(j) => &j.out,
            Job::Stats(j) => &j.out,
        }
    }

    pub fn seeds(&self) -> Value {
        match self {
            Job::Generate(j) => match Scenario::from_kv(&j.scenario) {
                Ok(s) => json!({ "scene": s.scene.seed }),
                Err(_) => Value::Null,
            },
            Job::Loopback(j) => json!({ "noise": j.seed, "pilot": j.pilot_seed }),
            Job::Cluster(j) => json!({ "kmeans": j.seed }),
            Job::Sweep(j) => json!({ "base": j.base_seed, "last": j.base_seed.wrapping_add(j.realizations.saturating_sub(1) as u64) }),
            Job::Extract(_) | Job::Map(_) | Job::Stats(_) => json!({}),
        }
    }

    pub fn run(&self) -> Result<Outcome, Failure> {
        match self {
            Job::Generate(j) => j.run(),
            Job::Loopback(j) => j.run(),
            Job::Extract(j) => j.run(),
            Job::Cluster(j) => j.run(),
            Job::Sweep(j) => j.run(),
            Job::Map(j) => j.run(),
            Job::Stats(j) => j.run(),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), Failure> {
    w.flush().map_err(|e| Failure::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn with_path(e: csikit::Error, path: &Path) -> Failure {
    let f = Failure::from(e);
    Failure {
        message: format!("{}: {}", path.display(), f.message),
        ..f
    }
}

/// Record rows kept for clustering: all, or the even-indexed half.
fn antenna_rows(n_antennas: usize, requested: Option<usize>) -> Result<Option<Vec<usize>>, Failure> {
    match requested {
        None => Ok(None),
        Some(n) if n == n_antennas => Ok(None),
        Some(n) if n == even_antennas(n_antennas).len() => Ok(Some(even_antennas(n_antennas))),
        Some(n) => Err(Failure::usage(format!(
            "--antennas {n}: dataset has {n_antennas} antennas; use {n_antennas} or {}",
            even_antennas(n_antennas).len()
        ))),
    }
}

/// Tags and narrowband views of a dataset file, streamed.
fn load_views(
    path: &Path,
    policy: SubcarrierPolicy,
    antennas: Option<usize>,
) -> Result<(DatasetHeader, Vec<GpsTag>, Vec<Vec<csikit::Complex64>>), Failure> {
    let reader = DatasetReader::open(path).map_err(|e| with_path(e, path))?;
    let header = reader.header().clone();
    let rows = antenna_rows(header.n_antennas, antennas)?;
    let mut tags = Vec::with_capacity(header.n_records as usize);
    let records = reader.inspect(|r| {
        if let Ok(r) = r {
            tags.push(r.tag);
        }
    });
    let views = views_streamed(records, &header.config, policy, rows.as_deref()).map_err(|e| with_path(e, path))?;
    Ok((header, tags, views))
}

/// Applies `f` to consecutive chunks of a dataset file.
fn for_each_chunk(path: &Path, mut f: impl FnMut(&Dataset) -> Result<(), Failure>) -> Result<DatasetHeader, Failure> {
    let mut reader = DatasetReader::open(path).map_err(|e| with_path(e, path))?;
    let header = reader.header().clone();
    loop {
        let records: Vec<CsiRecord> = reader
            .by_ref()
            .take(CHUNK)
            .collect::<csikit::Result<_>>()
            .map_err(|e| with_path(e, path))?;
        if records.is_empty() {
            break;
        }
        f(&Dataset {
            config: header.config.clone(),
            records,
            origin: header.origin,
            seed: header.seed,
        })?;
    }
    Ok(header)
}

fn read_prefix(path: &Path, limit: Option<usize>) -> Result<Dataset, Failure> {
    let mut reader = DatasetReader::open(path).map_err(|e| with_path(e, path))?;
    let header = reader.header().clone();
    let take = limit.unwrap_or(usize::MAX);
    if take == 0 {
        return Err(Failure::usage("--limit must be at least 1"));
    }
    let records = reader
        .by_ref()
        .take(take)
        .collect::<csikit::Result<Vec<_>>>()
        .map_err(|e| with_path(e, path))?;
    Ok(Dataset {
        config: header.config,
        records,
        origin: header.origin,
        seed: header.seed,
    })
}

fn write_dataset(d: &Dataset, path: &Path, format: Format) -> Result<(), Failure> {
    match format {
        Format::Bin => d.write(path).map_err(|e| with_path(e, path)),
        Format::Csv => {
            let mut w = create(path)?;
            d.write_csv(&mut w, None).map_err(|e| with_path(e, path))?;
            finish(w, path)
        }
    }
}

impl GenerateJob {
    fn run(&self) -> Result<Outcome, Failure> {
        let sc = Scenario::from_kv(&self.scenario)?;
        let n = match self.format {
            Format::Bin => {
                let w = create(&self.out)?;
                let header = sc.write_dataset(w).map_err(|e| with_path(e, &self.out))?;
                header.n_records as usize
            }
            Format::Csv => {
                let rows = sc.synth_map(|r| Ok((r.tag.x, r.tag.y, r.mean_snr_db())))?;
                let mut w = create(&self.out)?;
                let io = |e| Failure::io(&self.out, e);
                writeln!(w, "x,y,mean_snr_db").map_err(io)?;
                for (x, y, s) in &rows {
                    writeln!(w, "{x},{y},{s}").map_err(io)?;
                }
                finish(w, &self.out)?;
                rows.len()
            }
        };
        Ok(Outcome {
            inputs: vec![],
            outputs: vec![self.out.clone()],
            results: json!({ "records": n, "antennas": sc.array.n_elements(), "subcarriers": sc.ofdm.n_used() }),
            summary: format!("wrote {n} records to {}", self.out.display()),
        })
    }
}

impl LoopbackJob {
    fn run(&self) -> Result<Outcome, Failure> {
        let d = read_prefix(&self.dataset, self.limit)?;
        let opts = LoopbackOptions {
            pilot_seed: self.pilot_seed,
            cfo_hz: self.cfo_hz,
            noise_db: self.noise_db,
            chain_phase: self.chain_phase.clone(),
            chain_gain_db: self.chain_gain_db.clone(),
            gap: self.gap,
            seed: self.seed,
        };
        let lb = loopback(&d, &opts)?;
        lb.capture.write(&self.out).map_err(|e| with_path(e, &self.out))?;
        let mut outputs = vec![self.out.clone(), sidecar_path(&self.out)];
        if let Some(t) = &self.truth {
            lb.truth.write(t).map_err(|e| with_path(e, t))?;
            outputs.push(t.clone());
        }
        let h = &lb.capture.header;
        Ok(Outcome {
            inputs: vec![self.dataset.clone()],
            outputs,
            results: json!({ "frames": d.len(), "antennas": h.n_antennas, "samples": h.n_samples }),
            summary: format!("sounded {} frames into {}", d.len(), self.out.display()),
        })
    }
}

impl ExtractJob {
    fn run(&self) -> Result<Outcome, Failure> {
        let capture = IqCapture::read(&self.iq).map_err(|e| with_path(e, &self.iq))?;
        let opts = ExtractOptions {
            n_taps: self.n_taps,
            threshold: self.threshold,
            use_hints: self.use_hints,
        };
        let ex = extract(&capture, &opts)?;
        write_dataset(&ex.dataset, &self.out, self.format)?;
        let frames: Vec<Value> = ex
            .frames
            .iter()
            .map(|f| {
                json!({
                    "id": f.id,
                    "t0": f.t0,
                    "detected_t0": f.detected_t0,
                    "metric": f.metric,
                    "cfo_hz": f.cfo_hz,
                })
            })
            .collect();
        Ok(Outcome {
            inputs: vec![self.iq.clone(), sidecar_path(&self.iq)],
            outputs: vec![self.out.clone()],
            results: json!({ "frames": frames }),
            summary: format!("extracted {} records to {}", ex.frames.len(), self.out.display()),
        })
    }
}

impl ClusterJob {
    fn run(&self) -> Result<Outcome, Failure> {
        let (_, tags, views) = load_views(&self.dataset, self.policy, self.antennas)?;
        let opts = KmeansOptions {
            iterations: self.iterations,
            early_exit: self.early_exit,
        };
        let model = kmeans(&views, self.k, self.kind, &opts, self.seed)?;
        let report = sir_cluster(&model, &views)?;

        let mut w = create(&self.out)?;
        model.write_text(&mut w).map_err(|e| with_path(e, &self.out))?;
        finish(w, &self.out)?;
        let mut w = create(&self.assignments)?;
        model
            .write_assignments_csv(&mut w, &tags)
            .map_err(|e| with_path(e, &self.assignments))?;
        finish(w, &self.assignments)?;
        let mut outputs = vec![self.out.clone(), self.assignments.clone()];
        if let Some(p) = &self.svg {
            let pts: Vec<svg::Point> = tags
                .iter()
                .zip(&model.assignments)
                .map(|(t, &l)| svg::Point {
                    x: t.x,
                    y: t.y,
                    color: svg::Color::Label(l),
                })
                .collect();
            let title = format!("k = {} {} clusters", self.k, self.kind);
            write_text(p, &svg::scatter(&pts, &title, "east (m)", "north (m)"))?;
            outputs.push(p.clone());
        }
        Ok(Outcome {
            inputs: vec![self.dataset.clone()],
            outputs,
            results: json!({
                "sum_rate": report.sum_rate,
                "cluster_sizes": model.cluster_sizes(),
                "cluster_sir": report.per_cluster,
                "iterations_run": model.iterations_run,
                "init_indices": model.init_indices,
            }),
            summary: format!(
                "{} k = {}: sum-rate {:.4} bits/s/Hz, model in {}",
                self.kind,
                self.k,
                report.sum_rate,
                self.out.display()
            ),
        })
    }
}

impl SweepJob {
    fn run(&self) -> Result<Outcome, Failure> {
        let (_, _, views) = load_views(&self.dataset, self.policy, self.antennas)?;
        let cfg = SweepConfig {
            k_values: self.k_values.clone(),
            kinds: vec![PrecoderKind::Mrt, PrecoderKind::Po],
            realizations: self.realizations,
            kmeans: KmeansOptions {
                iterations: self.iterations,
                early_exit: self.early_exit,
            },
            base_seed: self.base_seed,
        };
        let res = sweep(&views, &cfg)?;
        let mut w = create(&self.out)?;
        res.write_csv(&mut w).map_err(|e| with_path(e, &self.out))?;
        finish(w, &self.out)?;
        let mut outputs = vec![self.out.clone()];
        if let Some(p) = &self.svg {
            let series: Vec<svg::Series> = cfg
                .kinds
                .iter()
                .map(|&kind| svg::Series {
                    label: kind.to_string(),
                    points: res
                        .rows
                        .iter()
                        .filter(|r| r.kind == kind)
                        .map(|r| (r.k as f64, r.mean_sum_rate))
                        .collect(),
                })
                .collect();
            let n = views.first().map_or(0, Vec::len);
            let title = format!("mean sum-rate, {n} antennas");
            write_text(p, &svg::lines(&series, &title, "clusters k", "sum-rate (bits/s/Hz)"))?;
            outputs.push(p.clone());
        }
        let rows: Vec<Value> = res
            .rows
            .iter()
            .map(|r| {
                json!({
                    "k": r.k,
                    "kind": r.kind.to_string(),
                    "n_antennas": r.n_antennas,
                    "mean_sum_rate": r.mean_sum_rate,
                    "std_sum_rate": r.std_sum_rate,
                    "max_sir": r.max_sir,
                })
            })
            .collect();
        Ok(Outcome {
            inputs: vec![self.dataset.clone()],
            outputs,
            results: json!({ "rows": rows }),
            summary: format!("{} rows written to {}", res.rows.len(), self.out.display()),
        })
    }
}

impl MapJob {
    fn run(&self) -> Result<Outcome, Failure> {
        let mut points: Vec<MapPoint> = Vec::new();
        let column = match &self.layer {
            MapLayer::Snr => {
                for_each_chunk(&self.dataset, |d| {
                    points.extend(mean_snr_map(d));
                    Ok(())
                })?;
                "mean_snr_db"
            }
            MapLayer::Beam {
                record,
                kind,
                view,
                evaluate,
            } => {
                let mut reader = DatasetReader::open(&self.dataset).map_err(|e| with_path(e, &self.dataset))?;
                let config = reader.header().config.clone();
                let n = reader.header().n_records;
                let r = match reader.nth(*record) {
                    Some(r) => r.map_err(|e| with_path(e, &self.dataset))?,
                    None => return Err(Failure::usage(format!("--record {record} out of range ({n} records)"))),
                };
                let v = reduce_subcarriers(&r, &config, *view);
                let c = match kind {
                    PrecoderKind::Mrt => mrt_weights(&v)?,
                    PrecoderKind::Po => po_weights(&v),
                };
                for_each_chunk(&self.dataset, |d| {
                    points.extend(beam_power_map(d, &c, *evaluate)?);
                    Ok(())
                })?;
                "beam_power_db"
            }
        };
        let mut w = create(&self.out)?;
        write_map_csv(&mut w, &points, column).map_err(|e| with_path(e, &self.out))?;
        finish(w, &self.out)?;
        let mut outputs = vec![self.out.clone()];
        if let Some(p) = &self.svg {
            let pts: Vec<svg::Point> = points
                .iter()
                .map(|q| svg::Point {
                    x: q.x,
                    y: q.y,
                    color: svg::Color::Value(q.value_db),
                })
                .collect();
            write_text(p, &svg::scatter(&pts, column, "east (m)", "north (m)"))?;
            outputs.push(p.clone());
        }
        let finite = points.iter().map(|q| q.value_db).filter(|v| v.is_finite());
        let lo = finite.clone().fold(f64::INFINITY, f64::min);
        let hi = finite.fold(f64::NEG_INFINITY, f64::max);
        Ok(Outcome {
            inputs: vec![self.dataset.clone()],
            outputs,
            results: json!({ "points": points.len(), "min_db": finite_or_null(lo), "max_db": finite_or_null(hi) }),
            summary: format!("{} map points written to {}", points.len(), self.out.display()),
        })
    }
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

impl StatsJob {
    fn run(&self) -> Result<Outcome, Failure> {
        let mut tags = Vec::new();
        for_each_chunk(&self.dataset, |d| {
            tags.extend(d.records.iter().map(|r| r.tag));
            Ok(())
        })?;
        let cdf = GpsCdf::from_tags(&tags);
        let mut w = create(&self.out)?;
        cdf.write_csv(&mut w).map_err(|e| with_path(e, &self.out))?;
        finish(w, &self.out)?;
        let mut outputs = vec![self.out.clone()];
        if let Some(p) = &self.svg {
            let series: Vec<svg::Series> = [("north", GpsAxis::North), ("east", GpsAxis::East), ("up", GpsAxis::Up)]
                .into_iter()
                .map(|(label, axis)| svg::Series {
                    label: label.into(),
                    points: cdf.axis(axis).iter().map(|c| (c.sigma_m, c.fraction)).collect(),
                })
                .collect();
            write_text(p, &svg::lines(&series, "GPS accuracy CDF", "standard deviation (m)", "fraction"))?;
            outputs.push(p.clone());
        }
        let at = |axis| cdf.fraction_at(axis, 0.34);
        let results = json!({
            "records": tags.len(),
            "fraction_within_0_34_m": {
                "north": at(GpsAxis::North),
                "east": at(GpsAxis::East),
                "up": at(GpsAxis::Up),
            },
        });
        Ok(Outcome {
            inputs: vec![self.dataset.clone()],
            outputs,
            summary: format!(
                "{} records; within 0.34 m: north {:.3}, east {:.3}",
                tags.len(),
                at(GpsAxis::North),
                at(GpsAxis::East)
            ),
            results,
        })
    }
}
