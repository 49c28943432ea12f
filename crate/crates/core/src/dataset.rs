//! Position-tagged CSI datasets and the `.csid` container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "CSID" | version u16 = 1 | flags u16
//! n_antennas u32 | n_subcarriers u32 | n_records u64 | origin u8 | seed u64
//! OfdmConfig block (64 bytes)
//! per record:
//!   x, y, z, std_north, std_east, std_up, timestamp   (7 × f64)
//!   snr_db                                             (n_antennas × f32)
//!   h, antenna-major, (re, im) pairs                   (n_antennas·n_subcarriers × 2 × f32)
//! ```
//!
//! Flag bit 0 marks the seed field as meaningful; all other bits must be zero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::ofdm::{OfdmConfig, CONFIG_BLOCK_LEN};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CSID";
pub const VERSION: u16 = 1;
pub const MAX_ANTENNAS: usize = 64;
const FLAG_SEED: u16 = 1;

/// Bytes before the fixed header fields: magic, version, flags.
pub const PREAMBLE_LEN: u64 = 8;
/// Fixed header after the preamble, including the OFDM configuration block.
pub const HEADER_LEN: u64 = 4 + 4 + 8 + 1 + 8 + CONFIG_BLOCK_LEN as u64;
const TAG_LEN: u64 = 7 * 8;

/// GPS fix in local east/north/up meters relative to the base station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsTag {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub std_north: f64,
    pub std_east: f64,
    pub std_up: f64,
    pub timestamp: f64,
}

impl GpsTag {
    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self {
            x,
            y,
            z,
            std_north: 0.0,
            std_east: 0.0,
            std_up: 0.0,
            timestamp: 0.0,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let fields = [self.x, self.y, self.z, self.std_north, self.std_east, self.std_up, self.timestamp];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err("non-finite GPS field".into());
        }
        if self.std_north < 0.0 || self.std_east < 0.0 || self.std_up < 0.0 {
            return Err("negative GPS standard deviation".into());
        }
        Ok(())
    }

    fn to_array(self) -> [f64; 7] {
        [self.x, self.y, self.z, self.std_north, self.std_east, self.std_up, self.timestamp]
    }

    fn from_array(v: [f64; 7]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            z: v[2],
            std_north: v[3],
            std_east: v[4],
            std_up: v[5],
            timestamp: v[6],
        }
    }
}

/// Antenna × subcarrier channel matrix, stored row-major in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    n_antennas: usize,
    n_subcarriers: usize,
    data: Vec<Complex32>,
}

impl CsiMatrix {
    pub fn new(n_antennas: usize, n_subcarriers: usize, data: Vec<Complex32>) -> Result<Self> {
        if data.len() != n_antennas * n_subcarriers {
            return Err(Error::arg(format!(
                "matrix data has {} entries, expected {}×{}",
                data.len(),
                n_antennas,
                n_subcarriers
            )));
        }
        Ok(Self {
            n_antennas,
            n_subcarriers,
            data,
        })
    }

    pub fn zeros(n_antennas: usize, n_subcarriers: usize) -> Self {
        Self {
            n_antennas,
            n_subcarriers,
            data: vec![Complex32::new(0.0, 0.0); n_antennas * n_subcarriers],
        }
    }

    pub fn from_rows_f64(rows: &[Vec<Complex64>]) -> Result<Self> {
        let n_sub = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_sub) {
            return Err(Error::arg("rows have different lengths"));
        }
        let data = rows
            .iter()
            .flatten()
            .map(|z| Complex32::new(z.re as f32, z.im as f32))
            .collect();
        Self::new(rows.len(), n_sub, data)
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn as_slice(&self) -> &[Complex32] {
        &self.data
    }

    pub fn row(&self, a: usize) -> &[Complex32] {
        &self.data[a * self.n_subcarriers..(a + 1) * self.n_subcarriers]
    }

    pub fn row_mut(&mut self, a: usize) -> &mut [Complex32] {
        &mut self.data[a * self.n_subcarriers..(a + 1) * self.n_subcarriers]
    }

    pub fn row_f64(&self, a: usize) -> Vec<Complex64> {
        self.row(a).iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect()
    }

    pub fn get(&self, a: usize, f: usize) -> Complex64 {
        let z = self.data[a * self.n_subcarriers + f];
        Complex64::new(z.re as f64, z.im as f64)
    }

    /// Column `f` (all antennas at one subcarrier).
    pub fn column(&self, f: usize) -> Vec<Complex64> {
        (0..self.n_antennas).map(|a| self.get(a, f)).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.n_subcarriers);
        for &a in indices {
            data.extend_from_slice(self.row(a));
        }
        Self {
            n_antennas: indices.len(),
            n_subcarriers: self.n_subcarriers,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// One spatial snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiRecord {
    pub tag: GpsTag,
    pub h: CsiMatrix,
    /// Per-antenna mean SNR, dB.
    pub snr_db: Vec<f32>,
}

impl CsiRecord {
    pub fn new(tag: GpsTag, h: CsiMatrix) -> Self {
        let n = h.n_antennas();
        Self {
            tag,
            h,
            snr_db: vec![0.0; n],
        }
    }

    /// Mean of the per-antenna SNR values (dB domain).
    pub fn mean_snr_db(&self) -> f64 {
        if self.snr_db.is_empty() {
            return f64::NAN;
        }
        self.snr_db.iter().map(|&v| v as f64).sum::<f64>() / self.snr_db.len() as f64
    }

    /// Mean power over all antennas and subcarriers.
    pub fn mean_power(&self) -> f64 {
        let d = self.h.as_slice();
        d.iter().map(|z| z.norm_sqr() as f64).sum::<f64>() / d.len() as f64
    }

    fn validate(&self) -> std::result::Result<(), String> {
        self.tag.validate()?;
        let n = self.h.n_antennas();
        if n == 0 || n > MAX_ANTENNAS {
            return Err(format!("antenna count {n} outside 1..={MAX_ANTENNAS}"));
        }
        if self.snr_db.len() != n {
            return Err(format!("{} SNR entries for {n} antennas", self.snr_db.len()));
        }
        if !self.h.is_finite() {
            return Err("non-finite channel coefficient".into());
        }
        if self.snr_db.iter().any(|v| !v.is_finite()) {
            return Err("non-finite SNR entry".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Measured,
    Synthetic,
}

impl Origin {
    fn code(self) -> u8 {
        match self {
            Origin::Measured => 0,
            Origin::Synthetic => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: OfdmConfig,
    pub records: Vec<CsiRecord>,
    pub origin: Origin,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_antennas(&self) -> usize {
        self.records.first().map_or(0, |r| r.h.n_antennas())
    }

    pub fn n_subcarriers(&self) -> usize {
        self.records.first().map_or(0, |r| r.h.n_subcarriers())
    }

    /// Checks the dataset invariants; errors name the first offending record.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let first = self
            .records
            .first()
            .ok_or_else(|| Error::arg("dataset has no records"))?;
        let shape = (first.h.n_antennas(), first.h.n_subcarriers());
        if shape.1 != self.config.n_used() {
            return Err(Error::InvalidRecord {
                index: 0,
                message: format!(
                    "{} subcarriers, configuration uses {}",
                    shape.1,
                    self.config.n_used()
                ),
            });
        }
        for (index, r) in self.records.iter().enumerate() {
            let s = (r.h.n_antennas(), r.h.n_subcarriers());
            if s != shape {
                return Err(Error::InvalidRecord {
                    index,
                    message: format!("shape {}×{} differs from {}×{}", s.0, s.1, shape.0, shape.1),
                });
            }
            r.validate().map_err(|message| Error::InvalidRecord { index, message })?;
        }
        Ok(())
    }

    pub fn record_len(&self) -> u64 {
        record_len(self.n_antennas(), self.n_subcarriers())
    }

    /// Exact `.csid` size of this dataset.
    pub fn encoded_len(&self) -> u64 {
        PREAMBLE_LEN + HEADER_LEN + self.len() as u64 * self.record_len()
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            config: self.config.clone(),
            n_antennas: self.n_antennas(),
            n_records: self.len() as u64,
            origin: self.origin,
            seed: self.seed,
        }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        self.validate()?;
        let mut out = DatasetWriter::new(w, self.header())?;
        for r in &self.records {
            out.push(r)?;
        }
        out.finish()?;
        Ok(())
    }

    /// Parses a `.csid` stream. `total_len`, when known, is checked against the
    /// size implied by the header before any record is read.
    pub fn read_from<R: Read>(r: R, total_len: Option<u64>) -> Result<Self> {
        let mut reader = DatasetReader::new(r, total_len)?;
        let header = reader.header().clone();
        let records = reader.by_ref().collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: header.config,
            records,
            origin: header.origin,
            seed: header.seed,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.validate()?;
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(f).map_err(|e| with_path(e, path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
        Self::read_from(f, Some(len)).map_err(|e| with_path(e, path))
    }

    /// Restricts every record to the given antenna rows, in the given order.
    pub fn antenna_subset(&self, indices: &[usize]) -> Result<Self> {
        let n = self.n_antennas();
        if indices.is_empty() {
            return Err(Error::arg("antenna subset is empty"));
        }
        let mut seen = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::arg(format!("antenna index {i} out of range (n = {n})")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::arg(format!("antenna index {i} repeated")));
            }
        }
        let records = self
            .records
            .iter()
            .map(|r| CsiRecord {
                tag: r.tag,
                h: r.h.select_rows(indices),
                snr_db: indices.iter().map(|&i| r.snr_db[i]).collect(),
            })
            .collect();
        Ok(Self {
            config: self.config.clone(),
            records,
            origin: self.origin,
            seed: self.seed,
        })
    }

    /// Per-axis empirical CDF of the GPS standard deviations.
    pub fn gps_accuracy_cdf(&self) -> GpsCdf {
        GpsCdf::from_tags(self.records.iter().map(|r| &r.tag))
    }

    /// One CSV row per record: `x,y,mean_snr_db[,label]`.
    pub fn write_csv<W: Write>(&self, mut w: W, labels: Option<&[usize]>) -> Result<()> {
        let io = |e| Error::io("<csv>", e);
        if let Some(l) = labels {
            if l.len() != self.len() {
                return Err(Error::arg("one label per record required"));
            }
            writeln!(w, "x,y,mean_snr_db,label").map_err(io)?;
        } else {
            writeln!(w, "x,y,mean_snr_db").map_err(io)?;
        }
        for (i, r) in self.records.iter().enumerate() {
            match labels {
                Some(l) => writeln!(w, "{},{},{},{}", r.tag.x, r.tag.y, r.mean_snr_db(), l[i]),
                None => writeln!(w, "{},{},{}", r.tag.x, r.tag.y, r.mean_snr_db()),
            }
            .map_err(io)?;
        }
        Ok(())
    }
}

/// Even-indexed elements out of `n_antennas` (uniform decimation by two).
pub fn even_antennas(n_antennas: usize) -> Vec<usize> {
    (0..n_antennas).step_by(2).collect()
}

pub fn record_len(n_antennas: usize, n_sub: usize) -> u64 {
    TAG_LEN + 4 * n_antennas as u64 + 8 * (n_antennas * n_sub) as u64
}

fn nan_at(offset: u64, index: usize, what: &str) -> Error {
    Error::Parse {
        offset,
        message: format!("record {index}: non-finite {what}"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpsAxis {
    North,
    East,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfPoint {
    pub sigma_m: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpsCdf {
    pub north: Vec<CdfPoint>,
    pub east: Vec<CdfPoint>,
    pub up: Vec<CdfPoint>,
}

impl GpsCdf {
    pub fn from_tags<'a>(tags: impl IntoIterator<Item = &'a GpsTag>) -> Self {
        let (mut n, mut e, mut u) = (Vec::new(), Vec::new(), Vec::new());
        for t in tags {
            n.push(t.std_north);
            e.push(t.std_east);
            u.push(t.std_up);
        }
        GpsCdf {
            north: empirical_cdf(n),
            east: empirical_cdf(e),
            up: empirical_cdf(u),
        }
    }

    pub fn axis(&self, axis: GpsAxis) -> &[CdfPoint] {
        match axis {
            GpsAxis::North => &self.north,
            GpsAxis::East => &self.east,
            GpsAxis::Up => &self.up,
        }
    }

    /// Fraction of records with standard deviation `<= sigma_m` on `axis`.
    pub fn fraction_at(&self, axis: GpsAxis, sigma_m: f64) -> f64 {
        let pts = self.axis(axis);
        let n = pts.partition_point(|p| p.sigma_m <= sigma_m);
        if n == 0 {
            0.0
        } else {
            pts[n - 1].fraction
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<csv>", e);
        writeln!(w, "axis,sigma_m,fraction").map_err(io)?;
        for (name, pts) in [("north", &self.north), ("east", &self.east), ("up", &self.up)] {
            for p in pts {
                writeln!(w, "{name},{},{}", p.sigma_m, p.fraction).map_err(io)?;
            }
        }
        Ok(())
    }
}

fn empirical_cdf(mut values: Vec<f64>) -> Vec<CdfPoint> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut out: Vec<CdfPoint> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let fraction = if i + 1 == n { 1.0 } else { (i + 1) as f64 / n as f64 };
        match out.last_mut() {
            Some(last) if last.sigma_m == v => last.fraction = fraction,
            _ => out.push(CdfPoint { sigma_m: v, fraction }),
        }
    }
    out
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// Everything in a `.csid` file except the records.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub config: OfdmConfig,
    pub n_antennas: usize,
    pub n_records: u64,
    pub origin: Origin,
    pub seed: Option<u64>,
}

impl DatasetHeader {
    pub fn n_subcarriers(&self) -> usize {
        self.config.n_used()
    }

    pub fn record_len(&self) -> u64 {
        record_len(self.n_antennas, self.n_subcarriers())
    }

    pub fn encoded_len(&self) -> u64 {
        PREAMBLE_LEN + HEADER_LEN + self.n_records * self.record_len()
    }

    fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.n_antennas == 0 || self.n_antennas > MAX_ANTENNAS {
            return Err(Error::arg(format!(
                "antenna count {} outside 1..={MAX_ANTENNAS}",
                self.n_antennas
            )));
        }
        if self.n_records == 0 {
            return Err(Error::arg("dataset has no records"));
        }
        Ok(())
    }

    fn encode(&self) -> Vec<u8> {
        let flags = if self.seed.is_some() { FLAG_SEED } else { 0 };
        let mut head = Vec::with_capacity((PREAMBLE_LEN + HEADER_LEN) as usize);
        head.extend_from_slice(MAGIC);
        head.extend_from_slice(&VERSION.to_le_bytes());
        head.extend_from_slice(&flags.to_le_bytes());
        head.extend_from_slice(&(self.n_antennas as u32).to_le_bytes());
        head.extend_from_slice(&(self.n_subcarriers() as u32).to_le_bytes());
        head.extend_from_slice(&self.n_records.to_le_bytes());
        head.push(self.origin.code());
        head.extend_from_slice(&self.seed.unwrap_or(0).to_le_bytes());
        head.extend_from_slice(&self.config.to_block());
        head
    }
}

/// Writes a `.csid` stream record by record; the record count is fixed by the
/// header and checked by [`DatasetWriter::finish`].
pub struct DatasetWriter<W: Write> {
    w: BufWriter<W>,
    header: DatasetHeader,
    written: u64,
    buf: Vec<u8>,
}

impl<W: Write> DatasetWriter<W> {
    pub fn new(w: W, header: DatasetHeader) -> Result<Self> {
        header.validate()?;
        let mut w = BufWriter::new(w);
        w.write_all(&header.encode()).map_err(|e| Error::io("<stream>", e))?;
        Ok(Self {
            w,
            buf: Vec::with_capacity(header.record_len() as usize),
            header,
            written: 0,
        })
    }

    pub fn push(&mut self, r: &CsiRecord) -> Result<()> {
        let index = self.written as usize;
        if self.written == self.header.n_records {
            return Err(Error::InvalidRecord {
                index,
                message: format!("header declares only {} records", self.header.n_records),
            });
        }
        let shape = (r.h.n_antennas(), r.h.n_subcarriers());
        if shape != (self.header.n_antennas, self.header.n_subcarriers()) {
            return Err(Error::InvalidRecord {
                index,
                message: format!(
                    "shape {}×{} differs from {}×{}",
                    shape.0,
                    shape.1,
                    self.header.n_antennas,
                    self.header.n_subcarriers()
                ),
            });
        }
        r.validate().map_err(|message| Error::InvalidRecord { index, message })?;
        let buf = &mut self.buf;
        buf.clear();
        for v in r.tag.to_array() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &r.snr_db {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for z in r.h.as_slice() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        self.w.write_all(buf).map_err(|e| Error::io("<stream>", e))?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.header.n_records {
            return Err(Error::arg(format!(
                "wrote {} of {} declared records",
                self.written, self.header.n_records
            )));
        }
        self.w.flush().map_err(|e| Error::io("<stream>", e))?;
        self.w.into_inner().map_err(|e| Error::io("<stream>", e.into_error()))
    }
}

/// Reads a `.csid` stream one record at a time. The iterator yields each record
/// and finally checks that no bytes follow the last one.
pub struct DatasetReader<R: Read> {
    r: Cursor<BufReader<R>>,
    header: DatasetHeader,
    next: u64,
    expected: u64,
    buf: Vec<u8>,
    done: bool,
}

impl DatasetReader<File> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
        Self::new(f, Some(len)).map_err(|e| with_path(e, path))
    }
}

impl<R: Read> DatasetReader<R> {
    pub fn new(r: R, total_len: Option<u64>) -> Result<Self> {
        let mut r = Cursor::new(BufReader::new(r));
        let magic: [u8; 4] = r.array()?;
        if &magic != MAGIC {
            return Err(Error::Parse {
                offset: 0,
                message: format!("bad magic {magic:?}, expected \"CSID\""),
            });
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Parse {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let flags = u16::from_le_bytes(r.array()?);
        if flags & !FLAG_SEED != 0 {
            return Err(Error::Parse {
                offset: 6,
                message: format!("unknown flags {flags:#06x}"),
            });
        }
        let n_antennas = u32::from_le_bytes(r.array()?) as usize;
        if n_antennas == 0 || n_antennas > MAX_ANTENNAS {
            return Err(Error::Parse {
                offset: 8,
                message: format!("antenna count {n_antennas} outside 1..={MAX_ANTENNAS}"),
            });
        }
        let n_sub = u32::from_le_bytes(r.array()?) as usize;
        let n_records = u64::from_le_bytes(r.array()?);
        if n_records == 0 {
            return Err(Error::Parse {
                offset: 16,
                message: "dataset declares no records".into(),
            });
        }
        let origin_at = r.offset;
        let origin = match r.array::<1>()?[0] {
            0 => Origin::Measured,
            1 => Origin::Synthetic,
            v => {
                return Err(Error::Parse {
                    offset: origin_at,
                    message: format!("unknown origin code {v}"),
                })
            }
        };
        let seed_raw = u64::from_le_bytes(r.array()?);
        let block_at = r.offset;
        let block: [u8; CONFIG_BLOCK_LEN] = r.array()?;
        let config = OfdmConfig::from_block(&block).map_err(|e| Error::Parse {
            offset: block_at,
            message: e.to_string(),
        })?;
        if config.n_used() != n_sub {
            return Err(Error::Parse {
                offset: 12,
                message: format!(
                    "header declares {n_sub} subcarriers, configuration uses {}",
                    config.n_used()
                ),
            });
        }
        let rec_len = record_len(n_antennas, n_sub);
        let expected = n_records
            .checked_mul(rec_len)
            .and_then(|v| v.checked_add(PREAMBLE_LEN + HEADER_LEN))
            .ok_or_else(|| Error::Parse {
                offset: 16,
                message: "record count overflows".into(),
            })?;
        if let Some(actual) = total_len {
            if actual != expected {
                let offset = if actual < expected { actual } else { expected };
                return Err(Error::Truncated {
                    offset,
                    expected,
                    actual,
                });
            }
        }
        Ok(Self {
            r,
            header: DatasetHeader {
                config,
                n_antennas,
                n_records,
                origin,
                seed: (flags & FLAG_SEED != 0).then_some(seed_raw),
            },
            next: 0,
            expected,
            buf: vec![0u8; rec_len as usize],
            done: false,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    fn read_record(&mut self) -> Result<CsiRecord> {
        let index = self.next as usize;
        let n_antennas = self.header.n_antennas;
        let n_sub = self.header.n_subcarriers();
        let start = self.r.offset;
        self.r.fill(&mut self.buf, self.expected)?;
        let buf = &self.buf;
        let f64_at = |i: usize| f64::from_le_bytes(buf[i..i + 8].try_into().unwrap());
        let f32_at = |i: usize| f32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
        let mut tag = [0.0; 7];
        for (k, v) in tag.iter_mut().enumerate() {
            *v = f64_at(k * 8);
            if !v.is_finite() {
                return Err(nan_at(start + (k * 8) as u64, index, "GPS field"));
            }
        }
        let tag = GpsTag::from_array(tag);
        if tag.std_north < 0.0 || tag.std_east < 0.0 || tag.std_up < 0.0 {
            return Err(Error::Parse {
                offset: start + 24,
                message: format!("record {index}: negative GPS standard deviation"),
            });
        }
        let snr_off = TAG_LEN as usize;
        let mut snr_db = Vec::with_capacity(n_antennas);
        for a in 0..n_antennas {
            let v = f32_at(snr_off + 4 * a);
            if !v.is_finite() {
                return Err(nan_at(start + (snr_off + 4 * a) as u64, index, "SNR entry"));
            }
            snr_db.push(v);
        }
        let h_off = snr_off + 4 * n_antennas;
        let mut data = Vec::with_capacity(n_antennas * n_sub);
        for i in 0..n_antennas * n_sub {
            let o = h_off + 8 * i;
            let z = Complex32::new(f32_at(o), f32_at(o + 4));
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(nan_at(start + o as u64, index, "channel coefficient"));
            }
            data.push(z);
        }
        Ok(CsiRecord {
            tag,
            h: CsiMatrix::new(n_antennas, n_sub, data)?,
            snr_db,
        })
    }

    fn check_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        if self.r.inner.read(&mut probe).map_err(|e| Error::io("<stream>", e))? != 0 {
            return Err(Error::Parse {
                offset: self.r.offset,
                message: "trailing bytes after last record".into(),
            });
        }
        Ok(())
    }
}

impl<R: Read> Iterator for DatasetReader<R> {
    type Item = Result<CsiRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if self.next == self.header.n_records {
            self.done = true;
            return self.check_end().err().map(Err);
        }
        let rec = self.read_record();
        self.next += 1;
        if rec.is_err() {
            self.done = true;
        }
        Some(rec)
    }
}

struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        let expected = self.offset + N as u64;
        self.fill(&mut b, expected)?;
        Ok(b)
    }

    /// Fills `buf`; on short input reports the total length the stream should have had.
    fn fill(&mut self, buf: &mut [u8], expected_total: u64) -> Result<()> {
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => {
                    let actual = self.offset + got as u64;
                    return Err(Error::Truncated {
                        offset: actual,
                        expected: expected_total,
                        actual,
                    });
                }
                Ok(k) => got += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::io("<stream>", e)),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }
}
