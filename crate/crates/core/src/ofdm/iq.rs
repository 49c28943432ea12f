//! Raw multi-antenna IQ captures.
//!
//! Samples are interleaved little-endian `f32` pairs (re, im), antenna-major: all
//! samples of antenna 0, then antenna 1, and so on. Metadata lives in a sidecar
//! `<capture>.hdr` text file of `key = value` lines:
//!
//! ```text
//! sample_rate_hz = 20000000.0
//! carrier_hz = 1270000000.0
//! n_antennas = 64
//! n_samples = 43520
//! pilot_seed = 1
//! n_sub = 1024
//! n_cp = 256
//! n_guard_low = 50
//! n_guard_high = 49
//! dc_null = true
//! t0 = 0, 4352, 8704          # optional frame-start hints
//! ref_phase = 0.1, -2.3, ...  # optional reference-transmitter phase per chain
//! gps.17 = x, y, z, std_north, std_east, std_up, timestamp
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use super::OfdmConfig;
use crate::dataset::GpsTag;
use crate::keyvalue::{self, fmt_f64};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IqHeader {
    pub config: OfdmConfig,
    pub n_antennas: usize,
    pub n_samples: usize,
    pub pilot_seed: u64,
    pub t0_candidates: Vec<usize>,
    /// Empty when no reference measurement accompanies the capture.
    pub ref_phase: Vec<f64>,
    /// GPS fixes keyed by the identifier carried in each frame's data symbol.
    pub gps: BTreeMap<u32, GpsTag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqCapture {
    pub header: IqHeader,
    pub streams: Vec<Vec<Complex64>>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

impl IqHeader {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("sample_rate_hz", fmt_f64(c.sample_rate_hz));
        kv("carrier_hz", fmt_f64(c.carrier_hz));
        kv("n_antennas", self.n_antennas.to_string());
        kv("n_samples", self.n_samples.to_string());
        kv("pilot_seed", self.pilot_seed.to_string());
        kv("n_sub", c.n_sub.to_string());
        kv("n_cp", c.n_cp.to_string());
        kv("n_guard_low", c.n_guard_low.to_string());
        kv("n_guard_high", c.n_guard_high.to_string());
        kv("dc_null", c.dc_null.to_string());
        if !self.t0_candidates.is_empty() {
            kv("t0", join(self.t0_candidates.iter().map(|v| v.to_string())));
        }
        if !self.ref_phase.is_empty() {
            kv("ref_phase", join(self.ref_phase.iter().map(|&v| fmt_f64(v))));
        }
        for (id, t) in &self.gps {
            let vals = [t.x, t.y, t.z, t.std_north, t.std_east, t.std_up, t.timestamp];
            kv(&format!("gps.{id}"), join(vals.iter().map(|&v| fmt_f64(v))));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut config = OfdmConfig::default();
        let mut n_antennas = None;
        let mut n_samples = None;
        let mut pilot_seed = None;
        let mut t0_candidates = Vec::new();
        let mut ref_phase = Vec::new();
        let mut gps = BTreeMap::new();
        for e in keyvalue::parse(text)? {
            match e.key.as_str() {
                "sample_rate_hz" => config.sample_rate_hz = e.f64()?,
                "carrier_hz" => config.carrier_hz = e.f64()?,
                "n_antennas" => n_antennas = Some(e.usize()?),
                "n_samples" => n_samples = Some(e.usize()?),
                "pilot_seed" => pilot_seed = Some(e.u64()?),
                "n_sub" => config.n_sub = e.usize()?,
                "n_cp" => config.n_cp = e.usize()?,
                "n_guard_low" => config.n_guard_low = e.usize()?,
                "n_guard_high" => config.n_guard_high = e.usize()?,
                "dc_null" => config.dc_null = e.bool()?,
                "t0" => t0_candidates = e.usize_list()?,
                "ref_phase" => ref_phase = e.f64_list()?,
                k => match k.strip_prefix("gps.").map(str::parse::<u32>) {
                    Some(Ok(id)) => {
                        let v = e.f64_list()?;
                        if v.len() != 7 {
                            return Err(Error::config(format!(
                                "line {}: `{k}` needs 7 values, got {}",
                                e.line,
                                v.len()
                            )));
                        }
                        let tag = GpsTag {
                            x: v[0],
                            y: v[1],
                            z: v[2],
                            std_north: v[3],
                            std_east: v[4],
                            std_up: v[5],
                            timestamp: v[6],
                        };
                        tag.validate()
                            .map_err(|m| Error::config(format!("line {}: {m}", e.line)))?;
                        gps.insert(id, tag);
                    }
                    _ => {
                        return Err(Error::UnknownKey {
                            key: e.key.clone(),
                            line: e.line,
                        })
                    }
                },
            }
        }
        config.validate()?;
        fn need<T>(v: Option<T>, k: &str) -> Result<T> {
            v.ok_or_else(|| Error::config(format!("missing `{k}`")))
        }
        let header = Self {
            config,
            n_antennas: need(n_antennas, "n_antennas")?,
            n_samples: need(n_samples, "n_samples")?,
            pilot_seed: need(pilot_seed, "pilot_seed")?,
            t0_candidates,
            ref_phase,
            gps,
        };
        if header.n_antennas == 0 {
            return Err(Error::config("n_antennas must be positive"));
        }
        if !header.ref_phase.is_empty() && header.ref_phase.len() != header.n_antennas {
            return Err(Error::config(format!(
                "ref_phase has {} entries for {} antennas",
                header.ref_phase.len(),
                header.n_antennas
            )));
        }
        Ok(header)
    }
}

fn join(it: impl Iterator<Item = String>) -> String {
    it.collect::<Vec<_>>().join(", ")
}

impl IqCapture {
    pub fn validate(&self) -> Result<()> {
        if self.streams.len() != self.header.n_antennas {
            return Err(Error::arg("stream count differs from header"));
        }
        if self.streams.iter().any(|s| s.len() != self.header.n_samples) {
            return Err(Error::arg("stream length differs from header"));
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.validate()?;
        let mut bytes = Vec::with_capacity(self.header.n_antennas * self.header.n_samples * 8);
        for s in &self.streams {
            for z in s {
                bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
                bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        let hdr = sidecar_path(path);
        fs::write(&hdr, self.header.to_text()).map_err(|e| Error::io(&hdr, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let hdr = sidecar_path(path);
        let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
        let header = IqHeader::parse(&text)?;
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let expected = (header.n_antennas * header.n_samples * 8) as u64;
        if bytes.len() as u64 != expected || bytes.is_empty() {
            return Err(Error::Truncated {
                offset: bytes.len().min(expected as usize) as u64,
                expected,
                actual: bytes.len() as u64,
            });
        }
        let mut streams = Vec::with_capacity(header.n_antennas);
        for (a, chunk) in bytes.chunks_exact(header.n_samples * 8).enumerate() {
            let mut s = Vec::with_capacity(header.n_samples);
            for (i, p) in chunk.chunks_exact(8).enumerate() {
                let re = f32::from_le_bytes(p[..4].try_into().unwrap());
                let im = f32::from_le_bytes(p[4..].try_into().unwrap());
                if !(re.is_finite() && im.is_finite()) {
                    return Err(Error::Parse {
                        offset: ((a * header.n_samples + i) * 8) as u64,
                        message: format!("non-finite sample on antenna {a}"),
                    });
                }
                s.push(Complex64::new(re as f64, im as f64));
            }
            streams.push(s);
        }
        Ok(Self { header, streams })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn capture() -> IqCapture {
        let mut gps = BTreeMap::new();
        let mut t = GpsTag::at(1.5, -2.25, 1.0);
        t.std_north = 0.1;
        t.timestamp = 1.0 / 3.0;
        gps.insert(7, t);
        IqCapture {
            header: IqHeader {
                config: OfdmConfig::default(),
                n_antennas: 2,
                n_samples: 3,
                pilot_seed: 11,
                t0_candidates: vec![0, 2],
                ref_phase: vec![0.25, -1.0 / 3.0],
                gps,
            },
            streams: vec![
                vec![Complex64::new(1.0, -1.0), Complex64::new(0.5, 0.0), Complex64::new(0.0, 2.0)],
                vec![Complex64::new(-3.0, 0.25); 3],
            ],
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cap.iq");
        let c = capture();
        c.write(&p).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 48);
        assert_eq!(IqCapture::read(&p).unwrap(), c);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = capture().header.to_text() + "bogus = 1\n";
        match IqHeader::parse(&text) {
            Err(Error::UnknownKey { key, .. }) => assert_eq!(key, "bogus"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_capture_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cap.iq");
        capture().write(&p).unwrap();
        fs::write(&p, b"").unwrap();
        assert!(matches!(IqCapture::read(&p), Err(Error::Truncated { actual: 0, .. })));
    }
}
