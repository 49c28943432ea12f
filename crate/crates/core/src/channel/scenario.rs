use serde::{Deserialize, Serialize};

use super::geometry::ArrayGeometry;
use super::layout::{LayoutKind, SpokeLayout};
use super::synth::{self, SceneConfig};
use std::io::Write;

use rayon::prelude::*;

use crate::dataset::{CsiRecord, Dataset, DatasetHeader, DatasetWriter, Origin};
use crate::keyvalue::{self, fmt_f64};
use crate::ofdm::OfdmConfig;
use crate::{Error, Result};

/// Everything needed to regenerate a synthetic dataset; round-trips through a
/// `key = value` text file in which unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scene: SceneConfig,
    pub array: ArrayGeometry,
    pub ofdm: OfdmConfig,
    pub layout: LayoutKind,
    pub grid_step_m: f64,
    /// Used when `layout` is [`LayoutKind::Spokes`].
    pub spokes: SpokeLayout,
}

impl Default for Scenario {
    fn default() -> Self {
        let ofdm = OfdmConfig::default();
        Self {
            scene: SceneConfig::default(),
            array: ArrayGeometry::default_for(ofdm.wavelength_m()),
            ofdm,
            layout: LayoutKind::Grid,
            grid_step_m: 10.0,
            spokes: SpokeLayout::default(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.ofdm.validate()?;
        self.array.validate()?;
        self.scene.validate(&self.ofdm)?;
        if !(self.grid_step_m > 0.0) || !self.grid_step_m.is_finite() {
            return Err(Error::config("grid_step_m must be positive"));
        }
        self.spokes.validate()
    }

    /// Starts from the defaults and applies every line of `text`. The element
    /// spacing follows the carrier (half a wavelength) unless set explicitly.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut s = Self::default();
        let mut spacing = None;
        for e in keyvalue::parse(text)? {
            let sc = &mut s.scene;
            let lb = &mut sc.link;
            match e.key.as_str() {
                "x_min" => sc.x_min = e.f64()?,
                "x_max" => sc.x_max = e.f64()?,
                "y_min" => sc.y_min = e.f64()?,
                "y_max" => sc.y_max = e.f64()?,
                "n_paths" => sc.n_paths = e.usize()?,
                "delay_spread_max_s" => sc.delay_spread_max_s = e.f64()?,
                "path_loss_exponent" => sc.path_loss_exponent = e.f64()?,
                "rician_k_db" => sc.rician_k_db = e.f64()?,
                "azimuth_spread_deg" => sc.azimuth_spread_deg = e.f64()?,
                "elevation_spread_deg" => sc.elevation_spread_deg = e.f64()?,
                "user_height_m" => sc.user_height_m = e.f64()?,
                "csi_noise" => sc.csi_noise = e.bool()?,
                "gps_std_median_m" => sc.gps_std_median_m = e.f64()?,
                "gps_std_log_sigma" => sc.gps_std_log_sigma = e.f64()?,
                "gps_up_median_m" => sc.gps_up_median_m = e.f64()?,
                "seed" => sc.seed = e.u64()?,
                "grid_step_m" => s.grid_step_m = e.f64()?,
                "layout" => s.layout = e.value.parse()?,
                "spoke_count" => s.spokes.count = e.usize()?,
                "spoke_spacing_deg" => s.spokes.spacing_deg = e.f64()?,
                "spoke_ranges_m" => s.spokes.ranges_m = e.f64_list()?,
                "hotspot_radius_m" => s.spokes.radius_m = e.f64()?,
                "hotspot_users" => s.spokes.users_per_hotspot = e.usize()?,
                "tx_power_dbm" => lb.tx_power_dbm = e.f64()?,
                "tx_gain_dbi" => lb.tx_gain_dbi = e.f64()?,
                "path_loss_db" => lb.path_loss_db = e.f64()?,
                "rx_gain_dbi" => lb.rx_gain_dbi = e.f64()?,
                "cable_loss_db" => lb.cable_loss_db = e.f64()?,
                "amp_gain_db" => lb.amp_gain_db = e.f64()?,
                "noise_figure_db" => lb.noise_figure_db = e.f64()?,
                "multiplexer_loss_db" => lb.multiplexer_loss_db = e.f64()?,
                "summation_loss_db" => lb.summation_loss_db = e.f64()?,
                "noise_floor_dbm" => lb.noise_floor_dbm = e.f64()?,
                "array_rows" => s.array.rows = e.usize()?,
                "array_cols" => s.array.cols = e.usize()?,
                "element_spacing_m" => spacing = Some(e.f64()?),
                "boresight_azimuth_deg" => s.array.boresight_azimuth_deg = e.f64()?,
                "hpbw_deg" => s.array.hpbw_deg = e.f64()?,
                "array_height_m" => s.array.height_m = e.f64()?,
                "back_lobe_db" => s.array.back_lobe_db = e.f64()?,
                "n_sub" => s.ofdm.n_sub = e.usize()?,
                "n_cp" => s.ofdm.n_cp = e.usize()?,
                "sample_rate_hz" => s.ofdm.sample_rate_hz = e.f64()?,
                "carrier_hz" => s.ofdm.carrier_hz = e.f64()?,
                "n_guard_low" => s.ofdm.n_guard_low = e.usize()?,
                "n_guard_high" => s.ofdm.n_guard_high = e.usize()?,
                "dc_null" => s.ofdm.dc_null = e.bool()?,
                _ => {
                    return Err(Error::UnknownKey {
                        key: e.key.clone(),
                        line: e.line,
                    })
                }
            }
        }
        s.array.spacing_m = spacing.unwrap_or_else(|| s.ofdm.wavelength_m() / 2.0);
        s.validate()?;
        Ok(s)
    }

    /// Complete, bit-exact `key = value` rendering.
    pub fn to_kv(&self) -> String {
        let sc = &self.scene;
        let lb = &sc.link;
        let a = &self.array;
        let o = &self.ofdm;
        let f = |v: f64| fmt_f64(v);
        let lines: Vec<(&str, String)> = vec![
            ("x_min", f(sc.x_min)),
            ("x_max", f(sc.x_max)),
            ("y_min", f(sc.y_min)),
            ("y_max", f(sc.y_max)),
            ("layout", self.layout.to_string()),
            ("grid_step_m", f(self.grid_step_m)),
            ("spoke_count", self.spokes.count.to_string()),
            ("spoke_spacing_deg", f(self.spokes.spacing_deg)),
            ("spoke_ranges_m", self.spokes.ranges_m.iter().map(|&v| f(v)).collect::<Vec<_>>().join(",")),
            ("hotspot_radius_m", f(self.spokes.radius_m)),
            ("hotspot_users", self.spokes.users_per_hotspot.to_string()),
            ("n_paths", sc.n_paths.to_string()),
            ("delay_spread_max_s", f(sc.delay_spread_max_s)),
            ("path_loss_exponent", f(sc.path_loss_exponent)),
            ("rician_k_db", f(sc.rician_k_db)),
            ("azimuth_spread_deg", f(sc.azimuth_spread_deg)),
            ("elevation_spread_deg", f(sc.elevation_spread_deg)),
            ("user_height_m", f(sc.user_height_m)),
            ("csi_noise", sc.csi_noise.to_string()),
            ("gps_std_median_m", f(sc.gps_std_median_m)),
            ("gps_std_log_sigma", f(sc.gps_std_log_sigma)),
            ("gps_up_median_m", f(sc.gps_up_median_m)),
            ("seed", sc.seed.to_string()),
            ("tx_power_dbm", f(lb.tx_power_dbm)),
            ("tx_gain_dbi", f(lb.tx_gain_dbi)),
            ("path_loss_db", f(lb.path_loss_db)),
            ("rx_gain_dbi", f(lb.rx_gain_dbi)),
            ("cable_loss_db", f(lb.cable_loss_db)),
            ("amp_gain_db", f(lb.amp_gain_db)),
            ("noise_figure_db", f(lb.noise_figure_db)),
            ("multiplexer_loss_db", f(lb.multiplexer_loss_db)),
            ("summation_loss_db", f(lb.summation_loss_db)),
            ("noise_floor_dbm", f(lb.noise_floor_dbm)),
            ("array_rows", a.rows.to_string()),
            ("array_cols", a.cols.to_string()),
            ("element_spacing_m", f(a.spacing_m)),
            ("boresight_azimuth_deg", f(a.boresight_azimuth_deg)),
            ("hpbw_deg", f(a.hpbw_deg)),
            ("array_height_m", f(a.height_m)),
            ("back_lobe_db", f(a.back_lobe_db)),
            ("n_sub", o.n_sub.to_string()),
            ("n_cp", o.n_cp.to_string()),
            ("sample_rate_hz", f(o.sample_rate_hz)),
            ("carrier_hz", f(o.carrier_hz)),
            ("n_guard_low", o.n_guard_low.to_string()),
            ("n_guard_high", o.n_guard_high.to_string()),
            ("dc_null", o.dc_null.to_string()),
        ];
        lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// True transmitter positions of the configured layout, in record order.
    pub fn positions(&self) -> Result<Vec<(f64, f64)>> {
        match self.layout {
            LayoutKind::Grid => synth::grid_positions(&self.scene, self.grid_step_m),
            LayoutKind::Spokes => self.spokes.positions(&self.scene, self.array.boresight_azimuth_deg),
        }
    }

    pub fn synth_dataset(&self) -> Result<Dataset> {
        synth::synth_dataset(&self.scene, &self.array, &self.ofdm, &self.positions()?)
    }

    pub fn synth_map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(CsiRecord) -> Result<T> + Sync,
    {
        synth::synth_map(&self.scene, &self.array, &self.ofdm, &self.positions()?, f)
    }

    /// Streams the dataset of [`Scenario::synth_dataset`] to `w` without holding
    /// more than one chunk of records; the bytes are identical.
    pub fn write_dataset<W: Write>(&self, w: W) -> Result<DatasetHeader> {
        const CHUNK: usize = 256;
        self.validate()?;
        let points = self.positions()?;
        let header = DatasetHeader {
            config: self.ofdm.clone(),
            n_antennas: self.array.n_elements(),
            n_records: points.len() as u64,
            origin: Origin::Synthetic,
            seed: Some(self.scene.seed),
        };
        let mut out = DatasetWriter::new(w, header.clone())?;
        for (c, chunk) in points.chunks(CHUNK).enumerate() {
            let records: Vec<CsiRecord> = chunk
                .par_iter()
                .enumerate()
                .map(|(j, &p)| synth::point_record(c * CHUNK + j, p, &self.array, &self.scene, &self.ofdm))
                .collect::<Result<_>>()?;
            for r in &records {
                out.push(r)?;
            }
        }
        out.finish()?;
        Ok(header)
    }
}
