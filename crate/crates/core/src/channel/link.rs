use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Downlink-to-array power ledger. Losses are positive magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub path_loss_db: f64,
    pub rx_gain_dbi: f64,
    pub cable_loss_db: f64,
    pub amp_gain_db: f64,
    pub noise_figure_db: f64,
    pub multiplexer_loss_db: f64,
    pub summation_loss_db: f64,
    /// Thermal plus quantization noise in the 20 MHz band.
    pub noise_floor_dbm: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            tx_power_dbm: 42.0,
            tx_gain_dbi: 9.0,
            path_loss_db: 110.0,
            rx_gain_dbi: 6.0,
            cable_loss_db: 2.4,
            amp_gain_db: 10.0,
            noise_figure_db: 1.6,
            multiplexer_loss_db: 10.0,
            summation_loss_db: 10.0,
            noise_floor_dbm: -97.0,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        let v = [
            self.tx_power_dbm,
            self.tx_gain_dbi,
            self.path_loss_db,
            self.rx_gain_dbi,
            self.cable_loss_db,
            self.amp_gain_db,
            self.noise_figure_db,
            self.multiplexer_loss_db,
            self.summation_loss_db,
            self.noise_floor_dbm,
        ];
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("link budget entries must be finite"));
        }
        let losses = [
            self.path_loss_db,
            self.cable_loss_db,
            self.noise_figure_db,
            self.multiplexer_loss_db,
            self.summation_loss_db,
        ];
        if losses.iter().any(|&x| x < 0.0) {
            return Err(Error::config("losses are magnitudes and must be non-negative"));
        }
        Ok(())
    }

    pub fn eirp_dbm(&self) -> f64 {
        self.tx_power_dbm + self.tx_gain_dbi
    }

    pub fn received_power_dbm(&self) -> f64 {
        self.tx_power_dbm + self.tx_gain_dbi - self.path_loss_db + self.rx_gain_dbi - self.cable_loss_db
            + self.amp_gain_db
            - self.noise_figure_db
            - self.multiplexer_loss_db
            - self.summation_loss_db
    }

    pub fn with_path_loss(&self, path_loss_db: f64) -> Self {
        Self {
            path_loss_db,
            ..self.clone()
        }
    }
}

pub fn link_budget_snr(lb: &LinkBudget) -> f64 {
    lb.received_power_dbm() - lb.noise_floor_dbm
}

/// Free-space loss over one meter.
pub fn fspl_1m_db(wavelength_m: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI / wavelength_m).log10()
}

/// Log-distance path loss anchored at the free-space loss at 1 m.
pub fn path_loss_db(distance_m: f64, exponent: f64, wavelength_m: f64) -> f64 {
    fspl_1m_db(wavelength_m) + 10.0 * exponent * distance_m.max(1.0).log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ledger() {
        let lb = LinkBudget::default();
        assert_eq!(link_budget_snr(&lb), 30.0);
        assert_eq!(lb.eirp_dbm(), 51.0);
    }

    #[test]
    fn bare_chain() {
        let lb = LinkBudget {
            tx_power_dbm: 42.0,
            tx_gain_dbi: 0.0,
            path_loss_db: 0.0,
            rx_gain_dbi: 0.0,
            cable_loss_db: 0.0,
            amp_gain_db: 0.0,
            noise_figure_db: 0.0,
            multiplexer_loss_db: 0.0,
            summation_loss_db: 0.0,
            noise_floor_dbm: -97.0,
        };
        assert_eq!(link_budget_snr(&lb), 139.0);
    }

    #[test]
    fn free_space_reference() {
        let lambda = crate::ofdm::SPEED_OF_LIGHT / 1.27e9;
        assert!((fspl_1m_db(lambda) - 34.52).abs() < 0.01);
        let d = path_loss_db(200.0, 2.0, lambda) - path_loss_db(100.0, 2.0, lambda);
        assert!((d - 6.0206).abs() < 1e-4);
    }
}
