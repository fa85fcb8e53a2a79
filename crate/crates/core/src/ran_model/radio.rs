use serde::{Deserialize, Serialize};

use super::{Cell, Position};

/// Log-distance path-loss parameters shared by every cell of a topology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub tx_power_dbm: f64,
    /// Path loss at the reference distance.
    pub pl0_db: f64,
    pub exponent: f64,
    pub d0_m: f64,
    /// A UE measures a cell only when it lies within this angle of the
    /// sector's azimuth.
    #[serde(default = "default_half_beamwidth")]
    pub half_beamwidth_deg: f64,
}

fn default_half_beamwidth() -> f64 {
    60.0
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            tx_power_dbm: 30.0,
            pl0_db: 60.0,
            exponent: 3.5,
            d0_m: 1.0,
            half_beamwidth_deg: default_half_beamwidth(),
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [
            self.tx_power_dbm,
            self.pl0_db,
            self.exponent,
            self.d0_m,
            self.half_beamwidth_deg,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err("radio parameters must be finite".into());
        }
        if self.d0_m <= 0.0 || self.exponent <= 0.0 {
            return Err("d0_m and exponent must be positive".into());
        }
        if !(0.0..=180.0).contains(&self.half_beamwidth_deg) || self.half_beamwidth_deg == 0.0 {
            return Err("half_beamwidth_deg must be in (0, 180]".into());
        }
        Ok(())
    }

    pub fn path_loss_db(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(1.0);
        self.pl0_db + 10.0 * self.exponent * (d / self.d0_m).log10()
    }
}

/// Received power in dBm at `position` from `cell`.
pub fn rsrp_at(position: &Position, cell: &Cell, radio: &RadioParams) -> f64 {
    let d = position.distance(&cell.position);
    radio.tx_power_dbm - radio.path_loss_db(d) - cell.band_offset_db
}

pub fn rsrp(ue: &super::Ue, cell: &Cell, radio: &RadioParams) -> f64 {
    rsrp_at(&ue.position, cell, radio)
}

/// Signed angular difference folded into [0, 180].
pub fn angle_between_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Bearing from `from` to `to` in degrees, counter-clockwise from +x.
pub fn bearing_deg(from: &Position, to: &Position) -> f64 {
    (to.y - from.y).atan2(to.x - from.x).to_degrees().rem_euclid(360.0)
}

pub fn is_visible(position: &Position, cell: &Cell, radio: &RadioParams) -> bool {
    if position.distance(&cell.position) < 1.0 {
        return true;
    }
    let bearing = bearing_deg(&cell.position, position);
    angle_between_deg(bearing, cell.azimuth_deg) <= radio.half_beamwidth_deg
}
