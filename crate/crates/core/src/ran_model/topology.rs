//! Topology file schema.
//!
//! ```json
//! {
//!   "radio": { "tx_power_dbm": 30, "pl0_db": 60, "exponent": 3.5, "d0_m": 1, "half_beamwidth_deg": 60 },
//!   "bands": [
//!     { "band": 0, "role": "coverage", "prb_capacity": 100, "path_loss_offset_db": 0,
//!       "power": { "p_active_w": 150, "p_per_prb_w": 1, "p_sleep_w": 15 } }
//!   ],
//!   "sites": [
//!     { "x": 0, "y": 0, "sectors": [ { "azimuth_deg": 0, "bands": [0, 1, 2] } ] }
//!   ]
//! }
//! ```
//!
//! Site and sector ids are positions in their arrays. Every sector must carry
//! exactly one coverage-role band.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cell, CellId, CellRole, Position, PowerModel, RadioParams, RanError, SectorId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub band: u32,
    pub role: CellRole,
    pub prb_capacity: u32,
    pub power: PowerModel,
    #[serde(default)]
    pub path_loss_offset_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorConfig {
    pub azimuth_deg: f64,
    pub bands: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteConfig {
    pub x: f64,
    pub y: f64,
    pub sectors: Vec<SectorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    #[serde(default)]
    pub radio: RadioParams,
    pub bands: Vec<BandConfig>,
    pub sites: Vec<SiteConfig>,
}

/// Anything that can answer "does this cell exist, and what layer is it on".
pub trait CellDirectory {
    fn cell_role(&self, id: &CellId) -> Option<CellRole>;
}

/// Cells of one sector split by layer; capacity carriers ordered by band.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorLayout {
    pub sector: SectorId,
    pub coverage: CellId,
    pub capacity: Vec<CellId>,
}

impl Topology {
    pub fn from_json(text: &str) -> Result<Self, RanError> {
        let topo: Topology = serde_json::from_str(text).map_err(|e| RanError::InvalidTopology(e.to_string()))?;
        topo.validate()?;
        Ok(topo)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RanError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| RanError::InvalidTopology(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn band(&self, band: u32) -> Option<&BandConfig> {
        self.bands.iter().find(|b| b.band == band)
    }

    pub fn validate(&self) -> Result<(), RanError> {
        let invalid = |m: String| Err(RanError::InvalidTopology(m));
        self.radio.validate().map_err(RanError::InvalidTopology)?;
        let mut seen = BTreeSet::new();
        for b in &self.bands {
            if !seen.insert(b.band) {
                return invalid(format!("band {} declared twice", b.band));
            }
            b.power
                .validate()
                .map_err(|m| RanError::InvalidTopology(format!("band {}: {m}", b.band)))?;
            if !b.path_loss_offset_db.is_finite() {
                return invalid(format!("band {}: non-finite path-loss offset", b.band));
            }
        }
        for (site_idx, site) in self.sites.iter().enumerate() {
            if !site.x.is_finite() || !site.y.is_finite() {
                return invalid(format!("site {site_idx}: non-finite position"));
            }
            for (sector_idx, sector) in site.sectors.iter().enumerate() {
                let mut bands = BTreeSet::new();
                let mut coverage = 0;
                for band in &sector.bands {
                    if !bands.insert(*band) {
                        return invalid(format!("sector {site_idx}/{sector_idx}: band {band} repeated"));
                    }
                    match self.band(*band) {
                        None => return invalid(format!("sector {site_idx}/{sector_idx}: unknown band {band}")),
                        Some(cfg) if cfg.role == CellRole::Coverage => coverage += 1,
                        Some(_) => {}
                    }
                }
                if coverage != 1 {
                    return invalid(format!(
                        "sector {site_idx}/{sector_idx}: expected exactly one coverage band, found {coverage}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Builds every cell in `CellId` order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for (site_idx, site) in self.sites.iter().enumerate() {
            for (sector_idx, sector) in site.sectors.iter().enumerate() {
                for band in &sector.bands {
                    let cfg = self.band(*band).expect("validated topology");
                    cells.push(Cell::new(
                        CellId::new(site_idx as u32, sector_idx as u32, *band),
                        cfg.role,
                        Position::new(site.x, site.y),
                        sector.azimuth_deg,
                        cfg.prb_capacity,
                        cfg.path_loss_offset_db,
                        cfg.power,
                    ));
                }
            }
        }
        cells.sort_by_key(|c| c.id);
        cells
    }

    pub fn cell_ids(&self) -> Vec<CellId> {
        self.cells().into_iter().map(|c| c.id).collect()
    }

    pub fn sectors(&self) -> Vec<SectorLayout> {
        let mut out = Vec::new();
        for (site_idx, site) in self.sites.iter().enumerate() {
            for (sector_idx, sector) in site.sectors.iter().enumerate() {
                let id = SectorId {
                    site: site_idx as u32,
                    sector: sector_idx as u32,
                };
                let mut coverage = None;
                let mut capacity = Vec::new();
                for band in &sector.bands {
                    let cell = CellId::new(id.site, id.sector, *band);
                    match self.band(*band).map(|b| b.role) {
                        Some(CellRole::Coverage) => coverage = Some(cell),
                        Some(CellRole::Capacity) => capacity.push(cell),
                        None => {}
                    }
                }
                capacity.sort();
                out.push(SectorLayout {
                    sector: id,
                    coverage: coverage.expect("validated topology"),
                    capacity,
                });
            }
        }
        out
    }

    pub fn sector_count(&self) -> usize {
        self.sites.iter().map(|s| s.sectors.len()).sum()
    }

    /// Synthetic multi-carrier topology: band 0 is the coverage layer, the rest
    /// are capacity carriers. Sectors are spread over sites as evenly as
    /// possible, the first sites taking the remainder.
    pub fn generate(sites: u32, sectors: u32, bands: u32) -> Result<Self, RanError> {
        if sites == 0 || bands == 0 || sectors < sites {
            return Err(RanError::InvalidTopology(format!(
                "need sites >= 1, bands >= 1 and sectors >= sites (got {sites}/{sectors}/{bands})"
            )));
        }
        let band_cfgs: Vec<BandConfig> = (0..bands).map(default_band).collect();
        let max_capacity = bands - 1;
        let base = sectors / sites;
        let extra = sectors % sites;
        let cols = (f64::from(sites)).sqrt().ceil() as u32;
        let isd = 1000.0;
        let mut global = 0u32;
        let mut site_cfgs = Vec::new();
        for s in 0..sites {
            let (row, col) = (s / cols, s % cols);
            let x = f64::from(col) * isd + if row % 2 == 1 { isd / 2.0 } else { 0.0 };
            let y = f64::from(row) * isd * 0.866;
            let n = base + u32::from(s < extra);
            let mut sector_cfgs = Vec::new();
            for k in 0..n {
                let n_capacity = if max_capacity == 0 {
                    0
                } else {
                    max_capacity.saturating_sub(global % 3).max(1)
                };
                sector_cfgs.push(SectorConfig {
                    azimuth_deg: 360.0 / f64::from(n) * f64::from(k),
                    bands: (0..=n_capacity).collect(),
                });
                global += 1;
            }
            site_cfgs.push(SiteConfig {
                x,
                y,
                sectors: sector_cfgs,
            });
        }
        let topo = Topology {
            radio: RadioParams::default(),
            bands: band_cfgs,
            sites: site_cfgs,
        };
        topo.validate()?;
        Ok(topo)
    }
}

fn default_band(band: u32) -> BandConfig {
    if band == 0 {
        return BandConfig {
            band,
            role: CellRole::Coverage,
            prb_capacity: 100,
            power: PowerModel {
                p_active_w: 150.0,
                p_per_prb_w: 1.0,
                p_sleep_w: 15.0,
            },
            path_loss_offset_db: 0.0,
        };
    }
    let slot = (band - 1) % 4;
    let wrap = (band - 1) / 4;
    let prb_capacity = [100, 75, 100, 150][slot as usize];
    BandConfig {
        band,
        role: CellRole::Capacity,
        prb_capacity,
        power: PowerModel {
            p_active_w: 120.0,
            p_per_prb_w: 0.5,
            p_sleep_w: 12.0,
        },
        path_loss_offset_db: 2.0 * f64::from(slot + 1) + 8.0 * f64::from(wrap),
    }
}

impl CellDirectory for Topology {
    fn cell_role(&self, id: &CellId) -> Option<CellRole> {
        let site = self.sites.get(id.site as usize)?;
        let sector = site.sectors.get(id.sector as usize)?;
        if !sector.bands.contains(&id.band) {
            return None;
        }
        self.band(id.band).map(|b| b.role)
    }
}

impl CellDirectory for BTreeMap<CellId, Cell> {
    fn cell_role(&self, id: &CellId) -> Option<CellRole> {
        self.get(id).map(|c| c.role)
    }
}
