//! Run configuration: one JSON document, overridden field by field by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ibfd_core::conic::SolverSettings;
use ibfd_core::evaluation::{default_phi_grid, default_theta_grid, DEFAULT_ORACLE_CAP};
use ibfd_core::phase_codebook::{DEFAULT_GRID_POINTS, MAX_BITS};
use ibfd_core::sdr_designer::RefineParams;
use ibfd_core::si_channel::DEFAULT_REFERENCE_COUPLING_DB;
use ibfd_core::{Designer, Partition, PipelineConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySpec {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing in wavelengths.
    pub spacing_wl: f64,
    pub partition: Partition,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self { rows: 6, cols: 12, spacing_wl: 0.5, partition: Partition::LongAxisHalves }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    /// Distance-decay model; an optional seeded scatter term `scatter_db` below it.
    Synthetic {
        reference_coupling_db: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scatter_db: Option<f64>,
    },
    File { path: PathBuf },
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec::Synthetic { reference_coupling_db: DEFAULT_REFERENCE_COUPLING_DB, scatter_db: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Direction {
    pub theta_deg: f64,
    pub phi_deg: f64,
}

impl Default for Direction {
    fn default() -> Self {
        Self { theta_deg: 0.0, phi_deg: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub theta_deg: Vec<f64>,
    pub phi_deg: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self { theta_deg: default_theta_grid(), phi_deg: default_phi_grid() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub channel: ChannelSpec,
    pub bits: u32,
    pub pt_dbm: f64,
    /// `null` removes the SI limit.
    pub pmax_dbm: Option<f64>,
    /// Used by `design` and `oracle`.
    pub direction: Direction,
    /// Used by `sweep`.
    pub grid: Grid,
    pub designers: Vec<Designer>,
    pub solver: SolverSettings,
    pub refine: RefineParams,
    /// Rotation grid size of the projection step.
    pub grid_points: usize,
    /// Seed of the optional scatter term.
    pub seed: u64,
    pub oracle_cap: u64,
    /// Fill the wall-time CSV column.
    pub timing: bool,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometrySpec::default(),
            channel: ChannelSpec::default(),
            bits: 4,
            pt_dbm: 30.0,
            pmax_dbm: Some(-16.0),
            direction: Direction::default(),
            grid: Grid::default(),
            designers: vec![Designer::Proposed],
            solver: SolverSettings::default(),
            refine: RefineParams::default(),
            grid_points: DEFAULT_GRID_POINTS,
            seed: 0,
            oracle_cap: DEFAULT_ORACLE_CAP,
            timing: false,
            out: None,
        }
    }
}

/// Flag values; `None` leaves the config field alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub bits: Option<u32>,
    pub pmax_dbm: Option<f64>,
    pub no_pmax: bool,
    pub pt_dbm: Option<f64>,
    pub theta_deg: Option<Vec<f64>>,
    pub phi_deg: Option<Vec<f64>>,
    pub designers: Option<Vec<Designer>>,
    pub grid_points: Option<usize>,
    pub seed: Option<u64>,
    pub timing: bool,
    pub channel_file: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("invalid config JSON")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_json(&text)?;
        // file channels are relative to the config's directory
        if let ChannelSpec::File { path: p } = &mut cfg.channel {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies flags. A single `--theta-deg`/`--phi-deg` value sets the design
    /// direction; any list sets the sweep grid axis.
    pub fn apply(&mut self, o: Overrides) {
        if let Some(v) = o.out {
            self.out = Some(v);
        }
        if let Some(v) = o.bits {
            self.bits = v;
        }
        if let Some(v) = o.pmax_dbm {
            self.pmax_dbm = Some(v);
        }
        if o.no_pmax {
            self.pmax_dbm = None;
        }
        if let Some(v) = o.pt_dbm {
            self.pt_dbm = v;
        }
        if let Some(v) = o.theta_deg {
            if let [one] = v[..] {
                self.direction.theta_deg = one;
            }
            self.grid.theta_deg = v;
        }
        if let Some(v) = o.phi_deg {
            if let [one] = v[..] {
                self.direction.phi_deg = one;
            }
            self.grid.phi_deg = v;
        }
        if let Some(v) = o.designers {
            self.designers = v;
        }
        if let Some(v) = o.grid_points {
            self.grid_points = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if o.timing {
            self.timing = true;
        }
        if let Some(p) = o.channel_file {
            self.channel = ChannelSpec::File { path: p };
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_BITS).contains(&self.bits) {
            bail!("bits must be in [1, {MAX_BITS}], got {}", self.bits);
        }
        if !self.pt_dbm.is_finite() {
            bail!("P_t must be finite");
        }
        if let Some(p) = self.pmax_dbm {
            if p.is_nan() {
                bail!("P_max must be a number");
            }
        }
        if self.grid.theta_deg.is_empty() || self.grid.phi_deg.is_empty() {
            bail!("sweep grids must be nonempty");
        }
        if self.designers.is_empty() {
            bail!("designer list is empty");
        }
        if self.grid_points == 0 {
            bail!("grid_points must be at least 1");
        }
        Ok(())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig { solver: self.solver, grid_points: self.grid_points, refine: self.refine }
    }
}

/// Parses `a,b,c` into designers.
pub fn parse_designers(list: &str) -> Result<Vec<Designer>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(|s| Designer::parse(s).map_err(Into::into)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_idempotent() {
        let mut cfg = RunConfig::default();
        cfg.channel = ChannelSpec::Synthetic { reference_coupling_db: -25.0, scatter_db: Some(-12.0) };
        cfg.pmax_dbm = None;
        cfg.designers = vec![Designer::Sequential, Designer::Cbf];
        let text = cfg.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::from_json(r#"{"bits": 3, "solver": {"max_iters": 20}}"#).unwrap();
        assert_eq!(cfg.bits, 3);
        assert_eq!(cfg.solver.max_iters, 20);
        assert_eq!(cfg.solver.feas_tol, SolverSettings::default().feas_tol);
        assert_eq!(cfg.geometry, GeometrySpec::default());
        assert!(RunConfig::from_json(r#"{"bitz": 3}"#).is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut cfg = RunConfig::from_json(r#"{"bits": 3, "pt_dbm": 20}"#).unwrap();
        cfg.apply(Overrides { bits: Some(5), theta_deg: Some(vec![10.0]), ..Default::default() });
        assert_eq!(cfg.bits, 5);
        assert_eq!(cfg.pt_dbm, 20.0);
        assert_eq!(cfg.direction.theta_deg, 10.0);
        assert_eq!(cfg.grid.theta_deg, vec![10.0]);
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        cfg.bits = 0;
        assert!(cfg.validate().is_err());
        cfg.bits = 17;
        assert!(cfg.validate().is_err());
        cfg.bits = 4;
        cfg.grid.phi_deg.clear();
        assert!(cfg.validate().is_err());
        assert!(parse_designers("proposed,ga").is_err());
        assert_eq!(parse_designers("cbf, digital").unwrap(), vec![Designer::Cbf, Designer::Digital]);
    }
}
