//! Scenario description: physical constants, node and IRS layout, and the
//! flat `key = value` file format used to configure a run.
//!
//! ```text
//! # 9-hop line, single 20x20 surface above the midpoint
//! num_nodes = 10
//! sd_distance = 1000
//! panel = 20,20,500
//! rician_factor = 1.9953
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::ConfigError;
use crate::optimizer::OptimizerParams;

/// -174 dBm/Hz expressed in W/Hz.
pub const DEFAULT_NOISE_PSD: f64 = 3.981_071_705_534_972e-21;

/// 3 dB as a linear ratio.
pub const DEFAULT_RICIAN_FACTOR: f64 = 1.995_262_314_968_879_5;

/// One uniform rectangular array in the y-z plane. The reference element is
/// the bottom-left one, at `(0, y_ref, irs_height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IrsPanel {
    pub rows: usize,
    pub cols: usize,
    pub y_ref: f64,
}

impl IrsPanel {
    pub fn elements(&self) -> usize {
        self.rows * self.cols
    }
}

/// Shape of the multi-surface deployment: `count` panels of `rows x cols`
/// spread evenly along the source-destination line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiIrsLayout {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub num_nodes: usize,
    pub sd_distance: f64,
    pub lateral_offset: f64,
    pub irs_height: f64,
    pub panels: Vec<IrsPanel>,
    pub multi_irs: MultiIrsLayout,
    pub element_spacing: f64,
    pub wavelength: f64,
    pub total_bandwidth: f64,
    pub noise_psd: f64,
    /// Either one uniform value or one value per transmitting node.
    pub node_power: Vec<f64>,
    pub pathloss_ref: f64,
    pub los_exponent: f64,
    pub direct_exponent: f64,
    pub rician_factor: f64,
    pub cycles_per_bit: f64,
    pub chip_coefficient: f64,
    /// Spectral weight given to the source and destination nodes.
    pub terminal_weight: f64,
    pub optimizer: OptimizerParams,
    pub monte_carlo_runs: usize,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_nodes: 10,
            sd_distance: 1000.0,
            lateral_offset: 50.0,
            irs_height: 50.0,
            panels: vec![IrsPanel {
                rows: 20,
                cols: 20,
                y_ref: 500.0,
            }],
            multi_irs: MultiIrsLayout {
                count: 10,
                rows: 10,
                cols: 4,
            },
            element_spacing: 0.05,
            wavelength: 0.1,
            total_bandwidth: 1e6,
            noise_psd: DEFAULT_NOISE_PSD,
            node_power: vec![1.0],
            pathloss_ref: 1e-3,
            los_exponent: 2.0,
            direct_exponent: 3.8,
            rician_factor: DEFAULT_RICIAN_FACTOR,
            cycles_per_bit: 700.0,
            chip_coefficient: 1e-28,
            terminal_weight: 100.0,
            optimizer: OptimizerParams::default(),
            monte_carlo_runs: 100,
            rng_seed: 1,
        }
    }
}

impl ScenarioConfig {
    /// Full-size surfaces and run count: one 100x100 panel, or ten 50x20
    /// panels, and 1000 Monte-Carlo runs.
    pub fn full_scale(mut self) -> Self {
        let y_ref = self.sd_distance / 2.0;
        self.panels = vec![IrsPanel {
            rows: 100,
            cols: 100,
            y_ref,
        }];
        self.multi_irs = MultiIrsLayout {
            count: 10,
            rows: 50,
            cols: 20,
        };
        self.monte_carlo_runs = 1000;
        self
    }

    pub fn hops(&self) -> usize {
        self.num_nodes - 1
    }

    pub fn num_elements(&self) -> usize {
        self.panels.iter().map(IrsPanel::elements).sum()
    }

    /// Total power budget of transmitting node `hop` (0-based).
    pub fn power(&self, hop: usize) -> f64 {
        if self.node_power.len() == 1 {
            self.node_power[0]
        } else {
            self.node_power[hop]
        }
    }

    /// Panels of the multi-surface layout, with reference y-coordinates
    /// `(k-1) L / (K-1)`. A single panel sits above the midpoint.
    pub fn multi_panel_layout(&self) -> Vec<IrsPanel> {
        let k = self.multi_irs.count;
        (0..k)
            .map(|idx| IrsPanel {
                rows: self.multi_irs.rows,
                cols: self.multi_irs.cols,
                y_ref: if k == 1 {
                    self.sd_distance / 2.0
                } else {
                    idx as f64 * self.sd_distance / (k - 1) as f64
                },
            })
            .collect()
    }

    /// Same scenario with a different surface deployment. The panels are not
    /// re-validated: layouts generated by [`Self::multi_panel_layout`] put
    /// surfaces at both endpoints of the line.
    pub fn with_panels(&self, panels: Vec<IrsPanel>) -> Self {
        ScenarioConfig {
            panels,
            ..self.clone()
        }
    }

    /// Same scenario with every surface removed.
    pub fn without_irs(&self) -> Self {
        self.with_panels(Vec::new())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(
                    field,
                    format!("must be positive, got {v}"),
                ))
            }
        }
        if self.num_nodes < 2 {
            return Err(ConfigError::invalid(
                "num_nodes",
                format!(
                    "need at least a source and a destination, got {}",
                    self.num_nodes
                ),
            ));
        }
        positive("sd_distance", self.sd_distance)?;
        positive("lateral_offset", self.lateral_offset)?;
        positive("irs_height", self.irs_height)?;
        positive("element_spacing", self.element_spacing)?;
        positive("wavelength", self.wavelength)?;
        positive("total_bandwidth", self.total_bandwidth)?;
        positive("noise_psd", self.noise_psd)?;
        positive("pathloss_ref", self.pathloss_ref)?;
        positive("rician_factor", self.rician_factor)?;
        positive("cycles_per_bit", self.cycles_per_bit)?;
        positive("chip_coefficient", self.chip_coefficient)?;
        positive("terminal_weight", self.terminal_weight)?;
        if !(self.los_exponent.is_finite() && self.direct_exponent.is_finite()) {
            return Err(ConfigError::invalid(
                "los_exponent",
                "exponents must be finite",
            ));
        }
        match self.node_power.len() {
            1 => {}
            n if n == self.num_nodes - 1 => {}
            n => {
                return Err(ConfigError::invalid(
                    "node_power",
                    format!("expected 1 or {} values, got {n}", self.num_nodes - 1),
                ))
            }
        }
        for &p in &self.node_power {
            positive("node_power", p)?;
        }
        if self.panels.is_empty() {
            return Err(ConfigError::invalid(
                "panel",
                "at least one IRS panel is required",
            ));
        }
        for p in &self.panels {
            if p.rows == 0 || p.cols == 0 {
                return Err(ConfigError::invalid(
                    "panel",
                    "panel dimensions must be nonzero",
                ));
            }
            if !(p.y_ref > 0.0 && p.y_ref < self.sd_distance) {
                return Err(ConfigError::invalid(
                    "panel",
                    format!(
                        "reference y-coordinate {} outside (0, {})",
                        p.y_ref, self.sd_distance
                    ),
                ));
            }
        }
        if self.multi_irs.count == 0 || self.multi_irs.rows == 0 || self.multi_irs.cols == 0 {
            return Err(ConfigError::invalid(
                "multi_irs",
                "layout dimensions must be nonzero",
            ));
        }
        if self.monte_carlo_runs == 0 {
            return Err(ConfigError::invalid(
                "monte_carlo_runs",
                "must be at least 1",
            ));
        }
        self.optimizer.validate()
    }

    /// Apply one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |msg: String| ConfigError::Parse { line: 0, msg };
        let float = |v: &str| -> Result<f64, ConfigError> {
            v.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("`{key}`: {e}")))
        };
        let int = |v: &str| -> Result<usize, ConfigError> {
            v.trim()
                .parse::<usize>()
                .map_err(|e| bad(format!("`{key}`: {e}")))
        };
        match key {
            "num_nodes" => self.num_nodes = int(value)?,
            "sd_distance" => self.sd_distance = float(value)?,
            "lateral_offset" => self.lateral_offset = float(value)?,
            "irs_height" => self.irs_height = float(value)?,
            "panel" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 3 {
                    return Err(bad(format!("`panel` expects Mz,My,y_r, got `{value}`")));
                }
                self.panels.push(IrsPanel {
                    rows: int(parts[0])?,
                    cols: int(parts[1])?,
                    y_ref: float(parts[2])?,
                });
            }
            "multi_irs" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 3 {
                    return Err(bad(format!("`multi_irs` expects K,Mz,My, got `{value}`")));
                }
                self.multi_irs = MultiIrsLayout {
                    count: int(parts[0])?,
                    rows: int(parts[1])?,
                    cols: int(parts[2])?,
                };
            }
            "element_spacing" => self.element_spacing = float(value)?,
            "wavelength" => self.wavelength = float(value)?,
            "total_bandwidth" => self.total_bandwidth = float(value)?,
            "noise_psd" => self.noise_psd = float(value)?,
            "node_power" => {
                self.node_power = value.split(',').map(float).collect::<Result<_, _>>()?
            }
            "pathloss_ref" => self.pathloss_ref = float(value)?,
            "los_exponent" => self.los_exponent = float(value)?,
            "direct_exponent" => self.direct_exponent = float(value)?,
            "rician_factor" => self.rician_factor = float(value)?,
            "cycles_per_bit" => self.cycles_per_bit = float(value)?,
            "chip_coefficient" => self.chip_coefficient = float(value)?,
            "terminal_weight" => self.terminal_weight = float(value)?,
            "monte_carlo_runs" => self.monte_carlo_runs = int(value)?,
            "rng_seed" => {
                self.rng_seed = value
                    .trim()
                    .parse()
                    .map_err(|e| bad(format!("`rng_seed`: {e}")))?
            }
            other => {
                if !self.optimizer.set(other, value).map_err(bad)? {
                    return Err(ConfigError::UnknownKey(other.to_string()));
                }
            }
        }
        Ok(())
    }
}

/// Split a scenario file into `(line, key, value)` triples.
fn parse_lines(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Parse {
                line,
                msg: "empty key".into(),
            });
        }
        out.push((line, key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

/// Build a config from scenario text plus `key=value` overrides. Any `panel`
/// line replaces the default surface; overrides are applied after the file.
pub fn parse_config(
    text: &str,
    overrides: &BTreeMap<String, String>,
) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    let mut panels_seen = false;
    for (line, key, value) in parse_lines(text)? {
        if key == "panel" && !panels_seen {
            cfg.panels.clear();
            panels_seen = true;
        }
        cfg.set(&key, &value).map_err(|e| match e {
            ConfigError::Parse { msg, .. } => ConfigError::Parse { line, msg },
            ConfigError::UnknownKey(k) => ConfigError::Parse {
                line,
                msg: format!("unknown key `{k}`"),
            },
            other => other,
        })?;
    }
    apply_overrides(&mut cfg, overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_overrides(
    cfg: &mut ScenarioConfig,
    overrides: &BTreeMap<String, String>,
) -> Result<(), ConfigError> {
    if overrides.contains_key("panel") {
        cfg.panels.clear();
    }
    for (key, value) in overrides {
        if key == "panel" {
            for spec in value.split(';') {
                cfg.set(key, spec)?;
            }
        } else {
            cfg.set(key, value)?;
        }
    }
    Ok(())
}

/// Read, override and validate a scenario. With no path the built-in
/// defaults are used.
pub fn load_config(
    path: Option<&Path>,
    overrides: &BTreeMap<String, String>,
) -> Result<ScenarioConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    parse_config(&text, overrides)
}

pub type Point3 = [f64; 3];

fn dist(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Materialized coordinates and every distance the channel model needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub node_positions: Vec<Point3>,
    /// Panel-major, then row-major within each panel.
    pub element_positions: Vec<Point3>,
    pub hop_length: f64,
    /// `hop_distances[i]` is the distance between node `i` and `i + 1`.
    pub hop_distances: Vec<f64>,
    /// Node-to-element distances, `num_nodes x num_elements`, row-major.
    node_element: Vec<f64>,
}

impl Geometry {
    pub fn num_nodes(&self) -> usize {
        self.node_positions.len()
    }

    pub fn num_elements(&self) -> usize {
        self.element_positions.len()
    }

    pub fn node_element_distance(&self, node: usize, element: usize) -> f64 {
        self.node_element[node * self.num_elements() + element]
    }

    /// Distances from `node` to every surface element.
    pub fn node_element_row(&self, node: usize) -> &[f64] {
        let m = self.num_elements();
        &self.node_element[node * m..(node + 1) * m]
    }
}

pub fn build_geometry(cfg: &ScenarioConfig) -> Geometry {
    let n = cfg.num_nodes;
    let hop_length = cfg.sd_distance / (n - 1) as f64;
    let node_positions: Vec<Point3> = (0..n)
        .map(|i| [cfg.lateral_offset, i as f64 * hop_length, 0.0])
        .collect();
    let mut element_positions = Vec::with_capacity(cfg.num_elements());
    for panel in &cfg.panels {
        for row in 0..panel.rows {
            for col in 0..panel.cols {
                element_positions.push([
                    0.0,
                    panel.y_ref + col as f64 * cfg.element_spacing,
                    cfg.irs_height + row as f64 * cfg.element_spacing,
                ]);
            }
        }
    }
    let hop_distances = node_positions
        .windows(2)
        .map(|w| dist(&w[0], &w[1]))
        .collect();
    let node_element = node_positions
        .iter()
        .flat_map(|q| element_positions.iter().map(move |e| dist(q, e)))
        .collect();
    Geometry {
        node_positions,
        element_positions,
        hop_length,
        hop_distances,
        node_element,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFERENCE_FILE: &str = "\
# simulation setup
num_nodes = 10
sd_distance = 1000
lateral_offset = 50
irs_height = 50
panel = 100,100,500
total_bandwidth = 1e6
node_power = 1
pathloss_ref = 1e-3
los_exponent = 2
direct_exponent = 3.8
rician_factor = 2
cycles_per_bit = 700
chip_coefficient = 1e-28
";

    fn no_overrides() -> BTreeMap<String, String> {
        BTreeMap::new()
    }

    #[test]
    fn reference_setup_parses() {
        let cfg = parse_config(REFERENCE_FILE, &no_overrides()).unwrap();
        assert_eq!(cfg.num_nodes, 10);
        assert_eq!(cfg.num_elements(), 10_000);
        assert_eq!(cfg.panels[0].y_ref, 500.0);
        assert_eq!(cfg.rician_factor, 2.0);
        assert_eq!(cfg.chip_coefficient, 1e-28);
    }

    #[test]
    fn single_node_rejected() {
        let err = parse_config("num_nodes = 1\n", &no_overrides()).unwrap_err();
        assert_eq!(err.field(), Some("num_nodes"));
    }

    #[test]
    fn panel_outside_line_rejected() {
        let err =
            parse_config("sd_distance = 1000\npanel = 4,4,1200\n", &no_overrides()).unwrap_err();
        assert_eq!(err.field(), Some("panel"));
    }

    #[test]
    fn parse_errors_carry_line() {
        match parse_config("num_nodes = 3\n\nbogus line\n", &no_overrides()) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_config("# c\nnot_a_key = 2\n", &no_overrides()) {
            Err(ConfigError::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("not_a_key"));
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_config("num_nodes = x\n", &no_overrides()) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overrides_apply_and_unknown_rejected() {
        let mut ov = no_overrides();
        ov.insert("num_nodes".into(), "4".into());
        ov.insert("panel".into(), "2,3,100;1,1,900".into());
        let cfg = parse_config(REFERENCE_FILE, &ov).unwrap();
        assert_eq!(cfg.num_nodes, 4);
        assert_eq!(cfg.num_elements(), 7);

        let mut bad = no_overrides();
        bad.insert("warp_factor".into(), "9".into());
        assert!(matches!(
            parse_config("", &bad),
            Err(ConfigError::UnknownKey(k)) if k == "warp_factor"
        ));
    }

    #[test]
    fn per_node_power_length_checked() {
        let err = parse_config("num_nodes = 4\nnode_power = 1,2\n", &no_overrides()).unwrap_err();
        assert_eq!(err.field(), Some("node_power"));
        let cfg = parse_config("num_nodes = 3\nnode_power = 1,2\n", &no_overrides()).unwrap();
        assert_eq!(cfg.power(1), 2.0);
    }

    #[test]
    fn hop_length_and_positions() {
        let cfg = ScenarioConfig::default();
        let g = build_geometry(&cfg);
        assert!((g.hop_length - 111.111_111_111_111_1).abs() < 1e-9);
        assert_eq!(g.node_positions[9], [50.0, 1000.0, 0.0]);
        assert_eq!(g.hop_distances.len(), 9);

        let two = ScenarioConfig {
            num_nodes: 2,
            ..ScenarioConfig::default()
        };
        let g = build_geometry(&two);
        assert_eq!(g.hop_length, 1000.0);
        assert_eq!(g.hop_distances, vec![1000.0]);
    }

    #[test]
    fn reference_element_distance() {
        let cfg = ScenarioConfig::default();
        let g = build_geometry(&cfg);
        assert_eq!(g.element_positions[0], [0.0, 500.0, 50.0]);
        let d = g.node_element_distance(0, 0);
        assert!((d - 255_000f64.sqrt()).abs() < 1e-12);
        assert!((d - 504.975).abs() < 1e-3);
    }

    #[test]
    fn element_order_is_panel_then_row_major() {
        let cfg = ScenarioConfig::default().with_panels(vec![
            IrsPanel {
                rows: 2,
                cols: 3,
                y_ref: 100.0,
            },
            IrsPanel {
                rows: 1,
                cols: 1,
                y_ref: 700.0,
            },
        ]);
        let g = build_geometry(&cfg);
        assert_eq!(g.num_elements(), 7);
        assert_eq!(g.element_positions[1], [0.0, 100.05, 50.0]);
        assert_eq!(g.element_positions[3], [0.0, 100.0, 50.05]);
        assert_eq!(g.element_positions[6], [0.0, 700.0, 50.0]);
    }

    #[test]
    fn multi_layout_spans_line() {
        let cfg = ScenarioConfig::default();
        let panels = cfg.multi_panel_layout();
        assert_eq!(panels.len(), 10);
        assert_eq!(panels[0].y_ref, 0.0);
        assert_eq!(panels[9].y_ref, 1000.0);
        assert_eq!(panels.iter().map(IrsPanel::elements).sum::<usize>(), 400);
        let full = cfg.full_scale();
        assert_eq!(full.num_elements(), 10_000);
        assert_eq!(
            full.multi_panel_layout()
                .iter()
                .map(IrsPanel::elements)
                .sum::<usize>(),
            10_000
        );
    }

    #[test]
    fn distances_match_coordinates() {
        let cfg = ScenarioConfig {
            num_nodes: 6,
            ..ScenarioConfig::default()
        };
        let g = build_geometry(&cfg);
        for i in 0..g.num_nodes() {
            for m in (0..g.num_elements()).step_by(37) {
                let d = dist(&g.node_positions[i], &g.element_positions[m]);
                let stored = g.node_element_distance(i, m);
                assert!(((d - stored) / d).abs() <= 1e-12);
                assert!(stored > 0.0);
            }
        }
        for (i, &d) in g.hop_distances.iter().enumerate() {
            let back = dist(&g.node_positions[i + 1], &g.node_positions[i]);
            assert!(((d - back) / d).abs() <= 1e-12);
        }
        assert_eq!(g, build_geometry(&cfg));
    }
}
