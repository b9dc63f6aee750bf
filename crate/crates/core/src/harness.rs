//! Monte-Carlo campaigns over hop count, bandwidth or iteration count, with
//! paired seeding across schemes and deterministic CSV/JSON export.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::draw_realization;
use crate::error::{ConfigError, ExportError, ModelError};
use crate::optimizer::{run_baseline, run_jppbo, Baseline, RunTrajectory};
use crate::scenario::{build_geometry, ScenarioConfig};

pub const CSV_HEADER: [&str; 7] = [
    "scheme",
    "sweep_var",
    "sweep_value",
    "seed",
    "throughput_bps",
    "iters_to_95pct",
    "wall_ms",
];

const SEED_STRIDE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ProposedSingle,
    ProposedMulti,
    Baseline1,
    Baseline2,
    Baseline3,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::ProposedSingle,
        Scheme::ProposedMulti,
        Scheme::Baseline1,
        Scheme::Baseline2,
        Scheme::Baseline3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ProposedSingle => "proposed-single",
            Scheme::ProposedMulti => "proposed-multi",
            Scheme::Baseline1 => "baseline1",
            Scheme::Baseline2 => "baseline2",
            Scheme::Baseline3 => "baseline3",
        }
    }

    fn baseline(self) -> Option<Baseline> {
        match self {
            Scheme::Baseline1 => Some(Baseline::NoIrs),
            Scheme::Baseline2 => Some(Baseline::RelayWithIrs),
            Scheme::Baseline3 => Some(Baseline::PlainRelay),
            _ => None,
        }
    }

    /// One full optimization run of this scheme on the draw for `seed`.
    /// Every scheme consumes the same direct-link draws for a given seed;
    /// the surface layout only changes the deterministic reflected terms.
    pub fn run(self, cfg: &ScenarioConfig, seed: u64) -> Result<RunTrajectory, ModelError> {
        let layout = match self {
            Scheme::ProposedMulti => cfg.with_panels(cfg.multi_panel_layout()),
            _ => cfg.clone(),
        };
        let geom = build_geometry(&layout);
        let real = draw_realization(&geom, &layout, &mut ChaCha8Rng::seed_from_u64(seed));
        match self.baseline() {
            Some(kind) => run_baseline(kind, &real, &layout),
            None => run_jppbo(&real, &layout),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| format!("unknown scheme `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    None,
    /// Number of hops; the network has `hops + 1` nodes.
    Hops,
    /// Total bandwidth in Hz.
    Bandwidth,
    /// Checkpoints along a single trajectory per run.
    Iterations,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::None => "none",
            SweepVar::Hops => "hops",
            SweepVar::Bandwidth => "bandwidth",
            SweepVar::Iterations => "iterations",
        }
    }
}

impl FromStr for SweepVar {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "none" => Ok(SweepVar::None),
            "hops" => Ok(SweepVar::Hops),
            "bandwidth" => Ok(SweepVar::Bandwidth),
            "iterations" => Ok(SweepVar::Iterations),
            other => Err(format!("unknown sweep variable `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub sweep: SweepVar,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub runs: usize,
    pub base_seed: u64,
    /// Record per-run wall time. Off by default so exports are
    /// byte-reproducible.
    pub timing: bool,
}

impl ExperimentPlan {
    pub fn new(schemes: Vec<Scheme>, runs: usize, base_seed: u64) -> Self {
        ExperimentPlan {
            sweep: SweepVar::None,
            values: Vec::new(),
            schemes,
            runs,
            base_seed,
            timing: false,
        }
    }

    pub fn with_sweep(mut self, sweep: SweepVar, values: Vec<f64>) -> Self {
        self.sweep = sweep;
        self.values = values;
        self
    }

    pub fn validate(&self, cfg: &ScenarioConfig) -> Result<(), ConfigError> {
        if self.runs == 0 {
            return Err(ConfigError::invalid("runs", "need at least one run"));
        }
        if self.schemes.is_empty() {
            return Err(ConfigError::invalid("schemes", "need at least one scheme"));
        }
        if self.sweep == SweepVar::None {
            return Ok(());
        }
        if self.values.is_empty() {
            return Err(ConfigError::invalid(
                "values",
                "sweep needs at least one value",
            ));
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ConfigError::invalid(
                "values",
                "must be strictly increasing",
            ));
        }
        let integral = |v: f64| v.fract() == 0.0;
        match self.sweep {
            SweepVar::Hops => {
                if self.values.iter().any(|&v| !(v >= 1.0 && integral(v))) {
                    return Err(ConfigError::invalid(
                        "values",
                        "hop counts must be positive integers",
                    ));
                }
                if cfg.node_power.len() != 1 {
                    return Err(ConfigError::invalid(
                        "node_power",
                        "a hop sweep needs a single uniform power value",
                    ));
                }
            }
            SweepVar::Bandwidth => {
                if self.values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(ConfigError::invalid(
                        "values",
                        "bandwidths must be positive",
                    ));
                }
            }
            SweepVar::Iterations => {
                if self.values.iter().any(|&v| !(v >= 0.0 && integral(v))) {
                    return Err(ConfigError::invalid(
                        "values",
                        "checkpoints must be nonnegative integers",
                    ));
                }
            }
            SweepVar::None => {}
        }
        Ok(())
    }

    fn points(&self) -> Vec<Option<f64>> {
        match self.sweep {
            SweepVar::None | SweepVar::Iterations => vec![None],
            _ => self.values.iter().map(|&v| Some(v)).collect(),
        }
    }

    /// Seed of run `run` at sweep point `point`, shared by all schemes.
    pub fn seed(&self, point: usize, run: usize) -> u64 {
        self.base_seed + point as u64 * SEED_STRIDE + run as u64
    }

    fn scenario_at(&self, cfg: &ScenarioConfig, value: Option<f64>) -> ScenarioConfig {
        let mut c = cfg.clone();
        match (self.sweep, value) {
            (SweepVar::Hops, Some(v)) => c.num_nodes = v as usize + 1,
            (SweepVar::Bandwidth, Some(v)) => c.total_bandwidth = v,
            (SweepVar::Iterations, _) => {
                c.optimizer.max_iters = self.values.last().map_or(0, |&v| v as usize).max(1)
            }
            _ => {}
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub sweep: SweepVar,
    pub sweep_value: Option<f64>,
    pub seed: u64,
    /// `None` marks a failed run.
    pub throughput_bps: Option<f64>,
    pub iters_to_95pct: Option<usize>,
    pub wall_ms: Option<f64>,
}

impl ResultRow {
    pub fn is_error(&self) -> bool {
        self.throughput_bps.is_none()
    }
}

/// Column-wise statistics over the successful rows of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnStats {
    pub throughput_bps: f64,
    pub iters_to_95pct: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub scheme: Scheme,
    pub sweep: SweepVar,
    pub sweep_value: Option<f64>,
    pub mean: ColumnStats,
    pub stderr: ColumnStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunError {
    pub scheme: Scheme,
    pub sweep_value: Option<f64>,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
    #[serde(skip)]
    pub errors: Vec<RunError>,
}

fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

type GroupKey = (Scheme, SweepVar, Option<u64>);

fn group_key(scheme: Scheme, sweep: SweepVar, value: Option<f64>) -> GroupKey {
    (scheme, sweep, value.map(f64::to_bits))
}

impl ResultTable {
    pub fn has_errors(&self) -> bool {
        self.rows.iter().any(ResultRow::is_error)
    }

    /// Aggregates over the current rows, one per (scheme, sweep value) in
    /// order of first appearance.
    pub fn compute_aggregates(&self) -> Vec<Aggregate> {
        let mut keys: Vec<(Scheme, SweepVar, Option<f64>)> = Vec::new();
        for r in &self.rows {
            if !keys
                .iter()
                .any(|k| group_key(k.0, k.1, k.2) == group_key(r.scheme, r.sweep, r.sweep_value))
            {
                keys.push((r.scheme, r.sweep, r.sweep_value));
            }
        }
        keys.into_iter()
            .map(|(scheme, sweep, value)| {
                let ok: Vec<&ResultRow> = self
                    .rows
                    .iter()
                    .filter(|r| {
                        !r.is_error()
                            && group_key(r.scheme, r.sweep, r.sweep_value)
                                == group_key(scheme, sweep, value)
                    })
                    .collect();
                let col = |f: &dyn Fn(&ResultRow) -> f64| {
                    mean_and_stderr(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
                };
                let t = col(&|r| r.throughput_bps.unwrap_or(0.0));
                let i = col(&|r| r.iters_to_95pct.unwrap_or(0) as f64);
                let w = col(&|r| r.wall_ms.unwrap_or(0.0));
                Aggregate {
                    scheme,
                    sweep,
                    sweep_value: value,
                    mean: ColumnStats {
                        throughput_bps: t.0,
                        iters_to_95pct: i.0,
                        wall_ms: w.0,
                    },
                    stderr: ColumnStats {
                        throughput_bps: t.1,
                        iters_to_95pct: i.1,
                        wall_ms: w.1,
                    },
                }
            })
            .collect()
    }

    pub fn aggregate(&self, scheme: Scheme, value: Option<f64>) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| {
            a.scheme == scheme && a.sweep_value.map(f64::to_bits) == value.map(f64::to_bits)
        })
    }

    /// Mean final throughput per sweep point for one scheme, in sweep order.
    pub fn means(&self, scheme: Scheme) -> Vec<f64> {
        self.aggregates
            .iter()
            .filter(|a| a.scheme == scheme)
            .map(|a| a.mean.throughput_bps)
            .collect()
    }

    /// Successful final throughputs for one scheme at one sweep point, in
    /// run order.
    pub fn throughputs(&self, scheme: Scheme, value: Option<f64>) -> Vec<Option<f64>> {
        self.rows
            .iter()
            .filter(|r| {
                r.scheme == scheme && r.sweep_value.map(f64::to_bits) == value.map(f64::to_bits)
            })
            .map(|r| r.throughput_bps)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
        for r in &self.rows {
            w.write_record([
                r.scheme.name().to_string(),
                r.sweep.name().to_string(),
                opt(r.sweep_value),
                r.seed.to_string(),
                opt(r.throughput_bps),
                r.iters_to_95pct.map_or_else(String::new, |x| x.to_string()),
                opt(r.wall_ms),
            ])?;
        }
        for a in &self.aggregates {
            for (label, s) in [("mean", &a.mean), ("stderr", &a.stderr)] {
                w.write_record([
                    a.scheme.name().to_string(),
                    a.sweep.name().to_string(),
                    opt(a.sweep_value),
                    label.to_string(),
                    s.throughput_bps.to_string(),
                    s.iters_to_95pct.to_string(),
                    s.wall_ms.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`ResultTable::write_csv`]. Run errors are not stored in
    /// the file and come back empty.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, ExportError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(ExportError::Malformed(format!(
                "expected header {}",
                CSV_HEADER.join(",")
            )));
        }
        let bad =
            |line: usize, what: &str| ExportError::Malformed(format!("record {line}: {what}"));
        let mut table = ResultTable::default();
        let mut pending: Option<Aggregate> = None;
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let scheme: Scheme = rec[0].parse().map_err(|e: String| bad(line, &e))?;
            let sweep: SweepVar = rec[1].parse().map_err(|e: String| bad(line, &e))?;
            let float = |s: &str| -> Result<Option<f64>, ExportError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(line, "bad number"))
                }
            };
            let sweep_value = float(&rec[2])?;
            let stats = || -> Result<ColumnStats, ExportError> {
                let req = |s: &str| float(s)?.ok_or_else(|| bad(line, "missing statistic"));
                Ok(ColumnStats {
                    throughput_bps: req(&rec[4])?,
                    iters_to_95pct: req(&rec[5])?,
                    wall_ms: req(&rec[6])?,
                })
            };
            match &rec[3] {
                "mean" => {
                    pending = Some(Aggregate {
                        scheme,
                        sweep,
                        sweep_value,
                        mean: stats()?,
                        stderr: stats()?,
                    });
                }
                "stderr" => {
                    let mut agg = pending
                        .take()
                        .ok_or_else(|| bad(line, "stderr without mean"))?;
                    if group_key(agg.scheme, agg.sweep, agg.sweep_value)
                        != group_key(scheme, sweep, sweep_value)
                    {
                        return Err(bad(line, "stderr does not follow its mean"));
                    }
                    agg.stderr = stats()?;
                    table.aggregates.push(agg);
                }
                seed => {
                    let seed = seed.parse().map_err(|_| bad(line, "bad seed"))?;
                    let iters = if rec[5].is_empty() {
                        None
                    } else {
                        Some(
                            rec[5]
                                .parse()
                                .map_err(|_| bad(line, "bad iteration count"))?,
                        )
                    };
                    table.rows.push(ResultRow {
                        scheme,
                        sweep,
                        sweep_value,
                        seed,
                        throughput_bps: float(&rec[4])?,
                        iters_to_95pct: iters,
                        wall_ms: float(&rec[6])?,
                    });
                }
            }
        }
        if pending.is_some() {
            return Err(ExportError::Malformed(
                "trailing mean without stderr".into(),
            ));
        }
        Ok(table)
    }

    pub fn write_json<W: Write>(
        &self,
        out: W,
        cfg: &ScenarioConfig,
        plan: &ExperimentPlan,
    ) -> Result<(), ExportError> {
        #[derive(Serialize)]
        struct Echo<'a> {
            config: &'a ScenarioConfig,
            plan: &'a ExperimentPlan,
            rows: &'a [ResultRow],
            aggregates: &'a [Aggregate],
        }
        let mut out = out;
        serde_json::to_writer_pretty(
            &mut out,
            &Echo {
                config: cfg,
                plan,
                rows: &self.rows,
                aggregates: &self.aggregates,
            },
        )?;
        out.write_all(b"\n")?;
        Ok(())
    }
}

struct Job {
    point: usize,
    value: Option<f64>,
    run: usize,
    scheme: Scheme,
}

/// Every (sweep point, run, scheme) combination, executed in parallel and
/// assembled in job order. Failed runs become error rows.
pub fn run_campaign(
    plan: &ExperimentPlan,
    cfg: &ScenarioConfig,
) -> Result<ResultTable, ConfigError> {
    plan.validate(cfg)?;
    let points = plan.points();
    let mut jobs = Vec::new();
    for (point, &value) in points.iter().enumerate() {
        let scenario = plan.scenario_at(cfg, value);
        scenario.validate()?;
        for run in 0..plan.runs {
            for &scheme in &plan.schemes {
                jobs.push(Job {
                    point,
                    value,
                    run,
                    scheme,
                });
            }
        }
    }
    let outcomes: Vec<(Vec<ResultRow>, Option<RunError>)> = jobs
        .par_iter()
        .map(|job| {
            let scenario = plan.scenario_at(cfg, job.value);
            let seed = plan.seed(job.point, job.run);
            let row = |value: Option<f64>| ResultRow {
                scheme: job.scheme,
                sweep: plan.sweep,
                sweep_value: value,
                seed,
                throughput_bps: None,
                iters_to_95pct: None,
                wall_ms: None,
            };
            match job.scheme.run(&scenario, seed) {
                Ok(traj) => {
                    let iters = Some(traj.iterations_to_95pct());
                    let wall = Some(if plan.timing {
                        traj.wall_time.as_secs_f64() * 1e3
                    } else {
                        0.0
                    });
                    let rows = if plan.sweep == SweepVar::Iterations {
                        plan.values
                            .iter()
                            .map(|&t| ResultRow {
                                throughput_bps: Some(traj.records[t as usize].throughput),
                                iters_to_95pct: iters,
                                wall_ms: wall,
                                ..row(Some(t))
                            })
                            .collect()
                    } else {
                        vec![ResultRow {
                            throughput_bps: Some(traj.final_throughput()),
                            iters_to_95pct: iters,
                            wall_ms: wall,
                            ..row(job.value)
                        }]
                    };
                    (rows, None)
                }
                Err(e) => {
                    let values: Vec<Option<f64>> = if plan.sweep == SweepVar::Iterations {
                        plan.values.iter().map(|&t| Some(t)).collect()
                    } else {
                        vec![job.value]
                    };
                    let err = RunError {
                        scheme: job.scheme,
                        sweep_value: job.value,
                        seed,
                        message: e.to_string(),
                    };
                    (values.into_iter().map(row).collect(), Some(err))
                }
            }
        })
        .collect();
    let mut table = ResultTable::default();
    for (rows, err) in outcomes {
        table.rows.extend(rows);
        table.errors.extend(err);
    }
    // group rows by sweep point, then scheme, keeping run order inside
    let order = |r: &ResultRow| {
        let point = r
            .sweep_value
            .and_then(|v| plan.values.iter().position(|&x| x.to_bits() == v.to_bits()))
            .unwrap_or(0);
        let scheme = plan
            .schemes
            .iter()
            .position(|&s| s == r.scheme)
            .unwrap_or(0);
        (point, scheme)
    };
    table.rows.sort_by_key(order);
    table.aggregates = table.compute_aggregates();
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::IrsPanel;

    fn small() -> ScenarioConfig {
        let mut cfg = ScenarioConfig {
            num_nodes: 4,
            ..ScenarioConfig::default()
        }
        .with_panels(vec![IrsPanel {
            rows: 2,
            cols: 2,
            y_ref: 500.0,
        }]);
        cfg.multi_irs.rows = 1;
        cfg.multi_irs.cols = 1;
        cfg.multi_irs.count = 3;
        cfg.optimizer.max_iters = 5;
        cfg
    }

    fn row(seed: u64, t: f64) -> ResultRow {
        ResultRow {
            scheme: Scheme::Baseline1,
            sweep: SweepVar::Bandwidth,
            sweep_value: Some(1e6),
            seed,
            throughput_bps: Some(t),
            iters_to_95pct: Some(3),
            wall_ms: Some(0.0),
        }
    }

    #[test]
    fn minimal_campaign() {
        let plan = ExperimentPlan::new(vec![Scheme::ProposedSingle], 1, 7);
        let table = run_campaign(&plan, &small()).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.aggregates.len(), 1);
        assert_eq!(table.rows[0].seed, 7);
        assert_eq!(table.aggregates[0].stderr.throughput_bps, 0.0);
    }

    #[test]
    fn seeds_follow_point_and_run() {
        let plan = ExperimentPlan::new(vec![Scheme::Baseline3], 3, 10)
            .with_sweep(SweepVar::Hops, vec![2.0, 3.0]);
        assert_eq!(plan.seed(1, 2), 1_000_012);
        let table = run_campaign(&plan, &small()).unwrap();
        let seeds: Vec<u64> = table.rows.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![10, 11, 12, 1_000_010, 1_000_011, 1_000_012]);
    }

    #[test]
    fn plan_validation() {
        let cfg = small();
        let bad = ExperimentPlan::new(vec![Scheme::Baseline1], 1, 0)
            .with_sweep(SweepVar::Hops, vec![3.0, 2.0]);
        assert_eq!(bad.validate(&cfg).unwrap_err().field(), Some("values"));
        let bad = ExperimentPlan::new(vec![Scheme::Baseline1], 0, 0);
        assert_eq!(bad.validate(&cfg).unwrap_err().field(), Some("runs"));
        let bad = ExperimentPlan::new(vec![Scheme::Baseline1], 1, 0)
            .with_sweep(SweepVar::Bandwidth, vec![]);
        assert!(bad.validate(&cfg).is_err());
        let bad = ExperimentPlan::new(vec![Scheme::Baseline1], 1, 0)
            .with_sweep(SweepVar::Hops, vec![1.5]);
        assert!(bad.validate(&cfg).is_err());
    }

    #[test]
    fn aggregates_recompute() {
        let mut table = ResultTable {
            rows: vec![row(0, 1.0), row(1, 2.0), row(2, 6.0)],
            ..ResultTable::default()
        };
        table.aggregates = table.compute_aggregates();
        let a = &table.aggregates[0];
        assert_eq!(a.mean.throughput_bps, 3.0);
        // sample sd sqrt(7), divided by sqrt(3)
        assert!((a.stderr.throughput_bps - (7.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn error_rows_are_excluded_from_aggregates() {
        let mut failed = row(3, 0.0);
        failed.throughput_bps = None;
        failed.iters_to_95pct = None;
        failed.wall_ms = None;
        let mut table = ResultTable {
            rows: vec![row(0, 4.0), failed],
            ..ResultTable::default()
        };
        table.aggregates = table.compute_aggregates();
        assert!(table.has_errors());
        assert_eq!(table.aggregates[0].mean.throughput_bps, 4.0);
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        ResultTable::default().write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "scheme,sweep_var,sweep_value,seed,throughput_bps,iters_to_95pct,wall_ms\n"
        );
    }

    #[test]
    fn two_rows_three_lines() {
        let table = ResultTable {
            rows: vec![row(0, 1.5), row(1, 2.0)],
            ..ResultTable::default()
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(
            text.lines().nth(1),
            Some("baseline1,bandwidth,1000000,0,1.5,3,0")
        );
    }

    #[test]
    fn csv_roundtrip() {
        let plan = ExperimentPlan::new(vec![Scheme::ProposedMulti, Scheme::Baseline2], 2, 5)
            .with_sweep(SweepVar::Bandwidth, vec![5e5, 2e6]);
        let table = run_campaign(&plan, &small()).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let back = ResultTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.compute_aggregates(), table.aggregates);
    }

    #[test]
    fn malformed_csv_rejected() {
        assert!(ResultTable::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let text = "scheme,sweep_var,sweep_value,seed,throughput_bps,iters_to_95pct,wall_ms\n\
                    baseline9,none,,0,1,1,0\n";
        assert!(ResultTable::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn iteration_checkpoints() {
        let plan = ExperimentPlan::new(vec![Scheme::ProposedSingle], 2, 1)
            .with_sweep(SweepVar::Iterations, vec![0.0, 2.0, 4.0]);
        let table = run_campaign(&plan, &small()).unwrap();
        assert_eq!(table.rows.len(), 6);
        for seed in [1, 2] {
            let t: Vec<f64> = table
                .rows
                .iter()
                .filter(|r| r.seed == seed)
                .map(|r| r.throughput_bps.unwrap())
                .collect();
            assert!(t.windows(2).all(|w| w[1] >= w[0]));
        }
        assert_eq!(table.means(Scheme::ProposedSingle).len(), 3);
    }

    #[test]
    fn json_echoes_config() {
        let plan = ExperimentPlan::new(vec![Scheme::Baseline3], 1, 2);
        let cfg = small();
        let table = run_campaign(&plan, &cfg).unwrap();
        let mut buf = Vec::new();
        table.write_json(&mut buf, &cfg, &plan).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["config"]["num_nodes"], 4);
        assert_eq!(v["rows"][0]["scheme"], "baseline3");
        assert_eq!(v["aggregates"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn campaign_is_reproducible() {
        let plan = ExperimentPlan::new(Scheme::ALL.to_vec(), 3, 11)
            .with_sweep(SweepVar::Hops, vec![2.0, 4.0]);
        let cfg = small();
        let export = || {
            let mut buf = Vec::new();
            run_campaign(&plan, &cfg)
                .unwrap()
                .write_csv(&mut buf)
                .unwrap();
            buf
        };
        assert_eq!(export(), export());
    }
}
