//! Hyperparameter sweeps over one head family.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use super::config::{ConfigError, ConfigMap, ExperimentConfig};
use super::{run_experiment, sha256_hex, ExperimentReport};
use crate::heads::{BoostedConfig, ForestConfig, HeadSpec, Kernel, LogisticConfig, SvmConfig};
use crate::score::{breakdown_csv, leaderboard_csv, rank, LeaderboardEntry};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid has no points")]
    Empty,
    #[error("all {points} grid points failed; first failure: {first}")]
    AllFailed { points: usize, first: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadFamily {
    Logistic,
    Svm,
    Forest,
    Boosted,
    NaiveBayes,
}

impl FromStr for HeadFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lr" | "logistic" => Ok(HeadFamily::Logistic),
            "svm" => Ok(HeadFamily::Svm),
            "rf" | "forest" => Ok(HeadFamily::Forest),
            "xg" | "boosted" => Ok(HeadFamily::Boosted),
            "nb" | "naive_bayes" => Ok(HeadFamily::NaiveBayes),
            other => Err(format!("unknown head family `{other}` (lr | svm | rf | xg | nb)")),
        }
    }
}

impl HeadFamily {
    fn of(spec: &HeadSpec) -> Self {
        match spec {
            HeadSpec::Logistic(_) => HeadFamily::Logistic,
            HeadSpec::Svm(_) => HeadFamily::Svm,
            HeadSpec::Forest(_) => HeadFamily::Forest,
            HeadSpec::Boosted(_) => HeadFamily::Boosted,
            HeadSpec::NaiveBayes { .. } => HeadFamily::NaiveBayes,
        }
    }
}

/// Swept values for one head family. Lists that do not apply to the
/// family are ignored; an empty `num_iterations` exports no pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub family: HeadFamily,
    pub c: Vec<f64>,
    pub kernels: Vec<Kernel>,
    pub max_depth: Vec<usize>,
    pub alpha: Vec<f64>,
    pub num_iterations: Vec<usize>,
}

pub const DEFAULT_C_GRID: [f64; 4] = [0.001, 0.01, 0.1, 1.0];
pub const DEFAULT_NUM_ITERATIONS: [usize; 3] = [20, 40, 60];

impl GridSpec {
    /// C over {0.001, 0.01, 0.1, 1.0}, all four kernels, tree depth 3 to 20.
    pub fn standard(family: HeadFamily) -> Self {
        GridSpec {
            family,
            c: DEFAULT_C_GRID.to_vec(),
            kernels: Kernel::ALL.to_vec(),
            max_depth: (3..=20).collect(),
            alpha: vec![1.0],
            num_iterations: Vec::new(),
        }
    }

    /// Reads `grid.*` keys and returns the remaining map. `grid.family` is
    /// required; unspecified lists take their [`GridSpec::standard`] values.
    pub fn split_from(mut map: ConfigMap) -> Result<(GridSpec, ConfigMap), ConfigError> {
        let family_raw = map.remove("grid.family").ok_or_else(|| ConfigError::Missing("grid.family".into()))?;
        let family: HeadFamily = family_raw.parse().map_err(|message| ConfigError::InvalidValue {
            key: "grid.family".into(),
            value: family_raw.clone(),
            message,
        })?;
        let mut spec = GridSpec::standard(family);
        if let Some(v) = map.remove("grid.c") {
            spec.c = parse_list("grid.c", &v)?;
        }
        if let Some(v) = map.remove("grid.kernel") {
            spec.kernels = parse_list("grid.kernel", &v)?;
        }
        if let Some(v) = map.remove("grid.max_depth") {
            spec.max_depth = parse_depths(&v)?;
        }
        if let Some(v) = map.remove("grid.alpha") {
            spec.alpha = parse_list("grid.alpha", &v)?;
        }
        if let Some(v) = map.remove("grid.num_iterations") {
            spec.num_iterations = parse_list("grid.num_iterations", &v)?;
        }
        Ok((spec, map))
    }

    /// Reads a config file carrying a `[grid]` section, applies overrides,
    /// and returns the sweep with its base experiment.
    pub fn load(path: &Path, overrides: &[String]) -> Result<(GridSpec, ExperimentConfig), ConfigError> {
        let mut map = ConfigMap::load(path)?;
        for o in overrides {
            map.apply_override(o)?;
        }
        map.resolve_paths(path.parent().unwrap_or(Path::new("")));
        let (spec, rest) = GridSpec::split_from(map)?;
        Ok((spec, ExperimentConfig::from_map(rest)?))
    }

    /// Cartesian product in a fixed order. Parameters not swept come from
    /// `base` when it is of the same family, otherwise from defaults.
    pub fn points(&self, base: &HeadSpec, seed: u64) -> Vec<GridPoint> {
        let same = HeadFamily::of(base) == self.family;
        let heads: Vec<HeadSpec> = match self.family {
            HeadFamily::Logistic => {
                let b = match base {
                    HeadSpec::Logistic(c) if same => *c,
                    _ => LogisticConfig::default(),
                };
                self.c.iter().map(|&c| HeadSpec::Logistic(LogisticConfig { c, ..b })).collect()
            }
            HeadFamily::Svm => {
                let b = match base {
                    HeadSpec::Svm(c) if same => *c,
                    _ => SvmConfig::default(),
                };
                self.kernels
                    .iter()
                    .flat_map(|&kernel| self.c.iter().map(move |&c| HeadSpec::Svm(SvmConfig { c, kernel, ..b })))
                    .collect()
            }
            HeadFamily::Forest => {
                let b = match base {
                    HeadSpec::Forest(c) if same => *c,
                    _ => ForestConfig { seed, ..Default::default() },
                };
                self.max_depth.iter().map(|&max_depth| HeadSpec::Forest(ForestConfig { max_depth, ..b })).collect()
            }
            HeadFamily::Boosted => {
                let b = match base {
                    HeadSpec::Boosted(c) if same => *c,
                    _ => BoostedConfig::default(),
                };
                self.max_depth.iter().map(|&max_depth| HeadSpec::Boosted(BoostedConfig { max_depth, ..b })).collect()
            }
            HeadFamily::NaiveBayes => self.alpha.iter().map(|&alpha| HeadSpec::NaiveBayes { alpha }).collect(),
        };
        let iterations: Vec<Option<usize>> = if self.num_iterations.is_empty() {
            vec![None]
        } else {
            self.num_iterations.iter().map(|&n| Some(n)).collect()
        };
        heads
            .into_iter()
            .flat_map(|head| {
                iterations.iter().map(move |&num_iterations| {
                    let name = match num_iterations {
                        Some(n) => format!("{head}, num_iterations: {n}"),
                        None => head.to_string(),
                    };
                    GridPoint { name, head: head.clone(), num_iterations }
                })
            })
            .collect()
    }

    fn describe(&self) -> String {
        format!("{self:?}")
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// `3..20` (inclusive) or a comma list.
fn parse_depths(value: &str) -> Result<Vec<usize>, ConfigError> {
    match value.split_once("..") {
        Some((lo, hi)) => {
            let bad = |v: &str| ConfigError::InvalidValue {
                key: "grid.max_depth".into(),
                value: value.to_string(),
                message: format!("`{v}` is not a depth"),
            };
            let lo: usize = lo.trim().parse().map_err(|_| bad(lo))?;
            let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(|_| bad(hi))?;
            Ok((lo..=hi).collect())
        }
        None => parse_list("grid.max_depth", value),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// Leaderboard row label, e.g. `RF, max_depth: 9`.
    pub name: String,
    pub head: HeadSpec,
    pub num_iterations: Option<usize>,
}

#[derive(Debug)]
pub struct PointOutcome {
    pub point: GridPoint,
    pub result: Result<ExperimentReport, String>,
}

#[derive(Debug)]
pub struct GridReport {
    /// Holds `leaderboard.csv` and `breakdown.csv`.
    pub dir: PathBuf,
    /// Ranked; failed points last with status `failed`.
    pub leaderboard: Vec<LeaderboardEntry>,
    /// In grid order.
    pub outcomes: Vec<PointOutcome>,
}

/// Runs every point in parallel (runtime measurement is serialized by the
/// cost module). A failing point becomes a `failed` leaderboard row.
pub fn run_grid(grid: &GridSpec, base: &ExperimentConfig) -> Result<GridReport, GridError> {
    let points = grid.points(&base.head, base.seed);
    if points.is_empty() {
        return Err(GridError::Empty);
    }
    let outcomes: Vec<PointOutcome> = points
        .into_par_iter()
        .map(|point| {
            let config = base.with_head(point.head.clone()).with_pair_iterations(point.num_iterations).with_name(&point.name);
            let result = run_experiment(&config).map_err(|e| e.to_string());
            PointOutcome { point, result }
        })
        .collect();
    if outcomes.iter().all(|o| o.result.is_err()) {
        let first = outcomes[0].result.as_ref().err().cloned().unwrap_or_default();
        return Err(GridError::AllFailed { points: outcomes.len(), first });
    }
    let entries = outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(r) => r.leaderboard_entry(),
            Err(e) => LeaderboardEntry::failed(o.point.name.clone(), e.clone()),
        })
        .collect();
    let leaderboard = rank(entries);

    let id = sha256_hex(format!("{}\n{}", base.canonical_text(), grid.describe()).as_bytes());
    let dir = base.out_root.join(format!("grid-{}", &id[..16]));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("leaderboard.csv"), leaderboard_csv(&leaderboard))?;
    let breakdowns: Vec<(String, _)> =
        leaderboard.iter().filter_map(|e| e.breakdown.map(|b| (e.name.clone(), b))).collect();
    fs::write(dir.join("breakdown.csv"), breakdown_csv(&breakdowns))?;
    let failures: String = leaderboard
        .iter()
        .filter_map(|e| e.error.as_ref().map(|err| format!("{}\t{}\n", e.name, err.replace('\n', " "))))
        .collect();
    fs::write(dir.join("failures.tsv"), failures)?;
    Ok(GridReport { dir, leaderboard, outcomes })
}
