//! Experiment configuration: a single JSON document describing the problem,
//! the smoother family, the grid and the run parameters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use specreg::bench::NoiseMode;
use specreg::smoothers::{default_grid, HTable};
use specreg::spectral::{decompose_design, SignalKind, SpectrumKind, DEFAULT_RANK_TOL};
use specreg::{
    AlphaFloorRule, AlphaGrid, DecomposedDesign, PenaltyKind, SmootherFamily, SpectralData,
    SpectralModel, Spectrum,
};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub floor: FloorConfig,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub mode: NoiseMode,
    /// Known-σ override for `select`; otherwise taken from the problem.
    #[serde(default)]
    pub sigma2: Option<f64>,
    #[serde(default)]
    pub penalty: PenaltyKind,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bound_constant")]
    pub bound_constant: f64,
    /// Adds the orthogonal residual of a raw design to `σ̂²`.
    #[serde(default)]
    pub include_orthogonal: bool,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn default_gamma() -> f64 {
    specreg::penalty::DEFAULT_GAMMA
}

fn default_replications() -> usize {
    1000
}

fn default_bound_constant() -> f64 {
    1.0
}

/// Exactly one problem source, selected by the `source` tag.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSource {
    /// Design matrix and response as headerless CSV files.
    Matrix {
        x: PathBuf,
        y: Option<PathBuf>,
        #[serde(default = "default_rank_tol")]
        rank_tol: f64,
    },
    /// Spectral coordinates, inline or from a JSON file.
    Spectral(SpectralSpec),
    Generator {
        spectrum: SpectrumKind,
        signal: SignalKind,
        sigma: f64,
    },
}

fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSpec {
    pub file: Option<PathBuf>,
    pub eigenvalues: Option<Vec<f64>>,
    /// Observed spectral coordinates.
    pub y: Option<Vec<f64>>,
    /// True coefficients, for simulation.
    pub coefficients: Option<Vec<f64>>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Cutoff,
    #[default]
    Tikhonov,
    Landweber {
        #[serde(default)]
        tau: Option<f64>,
    },
    Table {
        alphas: Vec<f64>,
        profiles: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Values(Vec<f64>),
    Generated { points: usize },
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig::Generated { points: 50 }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloorConfig {
    #[default]
    Default,
    None,
    MinResidual(f64),
}

impl From<FloorConfig> for AlphaFloorRule {
    fn from(f: FloorConfig) -> Self {
        match f {
            FloorConfig::Default => AlphaFloorRule::Default,
            FloorConfig::None => AlphaFloorRule::None,
            FloorConfig::MinResidual(t) => AlphaFloorRule::MinResidual(t),
        }
    }
}

/// Output file names; relative names are placed under the output directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub decompose: PathBuf,
    pub penalty_table: PathBuf,
    pub select: PathBuf,
    pub bench_report: PathBuf,
    pub bench_replications: PathBuf,
    pub check: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            decompose: "decompose.json".into(),
            penalty_table: "penalty_table.csv".into(),
            select: "select.json".into(),
            bench_report: "bench_report.json".into(),
            bench_replications: "bench_replications.csv".into(),
            check: "check.json".into(),
        }
    }
}

impl OutputPaths {
    pub fn resolve(&self, name: &Path) -> PathBuf {
        self.dir.join(name)
    }
}

/// What a problem source yields once loaded.
pub enum Problem {
    Design {
        design: DecomposedDesign,
        y: Option<Vec<f64>>,
    },
    Spectral {
        spectrum: Spectrum,
        y: Option<Vec<f64>>,
        coefficients: Option<Vec<f64>>,
        sigma: Option<f64>,
    },
}

impl Problem {
    pub fn spectrum(&self) -> &Spectrum {
        match self {
            Problem::Design { design, .. } => &design.spectrum,
            Problem::Spectral { spectrum, .. } => spectrum,
        }
    }

    /// Ground truth for simulation, when the source carries one.
    pub fn model(&self) -> Result<SpectralModel, CliError> {
        match self {
            Problem::Spectral {
                spectrum,
                coefficients: Some(beta),
                sigma: Some(sigma),
                ..
            } => Ok(SpectralModel::new(spectrum.clone(), beta.clone(), *sigma)?),
            _ => Err(CliError::Config(
                "this command needs true coefficients and sigma (generator or spectral source)"
                    .into(),
            )),
        }
    }

    /// Observed data, or `None` when the source has no observation.
    pub fn observed(&self) -> Result<Option<SpectralData>, CliError> {
        match self {
            Problem::Design { design, y: Some(y) } => Ok(Some(design.to_spectral(y)?)),
            Problem::Spectral {
                spectrum, y: Some(y), ..
            } => Ok(Some(SpectralData::new(spectrum.clone(), y.clone())?)),
            _ => Ok(None),
        }
    }

    pub fn sigma2(&self) -> Option<f64> {
        match self {
            Problem::Spectral { sigma: Some(s), .. } => Some(s * s),
            _ => None,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config; relative paths inside it are taken relative to the
    /// config file.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((cfg, base))
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.gamma > 0.0 && self.gamma < 0.25) {
            return Err(CliError::Config(format!(
                "gamma must lie in (0, 1/4), got {}",
                self.gamma
            )));
        }
        if self.replications == 0 {
            return Err(CliError::Config("replications must be >= 1".into()));
        }
        Ok(())
    }

    pub fn family(&self) -> Result<SmootherFamily, CliError> {
        Ok(match &self.family {
            FamilyConfig::Cutoff => SmootherFamily::Cutoff,
            FamilyConfig::Tikhonov => SmootherFamily::Tikhonov,
            FamilyConfig::Landweber { tau } => SmootherFamily::Landweber { tau: *tau },
            FamilyConfig::Table { alphas, profiles } => {
                SmootherFamily::Table(HTable::new(alphas.clone(), profiles.clone())?)
            }
        })
    }

    pub fn grid(&self, family: &SmootherFamily, spectrum: &Spectrum) -> Result<AlphaGrid, CliError> {
        Ok(match &self.grid {
            GridConfig::Values(v) => AlphaGrid::new(v.clone())?,
            GridConfig::Generated { points } => {
                default_grid(family, spectrum, *points, self.floor.into())?
            }
        })
    }

    pub fn problem(&self, base: &Path) -> Result<Problem, CliError> {
        match &self.problem {
            ProblemSource::Matrix { x, y, rank_tol } => {
                let x = read_matrix(&base.join(x))?;
                let design = decompose_design(&x, *rank_tol)?;
                let y = match y {
                    Some(p) => Some(read_vector(&base.join(p))?),
                    None => None,
                };
                Ok(Problem::Design { design, y })
            }
            ProblemSource::Spectral(spec) => {
                let spec = match &spec.file {
                    Some(file) => {
                        if spec.eigenvalues.is_some()
                            || spec.y.is_some()
                            || spec.coefficients.is_some()
                            || spec.sigma.is_some()
                        {
                            return Err(CliError::Config(
                                "spectral source: give either `file` or inline fields, not both"
                                    .into(),
                            ));
                        }
                        let path = base.join(file);
                        let text = fs::read_to_string(&path).map_err(|e| {
                            CliError::Config(format!("cannot read {}: {e}", path.display()))
                        })?;
                        let loaded: SpectralSpec = serde_json::from_str(&text).map_err(|e| {
                            CliError::Config(format!("invalid spectral file {}: {e}", path.display()))
                        })?;
                        if loaded.file.is_some() {
                            return Err(CliError::Config("nested spectral files".into()));
                        }
                        loaded
                    }
                    None => spec.clone(),
                };
                let eigenvalues = spec
                    .eigenvalues
                    .ok_or_else(|| CliError::Config("spectral source needs `eigenvalues`".into()))?;
                Ok(Problem::Spectral {
                    spectrum: Spectrum::new(eigenvalues)?,
                    y: spec.y,
                    coefficients: spec.coefficients,
                    sigma: spec.sigma,
                })
            }
            ProblemSource::Generator {
                spectrum,
                signal,
                sigma,
            } => {
                let spectrum = spectrum.build()?;
                let beta = signal.coefficients(spectrum.effective_rank())?;
                Ok(Problem::Spectral {
                    spectrum,
                    y: None,
                    coefficients: Some(beta),
                    sigma: Some(*sigma),
                })
            }
        }
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn parse_cell(path: &Path, cell: &str) -> Result<f64, CliError> {
    cell.parse::<f64>()
        .map_err(|_| CliError::Config(format!("{}: not a number: {cell:?}", path.display())))
}

/// Headerless numeric CSV, one matrix row per line.
pub fn read_matrix(path: &Path) -> Result<nalgebra::DMatrix<f64>, CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in csv_reader(path)?.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(|c| parse_cell(path, c)).collect::<Result<_, _>>()?);
    }
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if n == 0 || p == 0 {
        return Err(CliError::Config(format!("{}: empty matrix", path.display())));
    }
    Ok(nalgebra::DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// A vector written either as one column or as one row.
pub fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for rec in csv_reader(path)?.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for c in rec.iter() {
            out.push(parse_cell(path, c)?);
        }
    }
    Ok(out)
}
