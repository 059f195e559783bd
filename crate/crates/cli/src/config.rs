//! The declarative run file and its validation.

use std::fs;
use std::path::{Path, PathBuf};

use levynoise::suites::{ColoredSuiteConfig, SmallJumpSuiteConfig, SolverSuiteConfig, WhiteSuiteConfig};
use levynoise::{
    GridSpec, JumpMeasure, JumpMeasureKind, LayerScheme, OperatorKind, SmallJumpPolicy, SolverOptions, SpectralDensity,
    TabulatedDensity, TestFunction,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Replicas used by `solve` and `simulate` when none are given.
pub const DEFAULT_RUN_REPLICAS: usize = 1;
pub const DEFAULT_SEED: u64 = 1;

/// Sweep offsets `α − d` used by `existence` when the file gives none.
pub const DEFAULT_OFFSETS: [f64; 6] = [-2.5, -2.1, -1.9, -1.0, -0.1, 0.5];

/// The run file as written. Every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    pub operator: Option<OperatorKind>,
    pub measure: Option<JumpMeasureKind>,
    pub scheme: Option<SchemeSpec>,
    pub density: Option<DensitySpec>,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub solve: SolveSection,
    #[serde(default)]
    pub existence: ExistenceSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    /// Dyadic thresholds `2^{-j}`, `j = 0..=levels`.
    pub levels: Option<usize>,
    pub thresholds: Option<Vec<f64>>,
    #[serde(default)]
    pub small_jumps: SmallJumpPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Riesz {
        alpha: f64,
        dim: Option<usize>,
    },
    Flat {
        dim: Option<usize>,
    },
    /// CSV rows `ξ_1..ξ_d, Re h, Im h`; relative paths resolve against the
    /// config file.
    Tabulated {
        path: PathBuf,
        tail_exponent: Option<f64>,
    },
}

/// The cube `[min, max]^dim` times `[0, horizon]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub dim: usize,
    pub min: f64,
    pub max: f64,
    pub cells: usize,
    pub horizon: f64,
    pub steps: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            dim: 1,
            min: -4.0,
            max: 4.0,
            cells: 128,
            horizon: 1.0,
            steps: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    White,
    SmallJumps,
    Colored,
    Solver,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::White => "white",
            Suite::SmallJumps => "small_jumps",
            Suite::Colored => "colored",
            Suite::Solver => "solver",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub suite: Option<Suite>,
    pub coarse_levels: Option<usize>,
    pub fine_levels: Option<usize>,
    pub test_function: Option<TestFunction>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub padding: Option<f64>,
    pub bias_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExistenceSection {
    pub dims: Option<Vec<usize>>,
    /// `α − d` for every `d`.
    pub offsets: Option<Vec<f64>>,
    /// Absolute `α`, used for every `d` in addition to the offsets.
    pub alphas: Option<Vec<f64>>,
}

/// Scalar fields that flags may override.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

/// A parsed run file together with where it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::ConfigIo {
            path: path.display().to_string(),
            source,
        })?;
        let config = toml::from_str(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(Self {
            config: toml::from_str(text)?,
            base_dir: PathBuf::from("."),
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        let c = &mut self.config;
        c.seed = o.seed.or(c.seed);
        c.replicas = o.replicas.or(c.replicas);
        c.threads = o.threads.or(c.threads);
        c.out = o.out.clone().or(c.out.take());
    }

    pub fn seed(&self) -> u64 {
        self.config.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.config.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn threads(&self) -> Result<Option<usize>> {
        match self.config.threads {
            Some(0) => Err(CliError::validation("threads", "need at least one thread")),
            t => Ok(t),
        }
    }

    /// SHA-256 over the canonical JSON of the effective config and the bytes
    /// of any tabulated density. Output location and thread count are not
    /// part of it.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_vec(&self.config).map_err(|e| CliError::validation("config", e.to_string()))?;
        let mut hasher = Sha256::new();
        hasher.update(&json);
        if let Some(DensitySpec::Tabulated { path, .. }) = &self.config.density {
            let path = self.base_dir.join(path);
            let bytes = fs::read(&path).map_err(|source| CliError::ConfigIo {
                path: path.display().to_string(),
                source,
            })?;
            hasher.update(&bytes);
        }
        Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let g = self.config.grid.clone().unwrap_or_default();
        GridSpec::cube(g.dim, g.min, g.max, g.cells, g.horizon, g.steps).map_err(CliError::in_section("grid"))
    }

    fn grid_dim(&self) -> usize {
        self.config.grid.as_ref().map_or(1, |g| g.dim)
    }

    pub fn measure(&self) -> Result<Option<JumpMeasure>> {
        self.config
            .measure
            .map(|k| JumpMeasure::new(k).map_err(CliError::in_section("measure")))
            .transpose()
    }

    pub fn scheme(&self) -> Result<Option<LayerScheme>> {
        let Some(s) = &self.config.scheme else {
            return Ok(None);
        };
        let scheme = match (s.levels, &s.thresholds) {
            (Some(levels), None) => LayerScheme::dyadic(levels, s.small_jumps),
            (None, Some(t)) => LayerScheme::new(t.clone(), s.small_jumps).map_err(CliError::in_section("scheme"))?,
            _ => return Err(CliError::validation("scheme", "give exactly one of `levels` and `thresholds`")),
        };
        Ok(Some(scheme))
    }

    pub fn density(&self) -> Result<Option<SpectralDensity>> {
        let Some(spec) = &self.config.density else {
            return Ok(None);
        };
        let section = CliError::in_section("density");
        let h = match spec {
            DensitySpec::Riesz { alpha, dim } => SpectralDensity::riesz(*alpha, dim.unwrap_or(self.grid_dim())).map_err(section)?,
            DensitySpec::Flat { dim } => SpectralDensity::flat(dim.unwrap_or(self.grid_dim())).map_err(section)?,
            DensitySpec::Tabulated { path, tail_exponent } => {
                let full = self.base_dir.join(path);
                let file = fs::File::open(&full).map_err(|source| CliError::ConfigIo {
                    path: full.display().to_string(),
                    source,
                })?;
                SpectralDensity::Tabulated(TabulatedDensity::read_csv(file, *tail_exponent).map_err(section)?)
            }
        };
        Ok(Some(h))
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        let d = SolverOptions::default();
        let opts = SolverOptions {
            padding: self.config.solve.padding.unwrap_or(d.padding),
            bias_tol: self.config.solve.bias_tol.unwrap_or(d.bias_tol),
        };
        if !(opts.padding >= 2.0 && opts.padding.is_finite()) {
            return Err(CliError::validation("solve.padding", format!("must be at least 2, got {}", opts.padding)));
        }
        if !(opts.bias_tol > 0.0 && opts.bias_tol.is_finite()) {
            return Err(CliError::validation("solve.bias_tol", format!("must be positive, got {}", opts.bias_tol)));
        }
        Ok(opts)
    }

    /// Replicas for a Monte Carlo suite; at least the reporting minimum.
    fn suite_replicas(&self, default: usize) -> Result<usize> {
        let n = self.config.replicas.unwrap_or(default);
        check_replicas(n)?;
        Ok(n)
    }

    pub fn white_suite(&self) -> Result<WhiteSuiteConfig> {
        let d = WhiteSuiteConfig::default();
        Ok(WhiteSuiteConfig {
            measure: self.measure()?.unwrap_or(d.measure),
            scheme: self.scheme()?.unwrap_or(d.scheme),
            replicas: self.suite_replicas(d.replicas)?,
            seed: self.config.seed.unwrap_or(d.seed),
        })
    }

    pub fn small_jump_suite(&self) -> Result<SmallJumpSuiteConfig> {
        let d = SmallJumpSuiteConfig::default();
        let beta = match self.config.measure {
            None => d.beta,
            Some(JumpMeasureKind::PowerLaw { beta }) => {
                JumpMeasure::power_law(beta).map_err(CliError::in_section("measure"))?;
                beta
            }
            Some(_) => return Err(CliError::validation("measure.kind", "the small_jumps suite needs a power_law measure")),
        };
        let coarse = self.config.verify.coarse_levels.unwrap_or(d.coarse_levels);
        let fine = self.config.verify.fine_levels.unwrap_or(d.fine_levels);
        if coarse >= fine {
            return Err(CliError::validation(
                "verify.fine_levels",
                format!("must exceed coarse_levels ({coarse}), got {fine}"),
            ));
        }
        Ok(SmallJumpSuiteConfig {
            beta,
            coarse_levels: coarse,
            fine_levels: fine,
            replicas: self.suite_replicas(d.replicas)?,
            seed: self.config.seed.unwrap_or(d.seed),
        })
    }

    /// The suites need a box symmetric about the origin.
    fn symmetric_box(&self) -> Result<Option<GridSection>> {
        let Some(g) = self.config.grid.clone() else {
            return Ok(None);
        };
        self.grid()?;
        if g.min != -g.max {
            return Err(CliError::validation(
                "grid.min",
                format!("suites need a box symmetric about 0, got [{}, {}]", g.min, g.max),
            ));
        }
        Ok(Some(g))
    }

    fn check_density_dim(&self, h: &SpectralDensity) -> Result<()> {
        if let Some(g) = &self.config.grid {
            if g.dim != h.dim() {
                return Err(CliError::validation(
                    "density.dim",
                    format!("density has dimension {} but the grid has {}", h.dim(), g.dim),
                ));
            }
        }
        Ok(())
    }

    pub fn colored_suite(&self) -> Result<ColoredSuiteConfig> {
        let d = ColoredSuiteConfig::default();
        let density = self.density()?.unwrap_or(d.density);
        self.check_density_dim(&density)?;
        let test_function = self.config.verify.test_function.clone().unwrap_or(d.test_function);
        if test_function.dim() != density.dim() {
            return Err(CliError::validation(
                "verify.test_function",
                format!("test function has dimension {} but the density has {}", test_function.dim(), density.dim()),
            ));
        }
        let mut cfg = ColoredSuiteConfig {
            measure: self.measure()?.unwrap_or(d.measure),
            scheme: self.scheme()?.unwrap_or(d.scheme),
            density,
            test_function,
            replicas: self.suite_replicas(d.replicas)?,
            seed: self.config.seed.unwrap_or(d.seed),
            ..d
        };
        if let Some(g) = self.symmetric_box()? {
            if g.steps % 20 != 0 {
                return Err(CliError::validation(
                    "grid.steps",
                    format!("the colored suite reads X_t at T/4, T/2 and kT/5, so steps must be a multiple of 20, got {}", g.steps),
                ));
            }
            cfg.half_width = g.max;
            cfg.cells = g.cells;
            cfg.horizon = g.horizon;
            cfg.steps = g.steps;
        }
        Ok(cfg)
    }

    pub fn solver_suite(&self) -> Result<SolverSuiteConfig> {
        let d = SolverSuiteConfig::default();
        let density = self.density()?.unwrap_or(d.density);
        self.check_density_dim(&density)?;
        let mut cfg = SolverSuiteConfig {
            measure: self.measure()?.unwrap_or(d.measure),
            scheme: self.scheme()?.unwrap_or(d.scheme),
            density,
            operators: self.config.operator.map_or(d.operators, |k| vec![k]),
            replicas: self.suite_replicas(d.replicas)?,
            seed: self.config.seed.unwrap_or(d.seed),
            options: self.solver_options()?,
            ..d
        };
        if let Some(g) = self.symmetric_box()? {
            cfg.half_width = g.max;
            cfg.cells = g.cells;
            cfg.horizon = g.horizon;
            cfg.steps = g.steps;
        }
        Ok(cfg)
    }

    /// Everything `simulate` and `solve` need, validated together.
    pub fn run_setup(&self) -> Result<RunSetup> {
        let grid = self.grid()?;
        let density = self.density()?.unwrap_or(SpectralDensity::flat(grid.dim())?);
        if density.dim() != grid.dim() {
            return Err(CliError::validation(
                "density.dim",
                format!("density has dimension {} but the grid has {}", density.dim(), grid.dim()),
            ));
        }
        if !levynoise::spectral::is_tempered(&density) {
            return Err(CliError::validation(
                "density",
                format!(
                    "tabulated density is not tempered: ∫(1+|ξ|²)^-{} |h|² dξ is not finite",
                    levynoise::spectral::tempered_check_exponent(density.dim())
                ),
            ));
        }
        Ok(RunSetup {
            measure: self.measure()?.unwrap_or(JumpMeasure::two_point(1.0, 1.0)?),
            scheme: self.scheme()?.unwrap_or(LayerScheme::dyadic(8, SmallJumpPolicy::Drop)),
            density,
            operator: self.config.operator.unwrap_or(OperatorKind::Heat),
            options: self.solver_options()?,
            replicas: self.config.replicas.unwrap_or(DEFAULT_RUN_REPLICAS),
            seed: self.seed(),
            grid,
        })
    }

    /// `(d, α)` pairs of the existence sweep.
    pub fn existence_points(&self) -> Result<Vec<(usize, f64)>> {
        let e = &self.config.existence;
        let dims = e.dims.clone().unwrap_or_else(|| vec![1, 2, 3]);
        if dims.is_empty() || dims.contains(&0) {
            return Err(CliError::validation("existence.dims", "need one or more dimensions, each at least 1"));
        }
        let offsets = match (&e.offsets, &e.alphas) {
            (None, None) => DEFAULT_OFFSETS.to_vec(),
            (o, _) => o.clone().unwrap_or_default(),
        };
        let alphas = e.alphas.clone().unwrap_or_default();
        if let Some(bad) = offsets.iter().chain(&alphas).find(|a| !a.is_finite()) {
            return Err(CliError::validation("existence", format!("α values must be finite, got {bad}")));
        }
        let mut points = Vec::new();
        for &d in &dims {
            // Rounded so `d + offset` prints as written.
            points.extend(offsets.iter().map(|o| (d, ((d as f64 + o) * 1e12).round() / 1e12)));
            points.extend(alphas.iter().map(|&a| (d, a)));
        }
        Ok(points)
    }
}

#[derive(Clone, Debug)]
pub struct RunSetup {
    pub measure: JumpMeasure,
    pub scheme: LayerScheme,
    pub density: SpectralDensity,
    pub operator: OperatorKind,
    pub options: SolverOptions,
    pub grid: GridSpec,
    pub replicas: usize,
    pub seed: u64,
}

pub fn check_replicas(n: usize) -> Result<()> {
    if n < levynoise::verify::MIN_REPLICAS {
        return Err(CliError::validation(
            "replicas",
            format!(
                "{n} replicas is below the minimum of {} needed for a standard error",
                levynoise::verify::MIN_REPLICAS
            ),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_valid() {
        let c = LoadedConfig::parse("").unwrap();
        assert_eq!(c.seed(), DEFAULT_SEED);
        assert!(c.run_setup().is_ok());
    }

    #[test]
    fn riesz_at_dimension_is_rejected_as_untempered() {
        let c = LoadedConfig::parse("[density]\nkind = \"riesz\"\nalpha = 1.0\n").unwrap();
        let err = c.run_setup().unwrap_err().to_string();
        assert!(err.starts_with("density.alpha"), "{err}");
        assert!(err.contains("tempered"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(LoadedConfig::parse("sed = 3\n").is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut c = LoadedConfig::parse("seed = 3\nreplicas = 500\n").unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            ..Default::default()
        });
        assert_eq!(c.seed(), 9);
        assert_eq!(c.config.replicas, Some(500));
    }

    #[test]
    fn hash_ignores_output_location() {
        let mut a = LoadedConfig::parse("seed = 3\n").unwrap();
        let b = a.clone();
        a.apply(&Overrides {
            out: Some("elsewhere".into()),
            threads: Some(4),
            ..Default::default()
        });
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        a.apply(&Overrides {
            seed: Some(4),
            ..Default::default()
        });
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn scheme_needs_exactly_one_form() {
        let c = LoadedConfig::parse("[scheme]\nlevels = 3\nthresholds = [1.0, 0.5]\n").unwrap();
        assert!(c.scheme().is_err());
        let c = LoadedConfig::parse("[scheme]\nthresholds = [1.0, 0.25]\nsmall_jumps = \"gaussian_substitute\"\n").unwrap();
        let s = c.scheme().unwrap().unwrap();
        assert_eq!(s.terminal(), 0.25);
    }

    #[test]
    fn too_few_replicas_are_refused() {
        let c = LoadedConfig::parse("replicas = 10\n").unwrap();
        let err = c.white_suite().unwrap_err();
        assert!(err.to_string().contains("below the minimum"));
    }

    #[test]
    fn colored_suite_needs_compatible_steps() {
        let c = LoadedConfig::parse("[grid]\nmin = -10.0\nmax = 10.0\nsteps = 50\n").unwrap();
        assert!(c.colored_suite().unwrap_err().to_string().starts_with("grid.steps"));
        let c = LoadedConfig::parse("[grid]\nmin = -10.0\nmax = 10.0\nsteps = 40\n").unwrap();
        assert_eq!(c.colored_suite().unwrap().steps, 40);
    }

    #[test]
    fn default_existence_sweep() {
        let c = LoadedConfig::parse("").unwrap();
        let pts = c.existence_points().unwrap();
        assert_eq!(pts.len(), 18);
        assert_eq!(pts[0], (1, -1.5));
        assert_eq!(pts[17], (3, 3.5));
        assert_eq!(pts[2], (1, -0.9));
    }

    #[test]
    fn measure_section_parses_by_variant_name() {
        let c = LoadedConfig::parse("[measure]\nkind = \"power_law\"\nbeta = 1.5\n").unwrap();
        assert_eq!(c.measure().unwrap().unwrap().kind(), &JumpMeasureKind::PowerLaw { beta: 1.5 });
        let c = LoadedConfig::parse("[measure]\nkind = \"two_point\"\nrate = -1.0\nsize = 1.0\n").unwrap();
        assert!(c.measure().unwrap_err().to_string().starts_with("measure."));
    }
}
