//! The four workflows. Each writes its artifacts under the output directory
//! and returns the process exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use levynoise::suites::{self, existence_sweep, simulated_second_moment, SuiteReport};
use levynoise::verify::{mean_report, replicate, variance_report};
use levynoise::{GreenFunction, McReport, SolverPlan, StreamSeed};
use serde::Serialize;

use crate::config::{check_replicas, LoadedConfig, Suite};
use crate::error::{CliError, EXIT_ACCEPTANCE, EXIT_OK};

type Result<T> = std::result::Result<T, CliError>;

/// Identifies the run in every artifact.
#[derive(Clone, Debug, Serialize)]
pub struct RunStamp {
    pub config_hash: String,
    pub seed: u64,
}

impl RunStamp {
    fn csv_line(&self) -> String {
        format!("# config_hash={} seed={}\n", self.config_hash, self.seed)
    }
}

struct Output {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|source| CliError::Output {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Output {
            path: path.display().to_string(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::validation("output", e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn csv(&mut self, name: &str, stamp: &RunStamp, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = stamp.csv_line().into_bytes();
        body(&mut buf)?;
        self.write(name, &buf)
    }
}

/// What a command produced.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
    pub message: String,
}

fn stamp(cfg: &LoadedConfig) -> Result<RunStamp> {
    Ok(RunStamp {
        config_hash: cfg.hash()?,
        seed: cfg.seed(),
    })
}

#[derive(Debug, Serialize)]
struct Estimate {
    estimate: f64,
    std_error: Option<f64>,
    target: f64,
    z: Option<f64>,
}

impl Estimate {
    fn from_report(r: &McReport, scale: f64) -> Self {
        Self {
            estimate: r.estimate * scale,
            std_error: Some(r.std_error * scale),
            target: r.target * scale,
            z: Some(r.z),
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulateSummary {
    #[serde(flatten)]
    stamp: RunStamp,
    cells: usize,
    cell_volume: f64,
    /// Second moment per unit volume the simulation should carry.
    target_variance_per_volume: f64,
    /// `σ²(ε_J)` removed by dropping small jumps.
    dropped_variance_per_volume: f64,
    mean_per_volume: Estimate,
    variance_per_volume: Estimate,
}

/// One noise field on the configured grid, and per-volume moments estimated
/// from its cells.
pub fn simulate(cfg: &LoadedConfig) -> Result<Outcome> {
    let setup = cfg.run_setup()?;
    let stamp = stamp(cfg)?;
    let noise = levynoise::white_noise::simulate_field(&setup.measure, &setup.scheme, &setup.grid, StreamSeed::new(setup.seed, 0))?;
    let (v, dropped) = simulated_second_moment(&setup.measure, &setup.scheme)?;
    let cell = setup.grid.cell_volume();
    // L(cell) / √|cell| has mean 0 and variance v.
    let y: Vec<f64> = noise.values().iter().map(|l| l / cell.sqrt()).collect();
    let n = y.len();
    let (mean, var) = if n >= levynoise::verify::MIN_REPLICAS {
        let m = mean_report("mean", &y, 0.0)?;
        let s = variance_report("variance", &y, v)?;
        (Estimate::from_report(&m, 1.0 / cell.sqrt()), Estimate::from_report(&s, 1.0))
    } else {
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        let plain = |estimate, target| Estimate {
            estimate,
            std_error: None,
            target,
            z: None,
        };
        (plain(mean / cell.sqrt(), 0.0), plain(var, v))
    };
    let summary = SimulateSummary {
        stamp: stamp.clone(),
        cells: n,
        cell_volume: cell,
        target_variance_per_volume: v,
        dropped_variance_per_volume: dropped,
        mean_per_volume: mean,
        variance_per_volume: var,
    };
    let message = format!(
        "simulated {n} cells: variance per unit volume {:.5} (target {v:.5})",
        summary.variance_per_volume.estimate
    );
    let mut out = Output::new(cfg.out_dir())?;
    out.csv("noise.csv", &stamp, |buf| Ok(noise.write_csv(buf)?))?;
    out.json("simulate.json", &summary)?;
    Ok(Outcome {
        exit_code: EXIT_OK,
        files: out.written,
        message,
    })
}

#[derive(Debug, Serialize)]
struct VerifySummary<'a> {
    #[serde(flatten)]
    stamp: RunStamp,
    pass: bool,
    report: &'a SuiteReport,
}

/// Runs one acceptance suite; exit code 2 when any check fails.
pub fn verify(cfg: &LoadedConfig, suite: Suite) -> Result<Outcome> {
    let report = match suite {
        Suite::White => suites::white_suite(&cfg.white_suite()?)?,
        Suite::SmallJumps => suites::small_jump_suite(&cfg.small_jump_suite()?)?,
        Suite::Colored => suites::colored_suite(&cfg.colored_suite()?)?,
        Suite::Solver => suites::solver_suite(&cfg.solver_suite()?)?,
    };
    let stamp = RunStamp {
        config_hash: cfg.hash()?,
        seed: report.seed,
    };
    let pass = report.pass();
    let mut out = Output::new(cfg.out_dir())?;
    out.json(
        &format!("verify_{}.json", suite.name()),
        &VerifySummary {
            stamp,
            pass,
            report: &report,
        },
    )?;
    Ok(Outcome {
        exit_code: if pass { EXIT_OK } else { EXIT_ACCEPTANCE },
        files: out.written,
        message: report.to_string(),
    })
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    #[serde(flatten)]
    stamp: RunStamp,
    operator: levynoise::OperatorKind,
    horizon: f64,
    /// `I_T` by quadrature.
    variance_it: f64,
    /// Second moment of the discrete scheme at `T`.
    grid_target: f64,
    relative_bias: f64,
    /// `k` in the temperedness check of a tabulated density.
    #[serde(skip_serializing_if = "Option::is_none")]
    tempered_check_exponent: Option<u32>,
    replicas: usize,
    x_mid: Vec<f64>,
    variance: Option<McReport>,
    mean: Option<McReport>,
    pass: Option<bool>,
}

/// One solution path, and with more than one replica the variance of
/// `u(T, x_mid)` against the scheme's second moment.
pub fn solve(cfg: &LoadedConfig) -> Result<Outcome> {
    let setup = cfg.run_setup()?;
    if setup.replicas > 1 {
        check_replicas(setup.replicas)?;
    }
    let stamp = stamp(cfg)?;
    let green = GreenFunction::new(setup.operator, setup.grid.dim())?;
    let (v, _) = simulated_second_moment(&setup.measure, &setup.scheme)?;
    let plan = SolverPlan::new(green, &setup.density, v, &setup.grid, setup.options).map_err(CliError::in_section("density"))?;
    let noise = plan.simulate_noise(&setup.measure, &setup.scheme, StreamSeed::new(setup.seed, 0))?;
    let field = plan.solve(&noise)?;
    let steps = setup.grid.steps();
    let mid = plan.mid_cell();
    let (variance, mean) = if setup.replicas > 1 {
        let probe = plan.probe(&[(steps, mid)])?;
        let xs = replicate(setup.replicas, |i| {
            let noise = plan.simulate_noise(&setup.measure, &setup.scheme, StreamSeed::new(setup.seed, i))?;
            Ok(probe.eval(&noise)[0])
        })?;
        (
            Some(variance_report("var u(T, x_mid)", &xs, plan.grid_targets()[steps])?),
            Some(mean_report("mean u(T, x_mid)", &xs, 0.0)?),
        )
    } else {
        (None, None)
    };
    let pass = variance.as_ref().zip(mean.as_ref()).map(|(a, b)| a.pass && b.pass);
    let summary = SolveSummary {
        stamp: stamp.clone(),
        operator: setup.operator,
        horizon: setup.grid.horizon(),
        variance_it: plan.variance_it().value,
        grid_target: plan.grid_targets()[steps],
        relative_bias: plan.relative_bias(),
        tempered_check_exponent: matches!(setup.density, levynoise::SpectralDensity::Tabulated(_))
            .then(|| levynoise::spectral::tempered_check_exponent(setup.grid.dim())),
        replicas: setup.replicas,
        x_mid: setup.grid.spatial_center(mid),
        variance,
        mean,
        pass,
    };
    let mut message = format!(
        "I_T = {:.6}, grid second moment {:.6} ({:+.2}%)",
        summary.variance_it,
        summary.grid_target,
        100.0 * summary.relative_bias
    );
    if let Some(r) = &summary.variance {
        message.push('\n');
        message.push_str(&r.to_string());
    }
    let mut out = Output::new(cfg.out_dir())?;
    out.csv("solution.csv", &stamp, |buf| Ok(field.write_csv(buf)?))?;
    out.json("solve.json", &summary)?;
    Ok(Outcome {
        exit_code: if pass == Some(false) { EXIT_ACCEPTANCE } else { EXIT_OK },
        files: out.written,
        message,
    })
}

/// Temperedness and solvability of the Riesz density over an `(α, d)` sweep.
pub fn existence(cfg: &LoadedConfig) -> Result<Outcome> {
    let points = cfg.existence_points()?;
    let stamp = stamp(cfg)?;
    let rows = existence_sweep(&points);
    let mut table = String::from("d,alpha,tempered,solvable\n");
    for r in &rows {
        table.push_str(&format!("{},{},{},{}\n", r.d, r.alpha, r.tempered, r.solvable));
    }
    let mut out = Output::new(cfg.out_dir())?;
    out.csv("existence.csv", &stamp, |buf| {
        buf.write_all(table.as_bytes()).map_err(levynoise::Error::Io)?;
        Ok(())
    })?;
    Ok(Outcome {
        exit_code: EXIT_OK,
        files: out.written,
        message: table.trim_end().to_string(),
    })
}

/// Reads `existence.csv` back into rows.
pub fn read_existence(path: &Path) -> Result<Vec<suites::ExistenceRow>> {
    let text = fs::read_to_string(path).map_err(|source| CliError::ConfigIo {
        path: path.display().to_string(),
        source,
    })?;
    let bad = |line: &str| CliError::validation("existence.csv", format!("malformed row `{line}`"));
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with('d'))
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            Ok(suites::ExistenceRow {
                d: f[0].parse().map_err(|_| bad(line))?,
                alpha: f[1].parse().map_err(|_| bad(line))?,
                tempered: f[2].parse().map_err(|_| bad(line))?,
                solvable: f[3].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}
