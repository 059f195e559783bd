//! Space-time Lévy white noise on a grid.
//!
//! For each layer `Γ_j` a Poisson number of jumps with intensity
//! `ν(Γ_j) · |box|` is scattered uniformly over the cells, and every cell is
//! compensated by `Δ · m_j`, so `L(cell)` is a centered infinitely divisible
//! variable with `E L(A) L(B) = v |A ∩ B|`.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::grid::GridSpec;
use crate::levy::{layer_stats, poisson_count, JumpMeasure, LayerScheme, SmallJumpPolicy};
use crate::rng::StreamSeed;

/// Default cap on the memory a single field may allocate.
pub const DEFAULT_MAX_BYTES: usize = 2 << 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseProvenance {
    pub measure: JumpMeasure,
    pub scheme: LayerScheme,
    pub seed: StreamSeed,
}

/// `L(cell)` for every cell of a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseGrid {
    grid: GridSpec,
    values: Vec<f64>,
    provenance: Option<NoiseProvenance>,
}

impl NoiseGrid {
    /// Wraps externally produced increments (e.g. a zero field in tests).
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        Ok(Self {
            grid,
            values,
            provenance: None,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn provenance(&self) -> Option<&NoiseProvenance> {
        self.provenance.as_ref()
    }

    /// Increments of time slice `k` (all spatial cells).
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.spatial_cells();
        &self.values[k * n..(k + 1) * n]
    }
}

/// Simulates the noise on `grid`; deterministic in `seed`.
pub fn simulate_field(
    nu: &JumpMeasure,
    scheme: &LayerScheme,
    grid: &GridSpec,
    seed: impl Into<StreamSeed>,
) -> Result<NoiseGrid> {
    simulate_field_with_limit(nu, scheme, grid, seed, DEFAULT_MAX_BYTES)
}

pub fn simulate_field_with_limit(
    nu: &JumpMeasure,
    scheme: &LayerScheme,
    grid: &GridSpec,
    seed: impl Into<StreamSeed>,
    max_bytes: usize,
) -> Result<NoiseGrid> {
    let seed = seed.into();
    let cells = grid.cells();
    let bytes = cells.saturating_mul(std::mem::size_of::<f64>());
    if bytes > max_bytes {
        return Err(Error::Resource(format!(
            "noise grid needs {bytes} bytes for {cells} cells, cap is {max_bytes}"
        )));
    }
    let mut rng = seed.rng();
    let mut values = vec![0.0; cells];
    fill_noise(nu, scheme, grid, &mut rng, &mut values)?;
    Ok(NoiseGrid {
        grid: grid.clone(),
        values,
        provenance: Some(NoiseProvenance {
            measure: *nu,
            scheme: scheme.clone(),
            seed,
        }),
    })
}

fn fill_noise<R: Rng + ?Sized>(
    nu: &JumpMeasure,
    scheme: &LayerScheme,
    grid: &GridSpec,
    rng: &mut R,
    values: &mut [f64],
) -> Result<()> {
    let cells = values.len();
    let delta = grid.cell_volume();
    let volume = grid.volume();
    let mut compensation = 0.0;
    for j in 0..=scheme.last_layer() {
        let stats = layer_stats(nu, scheme, j)?;
        if stats.rate == 0.0 {
            continue;
        }
        let (lo, hi) = scheme.band(j)?;
        let count = poisson_count(stats.rate * volume, rng)?;
        for _ in 0..count {
            let cell = rng.random_range(0..cells);
            values[cell] += nu.sample_in_band(lo, hi, rng);
        }
        compensation += delta * stats.mean;
    }
    if compensation != 0.0 {
        for v in values.iter_mut() {
            *v -= compensation;
        }
    }
    if scheme.small_jumps() == SmallJumpPolicy::GaussianSubstitute {
        let sigma2 = nu.small_jump_variance(scheme.terminal())?;
        if sigma2 > 0.0 {
            let sd = (sigma2 * delta).sqrt();
            for v in values.iter_mut() {
                let g: f64 = StandardNormal.sample(rng);
                *v += sd * g;
            }
        }
    }
    Ok(())
}

/// Discrete `L(φ) = Σ_cells φ(cell) L(cell)`.
pub fn integrate(noise: &NoiseGrid, phi: &[f64]) -> Result<f64> {
    noise.grid.check_len(phi.len())?;
    Ok(phi.iter().zip(&noise.values).map(|(p, l)| p * l).sum())
}

/// `exp{ Σ_cells Δ Ψ(u φ(cell)) }`, the characteristic function of `L(φ)`
/// for a grid-constant `φ`.
pub fn char_functional(nu: &JumpMeasure, grid: &GridSpec, phi: &[f64], u: f64) -> Result<Complex64> {
    grid.check_len(phi.len())?;
    let delta = grid.cell_volume();
    let mut cache: HashMap<u64, Complex64> = HashMap::new();
    let mut exponent = Complex64::new(0.0, 0.0);
    for &p in phi {
        let arg = u * p;
        let psi = match cache.get(&arg.to_bits()) {
            Some(v) => *v,
            None => {
                let v = nu.cumulant(arg)?;
                cache.insert(arg.to_bits(), v);
                v
            }
        };
        exponent += psi;
    }
    Ok((exponent * delta).exp())
}

/// `v Σ_cells Δ φ(cell) ψ(cell)`.
pub fn cov_white(grid: &GridSpec, phi: &[f64], psi: &[f64], v: f64) -> Result<f64> {
    grid.check_len(phi.len())?;
    grid.check_len(psi.len())?;
    let dot: f64 = phi.iter().zip(psi).map(|(a, b)| a * b).sum();
    Ok(v * grid.cell_volume() * dot)
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    grid: GridSpec,
    provenance: Option<NoiseProvenance>,
}

const BINARY_MAGIC: &[u8; 8] = b"LVYNOISE";
const CSV_TITLE: &str = "# levynoise noise grid";

impl NoiseGrid {
    /// CSV dump in storage order: `t,x1,..,xd,value` at cell centers, with
    /// the grid and provenance as JSON comment lines on top.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let header = DumpHeader {
            grid: self.grid.clone(),
            provenance: self.provenance.clone(),
        };
        writeln!(w, "{CSV_TITLE}")?;
        writeln!(w, "# header: {}", to_json(&header)?)?;
        let cols: Vec<String> = (1..=self.grid.dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "t,{},value", cols.join(","))?;
        let n = self.grid.spatial_cells();
        let centers: Vec<Vec<f64>> = (0..n).map(|m| self.grid.spatial_center(m)).collect();
        for k in 0..self.grid.steps() {
            let t = self.grid.time_center(k);
            for (m, x) in centers.iter().enumerate() {
                write!(w, "{t:e}")?;
                for xi in x {
                    write!(w, ",{xi:e}")?;
                }
                writeln!(w, ",{:e}", self.values[k * n + m])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let mut header: Option<DumpHeader> = None;
        let mut values = Vec::new();
        for line in &mut lines {
            let line = line?;
            if let Some(json) = line.strip_prefix("# header: ") {
                header = Some(serde_json::from_str(json).map_err(|e| Error::Data(e.to_string()))?);
            } else if line.starts_with('#') || line.starts_with('t') {
                continue;
            } else if !line.trim().is_empty() {
                let last = line.rsplit(',').next().unwrap_or("");
                values.push(
                    last.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Data(format!("bad value `{last}`: {e}")))?,
                );
            }
        }
        let header = header.ok_or_else(|| Error::Data("missing `# header:` line".into()))?;
        header.grid.check_len(values.len())?;
        Ok(Self {
            grid: header.grid,
            values,
            provenance: header.provenance,
        })
    }

    /// Binary dump: magic, little-endian header length, JSON header, then
    /// the cell values as little-endian f64 in storage order.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let header = to_json(&DumpHeader {
            grid: self.grid.clone(),
            provenance: self.provenance.clone(),
        })?;
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Data("not a levynoise binary dump".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: DumpHeader = serde_json::from_slice(&json).map_err(|e| Error::Data(e.to_string()))?;
        let mut values = Vec::with_capacity(header.grid.cells());
        let mut buf = [0u8; 8];
        for _ in 0..header.grid.cells() {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Ok(Self {
            grid: header.grid,
            values,
            provenance: header.provenance,
        })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        self.write_binary(std::fs::File::create(path)?)
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Data(e.to_string()))
}

/// Indicator of the box `[t0, t1] × Π [lo_i, hi_i]` sampled at cell centers.
pub fn box_indicator(grid: &GridSpec, t0: f64, t1: f64, lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    if lo.len() != grid.dim() || hi.len() != grid.dim() {
        return Err(Error::Dimension {
            expected: grid.dim(),
            actual: lo.len().min(hi.len()),
        });
    }
    if !(t1 > t0) || lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
        return Err(param("box", "box must have positive extent on every axis"));
    }
    Ok(grid.sample(|t, x| {
        let inside = t > t0 && t < t1 && x.iter().zip(lo.iter().zip(hi)).all(|(xi, (a, b))| xi > a && xi < b);
        if inside {
            1.0
        } else {
            0.0
        }
    }))
}
