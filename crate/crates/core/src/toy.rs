//! Synthetic labeled dataset: small Lennard-Jones clusters with per-atom
//! energy labels and analytic forces.
//!
//! # Dataset text format
//!
//! Records are concatenated with no file header. Each record is
//!
//! ```text
//! n_atoms
//! species x y z fx fy fz      (n_atoms lines)
//! per_atom_energy
//! ```
//!
//! Floats are written in scientific notation with 17 significant digits so
//! that every value parses back bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Pairs closer than this (in Å) are rejected outright.
pub const HARD_FLOOR: f64 = 1e-3;

/// Placement attempts per atom before generation gives up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

pub type Vec3 = [f64; 3];

/// Well depth (eV) and zero-crossing distance (Å) for one species.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Species {
    pub epsilon: f64,
    pub sigma: f64,
}

/// Per-species Lennard-Jones parameters with Lorentz-Berthelot mixing.
#[derive(Debug, Clone, PartialEq)]
pub struct LjParams {
    pub species: Vec<Species>,
}

impl Default for LjParams {
    /// Three noble-gas-like species (Ar, Kr, Xe).
    fn default() -> Self {
        Self {
            species: vec![
                Species {
                    epsilon: 0.0104,
                    sigma: 3.40,
                },
                Species {
                    epsilon: 0.0141,
                    sigma: 3.65,
                },
                Species {
                    epsilon: 0.0200,
                    sigma: 3.98,
                },
            ],
        }
    }
}

impl LjParams {
    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    /// Mixed `(epsilon, sigma)` for a pair of species.
    pub fn pair(&self, a: usize, b: usize) -> (f64, f64) {
        let (sa, sb) = (self.species[a], self.species[b]);
        (
            (sa.epsilon * sb.epsilon).sqrt(),
            0.5 * (sa.sigma + sb.sigma),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub positions: Vec<Vec3>,
    pub species: Vec<usize>,
}

impl Configuration {
    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }

    /// Index of the most common species; ties go to the lower index.
    pub fn dominant_species(&self, n_species: usize) -> usize {
        let mut counts = vec![0usize; n_species];
        for &s in &self.species {
            counts[s] += 1;
        }
        let mut best = 0;
        for (i, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub config: Configuration,
    /// Total energy divided by atom count (eV/atom).
    pub per_atom_energy: f64,
    /// Forces per atom (eV/Å).
    pub forces: Vec<Vec3>,
}

impl Sample {
    /// Label a configuration with its energy and forces.
    pub fn labeled(config: Configuration, params: &LjParams) -> Result<Self> {
        let energy = lj_energy(&config, params)?;
        let forces = lj_forces(&config, params)?;
        Ok(Self {
            per_atom_energy: energy / config.n_atoms() as f64,
            config,
            forces,
        })
    }

    pub fn flat_forces(&self) -> Vec<f64> {
        self.forces.iter().flatten().copied().collect()
    }
}

pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn check_config(config: &Configuration, params: &LjParams) -> Result<()> {
    if config.positions.len() != config.species.len() {
        return Err(Error::LengthMismatch {
            expected: config.positions.len(),
            actual: config.species.len(),
        });
    }
    if let Some(&s) = config.species.iter().find(|&&s| s >= params.n_species()) {
        return Err(Error::InvalidArgument(format!("unknown species {s}")));
    }
    if config.positions.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("positions".into()));
    }
    Ok(())
}

/// Visit every pair `i < j` with its separation vector `r_i - r_j` and
/// distance, rejecting pairs below [`HARD_FLOOR`].
fn for_each_pair(config: &Configuration, mut f: impl FnMut(usize, usize, Vec3, f64)) -> Result<()> {
    let n = config.n_atoms();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sub(&config.positions[i], &config.positions[j]);
            let r = norm(&d);
            if r < HARD_FLOOR {
                return Err(Error::AtomsTooClose { i, j, distance: r });
            }
            f(i, j, d, r);
        }
    }
    Ok(())
}

/// Total energy `sum_{i<j} 4 eps [(s/r)^12 - (s/r)^6]` in eV.
pub fn lj_energy(config: &Configuration, params: &LjParams) -> Result<f64> {
    check_config(config, params)?;
    let mut energy = 0.0;
    for_each_pair(config, |i, j, _, r| {
        let (eps, sig) = params.pair(config.species[i], config.species[j]);
        let sr6 = (sig / r).powi(6);
        energy += 4.0 * eps * (sr6 * sr6 - sr6);
    })?;
    Ok(energy)
}

/// Analytic forces `-dE/dr_i` in eV/Å.
pub fn lj_forces(config: &Configuration, params: &LjParams) -> Result<Vec<Vec3>> {
    check_config(config, params)?;
    let mut forces = vec![[0.0; 3]; config.n_atoms()];
    for_each_pair(config, |i, j, d, r| {
        let (eps, sig) = params.pair(config.species[i], config.species[j]);
        let sr6 = (sig / r).powi(6);
        // -(dV/dr) / r
        let scale = 24.0 * eps * (2.0 * sr6 * sr6 - sr6) / (r * r);
        for c in 0..3 {
            forces[i][c] += scale * d[c];
            forces[j][c] -= scale * d[c];
        }
    })?;
    Ok(forces)
}

/// Knobs for synthetic cluster generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub seed: u64,
    pub samples: usize,
    pub atoms_min: usize,
    pub atoms_max: usize,
    /// Minimum pair distance as a fraction of the mixed pair sigma.
    pub r_min_factor: f64,
    /// New atoms are placed at a distance drawn uniformly from
    /// `[shell_min, shell_max] * sigma_ij` of a randomly chosen placed atom.
    pub shell_min: f64,
    pub shell_max: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            samples: 5000,
            atoms_min: 2,
            atoms_max: 8,
            r_min_factor: 0.8,
            shell_min: 0.95,
            shell_max: 1.5,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument("need at least one sample".into()));
        }
        if self.atoms_min < 2 || self.atoms_max < self.atoms_min {
            return Err(Error::InvalidArgument(format!(
                "invalid atom range [{}, {}]",
                self.atoms_min, self.atoms_max
            )));
        }
        if !(self.r_min_factor > 0.0) || !(self.shell_min > 0.0) || self.shell_max < self.shell_min
        {
            return Err(Error::InvalidArgument(
                "distance factors must be positive with shell_min <= shell_max".into(),
            ));
        }
        Ok(())
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

/// Deterministic stream of labeled clusters for `spec.seed`.
pub fn generate_dataset(spec: &DatasetSpec, params: &LjParams) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.samples);
    for sample in 0..spec.samples {
        let n = rng.gen_range(spec.atoms_min..=spec.atoms_max);
        let species: Vec<usize> = (0..n)
            .map(|_| rng.gen_range(0..params.n_species()))
            .collect();
        let mut positions: Vec<Vec3> = vec![[0.0; 3]];
        for atom in 1..n {
            let mut placed = false;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let anchor = rng.gen_range(0..atom);
                let (_, sig) = params.pair(species[atom], species[anchor]);
                let dist = sig * rng.gen_range(spec.shell_min..=spec.shell_max);
                let u = random_unit(&mut rng);
                let a = positions[anchor];
                let p = [a[0] + dist * u[0], a[1] + dist * u[1], a[2] + dist * u[2]];
                let ok = positions.iter().zip(&species).all(|(q, &s)| {
                    let (_, sig) = params.pair(species[atom], s);
                    norm(&sub(&p, q)) >= spec.r_min_factor * sig
                });
                if ok {
                    positions.push(p);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::PlacementFailed {
                    sample,
                    atom,
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                });
            }
        }
        out.push(Sample::labeled(
            Configuration { positions, species },
            params,
        )?);
    }
    Ok(out)
}

/// Deterministic 90/10 split by index: `(train, validation)` index ranges.
pub fn split_indices(n: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let val = n / 10;
    (0..n - val, n - val..n)
}

pub fn write_dataset(samples: &[Sample]) -> String {
    let mut s = String::new();
    for sample in samples {
        let _ = writeln!(s, "{}", sample.config.n_atoms());
        for ((p, sp), f) in sample
            .config
            .positions
            .iter()
            .zip(&sample.config.species)
            .zip(&sample.forces)
        {
            let _ = writeln!(
                s,
                "{sp} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                p[0], p[1], p[2], f[0], f[1], f[2]
            );
        }
        let _ = writeln!(s, "{:.16e}", sample.per_atom_energy);
    }
    s
}

pub fn parse_dataset(text: &str) -> Result<Vec<Sample>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let float = |line: usize, tok: &str| {
        tok.parse::<f64>()
            .map_err(|e| perr(line, format!("bad number {tok:?}: {e}")))
    };
    let mut out = Vec::new();
    while let Some((ln, head)) = lines.next() {
        let n: usize = head
            .parse()
            .map_err(|e| perr(ln, format!("bad atom count {head:?}: {e}")))?;
        let mut positions = Vec::with_capacity(n);
        let mut species = Vec::with_capacity(n);
        let mut forces = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| perr(ln, "truncated record".into()))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 7 {
                return Err(perr(ln, format!("expected 7 fields, got {}", toks.len())));
            }
            species.push(
                toks[0]
                    .parse::<usize>()
                    .map_err(|e| perr(ln, format!("bad species {:?}: {e}", toks[0])))?,
            );
            let v: Vec<f64> = toks[1..]
                .iter()
                .map(|t| float(ln, t))
                .collect::<Result<_>>()?;
            positions.push([v[0], v[1], v[2]]);
            forces.push([v[3], v[4], v[5]]);
        }
        let (ln, e) = lines
            .next()
            .ok_or_else(|| perr(ln, "missing per-atom energy".into()))?;
        out.push(Sample {
            config: Configuration { positions, species },
            per_atom_energy: float(ln, e)?,
            forces,
        });
    }
    Ok(out)
}

pub fn save_dataset(path: &Path, samples: &[Sample]) -> Result<()> {
    std::fs::write(path, write_dataset(samples)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

/// SHA-256 of the serialized dataset, hex encoded.
pub fn dataset_hash(samples: &[Sample]) -> String {
    hex::encode(Sha256::digest(write_dataset(samples).as_bytes()))
}
