//! Feed-forward energy/force model with manual backpropagation.
//!
//! The trunk is two SiLU layers over invariant pair descriptors. Two linear
//! heads branch from the last hidden layer:
//!
//! * the energy head emits `k` logits (histogram mode) or one scalar
//!   (baseline mode);
//! * the force head emits one coefficient per sorted pair slot. Forces are
//!   assembled as `F_i = sum_j c_ij (r_i - r_j) / |r_i - r_j|`, which makes
//!   the predicted forces rotation-equivariant with zero net force and
//!   torque.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::BinGrid;
use crate::error::{Error, Result};
use crate::toy::{norm, sub, Configuration, Vec3};

pub const CHECKPOINT_FORMAT: &str = "histloss-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn max_pairs(max_atoms: usize) -> usize {
    max_atoms * (max_atoms - 1) / 2
}

#[derive(Debug, Clone, Copy)]
pub struct PairSlot {
    pub i: usize,
    pub j: usize,
    /// `(r_i - r_j) / |r_i - r_j|`
    pub unit: Vec3,
}

/// Invariant features of one configuration plus the pair geometry the force
/// head needs.
#[derive(Debug, Clone)]
pub struct Descriptor {
    /// Sorted inverse distances (largest first) padded with zeros to the
    /// maximum pair count, followed by species fractions `count / max_atoms`.
    pub features: Vec<f64>,
    pub n_atoms: usize,
    /// One entry per occupied feature slot, in slot order.
    pub pairs: Vec<PairSlot>,
}

pub fn featurize(config: &Configuration, max_atoms: usize, n_species: usize) -> Result<Descriptor> {
    let n = config.n_atoms();
    if n > max_atoms {
        return Err(Error::InvalidArgument(format!(
            "configuration has {n} atoms, model supports at most {max_atoms}"
        )));
    }
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sub(&config.positions[i], &config.positions[j]);
            let r = norm(&d);
            if !(r > 0.0) {
                return Err(Error::AtomsTooClose { i, j, distance: r });
            }
            pairs.push((
                1.0 / r,
                PairSlot {
                    i,
                    j,
                    unit: [d[0] / r, d[1] / r, d[2] / r],
                },
            ));
        }
    }
    // stable sort keeps (i, j) order among exact ties
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let slots = max_pairs(max_atoms);
    let mut features = vec![0.0; slots + n_species];
    for (f, (inv, _)) in features.iter_mut().zip(&pairs) {
        *f = *inv;
    }
    for &s in &config.species {
        if s >= n_species {
            return Err(Error::InvalidArgument(format!("unknown species {s}")));
        }
        features[slots + s] += 1.0 / max_atoms as f64;
    }
    Ok(Descriptor {
        features,
        n_atoms: n,
        pairs: pairs.into_iter().map(|(_, p)| p).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub max_atoms: usize,
    pub n_species: usize,
    pub hidden: usize,
    /// `k` in histogram mode, 1 in baseline mode.
    pub energy_outputs: usize,
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        max_pairs(self.max_atoms) + self.n_species
    }

    pub fn force_outputs(&self) -> usize {
        max_pairs(self.max_atoms)
    }
}

/// How the energy output is interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyHead {
    Histogram {
        lo: f64,
        hi: f64,
        bins: usize,
        sigma_multiplier: f64,
        temperature: f64,
    },
    /// `e_hat = mean + scale * y`
    Scalar { mean: f64, scale: f64 },
}

impl EnergyHead {
    pub fn grid(&self) -> Option<BinGrid> {
        match self {
            EnergyHead::Histogram { lo, hi, bins, .. } => BinGrid::new(*lo, *hi, *bins).ok(),
            EnergyHead::Scalar { .. } => None,
        }
    }

    pub fn outputs(&self) -> usize {
        match self {
            EnergyHead::Histogram { bins, .. } => *bins,
            EnergyHead::Scalar { .. } => 1,
        }
    }
}

/// Named parameter blocks. Gradients and optimizer moments reuse the type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub energy_w: Vec<f64>,
    pub energy_b: Vec<f64>,
    pub force_w: Vec<f64>,
    pub force_b: Vec<f64>,
}

impl Params {
    pub fn zeros(arch: &Architecture) -> Self {
        let (d, h) = (arch.input_dim(), arch.hidden);
        Self {
            w1: vec![0.0; h * d],
            b1: vec![0.0; h],
            w2: vec![0.0; h * h],
            b2: vec![0.0; h],
            energy_w: vec![0.0; arch.energy_outputs * h],
            energy_b: vec![0.0; arch.energy_outputs],
            force_w: vec![0.0; arch.force_outputs() * h],
            force_b: vec![0.0; arch.force_outputs()],
        }
    }

    /// `(name, values, is_weight_matrix)` for every block.
    pub fn blocks(&self) -> [(&'static str, &Vec<f64>, bool); 8] {
        [
            ("w1", &self.w1, true),
            ("b1", &self.b1, false),
            ("w2", &self.w2, true),
            ("b2", &self.b2, false),
            ("energy_w", &self.energy_w, true),
            ("energy_b", &self.energy_b, false),
            ("force_w", &self.force_w, true),
            ("force_b", &self.force_b, false),
        ]
    }

    pub fn blocks_mut(&mut self) -> [(&'static str, &mut Vec<f64>, bool); 8] {
        [
            ("w1", &mut self.w1, true),
            ("b1", &mut self.b1, false),
            ("w2", &mut self.w2, true),
            ("b2", &mut self.b2, false),
            ("energy_w", &mut self.energy_w, true),
            ("energy_b", &mut self.energy_b, false),
            ("force_w", &mut self.force_w, true),
            ("force_b", &mut self.force_b, false),
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.1.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view in block order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks()
            .iter()
            .flat_map(|b| b.1.iter().copied())
            .collect()
    }

    /// Mutable reference to the `idx`-th scalar in block order.
    pub fn flat_mut(&mut self, mut idx: usize) -> &mut f64 {
        for (_, block, _) in self.blocks_mut() {
            if idx < block.len() {
                return &mut block[idx];
            }
            idx -= block.len();
        }
        panic!("parameter index out of range");
    }

    pub fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.1.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Name of the first block holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.blocks()
            .iter()
            .find(|b| b.1.iter().any(|x| !x.is_finite()))
            .map(|b| b.0)
    }

    /// SHA-256 over the little-endian bytes of the trunk blocks.
    pub fn trunk_hash(&self) -> String {
        let mut h = Sha256::new();
        for block in [&self.w1, &self.b1, &self.w2, &self.b2] {
            for x in block {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Per-feature input standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputNorm {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn fit(descriptors: &[&Descriptor], dim: usize) -> Self {
        let n = descriptors.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for d in descriptors {
            mean.iter_mut()
                .zip(&d.features)
                .for_each(|(m, x)| *m += x / n);
        }
        let mut var = vec![0.0; dim];
        for d in descriptors {
            var.iter_mut()
                .zip(&d.features)
                .zip(&mean)
                .for_each(|((v, x), m)| *v += (x - m) * (x - m) / n);
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    /// Final learning rate as a fraction of the base rate.
    pub floor_fraction: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            warmup_steps: 100,
            total_steps: 5000,
            floor_fraction: 0.01,
            batch_size: 32,
            clip_norm: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning rate must be finite and nonnegative");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.warmup_steps > self.total_steps {
            return bad("warmup steps exceed total steps");
        }
        if !(0.0..=1.0).contains(&self.floor_fraction) {
            return bad("floor fraction must lie in [0, 1]");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip norm must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || !(self.eps > 0.0)
        {
            return bad("invalid Adam moment parameters");
        }
        Ok(())
    }

    /// Linear warmup `base * (t + 1) / warmup`, then cosine decay from
    /// `base` at `t = warmup` to `floor * base` at `t = total`.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        let base = self.learning_rate;
        if step < self.warmup_steps {
            return base * (step + 1) as f64 / self.warmup_steps as f64;
        }
        if step >= self.total_steps {
            return self.floor_fraction * base;
        }
        let progress =
            (step - self.warmup_steps) as f64 / (self.total_steps - self.warmup_steps) as f64;
        let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        base * (self.floor_fraction + (1.0 - self.floor_fraction) * cosine)
    }
}

/// Network parameters, optimizer moments and everything needed to evaluate
/// the model standalone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub arch: Architecture,
    pub head: EnergyHead,
    pub input_norm: InputNorm,
    /// Force-head coefficients are multiplied by this (eV/Å).
    pub force_scale: f64,
    pub params: Params,
    pub first_moment: Params,
    pub second_moment: Params,
    pub step: usize,
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

/// `out = W x + b` with `W` row-major `(out.len(), x.len())`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `gw += dy x^T`, `gb += dy`, `dx += W^T dy`.
fn affine_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let cols = x.len();
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        gb[r] += g;
        gw[r * cols..(r + 1) * cols]
            .iter_mut()
            .zip(x)
            .for_each(|(a, xv)| *a += g * xv);
    }
    if let Some(dx) = dx {
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            dx.iter_mut()
                .zip(&w[r * cols..(r + 1) * cols])
                .for_each(|(d, wv)| *d += g * wv);
        }
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Vec<f64>,
    pre1: Vec<f64>,
    h1: Vec<f64>,
    pre2: Vec<f64>,
    h2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `k` logits or a single raw scalar.
    pub energy: Vec<f64>,
    /// Flat `3 * n_atoms` force prediction (eV/Å).
    pub forces: Vec<f64>,
    pub cache: ForwardCache,
}

impl ModelState {
    /// Trunk and force head drawn fan-in uniform from `seed`; the energy
    /// head starts at zero so the initial predicted distribution is uniform.
    pub fn init(
        arch: Architecture,
        head: EnergyHead,
        input_norm: InputNorm,
        force_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if head.outputs() != arch.energy_outputs {
            return Err(Error::InvalidArgument(format!(
                "energy head expects {} outputs, architecture has {}",
                head.outputs(),
                arch.energy_outputs
            )));
        }
        if let EnergyHead::Histogram { bins, .. } = head {
            if bins < 2 {
                return Err(Error::InvalidArgument("histogram head needs k >= 2".into()));
            }
        }
        if arch.max_atoms < 2 || arch.hidden == 0 || arch.n_species == 0 {
            return Err(Error::InvalidArgument("degenerate architecture".into()));
        }
        if input_norm.mean.len() != arch.input_dim() || input_norm.std.len() != arch.input_dim() {
            return Err(Error::LengthMismatch {
                expected: arch.input_dim(),
                actual: input_norm.mean.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::zeros(&arch);
        let mut fill = |block: &mut Vec<f64>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            block
                .iter_mut()
                .for_each(|w| *w = rng.gen_range(-bound..bound));
        };
        fill(&mut params.w1, arch.input_dim());
        fill(&mut params.w2, arch.hidden);
        fill(&mut params.force_w, arch.hidden);
        Ok(Self {
            arch,
            head,
            input_norm,
            force_scale,
            first_moment: Params::zeros(&arch),
            second_moment: Params::zeros(&arch),
            params,
            step: 0,
        })
    }

    fn check_descriptor(&self, d: &Descriptor) -> Result<()> {
        if d.features.len() != self.arch.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.arch.input_dim(),
                actual: d.features.len(),
            });
        }
        if d.pairs.len() > self.arch.force_outputs() {
            return Err(Error::LengthMismatch {
                expected: self.arch.force_outputs(),
                actual: d.pairs.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, d: &Descriptor) -> Result<ForwardOutput> {
        self.check_descriptor(d)?;
        let h = self.arch.hidden;
        let p = &self.params;
        let x: Vec<f64> = d
            .features
            .iter()
            .zip(&self.input_norm.mean)
            .zip(&self.input_norm.std)
            .map(|((x, m), s)| (x - m) / s)
            .collect();
        let mut pre1 = vec![0.0; h];
        affine(&p.w1, &p.b1, &x, &mut pre1);
        let h1: Vec<f64> = pre1.iter().map(|v| silu(*v)).collect();
        let mut pre2 = vec![0.0; h];
        affine(&p.w2, &p.b2, &h1, &mut pre2);
        let h2: Vec<f64> = pre2.iter().map(|v| silu(*v)).collect();

        let mut energy = vec![0.0; self.arch.energy_outputs];
        affine(&p.energy_w, &p.energy_b, &h2, &mut energy);

        // only the occupied slots contribute to forces
        let used = d.pairs.len();
        let mut coef = vec![0.0; used];
        affine(&p.force_w[..used * h], &p.force_b[..used], &h2, &mut coef);
        let mut forces = vec![0.0; 3 * d.n_atoms];
        for (c, slot) in coef.iter().zip(&d.pairs) {
            let c = c * self.force_scale;
            for k in 0..3 {
                forces[3 * slot.i + k] += c * slot.unit[k];
                forces[3 * slot.j + k] -= c * slot.unit[k];
            }
        }
        Ok(ForwardOutput {
            energy,
            forces,
            cache: ForwardCache {
                x,
                pre1,
                h1,
                pre2,
                h2,
            },
        })
    }

    /// Accumulate parameter gradients into `grads` given upstream gradients
    /// with respect to the energy output and the flat force prediction.
    pub fn backward(
        &self,
        d: &Descriptor,
        cache: &ForwardCache,
        d_energy: &[f64],
        d_forces: &[f64],
        grads: &mut Params,
    ) -> Result<()> {
        self.check_descriptor(d)?;
        if d_energy.len() != self.arch.energy_outputs {
            return Err(Error::LengthMismatch {
                expected: self.arch.energy_outputs,
                actual: d_energy.len(),
            });
        }
        if d_forces.len() != 3 * d.n_atoms {
            return Err(Error::LengthMismatch {
                expected: 3 * d.n_atoms,
                actual: d_forces.len(),
            });
        }
        let h = self.arch.hidden;
        let p = &self.params;
        let used = d.pairs.len();
        let d_coef: Vec<f64> = d
            .pairs
            .iter()
            .map(|slot| {
                self.force_scale
                    * (0..3)
                        .map(|k| {
                            (d_forces[3 * slot.i + k] - d_forces[3 * slot.j + k]) * slot.unit[k]
                        })
                        .sum::<f64>()
            })
            .collect();

        let mut d_h2 = vec![0.0; h];
        affine_backward(
            &p.energy_w,
            &cache.h2,
            d_energy,
            &mut grads.energy_w,
            &mut grads.energy_b,
            Some(&mut d_h2),
        );
        affine_backward(
            &p.force_w[..used * h],
            &cache.h2,
            &d_coef,
            &mut grads.force_w[..used * h],
            &mut grads.force_b[..used],
            Some(&mut d_h2),
        );
        let d_pre2: Vec<f64> = d_h2
            .iter()
            .zip(&cache.pre2)
            .map(|(g, a)| g * silu_grad(*a))
            .collect();
        let mut d_h1 = vec![0.0; h];
        affine_backward(
            &p.w2,
            &cache.h1,
            &d_pre2,
            &mut grads.w2,
            &mut grads.b2,
            Some(&mut d_h1),
        );
        let d_pre1: Vec<f64> = d_h1
            .iter()
            .zip(&cache.pre1)
            .map(|(g, a)| g * silu_grad(*a))
            .collect();
        affine_backward(&p.w1, &cache.x, &d_pre1, &mut grads.w1, &mut grads.b1, None);
        Ok(())
    }

    /// One AdamW update: clip by global norm, update moments with bias
    /// correction, apply decoupled weight decay to weight matrices, advance
    /// the step counter. Returns the learning rate used.
    pub fn optimizer_step(&mut self, grads: &Params, cfg: &OptimizerConfig) -> Result<f64> {
        if grads.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        if let Some(block) = grads.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient block {block}")));
        }
        let norm = grads.norm();
        let clip = if norm > cfg.clip_norm {
            cfg.clip_norm / norm
        } else {
            1.0
        };
        let lr = cfg.learning_rate_at(self.step);
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let blocks = self
            .params
            .blocks_mut()
            .into_iter()
            .zip(self.first_moment.blocks_mut())
            .zip(self.second_moment.blocks_mut())
            .zip(grads.blocks());
        for ((((_, w, is_weight), (_, m, _)), (_, v, _)), (_, g, _)) in blocks {
            let decay = if is_weight {
                lr * cfg.weight_decay
            } else {
                0.0
            };
            for i in 0..w.len() {
                let gi = g[i] * clip;
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= decay * w[i] + lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.step += 1;
        if let Some(block) = self.params.first_non_finite() {
            return Err(Error::NonFinite(format!("parameter block {block}")));
        }
        Ok(lr)
    }

    pub fn save(&self, path: &Path, config_echo: &str) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: config_echo.into(),
            state: self.clone(),
        };
        let text = serde_json::to_string(&ckpt).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Load a checkpoint, returning the state and its config echo.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        Ok((ckpt.state, ckpt.config))
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: String,
    state: ModelState,
}
