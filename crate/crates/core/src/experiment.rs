//! Training runs, evaluation, entropy/error correlation tracking and the
//! bin-count x sigma ablation sweep.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{encode_target, BinGrid, EncodeConfig};
use crate::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::model::{featurize, Architecture, EnergyHead, InputNorm, ModelState};
use crate::objective::{batch_objective, predict, Prediction, Prepared};
use crate::toy::{dataset_hash, generate_dataset, split_indices, LjParams, Sample};

pub const METRICS_HEADER: &str = "step,energy_mae,force_mae,mean_entropy,pearson_r,lr";
pub const CORRELATION_HEADER: &str = "step,pearson_r,pearson_r_train_batch";
pub const ABLATION_HEADER: &str = "variant,bins,sigma_mult,stratum,energy_mae,force_mae";
pub const RECORDS_HEADER: &str = "index,stratum,energy,predicted,entropy,abs_error,force_mae";

/// Maximum fraction of training targets allowed outside the grid.
pub const MAX_OUT_OF_RANGE_FRACTION: f64 = 0.01;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Sample Pearson correlation; `None` when either input has zero variance.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs at least two points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let degenerate = |v: &[f64], m: f64| {
        let spread = v.iter().map(|a| (a - m).abs()).fold(0.0, f64::max);
        spread <= 1e-14 * m.abs() || spread == 0.0
    };
    if degenerate(x, mx) || degenerate(y, my) {
        return Ok(None);
    }
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Anything that maps a configuration to energy/force predictions.
pub trait Predictor {
    fn predict_sample(&self, sample: &Sample) -> Result<Prediction>;
}

impl Predictor for ModelState {
    fn predict_sample(&self, sample: &Sample) -> Result<Prediction> {
        let d = featurize(&sample.config, self.arch.max_atoms, self.arch.n_species)?;
        predict(self, &d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub index: usize,
    pub stratum: usize,
    pub energy: f64,
    pub predicted: f64,
    pub entropy: Option<f64>,
    pub abs_error: f64,
    /// Sum of absolute force-component errors and the component count.
    pub force_abs_sum: f64,
    pub force_components: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub energy_mae: f64,
    pub force_mae: f64,
    pub records: Vec<SampleRecord>,
}

impl Evaluation {
    fn from_records(records: Vec<SampleRecord>) -> Self {
        let (energy_mae, force_mae) = maes(records.iter());
        Self {
            energy_mae,
            force_mae,
            records,
        }
    }

    /// `(stratum, energy MAE, force MAE)` for every stratum present, in
    /// stratum order.
    pub fn by_stratum(&self) -> Vec<(usize, f64, f64)> {
        let mut strata: Vec<usize> = self.records.iter().map(|r| r.stratum).collect();
        strata.sort_unstable();
        strata.dedup();
        strata
            .into_iter()
            .map(|s| {
                let (e, f) = maes(self.records.iter().filter(|r| r.stratum == s));
                (s, e, f)
            })
            .collect()
    }

    pub fn mean_entropy(&self) -> Option<f64> {
        let h: Option<Vec<f64>> = self.records.iter().map(|r| r.entropy).collect();
        h.map(|h| h.iter().sum::<f64>() / h.len() as f64)
    }

    /// Pearson r between per-sample entropy and absolute energy error.
    pub fn entropy_error_r(&self) -> Result<Option<f64>> {
        let h: Option<Vec<f64>> = self.records.iter().map(|r| r.entropy).collect();
        match h {
            Some(h) if h.len() >= 2 => {
                let err: Vec<f64> = self.records.iter().map(|r| r.abs_error).collect();
                pearson_r(&h, &err)
            }
            _ => Ok(None),
        }
    }

    pub fn records_csv(&self) -> String {
        let mut s = String::from(RECORDS_HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.index,
                r.stratum,
                r.energy,
                r.predicted,
                opt(r.entropy),
                r.abs_error,
                r.force_abs_sum / r.force_components.max(1) as f64
            );
        }
        s
    }
}

fn maes<'a>(records: impl Iterator<Item = &'a SampleRecord>) -> (f64, f64) {
    let (mut e, mut n, mut f, mut nf) = (0.0, 0usize, 0.0, 0usize);
    for r in records {
        e += r.abs_error;
        n += 1;
        f += r.force_abs_sum;
        nf += r.force_components;
    }
    (e / n.max(1) as f64, f / nf.max(1) as f64)
}

/// Energy and force MAE of `predictor` over `samples`; record indices start
/// at `first_index`.
pub fn evaluate<P: Predictor + ?Sized>(
    predictor: &P,
    samples: &[Sample],
    first_index: usize,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate an empty split".into(),
        ));
    }
    let n_species = LjParams::default().n_species();
    let records = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let p = predictor.predict_sample(s)?;
            let f = s.flat_forces();
            if p.forces.len() != f.len() {
                return Err(Error::LengthMismatch {
                    expected: f.len(),
                    actual: p.forces.len(),
                });
            }
            Ok(SampleRecord {
                index: first_index + i,
                stratum: s.config.dominant_species(n_species),
                energy: s.per_atom_energy,
                predicted: p.energy,
                entropy: p.entropy,
                abs_error: (p.energy - s.per_atom_energy).abs(),
                force_abs_sum: f.iter().zip(&p.forces).map(|(a, b)| (a - b).abs()).sum(),
                force_components: f.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation::from_records(records))
}

/// Per-step Pearson r between entropy and absolute error; undefined steps
/// stay in the series as `None`.
pub fn entropy_error_track(
    steps: &[(usize, Vec<SampleRecord>)],
) -> Result<Vec<(usize, Option<f64>)>> {
    steps
        .iter()
        .map(|(step, records)| {
            let ev = Evaluation {
                energy_mae: 0.0,
                force_mae: 0.0,
                records: records.clone(),
            };
            if records.iter().any(|r| r.entropy.is_none()) {
                return Err(Error::InvalidArgument(
                    "entropy tracking requires hl_gauss predictions".into(),
                ));
            }
            Ok((*step, ev.entropy_error_r()?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub energy_mae: f64,
    pub force_mae: f64,
    pub mean_entropy: Option<f64>,
    pub pearson_r: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub rows: Vec<MetricsRow>,
    /// Entropy/error correlation over the training batch at each eval step
    /// (`None` at the final step, where no batch is drawn).
    pub train_batch_r: Vec<(usize, Option<f64>)>,
}

impl RunMetrics {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.step,
                r.energy_mae,
                r.force_mae,
                opt(r.mean_entropy),
                opt(r.pearson_r),
                r.lr
            );
        }
        s
    }

    /// Step-vs-correlation series for plotting.
    pub fn correlation_csv(&self) -> String {
        let mut s = String::from(CORRELATION_HEADER);
        s.push('\n');
        for (r, (_, t)) in self.rows.iter().zip(&self.train_batch_r) {
            let _ = writeln!(s, "{},{},{}", r.step, opt(r.pearson_r), opt(*t));
        }
        s
    }

    /// Fraction of eval steps at or after `from_step` with strictly positive
    /// correlation (null counts as not positive).
    pub fn positive_fraction_after(&self, from_step: usize) -> Option<f64> {
        let post: Vec<_> = self.rows.iter().filter(|r| r.step >= from_step).collect();
        if post.is_empty() {
            return None;
        }
        let pos = post
            .iter()
            .filter(|r| r.pearson_r.is_some_and(|v| v > 0.0))
            .count();
        Some(pos as f64 / post.len() as f64)
    }
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Config with the grid support resolved.
    pub config: RunConfig,
    pub metrics: RunMetrics,
    pub state: ModelState,
    pub validation: Evaluation,
    pub dataset_hash: String,
    pub trunk_hash_at_init: String,
    pub out_of_range_targets: usize,
    /// Training-split energy MAE at initialization and after the last step.
    pub train_energy_mae: (f64, f64),
}

/// Dataset hash recorded in a config echo, if any.
pub fn echoed_dataset_hash(echo: &str) -> Option<&str> {
    echo.lines()
        .find_map(|l| l.strip_prefix("# dataset_sha256 = "))
        .map(str::trim)
}

impl RunOutput {
    pub fn config_echo(&self) -> String {
        format!(
            "# resolved run configuration\n# dataset_sha256 = {}\n# trunk_sha256_step0 = {}\n{}",
            self.dataset_hash,
            self.trunk_hash_at_init,
            self.config.to_toml()
        )
    }

    /// Write `metrics.csv`, `entropy_error.csv`, `validation.csv`,
    /// `run_config.echo` and `checkpoint.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(p, e))
        };
        write("metrics.csv", self.metrics.to_csv())?;
        write("run_config.echo", self.config_echo())?;
        write("validation.csv", self.validation.records_csv())?;
        if self.config.run.mode == Mode::HlGauss {
            write("entropy_error.csv", self.metrics.correlation_csv())?;
        }
        self.state
            .save(&dir.join("checkpoint.json"), &self.config_echo())
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Train one model. Uses `samples` when given, otherwise generates the
/// dataset described by `cfg.dataset`.
pub fn train_run(cfg: &RunConfig, samples: Option<&[Sample]>) -> Result<RunOutput> {
    cfg.validate()?;
    let generated;
    let samples = match samples {
        Some(s) => s,
        None => {
            generated = generate_dataset(&cfg.dataset, &LjParams::default())?;
            &generated
        }
    };
    let (train_idx, val_idx) = split_indices(samples.len());
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "dataset of {} samples leaves an empty train or validation split",
            samples.len()
        )));
    }
    let train = &samples[train_idx.clone()];
    let val = &samples[val_idx.clone()];
    let eval_batch = &val[..cfg.run.eval_batch.min(val.len())];

    let n_species = LjParams::default().n_species();
    let max_atoms = samples
        .iter()
        .map(|s| s.config.n_atoms())
        .max()
        .unwrap_or(2)
        .max(cfg.dataset.atoms_max);
    let descs = train
        .iter()
        .map(|s| featurize(&s.config, max_atoms, n_species))
        .collect::<Result<Vec<_>>>()?;
    let arch_base = Architecture {
        max_atoms,
        n_species,
        hidden: cfg.model.hidden,
        energy_outputs: 1,
    };
    let input_norm = InputNorm::fit(&descs.iter().collect::<Vec<_>>(), arch_base.input_dim());
    let force_rms = {
        let comps = train
            .iter()
            .flat_map(|s| s.forces.iter().flatten().copied());
        let n = comps.clone().count().max(1) as f64;
        (comps.map(|f| f * f).sum::<f64>() / n).sqrt()
    };
    let force_scale = if force_rms > 0.0 { force_rms } else { 1.0 };

    let mut resolved = cfg.clone();
    let mut out_of_range = 0;
    let (head, targets) = match cfg.run.mode {
        Mode::HlGauss => {
            let grid = match (cfg.grid.lo, cfg.grid.hi) {
                (Some(lo), Some(hi)) => BinGrid::new(lo, hi, cfg.grid.bins)?,
                _ => {
                    let (min, max) = train
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, s| {
                            (a.0.min(s.per_atom_energy), a.1.max(s.per_atom_energy))
                        });
                    BinGrid::covering(min, max, cfg.grid.bins, cfg.grid.sigma_multiplier)?
                }
            };
            resolved.grid.lo = Some(grid.lo());
            resolved.grid.hi = Some(grid.hi());
            let enc = EncodeConfig::from_multiplier(cfg.grid.sigma_multiplier, &grid)?;
            let mut targets = Vec::with_capacity(train.len());
            for s in train {
                let t = encode_target(s.per_atom_energy, &enc, &grid)?;
                if t.is_out_of_range() {
                    out_of_range += 1;
                }
                targets.push(Some(t.probs));
            }
            if out_of_range as f64 > MAX_OUT_OF_RANGE_FRACTION * train.len() as f64 {
                return Err(Error::TargetsOutOfRange {
                    count: out_of_range,
                    total: train.len(),
                });
            }
            (
                EnergyHead::Histogram {
                    lo: grid.lo(),
                    hi: grid.hi(),
                    bins: grid.k(),
                    sigma_multiplier: cfg.grid.sigma_multiplier,
                    temperature: cfg.loss.temperature,
                },
                targets,
            )
        }
        Mode::Baseline => {
            // grid settings are never consulted in this mode
            resolved.grid = Default::default();
            let (mean, std) = mean_std(train.iter().map(|s| s.per_atom_energy));
            (
                EnergyHead::Scalar {
                    mean,
                    scale: if std > 0.0 { std } else { 1.0 },
                },
                vec![None; train.len()],
            )
        }
    };
    let arch = Architecture {
        energy_outputs: head.outputs(),
        ..arch_base
    };

    let prepared: Vec<Prepared> = train
        .iter()
        .zip(descs)
        .zip(targets)
        .map(|((s, desc), target)| Prepared {
            desc,
            energy: s.per_atom_energy,
            forces: s.flat_forces(),
            target,
            stratum: s.config.dominant_species(n_species),
        })
        .collect();

    let mut state = ModelState::init(arch, head, input_norm, force_scale, cfg.run.seed)?;
    let trunk_hash_at_init = state.params.trunk_hash();
    let train_mae_at_init = evaluate(&state, train, 0)?.energy_mae;

    let opt = &cfg.optimizer;
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut metrics = RunMetrics::default();
    let batch_size = opt.batch_size.min(prepared.len());

    let eval_row = |state: &ModelState, step: usize| -> Result<MetricsRow> {
        let ev = evaluate(state, eval_batch, val_idx.start)?;
        Ok(MetricsRow {
            step,
            energy_mae: ev.energy_mae,
            force_mae: ev.force_mae,
            mean_entropy: ev.mean_entropy(),
            pearson_r: ev.entropy_error_r()?,
            lr: opt.learning_rate_at(step),
        })
    };

    for step in 0..opt.total_steps {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&prepared[order[cursor]]);
            cursor += 1;
        }
        let result = batch_objective(&state, &batch, &cfg.loss)?;
        if step % cfg.run.eval_interval == 0 {
            metrics.rows.push(eval_row(&state, step)?);
            let train_r = match cfg.run.mode {
                Mode::HlGauss if result.records.len() >= 2 => {
                    let h: Vec<f64> = result.records.iter().filter_map(|r| r.0).collect();
                    let e: Vec<f64> = result.records.iter().map(|r| r.1).collect();
                    pearson_r(&h, &e)?
                }
                _ => None,
            };
            metrics.train_batch_r.push((step, train_r));
        }
        state.optimizer_step(&result.grads, opt)?;
    }
    metrics.rows.push(eval_row(&state, opt.total_steps)?);
    metrics.train_batch_r.push((opt.total_steps, None));

    let validation = evaluate(&state, val, val_idx.start)?;
    let train_mae_final = evaluate(&state, train, 0)?.energy_mae;
    Ok(RunOutput {
        train_energy_mae: (train_mae_at_init, train_mae_final),
        config: resolved,
        metrics,
        state,
        validation,
        dataset_hash: dataset_hash(samples),
        trunk_hash_at_init,
        out_of_range_targets: out_of_range,
    })
}

/// One row group of the ablation table.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub variant: String,
    pub mode: Mode,
    pub bins: Option<usize>,
    pub sigma_multiplier: Option<f64>,
    pub outcome: std::result::Result<RunOutput, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrendStatus {
    Pass,
    Warn,
    /// Fewer than two sigma cells completed at the requested bin count.
    Unavailable,
}

#[derive(Debug, Clone)]
pub struct Ablation {
    pub cells: Vec<AblationCell>,
}

pub fn variant_name(mode: Mode, bins: usize, sigma: f64) -> String {
    match mode {
        Mode::Baseline => "baseline_mae".into(),
        Mode::HlGauss => format!("hl_gauss_k{bins}_s{sigma}"),
    }
}

impl Ablation {
    /// Rows: per-stratum then `overall` for every variant. Strata are named
    /// `species<i>` after the dominant species; `overall` is the
    /// sample-weighted mean over all validation samples.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(ABLATION_HEADER);
        s.push('\n');
        for c in &self.cells {
            let bins = c.bins.map(|b| b.to_string()).unwrap_or_default();
            let sigma = c
                .sigma_multiplier
                .map(|v| v.to_string())
                .unwrap_or_default();
            match &c.outcome {
                Ok(run) => {
                    for (st, e, f) in run.validation.by_stratum() {
                        let _ = writeln!(s, "{},{bins},{sigma},species{st},{e},{f}", c.variant);
                    }
                    let v = &run.validation;
                    let _ = writeln!(
                        s,
                        "{},{bins},{sigma},overall,{},{}",
                        c.variant, v.energy_mae, v.force_mae
                    );
                }
                Err(_) => {
                    let _ = writeln!(s, "{},{bins},{sigma},failed,,", c.variant);
                }
            }
        }
        s
    }

    pub fn cell(&self, mode: Mode, bins: usize, sigma: f64) -> Option<&AblationCell> {
        self.cells.iter().find(|c| {
            c.mode == mode
                && (mode == Mode::Baseline
                    || (c.bins == Some(bins) && c.sigma_multiplier == Some(sigma)))
        })
    }

    /// Pass when the sigma = 0.75 cell has the lowest validation energy MAE
    /// among completed sigma cells at `bins`.
    pub fn sigma_trend(&self, bins: usize) -> TrendStatus {
        let done: Vec<(f64, f64)> = self
            .cells
            .iter()
            .filter(|c| c.mode == Mode::HlGauss && c.bins == Some(bins))
            .filter_map(|c| {
                let run = c.outcome.as_ref().ok()?;
                Some((c.sigma_multiplier?, run.validation.energy_mae))
            })
            .collect();
        let Some(&(_, ref_mae)) = done.iter().find(|(s, _)| *s == 0.75) else {
            return TrendStatus::Unavailable;
        };
        if done.len() < 2 {
            return TrendStatus::Unavailable;
        }
        if done.iter().all(|(_, m)| ref_mae <= *m) {
            TrendStatus::Pass
        } else {
            TrendStatus::Warn
        }
    }

    /// Write `ablation.csv` plus one run directory per completed cell.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("ablation.csv");
        std::fs::write(&p, self.to_csv()).map_err(|e| Error::io(p, e))?;
        for c in &self.cells {
            if let Ok(run) = &c.outcome {
                run.write_to(&dir.join(&c.variant))?;
            }
        }
        Ok(())
    }
}

/// Baseline plus every distinct `(bins, sigma)` cell, all on the same
/// dataset and trunk seed. Cells run on up to `workers` threads; a failing
/// cell is recorded and the sweep continues.
pub fn ablate(
    base: &RunConfig,
    bin_counts: &[usize],
    sigma_multipliers: &[f64],
    workers: usize,
    samples: Option<&[Sample]>,
) -> Result<Ablation> {
    let generated;
    let samples = match samples {
        Some(s) => s,
        None => {
            base.dataset.validate()?;
            generated = generate_dataset(&base.dataset, &LjParams::default())?;
            &generated
        }
    };
    let mut configs: Vec<(Mode, Option<usize>, Option<f64>, RunConfig)> = Vec::new();
    let mut baseline = base.clone();
    baseline.run.mode = Mode::Baseline;
    configs.push((Mode::Baseline, None, None, baseline));
    for &bins in bin_counts {
        for &sigma in sigma_multipliers {
            if configs.iter().any(|(_, b, s, _)| {
                *b == Some(bins) && s.map(f64::to_bits) == Some(sigma.to_bits())
            }) {
                continue;
            }
            let mut c = base.clone();
            c.run.mode = Mode::HlGauss;
            c.grid.bins = bins;
            c.grid.sigma_multiplier = sigma;
            configs.push((Mode::HlGauss, Some(bins), Some(sigma), c));
        }
    }

    let results: Mutex<Vec<Option<std::result::Result<RunOutput, String>>>> =
        Mutex::new(vec![None; configs.len()]);
    let next = AtomicUsize::new(0);
    let workers = workers.clamp(1, configs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= configs.len() {
                    break;
                }
                let out = train_run(&configs[i].3, Some(samples)).map_err(|e| e.to_string());
                results.lock().expect("results lock")[i] = Some(out);
            });
        }
    });
    let results = results.into_inner().expect("results lock");
    let cells = configs
        .into_iter()
        .zip(results)
        .map(|((mode, bins, sigma, _), out)| AblationCell {
            variant: variant_name(mode, bins.unwrap_or(0), sigma.unwrap_or(0.0)),
            mode,
            bins,
            sigma_multiplier: sigma,
            outcome: out.unwrap_or_else(|| Err("cell did not run".into())),
        })
        .collect();
    Ok(Ablation { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_fixtures() {
        let x = [1.0, 2.0, 3.0, 4.5];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson_r(&x, &y).unwrap().unwrap() - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson_r(&x, &y).unwrap().unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap(), None);
        assert_eq!(
            pearson_r(&[0.1; 7], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).unwrap(),
            None
        );
        assert!(pearson_r(&[1.0], &[1.0]).is_err());
        assert!(pearson_r(&[1.0, 2.0], &[1.0]).is_err());
    }

    fn record(i: usize, entropy: f64, err: f64) -> SampleRecord {
        SampleRecord {
            index: i,
            stratum: i % 3,
            energy: 0.0,
            predicted: err,
            entropy: Some(entropy),
            abs_error: err,
            force_abs_sum: 0.0,
            force_components: 3,
        }
    }

    #[test]
    fn track_identity_and_constant() {
        let errs = [0.1, 0.5, 0.2, 0.9];
        let steps: Vec<(usize, Vec<SampleRecord>)> = (0..3)
            .map(|s| {
                let recs = errs
                    .iter()
                    .enumerate()
                    .map(|(i, e)| record(i, *e * (s + 1) as f64, *e * (s + 1) as f64))
                    .collect();
                (s * 10, recs)
            })
            .collect();
        let series = entropy_error_track(&steps).unwrap();
        assert_eq!(series.len(), 3);
        assert!(series.iter().all(|(_, r)| (r.unwrap() - 1.0).abs() < 1e-12));

        let flat: Vec<(usize, Vec<SampleRecord>)> = vec![(
            0,
            errs.iter()
                .enumerate()
                .map(|(i, e)| record(i, 2.0, *e))
                .collect(),
        )];
        assert_eq!(entropy_error_track(&flat).unwrap(), vec![(0, None)]);
    }

    #[test]
    fn stratum_aggregation() {
        let ev = Evaluation::from_records(vec![
            record(0, 0.0, 1.0),
            record(1, 0.0, 2.0),
            record(3, 0.0, 3.0),
        ]);
        assert!((ev.energy_mae - 2.0).abs() < 1e-15);
        let st = ev.by_stratum();
        assert_eq!(st.len(), 2);
        assert_eq!(st[0].0, 0);
        assert!((st[0].1 - 2.0).abs() < 1e-15);
        assert!((st[1].1 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn positive_fraction() {
        let row = |step, r| MetricsRow {
            step,
            energy_mae: 0.0,
            force_mae: 0.0,
            mean_entropy: None,
            pearson_r: r,
            lr: 0.0,
        };
        let m = RunMetrics {
            rows: vec![
                row(0, Some(-1.0)),
                row(10, Some(0.2)),
                row(20, None),
                row(30, Some(0.1)),
            ],
            train_batch_r: vec![],
        };
        assert_eq!(m.positive_fraction_after(10), Some(2.0 / 3.0));
        assert_eq!(m.positive_fraction_after(40), None);
    }
}
