//! Adaptivity and gradient-variance analyses.
//!
//! Entropies are in nats. The marginal entropy is taken of the policy
//! averaged over all visited states, the conditional entropy is the average
//! per-state entropy, and their gap is the mutual information between action
//! and state. The gradient SNR is reported as `|mean| / |std of mean|` over
//! the output layer weights.

use rand::seq::index::sample;
use rand::Rng as _;

use crate::datagen::DataItem;
use crate::error::{Error, Result};
use crate::estimators::{batch_gradient, map_items, rollout, AcquisitionConfig, Environment, MriEnvironment, RunSettings};
use crate::policynet::PolicyNetwork;
use crate::recon::Reconstructor;
use crate::seeding::{child_rng, derive_seed, Rng};

/// Policies visited at one acquisition step, grouped by image; each image
/// holds one distribution per trajectory replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicySnapshot {
    pub step: usize,
    pub per_image: Vec<Vec<Vec<f64>>>,
}

impl PolicySnapshot {
    pub fn new(step: usize, per_image: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let first = per_image
            .iter()
            .flatten()
            .next()
            .ok_or_else(|| Error::invalid("snapshot holds no policies"))?;
        let n = first.len();
        for p in per_image.iter().flatten() {
            let total: f64 = p.iter().sum();
            if p.len() != n || p.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("snapshot entries must be distributions of equal length"));
            }
        }
        Ok(PolicySnapshot { step, per_image })
    }

    fn states(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.per_image.iter().flatten()
    }

    fn state_count(&self) -> usize {
        self.states().count()
    }

    /// Average policy over all visited states.
    pub fn mean_policy(&self) -> Vec<f64> {
        let n = self.state_count() as f64;
        let mut mean = vec![0.0; self.states().next().map_or(0, Vec::len)];
        for p in self.states() {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// The same step restricted to a resampled list of images.
    pub fn resampled(&self, images: &[usize]) -> PolicySnapshot {
        PolicySnapshot {
            step: self.step,
            per_image: images.iter().map(|&i| self.per_image[i].clone()).collect(),
        }
    }
}

/// `-sum p ln p`, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

pub fn marginal_entropy(snap: &PolicySnapshot) -> f64 {
    entropy(&snap.mean_policy())
}

pub fn conditional_entropy(snap: &PolicySnapshot) -> f64 {
    snap.states().map(|p| entropy(p)).sum::<f64>() / snap.state_count() as f64
}

/// Raw `H(A) - H(A|S)`; may be slightly negative from roundoff.
pub fn mutual_information(snap: &PolicySnapshot) -> f64 {
    marginal_entropy(snap) - conditional_entropy(snap)
}

/// One row of the per-step adaptivity report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiRow {
    pub step: usize,
    pub marginal_entropy: f64,
    pub conditional_entropy: f64,
    pub mutual_information_raw: f64,
    /// Raw value clamped at zero.
    pub mutual_information: f64,
}

impl MiRow {
    pub fn from_snapshot(snap: &PolicySnapshot) -> Self {
        let (h, hc) = (marginal_entropy(snap), conditional_entropy(snap));
        MiRow {
            step: snap.step,
            marginal_entropy: h,
            conditional_entropy: hc,
            mutual_information_raw: h - hc,
            mutual_information: (h - hc).max(0.0),
        }
    }
}

/// Runs `replicates` trajectories per environment and gathers the policy at
/// every step, one snapshot per step.
pub fn collect_snapshots<E: Environment>(
    envs: &[E],
    net: &PolicyNetwork,
    cfg: &AcquisitionConfig,
    replicates: usize,
    workers: usize,
    seed: u64,
) -> Result<Vec<PolicySnapshot>> {
    if envs.is_empty() || replicates == 0 {
        return Err(Error::invalid("snapshots need environments and replicates"));
    }
    let horizon = cfg.horizon();
    let per_env = map_items(envs, workers, |i, env| -> Result<Vec<Vec<f64>>> {
        let mut rng = child_rng(seed, "snapshot", i as u64);
        let mut policies = Vec::with_capacity(replicates * horizon);
        for _ in 0..replicates {
            rollout(env, net, cfg, &mut rng, Some(&mut policies))?;
        }
        Ok(policies)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    (0..horizon)
        .map(|t| {
            let per_image = per_env
                .iter()
                .map(|flat| (0..replicates).map(|r| flat[r * horizon + t].clone()).collect())
                .collect();
            PolicySnapshot::new(t, per_image)
        })
        .collect()
}

pub fn snapshots_for_items(
    items: &[&DataItem],
    net: &PolicyNetwork,
    recon: &Reconstructor,
    cfg: &AcquisitionConfig,
    replicates: usize,
    settings: &RunSettings,
    seed: u64,
) -> Result<Vec<PolicySnapshot>> {
    let envs = items
        .iter()
        .map(|it| MriEnvironment::new(it, recon, settings.window))
        .collect::<Result<Vec<_>>>()?;
    collect_snapshots(&envs, net, cfg, replicates, settings.workers, seed)
}

/// Mutual information averaged over steps.
pub fn mean_mutual_information(snaps: &[PolicySnapshot]) -> f64 {
    snaps.iter().map(mutual_information).sum::<f64>() / snaps.len() as f64
}

/// Standard deviation of [`mean_mutual_information`] under resampling of
/// images with replacement.
pub fn bootstrap_mi_std(snaps: &[PolicySnapshot], resamples: usize, rng: &mut Rng) -> Result<f64> {
    let n = snaps
        .first()
        .map(|s| s.per_image.len())
        .ok_or_else(|| Error::invalid("no snapshots to resample"))?;
    if resamples < 2 {
        return Err(Error::invalid("need at least two bootstrap resamples"));
    }
    let values: Vec<f64> = (0..resamples)
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let re: Vec<PolicySnapshot> = snaps.iter().map(|s| s.resampled(&idx)).collect();
            mean_mutual_information(&re)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / resamples as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (resamples as f64 - 1.0);
    Ok(var.sqrt())
}

/// `B` gradient estimates restricted to the output layer weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBatchSet {
    gradients: Vec<Vec<f64>>,
}

impl GradientBatchSet {
    pub fn new(gradients: Vec<Vec<f64>>) -> Result<Self> {
        if gradients.len() < 2 {
            return Err(Error::invalid("need at least two gradient batches"));
        }
        let n = gradients[0].len();
        if n == 0 || gradients.iter().any(|g| g.len() != n) {
            return Err(Error::invalid("gradient batches must be nonempty and equally long"));
        }
        if gradients.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite gradient in batch set".into()));
        }
        Ok(GradientBatchSet { gradients })
    }

    pub fn len(&self) -> usize {
        self.gradients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gradients.is_empty()
    }

    pub fn gradients(&self) -> &[Vec<f64>] {
        &self.gradients
    }
}

/// `|mu| / |sigma_mu|` with `sigma_mu^2 = sum (g - mu)^2 / (B (B - 1))` per
/// coordinate.
pub fn gradient_snr(set: &GradientBatchSet) -> Result<f64> {
    let b = set.len() as f64;
    let n = set.gradients[0].len();
    let mut mean = vec![0.0; n];
    for g in &set.gradients {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b);
    let mut var = vec![0.0; n];
    for g in &set.gradients {
        for ((s, v), m) in var.iter_mut().zip(g).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sigma = (var.iter().sum::<f64>() / (b * (b - 1.0))).sqrt();
    if sigma == 0.0 {
        return Err(Error::DegenerateVariance(
            "all gradient batches are identical".into(),
        ));
    }
    let mu = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    Ok(mu / sigma)
}

/// `batches` independent batch gradients of the configured estimator, each
/// from `settings.batch_size` items drawn without replacement, restricted
/// to the output layer weights. The network is not updated.
pub fn collect_gradient_batches(
    items: &[&DataItem],
    net: &PolicyNetwork,
    recon: &Reconstructor,
    cfg: &AcquisitionConfig,
    settings: &RunSettings,
    batches: usize,
    seed: u64,
) -> Result<GradientBatchSet> {
    let size = settings.batch_size.min(items.len());
    if size == 0 {
        return Err(Error::invalid("no items to draw batches from"));
    }
    let range = net.final_layer_weights();
    let mut rng = child_rng(seed, "snr", 0);
    let mut gradients = Vec::with_capacity(batches);
    for b in 0..batches {
        let chosen: Vec<&DataItem> = sample(&mut rng, items.len(), size)
            .into_iter()
            .map(|i| items[i])
            .collect();
        let batch_seed = derive_seed(seed, "snr-batch", b as u64);
        let (grad, _) = batch_gradient(&chosen, net, recon, cfg, settings, batch_seed)?;
        gradients.push(grad.accum[range.clone()].to_vec());
    }
    GradientBatchSet::new(gradients)
}

/// `heat[t][c]`: fraction of sampled trajectories that have measured column
/// `c` once `t + 1` acquisitions have been made. Row 0 is the center mask.
pub fn column_heatmap(
    items: &[&DataItem],
    net: &PolicyNetwork,
    recon: &Reconstructor,
    cfg: &AcquisitionConfig,
    replicates: usize,
    settings: &RunSettings,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if items.is_empty() || replicates == 0 {
        return Err(Error::invalid("heatmap needs items and replicates"));
    }
    let width = cfg.width;
    let horizon = cfg.horizon();
    let per_item = map_items(items, settings.workers, |i, item| -> Result<Vec<Vec<f64>>> {
        let env = MriEnvironment::new(item, recon, settings.window)?;
        let mut rng = child_rng(seed, "heatmap", i as u64);
        let center = env.initial_state(cfg.initial_budget)?.mask;
        let mut counts = vec![vec![0.0; width]; horizon + 1];
        for _ in 0..replicates {
            let (record, _) = rollout(&env, net, cfg, &mut rng, None)?;
            let mut mask = center.clone();
            for (t, row) in counts.iter_mut().enumerate() {
                if t > 0 {
                    mask = mask.add_column(record.actions[t - 1])?;
                }
                for c in mask.columns() {
                    row[c] += 1.0;
                }
            }
        }
        Ok(counts)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let total = (items.len() * replicates) as f64;
    let mut heat = vec![vec![0.0; width]; horizon + 1];
    for counts in per_item {
        for (h, c) in heat.iter_mut().flatten().zip(counts.iter().flatten()) {
            *h += c;
        }
    }
    heat.iter_mut().flatten().for_each(|h| *h /= total);
    Ok(heat)
}
