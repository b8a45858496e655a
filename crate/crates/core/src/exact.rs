//! Exact computations by enumeration and binomial decomposition.
//!
//! States of an `n`-agent system are encoded as bit masks: bit `i` set means
//! `sigma_i = +1`. Full enumeration walks the masks in Gray-code order so that
//! consecutive states differ by one flip and the interaction sums can be
//! updated from the flipped site's neighbourhood alone.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockgraph::BlockGraph;
use crate::error::{Error, Result};
use crate::hamiltonian::{
    edge_alignment, energy_complete, energy_gap_bound, link_counts, Magnetization, ModelParams,
    SpinConfig,
};
use crate::spins::{signed_sum, PlusMask};

/// Largest `n` for which `2^n` states are enumerated.
pub const MAX_ENUMERATION_N: usize = 20;

/// Largest `n` for which [`SigmaSource::All`] is accepted.
pub const MAX_CONCENTRATION_ENUMERATION_N: usize = 14;

/// Default constant `c` in `gamma = c / sqrt(p n)`, `kappa = c / sqrt(q n)`.
pub const DEFAULT_CONCENTRATION_C: f64 = 3.0;

fn check_enumerable(n: usize) -> Result<()> {
    if n > MAX_ENUMERATION_N {
        return Err(Error::ResourceLimit(format!(
            "exact enumeration needs 2^n states; n = {n} exceeds {MAX_ENUMERATION_N}"
        )));
    }
    Ok(())
}

/// `ln sum_k exp(x_k)`, shifted by the maximum. Empty input gives `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln k!` for `k = 0..=m`.
pub fn ln_factorials(m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for k in 1..=m {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `ln C(m, k)` for `k = 0..=m`.
pub fn ln_binomial_row(m: usize) -> Vec<f64> {
    let f = ln_factorials(m);
    (0..=m).map(|k| f[m] - f[k] - f[m - k]).collect()
}

fn block_sums_of_mask(n: usize, mask: u64) -> (i64, i64) {
    let half = n / 2;
    let low = (1u64 << half) - 1;
    let k1 = i64::from((mask & low).count_ones());
    let k2 = i64::from((mask >> half).count_ones());
    let h = half as i64;
    (2 * k1 - h, 2 * k2 - h)
}

/// `-H(sigma)` of the quenched model for every state, indexed by mask.
pub fn log_weights_random(g: &BlockGraph, params: &ModelParams) -> Result<Vec<f64>> {
    let n = g.n();
    check_enumerable(n)?;
    if params.p != g.p() || params.q != g.q() {
        return Err(Error::invalid("parameters do not match the graph's p, q"));
    }
    let scale = 1.0 / (2.0 * n as f64 * params.p);
    let weight = |a: i64, b: i64| (params.beta * a as f64 + params.alpha * b as f64) * scale;

    let mut sigma = SpinConfig::all_minus(n);
    let mut plus = PlusMask::from_spins(sigma.spins());
    // all spins equal: every edge contributes +1
    let mut within = g.eps().count_ones() as i64;
    let mut between = g.delta().count_ones() as i64;
    let mut out = vec![0.0; 1usize << n];
    out[0] = weight(within, between);
    let mut mask = 0u64;
    for k in 1u64..(1u64 << n) {
        let site = k.trailing_zeros() as usize;
        let old = i64::from(sigma.get(site));
        let w = signed_sum(g.eps(), site, &plus) + signed_sum(g.eps_transposed(), site, &plus);
        let b = signed_sum(g.delta(), site, &plus) + signed_sum(g.delta_transposed(), site, &plus);
        within -= 2 * old * w;
        between -= 2 * old * b;
        sigma.flip(site);
        plus.set(site, old < 0);
        mask ^= 1 << site;
        out[mask as usize] = weight(within, between);
    }
    Ok(out)
}

/// Which Gibbs measure to enumerate.
#[derive(Clone, Copy, Debug)]
pub enum GibbsModel<'a> {
    /// Quenched model on a graph.
    Random {
        graph: &'a BlockGraph,
        params: &'a ModelParams,
    },
    /// Fully connected reference model with block coupling `lambda`.
    Complete { n: usize, beta: f64, lambda: f64 },
}

/// A probability distribution over admissible block magnetizations, keyed by
/// block spin sums `(s1, s2)` with `m_i = 2 s_i / n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationDistribution {
    pub n: usize,
    pub probs: BTreeMap<(i64, i64), f64>,
}

impl MagnetizationDistribution {
    /// Empirical distribution of a sample.
    pub fn from_samples<'a>(n: usize, samples: impl IntoIterator<Item = &'a Magnetization>) -> Self {
        let mut counts: BTreeMap<(i64, i64), u64> = BTreeMap::new();
        let mut total = 0u64;
        for m in samples {
            let key = m
                .block_sums(n)
                .expect("sample is not an admissible magnetization");
            *counts.entry(key).or_default() += 1;
            total += 1;
        }
        let probs = counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / total as f64))
            .collect();
        MagnetizationDistribution { n, probs }
    }

    pub fn prob(&self, m: Magnetization) -> f64 {
        m.block_sums(self.n)
            .and_then(|k| self.probs.get(&k).copied())
            .unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Magnetization, f64)> + '_ {
        self.probs
            .iter()
            .map(|(&(s1, s2), &p)| (Magnetization::from_block_sums(self.n, s1, s2), p))
    }

    pub fn total_variation(&self, other: &MagnetizationDistribution) -> f64 {
        let mut keys: Vec<_> = self.probs.keys().chain(other.probs.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        0.5 * keys
            .iter()
            .map(|k| {
                let a = self.probs.get(k).copied().unwrap_or(0.0);
                let b = other.probs.get(k).copied().unwrap_or(0.0);
                (a - b).abs()
            })
            .sum::<f64>()
    }

    /// Marginal law of the first (`block == 0`) or second block sum.
    pub fn marginal(&self, block: usize) -> BTreeMap<i64, f64> {
        let mut out = BTreeMap::new();
        for (&(s1, s2), &p) in &self.probs {
            *out.entry(if block == 0 { s1 } else { s2 }).or_insert(0.0) += p;
        }
        out
    }

    fn from_log_weights(n: usize, entries: impl Iterator<Item = ((i64, i64), f64)>) -> Self {
        let entries: Vec<_> = entries.collect();
        let max = entries
            .iter()
            .map(|e| e.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut acc: BTreeMap<(i64, i64), f64> = BTreeMap::new();
        for (k, w) in entries {
            *acc.entry(k).or_insert(0.0) += (w - max).exp();
        }
        let total: f64 = acc.values().sum();
        for v in acc.values_mut() {
            *v /= total;
        }
        MagnetizationDistribution { n, probs: acc }
    }
}

/// Exact law of the block magnetizations by summing over all `2^n` states.
pub fn enumerate_gibbs(model: &GibbsModel<'_>) -> Result<MagnetizationDistribution> {
    match *model {
        GibbsModel::Random { graph, params } => {
            let n = graph.n();
            let lw = log_weights_random(graph, params)?;
            Ok(MagnetizationDistribution::from_log_weights(
                n,
                lw.iter()
                    .enumerate()
                    .map(|(mask, &w)| (block_sums_of_mask(n, mask as u64), w)),
            ))
        }
        GibbsModel::Complete { n, beta, lambda } => {
            if n < 2 || n % 2 != 0 {
                return Err(Error::invalid(format!("n must be even and >= 2, got {n}")));
            }
            check_enumerable(n)?;
            Ok(MagnetizationDistribution::from_log_weights(
                n,
                (0..(1u64 << n)).map(|mask| {
                    let (s1, s2) = block_sums_of_mask(n, mask);
                    let m = Magnetization::from_block_sums(n, s1, s2);
                    ((s1, s2), -energy_complete(n, beta, lambda, m))
                }),
            ))
        }
    }
}

/// `ln Z` of the quenched model by full enumeration.
pub fn log_partition_random(g: &BlockGraph, params: &ModelParams) -> Result<f64> {
    Ok(log_sum_exp(&log_weights_random(g, params)?))
}

/// Log-weights `ln C(n/2, k1) + ln C(n/2, k2) - H~(m)` of the reference
/// model, one row per `k1` (number of `+1` spins in block `S`).
fn complete_row(
    n: usize,
    beta: f64,
    lambda: f64,
    lb: &[f64],
    k1: usize,
) -> impl Iterator<Item = f64> + '_ {
    let half = n / 2;
    let to_m = move |k: usize| (2.0 * k as f64 - half as f64) * 2.0 / n as f64;
    let m1 = to_m(k1);
    (0..=half).map(move |k2| {
        let m = Magnetization::new(m1, to_m(k2));
        lb[k1] + lb[k2] - energy_complete(n, beta, lambda, m)
    })
}

fn check_even(n: usize) -> Result<()> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::invalid(format!("n must be even and >= 2, got {n}")));
    }
    Ok(())
}

/// `ln Z~` of the fully connected reference model, summing the `(n/2 + 1)^2`
/// admissible magnetizations with their exact binomial multiplicities.
pub fn log_partition_complete(n: usize, beta: f64, lambda: f64) -> Result<f64> {
    check_even(n)?;
    let half = n / 2;
    let lb = ln_binomial_row(half);
    let max = (0..=half)
        .into_par_iter()
        .map(|k1| complete_row(n, beta, lambda, &lb, k1).fold(f64::NEG_INFINITY, f64::max))
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let sum: f64 = (0..=half)
        .into_par_iter()
        .map(|k1| complete_row(n, beta, lambda, &lb, k1).map(|w| (w - max).exp()).sum::<f64>())
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(max + sum.ln())
}

/// Exact law of the block magnetizations of the reference model through the
/// binomial decomposition (no enumeration, any even `n`).
pub fn complete_distribution(n: usize, beta: f64, lambda: f64) -> Result<MagnetizationDistribution> {
    check_even(n)?;
    let half = n / 2;
    let lb = ln_binomial_row(half);
    let h = half as i64;
    Ok(MagnetizationDistribution::from_log_weights(
        n,
        (0..=half).flat_map(|k1| {
            complete_row(n, beta, lambda, &lb, k1)
                .enumerate()
                .map(move |(k2, w)| ((2 * k1 as i64 - h, 2 * k2 as i64 - h), w))
                .collect::<Vec<_>>()
        }),
    ))
}

/// Which configurations [`concentration_report`] inspects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    /// Every configuration (`n <= 14`).
    All,
    /// `count` uniform random configurations drawn with `seed`.
    Sample { count: usize, seed: u64 },
}

/// Worst relative deviations of the aligned-edge counts from their means.
///
/// For each tested configuration the within-block check compares
/// `sum eps_ij 1{sigma_i = sigma_j}` with `p L`, where `L` is the number of
/// aligned within-block ordered pairs with `i != j` (that is `|L+_b| - n`,
/// since the diagonal carries no edge variable). The between-block check
/// uses the aligned pairs when `m1 m2 >= 0` and the anti-aligned pairs
/// otherwise, against `q |L+-_nb|`. Deviations are reported relative to the
/// mean, so membership means every deviation is at most `gamma` (resp. `kappa`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub gamma: f64,
    pub kappa: f64,
    pub tested: usize,
    pub worst_within: f64,
    pub worst_between_aligned: f64,
    pub worst_between_antialigned: f64,
    /// Configurations failing at least one inequality.
    pub violations: usize,
    /// Diagonal pairs removed from `|L+_b|` before comparing (`n`).
    pub diagonal_adjustment: u64,
    pub member: bool,
}

fn relative_deviation(count: u64, prob: f64, pairs: u64) -> f64 {
    if pairs == 0 {
        return 0.0;
    }
    let mean = prob * pairs as f64;
    (count as f64 - mean).abs() / mean
}

pub fn concentration_report(
    g: &BlockGraph,
    gamma: f64,
    kappa: f64,
    source: SigmaSource,
) -> Result<ConcentrationReport> {
    if !(gamma > 0.0) || !(kappa > 0.0) {
        return Err(Error::invalid(format!(
            "gamma and kappa must be positive, got {gamma}, {kappa}"
        )));
    }
    let n = g.n();
    let configs: Box<dyn Iterator<Item = SpinConfig>> = match source {
        SigmaSource::All => {
            if n > MAX_CONCENTRATION_ENUMERATION_N {
                return Err(Error::ResourceLimit(format!(
                    "enumerating all configurations needs n <= {MAX_CONCENTRATION_ENUMERATION_N}, got {n}"
                )));
            }
            Box::new((0..(1u64 << n)).map(move |m| SpinConfig::from_mask(n, m)))
        }
        SigmaSource::Sample { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Box::new((0..count).map(move |_| SpinConfig::random(n, &mut rng)))
        }
    };
    let mut report = ConcentrationReport {
        gamma,
        kappa,
        tested: 0,
        worst_within: 0.0,
        worst_between_aligned: 0.0,
        worst_between_antialigned: 0.0,
        violations: 0,
        diagonal_adjustment: n as u64,
        member: true,
    };
    for sigma in configs {
        let links = link_counts(&sigma);
        let al = edge_alignment(g, &sigma)?;
        let (s1, s2) = sigma.block_sums();
        let dev_b = relative_deviation(al.within_aligned, g.p(), links.lb_plus - n as u64);
        report.worst_within = report.worst_within.max(dev_b);
        let mut ok = dev_b <= gamma;
        if s1 * s2 >= 0 {
            let d = relative_deviation(al.between_aligned, g.q(), links.lnb_plus);
            report.worst_between_aligned = report.worst_between_aligned.max(d);
            ok &= d <= kappa;
        } else {
            let d = relative_deviation(al.between_antialigned, g.q(), links.lnb_minus);
            report.worst_between_antialigned = report.worst_between_antialigned.max(d);
            ok &= d <= kappa;
        }
        if !ok {
            report.violations += 1;
        }
        report.tested += 1;
    }
    report.member = report.violations == 0;
    Ok(report)
}

/// Partition-function sandwich between the quenched and reference models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub log_z: f64,
    pub log_z_tilde: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// `beta gamma n + 2 |alpha a| kappa n`
    pub bound: f64,
    /// `ln Z - (ln Z~ - bound)`
    pub lower_slack: f64,
    /// `(ln Z~ + bound) - ln Z`
    pub upper_slack: f64,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.lower_slack > 0.0 && self.upper_slack > 0.0
    }
}

/// Compares `ln Z` with `ln Z~` at `lambda = alpha a`, using
/// `gamma = c / sqrt(p n)` and `kappa = c / sqrt(q n)`.
pub fn sandwich_check(g: &BlockGraph, params: &ModelParams, c: f64) -> Result<SandwichReport> {
    if !(c > 0.0) {
        return Err(Error::invalid(format!("c must be positive, got {c}")));
    }
    let n = g.n();
    let log_z = log_partition_random(g, params)?;
    let log_z_tilde = log_partition_complete(n, params.beta, params.lambda())?;
    let gamma = c / (g.p() * n as f64).sqrt();
    let kappa = c / (g.q() * n as f64).sqrt();
    let bound = energy_gap_bound(params, n, gamma, kappa)?;
    Ok(SandwichReport {
        log_z,
        log_z_tilde,
        gamma,
        kappa,
        bound,
        lower_slack: log_z - (log_z_tilde - bound),
        upper_slack: (log_z_tilde + bound) - log_z,
    })
}
