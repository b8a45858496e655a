//! Heat-bath Glauber dynamics for the quenched Gibbs measure.
//!
//! Each update picks a site `i` uniformly at random and redraws `sigma_i` from
//! its conditional law under `mu(sigma) ~ exp(-H(sigma))`:
//!
//! ```text
//! P(sigma_i = +1 | rest) = 1 / (1 + exp(-2 x_i))
//! x_i = beta/(2 n p) * sum_j (eps_ij + eps_ji) sigma_j
//!     + alpha/(2 n p) * sum_j (delta_ij + delta_ji) sigma_j
//! ```
//!
//! Because the graph is directed, the conditional sees both the agents `i`
//! listens to and the agents listening to `i`; on an undirected graph the
//! two sums coincide. A sweep is `n` such updates, the discrete-time
//! embedded chain of independent unit-rate Poisson clocks, which has the same
//! stationary law.
//!
//! [`logit_choice_probability`] is the agent-level logit rule, which uses only
//! row `i` and half the coupling. It is kept for reference; it is not the
//! Gibbs conditional and the sampler does not use it.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockgraph::BlockGraph;
use crate::error::{Error, Result};
use crate::exact::{self, log_sum_exp};
use crate::hamiltonian::{magnetization, Magnetization, ModelParams, SpinConfig};
use crate::spins::{signed_row_sum, PlusMask};

/// Largest system for which [`detailed_balance_check`] enumerates states.
pub const MAX_DETAILED_BALANCE_N: usize = 16;

#[inline]
fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// How a sampler obtains the neighbour sums of a site.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// Masked popcounts over the adjacency rows on every update.
    #[default]
    Popcount,
    /// Integer neighbour sums kept up to date on every flip.
    Cached,
}

/// Starting configuration of a chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    AllPlus,
    AllMinus,
    /// Independent fair coins drawn from the chain's generator.
    Random,
    /// Block `S` set to the first sign, block `S^c` to the second.
    Blocks(i8, i8),
    Given(Vec<i8>),
}

impl InitPolicy {
    pub fn build<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<SpinConfig> {
        let sigma = match self {
            InitPolicy::AllPlus => SpinConfig::all_plus(n),
            InitPolicy::AllMinus => SpinConfig::all_minus(n),
            InitPolicy::Random => SpinConfig::random(n, rng),
            InitPolicy::Blocks(s1, s2) => SpinConfig::blocks(n, *s1, *s2)?,
            InitPolicy::Given(v) => SpinConfig::new(v.clone())?,
        };
        if sigma.len() != n {
            return Err(Error::invalid(format!(
                "initial configuration has {} spins, graph has {n}",
                sigma.len()
            )));
        }
        Ok(sigma)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct FieldCache {
    within: Vec<i32>,
    between: Vec<i32>,
}

/// Mutable state of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    sigma: SpinConfig,
    plus: PlusMask,
    sweep_index: u64,
    rng: ChaCha8Rng,
    cache: Option<FieldCache>,
}

impl ChainState {
    pub fn sigma(&self) -> &SpinConfig {
        &self.sigma
    }

    pub fn sweep_index(&self) -> u64 {
        self.sweep_index
    }

    pub fn magnetization(&self) -> Magnetization {
        magnetization(&self.sigma)
    }

    pub fn block_sums(&self) -> (i64, i64) {
        self.sigma.block_sums()
    }
}

/// Precomputed update kernel for one graph and parameter set.
#[derive(Clone, Debug)]
pub struct Sampler<'g> {
    g: &'g BlockGraph,
    params: ModelParams,
    within_coupling: f64,
    between_coupling: f64,
    /// word ranges of the own block and the other block, indexed by block
    own_words: [Range<usize>; 2],
    other_words: [Range<usize>; 2],
    mode: FieldMode,
}

impl<'g> Sampler<'g> {
    pub fn new(g: &'g BlockGraph, params: &ModelParams, mode: FieldMode) -> Result<Self> {
        if params.p != g.p() || params.q != g.q() {
            return Err(Error::invalid("parameters do not match the graph's p, q"));
        }
        let n = g.n();
        let half = n / 2;
        let words = n.div_ceil(64);
        let first = 0..half.div_ceil(64);
        let second = half / 64..words;
        let scale = 2.0 * n as f64 * params.p;
        Ok(Sampler {
            g,
            params: *params,
            within_coupling: params.beta / scale,
            between_coupling: params.alpha / scale,
            own_words: [first.clone(), second.clone()],
            other_words: [second, first],
            mode,
        })
    }

    pub fn graph(&self) -> &BlockGraph {
        self.g
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn mode(&self) -> FieldMode {
        self.mode
    }

    /// Integer sums `(sum_j (eps_ij + eps_ji) s_j, sum_j (delta_ij + delta_ji) s_j)`.
    #[inline]
    fn neighbour_sums_from_mask(&self, plus: &PlusMask, i: usize) -> (i64, i64) {
        let b = usize::from(i >= self.g.half());
        let own = self.own_words[b].clone();
        let other = self.other_words[b].clone();
        let pw = plus.words();
        let within = signed_row_sum(self.g.eps().row(i), pw, own.clone())
            + signed_row_sum(self.g.eps_transposed().row(i), pw, own);
        let between = signed_row_sum(self.g.delta().row(i), pw, other.clone())
            + signed_row_sum(self.g.delta_transposed().row(i), pw, other);
        (within, between)
    }

    fn fresh_cache(&self, plus: &PlusMask) -> FieldCache {
        let (within, between) = (0..self.g.n())
            .map(|i| {
                let (w, b) = self.neighbour_sums_from_mask(plus, i);
                (w as i32, b as i32)
            })
            .unzip();
        FieldCache { within, between }
    }

    /// Local field `x_i` of the Gibbs conditional.
    #[inline]
    fn field_from_sums(&self, within: i64, between: i64) -> f64 {
        self.within_coupling * within as f64 + self.between_coupling * between as f64
    }

    fn check_site(&self, sigma: &SpinConfig, i: usize) -> Result<()> {
        if sigma.len() != self.g.n() {
            return Err(Error::invalid("configuration size does not match the graph"));
        }
        if i >= self.g.n() {
            return Err(Error::invalid(format!(
                "site {i} out of range for n = {}",
                self.g.n()
            )));
        }
        Ok(())
    }

    /// `P(sigma_i = +1 | sigma_j, j != i)` under the Gibbs measure.
    pub fn prob_plus(&self, sigma: &SpinConfig, i: usize) -> Result<f64> {
        self.check_site(sigma, i)?;
        let (w, b) = self.neighbour_sums_from_mask(&sigma.plus_mask(), i);
        Ok(logistic(2.0 * self.field_from_sums(w, b)))
    }

    pub fn init_state(&self, sigma: SpinConfig, seed: u64) -> Result<ChainState> {
        self.init_state_with_rng(sigma, ChaCha8Rng::seed_from_u64(seed))
    }

    fn init_state_with_rng(&self, sigma: SpinConfig, rng: ChaCha8Rng) -> Result<ChainState> {
        if sigma.len() != self.g.n() {
            return Err(Error::invalid("configuration size does not match the graph"));
        }
        let plus = sigma.plus_mask();
        let cache = match self.mode {
            FieldMode::Popcount => None,
            FieldMode::Cached => Some(self.fresh_cache(&plus)),
        };
        Ok(ChainState {
            sigma,
            plus,
            sweep_index: 0,
            rng,
            cache,
        })
    }

    #[inline]
    fn update_site(&self, state: &mut ChainState, i: usize) {
        let (w, b) = match &state.cache {
            Some(c) => (i64::from(c.within[i]), i64::from(c.between[i])),
            None => self.neighbour_sums_from_mask(&state.plus, i),
        };
        let p_plus = logistic(2.0 * self.field_from_sums(w, b));
        let new: i8 = if state.rng.gen::<f64>() < p_plus { 1 } else { -1 };
        if new != state.sigma.get(i) {
            state.sigma.set(i, new);
            state.plus.set(i, new > 0);
            if let Some(cache) = &mut state.cache {
                let d = 2 * i32::from(new);
                let g = self.g;
                for k in g.eps().row_iter(i).chain(g.eps_transposed().row_iter(i)) {
                    cache.within[k] += d;
                }
                for k in g.delta().row_iter(i).chain(g.delta_transposed().row_iter(i)) {
                    cache.between[k] += d;
                }
            }
        }
    }

    /// `n` single-site heat-bath updates at uniformly random sites.
    pub fn sweep(&self, state: &mut ChainState) {
        let n = self.g.n();
        for _ in 0..n {
            let i = state.rng.gen_range(0..n);
            self.update_site(state, i);
        }
        state.sweep_index += 1;
        if cfg!(debug_assertions) {
            if let Some(cache) = &state.cache {
                debug_assert_eq!(
                    cache,
                    &self.fresh_cache(&state.plus),
                    "cached neighbour sums drifted"
                );
            }
        }
    }

    /// Runs one chain and records the block magnetizations after every
    /// `thin`-th sweep past the burn-in.
    pub fn run(&self, schedule: &Schedule, seed: u64, init: &InitPolicy) -> Result<MagnetizationTrace> {
        schedule.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sigma = init.build(self.g.n(), &mut rng)?;
        let mut state = self.init_state_with_rng(sigma, rng)?;
        let n = self.g.n();
        let mut samples = Vec::with_capacity(schedule.sample_count());
        for t in 1..=schedule.sweeps {
            self.sweep(&mut state);
            if t > schedule.burnin && (t - schedule.burnin) % schedule.thin == 0 {
                let (s1, s2) = state.block_sums();
                samples.push(Magnetization::from_block_sums(n, s1, s2));
            }
        }
        Ok(MagnetizationTrace {
            n,
            samples,
            burnin: schedule.burnin,
            thin: schedule.thin,
            sweeps: schedule.sweeps,
            seed,
        })
    }
}

/// `P(sigma_i = +1 | rest)` under the Gibbs measure of `g`.
pub fn flip_probability(
    g: &BlockGraph,
    params: &ModelParams,
    sigma: &SpinConfig,
    i: usize,
) -> Result<f64> {
    Sampler::new(g, params, FieldMode::Popcount)?.prob_plus(sigma, i)
}

/// Agent-level logit choice probability `e^x / (e^x + e^-x)` with
/// `x = beta/(2 p n) sum_{j: eps_ij=1} sigma_j + alpha/(2 p n) sum_{j: delta_ij=1} sigma_j`.
pub fn logit_choice_probability(
    g: &BlockGraph,
    params: &ModelParams,
    sigma: &SpinConfig,
    i: usize,
) -> Result<f64> {
    let sampler = Sampler::new(g, params, FieldMode::Popcount)?;
    sampler.check_site(sigma, i)?;
    let plus = sigma.plus_mask();
    let w = crate::spins::signed_sum(g.eps(), i, &plus);
    let b = crate::spins::signed_sum(g.delta(), i, &plus);
    Ok(logistic(2.0 * sampler.field_from_sums(w, b)))
}

/// One sweep with a freshly built kernel.
pub fn sweep(g: &BlockGraph, params: &ModelParams, state: &mut ChainState) -> Result<()> {
    Sampler::new(g, params, FieldMode::Popcount)?.sweep(state);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub sweeps: u64,
    pub burnin: u64,
    pub thin: u64,
}

impl Schedule {
    pub fn new(sweeps: u64, burnin: u64, thin: u64) -> Result<Self> {
        let s = Schedule { sweeps, burnin, thin };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        if self.sweeps < self.burnin {
            return Err(Error::invalid(format!(
                "sweeps ({}) must not be smaller than burn-in ({})",
                self.sweeps, self.burnin
            )));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        ((self.sweeps - self.burnin) / self.thin) as usize
    }
}

pub fn run_chain(
    g: &BlockGraph,
    params: &ModelParams,
    schedule: &Schedule,
    seed: u64,
    init: &InitPolicy,
) -> Result<MagnetizationTrace> {
    Sampler::new(g, params, FieldMode::Popcount)?.run(schedule, seed, init)
}

/// Block magnetizations recorded by one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationTrace {
    pub n: usize,
    pub samples: Vec<Magnetization>,
    pub burnin: u64,
    pub thin: u64,
    pub sweeps: u64,
    pub seed: u64,
}

impl MagnetizationTrace {
    /// Sweep after which sample `k` was recorded.
    pub fn sweep_of(&self, k: usize) -> u64 {
        self.burnin + (k as u64 + 1) * self.thin
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sweep,m1,m2")?;
        for (k, m) in self.samples.iter().enumerate() {
            writeln!(w, "{},{},{}", self.sweep_of(k), m.m1, m.m2)?;
        }
        Ok(())
    }
}

/// Largest `|mu(s) P(s -> s^i) - mu(s^i) P(s^i -> s)|` over all states and
/// single-site flips, with exact `mu` from enumeration.
pub fn detailed_balance_check(g: &BlockGraph, params: &ModelParams) -> Result<f64> {
    detailed_balance_violation(g, params, params)
}

/// Like [`detailed_balance_check`], but the transition kernel is built from
/// `kernel` while `mu` is the Gibbs measure of `target`.
pub fn detailed_balance_violation(
    g: &BlockGraph,
    target: &ModelParams,
    kernel: &ModelParams,
) -> Result<f64> {
    let n = g.n();
    if n > MAX_DETAILED_BALANCE_N {
        return Err(Error::ResourceLimit(format!(
            "detailed balance check enumerates 2^n states; n = {n} exceeds {MAX_DETAILED_BALANCE_N}"
        )));
    }
    let log_w = exact::log_weights_random(g, target)?;
    let log_z = log_sum_exp(&log_w);
    let mu: Vec<f64> = log_w.iter().map(|w| (w - log_z).exp()).collect();
    let sampler = Sampler::new(g, kernel, FieldMode::Popcount)?;
    let mut worst = 0.0f64;
    for mask in 0..(1u64 << n) {
        let sigma = SpinConfig::from_mask(n, mask);
        let plus = sigma.plus_mask();
        for i in 0..n {
            let other = mask ^ (1 << i);
            if other < mask {
                continue;
            }
            // site i's conditional does not depend on sigma_i itself
            let (w, b) = sampler.neighbour_sums_from_mask(&plus, i);
            let p_plus = logistic(2.0 * sampler.field_from_sums(w, b));
            let to_plus = p_plus / n as f64;
            let to_minus = (1.0 - p_plus) / n as f64;
            let (forward, backward) = if sigma.get(i) > 0 {
                (to_minus, to_plus)
            } else {
                (to_plus, to_minus)
            };
            let v = (mu[mask as usize] * forward - mu[other as usize] * backward).abs();
            worst = worst.max(v);
        }
    }
    Ok(worst)
}
