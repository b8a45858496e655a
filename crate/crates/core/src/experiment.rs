//! Multi-chain experiments and parameter sweeps.
//!
//! An experiment is one graph, one parameter set and several independent
//! chains; chain `i` is seeded with `base_seed + i`. Chains run in parallel on
//! a rayon pool whose size can be capped with `BLOCKSPIN_THREADS`. Results are
//! merged by chain index, so the output does not depend on scheduling.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockgraph::{gen_graph, BlockGraph};
use crate::error::{Error, Result};
use crate::glauber::{FieldMode, InitPolicy, MagnetizationTrace, Sampler, Schedule};
use crate::hamiltonian::{Magnetization, ModelParams};
use crate::meanfield::{classify_phase, PhaseDiagnosis};

pub const THREADS_ENV: &str = "BLOCKSPIN_THREADS";

/// Starting configurations across the chains of an experiment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    AllPlus,
    AllMinus,
    #[default]
    Random,
    /// Even chains start all-plus, odd chains all-minus.
    Symmetric,
    /// Even chains start with block signs `(+,-)`, odd chains `(-,+)`.
    Antisymmetric,
    /// Chain `i` starts with block signs `(+,+)`, `(+,-)`, `(-,+)`, `(-,-)`
    /// for `i mod 4 = 0, 1, 2, 3`.
    Dispersed,
}

impl InitSpec {
    pub fn policy_for(self, chain: usize) -> InitPolicy {
        match self {
            InitSpec::AllPlus => InitPolicy::AllPlus,
            InitSpec::AllMinus => InitPolicy::AllMinus,
            InitSpec::Random => InitPolicy::Random,
            InitSpec::Symmetric => {
                if chain % 2 == 0 {
                    InitPolicy::AllPlus
                } else {
                    InitPolicy::AllMinus
                }
            }
            InitSpec::Antisymmetric => {
                if chain % 2 == 0 {
                    InitPolicy::Blocks(1, -1)
                } else {
                    InitPolicy::Blocks(-1, 1)
                }
            }
            InitSpec::Dispersed => {
                let (s1, s2) = [(1, 1), (1, -1), (-1, 1), (-1, -1)][chain % 4];
                InitPolicy::Blocks(s1, s2)
            }
        }
    }
}

fn default_thin() -> u64 {
    1
}

fn default_directed() -> bool {
    true
}

/// Everything needed to reproduce one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub alpha: f64,
    /// Replaces the default `a = q/p` of the reference model.
    #[serde(default)]
    pub a_override: Option<f64>,
    pub chains: usize,
    pub sweeps: u64,
    pub burnin: u64,
    #[serde(default = "default_thin")]
    pub thin: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub graph_seed: u64,
    #[serde(default = "default_directed")]
    pub directed: bool,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub field_mode: FieldMode,
    /// Load the graph from this file instead of generating it.
    #[serde(default)]
    pub graph_file: Option<PathBuf>,
    /// Directory receiving the artifacts; nothing is written when absent.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// A config with the given model and schedule and defaults elsewhere.
    pub fn new(n: usize, p: f64, q: f64, beta: f64, alpha: f64) -> Self {
        ExperimentConfig {
            n,
            p,
            q,
            beta,
            alpha,
            a_override: None,
            chains: 1,
            sweeps: 1000,
            burnin: 100,
            thin: 1,
            base_seed: 0,
            graph_seed: 0,
            directed: true,
            init: InitSpec::Random,
            field_mode: FieldMode::Popcount,
            graph_file: None,
            out_dir: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn params(&self) -> Result<ModelParams> {
        let params = ModelParams::new(self.beta, self.alpha, self.p, self.q)?;
        match self.a_override {
            Some(a) => params.with_a(a),
            None => Ok(params),
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        Schedule::new(self.sweeps, self.burnin, self.thin)
    }

    /// Checks every precondition before any work is done.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(Error::invalid(format!(
                "n must be even and at least 2, got {}",
                self.n
            )));
        }
        if self.chains == 0 {
            return Err(Error::invalid("chains must be at least 1"));
        }
        self.params()?;
        self.schedule()?;
        Ok(())
    }

    pub fn chain_seed(&self, chain: usize) -> u64 {
        self.base_seed.wrapping_add(chain as u64)
    }

    /// Loads or generates the graph described by the config.
    pub fn graph(&self) -> Result<BlockGraph> {
        match &self.graph_file {
            Some(path) => {
                let g = BlockGraph::from_json(&fs::read_to_string(path)?)?;
                if g.n() != self.n || g.p() != self.p || g.q() != self.q {
                    return Err(Error::invalid(format!(
                        "graph file has n={}, p={}, q={}; config has n={}, p={}, q={}",
                        g.n(),
                        g.p(),
                        g.q(),
                        self.n,
                        self.p,
                        self.q
                    )));
                }
                Ok(g)
            }
            None => gen_graph(self.n, self.p, self.q, self.graph_seed, self.directed),
        }
    }
}

/// Statistics of one chain's post-burn-in samples against the predicted
/// limit points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub chain: usize,
    pub seed: u64,
    pub samples: usize,
    pub mean_abs_m1: f64,
    pub mean_abs_m2: f64,
    /// Mean of `m1 m2`.
    pub mean_product: f64,
    /// Sign of [`ChainSummary::mean_product`]: `1`, `-1` or `0`.
    pub correlation_sign: i8,
    pub positive_product_fraction: f64,
    /// Fraction of samples nearest to each predicted limit point, in the
    /// order of the diagnosis. Sums to one unless there are no samples.
    pub assignment_fractions: Vec<f64>,
    /// Largest distance between a cluster mean and its limit point, over the
    /// clusters that received samples.
    pub mode_distance: f64,
    pub insufficient_samples: bool,
}

/// Pooled statistics of all chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub diagnosis: PhaseDiagnosis,
    pub pooled: ChainSummary,
    pub chains: Vec<ChainSummary>,
    pub insufficient_samples: bool,
}

/// Summarises a set of samples against `diagnosis`.
pub fn summarize_samples(
    samples: &[Magnetization],
    diagnosis: &PhaseDiagnosis,
    chain: usize,
    seed: u64,
) -> ChainSummary {
    let k = diagnosis.limit_points.len();
    let count = samples.len();
    if count == 0 {
        return ChainSummary {
            chain,
            seed,
            samples: 0,
            mean_abs_m1: 0.0,
            mean_abs_m2: 0.0,
            mean_product: 0.0,
            correlation_sign: 0,
            positive_product_fraction: 0.0,
            assignment_fractions: vec![0.0; k],
            mode_distance: 0.0,
            insufficient_samples: true,
        };
    }
    let mut hits = vec![0usize; k];
    let mut centroid = vec![(0.0f64, 0.0f64); k];
    let (mut a1, mut a2, mut prod, mut positive) = (0.0, 0.0, 0.0, 0usize);
    for m in samples {
        a1 += m.m1.abs();
        a2 += m.m2.abs();
        let pr = m.m1 * m.m2;
        prod += pr;
        if pr > 0.0 {
            positive += 1;
        }
        let c = diagnosis.nearest(*m);
        hits[c] += 1;
        centroid[c].0 += m.m1;
        centroid[c].1 += m.m2;
    }
    let total = count as f64;
    let mut mode_distance = 0.0f64;
    for c in 0..k {
        if hits[c] > 0 {
            let h = hits[c] as f64;
            let mean = Magnetization::new(centroid[c].0 / h, centroid[c].1 / h);
            mode_distance = mode_distance.max(mean.distance(&diagnosis.limit_points[c].magnetization()));
        }
    }
    let mean_product = prod / total;
    ChainSummary {
        chain,
        seed,
        samples: count,
        mean_abs_m1: a1 / total,
        mean_abs_m2: a2 / total,
        mean_product,
        correlation_sign: if mean_product > 0.0 {
            1
        } else if mean_product < 0.0 {
            -1
        } else {
            0
        },
        positive_product_fraction: positive as f64 / total,
        assignment_fractions: hits.iter().map(|&h| h as f64 / total).collect(),
        mode_distance,
        insufficient_samples: false,
    }
}

pub fn summarize(traces: &[MagnetizationTrace], diagnosis: &PhaseDiagnosis) -> TraceSummary {
    let chains: Vec<ChainSummary> = traces
        .iter()
        .enumerate()
        .map(|(i, t)| summarize_samples(&t.samples, diagnosis, i, t.seed))
        .collect();
    let all: Vec<Magnetization> = traces.iter().flat_map(|t| t.samples.iter().copied()).collect();
    let mut pooled = summarize_samples(&all, diagnosis, 0, 0);
    pooled.chain = traces.len();
    let insufficient = chains.iter().any(|c| c.insufficient_samples);
    TraceSummary {
        diagnosis: diagnosis.clone(),
        pooled,
        chains,
        insufficient_samples: insufficient,
    }
}

/// Number of worker threads requested through `BLOCKSPIN_THREADS`, if any.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(Error::invalid(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
            Ok(k) => Ok(Some(k)),
        },
        Err(_) => Ok(None),
    }
}

fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match thread_cap()? {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::ResourceLimit(format!("cannot start thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs every chain of `config` on `g`, ordered by chain index.
pub fn run_chains(config: &ExperimentConfig, g: &BlockGraph) -> Result<Vec<MagnetizationTrace>> {
    config.validate()?;
    let params = config.params()?;
    let schedule = config.schedule()?;
    let sampler = Sampler::new(g, &params, config.field_mode)?;
    with_pool(|| {
        (0..config.chains)
            .into_par_iter()
            .map(|i| sampler.run(&schedule, config.chain_seed(i), &config.init.policy_for(i)))
            .collect::<Result<Vec<_>>>()
    })?
}

/// Result of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub graph: BlockGraph,
    pub traces: Vec<MagnetizationTrace>,
    pub summary: TraceSummary,
}

/// Builds or loads the graph, runs the chains, summarises them against
/// [`classify_phase`] and writes the artifacts when `out_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let params = config.params()?;
    let diagnosis = classify_phase(params.beta, params.lambda())?;
    let graph = config.graph()?;
    let traces = run_chains(config, &graph)?;
    let summary = summarize(&traces, &diagnosis);
    let out = ExperimentOutput {
        graph,
        traces,
        summary,
    };
    if let Some(dir) = &config.out_dir {
        write_artifacts(dir, config, &out)?;
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn unix_time() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Serialize)]
struct ChainMeta<'a> {
    chain: usize,
    seed: u64,
    sweeps: u64,
    burnin: u64,
    thin: u64,
    samples: usize,
    init: &'a InitPolicy,
    params: ModelParams,
    graph_seed: u64,
}

/// Writes `config.json`, `graph.json`, `chain_<i>.csv`, `chain_<i>.json`,
/// `summary.json` and `metadata.json` (the only file with a timestamp).
pub fn write_artifacts(dir: &Path, config: &ExperimentConfig, out: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("config.json"), config)?;
    fs::write(dir.join("graph.json"), out.graph.to_json()? + "\n")?;
    for (i, trace) in out.traces.iter().enumerate() {
        let mut w = BufWriter::new(fs::File::create(dir.join(format!("chain_{i}.csv")))?);
        trace.write_csv(&mut w)?;
        w.flush()?;
        let init = config.init.policy_for(i);
        write_json(
            &dir.join(format!("chain_{i}.json")),
            &ChainMeta {
                chain: i,
                seed: trace.seed,
                sweeps: trace.sweeps,
                burnin: trace.burnin,
                thin: trace.thin,
                samples: trace.samples.len(),
                init: &init,
                params: config.params()?,
                graph_seed: out.graph.seed(),
            },
        )?;
    }
    write_json(&dir.join("summary.json"), &out.summary)?;
    write_json(
        &dir.join("metadata.json"),
        &serde_json::json!({
            "created_unix": unix_time(),
            "crate_version": env!("CARGO_PKG_VERSION"),
        }),
    )?;
    Ok(())
}

/// Grid over `beta` and `alpha a` at fixed `n, p, q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Template for every cell; `beta`, `alpha` and `out_dir` are replaced.
    pub base: ExperimentConfig,
    pub betas: Vec<f64>,
    pub alpha_as: Vec<f64>,
}

/// One row of the phase map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: f64,
    pub alpha_a: f64,
    pub alpha: f64,
    pub seed: u64,
    pub phase: String,
    pub z_star: f64,
    pub samples: usize,
    pub mean_abs_m1: f64,
    pub mean_abs_m2: f64,
    pub positive_product_fraction: f64,
    pub mode_distance: f64,
}

pub const SWEEP_CSV_HEADER: &str = "beta,alpha_a,alpha,seed,phase,z_star,samples,mean_abs_m1,mean_abs_m2,positive_product_fraction,mode_distance";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.beta,
            self.alpha_a,
            self.alpha,
            self.seed,
            self.phase,
            self.z_star,
            self.samples,
            self.mean_abs_m1,
            self.mean_abs_m2,
            self.positive_product_fraction,
            self.mode_distance
        )
    }
}

/// Seed offset between consecutive grid cells.
pub const CELL_SEED_STRIDE: u64 = 1_000_003;

/// Cell configs in row-major order (`beta` outer, `alpha a` inner). Cell `k`
/// uses `base_seed + k * CELL_SEED_STRIDE`.
pub fn sweep_cells(spec: &SweepSpec) -> Result<Vec<ExperimentConfig>> {
    if spec.betas.is_empty() || spec.alpha_as.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    let a = spec.base.a_override.unwrap_or(spec.base.q / spec.base.p);
    let mut cells = Vec::with_capacity(spec.betas.len() * spec.alpha_as.len());
    for &beta in &spec.betas {
        for &alpha_a in &spec.alpha_as {
            if !beta.is_finite() || !alpha_a.is_finite() {
                return Err(Error::invalid("sweep grid values must be finite"));
            }
            if alpha_a != 0.0 && a == 0.0 {
                return Err(Error::invalid("alpha*a != 0 needs a > 0"));
            }
            let mut cfg = spec.base.clone();
            cfg.beta = beta;
            cfg.alpha = if alpha_a == 0.0 { 0.0 } else { alpha_a / a };
            cfg.base_seed = spec
                .base
                .base_seed
                .wrapping_add(cells.len() as u64 * CELL_SEED_STRIDE);
            cfg.out_dir = None;
            cfg.validate()?;
            cells.push(cfg);
        }
    }
    Ok(cells)
}

/// Runs every cell of the grid on one shared graph.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let cells = sweep_cells(spec)?;
    let graph = spec.base.graph()?;
    let grid = spec
        .betas
        .iter()
        .flat_map(|_| spec.alpha_as.iter().copied());
    let mut rows = Vec::with_capacity(cells.len());
    for (cfg, alpha_a) in cells.iter().zip(grid) {
        let params = cfg.params()?;
        let diagnosis = classify_phase(params.beta, params.lambda())?;
        let traces = run_chains(cfg, &graph)?;
        let s = summarize(&traces, &diagnosis);
        rows.push(SweepRow {
            beta: cfg.beta,
            alpha_a,
            alpha: cfg.alpha,
            seed: cfg.base_seed,
            phase: diagnosis.phase.name().to_string(),
            z_star: diagnosis.z_star,
            samples: s.pooled.samples,
            mean_abs_m1: s.pooled.mean_abs_m1,
            mean_abs_m2: s.pooled.mean_abs_m2,
            positive_product_fraction: s.pooled.positive_product_fraction,
            mode_distance: s.pooled.mode_distance,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(20, 0.5, 0.25, 1.0, 1.0);
        c.chains = 3;
        c.sweeps = 40;
        c.burnin = 10;
        c
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = small();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&s).unwrap(), c);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = ExperimentConfig::from_json(
            r#"{"n":4,"p":1,"q":1,"beta":1,"alpha":0,"chains":1,"sweeps":1,"burnin":0,"bogus":1}"#,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn equal_sweeps_and_burnin_flag_insufficient_samples() {
        let mut c = small();
        c.sweeps = c.burnin;
        let out = run_experiment(&c).unwrap();
        assert!(out.traces.iter().all(|t| t.is_empty()));
        assert!(out.summary.insufficient_samples);
    }

    #[test]
    fn assignment_fractions_sum_to_one() {
        let out = run_experiment(&small()).unwrap();
        for c in &out.summary.chains {
            let s: f64 = c.assignment_fractions.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dispersed_inits_cycle_quadrants() {
        let signs: Vec<_> = (0..5).map(|i| InitSpec::Dispersed.policy_for(i)).collect();
        assert_eq!(signs[0], InitPolicy::Blocks(1, 1));
        assert_eq!(signs[3], InitPolicy::Blocks(-1, -1));
        assert_eq!(signs[4], InitPolicy::Blocks(1, 1));
    }

    #[test]
    fn empty_grid_is_an_error() {
        let spec = SweepSpec {
            base: small(),
            betas: vec![],
            alpha_as: vec![0.5],
        };
        assert!(matches!(sweep(&spec), Err(Error::InvalidArgument(_))));
    }
}
