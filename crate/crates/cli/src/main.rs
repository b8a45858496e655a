use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use blockspin::exact::{enumerate_gibbs, sandwich_check, GibbsModel, DEFAULT_CONCENTRATION_C};
use blockspin::experiment::{
    run_experiment, sweep, write_sweep_csv, ExperimentConfig, InitSpec, SweepSpec,
};
use blockspin::glauber::FieldMode;
use blockspin::meanfield::{free_energy_variational, RateFunction};
use blockspin::{classify_phase, edge_counts, gen_graph, BlockGraph, Error, ModelParams, Result};

#[derive(Parser)]
#[command(name = "blockspin", version, about = "Two-block Ising model on random directed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a two-block random graph and write it as JSON.
    Graph {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Draw each unordered pair once and mirror it.
        #[arg(long)]
        undirected: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run Glauber chains and summarise them against the predicted phase.
    Sample(SampleArgs),
    /// Exact partition functions and magnetization law by enumeration.
    Exact {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        /// Replaces the default a = q/p.
        #[arg(long)]
        a: Option<f64>,
        /// Constant c in gamma = c/sqrt(pn), kappa = c/sqrt(qn).
        #[arg(long = "gamma-c", default_value_t = DEFAULT_CONCENTRATION_C)]
        gamma_c: f64,
    },
    /// Phase and limit points of the block magnetizations.
    Phase {
        #[arg(long)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        a: f64,
    },
    /// Rate function on a K x K grid of x in [-1/2, 1/2]^2, as CSV.
    Rate {
        #[arg(long)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long, default_value_t = 101)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Variational free energy, optionally compared with (1/n) ln Z~ at finite n.
    FreeEnergy {
        #[arg(long)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Empirical phase map over a grid of beta and alpha*a.
    Sweep {
        #[command(flatten)]
        base: SampleArgs,
        /// Comma-separated beta values.
        #[arg(long, value_delimiter = ',', required = true)]
        betas: Vec<f64>,
        /// Comma-separated alpha*a values.
        #[arg(long = "alpha-as", value_delimiter = ',', allow_hyphen_values = true, required = true)]
        alpha_as: Vec<f64>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    AllPlus,
    AllMinus,
    Random,
    Symmetric,
    Antisymmetric,
    Dispersed,
}

impl From<InitArg> for InitSpec {
    fn from(v: InitArg) -> Self {
        match v {
            InitArg::AllPlus => InitSpec::AllPlus,
            InitArg::AllMinus => InitSpec::AllMinus,
            InitArg::Random => InitSpec::Random,
            InitArg::Symmetric => InitSpec::Symmetric,
            InitArg::Antisymmetric => InitSpec::Antisymmetric,
            InitArg::Dispersed => InitSpec::Dispersed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Popcount,
    Cached,
}

/// Experiment settings; flags override the config file.
#[derive(Args)]
struct SampleArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    sweeps: Option<u64>,
    #[arg(long)]
    burnin: Option<u64>,
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    graph_seed: Option<u64>,
    #[arg(long)]
    undirected: bool,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    #[arg(long, value_enum)]
    field_mode: Option<ModeArg>,
    /// Load the graph from this file.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Output directory for the artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SampleArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => {
                let need = |name: &str| Error::InvalidArgument(format!("--{name} is required without --config"));
                ExperimentConfig::new(
                    self.n.ok_or_else(|| need("n"))?,
                    self.p.ok_or_else(|| need("p"))?,
                    self.q.ok_or_else(|| need("q"))?,
                    self.beta.unwrap_or(1.0),
                    self.alpha.unwrap_or(0.0),
                )
            }
        };
        macro_rules! apply {
            ($($field:ident <- $flag:expr),* $(,)?) => {
                $(if let Some(v) = $flag { c.$field = v; })*
            };
        }
        apply!(
            n <- self.n,
            p <- self.p,
            q <- self.q,
            beta <- self.beta,
            alpha <- self.alpha,
            chains <- self.chains,
            sweeps <- self.sweeps,
            burnin <- self.burnin,
            thin <- self.thin,
            base_seed <- self.seed,
            graph_seed <- self.graph_seed,
        );
        if self.a.is_some() {
            c.a_override = self.a;
        }
        if self.undirected {
            c.directed = false;
        }
        if let Some(init) = self.init {
            c.init = init.into();
        }
        if let Some(mode) = self.field_mode {
            c.field_mode = match mode {
                ModeArg::Popcount => FieldMode::Popcount,
                ModeArg::Cached => FieldMode::Cached,
            };
        }
        if self.graph.is_some() {
            c.graph_file = self.graph.clone();
        }
        if self.out.is_some() {
            c.out_dir = self.out.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Graph {
            n,
            p,
            q,
            seed,
            undirected,
            out,
        } => {
            let g = gen_graph(n, p, q, seed, !undirected)?;
            fs::write(&out, g.to_json()? + "\n")?;
            let (within, between) = edge_counts(&g);
            print_json(&json!({
                "out": out,
                "n": n,
                "within_edges": within,
                "between_edges": between,
            }))
        }
        Command::Sample(args) => {
            let config = args.config()?;
            let result = run_experiment(&config)?;
            print_json(&serde_json::to_value(&result.summary)?)
        }
        Command::Exact {
            graph,
            beta,
            alpha,
            a,
            gamma_c,
        } => {
            let g = BlockGraph::from_json(&fs::read_to_string(graph)?)?;
            let mut params = ModelParams::for_graph(&g, beta, alpha)?;
            if let Some(a) = a {
                params = params.with_a(a)?;
            }
            let report = sandwich_check(&g, &params, gamma_c)?;
            let dist = enumerate_gibbs(&GibbsModel::Random {
                graph: &g,
                params: &params,
            })?;
            let rows: Vec<[f64; 3]> = dist.iter().map(|(m, p)| [m.m1, m.m2, p]).collect();
            print_json(&json!({
                "log_Z": report.log_z,
                "log_Z_tilde": report.log_z_tilde,
                "bound": report.bound,
                "gamma": report.gamma,
                "kappa": report.kappa,
                "lower_slack": report.lower_slack,
                "upper_slack": report.upper_slack,
                "distribution": rows,
            }))
        }
        Command::Phase { beta, alpha, a } => {
            let d = classify_phase(beta, alpha * a)?;
            print_json(&serde_json::to_value(&d)?)
        }
        Command::Rate {
            beta,
            lambda,
            grid,
            out,
        } => {
            if grid < 2 {
                return Err(Error::InvalidArgument(format!("--grid must be at least 2, got {grid}")));
            }
            let rate = RateFunction::new(beta, lambda)?;
            let sink: Box<dyn Write> = match out {
                Some(path) => Box::new(fs::File::create(path)?),
                None => Box::new(io::stdout().lock()),
            };
            let mut w = BufWriter::new(sink);
            writeln!(w, "x1,x2,J")?;
            let coord = |i: usize| -0.5 + i as f64 / (grid - 1) as f64;
            for i in 0..grid {
                for j in 0..grid {
                    let x = [coord(i), coord(j)];
                    writeln!(w, "{},{},{}", x[0], x[1], rate.eval(x)?)?;
                }
            }
            w.flush()?;
            Ok(())
        }
        Command::FreeEnergy { beta, lambda, n } => {
            let f = free_energy_variational(beta, lambda)?;
            let mut value = json!({ "beta": beta, "lambda": lambda, "free_energy": f });
            if let Some(n) = n {
                let finite = blockspin::exact::log_partition_complete(n, beta, lambda)? / n as f64;
                value["n"] = json!(n);
                value["finite_n"] = json!(finite);
                value["gap"] = json!((finite - f).abs());
            }
            print_json(&value)
        }
        Command::Sweep {
            base,
            betas,
            alpha_as,
            csv,
        } => {
            let mut base = base;
            // cells supply their own beta and alpha
            if base.beta.is_none() {
                base.beta = betas.first().copied();
            }
            base.alpha = Some(0.0);
            let spec = SweepSpec {
                base: base.config()?,
                betas,
                alpha_as,
            };
            let rows = sweep(&spec)?;
            match csv {
                Some(path) => {
                    let mut w = BufWriter::new(fs::File::create(path)?);
                    write_sweep_csv(&rows, &mut w)?;
                    w.flush()?;
                }
                None => write_sweep_csv(&rows, io::stdout().lock())?,
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
