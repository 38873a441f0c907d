use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use physlang::env::{write_dataset, write_manifest, Dataset, Domain};
use physlang::harness::{
    analyze_run, collect_records, ingest_features, load_run, run_experiment, run_sweep, write_report,
    AnalysisOptions, ExperimentConfig, Store, SweepSummary, STORE_ENV,
};

#[derive(Parser)]
#[command(name = "physlang", version, about = "Emergent communication about hidden physical properties")]
struct Cli {
    /// Root of the run store.
    #[arg(long, global = true, env = STORE_ENV, default_value = "store")]
    store: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset file (and optional manifest).
    Gen {
        #[arg(long, default_value = "spring_mass")]
        domain: String,
        #[arg(long, default_value_t = 300)]
        n_scenes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Train one (condition, seed) and store it.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the store; nothing is written.
        #[arg(long)]
        dry: bool,
    },
    /// Run every seed of one or more conditions.
    Sweep {
        /// Condition files; repeat for several.
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Also write a report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Interventions, transfer and regression on a stored run.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cross-property task as `pa,pb`; `none` skips it.
        #[arg(long, default_value = "0,1")]
        transfer: String,
        #[arg(long, default_value_t = 100)]
        regression_epochs: usize,
    },
    /// Summaries, histograms and MI heatmaps from the store.
    Report {
        /// Condition names to include; all when omitted.
        #[arg(long = "name")]
        names: Vec<String>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Convert a PHSF feature file into a dataset file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

/// Config file plus per-field overrides.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    n_scenes: Option<usize>,
    #[arg(long)]
    n_agents: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    v: Option<usize>,
    #[arg(long)]
    channel: Option<String>,
    #[arg(long)]
    assignment: Option<String>,
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    conv_hidden: Option<usize>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    compositional_threshold: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    oracle_epochs: Option<usize>,
    #[arg(long)]
    population_size: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        let mut table: toml::Table = toml::from_str(&text)?;
        let mut set = |k: &str, v: toml::Value| {
            table.insert(k.into(), v);
        };
        let int = |x: usize| toml::Value::Integer(x as i64);
        if let Some(x) = &self.name {
            set("name", x.clone().into());
        }
        if let Some(x) = &self.domain {
            set("domain", x.clone().into());
        }
        if let Some(x) = &self.dataset {
            set("dataset", x.display().to_string().into());
        }
        for (k, x) in [
            ("n_scenes", self.n_scenes),
            ("n_agents", self.n_agents),
            ("k", self.k),
            ("v", self.v),
            ("conv_hidden", self.conv_hidden),
        ] {
            if let Some(x) = x {
                set(k, int(x));
            }
        }
        for (k, x) in [
            ("channel", &self.channel),
            ("assignment", &self.assignment),
            ("input", &self.input),
            ("method", &self.method),
        ] {
            if let Some(x) = x {
                set(k, x.clone().into());
            }
        }
        if let Some(x) = self.compositional_threshold {
            set("compositional_threshold", x.into());
        }
        let mut training = match table.remove("training") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => bail!("[training] must be a table"),
            None => toml::Table::new(),
        };
        for (k, x) in [("epochs", self.epochs), ("oracle_epochs", self.oracle_epochs), ("population_size", self.population_size)] {
            if let Some(x) = x {
                training.insert(k.into(), int(x));
            }
        }
        table.insert("training".into(), training.into());
        Ok(ExperimentConfig::from_toml(&toml::to_string(&table)?)?)
    }
}

fn parse_domain(name: &str) -> Result<Domain> {
    match [Domain::SpringMass, Domain::Ramp, Domain::Collision, Domain::AbstractScenes].into_iter().find(|d| d.name() == name) {
        Some(d) => Ok(d),
        None => bail!("unknown domain {name:?}; expected spring_mass, ramp, collision or abstract_scenes"),
    }
}

fn save_dataset(ds: &Dataset, out: &PathBuf, manifest: &Option<PathBuf>) -> Result<()> {
    write_dataset(out, ds)?;
    if let Some(m) = manifest {
        write_manifest(m, ds)?;
    }
    println!("wrote {} scenes ({} frames x {} dims) to {}", ds.len(), ds.frames(), ds.dims(), out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Gen { domain, n_scenes, seed, out, manifest } => {
            let ds = Dataset::generate(parse_domain(&domain)?, n_scenes, seed)?;
            save_dataset(&ds, &out, &manifest)?;
        }
        Cmd::Ingest { input, out, manifest } => {
            let ds = ingest_features(&input)?;
            save_dataset(&ds, &out, &manifest)?;
        }
        Cmd::Train { cfg, seed, dry } => {
            let cfg = cfg.resolve()?;
            let store = if dry { None } else { Some(Store::open(&cli.store)?) };
            let out = run_experiment(&cfg, seed, store.as_ref())?;
            let r = &out.record;
            println!("condition {} seed {seed}", r.condition_hash);
            println!("oracle holdout {:.4}", r.oracle_holdout.both);
            println!("holdout {:.4} per property {:?}", r.holdout.both, r.holdout.per_property);
            println!("posdis {:.4} bosdis {:.4} topsim {:.4}", r.metrics.posdis, r.metrics.bosdis, r.metrics.topsim);
            if let Some(e) = &r.instability {
                println!("unstable at epoch {}: {}", e.epoch, e.detail);
            }
            if let Some(s) = &store {
                println!("stored in {}", s.run_dir(&cfg).display());
            }
        }
        Cmd::Sweep { configs, workers, report } => {
            let configs = configs.iter().map(|p| ExperimentConfig::load(p)).collect::<Result<Vec<_>, _>>()?;
            let store = Store::open(&cli.store)?;
            let records = run_sweep(&configs, &store, workers)?;
            println!("{}", SweepSummary::csv_header());
            for s in SweepSummary::group(&records) {
                println!("{}", s.csv_row());
            }
            if let Some(dir) = report {
                let names = configs[0].domain.grid().map(|g| g.names()).unwrap_or_default();
                write_report(&records, &names, &dir)?;
            }
        }
        Cmd::Analyze { cfg, seed, transfer, regression_epochs } => {
            let cfg = cfg.resolve()?;
            let store = Store::open(&cli.store)?;
            let transfer = match transfer.as_str() {
                "none" => None,
                t => {
                    let (a, b) = t.split_once(',').context("--transfer takes pa,pb")?;
                    Some((a.trim().parse()?, b.trim().parse()?))
                }
            };
            let opts = AnalysisOptions { transfer, regression_epochs, ..Default::default() };
            let run = load_run(&cfg, seed, &store)?;
            let analysis = analyze_run(&run, &opts)?;
            let csv = analysis.to_csv();
            store.write_text(&store.run_dir(&cfg).join(format!("run.{seed}.analysis.csv")), &csv)?;
            print!("{csv}");
        }
        Cmd::Report { names, out } => {
            let store = Store::open(&cli.store)?;
            let groups = collect_records(&store, &names)?;
            if groups.is_empty() {
                bail!("no completed runs in {} match the selection", store.root().display());
            }
            let attrs = groups[0].0.domain.grid().map(|g| g.names()).unwrap_or_default();
            let records: Vec<_> = groups.into_iter().flat_map(|(_, r)| r).collect();
            for s in write_report(&records, &attrs, &out)? {
                println!("{}", s.csv_row());
            }
        }
    }
    Ok(())
}
