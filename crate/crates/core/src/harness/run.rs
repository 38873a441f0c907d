use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use super::{ExperimentConfig, HarnessError, Method, Result, Store};
use crate::agents::{build_frame_assignment, Checkpoint, Oracle, Receiver, Sender};
use crate::env::{read_dataset, Dataset, Domain};
use crate::metrics::{MetricReport, ProtocolTable};
use crate::seed;
use crate::training::{
    pretrain_oracle, train_iterated_learning, train_lazimpa_baseline, Accuracy, EpochLog,
    InstabilityEvent, OracleOutcome, Prepared,
};

/// Persisted summary of one (condition, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub name: String,
    pub condition_hash: String,
    pub seed: u64,
    pub method: Method,
    pub oracle_holdout: Accuracy,
    pub holdout: Accuracy,
    pub metrics: MetricReport,
    pub instability: Option<InstabilityEvent>,
    pub resets: usize,
    pub epochs_completed: usize,
}

fn put_accuracy(out: &mut BTreeMap<String, String>, prefix: &str, a: &Accuracy) {
    out.insert(format!("{prefix}.both"), a.both.to_string());
    out.insert(format!("{prefix}.pairs"), a.pairs.to_string());
    out.insert(format!("{prefix}.properties"), a.per_property.len().to_string());
    for (j, v) in a.per_property.iter().enumerate() {
        out.insert(format!("{prefix}.p{j}"), v.to_string());
    }
}

fn parse_kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

struct Fields<'a> {
    map: &'a BTreeMap<String, String>,
    path: &'a Path,
}

impl Fields<'_> {
    fn get<T: std::str::FromStr>(&self, k: &str) -> Result<T> {
        self.map.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| HarnessError::Record {
            path: self.path.display().to_string(),
            msg: format!("missing or bad `{k}`"),
        })
    }

    fn accuracy(&self, prefix: &str) -> Result<Accuracy> {
        let n: usize = self.get(&format!("{prefix}.properties"))?;
        Ok(Accuracy {
            both: self.get(&format!("{prefix}.both"))?,
            pairs: self.get(&format!("{prefix}.pairs"))?,
            per_property: (0..n).map(|j| self.get(&format!("{prefix}.p{j}"))).collect::<Result<_>>()?,
        })
    }
}

impl ExperimentRecord {
    /// `key=value` lines; every hyperparameter of the condition is included
    /// as `config.*` provenance.
    pub fn to_meta(&self, cfg: &ExperimentConfig, elapsed_secs: f64) -> String {
        let mut m = BTreeMap::new();
        m.insert("name".to_string(), self.name.clone());
        m.insert("condition_hash".into(), self.condition_hash.clone());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("method".into(), self.method.to_string());
        m.insert("resets".into(), self.resets.to_string());
        m.insert("epochs_completed".into(), self.epochs_completed.to_string());
        m.insert("elapsed_secs".into(), format!("{elapsed_secs:.3}"));
        put_accuracy(&mut m, "oracle_holdout", &self.oracle_holdout);
        put_accuracy(&mut m, "holdout", &self.holdout);
        match &self.instability {
            None => {
                m.insert("instability".into(), "none".into());
            }
            Some(e) => {
                m.insert("instability".into(), "yes".into());
                m.insert("instability.epoch".into(), e.epoch.to_string());
                m.insert("instability.step".into(), e.step.to_string());
                m.insert("instability.detail".into(), e.detail.replace('\n', " "));
            }
        }
        let table: toml::Table = toml::from_str(&cfg.to_toml()).expect("config is a table");
        flatten("config", &toml::Value::Table(table), &mut m);
        m.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_files(meta: &str, metrics: &str, path: &Path) -> Result<Self> {
        let map = parse_kv(meta);
        let f = Fields { map: &map, path };
        let method = match f.get::<String>("method")?.as_str() {
            "iterated_learning" => Method::IteratedLearning,
            "lazimpa" => Method::Lazimpa,
            other => {
                return Err(HarnessError::Record { path: path.display().to_string(), msg: format!("method {other:?}") })
            }
        };
        let instability = if f.get::<String>("instability")? == "yes" {
            Some(InstabilityEvent {
                epoch: f.get("instability.epoch")?,
                step: f.get("instability.step")?,
                detail: f.get("instability.detail")?,
            })
        } else {
            None
        };
        Ok(ExperimentRecord {
            name: f.get("name")?,
            condition_hash: f.get("condition_hash")?,
            seed: f.get("seed")?,
            method,
            oracle_holdout: f.accuracy("oracle_holdout")?,
            holdout: f.accuracy("holdout")?,
            metrics: MetricReport::from_kv(metrics)?,
            instability,
            resets: f.get("resets")?,
            epochs_completed: f.get("epochs_completed")?,
        })
    }
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut BTreeMap<String, String>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        toml::Value::String(s) => {
            out.insert(prefix.to_string(), s.clone());
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

/// Everything a fresh run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: ExperimentRecord,
    pub prepared: Prepared,
    pub oracle: OracleOutcome,
    pub sender: Sender,
    /// The final IL population; empty for the baseline.
    pub receivers: Vec<Receiver>,
    pub logs: Vec<EpochLog>,
    pub table: ProtocolTable,
}

/// A stored run rebuilt for analysis.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub record: ExperimentRecord,
    pub prepared: Prepared,
    pub sender: Sender,
    pub receivers: Vec<Receiver>,
}

fn load_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    Ok(match (&cfg.dataset, cfg.domain) {
        (Some(path), Domain::External) => read_dataset(path)?,
        _ => Dataset::generate(cfg.domain, cfg.n_scenes, seed)?,
    })
}

fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    Ok(Prepared::new(load_dataset(cfg, seed)?, cfg.input, seed)?)
}

/// Eval-mode symbols of every scene against its property bins.
pub fn harvest_protocol(sender: &Sender, prepared: &Prepared) -> Result<ProtocolTable> {
    let ids: Vec<usize> = (0..prepared.dataset.len()).collect();
    let symbols = sender.eval_symbols(&prepared.encoded, &ids)?;
    let attrs = prepared.dataset.scenes.iter().map(|s| s.property_bins.clone()).collect();
    Ok(ProtocolTable::new(
        symbols,
        attrs,
        prepared.dataset.grid.names(),
        sender.cfg.v,
        prepared.dataset.grid.bins_per_property(),
        sender.cfg.k,
    )?)
}

fn fresh_oracle(cfg: &ExperimentConfig, prepared: &Prepared, seed: u64) -> Oracle {
    Oracle::new(prepared.encoded.width, cfg.conv_hidden, prepared.n_props(), &mut seed::stream(seed, "oracle"))
}

fn oracle_for(cfg: &ExperimentConfig, prepared: &Prepared, seed: u64, store: Option<&Store>) -> Result<OracleOutcome> {
    let stem = format!("oracle.{seed}");
    if let Some(store) = store {
        let dir = store.oracle_dir(cfg);
        if let Ok(ck) = Checkpoint::read(&dir, &stem) {
            let mut oracle = fresh_oracle(cfg, prepared, seed);
            ck.restore_into(&mut oracle.store)?;
            let f = Fields { map: &ck.manifest, path: &dir };
            let losses: String = f.get("epoch_losses")?;
            return Ok(OracleOutcome {
                oracle,
                epoch_losses: losses.split(',').filter(|s| !s.is_empty()).map(|s| s.parse().unwrap_or(f64::NAN)).collect(),
                holdout: f.accuracy("holdout")?,
            });
        }
    }
    let out = pretrain_oracle(prepared, &cfg.training, cfg.conv_hidden, seed)?;
    if let Some(store) = store {
        let mut manifest = BTreeMap::new();
        put_accuracy(&mut manifest, "holdout", &out.holdout);
        let losses: Vec<String> = out.epoch_losses.iter().map(|l| l.to_string()).collect();
        manifest.insert("epoch_losses".into(), losses.join(","));
        Checkpoint::new(manifest, out.oracle.store.clone()).write(&store.oracle_dir(cfg), &stem)?;
    }
    Ok(out)
}

fn blank_sender(cfg: &ExperimentConfig, prepared: &Prepared, seed: u64) -> Result<Sender> {
    let assignment =
        build_frame_assignment(cfg.n_agents, prepared.dataset.frames(), cfg.assignment, &mut seed::stream(seed, "assignment"))?;
    Ok(Sender::new(cfg.sender_config(prepared.encoded.width), assignment, &mut seed::stream(seed, "sender"))?)
}

/// Pretrain (or reuse) the oracle, train the condition's sender, harvest
/// metrics and, with a store, persist every artifact.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64, store: Option<&Store>) -> Result<RunOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let prepared = prepare(cfg, seed)?;
    let oracle = oracle_for(cfg, &prepared, seed, store)?;
    let assignment =
        build_frame_assignment(cfg.n_agents, prepared.dataset.frames(), cfg.assignment, &mut seed::stream(seed, "assignment"))?;
    let sc = cfg.sender_config(prepared.encoded.width);
    let (sender, receivers, extra, logs, instability, holdout, resets) = match cfg.method {
        Method::IteratedLearning => {
            let o = train_iterated_learning(&prepared, &oracle.oracle.store, sc, assignment, &cfg.training, seed)?;
            (o.sender, o.receivers, None, o.logs, o.instability, o.holdout, o.resets)
        }
        Method::Lazimpa => {
            let o = train_lazimpa_baseline(&prepared, &oracle.oracle.store, sc, assignment, &cfg.training, seed)?;
            (o.sender, Vec::new(), Some(o.receiver.store), o.logs, o.instability, o.holdout, 0)
        }
    };
    let table = harvest_protocol(&sender, &prepared)?;
    let metrics = MetricReport::compute(&table, cfg.compositional_threshold)?;
    let record = ExperimentRecord {
        name: cfg.name.clone(),
        condition_hash: cfg.condition_hash(),
        seed,
        method: cfg.method,
        oracle_holdout: oracle.holdout.clone(),
        holdout,
        metrics,
        instability,
        resets,
        epochs_completed: logs.len(),
    };
    if let Some(store) = store {
        let dir = store.run_dir(cfg);
        store.write_text(&dir.join("config.toml"), &cfg.to_toml())?;
        let n_heads = cfg.n_agents * cfg.k;
        let mut csv = EpochLog::csv_header(prepared.n_props(), n_heads);
        csv.push('\n');
        for l in &logs {
            csv.push_str(&l.csv_row());
            csv.push('\n');
        }
        store.write_text(&dir.join(format!("run.{seed}.epochs.csv")), &csv)?;
        store.write_text(&dir.join(format!("run.{seed}.protocol.csv")), &table.to_csv())?;
        let mut manifest = BTreeMap::new();
        manifest.insert("condition_hash".to_string(), record.condition_hash.clone());
        manifest.insert("seed".to_string(), seed.to_string());
        Checkpoint::new(manifest.clone(), sender.store.clone()).write(&dir, &format!("run.{seed}.sender"))?;
        for (r, rec) in receivers.iter().enumerate() {
            Checkpoint::new(manifest.clone(), rec.store.clone()).write(&dir, &format!("run.{seed}.receiver{r}"))?;
        }
        if let Some(listener) = extra {
            Checkpoint::new(manifest, listener).write(&dir, &format!("run.{seed}.listener"))?;
        }
        store.write_text(&dir.join(format!("run.{seed}.metrics")), &record.metrics.to_kv())?;
        // meta last: its presence marks a complete run
        let meta = record.to_meta(cfg, started.elapsed().as_secs_f64());
        store.write_text(&dir.join(format!("run.{seed}.meta")), &meta)?;
    }
    Ok(RunOutput { record, prepared, oracle, sender, receivers, logs, table })
}

fn read_record(cfg: &ExperimentConfig, seed: u64, store: &Store) -> Option<Result<ExperimentRecord>> {
    let dir = store.run_dir(cfg);
    let meta_path = dir.join(format!("run.{seed}.meta"));
    let meta = store.read_text(&meta_path)?;
    let metrics = store.read_text(&dir.join(format!("run.{seed}.metrics")))?;
    Some(ExperimentRecord::from_files(&meta, &metrics, &meta_path))
}

/// The stored record when one exists for this exact condition, else a
/// fresh run that is then stored.
pub fn run_or_load(cfg: &ExperimentConfig, seed: u64, store: &Store) -> Result<ExperimentRecord> {
    match read_record(cfg, seed, store) {
        Some(Ok(r)) if r.condition_hash == cfg.condition_hash() => Ok(r),
        _ => Ok(run_experiment(cfg, seed, Some(store))?.record),
    }
}

/// Rebuild the trained sender and receivers of a stored run, running it
/// first if needed.
pub fn load_run(cfg: &ExperimentConfig, seed: u64, store: &Store) -> Result<LoadedRun> {
    let record = run_or_load(cfg, seed, store)?;
    let dir = store.run_dir(cfg);
    let prepared = prepare(cfg, seed)?;
    let mut sender = blank_sender(cfg, &prepared, seed)?;
    Checkpoint::read(&dir, &format!("run.{seed}.sender"))?.restore_into(&mut sender.store)?;
    let mut receivers = Vec::new();
    if cfg.method == Method::IteratedLearning {
        let width = 2 * sender.cfg.message_width();
        for r in 0..cfg.training.population_size {
            let mut rec = Receiver::new(width, prepared.n_props(), &mut seed::stream_indexed(seed, "receiver", r as u64));
            Checkpoint::read(&dir, &format!("run.{seed}.receiver{r}"))?.restore_into(&mut rec.store)?;
            receivers.push(rec);
        }
    }
    Ok(LoadedRun { record, prepared, sender, receivers })
}
