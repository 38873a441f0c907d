use std::fmt::Write as _;
use std::path::Path;

use super::{cohens_d, io_err, mean, std_dev, welch_t, ExperimentConfig, ExperimentRecord, HarnessError, Result, Store};
use crate::io::write_atomic;
use crate::metrics::{compositional_rate, MiMatrix};

/// Width of the PosDis histogram bins.
pub const HIST_BIN: f64 = 0.05;

/// Per-condition aggregates; `n` is the number of seeds behind every mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub name: String,
    pub condition_hash: String,
    pub n: usize,
    pub n_agents: usize,
    pub holdout_mean: f64,
    pub holdout_std: f64,
    pub posdis_mean: f64,
    pub posdis_std: f64,
    pub bosdis_mean: f64,
    pub topsim_mean: f64,
    pub compositional_count: usize,
    pub compositional_rate: f64,
    /// Rates at the neighbouring thresholds 0.3 and 0.5.
    pub rate_03: f64,
    pub rate_05: f64,
    pub oracle_mean: f64,
    pub instabilities: usize,
}

impl SweepSummary {
    pub fn of(records: &[&ExperimentRecord]) -> SweepSummary {
        let acc: Vec<f64> = records.iter().map(|r| r.holdout.both).collect();
        let pd: Vec<f64> = records.iter().map(|r| r.metrics.posdis).collect();
        let threshold = records.first().map_or(0.4, |r| r.metrics.threshold);
        SweepSummary {
            name: records.first().map_or(String::new(), |r| r.name.clone()),
            condition_hash: records.first().map_or(String::new(), |r| r.condition_hash.clone()),
            n: records.len(),
            n_agents: records.first().map_or(0, |r| r.metrics.specialization.len()),
            holdout_mean: mean(&acc),
            holdout_std: std_dev(&acc),
            posdis_mean: mean(&pd),
            posdis_std: std_dev(&pd),
            bosdis_mean: mean(&records.iter().map(|r| r.metrics.bosdis).collect::<Vec<_>>()),
            topsim_mean: mean(&records.iter().map(|r| r.metrics.topsim).collect::<Vec<_>>()),
            compositional_count: pd.iter().filter(|p| **p > threshold).count(),
            compositional_rate: compositional_rate(&pd, threshold),
            rate_03: compositional_rate(&pd, 0.3),
            rate_05: compositional_rate(&pd, 0.5),
            oracle_mean: mean(&records.iter().map(|r| r.oracle_holdout.both).collect::<Vec<_>>()),
            instabilities: records.iter().filter(|r| r.instability.is_some()).count(),
        }
    }

    /// One summary per condition, in first-seen order.
    pub fn group(records: &[ExperimentRecord]) -> Vec<SweepSummary> {
        let mut keys: Vec<&str> = Vec::new();
        for r in records {
            if !keys.contains(&r.condition_hash.as_str()) {
                keys.push(&r.condition_hash);
            }
        }
        keys.iter()
            .map(|k| SweepSummary::of(&records.iter().filter(|r| r.condition_hash == *k).collect::<Vec<_>>()))
            .collect()
    }

    pub fn csv_header() -> &'static str {
        "name,condition,n,n_agents,holdout_mean,holdout_std,posdis_mean,posdis_std,bosdis_mean,topsim_mean,compositional_count,compositional_rate,rate_03,rate_05,oracle_mean,instabilities"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6},{:.6},{}",
            self.name,
            self.condition_hash,
            self.n,
            self.n_agents,
            self.holdout_mean,
            self.holdout_std,
            self.posdis_mean,
            self.posdis_std,
            self.bosdis_mean,
            self.topsim_mean,
            self.compositional_count,
            self.compositional_rate,
            self.rate_03,
            self.rate_05,
            self.oracle_mean,
            self.instabilities
        )
    }
}

/// Counts over `[0, 1]` in bins of 0.05; 1.0 lands in the last bin.
pub fn posdis_histogram(values: &[f64]) -> Vec<usize> {
    let n = (1.0 / HIST_BIN).round() as usize;
    let mut out = vec![0; n];
    for v in values {
        let b = ((v.clamp(0.0, 1.0) / HIST_BIN).floor() as usize).min(n - 1);
        out[b] += 1;
    }
    out
}

fn mean_mi(records: &[&ExperimentRecord]) -> Option<MiMatrix> {
    let first = &records.first()?.metrics.mi;
    let mut values = vec![0.0; first.values.len()];
    for r in records {
        if r.metrics.mi.values.len() != values.len() {
            return None;
        }
        values.iter_mut().zip(&r.metrics.mi.values).for_each(|(a, v)| *a += v);
    }
    values.iter_mut().for_each(|v| *v /= records.len() as f64);
    Some(MiMatrix { positions: first.positions, attributes: first.attributes, values })
}

/// Write `summary.csv`, `summary.txt`, `posdis_hist.csv` and one mean MI
/// heatmap per condition into `out_dir`.
pub fn write_report(records: &[ExperimentRecord], attribute_names: &[String], out_dir: &Path) -> Result<Vec<SweepSummary>> {
    if records.is_empty() {
        return Err(HarnessError::Config("no records selected for the report".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let write = |name: &str, text: &str| {
        let p = out_dir.join(name);
        write_atomic(&p, text.as_bytes()).map_err(io_err(&p))
    };
    let summaries = SweepSummary::group(records);
    let mut csv = format!("{}\n", SweepSummary::csv_header());
    for s in &summaries {
        csv.push_str(&s.csv_row());
        csv.push('\n');
    }
    write("summary.csv", &csv)?;

    let mut txt = String::new();
    let _ = writeln!(txt, "{:<24} {:>3} {:>3} {:>16} {:>16} {:>6} {:>6}", "condition", "N", "n", "holdout", "posdis", "comp", "unst");
    for s in &summaries {
        let _ = writeln!(
            txt,
            "{:<24} {:>3} {:>3} {:>7.3} ± {:<6.3} {:>7.3} ± {:<6.3} {:>3}/{:<2} {:>6}",
            s.name,
            s.n_agents,
            s.n,
            s.holdout_mean,
            s.holdout_std,
            s.posdis_mean,
            s.posdis_std,
            s.compositional_count,
            s.n,
            s.instabilities
        );
    }
    let posdis_of = |hash: &str| -> Vec<f64> {
        records.iter().filter(|r| r.condition_hash == hash).map(|r| r.metrics.posdis).collect()
    };
    if let Some(base) = summaries.first() {
        let a = posdis_of(&base.condition_hash);
        for s in summaries.iter().skip(1) {
            let b = posdis_of(&s.condition_hash);
            let w = welch_t(&b, &a);
            let d = cohens_d(&b, &a);
            let _ = writeln!(
                txt,
                "posdis {} vs {}: n={}/{} t={} df={} p={} d={}",
                s.name,
                base.name,
                b.len(),
                a.len(),
                w.map_or("-".into(), |w| format!("{:.3}", w.t)),
                w.map_or("-".into(), |w| format!("{:.1}", w.df)),
                w.map_or("-".into(), |w| format!("{:.4}", w.p)),
                d.map_or("-".into(), |d| format!("{d:.3}")),
            );
        }
    }
    write("summary.txt", &txt)?;

    let bins = posdis_histogram(&[]).len();
    let mut hist = String::from("name");
    for b in 0..bins {
        let _ = write!(hist, ",{:.2}", b as f64 * HIST_BIN);
    }
    hist.push('\n');
    for s in &summaries {
        let counts = posdis_histogram(&posdis_of(&s.condition_hash));
        let cells: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(hist, "{},{}", s.name, cells.join(","));
    }
    write("posdis_hist.csv", &hist)?;

    for s in &summaries {
        let group: Vec<&ExperimentRecord> = records.iter().filter(|r| r.condition_hash == s.condition_hash).collect();
        if let Some(m) = mean_mi(&group) {
            let names: Vec<String> = if attribute_names.len() == m.attributes {
                attribute_names.to_vec()
            } else {
                (0..m.attributes).map(|j| format!("a{j}")).collect()
            };
            write(&format!("mi.{}-{}.csv", s.name, s.condition_hash), &m.to_csv(&names))?;
        }
    }
    Ok(summaries)
}

/// Completed records in the store, by condition directory then seed.
/// `names` restricts the selection to those condition names when
/// non-empty. Runs without a `.meta` file are still in progress and are
/// skipped.
pub fn collect_records(store: &Store, names: &[String]) -> Result<Vec<(ExperimentConfig, Vec<ExperimentRecord>)>> {
    let mut out = Vec::new();
    for dir in store.run_dirs()? {
        let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
        if !names.is_empty() && !names.contains(&cfg.name) {
            continue;
        }
        let mut seeds: Vec<u64> = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(io_err(&dir))? {
            let name = entry.map_err(io_err(&dir))?.file_name();
            let name = name.to_string_lossy();
            if let Some(seed) = name.strip_prefix("run.").and_then(|r| r.strip_suffix(".meta")) {
                if let Ok(seed) = seed.parse() {
                    seeds.push(seed);
                }
            }
        }
        seeds.sort_unstable();
        let mut records = Vec::with_capacity(seeds.len());
        for seed in seeds {
            let meta_path = dir.join(format!("run.{seed}.meta"));
            let meta = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
            let metrics_path = dir.join(format!("run.{seed}.metrics"));
            let metrics = std::fs::read_to_string(&metrics_path).map_err(io_err(&metrics_path))?;
            let record = ExperimentRecord::from_files(&meta, &metrics, &meta_path)?;
            if record.condition_hash != cfg.condition_hash() {
                return Err(HarnessError::Record {
                    path: meta_path.display().to_string(),
                    msg: format!("condition hash {} does not match its directory config", record.condition_hash),
                });
            }
            records.push(record);
        }
        if !records.is_empty() {
            out.push((cfg, records));
        }
    }
    Ok(out)
}
