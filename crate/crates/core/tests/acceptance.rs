//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line to
//! stderr (uncaptured) before asserting.
//!
//! Criteria 5 to 13 share one campaign of 70 full-length training runs.
//! Runs are cached in `$PHYSLANG_STORE` (default: an `acceptance-store`
//! directory under cargo's target tmpdir), so only the first invocation
//! pays for training. `ACCEPTANCE_WORKERS` sets the sweep width.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use common::{gradcheck, oracles};
use physlang::agents::{ChannelMode, InputEncoder, MessageBundle};
use physlang::analysis::{position_zero_intervention, single_message_regression, TabularReceiver};
use physlang::env::{all_pairs, collision_velocities, latin_square_split, spring_state, Dataset, Domain, PropertyGrid};
use physlang::harness::{
    analyze_run, load_run, run_experiment, run_sweep, AnalysisOptions, ExperimentConfig, ExperimentRecord, Method,
    RunAnalysis, Store,
};
use physlang::metrics::{bosdis, compositional_rate, discrete_mi, mutual_information, posdis, topsim, ProtocolTable};
use physlang::seed;
use physlang::training::Prepared;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 10;

fn line(n: usize, title: &str, pass: bool, detail: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {n:>2} {} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
}

// ---------------------------------------------------------------- campaign

struct Condition {
    cfg: ExperimentConfig,
    records: Vec<ExperimentRecord>,
}

struct Campaign {
    store: Store,
    il2: Condition,
    il1: Condition,
    il4: Condition,
    single_k4: Condition,
    holistic: Condition,
    lazimpa: Condition,
    continuous: Condition,
}

fn condition(name: &str, f: impl FnOnce(&mut ExperimentConfig)) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { name: name.into(), seeds: (0..SEEDS).collect(), ..Default::default() };
    f(&mut cfg);
    cfg
}

fn campaign() -> &'static Campaign {
    static C: OnceLock<Campaign> = OnceLock::new();
    C.get_or_init(|| {
        let root = std::env::var_os("PHYSLANG_STORE")
            .filter(|p| !p.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-store"));
        let store = Store::open(root).unwrap();
        let workers = std::env::var("ACCEPTANCE_WORKERS").ok().and_then(|w| w.parse().ok()).unwrap_or(1);
        let configs = vec![
            condition("agents2_k2", |_| {}),
            condition("agents1_k2", |c| c.n_agents = 1),
            condition("agents4_k2", |c| c.n_agents = 4),
            condition("agents1_k4", |c| {
                c.n_agents = 1;
                c.k = 4;
            }),
            condition("holistic_k1_v25", |c| {
                c.n_agents = 1;
                c.k = 1;
                c.v = 25;
            }),
            condition("lazimpa", |c| c.method = Method::Lazimpa),
            condition("continuous", |c| c.channel = ChannelMode::Continuous),
        ];
        let records = run_sweep(&configs, &store, workers).unwrap();
        let mut conds = configs
            .into_iter()
            .zip(records.chunks(SEEDS as usize))
            .map(|(cfg, r)| Condition { cfg, records: r.to_vec() });
        let mut next = || conds.next().unwrap();
        Campaign {
            il2: next(),
            il1: next(),
            il4: next(),
            single_k4: next(),
            holistic: next(),
            lazimpa: next(),
            continuous: next(),
            store,
        }
    })
}

fn rate(c: &Condition) -> f64 {
    let pd: Vec<f64> = c.records.iter().map(|r| r.metrics.posdis).collect();
    compositional_rate(&pd, c.cfg.compositional_threshold)
}

fn analyses(c: &Condition, opts: &AnalysisOptions) -> Vec<RunAnalysis> {
    let store = &campaign().store;
    c.cfg.seeds.iter().map(|s| analyze_run(&load_run(&c.cfg, *s, store).unwrap(), opts).unwrap()).collect()
}

fn il2_analyses() -> &'static [RunAnalysis] {
    static A: OnceLock<Vec<RunAnalysis>> = OnceLock::new();
    A.get_or_init(|| analyses(&campaign().il2, &AnalysisOptions::default()))
}

fn holistic_analyses() -> &'static [RunAnalysis] {
    static A: OnceLock<Vec<RunAnalysis>> = OnceLock::new();
    A.get_or_init(|| analyses(&campaign().holistic, &AnalysisOptions { regression_epochs: 0, ..Default::default() }))
}

fn continuous_analyses() -> &'static [RunAnalysis] {
    static A: OnceLock<Vec<RunAnalysis>> = OnceLock::new();
    A.get_or_init(|| {
        analyses(&campaign().continuous, &AnalysisOptions { transfer: None, regression_epochs: 0, ..Default::default() })
    })
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

// ---------------------------------------------------------------- criteria

#[test]
fn criterion_01_gradient_correctness() {
    let started = Instant::now();
    let mut worst = (0.0f64, "");
    let mut exact = true;
    for op in gradcheck::OPS {
        for i in 0..100u64 {
            let err = gradcheck::max_rel_error(&gradcheck::case(op, 1000 + i));
            if err > worst.0 {
                worst = (err, op);
            }
        }
    }
    for i in 0..100u64 {
        exact &= gradcheck::exact_backward_rules(i);
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst.0 < gradcheck::REL_TOL && exact && secs < 60.0;
    line(
        1,
        "gradient correctness",
        pass,
        &format!(
            "{} ops x 100 instances, worst rel err {:.2e} ({}), straight-through/grad-scale exact: {exact}, {secs:.1}s",
            gradcheck::OPS.len(),
            worst.0,
            worst.1
        ),
    );
    assert!(pass);
}

fn random_table(rng: &mut ChaCha8Rng, max_rows: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let rows = rng.gen_range(2..=max_rows);
    let positions = rng.gen_range(1..=4);
    let attrs = rng.gen_range(2..=3);
    // skewed symbol use so some tables carry real information
    let s = (0..rows).map(|_| (0..positions).map(|_| rng.gen_range(0..5)).collect()).collect();
    let a = (0..rows).map(|_| (0..attrs).map(|_| rng.gen_range(0..5)).collect()).collect();
    (s, a)
}

#[test]
fn criterion_02_metric_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_mi = 0.0f64;
    let mut worst_pd = 0.0f64;
    let mut worst_bd = 0.0f64;
    for i in 0..200 {
        let (mut s, a) = random_table(&mut rng, 200);
        if i % 2 == 0 {
            // half the tables copy an attribute into position 0
            for (row, att) in s.iter_mut().zip(&a) {
                row[0] = att[0];
            }
        }
        let t = ProtocolTable::unnamed(s.clone(), a.clone(), 5, 5).unwrap();
        for k in 0..s[0].len() {
            for j in 0..a[0].len() {
                let col: Vec<usize> = s.iter().map(|r| r[k]).collect();
                let att: Vec<usize> = a.iter().map(|r| r[j]).collect();
                worst_mi = worst_mi.max((discrete_mi(&t, k, j) - oracles::mi(&col, &att)).abs());
            }
        }
        worst_pd = worst_pd.max((posdis(&t).unwrap() - oracles::posdis(&s, &a)).abs());
        worst_bd = worst_bd.max((bosdis(&t).unwrap() - oracles::bosdis(&s, &a, 5)).abs());
    }
    let mut worst_ts = 0.0f64;
    let mut ts_ok = true;
    for _ in 0..50 {
        let (s, a) = random_table(&mut rng, 25);
        let t = ProtocolTable::unnamed(s.clone(), a.clone(), 5, 5).unwrap();
        let ts = topsim(&t, 0).unwrap();
        match oracles::topsim(&s, &a) {
            Some(v) => worst_ts = worst_ts.max((ts.value - v).abs()),
            None => ts_ok &= ts.degenerate,
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst_mi < 1e-12 && worst_pd < 1e-12 && worst_bd < 1e-12 && worst_ts < 1e-9 && ts_ok && secs < 60.0;
    line(
        2,
        "metric oracle equivalence",
        pass,
        &format!(
            "200 tables: |dMI| {worst_mi:.1e}, |dPosDis| {worst_pd:.1e}, |dBosDis| {worst_bd:.1e}; 50 tables: |dTopSim| {worst_ts:.1e}; {secs:.1}s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_analytic_fixtures() {
    let mut s = Vec::new();
    let mut a = Vec::new();
    for i in 0..25 {
        s.push(vec![i / 5, i % 5]);
        a.push(vec![i / 5, i % 5]);
    }
    let perfect = posdis(&ProtocolTable::unnamed(s.clone(), a.clone(), 5, 5).unwrap()).unwrap();
    let constant = posdis(&ProtocolTable::unnamed(vec![vec![3, 3]; 25], a.clone(), 5, 5).unwrap()).unwrap();
    let xs: Vec<usize> = (0..25).map(|i| i % 5).collect();
    let ys: Vec<usize> = xs.iter().map(|x| (x * 2 + 1) % 5).collect();
    let bij = mutual_information(&xs, &ys);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut momentum = 0.0f64;
    for _ in 0..10_000 {
        let r = rng.gen_range(0.1..10.0);
        let e = rng.gen_range(0.0..=1.0);
        let v = rng.gen_range(0.1..5.0);
        let (va, vb) = collision_velocities(r, e, v).unwrap();
        momentum = momentum.max((v - (va + r * vb)).abs());
    }
    let grid = PropertyGrid::spring_mass();
    let mut residual = 0.0f64;
    for &k in &grid.properties()[0].bins {
        for &b in &grid.properties()[1].bins {
            for i in 0..=40 {
                let (x, v, acc) = spring_state(k, b, rng.gen_range(0.5..1.5), i as f64 * 0.05);
                residual = residual.max((acc + b * v + k * x).abs());
            }
        }
    }
    let pass = perfect >= 0.999
        && constant == 0.0
        && (bij - 5f64.ln()).abs() <= 1e-9
        && momentum <= 1e-12
        && residual <= 1e-6;
    line(
        3,
        "analytic fixtures",
        pass,
        &format!(
            "perfect PosDis {perfect:.6}, constant PosDis {constant}, bijection MI - ln5 = {:.1e}, momentum err {momentum:.1e}, ODE residual {residual:.1e}",
            bij - 5f64.ln()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_latin_square_split() {
    let mut pass = true;
    let mut detail = String::new();
    for s in 0..20u64 {
        let ds = Dataset::generate(Domain::SpringMass, 300, s).unwrap();
        let split = latin_square_split(&ds.scenes, 5, &mut seed::stream(s, "split")).unwrap();
        let mut rows: Vec<usize> = split.heldout_cells.iter().map(|c| c.0).collect();
        let mut cols: Vec<usize> = split.heldout_cells.iter().map(|c| c.1).collect();
        rows.sort_unstable();
        cols.sort_unstable();
        let ok = split.train_ids.len() == 240
            && split.test_ids.len() == 60
            && rows == (0..5).collect::<Vec<_>>()
            && cols == (0..5).collect::<Vec<_>>()
            && split.test_ids.iter().all(|i| split.is_heldout(&ds.scenes[*i].property_bins))
            && split.train_ids.iter().all(|i| !split.is_heldout(&ds.scenes[*i].property_bins));
        if s == 0 {
            detail = format!("seed 0: {}/{} scenes, held-out cells {:?}", split.train_ids.len(), split.test_ids.len(), split.heldout_cells);
        }
        pass &= ok;
    }
    line(4, "latin-square split", pass, &format!("20 seeds checked; {detail}"));
    assert!(pass);
}

fn meta_elapsed(c: &Condition, seed: u64) -> f64 {
    let path = campaign().store.run_dir(&c.cfg).join(format!("run.{seed}.meta"));
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().find_map(|l| l.strip_prefix("elapsed_secs=")).unwrap().parse().unwrap()
}

#[test]
fn criterion_05_spring_mass_headline() {
    let c = campaign();
    let acc = mean(c.il2.records.iter().map(|r| r.holdout.both));
    let oracle = mean(c.il2.records.iter().map(|r| r.oracle_holdout.both));
    let times: Vec<f64> = c.il2.cfg.seeds.iter().map(|s| meta_elapsed(&c.il2, *s)).collect();
    let longest = times.iter().copied().fold(0.0, f64::max);
    let total: f64 = times.iter().sum();
    let pass = acc >= 0.88 && oracle >= 0.93 && longest <= 300.0 && total <= 3000.0;
    line(
        5,
        "spring-mass headline",
        pass,
        &format!("10 seeds: holdout both-correct {acc:.4} (>= 0.88), oracle {oracle:.4} (>= 0.93), slowest seed {longest:.0}s, total {total:.0}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_agent_scaling() {
    let c = campaign();
    let (r1, r2, r4) = (rate(&c.il1), rate(&c.il2), rate(&c.il4));
    let pass = r1 <= r2 && r2 <= r4 && r4 >= r2 + 0.2 - 1e-12;
    line(
        6,
        "agent-scaling trend",
        pass,
        &format!("compositional rate N=1 {r1:.2}, N=2 {r2:.2}, N=4 {r4:.2} (needs non-decreasing and N=4 >= N=2 + 0.20)"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_matched_bandwidth() {
    let c = campaign();
    let (single, multi) = (rate(&c.single_k4), rate(&c.il4));
    let pass = single < multi;
    line(7, "matched-bandwidth control", pass, &format!("1 agent K=4 rate {single:.2} vs 4 agents K=2 rate {multi:.2}"));
    assert!(pass);
}

#[test]
fn criterion_08_holistic_control() {
    let c = campaign();
    let pd: Vec<f64> = c.holistic.records.iter().map(|r| r.metrics.posdis).collect();
    let max = pd.iter().copied().fold(f64::MIN, f64::max);
    let pass = pd.len() == SEEDS as usize && max < 0.2;
    let below = pd.iter().filter(|&&p| p < 0.2).count();
    line(
        8,
        "holistic control",
        pass,
        &format!("K=1 V=25 PosDis max {max:.3}, mean {:.3}, {below}/{} seeds < 0.2 (needs all)", mean(pd.iter().copied()), pd.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_09_intervention_selectivity() {
    // exact fixture: positional code on the 25-cell grid, lookup listener
    let ds = Dataset::generate(Domain::SpringMass, 25, 0).unwrap();
    let messages: Vec<MessageBundle> =
        ds.scenes.iter().map(|s| MessageBundle::from_symbols(1, 2, 5, &s.property_bins)).collect();
    let ids: Vec<usize> = (0..25).collect();
    let pairs = all_pairs(&ids, &ds.scenes, &[(0, 0), (1, 1)]);
    let rows: Vec<Vec<f64>> =
        pairs.iter().map(|p| messages[p.a].values.iter().chain(&messages[p.b].values).copied().collect()).collect();
    let targets: Vec<Vec<f64>> = pairs.iter().map(|p| p.targets().collect()).collect();
    let table = TabularReceiver::fit(&rows, &targets, 5);
    let z0 = position_zero_intervention(&messages, &table, &[0], &pairs).unwrap();
    let z1 = position_zero_intervention(&messages, &table, &[1], &pairs).unwrap();
    let fixture = z0.baseline == vec![1.0, 1.0] && z0.drop[0] > 0.0 && z0.drop[1] == 0.0 && z1.drop[1] > 0.0 && z1.drop[0] == 0.0;

    // trained compositional seeds
    let c = campaign();
    let comp: Vec<&RunAnalysis> = il2_analyses()
        .iter()
        .zip(&c.il2.records)
        .filter(|(_, r)| r.metrics.compositional)
        .map(|(a, _)| a)
        .collect();
    let rel = mean(comp.iter().map(|a| a.relevant_drop));
    let irr = mean(comp.iter().map(|a| a.irrelevant_drop));
    let trained = !comp.is_empty() && rel >= 3.0 * irr && rel > 0.0;
    let pass = fixture && trained;
    line(
        9,
        "intervention selectivity",
        pass,
        &format!(
            "fixture drops pos0 {:?} pos1 {:?}; trained ({} compositional seeds) relevant {rel:.4} vs irrelevant {irr:.4} (needs >= 3x)",
            z0.drop,
            z1.drop,
            comp.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_lazimpa_baseline() {
    let c = campaign();
    let (lz, il) = (rate(&c.lazimpa), rate(&c.il2));
    let pass = lz <= 0.2 && lz < il;
    let pd = mean(c.lazimpa.records.iter().map(|r| r.metrics.posdis));
    line(
        10,
        "LazImpa baseline",
        pass,
        &format!("compositional rate LazImpa {lz:.2} (mean PosDis {pd:.3}) vs IL {il:.2} (needs <= 0.20 and below IL)"),
    );
    assert!(pass);
}

#[test]
fn criterion_11_cross_property_transfer() {
    let c = campaign();
    let comp = il2_analyses();
    let hol = holistic_analyses();
    let wins = comp
        .iter()
        .zip(hol)
        .filter(|(a, b)| a.transfer.as_ref().unwrap().holdout_accuracy > b.transfer.as_ref().unwrap().holdout_accuracy)
        .count();
    let comp_acc = mean(comp.iter().map(|a| a.transfer.as_ref().unwrap().holdout_accuracy));
    let hol_acc = mean(hol.iter().map(|a| a.transfer.as_ref().unwrap().holdout_accuracy));

    let compositional: Vec<&RunAnalysis> =
        comp.iter().zip(&c.il2.records).filter(|(_, r)| r.metrics.compositional).map(|(a, _)| a).collect();
    let regression = mean(compositional.iter().filter_map(|a| a.regression_mean()));
    let chance = 0.2;

    // absolute-coding contrast: symbols are the bins themselves
    let prepared = Prepared::new(Dataset::generate(Domain::SpringMass, 300, 0).unwrap(), InputEncoder::FrozenMlp, 0).unwrap();
    let abs_msgs: Vec<MessageBundle> =
        prepared.dataset.scenes.iter().map(|s| MessageBundle::from_symbols(1, 2, 5, &s.property_bins)).collect();
    let absolute = (0..2)
        .map(|p| {
            single_message_regression(&abs_msgs, &prepared.dataset.scenes, &prepared.split, 0, p, 100, 0)
                .unwrap()
                .holdout_accuracy
        })
        .fold(1.0, f64::min);

    let pass = wins >= 7 && (regression - chance).abs() <= 0.10 && absolute >= 0.99;
    line(
        11,
        "cross-property transfer",
        pass,
        &format!(
            "compositional beats holistic on {wins}/10 seeds ({comp_acc:.3} vs {hol_acc:.3}); single-message regression {regression:.3} vs chance {chance:.2} (needs within 0.10); absolute-code fixture {absolute:.3}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_12_discrete_vs_continuous() {
    let c = campaign();
    let d = il2_analyses();
    let k = continuous_analyses();
    let wins = d.iter().zip(k).filter(|(a, b)| a.selectivity.value > b.selectivity.value).count();
    let ties = d.iter().zip(k).filter(|(a, b)| a.selectivity.value == b.selectivity.value).count();
    let sd = mean(d.iter().map(|a| a.selectivity.value));
    let sk = mean(k.iter().map(|a| a.selectivity.value));
    let inst_d = c.il2.records.iter().filter(|r| r.instability.is_some()).count();
    let inst_k = c.continuous.records.iter().filter(|r| r.instability.is_some()).count();
    let pass = wins >= 7 && inst_k >= inst_d;
    line(
        12,
        "discrete vs continuous",
        pass,
        &format!("discrete more selective on {wins}/10 seeds, {ties} ties ({sd:.3} vs {sk:.3}); instabilities continuous {inst_k} vs discrete {inst_d}"),
    );
    assert!(pass);
}

#[test]
fn criterion_13_determinism() {
    let c = campaign();
    let mut pass = true;
    let mut checked = Vec::new();
    for (cond, seed) in [(&c.il2, 3u64), (&c.lazimpa, 5)] {
        let stored =
            std::fs::read(c.store.run_dir(&cond.cfg).join(format!("run.{seed}.metrics"))).unwrap();
        let fresh = run_experiment(&cond.cfg, seed, None).unwrap().record.metrics.to_kv();
        let same = stored == fresh.as_bytes();
        checked.push(format!("{} seed {seed}: {}", cond.cfg.name, if same { "identical" } else { "DIFFERENT" }));
        pass &= same;
    }
    line(13, "determinism", pass, &format!("fresh re-run vs stored metric report bytes: {}", checked.join(", ")));
    assert!(pass);
}
