use rand::Rng;

use super::data::{evaluate_pairs, pair_rows, Accuracy, Prepared};
use super::il::{build_sender, head_views, instability, scene_messages, EpochAccumulator};
use super::oracle::{logit_hits, pair_bce};
use super::{EpochLog, InstabilityEvent, Result, TrainError, TrainingConfig};
use crate::agents::{pair_input, ChannelMode, Emission, FrameAssignment, ImpatientReceiver, Sender, SenderConfig};
use crate::env::ComparisonPair;
use crate::seed;
use crate::tensor::{clip_gradients, Adam, Graph, ParamStore, Tensor, Var};

#[derive(Debug, Clone)]
pub struct LazImpaOutcome {
    pub sender: Sender,
    pub receiver: ImpatientReceiver,
    pub logs: Vec<EpochLog>,
    pub instability: Option<InstabilityEvent>,
    /// Accuracy of the full-message prediction set.
    pub holdout: Accuracy,
}

/// Mean per-row softmax entropy of `logits [rows, V]`.
fn mean_row_entropy(g: &mut Graph, logits: Var) -> Var {
    let p = g.softmax_rows(logits);
    let safe = g.add_scalar(p, 1e-12);
    let lp = g.ln(safe);
    let plp = g.mul(p, lp);
    let rows = g.value(logits).rows().max(1) as f64;
    let s = g.sum(plp);
    g.scale(s, -1.0 / rows)
}

struct Step {
    loss: f64,
    hits: Vec<f64>,
    symbols: Vec<Vec<usize>>,
}

#[allow(clippy::too_many_arguments)]
fn lazimpa_step<R: Rng + ?Sized>(
    prepared: &Prepared,
    sender: &mut Sender,
    sender_opt: &mut Adam,
    receiver: &mut ImpatientReceiver,
    receiver_opt: &mut Adam,
    batch: &[ComparisonPair],
    cfg: &TrainingConfig,
    emission: Emission,
    rng: &mut R,
) -> Result<Step> {
    let np = prepared.n_props();
    let plan = pair_rows(batch);
    let mut g = Graph::new();
    let sp = sender.store.bind(&mut g);
    let out = sender.forward(&mut g, &sp, &prepared.encoded, &plan.ids, emission, rng)?;
    let x = pair_input(&mut g, out.message, &plan.a_rows, &plan.b_rows);
    let rp = receiver.store.bind(&mut g);
    let sets = receiver.forward(&mut g, &rp, x)?;
    let mut loss: Option<Var> = None;
    for &z in &sets {
        let l = pair_bce(&mut g, z, &plan.targets, &cfg.loss_weights);
        loss = Some(match loss {
            Some(t) => g.add(t, l),
            None => l,
        });
    }
    let last = *sets.last().expect("at least one prefix");
    let hits = logit_hits(g.value(last).data(), &plan.targets, np);
    let mut loss = loss.expect("at least one prefix");
    let loss_value = g.scalar(loss)?;
    let (heads, symbols) = head_views(&mut g, sender, &out.logits);
    if cfg.lazimpa_entropy > 0.0 {
        for &h in &heads {
            let e = mean_row_entropy(&mut g, h);
            let term = g.scale(e, cfg.lazimpa_entropy);
            loss = g.add(loss, term);
        }
    }
    let grads = g.backward(loss)?;
    sender.store.collect_grads(&grads, &sp);
    clip_gradients(&mut sender.store, cfg.grad_clip);
    receiver.store.collect_grads(&grads, &rp);
    clip_gradients(&mut receiver.store, cfg.grad_clip);
    sender_opt.step(&mut sender.store)?;
    receiver_opt.step(&mut receiver.store)?;
    Ok(Step { loss: loss_value, hits, symbols })
}

/// Lazy speaker (always-on entropy penalty) against an impatient listener
/// that predicts from every message prefix. No population, no resets.
pub fn train_lazimpa_baseline(
    prepared: &Prepared,
    oracle_store: &ParamStore,
    sender_cfg: SenderConfig,
    assignment: FrameAssignment,
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<LazImpaOutcome> {
    cfg.validate()?;
    if sender_cfg.channel != ChannelMode::Discrete {
        return Err(TrainError::Config("the lazy speaker needs a discrete channel".into()));
    }
    let np = prepared.n_props();
    let mut sender = build_sender(prepared, oracle_store, sender_cfg, assignment, seed)?;
    let (n, k, v) = (sender.cfg.n_agents, sender.cfg.k, sender.cfg.v);
    let mut receiver = ImpatientReceiver::new(n, k, v, np, &mut seed::stream(seed, "impatient"));
    let mut sender_opt = Adam::new(cfg.sender_lr);
    let mut receiver_opt = Adam::new(cfg.receiver_lr);
    let mut pair_rng = seed::stream(seed, "pairs");
    let mut gumbel_rng = seed::stream(seed, "gumbel");
    let n_pairs = 2 * prepared.split.train_ids.len();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut instability_event = None;
    'epochs: for epoch in 0..cfg.epochs {
        let temperature = cfg.temperature(epoch);
        let emission = Emission::Train { temperature, sample: cfg.sample_mode(epoch) };
        let pairs = prepared.sample_train_pairs(n_pairs, &mut pair_rng)?;
        let mut acc = EpochAccumulator::new(np, n * k);
        for (step, batch) in pairs.chunks(cfg.batch_size).enumerate() {
            let r = lazimpa_step(
                prepared,
                &mut sender,
                &mut sender_opt,
                &mut receiver,
                &mut receiver_opt,
                batch,
                cfg,
                emission,
                &mut gumbel_rng,
            );
            match r {
                Ok(s) => acc.add(s.loss, &s.hits, batch.len(), s.symbols, &[]),
                Err(e) => match instability(&e) {
                    Some(detail) => {
                        instability_event = Some(InstabilityEvent { epoch, step, detail });
                        break 'epochs;
                    }
                    None => return Err(e),
                },
            }
        }
        logs.push(acc.finish(epoch, v, temperature, 0));
    }
    let messages = scene_messages(&sender, prepared)?;
    let test = prepared.test_pairs();
    let holdout = evaluate_pairs(&messages, &test, |rows| {
        let mut g = Graph::new();
        let p = receiver.store.bind(&mut g);
        let x = g.constant(Tensor::from_rows(rows)?);
        let sets = receiver.forward(&mut g, &p, x)?;
        let z = g.value(*sets.last().expect("at least one prefix"));
        Ok(z.data().chunks(np).map(|r| r.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()).collect())
    })?;
    Ok(LazImpaOutcome { sender, receiver, logs, instability: instability_event, holdout })
}
