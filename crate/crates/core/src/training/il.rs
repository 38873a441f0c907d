use rand::Rng;

use super::data::{evaluate_pairs, pair_rows, Accuracy, Prepared};
use super::entropy::{empirical_entropy, entropy_regularizer};
use super::oracle::{logit_hits, pair_bce};
use super::{EpochLog, InstabilityEvent, Result, TrainError, TrainingConfig};
use crate::agents::{pair_input, AgentError, ChannelMode, Emission, FrameAssignment, Receiver, Sender, SenderConfig};
use crate::env::ComparisonPair;
use crate::seed;
use crate::tensor::{argmax, clip_gradients, Adam, Graph, ParamStore, TensorError, Var};

/// Non-finite failures end a run as an instability; anything else is a bug.
pub(super) fn instability(e: &TrainError) -> Option<String> {
    match e {
        TrainError::Tensor(t @ (TensorError::NonFinite { .. } | TensorError::NonFiniteGrad { .. }))
        | TrainError::Agent(AgentError::Tensor(t @ (TensorError::NonFinite { .. } | TensorError::NonFiniteGrad { .. }))) => {
            Some(t.to_string())
        }
        _ => None,
    }
}

/// Fresh sender with every agent's encoder copied from the oracle.
pub fn build_sender(
    prepared: &Prepared,
    oracle_store: &ParamStore,
    cfg: SenderConfig,
    assignment: FrameAssignment,
    seed: u64,
) -> Result<Sender> {
    if cfg.input_width != prepared.encoded.width {
        return Err(TrainError::Config(format!(
            "sender expects width {} but frames are {} wide",
            cfg.input_width, prepared.encoded.width
        )));
    }
    let mut sender = Sender::new(cfg, assignment, &mut seed::stream(seed, "sender"))?;
    sender.load_encoder(oracle_store)?;
    Ok(sender)
}

/// Eval-mode message of every scene, indexed by scene id.
pub fn scene_messages(sender: &Sender, prepared: &Prepared) -> Result<Vec<Vec<f64>>> {
    let ids: Vec<usize> = (0..prepared.dataset.len()).collect();
    Ok(sender.eval_messages(&prepared.encoded, &ids)?.into_iter().map(|b| b.values).collect())
}

/// Per-head `[rows, V]` logit slices and their argmax symbols.
pub(super) fn head_views(g: &mut Graph, sender: &Sender, logits: &[Var]) -> (Vec<Var>, Vec<Vec<usize>>) {
    let (k, v) = (sender.cfg.k, sender.cfg.v);
    let mut vars = Vec::with_capacity(sender.cfg.positions());
    let mut syms = Vec::with_capacity(sender.cfg.positions());
    for &z in logits {
        for pos in 0..k {
            let zk = g.slice_cols(z, pos * v, v);
            syms.push(g.value(zk).data().chunks(v).map(argmax).collect());
            vars.push(zk);
        }
    }
    (vars, syms)
}

/// Running totals for one epoch's log line.
pub(super) struct EpochAccumulator {
    loss: f64,
    steps: usize,
    hits: Vec<f64>,
    decisions: f64,
    symbols: Vec<Vec<usize>>,
    active: Vec<usize>,
}

impl EpochAccumulator {
    pub(super) fn new(n_props: usize, n_heads: usize) -> Self {
        EpochAccumulator {
            loss: 0.0,
            steps: 0,
            hits: vec![0.0; n_props],
            decisions: 0.0,
            symbols: vec![Vec::new(); n_heads],
            active: vec![0; n_heads],
        }
    }

    pub(super) fn add(&mut self, loss: f64, hits: &[f64], decisions: usize, symbols: Vec<Vec<usize>>, active: &[bool]) {
        self.loss += loss;
        self.steps += 1;
        self.hits.iter_mut().zip(hits).for_each(|(a, h)| *a += h);
        self.decisions += decisions as f64;
        for (acc, s) in self.symbols.iter_mut().zip(symbols) {
            acc.extend(s);
        }
        for (acc, on) in self.active.iter_mut().zip(active) {
            *acc += *on as usize;
        }
    }

    pub(super) fn finish(self, epoch: usize, v: usize, temperature: f64, resets_so_far: usize) -> EpochLog {
        let d = self.decisions.max(1.0);
        EpochLog {
            epoch,
            train_loss: self.loss / self.steps.max(1) as f64,
            train_acc: self.hits.iter().map(|h| h / d).collect(),
            head_entropy: self.symbols.iter().map(|s| empirical_entropy(s, v)).collect(),
            entropy_active: self.active,
            temperature,
            resets_so_far,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IlOutcome {
    pub sender: Sender,
    pub receivers: Vec<Receiver>,
    pub logs: Vec<EpochLog>,
    pub instability: Option<InstabilityEvent>,
    /// Mean over the final population.
    pub holdout: Accuracy,
    pub holdout_per_receiver: Vec<Accuracy>,
    pub resets: usize,
}

struct Population {
    receivers: Vec<Receiver>,
    optims: Vec<Adam>,
}

struct StepStats {
    loss: f64,
    hits: Vec<f64>,
    decisions: usize,
    symbols: Vec<Vec<usize>>,
    active: Vec<bool>,
}

#[allow(clippy::too_many_arguments)]
fn il_step<R: Rng + ?Sized>(
    prepared: &Prepared,
    sender: &mut Sender,
    sender_opt: &mut Adam,
    pop: &mut Population,
    batch: &[ComparisonPair],
    cfg: &TrainingConfig,
    emission: Emission,
    rng: &mut R,
) -> Result<StepStats> {
    let np = prepared.n_props();
    let plan = pair_rows(batch);
    let mut g = Graph::new();
    let sp = sender.store.bind(&mut g);
    let out = sender.forward(&mut g, &sp, &prepared.encoded, &plan.ids, emission, rng)?;
    let r_count = pop.receivers.len();
    let msg = g.grad_scale(out.message, 1.0 / r_count as f64);
    let x = pair_input(&mut g, msg, &plan.a_rows, &plan.b_rows);
    let mut bounds = Vec::with_capacity(r_count);
    let mut total: Option<Var> = None;
    let mut hits = vec![0.0; np];
    for r in &pop.receivers {
        let rp = r.store.bind(&mut g);
        let z = r.forward(&mut g, &rp, x)?;
        let l = pair_bce(&mut g, z, &plan.targets, &cfg.loss_weights);
        for (h, v) in hits.iter_mut().zip(logit_hits(g.value(z).data(), &plan.targets, np)) {
            *h += v;
        }
        total = Some(match total {
            Some(t) => g.add(t, l),
            None => l,
        });
        bounds.push(rp);
    }
    let bce_total = total.expect("non-empty population");
    let loss_value = g.scalar(bce_total)? / r_count as f64;
    let (heads, symbols) = head_views(&mut g, sender, &out.logits);
    let mut loss = bce_total;
    let mut active = vec![false; heads.len()];
    if sender.cfg.channel == ChannelMode::Discrete {
        let (term, on) = entropy_regularizer(&mut g, &heads, &symbols, sender.cfg.v, cfg.entropy_coeff, cfg.entropy_floor_fraction);
        active = on;
        if let Some(t) = term {
            loss = g.add(loss, t);
        }
    }
    let grads = g.backward(loss)?;
    sender.store.collect_grads(&grads, &sp);
    clip_gradients(&mut sender.store, cfg.grad_clip);
    for (r, rp) in pop.receivers.iter_mut().zip(&bounds) {
        r.store.collect_grads(&grads, rp);
        clip_gradients(&mut r.store, cfg.grad_clip);
    }
    sender_opt.step(&mut sender.store)?;
    for (r, opt) in pop.receivers.iter_mut().zip(&mut pop.optims) {
        opt.step(&mut r.store)?;
    }
    Ok(StepStats { loss: loss_value, hits, decisions: batch.len() * r_count, symbols, active })
}

/// Train one sender against a population of receivers that is re-drawn
/// from scratch every `reset_interval` epochs. The sender sees the mean of
/// the receivers' losses.
pub fn train_iterated_learning(
    prepared: &Prepared,
    oracle_store: &ParamStore,
    sender_cfg: SenderConfig,
    assignment: FrameAssignment,
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<IlOutcome> {
    cfg.validate()?;
    let np = prepared.n_props();
    if !cfg.loss_weights.is_empty() && cfg.loss_weights.len() != np {
        return Err(TrainError::Config(format!("{} loss weights for {np} properties", cfg.loss_weights.len())));
    }
    let mut sender = build_sender(prepared, oracle_store, sender_cfg, assignment, seed)?;
    let width = 2 * sender.cfg.message_width();
    let r_count = cfg.population_size;
    let mut pop = Population {
        receivers: (0..r_count)
            .map(|r| Receiver::new(width, np, &mut seed::stream_indexed(seed, "receiver", r as u64)))
            .collect(),
        optims: (0..r_count).map(|_| Adam::new(cfg.receiver_lr)).collect(),
    };
    let mut sender_opt = Adam::new(cfg.sender_lr);
    let mut pair_rng = seed::stream(seed, "pairs");
    let mut gumbel_rng = seed::stream(seed, "gumbel");
    let n_pairs = 2 * prepared.split.train_ids.len();
    let n_heads = sender.cfg.positions();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut instability_event = None;
    let mut resets = 0usize;
    'epochs: for epoch in 0..cfg.epochs {
        if cfg.is_reset_epoch(epoch) {
            for (r, (rec, opt)) in pop.receivers.iter_mut().zip(&mut pop.optims).enumerate() {
                rec.reinit(&mut seed::stream_indexed(seed, "receiver-reset", (resets * r_count + r) as u64));
                opt.reset();
            }
            resets += 1;
        }
        let temperature = cfg.temperature(epoch);
        let emission = Emission::Train { temperature, sample: cfg.sample_mode(epoch) };
        let pairs = prepared.sample_train_pairs(n_pairs, &mut pair_rng)?;
        let mut acc = EpochAccumulator::new(np, n_heads);
        for (step, batch) in pairs.chunks(cfg.batch_size).enumerate() {
            match il_step(prepared, &mut sender, &mut sender_opt, &mut pop, batch, cfg, emission, &mut gumbel_rng) {
                Ok(s) => acc.add(s.loss, &s.hits, s.decisions, s.symbols, &s.active),
                Err(e) => match instability(&e) {
                    Some(detail) => {
                        instability_event = Some(InstabilityEvent { epoch, step, detail });
                        break 'epochs;
                    }
                    None => return Err(e),
                },
            }
        }
        logs.push(acc.finish(epoch, sender.cfg.v, temperature, resets));
    }
    let messages = scene_messages(&sender, prepared)?;
    let test = prepared.test_pairs();
    let holdout_per_receiver = pop
        .receivers
        .iter()
        .map(|r| evaluate_pairs(&messages, &test, |rows| Ok(r.predict(rows)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(IlOutcome {
        holdout: Accuracy::mean(&holdout_per_receiver),
        holdout_per_receiver,
        sender,
        receivers: pop.receivers,
        logs,
        instability: instability_event,
        resets,
    })
}
