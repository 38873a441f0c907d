//! Central-difference gradient checks over every differentiable graph op.

use physlang::tensor::{gumbel_softmax, ChannelSample, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Floor on the denominator so vanishing gradients compare absolutely.
pub const REL_FLOOR: f64 = 1e-4;

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Var>;

pub struct Case {
    pub inputs: Vec<Tensor>,
    pub build: Build,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so kinks are never straddled.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.05..1.5);
            if rng.gen_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduce any output to a scalar with fixed random weights.
fn project(g: &mut Graph, out: Var, w: &[f64]) -> Var {
    let m = g.mul_const(out, w.to_vec());
    g.sum(m)
}

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn unary(rng: &mut ChaCha8Rng, x: Tensor, f: fn(&mut Graph, Var) -> Var, out_len: usize) -> Case {
    let w = weights(rng, out_len);
    Case { inputs: vec![x], build: Box::new(move |g, v| { let o = f(g, v[0]); project(g, o, &w) }) }
}

pub const OPS: &[&str] = &[
    "matmul", "add_row", "add", "sub", "mul", "scale", "add_const", "add_scalar", "mul_const", "relu", "tanh",
    "sigmoid", "ln", "softmax_rows", "reshape", "conv1d", "segment_mean", "concat_cols", "slice_cols",
    "gather_rows", "sum", "mean", "col_mean", "bce_with_logits", "cross_entropy", "gumbel_softmax",
];

/// A random instance of `op`.
pub fn case(op: &str, seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.gen_range(1..5usize);
    let c = rng.gen_range(1..6usize);
    let n = r * c;
    match op {
        "matmul" => {
            let k = rng.gen_range(1..5usize);
            let a = uniform(&mut rng, &[r, k], -1.0, 1.0);
            let b = uniform(&mut rng, &[k, c], -1.0, 1.0);
            let w = weights(&mut rng, n);
            Case { inputs: vec![a, b], build: Box::new(move |g, v| { let o = g.matmul(v[0], v[1]); project(g, o, &w) }) }
        }
        "add_row" => {
            let x = uniform(&mut rng, &[r, c], -1.0, 1.0);
            let b = uniform(&mut rng, &[c], -1.0, 1.0);
            let w = weights(&mut rng, n);
            Case { inputs: vec![x, b], build: Box::new(move |g, v| { let o = g.add_row(v[0], v[1]); project(g, o, &w) }) }
        }
        "add" | "sub" | "mul" => {
            let a = uniform(&mut rng, &[r, c], -1.0, 1.0);
            let b = uniform(&mut rng, &[r, c], -1.0, 1.0);
            let w = weights(&mut rng, n);
            let which = op.to_string();
            Case {
                inputs: vec![a, b],
                build: Box::new(move |g, v| {
                    let o = match which.as_str() {
                        "add" => g.add(v[0], v[1]),
                        "sub" => g.sub(v[0], v[1]),
                        _ => g.mul(v[0], v[1]),
                    };
                    project(g, o, &w)
                }),
            }
        }
        "scale" | "add_scalar" => {
            let x = uniform(&mut rng, &[r, c], -1.0, 1.0);
            let s = rng.gen_range(-2.0..2.0);
            let w = weights(&mut rng, n);
            let add = op == "add_scalar";
            Case {
                inputs: vec![x],
                build: Box::new(move |g, v| {
                    let o = if add { g.add_scalar(v[0], s) } else { g.scale(v[0], s) };
                    project(g, o, &w)
                }),
            }
        }
        "add_const" | "mul_const" => {
            let x = uniform(&mut rng, &[r, c], -1.0, 1.0);
            let k = weights(&mut rng, n);
            let w = weights(&mut rng, n);
            let add = op == "add_const";
            Case {
                inputs: vec![x],
                build: Box::new(move |g, v| {
                    let o = if add { g.add_const(v[0], &k) } else { g.mul_const(v[0], k.clone()) };
                    project(g, o, &w)
                }),
            }
        }
        "relu" => unary(&mut rng, off_zero(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), &[r, c]), Graph::relu, n),
        "tanh" => unary(&mut rng, uniform(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), &[r, c], -2.0, 2.0), Graph::tanh, n),
        "sigmoid" => {
            unary(&mut rng, uniform(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), &[r, c], -4.0, 4.0), Graph::sigmoid, n)
        }
        "ln" => unary(&mut rng, uniform(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), &[r, c], 0.2, 3.0), Graph::ln, n),
        "softmax_rows" => {
            unary(&mut rng, uniform(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), &[r, c], -3.0, 3.0), Graph::softmax_rows, n)
        }
        "reshape" => {
            let x = uniform(&mut rng, &[r, c], -1.0, 1.0);
            let w = weights(&mut rng, n);
            Case { inputs: vec![x], build: Box::new(move |g, v| { let o = g.reshape(v[0], &[c, r]); project(g, o, &w) }) }
        }
        "conv1d" => {
            let batch = rng.gen_range(1..3usize);
            let seq = rng.gen_range(1..5usize);
            let kernel = [1usize, 3, 5][rng.gen_range(0..3)];
            let c_in = rng.gen_range(1..4usize);
            let c_out = rng.gen_range(1..4usize);
            let x = uniform(&mut rng, &[batch * seq, c_in], -1.0, 1.0);
            let wt = uniform(&mut rng, &[kernel * c_in, c_out], -1.0, 1.0);
            let b = uniform(&mut rng, &[c_out], -1.0, 1.0);
            let w = weights(&mut rng, batch * seq * c_out);
            Case {
                inputs: vec![x, wt, b],
                build: Box::new(move |g, v| { let o = g.conv1d(v[0], v[1], v[2], seq, kernel); project(g, o, &w) }),
            }
        }
        "segment_mean" => {
            let seg = rng.gen_range(1..4usize);
            let x = uniform(&mut rng, &[r * seg, c], -1.0, 1.0);
            let w = weights(&mut rng, n);
            Case { inputs: vec![x], build: Box::new(move |g, v| { let o = g.segment_mean(v[0], seg); project(g, o, &w) }) }
        }
        "concat_cols" => {
            let c2 = rng.gen_range(1..4usize);
            let a = uniform(&mut rng, &[r, c], -1.0, 1.0);
            let b = uniform(&mut rng, &[r, c2], -1.0, 1.0);
            let w = weights(&mut rng, r * (c + c2));
            Case {
                inputs: vec![a, b],
                build: Box::new(move |g, v| { let o = g.concat_cols(&[v[0], v[1]]); project(g, o, &w) }),
            }
        }
        "slice_cols" => {
            let start = rng.gen_range(0..c);
            let len = rng.gen_range(1..=c - start);
            let x = uniform(&mut rng, &[r, c], -1.0, 1.0);
            let w = weights(&mut rng, r * len);
            Case {
                inputs: vec![x],
                build: Box::new(move |g, v| { let o = g.slice_cols(v[0], start, len); project(g, o, &w) }),
            }
        }
        "gather_rows" => {
            let idx: Vec<usize> = (0..rng.gen_range(1..7usize)).map(|_| rng.gen_range(0..r)).collect();
            let x = uniform(&mut rng, &[r, c], -1.0, 1.0);
            let w = weights(&mut rng, idx.len() * c);
            Case { inputs: vec![x], build: Box::new(move |g, v| { let o = g.gather_rows(v[0], &idx); project(g, o, &w) }) }
        }
        "sum" | "mean" | "col_mean" => {
            let x = uniform(&mut rng, &[r, c], -1.0, 1.0);
            let which = op.to_string();
            let w = weights(&mut rng, c);
            Case {
                inputs: vec![x],
                build: Box::new(move |g, v| match which.as_str() {
                    "sum" => g.sum(v[0]),
                    "mean" => g.mean(v[0]),
                    _ => {
                        let o = g.col_mean(v[0]);
                        project(g, o, &w)
                    }
                }),
            }
        }
        "bce_with_logits" => {
            let x = uniform(&mut rng, &[r, c], -4.0, 4.0);
            let t: Vec<f64> = (0..n).map(|_| [0.0, 0.5, 1.0][rng.gen_range(0..3)]).collect();
            let w = weights(&mut rng, n);
            Case {
                inputs: vec![x],
                build: Box::new(move |g, v| { let o = g.bce_with_logits(v[0], t.clone()); project(g, o, &w) }),
            }
        }
        "cross_entropy" => {
            let c = c.max(2);
            let x = uniform(&mut rng, &[r, c], -3.0, 3.0);
            let labels: Vec<usize> = (0..r).map(|_| rng.gen_range(0..c)).collect();
            let w = weights(&mut rng, r);
            Case {
                inputs: vec![x],
                build: Box::new(move |g, v| { let o = g.cross_entropy(v[0], &labels); project(g, o, &w) }),
            }
        }
        "gumbel_softmax" => {
            let c = c.max(2);
            let x = uniform(&mut rng, &[r, c], -2.0, 2.0);
            let tau = rng.gen_range(0.5..2.0);
            let noise_seed: u64 = rng.gen();
            let w = weights(&mut rng, r * c);
            Case {
                inputs: vec![x],
                build: Box::new(move |g, v| {
                    // same noise on every evaluation
                    let mut nr = ChaCha8Rng::seed_from_u64(noise_seed);
                    let o = gumbel_softmax(g, v[0], tau, ChannelSample::Soft, &mut nr).unwrap();
                    project(g, o, &w)
                }),
            }
        }
        other => panic!("no gradient case for {other}"),
    }
}

fn eval(case: &Case, inputs: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = (case.build)(&mut g, &vars);
    g.scalar(loss).unwrap()
}

/// Largest relative error between analytic and numeric gradients over all
/// input entries.
pub fn max_rel_error(case: &Case) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = (case.build)(&mut g, &vars);
    let grads = g.backward(loss).unwrap();
    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; case.inputs[i].len()]);
        for j in 0..case.inputs[i].len() {
            let mut plus = case.inputs.clone();
            plus[i].data_mut()[j] += STEP;
            let mut minus = case.inputs.clone();
            minus[i].data_mut()[j] -= STEP;
            let numeric = (eval(case, &plus) - eval(case, &minus)) / (2.0 * STEP);
            let a = analytic[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

/// Straight-through and gradient scaling are not differentiable in the
/// finite-difference sense; their backward rules are checked exactly.
pub fn exact_backward_rules(seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.gen_range(1..5usize);
    let c = rng.gen_range(2..6usize);
    let x = uniform(&mut rng, &[r, c], -2.0, 2.0);
    let w = weights(&mut rng, r * c);
    let factor = rng.gen_range(-3.0..3.0);

    let mut g = Graph::new();
    let v = g.leaf(x.clone());
    let st = g.straight_through(v);
    let one_hot = g.value(st).data().chunks(c).all(|row| row.iter().filter(|x| **x == 1.0).count() == 1);
    let loss = project(&mut g, st, &w);
    let st_ok = g.backward(loss).unwrap().get(v).unwrap() == &w[..];

    let mut g = Graph::new();
    let v = g.leaf(x.clone());
    let s = g.grad_scale(v, factor);
    let same = g.value(s).data() == x.data();
    let loss = project(&mut g, s, &w);
    let expect: Vec<f64> = w.iter().map(|x| x * factor).collect();
    let gs_ok = g.backward(loss).unwrap().get(v).unwrap() == &expect[..];
    one_hot && st_ok && same && gs_ok
}
