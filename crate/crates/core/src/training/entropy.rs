use crate::tensor::{Graph, Var};

/// Activation threshold of the anti-collapse term, in nats.
pub fn entropy_floor(v: usize, fraction: f64) -> f64 {
    fraction * (v as f64).ln()
}

/// Plug-in entropy of a symbol sample, in nats.
pub fn empirical_entropy(symbols: &[usize], v: usize) -> f64 {
    if symbols.is_empty() {
        return 0.0;
    }
    let mut counts = vec![0usize; v];
    for &s in symbols {
        counts[s] += 1;
    }
    let n = symbols.len() as f64;
    let h: f64 = counts
        .iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

/// Entropy of the batch-mean softmax of `logits [rows, V]`, as a graph scalar.
pub fn soft_entropy(g: &mut Graph, logits: Var) -> Var {
    let p = g.softmax_rows(logits);
    let mean = g.col_mean(p);
    let safe = g.add_scalar(mean, 1e-12);
    let lp = g.ln(safe);
    let plp = g.mul(mean, lp);
    let s = g.sum(plp);
    g.scale(s, -1.0)
}

/// `-coeff * H` for every head whose hard-symbol entropy sits below the floor.
///
/// `head_logits[h]` is `[rows, V]`; `head_symbols[h]` are the argmax symbols
/// of those rows. The gate uses the empirical entropy of the symbols; the
/// gradient flows through the mean softmax distribution. Returns the summed
/// term (if any head is active) and the per-head activity flags.
pub fn entropy_regularizer(
    g: &mut Graph,
    head_logits: &[Var],
    head_symbols: &[Vec<usize>],
    v: usize,
    coeff: f64,
    fraction: f64,
) -> (Option<Var>, Vec<bool>) {
    let floor = entropy_floor(v, fraction);
    let mut total: Option<Var> = None;
    let mut active = Vec::with_capacity(head_logits.len());
    for (&z, syms) in head_logits.iter().zip(head_symbols) {
        let on = coeff > 0.0 && empirical_entropy(syms, v) < floor;
        active.push(on);
        if !on {
            continue;
        }
        let h = soft_entropy(g, z);
        let term = g.scale(h, -coeff);
        total = Some(match total {
            Some(t) => g.add(t, term),
            None => term,
        });
    }
    (total, active)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn floor_for_five_symbols() {
        assert!((entropy_floor(5, 0.1) - 0.16094379124341003).abs() < 1e-15);
    }

    #[test]
    fn uniform_head_is_inactive() {
        let mut g = Graph::new();
        let z = g.leaf(Tensor::zeros(&[5, 5]));
        let (term, active) = entropy_regularizer(&mut g, &[z], &[vec![0, 1, 2, 3, 4]], 5, 0.03, 0.1);
        assert!(term.is_none());
        assert_eq!(active, vec![false]);
        assert!((empirical_entropy(&[0, 1, 2, 3, 4], 5) - 5f64.ln()).abs() < 1e-12);
    }

    fn term_value(logits: &[f64]) -> f64 {
        let mut g = Graph::new();
        let z = g.leaf(Tensor::new(vec![1, 2], logits.to_vec()).unwrap());
        let (term, _) = entropy_regularizer(&mut g, &[z], &[vec![0, 0, 0]], 2, 0.03, 0.1);
        g.scalar(term.unwrap()).unwrap()
    }

    #[test]
    fn collapsed_head_pushes_toward_uniform() {
        let x = [2.0, -1.0];
        let mut g = Graph::new();
        let z = g.leaf(Tensor::new(vec![1, 2], x.to_vec()).unwrap());
        let (term, active) = entropy_regularizer(&mut g, &[z], &[vec![0, 0, 0]], 2, 0.03, 0.1);
        assert_eq!(active, vec![true]);
        let grads = g.backward(term.unwrap()).unwrap();
        let analytic = grads.get(z).unwrap().to_vec();
        let h = 1e-5;
        for i in 0..2 {
            let mut up = x;
            let mut dn = x;
            up[i] += h;
            dn[i] -= h;
            let fd = (term_value(&up) - term_value(&dn)) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-7, "{fd} vs {}", analytic[i]);
        }
        // descending the term raises the losing logit and lowers the winner
        assert!(analytic[0] > 0.0 && analytic[1] < 0.0);
    }
}
