use rand::Rng;

use super::{Graph, Result, Tensor, TensorError, Var};

/// Bounds on the uniform draw feeding `-ln(-ln(u))`.
const U_MIN: f64 = 1e-10;
const U_MAX: f64 = 1.0 - 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSample {
    /// Relaxed sample, differentiable.
    Soft,
    /// One-hot forward value, gradient through the relaxed sample.
    Hard,
}

pub fn gumbel_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>().clamp(U_MIN, U_MAX);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Row-wise Gumbel-Softmax over `logits [rows, V]`.
pub fn gumbel_softmax<R: Rng + ?Sized>(
    g: &mut Graph,
    logits: Var,
    temperature: f64,
    mode: ChannelSample,
    rng: &mut R,
) -> Result<Var> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(TensorError::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let t = g.value(logits);
    if t.cols() < 2 {
        return Err(TensorError::InvalidArgument("vocabulary must have at least 2 symbols".into()));
    }
    if !t.is_finite() {
        return Err(TensorError::NonFinite { op: "gumbel_softmax" });
    }
    let noise = gumbel_noise(t.len(), rng);
    let perturbed = g.add_const(logits, &noise);
    let scaled = g.scale(perturbed, 1.0 / temperature);
    let soft = g.softmax_rows(scaled);
    Ok(match mode {
        ChannelSample::Soft => soft,
        ChannelSample::Hard => g.straight_through(soft),
    })
}

/// Draw a single Gumbel-Softmax sample outside of any training graph.
pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    mode: ChannelSample,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let x = g.constant(Tensor::new(vec![1, logits.len()], logits.to_vec())?);
    let y = gumbel_softmax(&mut g, x, temperature, mode, rng)?;
    Ok(g.value(y).data().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hard_sample_is_one_hot() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let y = gumbel_softmax_sample(&[0.3, -1.0, 2.0, 0.0, 0.5], 0.7, ChannelSample::Hard, &mut rng).unwrap();
            assert_eq!(y.iter().filter(|v| **v == 1.0).count(), 1);
            assert_eq!(y.iter().filter(|v| **v == 0.0).count(), 4);
        }
    }

    #[test]
    fn soft_sample_is_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let y = gumbel_softmax_sample(&[1.0, -2.0, 0.1], 0.5, ChannelSample::Soft, &mut rng).unwrap();
            assert!(y.iter().all(|v| *v >= 0.0));
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn high_temperature_is_nearly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = 5;
        let mut acc = vec![0.0; v];
        let draws = 10_000;
        for _ in 0..draws {
            let y = gumbel_softmax_sample(&vec![0.0; v], 100.0, ChannelSample::Soft, &mut rng).unwrap();
            acc.iter_mut().zip(&y).for_each(|(a, b)| *a += b);
        }
        for a in acc {
            assert!((a / draws as f64 - 1.0 / v as f64).abs() < 0.05);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let logits = [0.2, 0.1, -0.4, 1.3];
        let a = gumbel_softmax_sample(&logits, 1.0, ChannelSample::Soft, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gumbel_softmax_sample(&logits, 1.0, ChannelSample::Soft, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gumbel_softmax_sample(&[0.0, 1.0], 0.0, ChannelSample::Soft, &mut rng).is_err());
        assert!(gumbel_softmax_sample(&[0.0, 1.0], -1.0, ChannelSample::Soft, &mut rng).is_err());
        assert!(gumbel_softmax_sample(&[0.0, f64::NAN], 1.0, ChannelSample::Soft, &mut rng).is_err());
        assert!(gumbel_softmax_sample(&[0.0], 1.0, ChannelSample::Soft, &mut rng).is_err());
    }

    #[test]
    fn hard_forward_is_argmax_of_relaxed_sample() {
        let logits = [0.5, 0.4, -0.2, 0.9, 0.0];
        for seed in 0..20 {
            let soft = gumbel_softmax_sample(&logits, 0.8, ChannelSample::Soft, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let hard = gumbel_softmax_sample(&logits, 0.8, ChannelSample::Hard, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let am = super::super::graph::argmax(&soft);
            assert_eq!(hard[am], 1.0);
        }
    }
}
