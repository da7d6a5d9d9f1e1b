//! Finite-difference gradient verification.
//!
//! Runs in f64 with central differences; any network fragment that can
//! expose its parameters and compute a scalar loss can be checked.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Param, Scalar};

/// A deterministic network fragment under gradient test. Stochastic layers
/// must be disabled while the check runs.
pub trait Differentiable<T: Scalar> {
    /// Forward + backward on the fragment's fixed input; accumulates into
    /// parameter gradients and returns the loss.
    fn loss_and_grads(&mut self) -> T;

    /// Forward only.
    fn loss_only(&mut self) -> T;

    /// Visit every parameter in a fixed order.
    fn for_each_param(&mut self, f: &mut dyn FnMut(&mut Param<T>));

    fn zero_grads(&mut self) {
        self.for_each_param(&mut |p| p.zero_grad());
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub total_coords: usize,
    /// (parameter index, coordinate, analytic, numeric) of the worst coord
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Compare analytic gradients against central finite differences
/// (`h = 1e-4` by convention) over a seeded subsample of at least
/// `min_coords` parameter coordinates.
pub fn grad_check<M: Differentiable<f64>>(
    model: &mut M,
    min_coords: usize,
    h: f64,
    seed: u64,
) -> GradCheckReport {
    model.zero_grads();
    model.loss_and_grads();

    // snapshot analytic gradients and parameter sizes
    let mut analytic: Vec<Vec<f64>> = Vec::new();
    model.for_each_param(&mut |p| analytic.push(p.grad.data().to_vec()));
    let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();

    // pick coordinates: everything if small, else a seeded subsample
    let mut coords: Vec<(usize, usize)> = Vec::new();
    if total <= min_coords {
        for (pi, &n) in sizes.iter().enumerate() {
            for ci in 0..n {
                coords.push((pi, ci));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = std::collections::HashSet::new();
        while coords.len() < min_coords {
            let flat = rng.random_range(0..total);
            if !seen.insert(flat) {
                continue;
            }
            let mut rest = flat;
            for (pi, &n) in sizes.iter().enumerate() {
                if rest < n {
                    coords.push((pi, rest));
                    break;
                }
                rest -= n;
            }
        }
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: coords.len(),
        total_coords: total,
        worst: None,
    };
    for (pi, ci) in coords {
        let numeric = {
            nudge(model, pi, ci, h);
            let plus = model.loss_only();
            nudge(model, pi, ci, -2.0 * h);
            let minus = model.loss_only();
            nudge(model, pi, ci, h);
            (plus - minus) / (2.0 * h)
        };
        let a = analytic[pi][ci];
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        let rel = (a - numeric).abs() / denom;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((pi, ci, a, numeric));
        }
    }
    report
}

fn nudge<M: Differentiable<f64>>(model: &mut M, pi: usize, ci: usize, delta: f64) {
    let mut at = 0;
    model.for_each_param(&mut |p| {
        if at == pi {
            p.value.data_mut()[ci] += delta;
        }
        at += 1;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{Dense, DenseCache};
    use crate::nn::loss::softmax_xent;
    use crate::nn::tensor::Param;

    struct DenseSoftmax {
        layer: Dense<f64>,
        input: Vec<f64>,
        target: usize,
    }

    impl Differentiable<f64> for DenseSoftmax {
        fn loss_and_grads(&mut self) -> f64 {
            let mut cache = DenseCache::default();
            let logits = self.layer.forward(&self.input, &mut cache);
            let (loss, _, dlogits) = softmax_xent(&logits, self.target).unwrap();
            self.layer.backward(&dlogits, &cache);
            loss
        }

        fn loss_only(&mut self) -> f64 {
            let logits = self.layer.forward(&self.input, &mut DenseCache::default());
            softmax_xent(&logits, self.target).unwrap().0
        }

        fn for_each_param(&mut self, f: &mut dyn FnMut(&mut Param<f64>)) {
            f(&mut self.layer.weight);
            f(&mut self.layer.bias);
        }
    }

    fn fragment() -> DenseSoftmax {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = Dense::new(8, 8, &mut rng);
        let input = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseSoftmax {
            layer,
            input,
            target: 5,
        }
    }

    #[test]
    fn dense_layer_passes_at_1e5() {
        let mut frag = fragment();
        let report = grad_check(&mut frag, 200, 1e-4, 0);
        assert!(
            report.max_rel_error < 1e-5,
            "max rel error {}",
            report.max_rel_error
        );
        assert_eq!(report.coords_checked, 72); // 64 weights + 8 biases
    }

    /// Same fragment with the weight gradient doubled: the harness must
    /// notice.
    struct Corrupted(DenseSoftmax);

    impl Differentiable<f64> for Corrupted {
        fn loss_and_grads(&mut self) -> f64 {
            let loss = self.0.loss_and_grads();
            for g in self.0.layer.weight.grad.data_mut() {
                *g *= 2.0;
            }
            loss
        }
        fn loss_only(&mut self) -> f64 {
            self.0.loss_only()
        }
        fn for_each_param(&mut self, f: &mut dyn FnMut(&mut Param<f64>)) {
            self.0.for_each_param(f);
        }
    }

    #[test]
    fn corrupted_backward_is_detected() {
        let mut frag = Corrupted(fragment());
        let report = grad_check(&mut frag, 200, 1e-4, 0);
        assert!(
            report.max_rel_error > 0.1,
            "harness failed to flag the corruption: {}",
            report.max_rel_error
        );
    }
}
