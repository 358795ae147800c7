#![allow(dead_code)]

use std::collections::BTreeSet;

use hierhead::qp::{binomial, brute_force_size, QpInstance};
use hierhead::SimilarityBundle;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random small instance that brute force can enumerate within `max_size`.
pub fn random_instance<R: Rng>(rng: &mut R, max_size: u128) -> QpInstance<f64> {
    loop {
        let q = rng.random_range(2..=10);
        let k = rng.random_range(1..=q.min(6));
        let n = rng.random_range(1..=k.min(3));
        let c = rng.random_range(1..=6);
        if c as u128 > binomial(k, n) {
            continue;
        }
        let psi = Array2::from_shape_fn((c, q), |_| StandardNormal.sample(rng));
        let mut r = Array2::zeros((q, q));
        for a in 0..q {
            for b in (a + 1)..q {
                let v: f64 = rng.random_range(-1.0..1.0);
                r[[a, b]] = v;
                r[[b, a]] = v;
            }
        }
        let bias = Array1::from_shape_fn(q, |_| rng.random_range(0.0..1.0));
        let mut pairs = BTreeSet::new();
        for i in 0..c {
            for j in (i + 1)..c {
                if rng.random_bool(0.3) {
                    pairs.insert((i, j));
                }
            }
        }
        let weights = [0.0, 0.1, 0.5];
        let lr = weights[rng.random_range(0..3)];
        let lb = weights[rng.random_range(0..3)];
        let bundle = SimilarityBundle::from_parts(psi, r, bias, 0.0).unwrap().with_pairs(pairs);
        let inst = QpInstance::new(bundle, k, n, lr, lb, 0.0).unwrap();
        if brute_force_size(&inst) <= max_size {
            return inst;
        }
    }
}
