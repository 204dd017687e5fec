//! Evaluation metrics over ranked unit lists.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::{Graph, Target, UnitId};
use crate::model::{predict, BlackBoxModel};

fn top(ranked: &[UnitId], k: usize) -> &[UnitId] {
    &ranked[..k.min(ranked.len())]
}

/// 1 if any ground-truth unit is among the first `k`.
pub fn top_k_acc(ranked: &[UnitId], truth: &[UnitId], k: usize) -> f64 {
    oacc(ranked, truth, k)
}

/// 1 if every ground-truth unit is among the first `k`.
pub fn aacc(ranked: &[UnitId], truth: &[UnitId], k: usize) -> f64 {
    let head = top(ranked, k);
    if truth.iter().all(|t| head.contains(t)) {
        1.0
    } else {
        0.0
    }
}

/// 1 if at least one ground-truth unit is among the first `k`.
pub fn oacc(ranked: &[UnitId], truth: &[UnitId], k: usize) -> f64 {
    let head = top(ranked, k);
    if truth.iter().any(|t| head.contains(t)) {
        1.0
    } else {
        0.0
    }
}

/// `|top-k ∩ truth| / k`. Short rankings still divide by `k`.
pub fn precision_at(ranked: &[UnitId], truth: &[UnitId], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let hits = top(ranked, k).iter().filter(|u| truth.contains(u)).count();
    hits as f64 / k as f64
}

/// Copy of `g` with the features of `mask` set to zero.
pub fn mask_features(g: &Graph, mask: &BTreeSet<usize>) -> Graph {
    let mut out = g.clone();
    for &v in mask {
        out.feature_mut(v).iter_mut().for_each(|x| *x = 0.0);
    }
    out
}

/// Mean drop in the probability of the originally predicted class when the
/// masked nodes' features are zeroed.
pub fn fidelity<M: BlackBoxModel + ?Sized>(model: &M, instances: &[(Graph, BTreeSet<usize>)]) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument("fidelity needs at least one instance".into()));
    }
    let mut total = 0.0;
    for (g, mask) in instances {
        let before = predict(model, Target::Graph(g))?;
        let class = before.argmax();
        let after = predict(model, Target::Graph(&mask_features(g, mask)))?;
        total += before.probs()[class] - after.probs()[class];
    }
    Ok(total / instances.len() as f64)
}

/// Mean fraction of nodes left out of each mask.
pub fn sparsity(instances: &[(Graph, BTreeSet<usize>)]) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument("sparsity needs at least one instance".into()));
    }
    let total: f64 = instances
        .iter()
        .map(|(g, mask)| 1.0 - mask.len() as f64 / g.num_nodes() as f64)
        .sum();
    Ok(total / instances.len() as f64)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::generators::{gen_grid_pattern, GridPattern};
    use crate::model::PatternOracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn n(v: usize) -> UnitId {
        UnitId::Node(v)
    }

    #[test]
    fn ranking_metrics() {
        let ranked = [n(4), n(1), n(7), n(2)];
        assert_eq!(top_k_acc(&ranked, &[n(4)], 1), 1.0);
        assert_eq!(top_k_acc(&ranked, &[n(1)], 1), 0.0);
        assert_eq!(aacc(&ranked, &[n(4), n(7)], 2), 0.0);
        assert_eq!(oacc(&ranked, &[n(4), n(7)], 2), 1.0);
        assert_eq!(aacc(&ranked, &[n(4), n(7)], 3), 1.0);
        assert_eq!(precision_at(&ranked, &[n(4), n(2), n(9)], 4), 0.5);
        assert_eq!(precision_at(&ranked[..1], &[n(4)], 4), 0.25);
    }

    #[test]
    fn fidelity_hand_values() {
        let model = PatternOracle::new(4, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (g, truth) = gen_grid_pattern(GridPattern::Rectangle, &mut rng);
        let ones: BTreeSet<usize> = truth
            .iter()
            .map(|u| match u {
                UnitId::Node(v) => *v,
                _ => unreachable!(),
            })
            .collect();
        let empty = (g.clone(), BTreeSet::new());
        let flip = (g.clone(), BTreeSet::from([*ones.iter().next().unwrap()]));
        assert_eq!(fidelity(&model, std::slice::from_ref(&empty)).unwrap(), 0.0);
        assert_eq!(fidelity(&model, std::slice::from_ref(&flip)).unwrap(), 0.95 - 0.05);
        assert_eq!(fidelity(&model, &[empty, flip]).unwrap(), (0.95 - 0.05) / 2.0);
        assert!(fidelity(&model, &[]).is_err());
    }

    #[test]
    fn sparsity_hand_values() {
        let g = crate::benchmarks::generators::cycle(10);
        assert_eq!(sparsity(&[(g.clone(), BTreeSet::from([0, 1]))]).unwrap(), 0.8);
        assert_eq!(sparsity(&[(g.clone(), BTreeSet::new())]).unwrap(), 1.0);
        assert_eq!(sparsity(&[(g.clone(), (0..10).collect())]).unwrap(), 0.0);
        assert!(sparsity(&[]).is_err());
    }

    #[test]
    fn mean_and_std() {
        assert_eq!(mean_std(&[1.0, 1.0, 1.0]), (1.0, 0.0));
        let (m, s) = mean_std(&[0.0, 1.0]);
        assert_eq!(m, 0.5);
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
    }
}
