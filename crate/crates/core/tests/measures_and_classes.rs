mod common;

use common::{measure, sample};
use mdlseq::model_class::{inverse_square_tail, Generator};
use mdlseq::{Alphabet, ComplexityRule, Measure, ModelClass, ModelIndex, Predictive};
use proptest::collection::vec;
use proptest::prelude::*;
use std::sync::Arc;

proptest! {
    #[test]
    fn predictive_distributions_are_normalized(m in measure(), len in 0usize..30, seed in any::<u64>()) {
        let x = sample(&m, len, seed);
        let p = m.predictive_distribution(&x).unwrap();
        prop_assert_eq!(p.len(), m.alphabet().size());
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_marginal_follows_the_chain_rule(m in measure(), raw in vec(0usize..3, 0..15)) {
        let k = m.alphabet().size();
        let x: Vec<usize> = raw.into_iter().map(|s| s % k).collect();
        let mut total = 0.0f64;
        let mut buf = vec![0.0; k];
        for t in 0..x.len() {
            m.conditional_into(&x[..t], &mut buf);
            total += buf[x[t]].log2();
        }
        let lm = m.log_marginal(&x);
        if total == f64::NEG_INFINITY {
            prop_assert!(lm.is_impossible());
        } else {
            prop_assert!((lm.bits() - total).abs() < 1e-9);
            prop_assert!(lm.bits() <= 0.0);
        }
        prop_assert_eq!(m.log_marginal(&[]).bits(), 0.0);
    }

    #[test]
    fn marginals_are_consistent(m in measure(), len in 0usize..12, seed in any::<u64>()) {
        let x = sample(&m, len, seed);
        let px = m.log_marginal(&x).prob();
        let sum: f64 = (0..m.alphabet().size())
            .map(|a| {
                let mut xa = x.clone();
                xa.push(a);
                m.log_marginal(&xa).prob()
            })
            .sum();
        prop_assert!((sum - px).abs() <= 1e-12 * px.max(1e-300) + 1e-300, "{sum} vs {px}");
    }

    #[test]
    fn kraft_mass_is_monotone_and_bounded(codelengths in vec(0.5f64..12.0, 1..30)) {
        let mass: f64 = codelengths.iter().map(|k| (-k).exp2()).sum();
        prop_assume!(mass <= mdlseq::model_class::DEFAULT_KRAFT_BOUND);
        let models = vec![Measure::<f64>::bernoulli(0.5).unwrap(); codelengths.len()];
        let class = ModelClass::from_measures(models, ComplexityRule::Explicit { codelengths }).unwrap();
        let masses: Vec<f64> = (0..=class.len()).map(|i| class.kraft_mass(i)).collect();
        prop_assert!(masses.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(masses[class.len()] <= class.kraft_bound());
        for m in 0..=class.len() {
            let total = class.total_kraft_mass().unwrap();
            prop_assert!((class.tail_weight(m).value + class.kraft_mass(m) - total).abs() < 1e-9);
        }
    }

    #[test]
    fn two_log_tail_and_mass_add_up(m in 0usize..10_000) {
        let class = two_log_class();
        let total = class.total_kraft_mass().unwrap();
        prop_assert!((class.tail_weight(m).value + class.kraft_mass(m) - total).abs() < 1e-9);
        prop_assert!(inverse_square_tail(m) <= 1.0 / m.max(1) as f64 + 1e-15);
    }

    #[test]
    fn effective_size_is_monotone_in_eps(truth in 1usize..6, a in 0.001f64..0.99, b in 0.001f64..0.99) {
        let class = two_log_class().with_truth(truth).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        match (class.effective_size(lo), class.effective_size(hi)) {
            (Ok(m_lo), Ok(m_hi)) => prop_assert!(m_lo >= m_hi),
            (Err(_), _) => {}
            (Ok(_), Err(e)) => prop_assert!(false, "larger eps failed: {e}"),
        }
    }
}

fn two_log_class() -> ModelClass<f64> {
    let generator: Generator<f64> =
        Arc::new(|i: ModelIndex| Measure::bernoulli(1.0 / (i.get() as f64 + 1.0)));
    ModelClass::from_generator(
        Alphabet::BINARY,
        generator,
        None,
        ComplexityRule::TwoLog,
        10_000,
    )
    .unwrap()
}

/// Empirical symbol frequencies match the predictive law within 4 standard errors.
#[test]
fn sampling_follows_the_predictive_law() {
    let n = 20_000;
    let cases: Vec<(Measure<f64>, Vec<f64>)> = vec![
        (Measure::bernoulli(0.3).unwrap(), vec![0.7, 0.3]),
        (
            Measure::categorical(vec![0.2, 0.5, 0.3]).unwrap(),
            vec![0.2, 0.5, 0.3],
        ),
    ];
    for (seed, (m, law)) in cases.iter().enumerate() {
        let x = sample(m, n, seed as u64);
        for (a, &p) in law.iter().enumerate() {
            let freq = x.iter().filter(|&&s| s == a).count() as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 4.0 * se, "symbol {a}: {freq} vs {p}");
        }
    }

    // Transition frequencies of an order-1 chain.
    let chain = Measure::markov(
        Alphabet::BINARY,
        1,
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
    )
    .unwrap();
    let x = sample(&chain, n, 77);
    for (from, p_one) in [(0usize, 0.1f64), (1, 0.8)] {
        let visits: Vec<usize> = (1..n).filter(|&t| x[t - 1] == from).collect();
        let ones = visits.iter().filter(|&&t| x[t] == 1).count() as f64;
        let freq = ones / visits.len() as f64;
        let se = (p_one * (1.0 - p_one) / visits.len() as f64).sqrt();
        assert!((freq - p_one).abs() <= 4.0 * se, "from {from}: {freq}");
    }
}
