//! Random measures and classes shared by the property tests.

#![allow(dead_code)]

use mdlseq::{ComplexityRule, FamilySpec, Measure, ModelClass, Symbol};
use proptest::collection::vec;
use proptest::prelude::*;

/// Probability vector of length `k` with every entry positive.
pub fn dist(k: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(0.05f64..1.0, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

fn leaf(k: usize) -> BoxedStrategy<FamilySpec> {
    let categorical = dist(k).prop_map(|probs| FamilySpec::Categorical { probs });
    let markov = (1usize..=2).prop_flat_map(move |order| {
        vec(dist(k), k.pow(order as u32)).prop_map(move |transitions| FamilySpec::Markov {
            alphabet: k,
            order,
            transitions,
            initial: None,
        })
    });
    let deterministic =
        (vec(0..k, 0..5), 0..k).prop_map(move |(prefix, tail)| FamilySpec::Deterministic {
            alphabet: k,
            prefix,
            tail,
        });
    if k == 2 {
        let oscillating =
            (0.2f64..0.8, 0.0f64..0.3).prop_map(|(theta0, amplitude)| FamilySpec::Oscillating {
                theta0,
                amplitude,
                clip: 0.01,
            });
        prop_oneof![categorical, markov, deterministic, oscillating].boxed()
    } else {
        prop_oneof![categorical, markov, deterministic].boxed()
    }
}

/// Any built-in family over `k` symbols, branching one level deep.
pub fn spec(k: usize) -> BoxedStrategy<FamilySpec> {
    let branching = (dist(k), vec(leaf(k), k))
        .prop_map(|(first, branches)| FamilySpec::Branching { first, branches });
    prop_oneof![4 => leaf(k), 1 => branching].boxed()
}

/// Measure over 2 or 3 symbols.
pub fn measure() -> impl Strategy<Value = Measure<f64>> {
    (2usize..=3)
        .prop_flat_map(|k| spec(k).prop_map(|s| s.build().expect("generated spec is valid")))
}

/// Pair of measures over a common alphabet.
pub fn measure_pair() -> impl Strategy<Value = (Measure<f64>, Measure<f64>)> {
    (2usize..=3).prop_flat_map(|k| {
        (spec(k), spec(k)).prop_map(|(a, b)| (a.build().unwrap(), b.build().unwrap()))
    })
}

/// Triple of measures over a common alphabet.
pub fn measure_triple() -> impl Strategy<Value = [Measure<f64>; 3]> {
    (2usize..=3).prop_flat_map(|k| {
        (spec(k), spec(k), spec(k))
            .prop_map(|(a, b, c)| [a.build().unwrap(), b.build().unwrap(), c.build().unwrap()])
    })
}

/// Random finite class over `k` symbols with integer codelengths (ties likely).
pub fn class_with_prefix(max_len: usize) -> impl Strategy<Value = (ModelClass<f64>, Vec<Symbol>)> {
    (2usize..=3).prop_flat_map(move |k| {
        (vec((spec(k), 1u32..8), 1..6), vec(0..k, 0..=max_len)).prop_map(|(members, x)| {
            let (models, codelengths): (Vec<_>, Vec<_>) = members
                .into_iter()
                .map(|(s, c)| (s.build::<f64>().unwrap(), f64::from(c)))
                .unzip();
            let class = ModelClass::from_measures(models, ComplexityRule::Explicit { codelengths })
                .unwrap();
            (class, x)
        })
    })
}

/// Samples `len` symbols from `m`.
pub fn sample(m: &Measure<f64>, len: usize, seed: u64) -> Vec<Symbol> {
    m.sample_sequence(len, &mut mdlseq::substream(seed, 0))
}
