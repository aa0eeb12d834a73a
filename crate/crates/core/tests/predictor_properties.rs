mod common;

use common::{class_with_prefix, sample};
use mdlseq::predictors::{mdli_log_prob, ClassTracker, MdliState, PredictError};
use mdlseq::{
    map_select, mdl_select, AliveSet, Alphabet, ComplexityRule, Measure, ModelClass, ModelIndex,
    Predictive, WeightedAliveSet,
};
use proptest::collection::vec;
use proptest::prelude::*;

fn deterministic_class(
    k: usize,
    members: Vec<(Vec<usize>, usize)>,
    codelengths: Vec<f64>,
) -> ModelClass<f64> {
    let alphabet = Alphabet::new(k).unwrap();
    let models = members
        .into_iter()
        .map(|(prefix, tail)| Measure::deterministic(alphabet, prefix, tail).unwrap())
        .collect();
    ModelClass::from_measures(models, ComplexityRule::Explicit { codelengths }).unwrap()
}

fn deterministic_members(k: usize) -> impl Strategy<Value = Vec<(Vec<usize>, usize)>> {
    vec((vec(0..k, 0..8), 0..k), 1..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn map_equals_mdl((class, x) in class_with_prefix(12)) {
        match (mdl_select(&class, &x), map_select(&class, &x)) {
            (Ok(sel), Ok(map)) => prop_assert_eq!(sel.index, map),
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "mdl {a:?} vs map {b:?}"),
        }
    }
}

proptest! {
    #[test]
    fn bayes_dominates_every_two_part_code((class, x) in class_with_prefix(20)) {
        let tracker = ClassTracker::from_prefix(&class, &x).unwrap();
        let log_z = mdlseq::scalar::log2_sum_exp2(
            &class.codelengths().iter().map(|k| -k).collect::<Vec<_>>(),
        );
        let mix = tracker.log_mixture().bits() + log_z;
        for (i, &ll) in tracker.log_likelihoods().iter().enumerate() {
            if ll > f64::NEG_INFINITY {
                prop_assert!(mix >= ll - class.codelengths()[i] - 1e-9);
            }
        }
        if let Ok(post) = tracker.posterior() {
            prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mdl_score_is_minimal((class, x) in class_with_prefix(20)) {
        if let Ok(sel) = mdl_select(&class, &x) {
            prop_assert!(sel.scores.iter().all(|&s| sel.score_bits <= s));
            let first = sel.scores.iter().position(|&s| s == sel.score_bits).unwrap();
            prop_assert_eq!(first + 1, sel.index.get());
        }
    }

    #[test]
    fn mdl_on_sampled_data_never_beats_truth_by_more_than_its_score(
        (class, _x) in class_with_prefix(0),
        truth in 0usize..6,
        len in 0usize..40,
        seed in any::<u64>(),
    ) {
        let truth = ModelIndex::from_slot(truth % class.len());
        let x = sample(class.model(truth).unwrap(), len, seed);
        let sel = mdl_select(&class, &x).unwrap();
        prop_assert!(sel.score_bits <= sel.scores[truth.slot()]);
    }

    #[test]
    fn mdli_is_a_measure((class, _x) in class_with_prefix(0), truth in 0usize..6, seed in any::<u64>()) {
        let truth = ModelIndex::from_slot(truth % class.len());
        let x = sample(class.model(truth).unwrap(), 25, seed);
        let mut tracker = ClassTracker::new(&class).unwrap();
        let mut state = MdliState::new();
        let mut buf = vec![0.0; class.alphabet().size()];
        let mut total = 0.0f64;
        for t in 0..x.len() {
            let pred = tracker.mdli_predictive();
            pred.conditional_into(&x[..t], &mut buf);
            prop_assert!((buf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let step = state.step(&mut tracker, &x[..t], x[t]).unwrap();
            prop_assert!((step.log_prob.prob() - buf[x[t]]).abs() <= 1e-12);
            total += step.log_prob.bits();
        }
        let replay = mdli_log_prob(&class, &x).unwrap();
        prop_assert!(replay.bits() == total || (replay.is_impossible() && total == f64::NEG_INFINITY));
    }

    #[test]
    fn elimination_never_drops_the_truth(
        (k, members) in (2usize..=3).prop_flat_map(|k| (Just(k), deterministic_members(k))),
        pick in any::<usize>(),
        h in 1usize..4,
    ) {
        let n = members.len();
        let class = deterministic_class(k, members, vec![(n as f64).log2(); n]);
        let truth = ModelIndex::from_slot(pick % n);
        let truth_model = class.model(truth).unwrap().clone();
        let mut learner = AliveSet::new(&class, h).unwrap();
        let mut alive = learner.alive_count();
        for t in 0..20 {
            let step = learner.step(truth_model.point_symbol(t).unwrap()).unwrap();
            prop_assert!(learner.is_alive(truth));
            prop_assert!(step.alive <= alive);
            alive = step.alive;
        }
    }

    #[test]
    fn majority_halves_the_alive_weight_on_every_error(
        members in deterministic_members(2),
        raw_k in vec(2u32..8, 12),
        pick in any::<usize>(),
    ) {
        let n = members.len();
        let codelengths: Vec<f64> = raw_k[..n].iter().map(|&k| f64::from(k)).collect();
        let class = deterministic_class(2, members, codelengths);
        let truth = ModelIndex::from_slot(pick % n);
        let truth_model = class.model(truth).unwrap().clone();
        let mut learner = WeightedAliveSet::new(&class).unwrap();
        let w_p = learner.weights()[truth.slot()];
        for t in 0..20 {
            let s = learner.step(truth_model.point_symbol(t).unwrap()).unwrap();
            if s.step.new_errors > 0 {
                prop_assert!(s.weight_after <= 0.5 * s.weight_before + 1e-12);
            }
        }
        prop_assert!(learner.errors() as f64 <= (1.0 / w_p).log2() + 1e-9);
    }
}

#[test]
fn all_excluded_errors_agree() {
    let class = deterministic_class(2, vec![(vec![], 1)], vec![0.0]);
    assert_eq!(
        mdl_select(&class, &[0]).unwrap_err(),
        PredictError::AllExcluded { len: 1 }
    );
}
