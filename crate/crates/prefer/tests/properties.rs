//! Property-based invariants for the numeric core and the parsers.

use std::collections::BTreeMap;

use proptest::prelude::*;

use prefer::bagging::combine;
use prefer::boosting::{learner_weight, reweight_instances};
use prefer::evaluation::{f1_score, Averaging};
use prefer::templates::{parse_reflections, END_MARKER, START_MARKER};
use prefer::types::{ConfidenceVector, Example, LabelSpace, Prediction, WeightedDataset};

fn confidence_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, len)
}

fn dataset_with_golds(n: usize, k: usize) -> (WeightedDataset, Vec<usize>, LabelSpace) {
    let names: Vec<String> = (0..k).map(|i| format!("L{i}")).collect();
    let labels = LabelSpace::new(names).unwrap();
    let golds: Vec<usize> = (0..n).map(|i| i % k).collect();
    let examples: Vec<Example> = golds
        .iter()
        .enumerate()
        .map(|(i, &g)| Example {
            id: format!("ex{i}"),
            fields: BTreeMap::from([("text1".into(), format!("input {i}"))]),
            gold: Some(labels.label(g).to_string()),
        })
        .collect();
    (WeightedDataset::uniform(examples).unwrap(), golds, labels)
}

proptest! {
    #[test]
    fn combined_probabilities_form_a_distribution(
        k in 2..=5usize,
        seed_f in confidence_vec(5),
        seed_b in confidence_vec(5),
        with_backward in any::<bool>(),
    ) {
        let conf = ConfidenceVector {
            forward: seed_f[..k].to_vec(),
            backward: with_backward.then(|| seed_b[..k].to_vec()),
        };
        let result = combine(&conf);
        let sum: f64 = result.probs.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(result.probs.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!(result.label_index < k);
    }

    #[test]
    fn combined_argmax_is_shift_invariant(
        k in 2..=5usize,
        seed_f in confidence_vec(5),
        seed_b in confidence_vec(5),
        shift in -10.0..10.0f64,
    ) {
        let base = ConfidenceVector {
            forward: seed_f[..k].to_vec(),
            backward: Some(seed_b[..k].to_vec()),
        };
        let shifted = ConfidenceVector {
            forward: base.forward.iter().map(|s| s + shift).collect(),
            backward: base.backward.clone(),
        };
        prop_assert_eq!(combine(&base).label_index, combine(&shifted).label_index);
    }

    #[test]
    fn raising_a_forward_score_raises_its_probability(
        k in 2..=5usize,
        seed_f in confidence_vec(5),
        seed_b in confidence_vec(5),
        target in 0..5usize,
        bump in 0.01..5.0f64,
    ) {
        let target = target % k;
        let base = ConfidenceVector {
            forward: seed_f[..k].to_vec(),
            backward: Some(seed_b[..k].to_vec()),
        };
        let mut raised = base.clone();
        raised.forward[target] += bump;
        prop_assert!(combine(&raised).probs[target] > combine(&base).probs[target]);
    }

    #[test]
    fn learner_weight_matches_its_closed_form(
        error in 0.0..=1.0f64,
        k in 2..=6usize,
    ) {
        let clamped = error.clamp(1e-6, 1.0 - 1e-6);
        let expected = ((1.0 - clamped) / clamped).ln() + ((k - 1) as f64).ln();
        prop_assert!((learner_weight(error, k) - expected).abs() <= 1e-12);
    }

    #[test]
    fn reweighting_preserves_the_simplex_and_raises_misses(
        n in 2..=10usize,
        k in 2..=3usize,
        wrong_mask in prop::collection::vec(any::<bool>(), 10),
        lambda in 0.01..4.0f64,
    ) {
        let (dataset, golds, labels) = dataset_with_golds(n, k);
        let predictions: Vec<Prediction> = golds
            .iter()
            .zip(&wrong_mask)
            .map(|(&g, &wrong)| if wrong { Some((g + 1) % k) } else { Some(g) })
            .collect();
        let out = reweight_instances(&dataset, &predictions, &labels, lambda).unwrap();
        let sum: f64 = out.weights.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        let any_right = wrong_mask[..n].iter().any(|w| !w);
        for (i, (&wrong, w)) in wrong_mask[..n].iter().zip(&out.weights).enumerate() {
            prop_assert!(*w > 0.0, "weight {i} vanished");
            if wrong && any_right {
                prop_assert!(*w > dataset.weights[i], "missed example {i} must gain weight");
            }
        }
    }

    #[test]
    fn reflections_survive_wrapping(
        reasons in prop::collection::vec("[a-z][a-z ]{0,30}[a-z]", 1..6),
    ) {
        let wrapped: String = reasons
            .iter()
            .map(|r| format!("noise {START_MARKER}{r}{END_MARKER} trailing\n"))
            .collect();
        let parsed = parse_reflections(&wrapped, "p0", 3).unwrap();
        prop_assert_eq!(parsed.reasons, reasons);
    }

    #[test]
    fn f1_is_invariant_under_example_order(
        n in 2..=12usize,
        raw in prop::collection::vec((0..3usize, 0..3usize), 12),
        rotation in 0..12usize,
    ) {
        let pairs = &raw[..n];
        let preds: Vec<Prediction> = pairs.iter().map(|(p, _)| Some(*p)).collect();
        let golds: Vec<usize> = pairs.iter().map(|(_, g)| *g).collect();
        let baseline = f1_score(&preds, &golds, 3, Averaging::Macro).unwrap();

        let rot = rotation % n;
        let rotated_preds: Vec<Prediction> =
            preds.iter().cycle().skip(rot).take(n).cloned().collect();
        let rotated_golds: Vec<usize> =
            golds.iter().cycle().skip(rot).take(n).cloned().collect();
        let rotated = f1_score(&rotated_preds, &rotated_golds, 3, Averaging::Macro).unwrap();
        prop_assert!((baseline - rotated).abs() <= 1e-12);
    }
}
