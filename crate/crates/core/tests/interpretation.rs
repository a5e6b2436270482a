use interboost::boost::{boost, BoostConfig};
use interboost::data::{encode, BinaryOutcome};
use interboost::factory::build_mb;
use interboost::interpret::{
    default_grid, interaction_probe, odds_ratios, partial_effects, ProbeOptions, POOLED,
};
use interboost::synth::{generate, SynthSpec};
use interboost::tuning::{auc_by_pairs, roc_auc};
use proptest::prelude::*;

fn sigmoid(f: f64) -> f64 {
    1.0 / (1.0 + (-f).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn scores_and_labels() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            // a coarse grid so that ties occur
            prop::collection::vec((-20i32..20).prop_map(|k| k as f64 / 4.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #[test]
    fn auc_is_invariant_under_monotone_transforms((scores, labels) in scores_and_labels()) {
        prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
        let y = BinaryOutcome::from_bools(&labels);
        let base = roc_auc(&scores, &y).unwrap().auc;
        let squashed: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
        let cubed: Vec<f64> = scores.iter().map(|&s| s * s * s + 3.0).collect();
        prop_assert_eq!(roc_auc(&squashed, &y).unwrap().auc, base);
        prop_assert_eq!(roc_auc(&cubed, &y).unwrap().auc, base);
        prop_assert_eq!(auc_by_pairs(&scores, &y).unwrap(), base);
    }

    #[test]
    fn flipping_labels_or_negating_scores_reflects_auc((scores, labels) in scores_and_labels()) {
        prop_assume!(labels.iter().any(|&b| b) && labels.iter().any(|&b| !b));
        let y = BinaryOutcome::from_bools(&labels);
        let flipped: Vec<bool> = labels.iter().map(|&b| !b).collect();
        let negated: Vec<f64> = scores.iter().map(|&s| -s).collect();
        let base = roc_auc(&scores, &y).unwrap().auc;
        let by_flip = roc_auc(&scores, &BinaryOutcome::from_bools(&flipped)).unwrap().auc;
        let by_negation = roc_auc(&negated, &y).unwrap().auc;
        prop_assert!((base + by_flip - 1.0).abs() < 1e-12);
        prop_assert!((base + by_negation - 1.0).abs() < 1e-12);
    }
}

fn fitted_main_effects() -> (interboost::boost::BoostFit, interboost::data::DesignMatrix) {
    let spec = SynthSpec::main_effects(8, 0, 500, &[1.2, -0.8, 0.4], 6);
    let data = generate(&spec).unwrap();
    let (design, y) = encode(&data.schema, &data.table).unwrap();
    let learners = build_mb(&design, &data.schema).unwrap();
    let fit = boost(&design, &y, &learners, &BoostConfig::default().with_m_stop(150)).unwrap();
    (fit, design)
}

#[test]
fn odds_ratios_match_partial_effect_contrasts() {
    let (fit, design) = fitted_main_effects();
    let ratios = odds_ratios(&fit);
    assert!(!ratios.is_empty());
    for ratio in &ratios {
        let grid = default_grid(&fit, &ratio.learner).unwrap();
        let effects = partial_effects(&fit, &design, &ratio.learner, &grid).unwrap();
        let reference = effects.rows[0].probability;
        let switched = effects
            .rows
            .iter()
            .find(|r| r.point.label == ratio.column)
            .unwrap()
            .probability;
        let implied = (logit(switched) - logit(reference)).exp();
        assert!(
            (implied - ratio.odds_ratio).abs() < 1e-10 * ratio.odds_ratio.max(1.0),
            "{}: {implied} vs {}",
            ratio.column,
            ratio.odds_ratio
        );
    }
}

#[test]
fn partial_effects_match_direct_evaluation() {
    let (fit, design) = fitted_main_effects();
    let raw = design.raw();
    let n = design.n();
    for term in fit.terms.iter().filter(|t| t.is_selected()) {
        // every term's contribution per row, straight from the stored coefficients
        let contribution = |t: &interboost::boost::FittedTerm, i: usize| -> f64 {
            t.columns
                .iter()
                .zip(&t.coef)
                .zip(&t.centers)
                .map(|((&c, b), center)| b * (raw[(i, c)] - center))
                .sum()
        };
        let others_mean = (0..n)
            .map(|i| {
                fit.terms
                    .iter()
                    .filter(|t| t.id != term.id)
                    .map(|t| contribution(t, i))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n as f64;
        let grid = default_grid(&fit, &term.id).unwrap();
        let effects = partial_effects(&fit, &design, &term.id, &grid).unwrap();
        assert!((effects.others_mean - others_mean).abs() < 1e-10);
        for row in &effects.rows {
            let own: f64 = term
                .coef
                .iter()
                .zip(&term.centers)
                .zip(&row.point.values)
                .map(|((b, c), x)| b * (x - c))
                .sum();
            let expected = sigmoid(fit.offset + others_mean + own);
            assert!((row.probability - expected).abs() < 1e-10, "{}", term.id);
        }
    }
}

#[test]
fn probe_probabilities_match_closed_form_maximum_likelihood() {
    let data = generate(&SynthSpec::pure_interaction(800, 2.0, 13)).unwrap();
    let y: Vec<bool> = data.table.column("y").unwrap().iter().map(|v| *v == "1").collect();
    let x1 = data.table.column("x1").unwrap();
    let x5 = data.table.column("x5").unwrap();
    let mut counts = std::collections::BTreeMap::<(&str, &str), (usize, usize)>::new();
    for i in 0..y.len() {
        let c = counts.entry((x1[i], x5[i])).or_default();
        c.0 += 1;
        c.1 += y[i] as usize;
    }

    // intercept, both main effects and the product saturate the 2 × 2 table
    let saturated = interaction_probe(&data.schema, &data.table, "x1", "x5", None, &ProbeOptions::default()).unwrap();
    let pooled = &saturated.strata[0];
    assert_eq!(pooled.stratum, POOLED);
    assert!(pooled.converged);
    for cell in &pooled.cells {
        let (n, pos) = counts[&(cell.moderator_category.as_str(), cell.partner_category.as_str())];
        assert_eq!((cell.n, cell.positives), (n, pos));
        assert!((cell.probability.unwrap() - pos as f64 / n as f64).abs() < 1e-4);
    }

    // intercept and product only: the three cells without the product share one rate
    let options = ProbeOptions {
        main_effects: false,
        ..ProbeOptions::default()
    };
    let reduced = interaction_probe(&data.schema, &data.table, "x1", "x5", None, &options).unwrap();
    let (mut n0, mut pos0) = (0, 0);
    for (&(a, b), &(n, pos)) in &counts {
        if !(a == "1" && b == "1") {
            n0 += n;
            pos0 += pos;
        }
    }
    let (n1, pos1) = counts[&("1", "1")];
    for cell in &reduced.strata[0].cells {
        let both = cell.moderator_category == "1" && cell.partner_category == "1";
        let expected = if both { pos1 as f64 / n1 as f64 } else { pos0 as f64 / n0 as f64 };
        assert!((cell.probability.unwrap() - expected).abs() < 1e-4);
    }
}

#[test]
fn probe_strata_partition_the_rows() {
    let data = generate(&SynthSpec::pure_interaction(600, 2.0, 2)).unwrap();
    let result =
        interaction_probe(&data.schema, &data.table, "x1", "x5", Some("x2"), &ProbeOptions::default()).unwrap();
    assert_eq!(result.strata.len(), 3);
    let total = |s: &interboost::interpret::StratumProbe| s.cells.iter().map(|c| c.n).sum::<usize>();
    let pooled = result.strata.iter().find(|s| s.stratum == POOLED).unwrap();
    let parts: usize = result.strata.iter().filter(|s| s.stratum != POOLED).map(total).sum();
    assert_eq!(total(pooled), 600);
    assert_eq!(parts, 600);
}
