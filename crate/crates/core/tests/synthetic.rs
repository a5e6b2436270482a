use std::collections::BTreeSet;

use interboost::data::{encode, expand_interactions, DatasetSchema, OutcomeSpec, VariableSpec};
use interboost::interpret::importance;
use interboost::pipeline::{fit_model, ModelKind, RunConfig};
use interboost::synth::{generate, null_interaction_study, NullStudySpec, SynthSpec};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn mb_ranks_the_strongest_main_effect_first() {
    let data = generate(&SynthSpec::main_effects(15, 5, 800, &[2.0, 0.6, -0.4], 17)).unwrap();
    let config = RunConfig {
        m_max: 300,
        cv_folds: 5,
        ..RunConfig::new(ModelKind::Mb)
    };
    let out = fit_model(&data.schema, &data.table, &config).unwrap();
    let table = importance(&out.artifact.fit);
    assert_eq!(table.top().unwrap().learner, "x1");
    assert!(out.artifact.evaluation.test_auc.unwrap() > 0.65);
}

#[test]
fn interaction_terms_cover_every_pair_with_a_moderator() {
    let p = 73;
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let moderators: BTreeSet<usize> = sample(&mut rng, p, 22).into_iter().collect();
    let variables = (0..p)
        .map(|j| VariableSpec::binary(&format!("v{j}"), &format!("g{}", j / 4), moderators.contains(&j)))
        .collect();
    let outcome = OutcomeSpec {
        name: "y".into(),
        positive: "1".into(),
        negative: "0".into(),
        positive_meaning: None,
    };
    let schema = DatasetSchema::new(outcome, variables).unwrap();

    // brute force over unordered pairs
    let mut expected = BTreeSet::new();
    for i in 0..p {
        for j in i + 1..p {
            if moderators.contains(&i) || moderators.contains(&j) {
                expected.insert((i, j));
            }
        }
    }
    assert_eq!(expected.len(), 22 * 21 / 2 + 22 * 51);

    let mut table = interboost::data::RawTable::new((0..p).map(|j| format!("v{j}")).chain(["y".to_string()]).collect());
    for r in 0..4 {
        table.rows.push((0..=p).map(|j| ((r + j) % 2).to_string()).collect());
    }
    let (design, _) = encode(&schema, &table).unwrap();
    let terms = expand_interactions(&schema, &design).unwrap();
    let index = |name: &str| name[1..].parse::<usize>().unwrap();
    let mut seen = BTreeSet::new();
    for term in &terms {
        let (m, q) = (index(&term.moderator), index(&term.partner));
        assert!(moderators.contains(&m), "{} is not a moderator", term.moderator);
        assert!(seen.insert((m.min(q), m.max(q))), "pair {} repeated", term.id());
    }
    assert_eq!(seen, expected);
}

#[test]
fn two_step_boosting_selects_no_interactions_on_small_null_data() {
    let spec = NullStudySpec::new(4, 2000, (1..=9).collect());
    let report = null_interaction_study(&spec).unwrap();
    let clean = report.rows.iter().filter(|r| r.two_boost == 0).count();
    assert!(clean * 2 > report.rows.len(), "{:?}", report.rows);
}

#[test]
fn sample_prevalence_approaches_the_marginal() {
    let mut spec = SynthSpec::main_effects(10, 3, 100_000, &[1.0, -0.7, 0.5], 29);
    spec.beta_interaction.push(("x1".into(), "x4".into(), 0.8));
    spec.variables[1].p_one = 0.3;
    let data = generate(&spec).unwrap();
    let marginal = data.truth.marginal_prevalence().unwrap();
    let probs = &data.truth.probabilities;
    let n = probs.len() as f64;
    let mean = data.truth.prevalence();
    let sd = (probs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - marginal).abs() < 4.0 * sd / n.sqrt(), "{mean} vs {marginal}");

    // outcome draws: Bernoulli around the row probabilities
    let y = data.table.column("y").unwrap();
    let observed = y.iter().filter(|v| **v == "1").count() as f64 / n;
    let se = (marginal * (1.0 - marginal) / n).sqrt();
    assert!((observed - marginal).abs() < 4.0 * se, "{observed} vs {marginal}");
}

#[test]
fn latent_groups_make_items_of_a_group_correlated() {
    let data = generate(&SynthSpec::latent_groups(3, 4, &[1.0], 0.7, 4000, 5)).unwrap();
    let col = |name: &str| -> Vec<f64> {
        data.table.column(name).unwrap().iter().map(|v| v.parse().unwrap()).collect()
    };
    let corr = |a: &[f64], b: &[f64]| {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    };
    // same group: x1, x2; different groups: x1, x5
    let within = corr(&col("x1"), &col("x2"));
    let across = corr(&col("x1"), &col("x5"));
    // two items copy the same bit with probability 0.49, giving correlation 0.49
    assert!((within - 0.49).abs() < 0.05, "{within}");
    assert!(across.abs() < 0.05, "{across}");
}
