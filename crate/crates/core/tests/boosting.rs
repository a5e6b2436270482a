use interboost::boost::{boost, BoostConfig};
use interboost::data::{encode, BinaryOutcome, DesignMatrix};
use interboost::factory::build_mb;
use interboost::learner::{BaseLearner, LearnerKind};
use interboost::synth::{generate, median, SynthSpec};
use interboost::tuning::{cv_mstop, fold_assignment, CvSpec};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nll(y: f64, f: f64) -> f64 {
    // log(1 + e^f) - y f, written out independently of the crate's loss
    let p = 1.0 / (1.0 + (-f).exp());
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn noise_problem(n: usize, p: usize, seed: u64) -> (DesignMatrix, BinaryOutcome, Vec<BaseLearner>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(n, p, |_, _| rng.random_bool(0.5) as u8 as f64);
    let design = DesignMatrix::from_columns(raw);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    let y = BinaryOutcome::from_bools(&labels);
    let learners = (0..p)
        .map(|j| BaseLearner::calibrated(&design, format!("c{j}"), vec![j], 1.0, LearnerKind::Individual).unwrap())
        .collect();
    (design, y, learners)
}

#[test]
fn row_permutation_leaves_the_fit_unchanged() {
    let spec = SynthSpec::main_effects(12, 0, 300, &[1.5, -1.0, 0.5], 4);
    let data = generate(&spec).unwrap();
    let mut perm: Vec<usize> = (0..data.table.n_rows()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(11));
    let shuffled = data.table.subset_rows(&perm);

    let config = BoostConfig::default().with_m_stop(60);
    let fit_of = |table| {
        let (design, y) = encode(&data.schema, table).unwrap();
        let learners = build_mb(&design, &data.schema).unwrap();
        boost(&design, &y, &learners, &config).unwrap()
    };
    let a = fit_of(&data.table);
    let b = fit_of(&shuffled);
    let path = |f: &interboost::boost::BoostFit| {
        f.selection_path.iter().map(|s| s.learner.clone()).collect::<Vec<_>>()
    };
    assert_eq!(path(&a), path(&b));
    assert!((a.offset - b.offset).abs() < 1e-12);
    for (ta, tb) in a.terms.iter().zip(&b.terms) {
        assert_eq!(ta.id, tb.id);
        for (ca, cb) in ta.coef.iter().zip(&tb.coef) {
            assert!((ca - cb).abs() < 1e-9, "{}: {ca} vs {cb}", ta.id);
        }
    }
}

#[test]
fn pure_noise_stops_early() {
    let m_max = 200;
    let stops: Vec<f64> = (0..20u64)
        .map(|seed| {
            let (design, y, learners) = noise_problem(200, 8, 100 + seed);
            let cv = CvSpec {
                folds: 5,
                m_max,
                seed,
                stratified: true,
            };
            cv_mstop(&design, &y, &learners, &BoostConfig::default(), &cv)
                .unwrap()
                .m_star as f64
        })
        .collect();
    let med = median(&stops);
    assert!(med < m_max as f64 / 10.0, "median m* {med} on pure noise, stops {stops:?}");
}

#[test]
fn risk_at_zero_iterations_is_the_fold_offset_risk() {
    let (design, y, learners) = noise_problem(90, 4, 5);
    let cv = CvSpec {
        folds: 5,
        m_max: 10,
        seed: 8,
        stratified: true,
    };
    let result = cv_mstop(&design, &y, &learners, &BoostConfig::default(), &cv).unwrap();
    let assignment = fold_assignment(&y, cv.folds, cv.seed, cv.stratified).unwrap();
    let labels = y.labels();
    for (k, curve) in result.risk_matrix.iter().enumerate() {
        let train: Vec<f64> = (0..labels.len()).filter(|&i| assignment[i] != k).map(|i| labels[i]).collect();
        let offset = logit(train.iter().sum::<f64>() / train.len() as f64);
        let test: Vec<f64> = (0..labels.len()).filter(|&i| assignment[i] == k).map(|i| labels[i]).collect();
        let expected = test.iter().map(|&t| nll(t, offset)).sum::<f64>() / test.len() as f64;
        assert!((curve[0] - expected).abs() < 1e-12, "fold {k}: {} vs {expected}", curve[0]);
        assert_eq!(curve.len(), cv.m_max + 1);
    }
}

#[test]
fn leave_one_out_on_twelve_rows() {
    let (design, y, learners) = noise_problem(12, 3, 21);
    let assignment = fold_assignment(&y, 12, 3, true).unwrap();
    let mut sorted = assignment.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..12).collect::<Vec<_>>());

    let cv = CvSpec {
        folds: 12,
        m_max: 15,
        seed: 3,
        stratified: true,
    };
    let result = cv_mstop(&design, &y, &learners, &BoostConfig::default(), &cv).unwrap();
    assert_eq!(result.risk_matrix.len(), 12);
    let labels = y.labels();
    let total: f64 = labels.iter().sum();
    for (i, &fold) in assignment.iter().enumerate() {
        let offset = logit((total - labels[i]) / 11.0);
        let expected = nll(labels[i], offset);
        assert!((result.risk_matrix[fold][0] - expected).abs() < 1e-12);
    }
    assert!(result.m_star <= cv.m_max);
}
