//! Behavioural checks on the SVM and cross-validation: invariances, learnable
//! and unlearnable labels, and KKT optimality of every fit.

mod common;

use abr_core::evaluation::cross_validate;
use abr_core::svm::{train_smo, ClassWeighting, SvmParams};
use abr_core::Label;
use common::{blobs, normal, rng, targets, worst_kkt};
use rand::seq::SliceRandom;
use rand::RngExt;

fn assert_kkt(fit: &abr_core::svm::SvmFit, y: &[f64]) {
    assert!(fit.converged, "solver did not converge");
    let worst = worst_kkt(fit, y);
    assert!(worst <= 10.0 * fit.tolerance, "KKT violation {worst:.3e}");
}

#[test]
fn training_order_does_not_change_the_decision_function() {
    let (x, labels) = blobs(60, 4, 1.5, 9);
    let y = targets(&labels);
    for params in [SvmParams::default(), SvmParams::linear(0.5), SvmParams::rbf(3.0, 0.4)] {
        let params = SvmParams { tolerance: 1e-10, ..params };
        let base = train_smo(&x, &y, &params).unwrap();
        assert_kkt(&base, &y);

        let mut order: Vec<usize> = (0..x.len()).collect();
        order.shuffle(&mut rng(4));
        let xp: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let yp: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        let permuted = train_smo(&xp, &yp, &params).unwrap();
        assert_kkt(&permuted, &yp);

        assert!((base.objective - permuted.objective).abs() <= 1e-8);
        let mut probe = rng(5);
        for _ in 0..50 {
            let q: Vec<f64> = (0..4).map(|_| normal(&mut probe) * 2.0).collect();
            let (a, b) = (base.model.decision_function(&q).unwrap(), permuted.model.decision_function(&q).unwrap());
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn standardized_training_ignores_feature_scale() {
    let (x, labels) = blobs(50, 3, 2.0, 12);
    let y = targets(&labels);
    let scaled: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0] * 1000.0 + 5.0, r[1] * 1e-3, r[2] - 40.0]).collect();
    let params = SvmParams { tolerance: 1e-10, ..SvmParams::default() };
    let a = train_smo(&x, &y, &params).unwrap();
    let b = train_smo(&scaled, &y, &params).unwrap();
    assert_kkt(&a, &y);
    assert_kkt(&b, &y);
    for (i, (sa, sb)) in a.training_scores.iter().zip(&b.training_scores).enumerate() {
        assert!((sa - sb).abs() <= 1e-6, "row {i}: {sa} vs {sb}");
    }
}

#[test]
fn sign_of_first_feature_is_learned_by_a_linear_kernel() {
    let mut r = rng(21);
    let x: Vec<Vec<f64>> = (0..200)
        .map(|_| {
            let mut first = normal(&mut r);
            // keep a margin around the boundary so the target is separable
            first += 0.2 * first.signum();
            vec![first, normal(&mut r), normal(&mut r)]
        })
        .collect();
    let labels: Vec<Label> = x.iter().map(|r| if r[0] > 0.0 { Label::Abnormal } else { Label::Normal }).collect();
    let run = cross_validate(&x, &labels, &SvmParams::linear(10.0), 5, 3).unwrap();
    assert!(run.metrics.accuracy >= 0.99, "accuracy {}", run.metrics.accuracy);
    assert!(run.folds.iter().all(|f| f.converged));
}

#[test]
fn permuted_labels_give_chance_accuracy() {
    let (x, mut labels) = blobs(120, 5, 3.0, 17);
    let mut r = rng(99);
    let mut accuracies = Vec::new();
    for seed in 0..20 {
        labels.shuffle(&mut r);
        let run = cross_validate(&x, &labels, &SvmParams::default(), 5, seed).unwrap();
        accuracies.push(run.metrics.accuracy);
    }
    let mean = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    assert!((0.35..=0.65).contains(&mean), "mean accuracy {mean} over {accuracies:?}");
}

#[test]
fn held_out_scores_cover_every_sample_once() {
    let (x, labels) = blobs(47, 2, 3.0, 2);
    let run = cross_validate(&x, &labels, &SvmParams::default(), 5, 8).unwrap();
    assert_eq!(run.scores.len(), 47);
    assert_eq!(run.labels, labels);
    let tested: u64 = run.folds.iter().map(|f| f.confusion.total()).sum();
    assert_eq!(tested, 47);
    let again = cross_validate(&x, &labels, &SvmParams::default(), 5, 8).unwrap();
    assert_eq!(run, again);
}

#[test]
fn balanced_weighting_scales_the_box_by_class_frequency() {
    let (x, labels) = blobs(30, 2, 1.0, 4);
    let x: Vec<Vec<f64>> = x.into_iter().chain((0..20).map(|i| vec![-2.0 - i as f64 * 0.1, -2.0])).collect();
    let labels: Vec<Label> = labels.into_iter().chain(std::iter::repeat_n(Label::Normal, 20)).collect();
    let y = targets(&labels);
    let n_pos = y.iter().filter(|&&v| v > 0.0).count() as f64;
    let n = y.len() as f64;
    let params = SvmParams { class_weighting: ClassWeighting::Balanced, ..SvmParams::linear(2.0) };
    let fit = train_smo(&x, &y, &params).unwrap();
    assert_kkt(&fit, &y);
    for (&yi, &c) in y.iter().zip(&fit.upper_bounds) {
        let class_n = if yi > 0.0 { n_pos } else { n - n_pos };
        assert!((c - 2.0 * n / (2.0 * class_n)).abs() < 1e-12);
    }
}

#[test]
fn constant_feature_does_not_break_training() {
    let mut r = rng(6);
    let x: Vec<Vec<f64>> = (0..30).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 } + r.random::<f64>() * 0.1, 7.0]).collect();
    let y: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let fit = train_smo(&x, &y, &SvmParams::default()).unwrap();
    assert_kkt(&fit, &y);
    assert!(fit.model.decision_function(&[1.0, 7.0]).unwrap() > 0.0);
    assert!(fit.model.decision_function(&[-1.0, 7.0]).unwrap() < 0.0);
}
