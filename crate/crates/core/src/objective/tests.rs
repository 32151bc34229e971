use super::*;
use crate::audio::{extract_features, AudioClip};
use crate::emotion::Emotion;
use crate::strokes::{init_plan, CanvasSpec, InitStrategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn plan(n: usize, w: usize, h: usize, seed: u64) -> PaintingPlan {
    let mut canvas = CanvasSpec::new(w, h);
    canvas.background = [0.8, 0.75, 0.9];
    canvas.softness = 0.02;
    let mut p = init_plan(InitStrategy::UniformRandom, n, &canvas, None, seed).unwrap();
    for s in &mut p.strokes {
        s.thickness = s.thickness.max(0.03);
        s.opacity = 0.3 + 0.5 * s.opacity;
        s.color = s.color.map(|c| 0.1 + 0.8 * c);
    }
    p
}

fn small_aug() -> AugmentationSpec {
    AugmentationSpec {
        count: 3,
        output_size_px: 16,
        ..AugmentationSpec::default()
    }
}

fn chirp() -> FeatureStack {
    let clip = AudioClip::from_fn(6000, |t| 0.3 * (2.0 * PI * (300.0 + 800.0 * t) * t).sin()).unwrap();
    extract_features(&clip).unwrap()
}

fn models() -> Models {
    Models::reference(32, 11).unwrap()
}

fn rel_ok(a: f64, f: f64, tol: f64) -> bool {
    let e = (a - f).abs();
    e <= 1e-6 || e / a.abs().max(f.abs()) < tol
}

#[test]
fn cosine_distance_examples() {
    let u = [0.6, 0.8];
    assert!(cosine_distance(&u, &u).unwrap().abs() < 1e-15);
    assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((cosine_distance(&u, &[-0.6, -0.8]).unwrap() - 2.0).abs() < 1e-15);
    assert!(matches!(cosine_distance(&[0.0, 0.0], &u), Err(Error::Numeric(_))));
    assert!(matches!(cosine_distance(&u, &[1.0]), Err(Error::Param(_))));
}

#[test]
fn cosine_gradient_matches_differences() {
    let u = [0.3, -1.2, 0.5, 2.0];
    let v = [1.0, 0.4, -0.7, 0.1];
    let (_, g) = cosine_distance_grad(&u, &v).unwrap();
    for i in 0..4 {
        let mut p = v;
        p[i] += 1e-6;
        let mut m = v;
        m[i] -= 1e-6;
        let fd = (cosine_distance(&u, &p).unwrap() - cosine_distance(&u, &m).unwrap()) / 2e-6;
        assert!((fd - g[i]).abs() < 1e-8);
    }
}

#[test]
fn pixel_l2_examples() {
    let p = plan(3, 16, 12, 1);
    let target = render_plan(&p);
    assert_eq!(loss_pixel_l2(&p, &target).unwrap().0, 0.0);

    let mut white = p.clone();
    white.strokes.clear();
    white.background = [1.0; 3];
    let black = CanvasImage::filled(16, 12, [0.0; 3]).unwrap();
    assert_eq!(loss_pixel_l2(&white, &black).unwrap().0, 1.0);

    let wrong = CanvasImage::filled(8, 8, [0.0; 3]).unwrap();
    assert!(matches!(loss_pixel_l2(&p, &wrong), Err(Error::Param(_))));
}

#[test]
fn pixel_l2_gradient_matches_differences() {
    let p = plan(4, 20, 16, 2);
    let target = render_plan(&plan(4, 20, 16, 3));
    let (_, g) = loss_pixel_l2(&p, &target).unwrap();
    let g = g.to_flat();
    let flat = p.to_flat();
    for i in 0..flat.len() {
        let f = |d: f64| {
            let mut q = p.clone();
            let mut x = flat.clone();
            x[i] += d;
            q.set_flat(&x);
            loss_pixel_l2(&q, &target).unwrap().0
        };
        let fd = (f(1e-4) - f(-1e-4)) / 2e-4;
        assert!(rel_ok(g[i], fd, 1e-3), "param {i}: {} vs {fd}", g[i]);
    }
}

#[test]
fn natural_sound_gradient_and_range() {
    let p = plan(3, 20, 20, 4);
    let feats = chirp();
    let m = models();
    let aug = small_aug();
    let (value, g) = loss_natural_sound(&p, &feats, &m, &aug).unwrap();
    assert!((0.0..=2.0).contains(&value));
    let g = g.to_flat();
    let flat = p.to_flat();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let i = rng.random_range(0..flat.len());
        let f = |d: f64| {
            let mut q = p.clone();
            let mut x = flat.clone();
            x[i] += d;
            q.set_flat(&x);
            loss_natural_sound(&q, &feats, &m, &aug).unwrap().0
        };
        let fd = (f(1e-4) - f(-1e-4)) / 2e-4;
        assert!(rel_ok(g[i], fd, 1e-2), "param {i}: {} vs {fd}", g[i]);
    }
}

#[test]
fn speech_emotion_term_vanishes_on_match() {
    let p = plan(3, 16, 16, 6);
    let m = models();
    let e_p = m
        .head
        .forward(&m.encoders.image, &render_plan(&p))
        .unwrap()
        .distribution;
    let spec = ObjectiveSpec {
        terms: vec![Term::speech_emotion(1.0, e_p)],
        augmentation: small_aug(),
        seed: 0,
    };
    let ev = Objective::new(spec, m.clone()).unwrap().evaluate(&p, 0).unwrap();
    assert!(ev.total.abs() < 1e-12);

    let (total, _) = loss_speech(
        &p,
        "a frog on a lily pad",
        &EmotionDistribution::one_hot(Emotion::Fear),
        &m,
        &small_aug(),
    )
    .unwrap();
    assert!((0.0..=4.0).contains(&total));
}

#[test]
fn weighted_scaling_and_zero_weights() {
    let p = plan(3, 16, 16, 7);
    let target = render_plan(&plan(3, 16, 16, 8));
    let (single, g1) = loss_pixel_l2(&p, &target).unwrap();
    let ev = composite_loss(&p, ObjectiveSpec::new(vec![Term::pixel_l2(2.0, target.clone())])).unwrap();
    assert_eq!(ev.total, 2.0 * single);
    for (a, b) in ev.grad.to_flat().iter().zip(g1.to_flat()) {
        assert!((a - 2.0 * b).abs() <= 1e-15 * b.abs().max(1e-300) * 4.0);
    }

    let with_zero = composite_loss(
        &p,
        ObjectiveSpec::new(vec![
            Term::pixel_l2(2.0, target.clone()),
            Term::speech_text(0.0, "ignored"),
            Term::direct_emotion(0.0, EmotionDistribution::uniform()),
        ]),
    )
    .unwrap();
    assert_eq!(with_zero.total.to_bits(), ev.total.to_bits());
    assert_eq!(with_zero.grad, ev.grad);
    assert_eq!(with_zero.terms, vec![ev.total, 0.0, 0.0]);
}

#[test]
fn all_zero_weights_rejected() {
    let target = CanvasImage::filled(4, 4, [0.0; 3]).unwrap();
    let spec = ObjectiveSpec::new(vec![Term::pixel_l2(0.0, target)]);
    assert!(matches!(spec.validate(), Err(Error::Param(_))));
    let neg = ObjectiveSpec::new(vec![Term::speech_text(-1.0, "x")]);
    assert!(neg.validate().is_err());
    let mismatched = ObjectiveSpec::new(vec![Term {
        kind: TermKind::PixelL2,
        weight: 1.0,
        payload: TermPayload::Text("x".into()),
    }]);
    assert!(mismatched.validate().is_err());
}

#[test]
fn composite_is_sum_of_terms() {
    let p = plan(3, 16, 16, 9);
    let m = models();
    let target = render_plan(&plan(3, 16, 16, 10));
    let feats = chirp();
    let terms = vec![
        Term::natural_sound(0.7, feats),
        Term::pixel_l2(1.3, target),
        Term::direct_emotion(0.5, EmotionDistribution::one_hot(Emotion::Awe)),
    ];
    let eval = |terms: Vec<Term>| {
        let spec = ObjectiveSpec { terms, augmentation: small_aug(), seed: 0 };
        Objective::new(spec, m.clone()).unwrap().evaluate(&p, 3).unwrap()
    };
    let all = eval(terms.clone());
    let mut total = 0.0;
    let mut grad = vec![0.0; p.param_count()];
    for t in terms {
        let ev = eval(vec![t]);
        total += ev.total;
        for (g, x) in grad.iter_mut().zip(ev.grad.to_flat()) {
            *g += x;
        }
    }
    assert!((all.total - total).abs() < 1e-12);
    for (a, b) in all.grad.to_flat().iter().zip(&grad) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn optimizer_keeps_ranges_and_best_iterate() {
    let p = plan(4, 16, 16, 11);
    let target = CanvasImage::filled(16, 16, [0.2, 0.6, 0.3]).unwrap();
    let objective = Objective::new(ObjectiveSpec::new(vec![Term::pixel_l2(1.0, target)]), models()).unwrap();
    let cfg = OptimizerConfig {
        iterations: 40,
        lr_geometry: 0.05,
        lr_color: 0.2,
        ..OptimizerConfig::default()
    };
    let r = optimize(&p, &objective, &cfg).unwrap();
    assert_eq!(r.loss_history.len(), 41);
    r.plan.validate().unwrap();
    let min = r.loss_history.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_loss(), min);
    assert!(r.best_loss() < r.loss_history[0]);
    let (check, _) = loss_pixel_l2(&r.plan, &CanvasImage::filled(16, 16, [0.2, 0.6, 0.3]).unwrap()).unwrap();
    assert_eq!(check, r.best_loss());

    let again = optimize(&p, &objective, &cfg).unwrap();
    let bits = |h: &[f64]| h.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&r.loss_history), bits(&again.loss_history));

    let csv = r.loss_csv();
    assert!(csv.starts_with("iteration,total,pixel_l2\n0,"));
    assert_eq!(csv.lines().count(), 42);
}

#[test]
fn optimizer_config_validation() {
    assert!(OptimizerConfig { iterations: 0, ..Default::default() }.validate().is_err());
    assert!(OptimizerConfig { lr_color: 0.0, ..Default::default() }.validate().is_err());
    assert!(OptimizerConfig::default().validate().is_ok());
    let cfg: OptimizerConfig = serde_json::from_str(r#"{"iterations": 5}"#).unwrap();
    assert_eq!(cfg.lr_geometry, 1e-2);
    assert!(serde_json::from_str::<OptimizerConfig>(r#"{"iters": 5}"#).is_err());
}
