mod common;

use common::{scenes, tiny_config};
use proptest::prelude::*;
use uda_autograd::Tensor;
use uda_i2i::config::{PhaseConfig, PseudoLabelSource};
use uda_i2i::data::{Image, NUM_CLASSES};
use uda_i2i::error::Error;
use uda_i2i::nets::{IdentityTranslator, Segmenter, CLASSIFIER};
use uda_i2i::toyworld::{make_split, sample_scene, Domain, DomainSpec, SplitRequest};
use uda_i2i::trainer::{
    generate_pseudo_labels, initial_generator, run_i2i, run_segmentation, run_warmup, translate_dataset, Split,
};

fn source(n: u64) -> Split {
    scenes(&DomainSpec::source(), Domain::Source, 0..n, 32)
}

fn target(n: u64) -> Split {
    scenes(&DomainSpec::target(), Domain::Target, 1000..1000 + n, 32)
}

fn supervised_only(mut p: PhaseConfig, steps: usize) -> PhaseConfig {
    p.steps = steps;
    p.consistency = false;
    p.source_fraction = 1.0;
    p.translated_fraction = 0.0;
    p
}

#[test]
fn warmup_smoke_run() {
    let rc = tiny_config(1);
    let out = run_warmup(&rc, &rc.warmup, &source(8), Some(&target(8)), 0, None).unwrap();
    assert_eq!(out.reports.len(), 1);
    assert_ne!(out.teacher.params, out.student.params);

    let mut rc = tiny_config(30);
    rc.warmup.con_warmup_steps = 10;
    let dir = tempfile::tempdir().unwrap();
    let out = run_warmup(&rc, &rc.warmup, &source(8), Some(&target(8)), 0, Some(dir.path())).unwrap();
    for r in &out.reports {
        assert!(r.fields().iter().all(|(_, v)| v.is_finite()), "step {}", r.step);
        assert_eq!(r.lambda_con == 0.0, r.step < 10, "step {}", r.step);
    }
    assert!(out.reports[10..].iter().all(|r| r.con > 0.0));
    for f in ["metrics.jsonl", "student.ckpt", "teacher.ckpt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn supervised_cross_entropy_decreases() {
    let rc = tiny_config(200);
    let phase = supervised_only(rc.warmup.clone(), 200);
    let out = run_warmup(&rc, &phase, &source(8), None, 1, None).unwrap();
    let mean = |r: &[uda_i2i::data::LossReport]| r.iter().map(|x| x.seg_src).sum::<f64>() / r.len() as f64;
    let (first, last) = (mean(&out.reports[..20]), mean(&out.reports[180..]));
    println!("source CE: first 20 steps {first:.4}, last 20 steps {last:.4}");
    assert!(last < 0.8 * first, "{first} -> {last}");
    assert!(out.reports.iter().all(|r| r.con == 0.0 && r.lambda_con == 0.0));
}

#[test]
fn phases_are_deterministic() {
    let rc = tiny_config(12);
    let (s, t) = (source(6), target(6));
    let a = run_warmup(&rc, &rc.warmup, &s, Some(&t), 4, None).unwrap();
    let b = run_warmup(&rc, &rc.warmup, &s, Some(&t), 4, None).unwrap();
    assert_eq!(a.reports, b.reports);
    assert_eq!(a.teacher, b.teacher);
    let c = run_warmup(&rc, &rc.warmup, &s, Some(&t), 5, None).unwrap();
    assert_ne!(a.teacher, c.teacher);

    let (tr, _) = s.split_at(4);
    let x = run_segmentation(&rc, &rc.seg, &s, Some(&tr), Some(&t), 2, None).unwrap();
    let y = run_segmentation(&rc, &rc.seg, &s, Some(&tr), Some(&t), 2, None).unwrap();
    assert_eq!(x.reports, y.reports);
    assert_eq!(x.teacher, y.teacher);

    let mut rc = tiny_config(6);
    rc.i2i.pseudo_labels = PseudoLabelSource::Online;
    let trunk = Segmenter::new(rc.nets.segmenter.clone(), 1);
    let g1 = run_i2i(&rc, &s, &t, &trunk, None, 3, None).unwrap();
    let g2 = run_i2i(&rc, &s, &t, &trunk, None, 3, None).unwrap();
    assert_eq!(g1.reports, g2.reports);
    assert_eq!(g1.generator_ema, g2.generator_ema);
}

#[test]
fn segmentation_without_extras_is_the_source_only_baseline() {
    let rc = tiny_config(10);
    let phase = supervised_only(rc.seg.clone(), 10);
    let a = run_warmup(&rc, &phase, &source(6), None, 9, None).unwrap();
    let b = run_segmentation(&rc, &phase, &source(6), None, Some(&target(4)), 9, None).unwrap();
    assert_eq!(a.teacher, b.teacher);
    assert!(b.reports.iter().all(|r| r.seg_trans == 0.0 && r.con == 0.0));
}

#[test]
fn missing_inputs_are_prerequisite_errors() {
    let rc = tiny_config(2);
    let mut phase = rc.seg.clone();
    phase.source_fraction = 0.5;
    phase.translated_fraction = 0.5;
    let err = run_segmentation(&rc, &phase, &source(4), None, Some(&target(4)), 0, None).unwrap_err();
    assert!(matches!(err, Error::Prerequisite(_)), "{err}");
    let err = run_warmup(&rc, &rc.warmup, &source(4), None, 0, None).unwrap_err();
    assert!(matches!(err, Error::Prerequisite(_)), "{err}");
    let trunk = Segmenter::new(rc.nets.segmenter.clone(), 1);
    assert_eq!(rc.i2i.pseudo_labels, PseudoLabelSource::Precomputed);
    let err = run_i2i(&rc, &source(4), &target(4), &trunk, None, 0, None).unwrap_err();
    assert!(matches!(err, Error::Prerequisite(_)), "{err}");
}

#[test]
fn i2i_leaves_the_segmentation_network_alone() {
    let mut rc = tiny_config(5);
    rc.i2i.pseudo_labels = PseudoLabelSource::Online;
    let trunk = Segmenter::new(rc.nets.segmenter.clone(), 2);
    let before = trunk.clone();
    let out = run_i2i(&rc, &source(6), &target(6), &trunk, None, 0, None).unwrap();
    assert_eq!(trunk, before);
    for r in &out.reports {
        assert!(r.fields().iter().all(|(_, v)| v.is_finite()), "step {}", r.step);
    }
    assert_ne!(out.generator.params, initial_generator(&rc, 0).params);
}

#[test]
fn precomputed_labels_hold_the_weights_constant() {
    let rc = tiny_config(4);
    let (s, t) = (source(4), target(4));
    let teacher = Segmenter::new(rc.nets.segmenter.clone(), 3);
    let pl = generate_pseudo_labels(&teacher, &t, 0.9).unwrap();
    let out = run_i2i(&rc, &s, &t, &teacher, Some(&pl), 0, None).unwrap();
    for r in &out.reports {
        assert_eq!(r.lambda_pl, rc.hyper.lambda_max);
        assert_eq!(r.lambda_cgan, rc.hyper.lambda_max);
    }
    let mut online = rc.clone();
    online.i2i.pseudo_labels = PseudoLabelSource::Online;
    let out = run_i2i(&online, &s, &t, &teacher, None, 0, None).unwrap();
    assert_eq!(out.reports[0].lambda_pl, 0.0);
}

/// A teacher whose classifier ignores its features and always favours
/// `class` by a wide margin.
fn constant_teacher(class: usize) -> Segmenter {
    let mut t = Segmenter::new(tiny_config(1).nets.segmenter, 0);
    for (name, p) in t.params.iter_mut() {
        if name.starts_with(CLASSIFIER) {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let mut bias = vec![0.0f32; NUM_CLASSES];
    bias[class] = 40.0;
    t.params.insert("cls.b", Tensor::from_vec(&[NUM_CLASSES], bias).unwrap());
    t
}

#[test]
fn oracle_teacher_reproduces_ground_truth() {
    let mut spec = DomainSpec::target();
    spec.object_freq = vec![1.0, 0.0, 0.0, 0.0, 0.0];
    let samples: Vec<_> = (0..4).map(|s| sample_scene(s, &spec, 32, Domain::Target).unwrap()).collect();
    let t = Split::from_samples(&samples, true);
    let pl = generate_pseudo_labels(&constant_teacher(0), &t, 0.9).unwrap();
    assert_eq!(&pl.masks, t.masks().unwrap());
    assert_eq!(pl.coverage.confident_fraction, 1.0);
    assert_eq!(pl.coverage.class_fractions[0], 1.0);
}

#[test]
fn uniform_teacher_has_flat_confidence() {
    let mut teacher = constant_teacher(0);
    teacher.params.insert("cls.b", Tensor::zeros(&[NUM_CLASSES]));
    let pl = generate_pseudo_labels(&teacher, &target(3), 0.5).unwrap();
    let k = 1.0 / NUM_CLASSES as f64;
    for v in [pl.coverage.min_max_prob, pl.coverage.max_max_prob, pl.coverage.mean_max_prob] {
        assert!((v - k).abs() < 1e-6, "{v}");
    }
    assert_eq!(pl.coverage.confident_fraction, 0.0);
    assert_eq!(pl.masks.len(), 3);
}

#[test]
fn pseudo_labels_round_trip_through_disk() {
    let t = target(3);
    let pl = generate_pseudo_labels(&Segmenter::new(tiny_config(1).nets.segmenter, 8), &t, 0.9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    pl.save(dir.path(), &t.seeds).unwrap();
    assert_eq!(uda_i2i::trainer::PseudoLabelSet::load(dir.path(), &t.seeds).unwrap(), pl);
}

#[test]
fn translation_keeps_count_shape_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let req = SplitRequest {
        n_src: 5,
        n_tgt: 2,
        n_val_tgt: 2,
        size: 32,
        seed: 0,
        seed_block: 1 << 20,
    };
    let m = make_split(&DomainSpec::source(), &DomainSpec::target(), &req, &dir.path().join("data")).unwrap();
    let out = dir.path().join("out");
    let same = translate_dataset(&IdentityTranslator, &m.source_train, &out).unwrap();
    assert_eq!(same.len(), 5);
    let original = Split::load(&m.source_train, true).unwrap();
    let translated = Split::load(&same, true).unwrap();
    assert_eq!(original.images, translated.images);
    assert_eq!(original.masks, translated.masks);

    let rc = tiny_config(1);
    let g = initial_generator(&rc, 0);
    let moved = translate_dataset(&g, &m.source_train, &dir.path().join("g")).unwrap();
    let moved = Split::load(&moved, true).unwrap();
    assert_eq!(moved.len(), 5);
    for (a, b) in moved.images.iter().zip(&original.images) {
        assert_eq!((a.height(), a.width()), (b.height(), b.width()));
    }
    assert_eq!(moved.masks, original.masks);
    assert_ne!(moved.images, original.images);
}

proptest! {
    #![proptest_config(common::prop_config(64))]

    #[test]
    fn half_and_half_batches(batch in 1usize..64) {
        let mut p = tiny_config(1).seg;
        p.batch_size = batch;
        p.source_fraction = 0.5;
        p.translated_fraction = 0.5;
        let (s, t) = p.split_batch();
        prop_assert_eq!(s + t, batch);
        prop_assert!(s.abs_diff(t) <= 1);
    }

    #[test]
    fn crops_stay_inside_their_image(seed in any::<u64>(), n in 1usize..10) {
        let split = source(3);
        let mut b = uda_i2i::trainer::Batcher::new(seed, 16);
        let picks = b.draw(&split, n);
        let x = b.images(&split, &picks).unwrap();
        prop_assert_eq!(x.shape(), &[n, 3, 16, 16][..]);
        for p in picks {
            prop_assert!(p.y0 + 16 <= 32 && p.x0 + 16 <= 32 && p.index < 3);
        }
        let _ = Image::from_tensor(&x, 0).unwrap();
    }
}
