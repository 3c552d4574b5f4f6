use std::collections::BTreeSet;

use gscope::augment::{augment_image, AugmentPolicy, CropAnchor};
use gscope::dataset::fixtures::counted;
use gscope::dataset::{validate_manifest, ArtworkKind, AuxCategory, CaptureRecord, LabelSpace, SplitRole};
use gscope::eval::{accuracy_curve, aggregate_splits, build_visit_record, Prediction};
use gscope::imaging::Image;
use gscope::nn::network::sample_gradients;
use gscope::nn::{InputGeometry, LayerSpec, NetworkSpec, Params};
use gscope::sim::degrade::DegradationConfig;
use gscope::train::{Checkpoint, HyperParams, Provenance, Stage};
use gscope::Tensor;
use proptest::prelude::*;

fn layer() -> impl Strategy<Value = LayerSpec> {
    prop_oneof![
        (1usize..4, prop_oneof![Just(1usize), Just(3)], 1usize..3, 0usize..2).prop_map(|(out_channels, kernel, stride, pad)| {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
            }
        }),
        Just(LayerSpec::Relu),
        Just(LayerSpec::MaxPool),
        (1usize..6).prop_map(|out_units| LayerSpec::Dense { out_units }),
    ]
}

/// Random stacks ending in a dense head; not all of them are valid.
fn any_spec() -> impl Strategy<Value = NetworkSpec> {
    (prop::collection::vec(layer(), 0..4), 2usize..5, 1usize..4, 2usize..9, 2usize..9).prop_map(
        |(mut layers, classes, c, h, w)| {
            layers.push(LayerSpec::Dense { out_units: classes });
            NetworkSpec {
                input: InputGeometry::new(h, w, c),
                layers,
                classes,
            }
        },
    )
}

fn label() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("a".to_string()),
        Just("b".to_string()),
        Just("c".to_string()),
        Just("background".to_string()),
        Just("distractor".to_string()),
    ]
}

fn frames() -> impl Strategy<Value = (Vec<Prediction>, Vec<CaptureRecord>)> {
    prop::collection::vec(
        (label(), prop::collection::btree_set(label(), 1..4), 0u64..30),
        0..15,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (pred, gt, step))| {
                let path = format!("f{i}");
                (
                    Prediction {
                        capture: path.clone(),
                        label: pred,
                        scores: vec![],
                    },
                    CaptureRecord {
                        path,
                        step,
                        ordered_gt: gt.into_iter().collect(),
                    },
                )
            })
            .unzip()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_length_is_the_shape_product(shape in prop::collection::vec(0usize..5, 1..4), extra in 0usize..3) {
        let n: usize = shape.iter().product();
        let ok = Tensor::new(shape.clone(), vec![0.0; n]);
        prop_assert_eq!(ok.is_ok(), shape.iter().all(|&e| e >= 1));
        if let Ok(t) = ok {
            prop_assert_eq!(t.len(), n);
        }
        if extra > 0 {
            prop_assert!(Tensor::new(shape, vec![0.0; n + extra]).is_err());
        }
    }

    #[test]
    fn valid_specs_propagate_geometry(spec in any_spec()) {
        if let Ok(shapes) = spec.layer_shapes() {
            prop_assert_eq!(shapes.len(), spec.layers.len());
            prop_assert_eq!(shapes.last().unwrap(), &vec![spec.classes]);
            let params = Params::init(&spec, 1).unwrap();
            prop_assert_eq!(params.tensors.len(), spec.param_shapes().unwrap().len());
        }
    }

    #[test]
    fn gradients_are_congruent_with_params(spec in any_spec(), seed in 0u64..100) {
        prop_assume!(spec.layer_shapes().is_ok());
        let params = Params::init(&spec, seed).unwrap();
        let x = Tensor::from_fn(&spec.input.shape(), |i| ((i as f32) * 0.37).sin());
        let (loss, _, g) = sample_gradients(&spec, &params, &x, (seed as usize) % spec.classes).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
        prop_assert_eq!(g.tensors.len(), params.tensors.len());
        for (a, b) in g.tensors.iter().zip(&params.tensors) {
            prop_assert_eq!(a.shape(), b.shape());
        }
    }

    #[test]
    fn label_space_is_a_bijection(ids in prop::collection::vec("[a-z]{1,3}", 1..12), bg in any::<bool>(), dis in any::<bool>()) {
        let mut aux = Vec::new();
        if bg { aux.push(AuxCategory::Background); }
        if dis { aux.push(AuxCategory::Distractor); }
        let space = LabelSpace::from_labels(&ids, &aux);
        let unique: BTreeSet<&String> = ids.iter().collect();
        prop_assert_eq!(space.len(), unique.len() + aux.len());
        for i in 0..space.len() {
            prop_assert_eq!(space.index_of(space.label(i).unwrap()), Some(i));
        }
    }

    #[test]
    fn view_counts_outside_two_to_six_are_rejected(views in prop::collection::vec(0usize..9, 1..6)) {
        let n = views.len();
        let mut m = counted("art", ArtworkKind::Planar, n, 0, &[], &[("s", SplitRole::Test, 1)]);
        for (i, &v) in views.iter().enumerate() {
            for k in 0..v {
                m.training_images.push(gscope::dataset::TrainingImage {
                    path: format!("t/{i}_{k}.png"),
                    label: m.instances[i].id.clone(),
                    viewpoint: k as u32,
                });
            }
        }
        let ok = views.iter().all(|v| (2..=6).contains(v));
        prop_assert_eq!(validate_manifest(&m).is_empty(), ok);
    }

    #[test]
    fn duplicate_ground_truth_is_rejected(dup in any::<bool>()) {
        let mut m = counted("art", ArtworkKind::Planar, 2, 4, &[], &[("s", SplitRole::Test, 1)]);
        if dup {
            let first = m.splits[0].records[0].ordered_gt[0].clone();
            m.splits[0].records[0].ordered_gt.push(first);
        }
        prop_assert_eq!(validate_manifest(&m).is_empty(), !dup);
    }

    #[test]
    fn augmentation_count_and_geometry(
        crops in prop::sample::subsequence(CropAnchor::ALL.to_vec(), 1..=5),
        hflip in any::<bool>(),
        rotations in prop::collection::vec(-30.0f64..30.0, 1..3),
        contrasts in prop::collection::vec(0.5f64..1.5, 1..3),
        fraction in 0.5f64..=1.0,
        side in 4u32..20,
    ) {
        let policy = AugmentPolicy {
            crop_fraction: fraction,
            crops: crops.clone(),
            hflip,
            rotation_degrees: rotations.clone(),
            contrast_factors: contrasts.clone(),
        };
        let img = Image::from_fn(side, side + 3, |x, y| image::Rgb([x as u8 * 9, y as u8 * 7, 50]));
        let geom = InputGeometry::new(8, 8, 3);
        let out = augment_image(&img, &policy, geom).unwrap();
        let expected = crops.len() * if hflip { 2 } else { 1 } * rotations.len() * contrasts.len();
        prop_assert_eq!(out.len(), expected);
        prop_assert!(out.iter().all(|o| o.dimensions() == (8, 8)));
    }

    #[test]
    fn invalid_augment_policies_are_rejected(fraction in -0.5f64..1.5, contrast in -1.0f64..2.0) {
        let policy = AugmentPolicy {
            crop_fraction: fraction,
            contrast_factors: vec![contrast],
            ..AugmentPolicy::default()
        };
        prop_assert_eq!(policy.validate().is_ok(), fraction > 0.0 && fraction <= 1.0 && contrast > 0.0);
    }

    #[test]
    fn degradation_ranges_are_enforced(
        p in -0.2f64..1.2,
        jitter in -0.1f64..0.7,
        gain in -0.2f64..1.2,
        density in -0.2f64..1.2,
    ) {
        let cfg = DegradationConfig {
            glare_prob: p,
            perspective_jitter: jitter,
            lowlight_gain: gain,
            sp_noise_density: density,
            ..DegradationConfig::none()
        };
        let ok = (0.0..=1.0).contains(&p)
            && (0.0..=0.5).contains(&jitter)
            && gain > 0.0 && gain <= 1.0
            && (0.0..=1.0).contains(&density);
        prop_assert_eq!(cfg.validate().is_ok(), ok);
    }

    #[test]
    fn predicted_label_is_first_argmax(scores in prop::collection::vec(0u8..4, 2..8)) {
        let ids: Vec<String> = (0..scores.len()).map(|i| format!("x{i}")).collect();
        let space = LabelSpace::from_labels(&ids, &[]);
        let s: Vec<f32> = scores.iter().map(|&v| v as f32).collect();
        let p = Prediction::from_scores("f", s, &space).unwrap();
        let max = *scores.iter().max().unwrap();
        let first = scores.iter().position(|&v| v == max).unwrap();
        prop_assert_eq!(p.label, space.label(first).unwrap());
    }

    #[test]
    fn accuracy_curves_are_monotone_fractions((preds, records) in frames(), max_k in 1usize..6) {
        let c = accuracy_curve(&preds, &records, max_k).unwrap();
        prop_assert_eq!(c.len(), max_k);
        prop_assert!(c.iter().all(|a| (0.0..=1.0).contains(a)));
        prop_assert!(c.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn visit_counts_sum_to_identified_artwork_frames((preds, records) in frames()) {
        let v = build_visit_record(&preds, &records).unwrap();
        let identified = preds
            .iter()
            .zip(&records)
            .filter(|(p, r)| AuxCategory::parse(&p.label).is_none() && r.ordered_gt[0] == p.label)
            .count();
        prop_assert_eq!(v.total_captures(), identified);
        prop_assert_eq!(v.sequence.len(), identified);
        for a in v.artworks.values() {
            prop_assert!(a.first_step <= a.last_step);
        }
    }

    #[test]
    fn split_aggregation_ignores_order(curves in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..6)) {
        let (m, s) = aggregate_splits(&curves).unwrap();
        let mut rev = curves.clone();
        rev.reverse();
        let (m2, s2) = aggregate_splits(&rev).unwrap();
        prop_assert_eq!(&m, &m2);
        prop_assert_eq!(&s, &s2);
        for k in 0..3 {
            let lo = curves.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min);
            let hi = curves.iter().map(|c| c[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m[k] >= lo - 1e-12 && m[k] <= hi + 1e-12);
            prop_assert!(s[k] >= 0.0);
        }
    }

    #[test]
    fn hyperparams_reject_degenerate_values(lr in -0.1f32..0.1, batch in 0usize..3, epochs in 0u32..3) {
        let h = HyperParams { lr, batch_size: batch, epochs, ..HyperParams::default() };
        prop_assert_eq!(h.validate().is_ok(), lr >= 0.0 && batch >= 1 && epochs >= 1);
    }

    #[test]
    fn checkpoints_round_trip(spec in any_spec(), seed in 0u64..50) {
        prop_assume!(spec.layer_shapes().is_ok());
        let params = Params::init(&spec, seed).unwrap();
        let prov = Provenance {
            stage: Stage::Finetuned,
            seed,
            epochs: 1,
            hyper: HyperParams::default(),
            source_hash: "h".into(),
            labels: (0..spec.classes).map(|i| format!("l{i}")).collect(),
            held_out: Some("s".into()),
            parent: None,
        };
        let c = Checkpoint::new(spec, params, prov).unwrap();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.params_hash(), c.params_hash());
        prop_assert_eq!(back.spec, c.spec);
        prop_assert_eq!(back.provenance, c.provenance);
    }
}
