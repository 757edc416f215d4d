use softcorr::correspondence::{mle_map, VertexMap};
use softcorr::geometry::{augment, icosphere, mesh_graph, AugmentConfig, AugmentParams, RotationSampling};
use softcorr::initiator::{identity_loss, infer_initial, train_initiator, DescriptorNet, TrainConfig};
use softcorr::correspondence::SoftCorrespondence;

#[test]
fn sphere_training_lowers_loss_and_matches_itself() {
    let s = icosphere(2).unwrap();
    let g = mesh_graph(&s).unwrap();
    let trained = train_initiator(&s, &g, &AugmentConfig::default(), &TrainConfig::default(), 7).unwrap();
    let h = &trained.loss_history;
    assert_eq!(h.len(), 300);
    assert!(h.last().unwrap() < &h[0], "{} -> {}", h[0], h.last().unwrap());

    let p = infer_initial(&s, &g, &s, &g, &trained.net).unwrap().p;
    let acc = mle_map(&p).agreement(&VertexMap::identity(s.len()));
    assert!(acc >= 0.5, "self-pair accuracy {acc}");

    // same seed, same history
    let again = train_initiator(&s, &g, &AugmentConfig::default(), &TrainConfig { epochs: 5, ..TrainConfig::default() }, 7).unwrap();
    assert_eq!(&again.loss_history[..], &h[..5]);
}

#[test]
fn translation_invariant_first_layer_ignores_rigid_shifts() {
    let s = icosphere(1).unwrap();
    let g = mesh_graph(&s).unwrap();
    let trained = train_initiator(&s, &g, &AugmentConfig::default(), &TrainConfig { epochs: 20, ..TrainConfig::default() }, 3).unwrap();
    let mut net = trained.net;
    // drop the absolute-position block of the first edge MLP
    let first = net.layers()[0].0;
    let fan_out = first.fan_out;
    let mut w = net.params().get(first.weight).data().to_vec();
    w[..3 * fan_out].iter_mut().for_each(|v| *v = 0.0);
    net.params_mut().set(first.weight, w).unwrap();

    let shift = AugmentParams { translation: [2.5, -1.0, 0.75], ..AugmentParams::default() };
    let moved = augment(&s, &shift, 0).unwrap();
    let a = infer_initial(&s, &g, &s, &g, &net).unwrap().p;
    let b = infer_initial(&s, &g, &moved, &g, &net).unwrap().p;
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() <= 1e-9);
    }
}

#[test]
fn identity_augmentation_beats_the_zero_net() {
    let s = icosphere(1).unwrap();
    let g = mesh_graph(&s).unwrap();
    let still = AugmentConfig {
        rotation: RotationSampling::Bounded { max_angle: 0.0 },
        scale_range: (1.0, 1.0),
        jitter_fraction: 0.0,
        ..AugmentConfig::default()
    };
    // with fewer output channels than vertices, ‖G − I‖² of unit rows is bounded
    // below by N(N/d − 1), so the descriptor must be at least as wide as N
    let cfg = TrainConfig { widths: vec![3, 64], epochs: 100, lr: 1e-2 };
    let trained = train_initiator(&s, &g, &still, &cfg, 5).unwrap();
    let zero = DescriptorNet::zeros(&cfg.widths).unwrap();
    let baseline = identity_loss(&infer_initial(&s, &g, &s, &g, &zero).unwrap().p).unwrap();
    assert_eq!(baseline, s.len() as f64);
    assert!(trained.loss_history.last().unwrap() < &baseline);
    let p: SoftCorrespondence = infer_initial(&s, &g, &s, &g, &trained.net).unwrap().p;
    assert!(identity_loss(&p).unwrap() < baseline);
}
