use slicegan::network::{
    build_classifier, build_discriminator, build_generator, checkpoint, infer_shapes, ClassifierArch, GanArch,
    ModelGraph, ParamCountConvention,
};
use slicegan::Error;
use slicegan_tensor::Tensor;

fn counts(m: &ModelGraph) -> (Vec<usize>, usize) {
    let r = m.count_params(ParamCountConvention::default());
    (r.per_layer, r.total)
}

#[test]
fn generator_matches_reference_table() {
    let g = build_generator(500).unwrap();
    let dims: Vec<Vec<usize>> = vec![
        vec![1024],
        vec![1024],
        vec![1024],
        vec![65536],
        vec![65536],
        vec![16, 16, 256],
        vec![32, 32, 64],
        vec![32, 32, 64],
        vec![32, 32, 64],
        vec![64, 64, 1],
    ];
    assert_eq!(&g.shapes()[..10], &dims[..]);
    assert_eq!(g.output_shape(), &[64, 64, 1]);
    let (per, total) = counts(&g);
    assert_eq!(&per[..10], &[512_000, 4096, 0, 67_174_400, 0, 0, 409_600, 256, 0, 1600]);
    assert_eq!(per[3], 1024 * 65536 + 65536);
    assert_eq!(total, 68_101_952);
}

#[test]
fn discriminator_matches_reference_table() {
    let d = build_discriminator().unwrap();
    let dims: Vec<Vec<usize>> = vec![
        vec![32, 32, 64],
        vec![32, 32, 64],
        vec![32, 32, 64],
        vec![16, 16, 128],
        vec![16, 16, 128],
        vec![16, 16, 128],
        vec![32768],
        vec![64],
        vec![64],
        vec![1],
    ];
    assert_eq!(&d.shapes()[..10], &dims[..]);
    let (per, total) = counts(&d);
    assert_eq!(&per[..10], &[1664, 0, 0, 204_928, 0, 0, 0, 2_097_216, 4160, 65]);
    assert_eq!(total, 2_308_033);
}

#[test]
fn classifier_matches_reference_table() {
    let c = build_classifier().unwrap();
    let dims: Vec<Vec<usize>> = vec![
        vec![30, 30, 20, 64],
        vec![30, 30, 20, 64],
        vec![15, 15, 10, 64],
        vec![15, 15, 10, 64],
        vec![13, 13, 8, 64],
        vec![13, 13, 8, 64],
        vec![6, 6, 4, 64],
        vec![6, 6, 4, 64],
        vec![4, 4, 2, 64],
        vec![4, 4, 2, 64],
        vec![2048],
        vec![1024],
        vec![1024],
        vec![256],
        vec![256],
        vec![2],
    ];
    assert_eq!(&c.shapes()[..16], &dims[..]);
    let (per, total) = counts(&c);
    assert_eq!(
        &per[..16],
        &[1792, 0, 0, 256, 110_656, 0, 0, 256, 110_656, 0, 0, 2_098_176, 0, 262_400, 0, 514]
    );
    assert_eq!(total, 2_584_706);
}

#[test]
fn half_size_classifier_input_fails_at_third_conv() {
    let arch = ClassifierArch::full();
    match infer_shapes(&arch.layers(), &[16, 16, 22, 1]) {
        Err(Error::LayerShape { layer, kind, .. }) => {
            assert_eq!(layer, 8);
            assert_eq!(kind, "conv3d");
        }
        other => panic!("expected a layer shape error, got {other:?}"),
    }
}

#[test]
fn initialization_is_seed_deterministic() {
    let a = build_discriminator().unwrap().initialized(7).unwrap();
    let b = build_discriminator().unwrap().initialized(7).unwrap();
    let c = build_discriminator().unwrap().initialized(8).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
    let k = &a.param(0, "kernel").unwrap().tensor;
    assert!(k.data().iter().all(|v| v.abs() <= 0.04 + 1e-7));
    assert!(a.param(0, "bias").unwrap().tensor.data().iter().all(|&v| v == 0.0));
}

#[test]
fn inference_forward_is_pure() {
    let arch = GanArch::desk();
    let g = arch.generator().unwrap().initialized(3).unwrap();
    let z = Tensor::randn_seeded(vec![4, arch.noise_dim], 11).unwrap();
    let a = g.predict_batch(z.clone()).unwrap();
    let b = g.predict_batch(z).unwrap();
    assert_eq!(a.shape(), &[4, 16, 16, 1]);
    assert_eq!(a.data(), b.data());
    assert!(a.data().iter().all(|v| v.abs() <= 1.0));

    let c = ClassifierArch::desk().build().unwrap().initialized(5).unwrap();
    let x = Tensor::randn_seeded(vec![2, 8, 8, 22, 1], 2).unwrap();
    let p = c.predict_batch(x.clone()).unwrap();
    assert_eq!(p.data(), c.predict_batch(x).unwrap().data());
    for row in p.data().chunks(2) {
        assert!((row[0] + row[1] - 1.0).abs() < 1e-5);
    }
}

#[test]
fn checkpoints_round_trip_byte_stably() {
    let c = ClassifierArch::desk().build().unwrap().initialized(9).unwrap();
    let bytes = checkpoint::to_bytes(&c).unwrap();
    assert_eq!(bytes, checkpoint::to_bytes(&c).unwrap());
    let mut fresh = ClassifierArch::desk().build().unwrap().initialized(1).unwrap();
    checkpoint::load_into(&mut fresh, &bytes).unwrap();
    assert_eq!(fresh.params(), c.params());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ckpt");
    checkpoint::save(&c, &path).unwrap();
    let mut again = ClassifierArch::desk().build().unwrap();
    checkpoint::load(&mut again, &path).unwrap();
    assert_eq!(again.params(), c.params());

    let mut wrong = GanArch::desk().discriminator().unwrap().initialized(0).unwrap();
    assert!(checkpoint::load_into(&mut wrong, &bytes).is_err());
    assert!(checkpoint::load_into(&mut fresh, &bytes[..bytes.len() - 3]).is_err());
}
