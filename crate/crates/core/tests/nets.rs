//! Architecture contracts: shapes, output ranges, parameter counts,
//! determinism, serialization identity, and network-level gradient checks.

use t2net::nets::{DiscriminatorFeat, DiscriminatorR, TaskNetF, TranslatorG};
use t2net::tensor::{grad_check, GradCheckOptions, ParamSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image<E: t2net::Elem>(seed: u64, n: usize, h: usize, w: usize) -> Tensor<E> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<E> = (0..n * 3 * h * w)
        .map(|_| E::from_f64(rng.gen_range(0.0..1.0)))
        .collect();
    Tensor::from_vec(&[n, 3, h, w], data).unwrap()
}

#[test]
fn translator_preserves_shape_and_range() {
    let g = TranslatorG::<f32>::new(1);
    for (h, w) in [(64, 64), (32, 32)] {
        let x = random_image::<f32>(7, 2, h, w);
        let y = g.translate(&x).unwrap();
        assert_eq!(y.shape(), &[2, 3, h, w]);
        assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn translator_rejects_odd_dims() {
    let g = TranslatorG::<f32>::new(1);
    let x = random_image::<f32>(7, 1, 63, 64);
    assert!(g.translate(&x).is_err());
}

#[test]
fn translator_structure_constants() {
    // one stride-2 layer and exactly six residual blocks; each block
    // contributes two convs (w+b) and two norms (g+s) = 8 named entries.
    let g = TranslatorG::<f32>::new(3);
    let block_entries = g
        .params()
        .iter()
        .filter(|(n, _)| n.starts_with("block"))
        .count();
    assert_eq!(block_entries, 6 * 8);
    assert_eq!(t2net::nets::TRANSLATOR_RES_BLOCKS, 6);
    // the only stride-2 conv is "down"
    assert!(g.params().get("down.w").is_some());
}

#[test]
fn discriminator_patch_map_is_spatial() {
    // 64 -> 32 -> 16 -> 8 through the stride-2 stack, then the stride-1
    // 4x4 conv with padding 1 gives a 7x7 patch grid.
    let d = DiscriminatorR::<f32>::new(2);
    let x = random_image::<f32>(8, 1, 64, 64);
    let scores = d.discriminate(&x).unwrap();
    assert_eq!(scores.shape(), &[1, 1, 7, 7]);
    let (h, w) = (scores.shape()[2], scores.shape()[3]);
    assert!(h > 1 && w > 1, "patch-level discrimination requires a grid");
}

#[test]
fn discriminator_is_deterministic() {
    let d = DiscriminatorR::<f32>::new(2);
    let x = random_image::<f32>(9, 2, 64, 64);
    let a = d.discriminate(&x).unwrap().to_vec();
    let b = d.discriminate(&x).unwrap().to_vec();
    assert_eq!(a, b);
}

#[test]
fn task_net_output_scales_and_range() {
    let f = TaskNetF::<f32>::new(4, 1.0, 10.0);
    let x = random_image::<f32>(10, 2, 64, 64);
    let pred = f.predict_depth(&x).unwrap();
    let shapes: Vec<Vec<usize>> = pred.depths.iter().map(|d| d.shape().to_vec()).collect();
    assert_eq!(
        shapes,
        vec![
            vec![2, 1, 16, 16],
            vec![2, 1, 16, 16],
            vec![2, 1, 32, 32],
            vec![2, 1, 64, 64],
        ]
    );
    assert_eq!(pred.feature_tap.shape(), &[2, 64, 16, 16]);
    for d in &pred.depths {
        assert!(d.data().iter().all(|&v| (1.0..=10.0).contains(&v)));
    }
}

#[test]
fn task_net_rejects_indivisible_dims() {
    let f = TaskNetF::<f32>::new(4, 1.0, 10.0);
    let x = random_image::<f32>(10, 1, 62, 64);
    assert!(f.predict_depth(&x).is_err());
}

#[test]
fn feature_discriminator_accepts_exactly_the_tap_shape() {
    let f = TaskNetF::<f32>::new(4, 1.0, 10.0);
    let d = DiscriminatorFeat::<f32>::new(5);
    let x = random_image::<f32>(11, 1, 64, 64);
    let pred = f.predict_depth(&x).unwrap();
    let scores = d.discriminate(&pred.feature_tap).unwrap();
    assert_eq!(scores.shape()[0], 1);
    assert_eq!(scores.shape()[1], 1);
    // wrong channel count is rejected
    let bad = Tensor::<f32>::zeros(&[1, 32, 16, 16]);
    assert!(d.discriminate(&bad).is_err());
}

#[test]
fn parameter_counts_are_fixed_constants() {
    let g = TranslatorG::<f32>::new(0);
    let dr = DiscriminatorR::<f32>::new(0);
    let df = DiscriminatorFeat::<f32>::new(0);
    let ft = TaskNetF::<f32>::new(0, 1.0, 10.0);
    // Frozen architecture sizes (hand-tallied from the layer table);
    // a change here is a change of contract.
    assert_eq!(g.params().total_elements(), 491_331);
    assert_eq!(dr.params().total_elements(), 168_033);
    assert_eq!(df.params().total_elements(), 111_937);
    assert_eq!(ft.params().total_elements(), 193_700);
}

#[test]
fn init_is_deterministic_per_seed() {
    let a = TranslatorG::<f32>::new(42);
    let b = TranslatorG::<f32>::new(42);
    let c = TranslatorG::<f32>::new(43);
    for ((na, ta), (nb, tb)) in a.params().iter().zip(b.params().iter()) {
        assert_eq!(na, nb);
        assert_eq!(ta.to_vec(), tb.to_vec());
    }
    let first_a = a.params().get("head.w").unwrap().to_vec();
    let first_c = c.params().get("head.w").unwrap().to_vec();
    assert_ne!(first_a, first_c);
}

#[test]
fn checkpoint_round_trip_preserves_every_parameter_bit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("G.t2np");
    let g = TranslatorG::<f32>::new(99);
    g.params().save(&path).unwrap();

    let h = TranslatorG::<f32>::new(7); // different init, same structure
    h.params().load_from(&path).unwrap();
    for ((na, ta), (nb, tb)) in g.params().iter().zip(h.params().iter()) {
        assert_eq!(na, nb);
        let ba: Vec<u32> = ta.to_vec().iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u32> = tb.to_vec().iter().map(|v| v.to_bits()).collect();
        assert_eq!(ba, bb, "parameter {na}");
    }
}

/// Gradient check through each network at f64 on a small input; a random
/// subset of parameters per tensor keeps the runtime reasonable.
#[test]
fn network_gradients_match_finite_differences() {
    let opts = GradCheckOptions {
        max_entries_per_param: 2,
        ..GradCheckOptions::f64_defaults()
    };

    // translator
    let g = TranslatorG::<f64>::new(13);
    let x = random_image::<f64>(21, 1, 8, 8);
    let proj = random_image::<f64>(22, 1, 8, 8);
    let params: Vec<(String, Tensor<f64>)> = g
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    let mut forward = || {
        let y = g.translate(&x).unwrap();
        y.mul(&proj).unwrap().mean()
    };
    let outcome = grad_check(&params, &mut forward, &|_, _| false, &opts).unwrap();
    assert!(
        outcome.passes(1e-4),
        "translator rel err {} at {}[{}]",
        outcome.max_rel_err,
        outcome.worst_param,
        outcome.worst_index
    );

    // discriminator
    let d = DiscriminatorR::<f64>::new(14);
    let xd = random_image::<f64>(23, 1, 16, 16);
    let params: Vec<(String, Tensor<f64>)> = d
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    let mut forward = || {
        let s = d.discriminate(&xd).unwrap();
        s.square().mean()
    };
    let outcome = grad_check(&params, &mut forward, &|_, _| false, &opts).unwrap();
    assert!(
        outcome.passes(1e-4),
        "discriminator rel err {}",
        outcome.max_rel_err
    );

    // task net through all four heads jointly
    let f = TaskNetF::<f64>::new(15, 1.0, 10.0);
    let xf = random_image::<f64>(24, 1, 8, 8);
    let params: Vec<(String, Tensor<f64>)> = f
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    let mut forward = || {
        let pred = f.predict_depth(&xf).unwrap();
        let mut total = pred.depths[0].mean();
        for d in &pred.depths[1..] {
            total = total.add(&d.square().mean()).unwrap();
        }
        total
    };
    let outcome = grad_check(&params, &mut forward, &|_, _| false, &opts).unwrap();
    assert!(
        outcome.passes(1e-4),
        "task net rel err {} at {}[{}]",
        outcome.max_rel_err,
        outcome.worst_param,
        outcome.worst_index
    );
}

#[test]
fn shared_instance_means_shared_parameter_storage() {
    // The same network object serves both pipelines; parameter identity is
    // by storage, not by value.
    let g = TranslatorG::<f32>::new(5);
    let params_syn: Vec<Tensor<f32>> = g.params().tensors();
    let params_real: Vec<Tensor<f32>> = g.params().tensors();
    for (a, b) in params_syn.iter().zip(params_real.iter()) {
        assert_eq!(a.id(), b.id(), "pipelines must reference the same storage");
    }
}

#[test]
fn loaded_params_keep_live_network_wiring() {
    // Loading a checkpoint must write through to the tensors the layer
    // structs hold, not create fresh ones.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("G.t2np");
    let g = TranslatorG::<f32>::new(1);
    let x = random_image::<f32>(2, 1, 16, 16);
    let before = g.translate(&x).unwrap().to_vec();
    g.params().save(&path).unwrap();

    let h = TranslatorG::<f32>::new(2);
    let different = h.translate(&x).unwrap().to_vec();
    assert_ne!(before, different);
    h.params().load_from(&path).unwrap();
    let after = h.translate(&x).unwrap().to_vec();
    assert_eq!(before, after);
}

// Keep ParamSet in the public surface exercised.
#[test]
fn param_set_lookup_and_order() {
    let g = TranslatorG::<f32>::new(0);
    let set: &ParamSet<f32> = g.params();
    assert!(set.get("head.w").is_some());
    assert!(set.get("nonexistent").is_none());
    let names: Vec<&str> = set.iter().map(|(n, _)| n).collect();
    assert_eq!(names[0], "head.w");
    assert_eq!(names[1], "head.b");
}
