//! Library results checked against independent reference computations.

mod common;

use adgan_core::autodiff::{AdamConfig, AdamState, Tape};
use adgan_core::data::{
    extract_patch, load_hsc, pca_reduce, prepare_cube, save_hsc, synth_dataset, HsiCube, PatchSet, PcaModel,
    SynthSpec,
};
use adgan_core::evaluation::{classify_patches, mean_pairwise_distance, ClassifyOptions};
use adgan_core::model::{adgan_d_loss, adgan_g_loss, AdganModel, ArchConfig, Phase};
use adgan_core::regularization::{RegularizerConfig, RegularizerKind};
use adgan_core::{rng, Tensor};
use rand::Rng as _;
use sha2::{Digest, Sha256};

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        num_classes: 2,
        patch_size: 7,
        base_width: 4,
        noise_dim: 4,
        depth: 3,
        min_spatial: 3,
        g_reg_layer: 2,
        d_reg_layer: 2,
        ..ArchConfig::default()
    }
}

fn no_reg() -> RegularizerConfig {
    RegularizerConfig {
        kind: RegularizerKind::None,
        ..RegularizerConfig::default()
    }
}

#[test]
fn conv2d_matches_direct_loops() {
    let mut r = rng::seeded(10);
    for _ in 0..30 {
        let (n, c, o) = (r.random_range(1..=2), r.random_range(1..=3), r.random_range(1..=3));
        let k = r.random_range(1..=4);
        let h = r.random_range(k..=8);
        let stride = r.random_range(1..=2);
        let pad = r.random_range(0..=1);
        let x = Tensor::randn(&[n, c, h, h], 1.0, &mut r);
        let w = Tensor::randn(&[o, c, k, k], 1.0, &mut r);
        let mut t = Tape::new();
        let (xv, wv) = (t.leaf(x.clone(), false), t.leaf(w.clone(), false));
        let y = t.conv2d(xv, wv, stride, pad).unwrap();
        let (want, shape) = common::naive_conv2d(x.data(), [n, c, h, h], w.data(), [o, c, k, k], stride, pad);
        assert_eq!(t.value(y).shape(), shape);
        let diff = t.value(y).data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "diff {diff}");
    }
}

#[test]
fn conv_transpose_matches_scatter_and_is_the_conv_input_vjp() {
    let mut r = rng::seeded(11);
    for _ in 0..30 {
        let (n, c, o) = (r.random_range(1..=2), r.random_range(1..=3), r.random_range(1..=3));
        let k = r.random_range(2..=4);
        let h = r.random_range(2..=5);
        let stride = r.random_range(1..=2);
        let pad = r.random_range(0..=1).min(k - 1);
        let x = Tensor::randn(&[n, c, h, h], 1.0, &mut r);
        let w = Tensor::randn(&[c, o, k, k], 1.0, &mut r);
        let mut t = Tape::new();
        let (xv, wv) = (t.leaf(x.clone(), false), t.leaf(w.clone(), false));
        let y = t.conv_transpose2d(xv, wv, stride, pad).unwrap();
        let (want, shape) = common::naive_conv_transpose2d(x.data(), [n, c, h, h], w.data(), [c, o, k, k], stride, pad);
        assert_eq!(t.value(y).shape(), shape);
        let diff = t.value(y).data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-10, "forward diff {diff}");

        // The input gradient of conv(z, w) for upstream g is convT(g, w).
        let [_, _, oh, ow] = shape;
        let z = Tensor::randn(&[n, o, oh, ow], 1.0, &mut r);
        let mut t = Tape::new();
        let zv = t.leaf(z, true);
        let wv = t.leaf(w.clone(), false);
        let yc = t.conv2d(zv, wv, stride, pad).unwrap();
        if t.value(yc).shape() != x.shape() {
            continue;
        }
        let loss = t.weighted_sum(yc, x.data().to_vec()).unwrap();
        let g = t.backward(loss).unwrap();
        let vjp = g.get(zv).unwrap();
        let d = vjp.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-10, "vjp diff {d}");
    }
}

#[test]
fn pca_leading_axis_matches_power_iteration() {
    let ds = synth_dataset(&SynthSpec::default()).unwrap();
    let pca = PcaModel::fit(&ds.cube).unwrap();
    let (lambda, v) = common::power_iteration(&common::band_covariance(&ds.cube), 3000);
    assert!((pca.eigenvalues[0] - lambda).abs() / lambda < 1e-8);
    let dot: f64 = pca.components[0].iter().zip(&v).map(|(a, b)| a * b).sum();
    assert!((dot.abs() - 1.0).abs() < 1e-8, "dot {dot}");
    for w in pca.eigenvalues.windows(2) {
        assert!(w[0] >= w[1]);
    }
    // The first reduced band is the centered projection on that axis.
    let reduced = pca_reduce(&ds.cube, 1).unwrap();
    let p = ds.cube.pixels();
    for i in (0..p).step_by(97) {
        let want: f64 = (0..ds.cube.bands).map(|b| (ds.cube.band(b)[i] - pca.mean[b]) * pca.components[0][b]).sum();
        assert!((reduced.band(0)[i] - want).abs() < 1e-9);
    }
}

#[test]
fn zero_noise_scene_is_separable_after_reduction() {
    let spec = SynthSpec {
        noise: 0.0,
        ..SynthSpec::default()
    };
    let ds = synth_dataset(&spec).unwrap();
    let cube3 = prepare_cube(&ds.cube, 3).unwrap();
    let acc = common::nearest_centroid_accuracy(&cube3, &ds.labels);
    assert!(acc >= 0.99, "nearest-centroid accuracy {acc}");
}

#[test]
fn hsc_checksums_match_file_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = synth_dataset(&SynthSpec::default()).unwrap();
    save_hsc(tmp.path(), &ds).unwrap();
    let hex = |b: &[u8]| Sha256::digest(b).iter().map(|x| format!("{x:02x}")).collect::<String>();
    assert_eq!(ds.cube.sha256(), hex(&std::fs::read(tmp.path().join("cube.bin")).unwrap()));
    assert_eq!(ds.labels.sha256(), hex(&std::fs::read(tmp.path().join("labels.bin")).unwrap()));
    let back = load_hsc(tmp.path()).unwrap();
    assert_eq!(back.cube.sha256(), ds.cube.sha256());
}

fn random_set(n: usize, arch: &ArchConfig, seed: u64) -> PatchSet {
    let mut r = rng::seeded(seed);
    let mut set = PatchSet::empty(arch.patch_size, arch.channels);
    for i in 0..n {
        set.data.extend((0..set.patch_len()).map(|_| r.random_range(-0.5..0.5)));
        set.labels.push((i % arch.num_classes) as u16 + 1);
        set.centers.push((0, i));
    }
    set
}

#[test]
fn batched_and_single_classification_agree() {
    let arch = tiny_arch();
    let mut model = AdganModel::new(arch.clone(), 4).unwrap();
    model.set_training(false);
    let set = random_set(23, &arch, 5);
    let single = classify_patches(&mut model, &set, &ClassifyOptions { batch_size: 1, include_fake: false }).unwrap();
    for bs in [4, 7, 100] {
        let batched = classify_patches(&mut model, &set, &ClassifyOptions { batch_size: bs, include_fake: false }).unwrap();
        assert_eq!(batched, single);
    }
}

#[test]
fn uniform_noise_diversity_matches_closed_form() {
    let d = 600;
    let mut r = rng::seeded(6);
    let v: Vec<Vec<f64>> = (0..60).map(|_| (0..d).map(|_| r.random::<f64>()).collect()).collect();
    let s: Vec<&[f64]> = v.iter().map(Vec::as_slice).collect();
    let got = mean_pairwise_distance(&s).unwrap();
    let want = (d as f64 / 6.0).sqrt();
    assert!((got - want).abs() / want < 0.05, "{got} vs {want}");
}

#[test]
fn one_discriminator_step_lowers_its_loss() {
    let arch = tiny_arch();
    let reg = no_reg();
    let phase = Phase::Train {
        track_running: false,
        seed: 0,
    };
    let mut decreased = 0;
    for trial in 0..100u64 {
        let mut model = AdganModel::new(arch.clone(), trial).unwrap();
        let set = random_set(8, &arch, 1000 + trial);
        let real = set.batch(&(0..8).collect::<Vec<_>>()).unwrap();
        let mut r = rng::seeded(trial);
        let z = model.sample_noise(8, &mut r);
        let fake = model.generate(&z, &set.labels, phase, &reg).unwrap();
        let loss_of = |model: &mut AdganModel, update: Option<&mut AdamState>| {
            let mut t = Tape::new();
            let dv = model.discriminator.params.register(&mut t, true);
            let (xr, xf) = (t.leaf(real.clone(), false), t.leaf(fake.clone(), false));
            let or = model.discriminator.forward(&mut t, &dv, xr, phase, &reg).unwrap();
            let of = model.discriminator.forward(&mut t, &dv, xf, phase, &reg).unwrap();
            let loss = adgan_d_loss(&mut t, or[0], &set.labels, of[0]).unwrap();
            let value = t.value(loss).item();
            if let Some(opt) = update {
                let mut g = t.backward(loss).unwrap();
                let grads = model.discriminator.params.collect_grads(&dv, &mut g).unwrap();
                opt.update_owned(&mut model.discriminator.params, &grads).unwrap();
            }
            value
        };
        let mut opt = AdamState::new(&model.discriminator.params, AdamConfig::default());
        let before = loss_of(&mut model, Some(&mut opt));
        let after = loss_of(&mut model, None);
        decreased += usize::from(after < before);
    }
    assert!(decreased >= 80, "loss decreased in {decreased}/100 trials");
}

#[test]
fn generator_loss_depends_on_noise() {
    let arch = tiny_arch();
    let mut model = AdganModel::new(arch.clone(), 8).unwrap();
    let mut r = rng::seeded(8);
    let classes = vec![1, 2, 1, 2];
    let z = model.sample_noise(4, &mut r);
    let input = model.generator_input(&z, &classes).unwrap();
    let reg = no_reg();
    let phase = Phase::Train {
        track_running: false,
        seed: 1,
    };
    let mut t = Tape::new();
    let gv = model.generator.params.register(&mut t, false);
    let dv = model.discriminator.params.register(&mut t, false);
    let x = t.leaf(input, true);
    let fake = model.generator.forward(&mut t, &gv, x, phase, &reg).unwrap()[0];
    let out = model.discriminator.forward(&mut t, &dv, fake, phase, &reg).unwrap();
    let loss = adgan_g_loss(&mut t, out[0], &classes).unwrap();
    let g = t.backward(loss).unwrap();
    let grad = g.get(x).unwrap();
    let d = arch.noise_dim;
    let k = arch.num_classes;
    let noise_grad: f64 = (0..4)
        .flat_map(|i| grad.data()[i * (d + k)..i * (d + k) + d].to_vec())
        .map(f64::abs)
        .sum();
    assert!(noise_grad > 1e-8, "noise gradient {noise_grad}");
}

/// Window `(dy, dx, h, w)` of `cube` as a new cube.
fn crop(cube: &HsiCube, dy: usize, dx: usize, h: usize, w: usize) -> HsiCube {
    let mut data = Vec::with_capacity(cube.bands * h * w);
    for b in 0..cube.bands {
        for y in 0..h {
            for x in 0..w {
                data.push(cube.at(b, y + dy, x + dx));
            }
        }
    }
    HsiCube::new(w, h, cube.bands, data).unwrap()
}

#[test]
fn interior_patches_and_predictions_follow_translation() {
    let ds = synth_dataset(&SynthSpec::default()).unwrap();
    let cube3 = prepare_cube(&ds.cube, 3).unwrap();
    let arch = ArchConfig {
        num_classes: 3,
        patch_size: 7,
        base_width: 4,
        noise_dim: 4,
        depth: 3,
        min_spatial: 3,
        g_reg_layer: 2,
        d_reg_layer: 2,
        ..ArchConfig::default()
    };
    let (dy, dx) = (5, 9);
    let shifted = crop(&cube3, dy, dx, 30, 30);
    let s = arch.patch_size;
    let plen = 3 * s * s;
    let mut model = AdganModel::new(arch, 2).unwrap();
    model.set_training(false);
    let (mut a, mut b) = (vec![0.0; plen], vec![0.0; plen]);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for y in s / 2..30 - s / 2 {
        for x in s / 2..30 - s / 2 {
            extract_patch(&shifted, y, x, s, &mut a);
            extract_patch(&cube3, y + dy, x + dx, s, &mut b);
            assert_eq!(a, b);
            if (y + x) % 11 == 0 {
                xs.extend_from_slice(&a);
                ys.extend_from_slice(&b);
            }
        }
    }
    let n = xs.len() / plen;
    let pa = model.predict(&Tensor::new(vec![n, 3, s, s], xs).unwrap(), false).unwrap();
    let pb = model.predict(&Tensor::new(vec![n, 3, s, s], ys).unwrap(), false).unwrap();
    assert_eq!(pa, pb);
}
