//! One PASS/FAIL line per acceptance criterion. Pass substrings as arguments
//! to run a subset: `cargo test --release --test acceptance -- overfit`.

mod common;

use std::time::Instant;

use common::rng;
use mbrsep::dsp::*;
use mbrsep::harness::*;
use mbrsep::metrics::{bss_decompose, bss_eval, wilcoxon_signed_rank, CAP_DB, DEFAULT_FILTER_LEN};
use mbrsep::model::*;
use mbrsep::tensor::*;
use rand::Rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

type Check = fn() -> (bool, String);

fn random(shape: Shape, r: &mut impl Rng) -> Tensor<f64> {
    Tensor::uniform(shape, -1.0, 1.0, r)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn param_counts() -> (bool, String) {
    let expected = [
        (ModelKind::Dnn, 4_206_600),
        (ModelKind::Fcn, 3_789_506),
        (ModelKind::Unet, 4_532_631),
        (ModelKind::MbrFcn, 747_733),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, n) in expected {
        let got = count_params(&build(kind)).total;
        ok &= got == n;
        parts.push(format!("{kind} {got}/{n}"));
    }
    (ok, parts.join(", "))
}

fn band_arithmetic() -> (bool, String) {
    let spec = build(ModelKind::MbrFcn);
    let shapes = spec.shapes(1).unwrap();
    let concat = shapes[spec.find("concat").unwrap()];
    let widths: Vec<usize> = MbrFcnConfig::default()
        .bands
        .iter()
        .map(|b| shapes[spec.find(&format!("{}.convt3", b.name)).unwrap()].freq)
        .collect();
    let sum: usize = widths.iter().sum();
    (
        concat.freq == 1025 && sum == 1025,
        format!("band outputs {widths:?}, concat width {}", concat.freq),
    )
}

/// Worst relative error of `grad` against central differences over all entries.
fn worst(loss: impl FnMut(&Tensor<f64>) -> mbrsep::Result<f64>, x: &Tensor<f64>, grad: &Tensor<f64>) -> f64 {
    grad_check(loss, x, grad, 1e-6, 1.0, None).unwrap().max_relative_error
}

/// Probe loss `<y, r> + 0.5 |y|^2` and its gradient.
fn probe(y: &Tensor<f64>, r: &Tensor<f64>) -> (f64, Tensor<f64>) {
    let mut g = r.clone();
    g.add_assign(y).unwrap();
    (y.dot(r).unwrap() + 0.5 * y.dot(y).unwrap(), g)
}

fn layer_gradients() -> f64 {
    let mut err: f64 = 0.0;
    for trial in 0..20u64 {
        let mut r = rng(1000 + trial);
        for transpose in [false, true] {
            let p = ConvParams::new(
                r.gen_range(1..4),
                r.gen_range(1..4),
                (r.gen_range(1..4), r.gen_range(1..5)),
            )
            .with_stride(r.gen_range(1..3), r.gen_range(1..3));
            let x = random(
                Shape::new(2, p.in_channels, r.gen_range(3..7), r.gen_range(4..10)),
                &mut r,
            );
            let w = random(p.weight_shape(), &mut r);
            let b: Vec<f64> = (0..p.out_channels).map(|_| r.gen_range(-1.0..1.0)).collect();
            let fwd = |x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64]| {
                if transpose {
                    conv2d_transpose_forward(x, w, Some(b), &p)
                } else {
                    conv2d_forward(x, w, Some(b), &p)
                }
            };
            let y = fwd(&x, &w, &b).unwrap();
            let rt = random(y.shape(), &mut r);
            let gy = probe(&y, &rt).1;
            let mut layer = ConvLayer::new(p, transpose).unwrap();
            layer.forward(&x, &w, Some(&b)).unwrap();
            let g = layer.backward(&gy, &x, &w).unwrap();
            err = err.max(worst(|x| Ok(probe(&fwd(x, &w, &b)?, &rt).0), &x, &g.input));
            err = err.max(worst(|w| Ok(probe(&fwd(&x, w, &b)?, &rt).0), &w, &g.weights));
            let bt = Tensor::from_vec(Shape::new(1, 1, 1, b.len()), b.clone()).unwrap();
            let gb = Tensor::from_vec(bt.shape(), g.bias.clone()).unwrap();
            err = err.max(worst(|b| Ok(probe(&fwd(&x, &w, b.data())?, &rt).0), &bt, &gb));
        }

        let s = Shape::new(3, 2, 3, 4);
        let x = random(s, &mut r);
        let mut st = BatchNormState::<f64>::new(2, true);
        st.gamma = vec![r.gen_range(0.5..1.5), r.gen_range(0.5..1.5)];
        let fresh = st.clone();
        let (y, cache) = batchnorm_forward(&x, &mut st, BnMode::Train).unwrap();
        let rt = random(s, &mut r);
        let (gx, _, _) = batchnorm_backward(&probe(&y, &rt).1, &cache, &fresh).unwrap();
        err = err.max(worst(
            |x| Ok(probe(&batchnorm_forward(x, &mut fresh.clone(), BnMode::Train)?.0, &rt).0),
            &x,
            &gx,
        ));

        let x = Tensor::from_fn(s, |_, _, _, _| {
            let v: f64 = r.gen_range(0.01..1.0);
            if r.gen_bool(0.5) {
                v
            } else {
                -v
            }
        });
        let gx = relu_backward(&probe(&relu(&x), &rt).1, &x).unwrap();
        err = err.max(worst(|x| Ok(probe(&relu(x), &rt).0), &x, &gx));

        let x = random(Shape::new(2, 1, 2, 5), &mut r);
        let w = random(Shape::new(1, 1, 3, 5), &mut r);
        let b = [0.1, -0.2, 0.3];
        let y = dense_forward(&x, &w, &b).unwrap();
        let rt = random(y.shape(), &mut r);
        let g = dense_backward(&probe(&y, &rt).1, &x, &w).unwrap();
        err = err.max(worst(|x| Ok(probe(&dense_forward(x, &w, &b)?, &rt).0), &x, &g.input));
        err = err.max(worst(|w| Ok(probe(&dense_forward(&x, w, &b)?, &rt).0), &w, &g.weights));
    }
    err
}

fn model_gradients() -> f64 {
    let spec = MbrFcnConfig::shrunken().build().unwrap();
    let mut err: f64 = 0.0;
    for trial in 0..20u64 {
        let mut r = rng(2000 + trial);
        let mut w = init_weights::<f64>(&spec, trial);
        for p in &mut w.params {
            if p.role.trainable() && p.role != ParamRole::Weight {
                p.tensor
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v += r.gen_range(-0.3..0.3));
            }
        }
        let x = Tensor::uniform(spec.input_shape(2), 0.0, 1.0, &mut r);
        let rt = random(spec.input_shape(2), &mut r);
        let mut net = Network::new(spec.clone(), w.clone()).unwrap();
        let y = net.forward(&x, BnMode::Train).unwrap();
        let grads = net.backward(&probe(&y, &rt).1).unwrap();
        let loss = |net: &mut Network<f64>, x: &Tensor<f64>| probe(&net.forward(x, BnMode::Train).unwrap(), &rt).0;
        let picks: Vec<usize> = (0..8).map(|_| r.gen_range(0..x.len())).collect();
        err = err.max(
            grad_check(|xp| Ok(loss(&mut net, xp)), &x, &grads.input, 1e-6, 1.0, Some(&picks))
                .unwrap()
                .max_relative_error,
        );
        for (i, p) in w.params.iter().enumerate() {
            let Some(g) = &grads.params[i] else { continue };
            // a bias feeding batch norm has an identically zero gradient
            if g.max_abs() < 1e-9 {
                continue;
            }
            let picks: Vec<usize> = (0..2).map(|_| r.gen_range(0..p.tensor.len())).collect();
            let rep = grad_check(
                |wp| {
                    net.weights_mut().params[i].tensor = wp.clone();
                    Ok(loss(&mut net, &x))
                },
                &p.tensor,
                g,
                1e-6,
                1.0,
                Some(&picks),
            )
            .unwrap();
            net.weights_mut().params[i].tensor = p.tensor.clone();
            err = err.max(rep.max_relative_error);
        }
    }
    err
}

fn gradient_suite() -> (bool, String) {
    let layers = layer_gradients();
    let model = model_gradients();
    (
        layers < 1e-5 && model < 1e-4,
        format!("worst layer error {layers:.2e} (< 1e-5), shrunken model {model:.2e} (< 1e-4), 20 trials each"),
    )
}

fn stft_round_trip() -> (bool, String) {
    let cfg = StftConfig::default();
    let mut err: f64 = 0.0;
    for seed in 0..10 {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..SAMPLE_RATE as usize).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y = istft(&stft(&AudioClip::new(x.clone(), SAMPLE_RATE), &cfg).unwrap()).unwrap();
        let m = cfg.window_size;
        let (mut e, mut s) = (0.0, 0.0);
        for i in m..y.len() - m {
            e += (y.samples[i] - x[i]).powi(2);
            s += x[i] * x[i];
        }
        err = err.max((e / s).sqrt());
    }
    (err < 1e-6, format!("worst relative RMS error {err:.2e} over 10 clips"))
}

fn adjoint_identity() -> (bool, String) {
    let mut err: f64 = 0.0;
    for trial in 0..20u64 {
        let mut r = rng(3000 + trial);
        let p = ConvParams::new(
            r.gen_range(1..5),
            r.gen_range(1..5),
            (r.gen_range(1..6), r.gen_range(1..8)),
        )
        .with_stride(r.gen_range(1..3), r.gen_range(1..4));
        // lengths tiled by the stride, so the transposed layer maps back onto x's shape
        let (t, f) = (p.stride_time * r.gen_range(2..6), p.stride_freq * r.gen_range(3..10));
        let x = random(Shape::new(2, p.in_channels, t, f), &mut r);
        let w = random(p.weight_shape(), &mut r);
        let cx = conv2d_forward(&x, &w, None, &p).unwrap();
        let y = random(cx.shape(), &mut r);
        let pt = ConvParams {
            in_channels: p.out_channels,
            out_channels: p.in_channels,
            ..p
        };
        let wt = Tensor::from_fn(pt.weight_shape(), |i, o, t, f| w.at(o, i, t, f));
        let ct = conv2d_transpose_forward(&y, &wt, None, &pt).unwrap();
        assert_eq!(ct.shape(), x.shape());
        let (a, b) = (cx.dot(&y).unwrap(), x.dot(&ct).unwrap());
        err = err.max((a - b).abs() / a.abs().max(1.0));
    }
    (
        err < 1e-10,
        format!("worst |<conv x, y> - <x, convT y>| {err:.2e} over 20 cases"),
    )
}

/// Eight 29-frame patches of one toy song: mixture magnitudes in, vocal out.
fn overfit_batch() -> (Tensor<f32>, Tensor<f32>) {
    let song = toy_song(7, 0, 6.0);
    let cfg = StftConfig::default();
    let mix = stft(&AudioClip::new(song.mixture(), SAMPLE_RATE), &cfg).unwrap();
    let voc = stft(&AudioClip::new(song.vocal.clone(), SAMPLE_RATE), &cfg).unwrap();
    let take = |s: &Spectrogram| {
        let p = segment::<f32>(s, DEFAULT_PATCH_FRAMES, DEFAULT_PATCH_FRAMES, SegmentMode::Train).unwrap();
        let shape = p.tensor.shape().with_batch(8);
        Tensor::from_vec(shape, p.tensor.data()[..shape.len()].to_vec()).unwrap()
    };
    (take(&mix), take(&voc))
}

fn single_batch_overfit() -> (bool, String) {
    let (x, y) = overfit_batch();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut step_secs = Vec::new();
    for kind in ModelKind::ALL {
        let spec = build(kind);
        let mut net = Network::new(spec.clone(), init_weights::<f32>(&spec, 1)).unwrap();
        let mut opt = Optimizer::new(net.weights(), AdamConfig::default());
        let t = Instant::now();
        let (mut first, mut last, mut steps) = (0.0, 0.0, 0);
        for step in 0..=500 {
            let (loss, g) = net.mse_step(&x, &y).unwrap();
            if step == 0 {
                first = loss;
            }
            last = loss;
            steps = step;
            if loss * 100.0 <= first || step == 500 {
                break;
            }
            opt.step(net.weights_mut(), &g).unwrap();
        }
        let secs = t.elapsed().as_secs_f64();
        let ratio = first / last;
        ok &= ratio >= 100.0;
        step_secs.push((kind, secs / (steps + 1) as f64));
        parts.push(format!("{kind} {ratio:.1}x after {steps} steps ({secs:.0} s)"));
    }
    let mbr = step_secs[0].1;
    let cheapest = step_secs
        .iter()
        .filter(|(k, _)| *k != ModelKind::Dnn)
        .all(|&(_, s)| mbr <= s);
    ok &= cheapest;
    let per_step: Vec<String> = step_secs.iter().map(|(k, s)| format!("{k} {s:.2}")).collect();
    parts.push(format!("s/step: {}", per_step.join(", ")));
    (ok, parts.join("; "))
}

fn orthonormal(mut v: Vec<f64>, basis: &[&[f64]]) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for b in basis {
        let c = dot(&v, b);
        v.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= c * y);
    }
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn bss_oracles() -> (bool, String) {
    let mut r = rng(4);
    let mut noise = |n: usize| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let s1 = noise(8000);
    let s2 = noise(8000);
    let perfect = bss_eval(&s1, &[&s1, &s2], 0, DEFAULT_FILTER_LEN).unwrap().capped();
    let a = orthonormal(noise(4000), &[]);
    let b = orthonormal(noise(4000), &[&a]);
    let est: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + 0.5 * y).collect();
    let d = bss_decompose(&est, &[&a, &b], 0, 1).unwrap();
    let res = bss_eval(&est, &[&a, &b], 0, 1).unwrap();
    let ([sdr, sir, sar], _) = res.capped();
    let artif = d.e_artif.iter().all(|&v| v.abs() < 1e-9);
    let ok = perfect == ([CAP_DB; 3], true)
        && (sdr - 6.02).abs() <= 0.01
        && (sir - 6.02).abs() <= 0.01
        && sar == CAP_DB
        && artif;
    (
        ok,
        format!(
            "perfect {:?}; s1 + 0.5 s2: SDR {sdr:.4} SIR {sir:.4} SAR {sar}",
            perfect.0
        ),
    )
}

fn wilcoxon_exact() -> (bool, String) {
    let p = |n: usize| {
        let a: Vec<f64> = (1..=n).map(|i| i as f64 + 0.5).collect();
        let b = vec![0.0; n];
        wilcoxon_signed_rank(&a, &b).unwrap().p_value
    };
    let (p5, p6) = (p(5), p(6));
    (
        rel_close(p5, 0.0625, 1e-12) && rel_close(p6, 0.03125, 1e-12),
        format!("n=5 p={p5}, n=6 p={p6}"),
    )
}

fn checkpoint_round_trip() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    for kind in [ModelKind::MbrFcn, ModelKind::Dnn] {
        let spec = build(kind);
        let weights = init_weights::<f32>(&spec, 3);
        let x = Tensor::<f32>::uniform(spec.input_shape(1), 0.0, 1.0, &mut rng(5));
        let before = Network::new(spec.clone(), weights.clone())
            .unwrap()
            .predict(&x)
            .unwrap();
        let ckpt = Checkpoint {
            meta: CheckpointMeta {
                spec: spec.clone(),
                config: None,
                epoch: 0,
                best_valid_loss: None,
                learning_rate: 1e-4,
                adam_step: 0,
                seed: 3,
            },
            weights,
            optimizer: None,
        };
        let path = dir.path().join(format!("{kind}.ckpt"));
        ckpt.save(&path).unwrap();
        let back = Checkpoint::<f32>::load(&path).unwrap();
        let after = Network::new(spec, back.weights).unwrap().predict(&x).unwrap();
        ok &= before
            .data()
            .iter()
            .zip(after.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    (
        ok,
        "MBR-FCN and DNN forward outputs before and after save/load compared bit by bit".into(),
    )
}

fn end_to_end() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = cmd_synth(&data, 12, 10.0, 0).unwrap();
    let counts: Vec<usize> = [Split::Train, Split::Valid, Split::Test]
        .iter()
        .map(|&s| manifest.split(s).len())
        .collect();
    let config = TrainConfig {
        batch_size: 8,
        max_epochs: 30,
        ..TrainConfig::default()
    };
    let ckpt = dir.path().join("mbr-fcn.ckpt");
    let report = cmd_train(&config, &manifest, &ckpt).unwrap();
    let est = dir.path().join("estimates");
    std::fs::create_dir_all(&est).unwrap();
    for e in manifest.split(Split::Test) {
        let out = est.join(format!("{}.wav", e.song_id()));
        cmd_separate(&ckpt, &manifest.resolve(&e.mixture_path), &out, Some(ModelKind::MbrFcn)).unwrap();
    }
    let eval = cmd_evaluate(
        &manifest,
        &est,
        "mbr-fcn",
        DEFAULT_FILTER_LEN,
        true,
        &dir.path().join("eval"),
    )
    .unwrap();
    let median = |label: &str| {
        eval.summaries
            .iter()
            .find(|s| s.model == label)
            .and_then(|s| s.sdr_db)
            .map(|q| q.median)
            .unwrap_or(f64::NAN)
    };
    let (model, mixture) = (median("mbr-fcn"), median(MIXTURE_LABEL));
    (
        counts == [8, 2, 2] && eval.missing.is_empty() && model > mixture,
        format!(
            "split {counts:?}; best epoch {}/{}; median test SDR {model:.2} dB vs mixture {mixture:.2} dB",
            report.best_epoch,
            report.history.len()
        ),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, f64, Check); 10] = [
        ("param_counts", 1.0, param_counts),
        ("band_arithmetic", 1.0, band_arithmetic),
        ("gradient_suite", 120.0, gradient_suite),
        ("stft_round_trip", 10.0, stft_round_trip),
        ("adjoint_identity", 5.0, adjoint_identity),
        ("bss_oracles", 5.0, bss_oracles),
        ("wilcoxon_exact", 1.0, wilcoxon_exact),
        ("checkpoint_round_trip", 5.0, checkpoint_round_trip),
        ("single_batch_overfit", 900.0, single_batch_overfit),
        ("end_to_end", 3600.0, end_to_end),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = check();
        let secs = t.elapsed().as_secs_f64();
        let in_time = secs < budget;
        let pass = ok && in_time;
        failed += usize::from(!pass);
        let timing = if in_time {
            format!("{secs:.1} s < {budget} s")
        } else {
            format!("{secs:.1} s OVER {budget} s")
        };
        println!("{} {name}: {detail} [{timing}]", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
