//! Shared helpers for integration tests: finite-difference gradient
//! checks, brute-force metric oracles and synthetic data builders.
#![allow(dead_code)]

use std::path::Path;

use mmfuse::data::{write_tensor, Genre, Manifest, Modality, Record, Split};
use mmfuse::nn::{softmax_ce_loss, weighted_bce_loss, Layer, LayerStack, Mode};
use mmfuse::{Parameter, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::PathBuf;

pub const FD_EPS: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// `||a - n|| / (||a|| + ||n||)` over a whole gradient tensor; zero when
/// both gradients vanish.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` at every coordinate of `x`.
pub fn numeric_grad(x: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.numel())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + FD_EPS;
            let up = f(&probe);
            probe.data_mut()[i] = orig - FD_EPS;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * FD_EPS)
        })
        .collect()
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Checks the input gradient and every parameter gradient of `stack` for
/// the objective `sum(stack(x) * r)` with a fixed random `r`. In training
/// mode the RNG is reseeded before each pass so dropout masks stay fixed.
/// Returns `(name, relative error)` per checked tensor.
pub fn check_stack(stack: &LayerStack, x: &Tensor, mode: Mode, seed: u64) -> Vec<(String, f64)> {
    let forward = |s: &LayerStack, x: &Tensor| {
        let mut r = rng(seed);
        s.forward_traced(x, mode, &mut r).unwrap()
    };
    let (out, trace) = forward(stack, x);
    let r = random_tensor(out.shape(), &mut rng(seed ^ 0x5eed));
    let mut analytic = stack.clone();
    analytic.zero_grad();
    let dx = analytic.backward(&trace, &r).unwrap();

    let mut results = vec![(
        "input".to_string(),
        rel_error(
            dx.data(),
            &numeric_grad(x, |xp| dot(&forward(stack, xp).0, &r)),
        ),
    )];
    let grads: Vec<Tensor> = analytic.params().iter().map(|p| p.grad.clone()).collect();
    for (pi, grad) in grads.iter().enumerate() {
        let value = stack.params()[pi].value.clone();
        let numeric = numeric_grad(&value, |v| {
            let mut s = stack.clone();
            s.params_mut()[pi].value = v.clone();
            dot(&forward(&s, x).0, &r)
        });
        results.push((format!("param{pi}"), rel_error(grad.data(), &numeric)));
    }
    results
}

pub fn single(input: usize, layer: Layer) -> LayerStack {
    LayerStack::new(input, vec![layer]).unwrap()
}

/// Every gradient check required of the layer library, as
/// `(case, worst relative error)`.
pub fn gradient_suite() -> Vec<(String, f64)> {
    let mut r = rng(11);
    let mut cases: Vec<(String, LayerStack, Tensor, Mode)> = vec![
        (
            "affine".into(),
            single(5, Layer::affine(5, 4, &mut r).unwrap()),
            random_tensor(&[3, 5], &mut r),
            Mode::Eval,
        ),
        (
            "temporal conv n=2 stride 1".into(),
            single(4, Layer::temporal_conv(2, 4, 3, 1, &mut r).unwrap()),
            random_tensor(&[6, 4], &mut r),
            Mode::Eval,
        ),
        (
            "temporal conv n=3 stride 2".into(),
            single(3, Layer::temporal_conv(3, 3, 5, 2, &mut r).unwrap()),
            random_tensor(&[6, 3], &mut r),
            Mode::Eval,
        ),
        (
            "mean pool".into(),
            single(6, Layer::MeanPool),
            random_tensor(&[5, 6], &mut r),
            Mode::Eval,
        ),
        (
            "lstm".into(),
            single(4, Layer::lstm(4, 5, &mut r).unwrap()),
            random_tensor(&[6, 4], &mut r),
            Mode::Eval,
        ),
        (
            "lstm T=1".into(),
            single(3, Layer::lstm(3, 2, &mut r).unwrap()),
            random_tensor(&[1, 3], &mut r),
            Mode::Eval,
        ),
        (
            "bilstm".into(),
            single(3, Layer::bilstm(3, 4, &mut r).unwrap()),
            random_tensor(&[5, 3], &mut r),
            Mode::Eval,
        ),
        (
            "dropout off".into(),
            single(4, Layer::Dropout { rate: 0.5 }),
            random_tensor(&[3, 4], &mut r),
            Mode::Eval,
        ),
        (
            "dropout fixed mask".into(),
            single(4, Layer::Dropout { rate: 0.5 }),
            random_tensor(&[3, 4], &mut r),
            Mode::Train,
        ),
        (
            "sigmoid".into(),
            single(4, Layer::Sigmoid),
            random_tensor(&[2, 4], &mut r),
            Mode::Eval,
        ),
        (
            "softmax".into(),
            single(5, Layer::Softmax),
            random_tensor(&[2, 5], &mut r),
            Mode::Eval,
        ),
    ];
    let encoder = LayerStack::new(
        4,
        vec![
            Layer::temporal_conv(2, 4, 6, 1, &mut r).unwrap(),
            Layer::lstm(6, 3, &mut r).unwrap(),
            Layer::Dropout { rate: 0.3 },
            Layer::affine(3, 4, &mut r).unwrap(),
        ],
    )
    .unwrap();
    cases.push((
        "conv+lstm+dropout+affine stack".into(),
        encoder,
        random_tensor(&[6, 4], &mut r),
        Mode::Train,
    ));
    let pooled = LayerStack::new(
        5,
        vec![
            Layer::MeanPool,
            Layer::Dropout { rate: 0.5 },
            Layer::affine(5, 3, &mut r).unwrap(),
        ],
    )
    .unwrap();
    cases.push((
        "fastText stack".into(),
        pooled,
        random_tensor(&[4, 5], &mut r),
        Mode::Eval,
    ));

    let mut out: Vec<(String, f64)> = cases
        .into_iter()
        .enumerate()
        .map(|(i, (name, stack, x, mode))| {
            let worst = check_stack(&stack, &x, mode, 100 + i as u64)
                .into_iter()
                .map(|(_, e)| e)
                .fold(0.0, f64::max);
            (name, worst)
        })
        .collect();

    // losses
    let logits = random_tensor(&[4, 6], &mut r)
        .data()
        .iter()
        .map(|v| 3.0 * v)
        .collect::<Vec<_>>();
    let logits = Tensor::new(vec![4, 6], logits).unwrap();
    let labels = Tensor::new(
        vec![4, 6],
        (0..24).map(|i| ((i * 7) % 3 == 0) as u8 as f64).collect(),
    )
    .unwrap();
    let cw = Tensor::vector(vec![0.5, 1.0, 2.0, 3.5, 1.0, 10.0]).unwrap();
    let (_, g) = weighted_bce_loss(&logits, &labels, &cw).unwrap();
    let num = numeric_grad(&logits, |z| weighted_bce_loss(z, &labels, &cw).unwrap().0);
    out.push(("weighted BCE".into(), rel_error(g.data(), &num)));
    let classes = [0usize, 5, 2, 2];
    let (_, g) = softmax_ce_loss(&logits, &classes).unwrap();
    let num = numeric_grad(&logits, |z| softmax_ce_loss(z, &classes).unwrap().0);
    out.push(("softmax CE".into(), rel_error(g.data(), &num)));

    // fusion weights
    let scores: Vec<Tensor> = (0..3).map(|_| random_tensor(&[5, 4], &mut r)).collect();
    let y = Tensor::new(
        vec![5, 4],
        (0..20).map(|i| (i % 3 == 1) as u8 as f64).collect(),
    )
    .unwrap();
    let cw = Tensor::vector(vec![1.0, 2.0, 0.5, 4.0]).unwrap();
    let w = random_tensor(&[4, 3], &mut r);
    let names = |n: usize, p: &str| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let model =
        mmfuse::fusion::FusionModel::with_weights(names(3, "m"), names(4, "c"), w.clone()).unwrap();
    let (_, dw) = model.loss_and_grad(&scores, &y, &cw).unwrap();
    let num = numeric_grad(&w, |wp| {
        let m = mmfuse::fusion::FusionModel::with_weights(names(3, "m"), names(4, "c"), wp.clone())
            .unwrap();
        m.loss_and_grad(&scores, &y, &cw).unwrap().0
    });
    out.push(("fusion attention".into(), rel_error(dw.data(), &num)));
    out
}

/// Definition-literal AP: precision at the rank of every positive,
/// averaged; ranks by score descending, ties by index ascending.
pub fn oracle_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n = scores.len();
    let rank = |i: usize| {
        1 + (0..n)
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let pos: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    if pos.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for &i in &pos {
        let r = rank(i);
        let hits = pos.iter().filter(|&&j| rank(j) <= r).count();
        total += hits as f64 / r as f64;
    }
    Some(total / pos.len() as f64)
}

pub fn column(t: &Tensor, j: usize) -> Vec<f64> {
    (0..t.rows()).map(|i| t.row(i)[j]).collect()
}

pub fn bool_column(t: &Tensor, j: usize) -> Vec<bool> {
    (0..t.rows()).map(|i| t.row(i)[j] > 0.5).collect()
}

pub fn oracle_map(s: &Tensor, y: &Tensor) -> f64 {
    let aps: Vec<f64> = (0..s.cols())
        .filter_map(|j| oracle_ap(&column(s, j), &bool_column(y, j)))
        .collect();
    aps.iter().sum::<f64>() / aps.len() as f64
}

pub fn oracle_micro(s: &Tensor, y: &Tensor) -> f64 {
    let flat_y: Vec<bool> = y.data().iter().map(|&v| v > 0.5).collect();
    oracle_ap(s.data(), &flat_y).unwrap()
}

pub fn oracle_sample(s: &Tensor, y: &Tensor) -> f64 {
    let aps: Vec<f64> = (0..s.rows())
        .filter_map(|i| {
            let l: Vec<bool> = y.row(i).iter().map(|&v| v > 0.5).collect();
            oracle_ap(s.row(i), &l)
        })
        .collect();
    aps.iter().sum::<f64>() / aps.len() as f64
}

/// Random multi-label instance with at least one positive per class and
/// per sample; scores drawn from a small grid so ties occur.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Tensor, Tensor) {
    let b = rng.gen_range(2..25);
    let k = rng.gen_range(1..6);
    let mut y = Tensor::zeros(&[b, k]);
    for i in 0..b {
        for j in 0..k {
            y.row_mut(i)[j] = rng.gen_bool(0.35) as u8 as f64;
        }
        let j = rng.gen_range(0..k);
        y.row_mut(i)[j] = 1.0;
    }
    for j in 0..k {
        if !bool_column(&y, j).contains(&true) {
            let i = rng.gen_range(0..b);
            y.row_mut(i)[j] = 1.0;
        }
    }
    let tied = rng.gen_bool(0.5);
    let s = Tensor::new(
        vec![b, k],
        (0..b * k)
            .map(|_| {
                if tied {
                    rng.gen_range(0..5) as f64 / 4.0
                } else {
                    rng.gen_range(-3.0..3.0)
                }
            })
            .collect(),
    )
    .unwrap();
    (s, y)
}

/// Complementary modality scores: modality `m` carries signal for classes
/// `{2m, 2m+1}` of six and pure noise elsewhere. Returns the per-modality
/// score matrices and labels.
pub fn complementary_scores(n: usize, seed: u64) -> (Vec<Tensor>, Tensor) {
    let mut r = rng(seed);
    let k = 6;
    let y = Tensor::new(
        vec![n, k],
        (0..n * k).map(|_| r.gen_bool(0.3) as u8 as f64).collect(),
    )
    .unwrap();
    let mats = (0..3)
        .map(|m| {
            let mut s = Tensor::zeros(&[n, k]);
            for i in 0..n {
                for j in 0..k {
                    let noise: f64 = r.gen_range(-1.0..1.0) + r.gen_range(-1.0..1.0);
                    s.row_mut(i)[j] = if j / 2 == m {
                        2.0 * (2.0 * y.row(i)[j] - 1.0) + noise
                    } else {
                        noise
                    };
                }
            }
            s
        })
        .collect();
    (mats, y)
}

/// Two modalities over `k` classes: the first informative, the second
/// noise.
pub fn signal_noise_scores(n: usize, k: usize, seed: u64) -> (Vec<Tensor>, Tensor) {
    let mut r = rng(seed);
    let y = Tensor::new(
        vec![n, k],
        (0..n * k).map(|_| r.gen_bool(0.3) as u8 as f64).collect(),
    )
    .unwrap();
    let mut signal = Tensor::zeros(&[n, k]);
    let mut noise = Tensor::zeros(&[n, k]);
    for i in 0..n {
        for j in 0..k {
            signal.row_mut(i)[j] = 2.0 * (2.0 * y.row(i)[j] - 1.0) + r.gen_range(-1.5..1.5);
            noise.row_mut(i)[j] = r.gen_range(-2.0..2.0);
        }
    }
    (vec![signal, noise], y)
}

/// Variable-length sequences whose mean is linearly separable: class `c`
/// shifts coordinate `c` by `+-1.5` before per-step noise.
pub fn separable_sequences(n: usize, k: usize, d: usize, seed: u64) -> (Vec<Tensor>, Tensor) {
    let mut r = rng(seed);
    let mut xs = Vec::with_capacity(n);
    let mut y = Tensor::zeros(&[n, k]);
    for i in 0..n {
        let labels: Vec<f64> = (0..k).map(|_| r.gen_bool(0.4) as u8 as f64).collect();
        y.row_mut(i).copy_from_slice(&labels);
        let t = r.gen_range(3..12);
        let mut x = Tensor::zeros(&[t, d]);
        for s in 0..t {
            for (c, v) in x.row_mut(s).iter_mut().enumerate() {
                let shift = labels.get(c).map_or(0.0, |&l| 1.5 * (2.0 * l - 1.0));
                *v = shift + r.gen_range(-1.0..1.0);
            }
        }
        xs.push(x);
    }
    (xs, y)
}

/// Writes a toy dataset (manifest, 300-d text tensors and 4096-d video
/// tensors) whose genres are encoded in the first few feature dimensions.
pub fn write_toy_dataset(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut r = rng(seed);
    let splits = [
        Split::Train,
        Split::Train,
        Split::Train,
        Split::Val,
        Split::Test,
    ];
    let mut records = Vec::new();
    for i in 0..n {
        let id = format!("m{i:03}");
        let genres: Vec<Genre> = Genre::ALL
            .iter()
            .copied()
            .filter(|g| g.index() < 4 && r.gen_bool(0.4))
            .collect();
        let genres = if genres.is_empty() {
            vec![Genre::Drama]
        } else {
            genres
        };
        let signal = |d: usize, r: &mut ChaCha8Rng| {
            (0..d)
                .map(|c| {
                    let base =
                        Genre::ALL
                            .get(c)
                            .map_or(0.0, |g| if genres.contains(g) { 1.0 } else { -1.0 });
                    base + r.gen_range(-0.5..0.5)
                })
                .collect::<Vec<f64>>()
        };
        let t_text = r.gen_range(4..10);
        let text: Vec<Vec<f64>> = (0..t_text).map(|_| signal(300, &mut r)).collect();
        let t_video = r.gen_range(3..8);
        let video: Vec<Vec<f64>> = (0..t_video).map(|_| signal(4096, &mut r)).collect();
        let text_path = format!("text/{id}.mft");
        let video_path = format!("video/{id}.mft");
        std::fs::create_dir_all(dir.join("text")).unwrap();
        std::fs::create_dir_all(dir.join("video")).unwrap();
        write_tensor(&dir.join(&text_path), &Tensor::from_rows(&text).unwrap()).unwrap();
        write_tensor(&dir.join(&video_path), &Tensor::from_rows(&video).unwrap()).unwrap();
        let mut features = BTreeMap::new();
        features.insert(Modality::Text, PathBuf::from(text_path));
        features.insert(Modality::Video, PathBuf::from(video_path));
        records.push(Record {
            id,
            split: splits[i % splits.len()],
            genres,
            budget_usd: Some(1_000_000 * (i as u64 % 90 + 1)),
            features,
        });
    }
    let path = dir.join("manifest.jsonl");
    Manifest::new(records).unwrap().save(&path).unwrap();
    path
}

pub fn param_values(p: &[&Parameter]) -> Vec<f64> {
    p.iter().flat_map(|p| p.value.data().to_vec()).collect()
}
