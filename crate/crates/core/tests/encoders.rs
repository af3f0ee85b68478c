mod common;

use common::*;
use mmfuse::data::{Embeddings, Modality};
use mmfuse::encoders::{
    bucket_batches, clip_layout, dataset_loss, prepare_plot, subsample_indices, train_encoder,
    Aggregator, Dataset, Encoder, EncoderConfig, FeatureSequence, Ngram, Targets, TrainParams,
};
use mmfuse::metrics::macro_map;
use mmfuse::Tensor;
use proptest::prelude::*;

#[test]
fn subsampling_schedule() {
    assert_eq!(subsample_indices(35), vec![0, 10, 20, 30]);
    let long = subsample_indices(5000);
    assert_eq!(long.len(), 200);
    assert!(long.iter().all(|i| i % 10 == 0));
    // 2100 frames: 200 from the first pass already
    assert_eq!(subsample_indices(2100).len(), 200);
    // 900 frames: 90 at stride 10, then stride 6 from frame 200 until the end
    let mid = subsample_indices(900);
    assert_eq!(&mid[..3], &[0, 10, 20]);
    assert_eq!(mid[90], 200);
    assert_eq!(mid[91], 206);
    assert!(mid.len() <= 200 && *mid.last().unwrap() < 900);
}

#[test]
fn clip_layout_keeps_clips_that_fit() {
    assert!(clip_layout(48).is_empty());
    assert_eq!(clip_layout(200).len(), 16);
    let c = clip_layout(100);
    assert!(c.iter().all(|&(s, l)| s + l <= 100));
    assert_eq!(c.iter().filter(|c| c.1 == 49).count(), 2);
}

#[test]
fn plots_become_word_vector_sequences() {
    let mut g = Embeddings::new(300);
    g.insert("storm", &[1.0; 300]).unwrap();
    g.insert("sea", &[2.0; 300]).unwrap();
    let (seq, _) = prepare_plot("p", "A storm at sea. The STORM!", &g).unwrap();
    assert_eq!(seq.data.shape(), [3, 300]);
    assert_eq!(seq.data.row(1)[0], 2.0);
    assert!(prepare_plot("p", "nothing known here", &g).is_err());
}

proptest! {
    #[test]
    fn buckets_partition_the_indices(
        lengths in prop::collection::vec(1usize..500, 1..300),
        batch in 1usize..40,
        factor in 1usize..10,
        seed in any::<u64>(),
    ) {
        let batches = bucket_batches(&lengths, batch, factor, &mut rng(seed));
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..lengths.len()).collect::<Vec<_>>());
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
    }
}

#[test]
fn buckets_group_similar_lengths() {
    let mut r = rng(9);
    let lengths: Vec<usize> = (0..1024).map(|i| (i * 7919) % 1000 + 1).collect();
    let spread = |bs: &[Vec<usize>]| {
        bs.iter()
            .map(|b| {
                let l: Vec<usize> = b.iter().map(|&i| lengths[i]).collect();
                (l.iter().max().unwrap() - l.iter().min().unwrap()) as f64
            })
            .sum::<f64>()
            / bs.len() as f64
    };
    let bucketed = bucket_batches(&lengths, 32, 8, &mut r);
    let plain = bucket_batches(&lengths, 32, 1, &mut r);
    assert!(spread(&bucketed) < 0.5 * spread(&plain));
}

/// Variable-length sequences whose class shows as a shifted coordinate.
fn sequences(n: usize, d: usize, seed: u64) -> (Vec<Tensor>, Vec<usize>) {
    use rand::Rng;
    let mut r = rng(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let xs = labels
        .iter()
        .map(|&c| {
            let t = r.gen_range(2..9);
            let mut x = random_tensor(&[t, d], &mut r);
            for i in 0..t {
                x.row_mut(i)[c] += 2.0;
            }
            x
        })
        .collect();
    (xs, labels)
}

#[test]
fn single_label_training_reduces_cross_entropy() {
    let (xs, labels) = sequences(120, 8, 2);
    let targets = Targets::SingleLabel(labels);
    let cfg = EncoderConfig {
        input_dim: 8,
        num_classes: 3,
        dropout: 0.0,
        ..EncoderConfig::default()
    };
    let before = dataset_loss(
        &Encoder::new(cfg.clone(), 4).unwrap(),
        Dataset::new(&xs, &targets).unwrap(),
        None,
    )
    .unwrap();
    let params = TrainParams {
        epochs: 30,
        lr0: 0.01,
        seed: 4,
        ..TrainParams::default()
    };
    let (model, hist) =
        train_encoder(cfg, Dataset::new(&xs, &targets).unwrap(), None, &params).unwrap();
    let after = dataset_loss(&model, Dataset::new(&xs, &targets).unwrap(), None).unwrap();
    assert!(after < 0.5 * before, "{before} -> {after}");
    assert_eq!(hist.train_loss.len(), 30);
    assert!(hist.val_loss.iter().all(Option::is_none));
}

#[test]
fn recurrent_and_conv_aggregators_learn() {
    for aggregator in [Aggregator::Lstm, Aggregator::Bilstm, Aggregator::Conv1dPool] {
        let (xs, y) = separable_sequences(160, 3, 6, 5);
        let cfg = EncoderConfig {
            input_dim: 6,
            num_classes: 3,
            aggregator,
            hidden: 12,
            dropout: 0.0,
            ..EncoderConfig::default()
        };
        let params = TrainParams {
            epochs: 40,
            lr0: 0.01,
            seed: 1,
            clip_lengths: vec![4, 6],
            ..TrainParams::default()
        };
        let t = Targets::MultiLabel(y.clone());
        let (model, _) = train_encoder(cfg, Dataset::new(&xs, &t).unwrap(), None, &params).unwrap();
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| model.logits(x).unwrap()).collect();
        let map = macro_map(&Tensor::from_rows(&rows).unwrap(), &y).unwrap();
        assert!(map > 0.9, "{aggregator:?}: train mAP {map}");
    }
}

#[test]
fn training_is_seeded_and_models_round_trip() {
    let (xs, labels) = sequences(60, 5, 3);
    let t = Targets::SingleLabel(labels);
    let cfg = EncoderConfig {
        input_dim: 5,
        num_classes: 3,
        ..EncoderConfig::default()
    };
    let params = TrainParams {
        epochs: 5,
        seed: 8,
        ..TrainParams::default()
    };
    let (a, ha) =
        train_encoder(cfg.clone(), Dataset::new(&xs, &t).unwrap(), None, &params).unwrap();
    let (b, hb) = train_encoder(cfg, Dataset::new(&xs, &t).unwrap(), None, &params).unwrap();
    assert_eq!(ha.train_loss, hb.train_loss);
    assert_eq!(
        param_values(&a.stack.params()),
        param_values(&b.stack.params())
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    a.save(&path).unwrap();
    let back = Encoder::load(&path).unwrap();
    assert_eq!(back.logits(&xs[0]).unwrap(), a.logits(&xs[0]).unwrap());
}

#[test]
fn modality_widths_are_checked() {
    let err = FeatureSequence::new(Modality::Text, Tensor::zeros(&[4, 299]), "bad").unwrap_err();
    assert!(err.to_string().contains("bad") || err.to_string().contains("299"));
    let enc = Encoder::new(EncoderConfig::text(Ngram::Trigram, 13), 0).unwrap();
    assert!(enc.logits(&Tensor::zeros(&[2, 300])).is_err());
    assert_eq!(enc.logits(&Tensor::zeros(&[3, 300])).unwrap().len(), 13);
}
