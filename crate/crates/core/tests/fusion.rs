mod common;

use common::*;
use mmfuse::data::ModalityScores;
use mmfuse::fusion::{train_fusion, FusionModel, FusionTrainConfig};
use mmfuse::{Error, Tensor};

fn ms(modality: &str, ids: &[&str], rows: &[[f64; 2]]) -> ModalityScores {
    ModalityScores::new(
        modality,
        vec!["a".into(), "b".into()],
        ids.iter().map(|s| s.to_string()).collect(),
        Tensor::from_rows(rows).unwrap(),
    )
    .unwrap()
}

#[test]
fn fusion_aligns_ids_and_rejects_gaps() {
    let model =
        FusionModel::new(vec!["x".into(), "y".into()], vec!["a".into(), "b".into()]).unwrap();
    let x = ms("x", &["1", "2"], &[[1.0, 2.0], [3.0, 4.0]]);
    let y = ms("y", &["2", "1"], &[[30.0, 40.0], [10.0, 20.0]]);
    let fused = model.fuse(&[y.clone(), x.clone()]).unwrap();
    assert_eq!(fused.ids, vec!["1", "2"]);
    assert_eq!(fused.scores.row(0), &[5.5, 11.0]);

    let partial = ms("y", &["1"], &[[0.0, 0.0]]);
    assert!(matches!(
        model.fuse(&[x.clone(), partial]),
        Err(Error::MissingModality { .. })
    ));
    let extra = ms("y", &["1", "2", "3"], &[[0.0; 2], [0.0; 2], [0.0; 2]]);
    assert!(matches!(
        model.fuse(&[x.clone(), extra]),
        Err(Error::MissingModality { .. })
    ));
    assert!(model.fuse(&[x]).is_err());
    assert!(FusionModel::new(vec!["x".into()], vec!["a".into()]).is_err());
    assert!(FusionModel::new(vec!["x".into(), "x".into()], vec!["a".into()]).is_err());
}

#[test]
fn trained_fusion_round_trips_and_beats_uniform() {
    let (m, y) = signal_noise_scores(300, 3, 12);
    let ids: Vec<String> = (0..300).map(|i| format!("s{i}")).collect();
    let names = vec!["c0".to_string(), "c1".into(), "c2".into()];
    let inputs: Vec<ModalityScores> = ["sig", "noise"]
        .iter()
        .zip(&m)
        .map(|(n, t)| ModalityScores::new(*n, names.clone(), ids.clone(), t.clone()).unwrap())
        .collect();
    let mods = vec!["sig".to_string(), "noise".into()];
    let (model, hist) =
        train_fusion(&inputs, mods.clone(), &y, &FusionTrainConfig::default()).unwrap();
    assert!(hist.fit_loss.first().unwrap() > hist.fit_loss.last().unwrap());
    let uniform = FusionModel::new(mods, names).unwrap();
    let map =
        |f: &FusionModel| mmfuse::metrics::macro_map(&f.fuse(&inputs).unwrap().scores, &y).unwrap();
    assert!(map(&model) > map(&uniform));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fusion.json");
    model.save(&path).unwrap();
    let back = FusionModel::load(&path).unwrap();
    assert_eq!(back.alpha().unwrap(), model.alpha().unwrap());
}
