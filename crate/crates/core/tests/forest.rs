mod common;

use std::path::Path;

use common::rng;
use mmfuse::data::Embeddings;
use mmfuse::forest::{
    encode_metadata, forest_scores, prob_to_logit, train_forest, CategoryVocab, ForestParams,
    MetadataTable, METADATA_WIDTH, MISSING,
};
use mmfuse::Tensor;
use rand::Rng;

fn noisy_data(n: usize, f: usize, seed: u64) -> (Tensor, Tensor) {
    let mut r = rng(seed);
    let x = Tensor::new(
        vec![n, f],
        (0..n * f).map(|_| r.gen_range(0.0..10.0)).collect(),
    )
    .unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let a = (x.row(i)[0] + r.gen_range(-2.0..2.0) > 5.0) as u8 as f64;
            let b = (x.row(i)[1] < 3.0) as u8 as f64;
            vec![a, b, 0.0]
        })
        .collect();
    (x, Tensor::from_rows(&rows).unwrap())
}

#[test]
fn monotone_feature_transforms_do_not_change_training_votes() {
    let (x, y) = noisy_data(60, 4, 1);
    let mut warped = x.clone();
    for i in 0..warped.rows() {
        for v in warped.row_mut(i) {
            *v = v.powi(3) + 7.0;
        }
    }
    // without bootstrap every row is in-bag, so midpoint thresholds induce
    // the same partitions before and after the warp
    let params = ForestParams {
        n_trees: 25,
        bootstrap: false,
        ..ForestParams::default()
    };
    let a = train_forest(&x, &y, &params, 5)
        .unwrap()
        .predict(&x)
        .unwrap();
    let b = train_forest(&warped, &y, &params, 5)
        .unwrap()
        .predict(&warped)
        .unwrap();
    assert_eq!(a, b);
}

#[test]
fn vote_fractions_count_tree_votes() {
    let (x, y) = noisy_data(20, 3, 2);
    let forest = train_forest(
        &x,
        &y,
        &ForestParams {
            n_trees: 15,
            ..ForestParams::default()
        },
        0,
    )
    .unwrap();
    for i in 0..20 {
        let s = x.row(i);
        let fr = forest.vote_fractions(s);
        for (label, trees) in forest.labels.iter().enumerate() {
            if trees.is_empty() {
                assert_eq!(fr[label], 0.0);
                continue;
            }
            let votes = trees.iter().filter(|t| t.predict_proba(s) > 0.5).count();
            assert_eq!(fr[label], votes as f64 / trees.len() as f64);
        }
    }
    // label 2 has no positives
    assert!(forest.labels[2].is_empty());
}

#[test]
fn seeded_training_is_reproducible_and_serializable() {
    let (x, y) = noisy_data(40, 5, 3);
    let params = ForestParams {
        n_trees: 10,
        ..ForestParams::default()
    };
    let f1 = train_forest(&x, &y, &params, 11).unwrap();
    let f2 = train_forest(&x, &y, &params, 11).unwrap();
    let f3 = train_forest(&x, &y, &params, 12).unwrap();
    assert_eq!(f1.predict(&x).unwrap(), f2.predict(&x).unwrap());
    assert_ne!(
        serde_json::to_string(&f1).unwrap(),
        serde_json::to_string(&f3).unwrap()
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("forest.json");
    f1.save(&path).unwrap();
    let back = mmfuse::forest::RandomForest::load(&path).unwrap();
    assert_eq!(back.predict(&x).unwrap(), f1.predict(&x).unwrap());
}

#[test]
fn scores_are_clipped_logits() {
    let (x, y) = noisy_data(30, 3, 4);
    let forest = train_forest(
        &x,
        &y,
        &ForestParams {
            n_trees: 5,
            ..ForestParams::default()
        },
        0,
    )
    .unwrap();
    let ids = (0..30).map(|i| i.to_string()).collect();
    let s = forest_scores(&forest, &x, ids, vec!["a".into(), "b".into(), "c".into()]).unwrap();
    assert!(s.scores.is_finite());
    let floor = prob_to_logit(0.0);
    assert!((floor - (1e-6f64 / (1.0 - 1e-6)).ln()).abs() < 1e-12);
    assert!((0..30).all(|i| s.scores.row(i)[2] == floor));
}

#[test]
fn metadata_table_and_encoding() {
    let header = "id,movie_title,director_name,actor_1_name,actor_2_name,actor_3_name,language,content_rating,\
cast_total_facebook_likes,duration,facenumber_in_poster,num_critic_reviews,movie_facebook_likes,num_voted_users";
    let text = format!(
        "{header}\n\
a,Red River,Hawks,Wayne,Clift,Brennan,English,PG,100,133,2,50,0,9000\n\
b,Blue Sky,Hawks,Clift,Wayne,Wayne,English,,,-5,1,,200,50\n\
c,Green,Ford,Wayne,Hale,Bond,French,R,1,90,0,3,4,5\n"
    );
    let table = MetadataTable::read(text.as_bytes(), b',', Path::new("meta.csv")).unwrap();
    let b = table.get("b").unwrap();
    assert_eq!(b.numeric[0], None);
    assert_eq!(b.numeric[1], None, "negative duration is missing");
    assert_eq!(b.categorical[5], None);

    let vocab = CategoryVocab::build(table.records.values());
    // actor columns share one vocabulary: Wayne appears 4 times across them
    assert_eq!(vocab.code(1, "Wayne"), 1);
    assert_eq!(vocab.code(3, "Wayne"), 1);
    assert_eq!(vocab.code(2, "Clift"), 2);
    assert_eq!(vocab.code(0, "Hawks"), 1);
    assert_eq!(vocab.code(0, "Nobody"), 0);
    let restored = CategoryVocab::from_json(&vocab.to_json().unwrap()).unwrap();
    assert_eq!(restored.code(2, "Clift"), 2);

    let mut glove = Embeddings::new(300);
    glove.insert("red", &[1.0; 300]).unwrap();
    glove.insert("river", &[3.0; 300]).unwrap();
    let enc = encode_metadata(table.get("a").unwrap(), &vocab, &glove);
    assert_eq!(enc.len(), METADATA_WIDTH);
    assert_eq!(&enc[..6], &[100.0, 133.0, 2.0, 50.0, 0.0, 9000.0]);
    assert!(enc[12..].iter().all(|&v| v == 2.0));
    let enc_b = encode_metadata(b, &vocab, &glove);
    assert_eq!(enc_b[0], MISSING);
    assert_eq!(enc_b[11], 0.0);
    assert!(enc_b[12..].iter().all(|&v| v == 0.0));
}

#[test]
fn metadata_errors_name_the_line() {
    let header = "id,movie_title,director_name,actor_1_name,actor_2_name,actor_3_name,language,content_rating,\
cast_total_facebook_likes,duration,facenumber_in_poster,num_critic_reviews,movie_facebook_likes,num_voted_users";
    let bad = format!("{header}\na,T,D,A,B,C,L,R,1,2,3,4,5,6\nb,T,D,A,B,C,L,R,1,x,3,4,5,6\n");
    let err = MetadataTable::read(bad.as_bytes(), b',', Path::new("m.csv")).unwrap_err();
    assert!(err.to_string().starts_with("m.csv:3:"), "{err}");
    let dup = format!("{header}\na,T,D,A,B,C,L,R,1,2,3,4,5,6\na,T,D,A,B,C,L,R,1,2,3,4,5,6\n");
    assert!(MetadataTable::read(dup.as_bytes(), b',', Path::new("m.csv")).is_err());
    assert!(MetadataTable::read("id,duration\n".as_bytes(), b',', Path::new("m.csv")).is_err());
}
