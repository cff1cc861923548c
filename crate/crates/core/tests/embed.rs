use ekg_core::corpus::{Corpus, CorpusConfig};
use ekg_core::diffkit::{grad_check, GradCheckConfig, ParamStore, Tape, Tensor};
use ekg_core::ekg::{build_global_ekg, extract_local_ekg, GlobalEKG};
use ekg_core::embed::{
    edge_loss, materialize_embeddings, train_ekg, triplet_hinge, vertex_loss, ChapterBatch, EkgEmbeddings, EmbedConfig,
    RelationNetwork, SmoothingWeights, Triplet, VertexTable,
};
use ekg_core::pipeline::{generate, report_stats, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic() -> (Corpus, GlobalEKG) {
    let corpus = generate(&SyntheticSpec::default(), 7)
        .unwrap()
        .prepare(&CorpusConfig::default())
        .unwrap();
    let ekg = build_global_ekg(&corpus.novel, &corpus.mentions, corpus.lexicon.len(), 100);
    (corpus, ekg)
}

fn quick_config() -> EmbedConfig {
    EmbedConfig {
        dim: 16,
        vertex_steps: 100,
        edge_steps: 30,
        warmup: 50,
        ..EmbedConfig::default()
    }
}

#[test]
fn synthetic_stats_match_generator() {
    let (corpus, ekg) = synthetic();
    let s = report_stats(&corpus, 100);
    assert_eq!(corpus.novel.num_chapters(), 3);
    assert_eq!(s.passages, 60);
    assert_eq!(s.comments, 240);
    assert_eq!(s.avg_entities_per_passage, 2.0);
    assert_eq!(s.avg_relations_per_passage, 1.0);
    assert_eq!(s.avg_comments_per_passage, 4.0);
    assert_eq!(ekg.num_relation_instances(), 60);
}

#[test]
fn uniform_when_table_is_zero() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let table = VertexTable::new(&mut store, 1, 4, 3, &mut rng);
    *store.get_mut(table.chapters[0]) = Tensor::zeros(vec![4, 3]);
    let p = table.vertex_probability(&store, 1, &[0.3, -1.0, 2.0]).unwrap();
    assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
}

#[test]
fn two_entity_probabilities() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let table = VertexTable::new(&mut store, 1, 2, 1, &mut rng);
    *store.get_mut(table.chapters[0]) = Tensor::new(vec![2, 1], vec![3f64.ln(), 0.0]).unwrap();
    let p = table.vertex_probability(&store, 1, &[1.0]).unwrap();
    assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
}

#[test]
fn single_chapter_keeps_only_center_term() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let table = VertexTable::new(&mut store, 1, 3, 4, &mut rng);
    let feats = Tensor::from_fn(vec![2, 4], |_| rng.gen_range(-1.0..1.0));
    let targets = [0, 2];
    let loss_with = |w: SmoothingWeights| {
        let tape = Tape::new(&store);
        let b = [ChapterBatch {
            t: 1,
            features: tape.constant(feats.clone()),
            targets: targets.to_vec(),
        }];
        vertex_loss(&tape, &table, &b, w, 0.0).unwrap().item()
    };
    let smoothed = loss_with(SmoothingWeights::default());
    let center = loss_with(SmoothingWeights::UNSMOOTHED);
    assert!((smoothed - center).abs() < 1e-12);
}

#[test]
fn hinge_examples() {
    let store = ParamStore::<f64>::new();
    let tape = Tape::new(&store);
    let col = |v: f64| tape.constant(Tensor::new(vec![1, 1], vec![v]).unwrap());
    assert_eq!(triplet_hinge(col(0.2), col(0.5), 0.0).unwrap().item(), 0.0);
    let l = triplet_hinge(col(0.5), col(0.2), 0.1).unwrap().item();
    assert!((l - 0.4).abs() < 1e-12);
}

#[test]
fn relation_network_zero_layer_gives_zero_edge() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rn = RelationNetwork::new(&mut store, 3, &mut rng);
    *store.get_mut(rn.layer1.weight) = Tensor::zeros(vec![6, 3]);
    let tape = Tape::new(&store);
    let v = tape.constant(Tensor::from_fn(vec![1, 3], |k| k as f64 + 1.0));
    let r = rn.edge_embedding(v, v).unwrap();
    assert!(r.value().data().iter().all(|&x| x == 0.0));
}

#[test]
fn relation_network_is_order_sensitive() {
    let mut store = ParamStore::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rn = RelationNetwork::new(&mut store, 4, &mut rng);
    let tape = Tape::new(&store);
    let a = tape.constant(Tensor::from_fn(vec![1, 4], |k| k as f64));
    let b = tape.constant(Tensor::from_fn(vec![1, 4], |k| 1.0 - k as f64));
    let ab = rn.edge_embedding(a, b).unwrap().value();
    let ba = rn.edge_embedding(b, a).unwrap().value();
    assert_ne!(ab.data(), ba.data());
}

#[test]
fn edge_loss_gradients_check_away_from_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::<f64>::new();
    let table = VertexTable::new(&mut store, 2, 5, 3, &mut rng);
    let rn = RelationNetwork::new(&mut store, 3, &mut rng);
    let sentences = Tensor::from_fn(vec![3, 3], |_| rng.gen_range(-1.0..1.0));
    let triplets = [
        Triplet { t: 1, i: 0, j: 1, k: 2 },
        Triplet { t: 2, i: 3, j: 4, k: 0 },
        Triplet { t: 1, i: 1, j: 2, k: 4 },
    ];
    // Large margin keeps every hinge active.
    let report = grad_check(
        &store,
        |tape| edge_loss(tape, &table, &rn, tape.constant(sentences.clone()), &triplets, 10.0),
        GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn inactive_hinge_has_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::<f64>::new();
    let table = VertexTable::new(&mut store, 1, 3, 3, &mut rng);
    let rn = RelationNetwork::new(&mut store, 3, &mut rng);
    let sentences = Tensor::from_fn(vec![1, 3], |_| rng.gen_range(-1.0..1.0));
    let triplets = [Triplet { t: 1, i: 0, j: 1, k: 2 }];
    let tape = Tape::new(&store);
    let loss = edge_loss(&tape, &table, &rn, tape.constant(sentences), &triplets, -100.0).unwrap();
    assert_eq!(loss.item(), 0.0);
    let grads = tape.backward(loss).unwrap();
    assert!(grads.params().values().all(|g| g.data().iter().all(|&x| x == 0.0)));
}

#[test]
fn training_decreases_vertex_loss_and_freezes_table() {
    let (corpus, ekg) = synthetic();
    let config = quick_config();
    let (emb, report) = train_ekg(&corpus, &ekg, &config, 100, 11).unwrap();
    let losses = &report.vertex_losses;
    assert_eq!(losses.len(), 100);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");

    // Rerunning phase 1 alone reproduces the table byte for byte.
    let phase1_only = EmbedConfig {
        edge_steps: 0,
        ..config.clone()
    };
    let (only, _) = train_ekg(&corpus, &ekg, &phase1_only, 100, 11).unwrap();
    for (&a, &b) in emb.table.chapters.iter().zip(&only.table.chapters) {
        assert_eq!(emb.store.get(a), only.store.get(b));
    }
    assert!(report.edge_examples > 0);
}

#[test]
fn zero_edge_weight_leaves_relation_network_untouched() {
    let (corpus, ekg) = synthetic();
    let config = EmbedConfig {
        lambda_r: 0.0,
        vertex_steps: 5,
        ..quick_config()
    };
    let (trained, _) = train_ekg(&corpus, &ekg, &config, 100, 3).unwrap();
    let fresh = EkgEmbeddings::new(&ekg.novel_id, 3, ekg.num_entities, &config, None, 3).unwrap();
    assert_eq!(
        trained.store.get(trained.rn.layer1.weight),
        fresh.store.get(fresh.rn.layer1.weight)
    );
}

#[test]
fn artifact_round_trip_and_materialized_shapes() {
    let (corpus, ekg) = synthetic();
    let config = EmbedConfig {
        vertex_steps: 3,
        edge_steps: 3,
        ..quick_config()
    };
    let (emb, _) = train_ekg(&corpus, &ekg, &config, 100, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ekg.bin");
    emb.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..5], b"EKGE1");
    let back = EkgEmbeddings::load(&path).unwrap();
    assert_eq!(back.to_bytes(), bytes);

    let mut local = extract_local_ekg(&ekg, &corpus.passages[0], 5);
    materialize_embeddings(&back.store, &back.table, &back.rn, &mut local).unwrap();
    assert_eq!(local.vertex_embeddings.len(), 3);
    assert_eq!(local.vertex_embeddings[0].shape(), &[local.num_vertices(), 16]);
    assert_eq!(local.edge_embeddings[2].shape(), &[local.num_edges(), 16]);
    let first = local.edge_embeddings.clone();
    materialize_embeddings(&back.store, &back.table, &back.rn, &mut local).unwrap();
    assert_eq!(first, local.edge_embeddings);
}

#[test]
fn smoothing_pulls_adjacent_chapters_together() {
    let (corpus, ekg) = synthetic();
    let base = EmbedConfig {
        vertex_steps: 150,
        edge_steps: 0,
        ..quick_config()
    };
    let unsmoothed = EmbedConfig {
        smoothing: SmoothingWeights::UNSMOOTHED,
        ..base.clone()
    };
    let (a, _) = train_ekg(&corpus, &ekg, &base, 100, 9).unwrap();
    let (b, _) = train_ekg(&corpus, &ekg, &unsmoothed, 100, 9).unwrap();
    let sa = ekg_core::embed::adjacent_chapter_similarity(&a.store, &a.table);
    let sb = ekg_core::embed::adjacent_chapter_similarity(&b.store, &b.table);
    assert!(sa > sb, "smoothed {sa} vs unsmoothed {sb}");
}

#[test]
fn attention_encoder_trains_jointly() {
    let (corpus, ekg) = synthetic();
    let config = EmbedConfig {
        encoder: ekg_core::embed::EncoderKind::Attention,
        encoder_heads: 2,
        vertex_steps: 10,
        edge_steps: 2,
        ..quick_config()
    };
    let (emb, report) = train_ekg(&corpus, &ekg, &config, 100, 1).unwrap();
    assert!(report.vertex_losses.last() < report.vertex_losses.first());
    let back = EkgEmbeddings::from_checkpoint(emb.to_checkpoint()).unwrap();
    assert_eq!(back.to_bytes(), emb.to_bytes());
}
