use awblstm::config::ModelConfig;
use awblstm::corpus::{generate_synthetic_corpus, partition, SynthConfig};
use awblstm::embeddings::{encode, PartitionedEncoding, Vocabulary};
use awblstm::model::{is_embedding, Model};
use awblstm::train::{evaluate, train, Control, TrainOptions};

fn small_config() -> ModelConfig {
    ModelConfig {
        word_dim: 12,
        pos_dim: 4,
        dist_dim: 4,
        lower_hidden: 8,
        upper_hidden: 8,
        batch_size: 16,
        epochs: 3,
        ..ModelConfig::default()
    }
}

fn synthetic(n: usize, cfg: &ModelConfig) -> (Vocabulary, Vec<PartitionedEncoding>) {
    let (train_set, _) = generate_synthetic_corpus(&SynthConfig::with_sizes(n, 5), 7).unwrap();
    let vocab = Vocabulary::build(&train_set, 1);
    let data = train_set.iter().map(|i| encode(&partition(i), &vocab, cfg)).collect();
    (vocab, data)
}

fn run(cfg: &ModelConfig, vocab: &Vocabulary, data: &[PartitionedEncoding]) -> (Model, Vec<awblstm::train::EpochLog>) {
    let mut model = Model::new(cfg.clone(), vocab.clone());
    let log = train(&mut model, data, &TrainOptions::default(), |_, _| Control::Continue).unwrap();
    (model, log)
}

#[test]
fn memorises_a_single_instance() {
    let cfg = ModelConfig {
        epochs: 200,
        batch_size: 1,
        validation_split: 0.0,
        ..small_config()
    };
    let (vocab, data) = synthetic(5, &cfg);
    let one = &data[..1];
    let (model, log) = run(&cfg, &vocab, one);
    assert_eq!(log.len(), 200);
    let loss = model.loss(&one[0]).unwrap();
    assert!(loss < 0.01, "loss {loss}");
    assert_eq!(model.predict(&one[0]).unwrap(), one[0].label);
}

#[test]
fn same_seed_gives_identical_parameters() {
    let cfg = ModelConfig { epochs: 1, ..small_config() };
    let (vocab, data) = synthetic(80, &cfg);
    let (a, la) = run(&cfg, &vocab, &data);
    let (b, lb) = run(&cfg, &vocab, &data);
    assert_eq!(la, lb);
    for ((_, x), (_, y)) in a.params.named().into_iter().zip(b.params.named()) {
        assert!(x.bitwise_eq(y));
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let cfg = ModelConfig { epochs: 1, ..small_config() };
    let (vocab, data) = synthetic(60, &cfg);
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run(&cfg, &vocab, &data))
    };
    let (a, la) = in_pool(1);
    let (b, lb) = in_pool(3);
    assert_eq!(la, lb);
    assert_eq!(a, b);
}

#[test]
fn different_seeds_give_different_parameters() {
    let cfg = ModelConfig { epochs: 1, ..small_config() };
    let (vocab, data) = synthetic(40, &cfg);
    let (a, _) = run(&cfg, &vocab, &data);
    let (b, _) = run(&ModelConfig { seed: 8, ..cfg.clone() }, &vocab, &data);
    assert_ne!(a.params, b.params);
}

#[test]
fn training_loss_decreases() {
    let cfg = small_config();
    let (vocab, data) = synthetic(200, &cfg);
    let (_, log) = run(&cfg, &vocab, &data);
    assert_eq!(log.len(), 3);
    assert!(log[2].train_loss < log[0].train_loss, "{log:?}");
    assert!(log.iter().all(|r| r.val_loss.is_some() && r.wall_seconds == 0.0));
    assert_eq!(log.iter().map(|r| r.epoch).collect::<Vec<_>>(), [1, 2, 3]);
}

#[test]
fn frozen_embeddings_stay_fixed() {
    let cfg = ModelConfig {
        epochs: 1,
        freeze_embeddings: true,
        ..small_config()
    };
    let (vocab, data) = synthetic(40, &cfg);
    let before = Model::new(cfg.clone(), vocab.clone());
    let (after, _) = run(&cfg, &vocab, &data);
    for ((name, x), (_, y)) in before.params.named().into_iter().zip(after.params.named()) {
        if is_embedding(&name) {
            assert!(x.bitwise_eq(y), "{name} changed");
        } else {
            assert!(!x.bitwise_eq(y), "{name} did not change");
        }
    }
}

#[test]
fn pad_embedding_rows_stay_zero() {
    let cfg = ModelConfig { epochs: 1, ..small_config() };
    let (vocab, data) = synthetic(40, &cfg);
    let (model, _) = run(&cfg, &vocab, &data);
    let e = &model.params.embeddings;
    for table in [&e.word, &e.pos, &e.dist] {
        assert!(table.row(0).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn callback_can_stop_training() {
    let cfg = ModelConfig { epochs: 10, ..small_config() };
    let (vocab, data) = synthetic(30, &cfg);
    let mut model = Model::new(cfg, vocab);
    let log = train(&mut model, &data, &TrainOptions::default(), |row, _| {
        if row.epoch == 2 {
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .unwrap();
    assert_eq!(log.len(), 2);
}

#[test]
fn evaluation_loss_matches_per_instance_losses() {
    let cfg = small_config();
    let (vocab, data) = synthetic(20, &cfg);
    let model = Model::new(cfg, vocab);
    let (loss, report) = evaluate(&model, &data).unwrap();
    let mean: f64 = data.iter().map(|d| model.loss(d).unwrap()).sum::<f64>() / data.len() as f64;
    assert!((loss - mean).abs() < 1e-12);
    assert_eq!(report.support.unwrap().iter().sum::<u64>(), 20);
}
