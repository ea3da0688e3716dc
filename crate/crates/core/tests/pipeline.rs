use c2st::hdgm::{build_dataset, sample_hdgm, shuffle_split, LabeledDataset, SplitDataset};
use c2st::pipeline::Provenance;
use c2st::pipeline::{train_autoencoder, train_c2st, train_classifier, train_ssl_c2st, EncoderInit};
use c2st::rng::{fill_standard_normal, rng_from_seed};
use c2st::stats::{accuracy, accuracy_statistic, epsilon_hat};
use c2st::{Activation, HdgmSpec, Level, Matrix, TrainConfig, TrainedTest};

fn split_of(sp: &Matrix, sq: &Matrix, seed: u64) -> SplitDataset {
    shuffle_split(&build_dataset(sp, sq).unwrap(), seed).unwrap()
}

fn gaussian(rows: usize, cols: usize, shift: f64, seed: u64) -> Matrix {
    let mut m = Matrix::zeros((rows, cols));
    fill_standard_normal(&mut rng_from_seed(seed), m.as_slice_mut().unwrap());
    m + shift
}

#[test]
fn linear_autoencoder_recovers_rank_one_data() {
    let z = gaussian(400, 1, 0.0, 1);
    let v = ndarray::array![[0.5, -1.0, 0.25, 0.8]];
    let x = z.dot(&v);
    let cfg = TrainConfig {
        encoder_hidden: vec![],
        latent: 1,
        hidden_activation: Activation::Identity,
        latent_activation: Activation::Identity,
        epochs_autoencoder: 300,
        batch_size: 32,
        lr_encoder: 1e-2,
        ..TrainConfig::default()
    };
    let ae = train_autoencoder(&x, &cfg).unwrap();
    let last = *ae.loss_trace.last().unwrap();
    assert!(last < 1e-3, "final mse {last}");
}

#[test]
fn phase_one_loss_mostly_decreases_on_hdgm() {
    let x = sample_hdgm(&HdgmSpec::p(10, Level::Hard), 500, 4).unwrap();
    let cfg = TrainConfig {
        epochs_autoencoder: 60,
        ..TrainConfig::default()
    };
    let trace = train_autoencoder(&x, &cfg).unwrap().loss_trace;
    let upticks = trace.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(upticks * 10 < trace.len(), "{upticks} upticks in {trace:?}");
    assert!(trace.last() < trace.first());
}

#[test]
fn separable_blobs_are_learned() {
    let split = split_of(&gaussian(200, 2, -3.0, 1), &gaussian(200, 2, 3.0, 2), 3);
    let cfg = TrainConfig {
        encoder_hidden: vec![],
        latent: 4,
        head_hidden: vec![4],
        epochs_classifier: 30,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let model = train_c2st(&split, &cfg).unwrap();
    assert!(accuracy_statistic(&model, &split.train).unwrap() > 0.95);
}

#[test]
fn no_signal_stays_near_chance() {
    let spec = HdgmSpec::p(5, Level::Hard);
    let split = split_of(
        &sample_hdgm(&spec, 250, 1).unwrap(),
        &sample_hdgm(&spec, 250, 2).unwrap(),
        3,
    );
    let cfg = TrainConfig {
        epochs_classifier: 20,
        ..TrainConfig::default()
    };
    let acc = accuracy_statistic(&train_c2st(&split, &cfg).unwrap(), &split.test).unwrap();
    assert!((acc - 0.5).abs() <= 0.15, "{acc}");
}

fn small_split() -> SplitDataset {
    let n = 60;
    split_of(
        &sample_hdgm(&HdgmSpec::p(4, Level::Easy), n, 1).unwrap(),
        &sample_hdgm(&HdgmSpec::q_alt(4, Level::Easy), n, 2).unwrap(),
        3,
    )
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        encoder_hidden: vec![8],
        latent: 4,
        head_hidden: vec![6],
        epochs_autoencoder: 5,
        epochs_classifier: 5,
        batch_size: 16,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn frozen_encoder_is_untouched() {
    let split = small_split();
    let cfg = TrainConfig {
        freeze_encoder: true,
        ..small_cfg()
    };
    let encoder = cfg.new_encoder(4).unwrap();
    let trained = train_classifier(EncoderInit::Pretrained(encoder.clone()), &split, &cfg).unwrap();
    assert_eq!(trained.encoder, encoder);

    let unfrozen = train_classifier(EncoderInit::Pretrained(encoder.clone()), &split, &small_cfg()).unwrap();
    assert_ne!(unfrozen.encoder, encoder);
}

#[test]
fn both_methods_share_topology() {
    let split = small_split();
    let a = train_c2st(&split, &small_cfg()).unwrap();
    let b = train_ssl_c2st(&split, &small_cfg()).unwrap();
    assert_eq!(a.encoder.topology(), b.encoder.topology());
    assert_eq!(a.head.topology(), b.head.topology());
    assert!(a.autoencoder_trace.is_empty());
    assert_eq!(b.autoencoder_trace.len(), 5);
}

#[test]
fn training_is_deterministic() {
    let split = small_split();
    let a = train_ssl_c2st(&split, &small_cfg()).unwrap();
    let b = train_ssl_c2st(&split, &small_cfg()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn degenerate_labels_are_rejected() {
    let split = small_split();
    let only_zeros: Vec<usize> = (0..split.train.len()).filter(|&i| split.train.labels[i] == 0).collect();
    let bad = SplitDataset {
        train: split.train.select(&only_zeros),
        test: split.test.clone(),
    };
    assert!(train_c2st(&bad, &small_cfg()).is_err());
}

#[test]
fn epsilon_hat_identity_on_random_pairs() {
    for seed in 0..100u64 {
        let cfg = TrainConfig { seed, ..small_cfg() };
        let model = TrainedTest::new(cfg.new_encoder(3).unwrap(), cfg.new_head().unwrap(), Provenance::C2st);
        let n = 10 + (seed as usize % 7);
        let points = gaussian(2 * n, 3, 0.0, seed + 500);
        let labels: Vec<u8> = (0..2 * n).map(|i| u8::from(i >= n)).collect();
        let ds = LabeledDataset::new(points, labels).unwrap();
        let t = accuracy(&model.predict_labels(&ds.points).unwrap(), &ds.labels).unwrap();
        assert_eq!(epsilon_hat(&model, &ds).unwrap(), (1.0 - t) / 2.0);
    }
}
