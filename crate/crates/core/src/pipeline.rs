//! Training phases: autoencoder pretraining on unlabeled points, then
//! supervised training of encoder + classification head on the labeled half.
//!
//! A plain C2ST starts the classifier from a randomly initialized encoder; an
//! SSL-C2ST starts it from the pretrained one. Both share the head topology
//! and the Phase-2 procedure.

use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::hdgm::{shuffled_rows, SplitDataset};
use crate::nn::{softmax_class1, Activation, AdamConfig, AdamState, Matrix, Mlp};
use crate::rng::{rng_from_seed, substream, Stream};

/// Architecture and optimization settings for both training phases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Hidden widths of the encoder between the input and the latent layer.
    pub encoder_hidden: Vec<usize>,
    /// Latent feature size `H`.
    pub latent: usize,
    /// Hidden widths of the head; the last one is the representation width `d_rep`.
    pub head_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub latent_activation: Activation,
    /// Learning rate of the encoder (and decoder).
    pub lr_encoder: f64,
    pub lr_head: f64,
    pub epochs_autoencoder: usize,
    pub epochs_classifier: usize,
    pub batch_size: usize,
    /// Only the head is trained in Phase 2 when set.
    pub freeze_encoder: bool,
    /// Fraction of the test half added to the training half as unlabeled data.
    pub unlabeled_fraction: f64,
    /// Z-score inputs with statistics of the labeled training half.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![50, 50],
            latent: 20,
            head_hidden: vec![50],
            hidden_activation: Activation::Relu,
            latent_activation: Activation::Identity,
            lr_encoder: 1e-3,
            lr_head: 1e-3,
            epochs_autoencoder: 100,
            epochs_classifier: 100,
            batch_size: 128,
            freeze_encoder: false,
            unlabeled_fraction: 1.0,
            standardize: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 || self.encoder_hidden.contains(&0) || self.head_hidden.contains(&0) {
            return Err(Error::InvalidInput("layer widths must be positive".into()));
        }
        if self.epochs_autoencoder == 0 || self.epochs_classifier == 0 {
            return Err(Error::InvalidInput("epoch counts must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.unlabeled_fraction) {
            return Err(Error::Domain {
                name: "unlabeled_fraction",
                value: self.unlabeled_fraction,
                domain: "[0, 1]",
            });
        }
        for (name, lr) in [("lr_encoder", self.lr_encoder), ("lr_head", self.lr_head)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Domain {
                    name,
                    value: lr,
                    domain: "(0, inf)",
                });
            }
        }
        Ok(())
    }

    pub fn encoder_widths(&self, input: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(self.encoder_hidden.iter().copied())
            .chain(std::iter::once(self.latent))
            .collect()
    }

    pub fn decoder_widths(&self, input: usize) -> Vec<usize> {
        std::iter::once(self.latent)
            .chain(self.encoder_hidden.iter().rev().copied())
            .chain(std::iter::once(input))
            .collect()
    }

    pub fn head_widths(&self) -> Vec<usize> {
        std::iter::once(self.latent)
            .chain(self.head_hidden.iter().copied())
            .chain(std::iter::once(2))
            .collect()
    }

    pub fn new_encoder(&self, input: usize) -> Result<Mlp> {
        Mlp::with_topology(
            &self.encoder_widths(input),
            self.hidden_activation,
            self.latent_activation,
            substream(self.seed, Stream::Encoder),
        )
    }

    pub fn new_decoder(&self, input: usize) -> Result<Mlp> {
        Mlp::with_topology(
            &self.decoder_widths(input),
            self.hidden_activation,
            Activation::Identity,
            substream(self.seed, Stream::Decoder),
        )
    }

    pub fn new_head(&self) -> Result<Mlp> {
        Mlp::with_topology(
            &self.head_widths(),
            self.hidden_activation,
            Activation::Identity,
            substream(self.seed, Stream::Head),
        )
    }
}

/// Shuffled minibatch index sets for one epoch.
fn epoch_batches(n: usize, batch_size: usize, rng: &mut impl rand::Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Result of Phase 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
    /// Mean reconstruction MSE of each epoch over its minibatches.
    pub loss_trace: Vec<f64>,
}

impl Autoencoder {
    pub fn reconstruct(&self, batch: &Matrix) -> Result<Matrix> {
        self.decoder.predict(&self.encoder.predict(batch)?)
    }
}

/// Phase 1: minimize reconstruction MSE of `unlabeled` with minibatch Adam.
pub fn train_autoencoder(unlabeled: &Matrix, cfg: &TrainConfig) -> Result<Autoencoder> {
    cfg.validate()?;
    if unlabeled.nrows() == 0 {
        return Err(Error::InvalidInput(
            "autoencoder needs at least one unlabeled point".into(),
        ));
    }
    let d = unlabeled.ncols();
    let mut encoder = cfg.new_encoder(d)?;
    let mut decoder = cfg.new_decoder(d)?;
    let adam = AdamConfig::with_learning_rate(cfg.lr_encoder);
    let mut enc_state = AdamState::new(&encoder, adam);
    let mut dec_state = AdamState::new(&decoder, adam);
    let mut rng = rng_from_seed(substream(cfg.seed, Stream::AutoencoderBatches));
    let mut loss_trace = Vec::with_capacity(cfg.epochs_autoencoder);

    for epoch in 0..cfg.epochs_autoencoder {
        let mut total = 0.0;
        for (b, rows) in epoch_batches(unlabeled.nrows(), cfg.batch_size, &mut rng)
            .iter()
            .enumerate()
        {
            let batch = unlabeled.select(Axis(0), rows);
            let (latent, enc_cache) = encoder.forward(&batch)?;
            let (recon, dec_cache) = decoder.forward(&latent)?;
            let loss = crate::nn::mse_loss(&recon, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    phase: "autoencoder",
                    epoch,
                    batch: b,
                });
            }
            let grad_recon = (&recon - &batch) * (2.0 / recon.nrows() as f64);
            let (dec_grads, grad_latent) = decoder.backprop(&dec_cache, &grad_recon)?;
            let (enc_grads, _) = encoder.backprop(&enc_cache, &grad_latent)?;
            dec_state.step(&mut decoder, &dec_grads)?;
            enc_state.step(&mut encoder, &enc_grads)?;
            total += loss * rows.len() as f64;
        }
        loss_trace.push(total / unlabeled.nrows() as f64);
    }
    Ok(Autoencoder {
        encoder,
        decoder,
        loss_trace,
    })
}

/// Per-feature affine map `(x - mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    /// Column means and population standard deviations; constant columns keep scale 1.
    pub fn fit(x: &Matrix) -> Result<Self> {
        let Some(mean) = x.mean_axis(Axis(0)) else {
            return Err(Error::InvalidInput("cannot standardize an empty matrix".into()));
        };
        let scale = x
            .var_axis(Axis(0), 0.0)
            .mapv(|v| if v > 1e-24 { v.sqrt() } else { 1.0 });
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.mean.len() {
            return Err(shape_err("standardizer input", self.mean.len(), x.ncols()));
        }
        Ok((x - &self.mean) / &self.scale)
    }
}

fn input_scaler(split: &SplitDataset, cfg: &TrainConfig) -> Result<Option<Standardizer>> {
    cfg.standardize
        .then(|| Standardizer::fit(&split.train.points))
        .transpose()
}

fn scaled(scaler: Option<&Standardizer>, x: &Matrix) -> Result<Matrix> {
    match scaler {
        Some(s) => s.apply(x),
        None => Ok(x.clone()),
    }
}

/// How the Phase-2 encoder starts.
#[derive(Clone, Debug)]
pub enum EncoderInit {
    /// Fresh Glorot weights: a plain C2ST.
    Random,
    /// Weights from autoencoder pretraining: an SSL-C2ST.
    Pretrained(Mlp),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    C2st,
    SslC2st,
}

/// A trained classifier `f' = g ∘ φ` plus its training history.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedTest {
    pub encoder: Mlp,
    pub head: Mlp,
    pub provenance: Provenance,
    /// Applied to raw inputs before the encoder.
    pub scaler: Option<Standardizer>,
    pub autoencoder_trace: Vec<f64>,
    pub classifier_trace: Vec<f64>,
}

/// Which representation [`TrainedTest::extract_features`] returns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLayer {
    /// Class-0 softmax probability, one column.
    #[default]
    P0Scalar,
    /// Output of the head's last hidden layer, `d_rep` columns.
    HiddenRep,
    /// The two pre-softmax logits.
    Logits,
}

impl TrainedTest {
    /// An untrained-history model on raw inputs.
    pub fn new(encoder: Mlp, head: Mlp, provenance: Provenance) -> Self {
        Self {
            encoder,
            head,
            provenance,
            scaler: None,
            autoencoder_trace: Vec::new(),
            classifier_trace: Vec::new(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    fn encode(&self, batch: &Matrix) -> Result<Matrix> {
        self.encoder.predict(&scaled(self.scaler.as_ref(), batch)?)
    }

    pub fn logits(&self, batch: &Matrix) -> Result<Matrix> {
        self.head.predict(&self.encode(batch)?)
    }

    /// Class-1 probability `p_k` of each row.
    pub fn predict_proba(&self, batch: &Matrix) -> Result<Array1<f64>> {
        Ok(softmax_class1(&self.logits(batch)?))
    }

    /// Argmax labels; a tie predicts 0, matching `1(p > 1/2)`.
    pub fn predict_labels(&self, batch: &Matrix) -> Result<Vec<u8>> {
        let logits = self.logits(batch)?;
        Ok(logits.rows().into_iter().map(|r| u8::from(r[1] > r[0])).collect())
    }

    pub fn extract_features(&self, batch: &Matrix, layer: FeatureLayer) -> Result<Matrix> {
        let latent = self.encode(batch)?;
        match layer {
            FeatureLayer::Logits => self.head.predict(&latent),
            FeatureLayer::P0Scalar => {
                let p1 = softmax_class1(&self.head.predict(&latent)?);
                Ok(p1.mapv(|p| 1.0 - p).insert_axis(Axis(1)))
            }
            FeatureLayer::HiddenRep => {
                let depth = self.head.layers().len();
                if depth < 2 {
                    return Err(Error::InvalidInput("head has no hidden representation layer".into()));
                }
                self.head.predict_partial(&latent, depth - 1)
            }
        }
    }

    pub fn to_dump(&self) -> ModelDump {
        ModelDump {
            format_version: ModelDump::FORMAT_VERSION,
            provenance: self.provenance,
            encoder: self.encoder.clone(),
            head: self.head.clone(),
            scaler: self.scaler.clone(),
        }
    }
}

/// Versioned parameter dump of a trained classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub format_version: u32,
    pub provenance: Provenance,
    pub encoder: Mlp,
    pub head: Mlp,
    #[serde(default)]
    pub scaler: Option<Standardizer>,
}

impl ModelDump {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn into_trained(self) -> Result<TrainedTest> {
        if self.format_version != Self::FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model dump version {}",
                self.format_version
            )));
        }
        if self.encoder.output_width() != self.head.input_width() || self.head.output_width() != 2 {
            return Err(shape_err(
                "model dump",
                "encoder output = head input, 2 logits",
                format!("{:?} / {:?}", self.encoder.widths(), self.head.widths()),
            ));
        }
        if let Some(s) = &self.scaler {
            if s.mean.len() != self.encoder.input_width() || s.scale.len() != s.mean.len() {
                return Err(shape_err("model dump scaler", self.encoder.input_width(), s.mean.len()));
            }
        }
        Ok(TrainedTest {
            scaler: self.scaler,
            ..TrainedTest::new(self.encoder, self.head, self.provenance)
        })
    }
}

/// Phase 2: train encoder + head with cross-entropy on the labeled half.
pub fn train_classifier(init: EncoderInit, split: &SplitDataset, cfg: &TrainConfig) -> Result<TrainedTest> {
    cfg.validate()?;
    let train = &split.train;
    let (zeros, ones) = train.label_counts();
    if zeros == 0 || ones == 0 {
        return Err(Error::InvalidInput(format!(
            "training set needs both labels, got {zeros} zeros and {ones} ones"
        )));
    }
    let d = train.dim();
    let (mut encoder, provenance) = match init {
        EncoderInit::Random => (cfg.new_encoder(d)?, Provenance::C2st),
        EncoderInit::Pretrained(enc) => {
            if enc.widths() != cfg.encoder_widths(d) {
                return Err(shape_err(
                    "pretrained encoder",
                    format!("{:?}", cfg.encoder_widths(d)),
                    format!("{:?}", enc.widths()),
                ));
            }
            (enc, Provenance::SslC2st)
        }
    };
    let scaler = input_scaler(split, cfg)?;
    let inputs = scaled(scaler.as_ref(), &train.points)?;
    let mut head = cfg.new_head()?;
    let mut enc_state = AdamState::new(&encoder, AdamConfig::with_learning_rate(cfg.lr_encoder));
    let mut head_state = AdamState::new(&head, AdamConfig::with_learning_rate(cfg.lr_head));
    let mut rng = rng_from_seed(substream(cfg.seed, Stream::ClassifierBatches));
    let mut trace = Vec::with_capacity(cfg.epochs_classifier);

    for epoch in 0..cfg.epochs_classifier {
        let mut total = 0.0;
        for (b, rows) in epoch_batches(train.len(), cfg.batch_size, &mut rng).iter().enumerate() {
            let batch = inputs.select(Axis(0), rows);
            let labels: Vec<u8> = rows.iter().map(|&r| train.labels[r]).collect();
            let (latent, enc_cache) = encoder.forward(&batch)?;
            let (logits, head_cache) = head.forward(&latent)?;
            let probs = softmax_class1(&logits);
            let loss = crate::nn::bce_loss(probs.as_slice().expect("contiguous"), &labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    phase: "classifier",
                    epoch,
                    batch: b,
                });
            }
            let scale = 1.0 / rows.len() as f64;
            let mut grad_logits = Matrix::zeros(logits.raw_dim());
            for (i, (&p1, &l)) in probs.iter().zip(&labels).enumerate() {
                let y = f64::from(l);
                grad_logits[[i, 0]] = (y - p1) * scale;
                grad_logits[[i, 1]] = (p1 - y) * scale;
            }
            let (head_grads, grad_latent) = head.backprop(&head_cache, &grad_logits)?;
            head_state.step(&mut head, &head_grads)?;
            if !cfg.freeze_encoder {
                let (enc_grads, _) = encoder.backprop(&enc_cache, &grad_latent)?;
                enc_state.step(&mut encoder, &enc_grads)?;
            }
            total += loss * rows.len() as f64;
        }
        trace.push(total / train.len() as f64);
    }
    Ok(TrainedTest {
        scaler,
        classifier_trace: trace,
        ..TrainedTest::new(encoder, head, provenance)
    })
}

/// Unlabeled pool for Phase 1: the whole training half plus a leading
/// `fraction` of the (shuffled) test half, in shuffled order. `fraction = 1`
/// uses every point.
pub fn unlabeled_pool(split: &SplitDataset, fraction: f64, seed: u64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Domain {
            name: "unlabeled_fraction",
            value: fraction,
            domain: "[0, 1]",
        });
    }
    let test = shuffled_rows(&split.test.points, seed);
    let take = (fraction * test.nrows() as f64).round() as usize;
    let pool = ndarray::concatenate(
        Axis(0),
        &[split.train.points.view(), test.slice(ndarray::s![..take, ..])],
    )
    .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(shuffled_rows(&pool, seed.wrapping_add(1)))
}

/// Phases 1 and 2 of the semi-supervised test on one split.
pub fn train_ssl_c2st(split: &SplitDataset, cfg: &TrainConfig) -> Result<TrainedTest> {
    let pool = unlabeled_pool(split, cfg.unlabeled_fraction, substream(cfg.seed, Stream::Unlabeled))?;
    // pretrain in the same coordinates the classifier will see
    let pool = scaled(input_scaler(split, cfg)?.as_ref(), &pool)?;
    let ae = train_autoencoder(&pool, cfg)?;
    let mut trained = train_classifier(EncoderInit::Pretrained(ae.encoder), split, cfg)?;
    trained.autoencoder_trace = ae.loss_trace;
    Ok(trained)
}

/// Phase 2 only, from a random encoder.
pub fn train_c2st(split: &SplitDataset, cfg: &TrainConfig) -> Result<TrainedTest> {
    train_classifier(EncoderInit::Random, split, cfg)
}
