use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, TinyNet};
use crate::error::{Error, Result};
use crate::events_io::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// `(background, ED)` loss weights; inverse class frequency when `None`.
    pub class_weights: Option<(f64, f64)>,
    pub seed: u64,
    /// Stop once the epoch loss has not improved for this many epochs.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.003,
            batch_size: 32,
            epochs: 50,
            class_weights: None,
            seed: 0,
            patience: Some(5),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Param(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Param("batch size must be at least 1".into()));
        }
        if let Some((bg, ed)) = self.class_weights {
            if !(bg > 0.0 && ed > 0.0) {
                return Err(Error::Param(format!("class weights ({bg}, {ed}) must be > 0")));
            }
        }
        Ok(())
    }
}

/// Inverse class frequencies scaled to average 1 over the two classes.
///
/// Falls back to `(1, 1)` when either class is missing.
pub fn inverse_frequency_weights(labels: impl IntoIterator<Item = Label>) -> (f64, f64) {
    let (mut bg, mut ed) = (0usize, 0usize);
    for l in labels {
        match l {
            Label::Bg => bg += 1,
            Label::Ed => ed += 1,
        }
    }
    if bg == 0 || ed == 0 {
        return (1.0, 1.0);
    }
    let total = (bg + ed) as f64;
    (2.0 * ed as f64 / total, 2.0 * bg as f64 / total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub net: TinyNet,
    /// `(background, ED)` weights actually used.
    pub class_weights: (f64, f64),
    /// Sample-weighted training loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(f64::NAN)
    }
}

/// Mini-batch Adam on class-weighted cross-entropy.
///
/// The sample order of every epoch comes from a generator seeded with
/// `config.seed`, so identical inputs give identical weights.
pub fn train(net: &TinyNet, dataset: &[(Vec<f64>, Label)], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Param("cannot train on an empty dataset".into()));
    }
    let input_len = net.shape().input_len;
    if let Some((i, _)) = dataset.iter().enumerate().find(|(_, (x, _))| x.len() != input_len) {
        return Err(Error::Contract(format!(
            "sample {i} has {} inputs, network expects {input_len}",
            dataset[i].0.len()
        )));
    }

    let weights = config
        .class_weights
        .unwrap_or_else(|| inverse_frequency_weights(dataset.iter().map(|d| d.1)));
    let mut net = net.clone();
    let mut adam = Adam::new(net.param_count(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&[f64], Label)> = chunk
                .iter()
                .map(|&i| (dataset[i].0.as_slice(), dataset[i].1))
                .collect();
            let (loss, grad) = net.loss_and_grad(&batch, weights)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training { epoch, batch: b });
            }
            let w: f64 = batch
                .iter()
                .map(|(_, l)| match l {
                    Label::Bg => weights.0,
                    Label::Ed => weights.1,
                })
                .sum();
            loss_sum += loss * w;
            weight_sum += w;
            adam.step(net.params_mut(), &grad);
        }
        let epoch_loss = loss_sum / weight_sum;
        epoch_losses.push(epoch_loss);
        if epoch_loss < best {
            best = epoch_loss;
            since_best = 0;
        } else {
            since_best += 1;
            if config.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    Ok(TrainReport {
        net,
        class_weights: weights,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{build_tiny_net, Architecture, InputKind, NetShape};

    #[test]
    fn inverse_frequency_weights_average_one() {
        let labels = [vec![Label::Bg; 90], vec![Label::Ed; 10]].concat();
        let (bg, ed) = inverse_frequency_weights(labels);
        assert!(((bg + ed) / 2.0 - 1.0).abs() < 1e-15);
        assert!((ed / bg - 9.0).abs() < 1e-12);
        assert_eq!(inverse_frequency_weights(vec![Label::Bg; 3]), (1.0, 1.0));
    }

    #[test]
    fn default_weights_follow_class_frequency() {
        let net = build_tiny_net(
            NetShape {
                input_kind: InputKind::Rate,
                input_len: 8,
                architecture: Architecture::Fc,
            },
            0,
        )
        .unwrap();
        let data: Vec<(Vec<f64>, Label)> = (0..8)
            .map(|i| (vec![i as f64 / 8.0; 8], Label::from_positive(i < 2)))
            .collect();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let report = train(&net, &data, &cfg).unwrap();
        assert_eq!(report.class_weights, (0.5, 1.5));
    }

    #[test]
    fn invalid_configs_and_inputs() {
        let net = build_tiny_net(
            NetShape {
                input_kind: InputKind::Rate,
                input_len: 8,
                architecture: Architecture::Fc,
            },
            0,
        )
        .unwrap();
        let data = vec![(vec![0.0; 8], Label::Ed)];
        let bad_lr = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(train(&net, &data, &bad_lr).is_err());
        assert!(train(&net, &[], &TrainConfig::default()).is_err());
        assert!(matches!(
            train(&net, &[(vec![0.0; 7], Label::Bg)], &TrainConfig::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn non_finite_input_reports_the_batch() {
        let net = build_tiny_net(
            NetShape {
                input_kind: InputKind::Rate,
                input_len: 8,
                architecture: Architecture::Fc,
            },
            0,
        )
        .unwrap();
        let mut data: Vec<(Vec<f64>, Label)> = (0..8).map(|i| (vec![i as f64; 8], Label::Bg)).collect();
        data[5].0[0] = f64::NAN;
        let cfg = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        match train(&net, &data, &cfg) {
            Err(Error::Training { epoch: 0, batch }) => assert!(batch < 4),
            other => panic!("expected training error, got {other:?}"),
        }
    }
}
