use serde::{Deserialize, Serialize};

use super::{bce_with_logit, degenerate_label, sigmoid, AttackDataset, ResponseModel};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrConfig {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig { learning_rate: 1.0, epochs: 1000 }
    }
}

/// Logistic regression over the parity features; the constant feature acts
/// as the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(width: usize) -> Self {
        LinearModel { weights: vec![0.0; width] }
    }

    pub fn logit(&self, phi: &[f64]) -> f64 {
        self.weights.iter().zip(phi).map(|(w, x)| w * x).sum()
    }

    /// Mean cross-entropy over `ds`.
    pub fn loss(&self, ds: &AttackDataset) -> f64 {
        (0..ds.len()).map(|i| bce_with_logit(self.logit(ds.row(i)), ds.label(i))).sum::<f64>() / ds.len() as f64
    }

    /// Gradient of [`LinearModel::loss`] with respect to the weights.
    pub fn gradient(&self, ds: &AttackDataset) -> Vec<f64> {
        let mut g = vec![0.0; self.weights.len()];
        for i in 0..ds.len() {
            let row = ds.row(i);
            let err = sigmoid(self.logit(row)) - ds.label(i) as u8 as f64;
            for (gj, x) in g.iter_mut().zip(row) {
                *gj += err * x;
            }
        }
        let n = ds.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }
}

impl ResponseModel for LinearModel {
    fn predict(&self, phi: &[f64]) -> bool {
        self.logit(phi) > 0.0
    }
}

/// Full-batch gradient descent from zero weights.
pub fn train_lr(ds: &AttackDataset, cfg: &LrConfig) -> Result<LinearModel> {
    let mut model = LinearModel::zeros(ds.width());
    if let Some(label) = degenerate_label(ds)? {
        let bias = model.weights.len() - 1;
        model.weights[bias] = if label { 1.0 } else { -1.0 };
        return Ok(model);
    }
    for _ in 0..cfg.epochs {
        let g = model.gradient(ds);
        for (w, gj) in model.weights.iter_mut().zip(&g) {
            *w -= cfg.learning_rate * gj;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::super::tests::puf_dataset;
    use super::super::evaluate;
    use super::*;
    use crate::puf::PufInstance;
    use proptest::prelude::*;

    #[test]
    fn learns_an_unprotected_arbiter_puf() {
        let puf = PufInstance::new(64, 0.0, 17).unwrap();
        let ds = puf_dataset(&puf, 5000, 3);
        let (train, test) = ds.split(3000, 1).unwrap();
        let model = train_lr(&train, &LrConfig::default()).unwrap();
        let acc = evaluate(&model, &test).unwrap().fraction();
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn single_class_gives_constant_predictor() {
        let puf = PufInstance::new(16, 0.0, 2).unwrap();
        let ds = puf_dataset(&puf, 200, 4);
        let ones: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i)).collect();
        let only_ones = ds.subset(&ones);
        let model = train_lr(&only_ones, &LrConfig::default()).unwrap();
        assert_eq!(evaluate(&model, &ds).unwrap().fraction(), ds.prevalence());
        assert!(train_lr(&ds.subset(&[]), &LrConfig::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn flipping_labels_flips_predictions(seed in any::<u64>()) {
            let puf = PufInstance::new(16, 0.0, seed).unwrap();
            let ds = puf_dataset(&puf, 200, seed ^ 1);
            prop_assume!(ds.prevalence() > 0.0 && ds.prevalence() < 1.0);
            let cfg = LrConfig { epochs: 200, ..LrConfig::default() };
            let a = train_lr(&ds, &cfg).unwrap();
            let b = train_lr(&ds.with_flipped_labels(), &cfg).unwrap();
            for i in 0..ds.len() {
                let z = a.logit(ds.row(i));
                prop_assume!(z.abs() > 1e-9);
                prop_assert_ne!(a.predict(ds.row(i)), b.predict(ds.row(i)));
            }
        }
    }
}
