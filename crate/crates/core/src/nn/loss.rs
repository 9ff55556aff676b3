use crate::datagen::LabelSet;

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside the logarithms.
pub const BCE_EPS: f64 = 1e-7;

/// Binary cross-entropy summed over classes and averaged over the batch.
/// Returns the loss and `∂loss/∂p`.
pub fn bce_loss(probs: &[f64], labels: &[LabelSet], classes: usize) -> (f64, Vec<f64>) {
    assert_eq!(probs.len(), labels.len() * classes, "bce_loss: shape mismatch");
    let batch = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; probs.len()];
    for (s, label) in labels.iter().enumerate() {
        for c in 0..classes {
            let i = s * classes + c;
            let p = probs[i].clamp(BCE_EPS, 1.0 - BCE_EPS);
            let clamped = p != probs[i];
            if label.contains(c) {
                loss -= p.ln();
                grad[i] = if clamped { 0.0 } else { -1.0 / (p * batch) };
            } else {
                loss -= (1.0 - p).ln();
                grad[i] = if clamped { 0.0 } else { 1.0 / ((1.0 - p) * batch) };
            }
        }
    }
    (loss / batch, grad)
}
