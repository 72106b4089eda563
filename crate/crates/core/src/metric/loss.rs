//! Cosine contrastive loss.

/// Pair label: 0 for a same-class pair, 1 for a different-class pair.
pub type PairLabel = u8;

pub const SIMILAR: PairLabel = 0;
pub const DISSIMILAR: PairLabel = 1;

/// `L(s, y) = (1 − y)(1 − s)² + y · max(s − m, 0)²`
pub fn contrastive_loss(s: f64, y: PairLabel, margin: f64) -> f64 {
    let y = f64::from(y);
    let hinge = (s - margin).max(0.0);
    (1.0 - y) * (1.0 - s).powi(2) + y * hinge * hinge
}

/// `dL/ds`.
pub fn contrastive_loss_ds(s: f64, y: PairLabel, margin: f64) -> f64 {
    let y = f64::from(y);
    -2.0 * (1.0 - y) * (1.0 - s) + 2.0 * y * (s - margin).max(0.0)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv)
}

/// Loss of a pair of raw (un-normalized) embedding-head outputs, composed
/// with L2 normalization and cosine similarity, with gradients for both inputs.
///
/// Returns `(loss, s, dL/du, dL/dv)`.
pub fn cosine_contrastive(u: &[f64], v: &[f64], y: PairLabel, margin: f64) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let s = (dot / (nu * nv)).clamp(-1.0, 1.0);
    let loss = contrastive_loss(s, y, margin);
    let g = contrastive_loss_ds(s, y, margin);
    // ds/du = v/(|u||v|) − s·u/|u|², symmetric for v.
    let du = u
        .iter()
        .zip(v)
        .map(|(a, b)| g * (b / (nu * nv) - s * a / (nu * nu)))
        .collect();
    let dv = v
        .iter()
        .zip(u)
        .map(|(b, a)| g * (a / (nu * nv) - s * b / (nv * nv)))
        .collect();
    (loss, s, du, dv)
}
