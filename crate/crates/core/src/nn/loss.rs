/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before
/// taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn clamped(p: f64) -> bool {
    !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p)
}

/// Binary cross-entropy `-[y ln p + (1 - y) ln(1 - p)]`.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = clamp(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `d bce_loss / d p`; zero where the clamp is active.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    if clamped(p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

/// `-ln dist[class]`.
pub fn categorical_ce(dist: &[f64], class: usize) -> f64 {
    -clamp(dist[class]).ln()
}

/// Gradient of [`categorical_ce`] with respect to every entry of `dist`.
pub fn categorical_ce_grad(dist: &[f64], class: usize) -> Vec<f64> {
    let mut g = vec![0.0; dist.len()];
    if !clamped(dist[class]) {
        g[class] = -1.0 / dist[class];
    }
    g
}
