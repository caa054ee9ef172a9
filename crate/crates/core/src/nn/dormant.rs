use ndarray::{Array2, Axis};

pub const DEFAULT_DORMANT_THRESHOLD: f64 = 0.025;

/// Fraction of hidden neurons whose mean absolute activation, divided by
/// the mean over its layer, is at most `threshold`.
///
/// Each entry of `layers` is one layer's activations over a probe batch
/// (rows are probe items). A layer whose activations are all zero counts
/// as fully dormant.
pub fn dormant_ratio(layers: &[Array2<f64>], threshold: f64) -> f64 {
    let mut dormant = 0usize;
    let mut total = 0usize;
    for acts in layers {
        let width = acts.ncols();
        total += width;
        if acts.nrows() == 0 {
            dormant += width;
            continue;
        }
        let scores = acts.mapv(f64::abs).mean_axis(Axis(0)).expect("nonempty batch");
        let layer_mean = scores.mean().unwrap_or(0.0);
        if layer_mean <= 0.0 {
            dormant += width;
            continue;
        }
        dormant += scores.iter().filter(|&&s| s / layer_mean <= threshold).count();
    }
    if total == 0 {
        0.0
    } else {
        dormant as f64 / total as f64
    }
}
