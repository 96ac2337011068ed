//! Central finite-difference check of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::network::{Fusion, GradientSet, NetworkConfig, NetworkWeights, LAYER_NAMES, PATCH_SIDE};
use crate::error::Result;
use crate::tensor::Tensor;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct LayerCheck {
    pub layer: String,
    pub params: usize,
    pub worst_rel_error: f64,
    /// `"kernels[i]"` or `"bias[i]"`.
    pub worst_param: String,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub layers: Vec<LayerCheck>,
    pub max_rel_error: f64,
    /// Parameters whose step was reduced to avoid a kink.
    pub shrunk_steps: usize,
    pub passed: bool,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Three-view network with tiny layer widths, suitable for perturbing every
/// parameter. Biases are random as well: zero biases put pre-activations of
/// dead ReLU layers exactly on the kink.
pub fn micro_network(seed: u64) -> Result<NetworkWeights<f64>> {
    let cfg = NetworkConfig {
        branch_channels: [2, 3],
        head_width: 4,
        fusion: Fusion::Mean,
        n_views: 3,
    };
    let mut w = NetworkWeights::init(&cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    for l in w.layers_mut() {
        for b in l.bias.data_mut() {
            *b = rng.random_range(-0.2..0.2);
        }
    }
    Ok(w)
}

/// Random patch tuples of the given size with alternating labels.
pub fn random_batch(seed: u64, examples: usize, views: usize) -> Vec<(Vec<Tensor<f64>>, u8)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..examples)
        .map(|i| {
            let patches = (0..views)
                .map(|_| {
                    let data = (0..PATCH_SIDE * PATCH_SIDE).map(|_| rng.random::<f64>()).collect();
                    Tensor::from_vec(&[1, PATCH_SIDE, PATCH_SIDE], data).unwrap()
                })
                .collect();
            (patches, (i % 2) as u8)
        })
        .collect()
}

/// Compare `analytic` against central differences of the batch loss for
/// every kernel and bias entry.
pub fn check_gradients<F>(
    weights: &NetworkWeights<f64>,
    batch: &[(Vec<Tensor<f64>>, u8)],
    step: f64,
    tolerance: f64,
    analytic: F,
) -> Result<GradCheckReport>
where
    F: Fn(&NetworkWeights<f64>, &[(Vec<Tensor<f64>>, u8)]) -> Result<(f64, GradientSet<f64>)>,
{
    let (_, grads) = analytic(weights, batch)?;
    let mut layers = Vec::new();
    let mut probe = weights.clone();
    let mut shrunk = 0usize;
    for (li, name) in LAYER_NAMES.iter().enumerate() {
        let mut worst = LayerCheck {
            layer: name.to_string(),
            params: 0,
            worst_rel_error: 0.0,
            worst_param: String::new(),
            analytic: 0.0,
            numeric: 0.0,
        };
        for part in 0..2 {
            let len = {
                let l = probe.layers()[li];
                if part == 0 { l.kernels.len() } else { l.bias.len() }
            };
            worst.params += len;
            for i in 0..len {
                let original = {
                    let l = probe.layers()[li];
                    if part == 0 { l.kernels.data()[i] } else { l.bias.data()[i] }
                };
                let set = |w: &mut NetworkWeights<f64>, v: f64| {
                    let l = &mut w.layers_mut()[li];
                    if part == 0 {
                        l.kernels.data_mut()[i] = v;
                    } else {
                        l.bias.data_mut()[i] = v;
                    }
                };
                // Shrink the step while either side lands on a different
                // piece of the piecewise-smooth loss (a pool winner or ReLU
                // sign flipped), so the difference never straddles a kink.
                let (_, base_sig) = probe.loss_with_signature(batch)?;
                let mut h = step;
                let numeric = loop {
                    set(&mut probe, original + h);
                    let (plus, sig_p) = probe.loss_with_signature(batch)?;
                    set(&mut probe, original - h);
                    let (minus, sig_m) = probe.loss_with_signature(batch)?;
                    set(&mut probe, original);
                    if (sig_p == base_sig && sig_m == base_sig) || h < step * 1e-3 {
                        break (plus - minus) / (2.0 * h);
                    }
                    shrunk += 1;
                    h *= 0.1;
                };
                let g = grads.layers()[li];
                let a = if part == 0 { g.kernels.data()[i] } else { g.bias.data()[i] };
                let err = relative_error(a, numeric);
                if err >= worst.worst_rel_error {
                    worst.worst_rel_error = err;
                    worst.worst_param = format!("{}[{i}]", if part == 0 { "kernels" } else { "bias" });
                    worst.analytic = a;
                    worst.numeric = numeric;
                }
            }
        }
        layers.push(worst);
    }
    let max_rel_error = layers.iter().map(|l| l.worst_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        step,
        tolerance,
        passed: max_rel_error < tolerance,
        max_rel_error,
        shrunk_steps: shrunk,
        layers,
    })
}
