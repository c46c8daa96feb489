use super::Parameterized;
use crate::error::Result;

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Layer index (in traversal order) holding the worst entry.
    pub worst_layer: usize,
    pub checked: usize,
}

/// Relative error with an absolute floor so exact zeros compare sanely.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradients left by `backprop` with central differences of
/// `loss`, perturbing every weight and bias by `step`.
pub fn check_gradients<P, L, B>(model: &mut P, step: f64, floor: f64, loss: L, backprop: B) -> Result<GradCheck>
where
    P: Parameterized,
    L: Fn(&P) -> Result<f64>,
    B: FnOnce(&mut P) -> Result<()>,
{
    model.zero_grad();
    backprop(model)?;
    let analytic: Vec<(Vec<f64>, Vec<f64>)> = model
        .layers()
        .iter()
        .map(|l| (l.grad_weight.iter().copied().collect(), l.grad_bias.to_vec()))
        .collect();

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_layer: 0,
        checked: 0,
    };
    for (li, (gw, gb)) in analytic.iter().enumerate() {
        for k in 0..gw.len() + gb.len() {
            let nudge = |m: &mut P, by: f64| {
                let mut layers = m.layers_mut();
                let layer = &mut layers[li];
                if k < gw.len() {
                    let cols = layer.weight.ncols();
                    layer.weight[[k / cols, k % cols]] += by;
                } else {
                    layer.bias[k - gw.len()] += by;
                }
            };
            let original = {
                let l = &model.layers()[li];
                if k < gw.len() {
                    let cols = l.weight.ncols();
                    l.weight[[k / cols, k % cols]]
                } else {
                    l.bias[k - gw.len()]
                }
            };
            nudge(model, step);
            let up = loss(model)?;
            nudge(model, -2.0 * step);
            let down = loss(model)?;
            // Restore exactly rather than trusting the float round trip.
            {
                let mut layers = model.layers_mut();
                let layer = &mut layers[li];
                if k < gw.len() {
                    let cols = layer.weight.ncols();
                    layer.weight[[k / cols, k % cols]] = original;
                } else {
                    layer.bias[k - gw.len()] = original;
                }
            }
            let numeric = (up - down) / (2.0 * step);
            let exact = if k < gw.len() { gw[k] } else { gb[k - gw.len()] };
            let err = relative_error(exact, numeric, floor);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_layer = li;
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
