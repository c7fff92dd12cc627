//! Central finite-difference oracle for the reverse sweep.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest elementwise relative error over the compared entries.
    pub max_rel_err: f64,
    /// Entries compared (those with |g| above the floor).
    pub compared: usize,
    /// Total entries across all inputs.
    pub total: usize,
}

/// Compare analytic gradients of `loss_fn` against central differences.
///
/// `loss_fn` receives a fresh graph and one trainable leaf per input and
/// must return a scalar node. Entries where both gradients are below
/// `floor` in magnitude are skipped.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, floor: f64, loss_fn: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = loss_fn(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| g.grad(*v).expect("param leaf has a gradient").to_vec())
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let loss = loss_fn(&mut g, &vars)?;
        if g.value(loss).len() != 1 {
            return Err(Error::shape("gradcheck", "loss must be scalar"));
        }
        Ok(g.item(loss))
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut max_rel = 0.0f64;
    let mut compared = 0;
    let mut total = 0;
    for (i, input) in inputs.iter().enumerate() {
        for j in 0..input.len() {
            total += 1;
            let x0 = input.data()[j];
            work[i].data_mut()[j] = x0 + h;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = x0 - h;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = x0;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[i][j];
            let scale = a.abs().max(numeric.abs());
            if scale <= floor {
                continue;
            }
            compared += 1;
            max_rel = max_rel.max((a - numeric).abs() / scale);
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        compared,
        total,
    })
}
