use crate::error::{config_err, input_err, Result};
use crate::ndgrad::{Graph, Var};
use crate::scalar::Real;

/// Sum over sources of the mean absolute error between each predicted and
/// target magnitude. Each pair may carry a batch axis; the mean then also
/// runs over the batch.
pub fn sep_loss<T: Real>(g: &mut Graph<T>, preds: &[Var], targets: &[Var]) -> Result<Var> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(input_err!(
            "separation loss needs matching non-empty lists, got {} predictions and {} targets",
            preds.len(),
            targets.len()
        ));
    }
    let mut total = g.l1_loss(preds[0], targets[0])?;
    for (&p, &t) in preds.iter().zip(targets).skip(1) {
        let term = g.l1_loss(p, t)?;
        total = g.add(total, term)?;
    }
    Ok(total)
}

/// `1 - cos(pooled, target)`, averaged over rows for `[N,D]` inputs.
/// The target is expected to be a constant leaf.
pub fn align_loss<T: Real>(g: &mut Graph<T>, pooled: Var, target: Var) -> Result<Var> {
    let sim = g.cosine_similarity(pooled, target)?;
    let sim = g.mean(sim)?;
    g.affine(sim, -T::one(), T::one())
}

/// `sep + lambda * align`. With `lambda == 0` the alignment term is left
/// off the graph entirely, so it cannot reach any gradient.
pub fn total_loss<T: Real>(g: &mut Graph<T>, sep: Var, align: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(config_err!("lambda must be finite and >= 0, got {lambda}"));
    }
    if lambda == 0.0 {
        return Ok(sep);
    }
    let weighted = g.scale(align, T::c(lambda))?;
    g.add(sep, weighted)
}
