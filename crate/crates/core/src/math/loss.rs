use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// `-log p[target]` for a single distribution, with the log floor applied.
pub fn cross_entropy(g: &mut Graph, pred_dist: NodeId, target: usize) -> Result<NodeId> {
    let t = g.value(pred_dist);
    if t.rows() != 1 {
        return Err(Error::shape("cross_entropy takes a single distribution"));
    }
    if target >= t.cols() {
        return Err(Error::InvalidLabel(format!(
            "target {target} out of range for {} classes",
            t.cols()
        )));
    }
    let p = g.pick(pred_dist, &[target])?;
    let lp = g.log(p);
    let s = g.sum(lp);
    Ok(g.scale(s, -1.0))
}

/// Sum of `-weight[i] · log probs[i, targets[i]]` over rows. Rows with weight
/// zero (padding) contribute nothing; `targets` there may be any valid index.
pub fn masked_token_nll(
    g: &mut Graph,
    probs: NodeId,
    targets: &[usize],
    weights: &[f64],
) -> Result<NodeId> {
    if weights.len() != targets.len() {
        return Err(Error::contract("weights and targets differ in length"));
    }
    let p = g.pick(probs, targets)?;
    let lp = g.log(p);
    let w = g.input(Tensor::new(vec![weights.len(), 1], weights.to_vec())?);
    let wl = g.mul(lp, w)?;
    let s = g.sum(wl);
    Ok(g.scale(s, -1.0))
}

/// Mean over all entries of `-[t log p + (1 - t) log(1 - p)]`.
pub fn binary_cross_entropy(g: &mut Graph, pred: NodeId, target: &Tensor) -> Result<NodeId> {
    let pv = g.value(pred);
    if pv.len() != target.len() {
        return Err(Error::shape(format!(
            "bce: prediction {:?} vs target {:?}",
            pv.shape(),
            target.shape()
        )));
    }
    if let Some(bad) = target.data().iter().find(|&&t| t != 0.0 && t != 1.0) {
        return Err(Error::InvalidLabel(format!("bce target {bad} not in {{0,1}}")));
    }
    let shaped = Tensor::new(pv.shape().to_vec(), target.data().to_vec())?;
    let t = g.input(shaped.clone());
    let not_t = g.input(shaped.map(|v| 1.0 - v));
    let log_p = g.log(pred);
    let q = g.one_minus(pred);
    let log_q = g.log(q);
    let a = g.mul(t, log_p)?;
    let b = g.mul(not_t, log_q)?;
    let ll = g.add(a, b)?;
    let m = g.mean(ll);
    Ok(g.scale(m, -1.0))
}
