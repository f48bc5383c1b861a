use rand::Rng;

use super::graph::{Graph, NodeId};
use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Gated recurrent unit.
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// c  = tanh(W_c x + U_c (r ⊙ h) + b_c)
/// h' = (1 - z) ⊙ h + z ⊙ c
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input_size: usize,
    pub hidden_size: usize,
    w_z: ParamId,
    u_z: ParamId,
    b_z: ParamId,
    w_r: ParamId,
    u_r: ParamId,
    b_r: ParamId,
    w_c: ParamId,
    u_c: ParamId,
    b_c: ParamId,
}

impl GruCell {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        let (e, h) = (input_size, hidden_size);
        let mut weight = |name: &str, cols: usize| {
            store.add_uniform(&format!("{prefix}.{name}"), &[h, cols], rng)
        };
        let w_z = weight("w_z", e);
        let u_z = weight("u_z", h);
        let w_r = weight("w_r", e);
        let u_r = weight("u_r", h);
        let w_c = weight("w_c", e);
        let u_c = weight("u_c", h);
        let b_z = store.add_zeros(&format!("{prefix}.b_z"), &[h]);
        let b_r = store.add_zeros(&format!("{prefix}.b_r"), &[h]);
        let b_c = store.add_zeros(&format!("{prefix}.b_c"), &[h]);
        Self {
            input_size,
            hidden_size,
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_c,
            u_c,
            b_c,
        }
    }

    /// Parameter ids in a fixed order, for tests that perturb weights.
    pub fn param_ids(&self) -> [ParamId; 9] {
        [
            self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_c, self.u_c,
            self.b_c,
        ]
    }

    /// One recurrence step on a batch: `x: [B x e]`, `h_prev: [B x h]`.
    pub fn step(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        h_prev: NodeId,
    ) -> Result<NodeId> {
        if g.value(x).cols() != self.input_size || g.value(h_prev).cols() != self.hidden_size {
            return Err(Error::shape(format!(
                "gru step expects input {} / hidden {}, got {:?} / {:?}",
                self.input_size,
                self.hidden_size,
                g.value(x).shape(),
                g.value(h_prev).shape()
            )));
        }
        let p = |g: &mut Graph, id| g.param(store, id);
        let gate = |g: &mut Graph, w, u, b, hin: NodeId| -> Result<NodeId> {
            let (w, u, b) = (p(g, w), p(g, u), p(g, b));
            let from_x = g.affine(x, w, Some(b))?;
            let from_h = g.affine(hin, u, None)?;
            g.add(from_x, from_h)
        };
        let z_pre = gate(g, self.w_z, self.u_z, self.b_z, h_prev)?;
        let z = g.sigmoid(z_pre);
        let r_pre = gate(g, self.w_r, self.u_r, self.b_r, h_prev)?;
        let r = g.sigmoid(r_pre);
        let rh = g.mul(r, h_prev)?;
        let c_pre = gate(g, self.w_c, self.u_c, self.b_c, rh)?;
        let c = g.tanh(c_pre);
        g.blend(z, h_prev, c)
    }
}
