use rand::Rng;

use super::{embed, masked_update, zero_state, ModelDims, SeqInput};
use crate::error::{Error, Result};
use crate::math::{GruCell, Graph, NodeId, ParamId, ParamStore};

/// GRU encoder with a sigmoid multi-label head over the label space.
#[derive(Clone, Debug)]
pub struct NluModel {
    pub dims: ModelDims,
    pub store: ParamStore,
    emb: ParamId,
    gru: GruCell,
    w_out: ParamId,
    b_out: ParamId,
}

impl NluModel {
    pub fn new<R: Rng>(dims: ModelDims, rng: &mut R) -> Self {
        let mut store = ParamStore::new();
        let emb = store.add_uniform("nlu.embedding", &[dims.vocab, dims.embed], rng);
        let gru = GruCell::new(&mut store, "nlu.gru", dims.embed, dims.hidden, rng);
        let w_out = store.add_uniform("nlu.w_out", &[dims.labels, dims.hidden], rng);
        let b_out = store.add_zeros("nlu.b_out", &[dims.labels]);
        Self {
            dims,
            store,
            emb,
            gru,
            w_out,
            b_out,
        }
    }

    pub fn output_weights(&self) -> ParamId {
        self.w_out
    }

    pub fn output_bias(&self) -> ParamId {
        self.b_out
    }

    /// Label probabilities `[B x D]` from the last live hidden state of each
    /// sample. `shared_table` replaces the model's own embedding table.
    pub fn forward(
        &self,
        g: &mut Graph,
        input: &SeqInput,
        shared_table: Option<NodeId>,
    ) -> Result<NodeId> {
        if input.is_empty() || input.lengths().contains(&0) {
            return Err(Error::contract("understanding model needs a non-empty sequence"));
        }
        let table = match shared_table {
            Some(t) => t,
            None => g.param(&self.store, self.emb),
        };
        let mut h = zero_state(g, input.batch_size(), self.dims.hidden);
        for (step, mask) in input.steps.iter().zip(&input.masks) {
            let x = embed(g, table, step)?;
            let h_new = self.gru.step(g, &self.store, x, h)?;
            h = masked_update(g, h, h_new, mask)?;
        }
        let w = g.param(&self.store, self.w_out);
        let b = g.param(&self.store, self.b_out);
        let logits = g.affine(h, w, Some(b))?;
        Ok(g.sigmoid(logits))
    }
}
