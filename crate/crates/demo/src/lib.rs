//! Browser bindings for three small operations of the `dualcycle` crate:
//! sentence scoring, MADE connectivity, and a toy joint trainer.
//!
//! Build with `wasm-pack build --target web crates/demo` and serve
//! `crates/demo/www` next to the generated `pkg/` directory.

pub mod ops;

use wasm_bindgen::prelude::*;

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// JSON `{tokens, bleu, rouge_1, rouge_2, rouge_l}`.
#[wasm_bindgen]
pub fn score_sentence(hypothesis: &str, references: &str) -> Result<String, JsError> {
    to_json(&ops::score_sentence(hypothesis, references).map_err(js)?)
}

/// JSON list of `{ordering, reach}`, one per ordering.
#[wasm_bindgen]
pub fn made_connectivity(dim: usize, hidden: usize, orderings: usize, seed: u32) -> Result<String, JsError> {
    to_json(&ops::made_connectivity(dim, hidden, orderings, u64::from(seed)).map_err(js)?)
}

#[wasm_bindgen]
pub struct ToyTrainer(ops::ToyCycle);

#[wasm_bindgen]
impl ToyTrainer {
    #[wasm_bindgen(constructor)]
    pub fn new(scheme: &str, seed: u32) -> Result<ToyTrainer, JsError> {
        ops::ToyCycle::new(scheme, u64::from(seed)).map(ToyTrainer).map_err(js)
    }

    pub fn scheme(&self) -> String {
        self.0.scheme()
    }

    /// JSON list of MR strings.
    pub fn example_mrs(&self) -> Result<String, JsError> {
        to_json(&self.0.example_mrs())
    }

    /// JSON list of `{epoch, primal, dual}`.
    pub fn train(&mut self, epochs: usize) -> Result<String, JsError> {
        to_json(&self.0.train(epochs).map_err(js)?)
    }

    pub fn generate(&self, mr: &str) -> Result<String, JsError> {
        self.0.generate(mr).map_err(js)
    }

    pub fn understand(&self, text: &str) -> Result<String, JsError> {
        self.0.understand(text).map_err(js)
    }
}
