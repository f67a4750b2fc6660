use serde::{Deserialize, Serialize};

/// One utterance/logical-form pair in a single language.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub pair_id: usize,
    pub language: String,
    /// Input token ids in the shared input vocabulary.
    pub utterance: Vec<usize>,
    /// Output token ids; identical across languages for one `pair_id`.
    pub logical_form: Vec<usize>,
    /// Optional context (schema) tokens, prepended to the utterance.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub context: Vec<usize>,
}

impl Example {
    /// Context followed by utterance: what the encoder reads.
    pub fn encoder_input(&self) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.context.len() + self.utterance.len());
        v.extend_from_slice(&self.context);
        v.extend_from_slice(&self.utterance);
        v
    }
}

/// A scalar regression observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}
