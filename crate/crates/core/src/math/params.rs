use crate::error::{Error, Result};

/// A model whose trainable state is a fixed, ordered list of named blocks.
///
/// Gradients, optimizer moments and checkpoint tensors are all indexed by the
/// block order returned here.
pub trait Parameters {
    fn param_names(&self) -> Vec<String>;
    fn params(&self) -> Vec<&[f64]>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Gradients laid out like [`Parameters::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn new(blocks: Vec<Vec<f64>>) -> Self {
        Gradients { blocks }
    }

    pub fn zeros_like<P: Parameters + ?Sized>(model: &P) -> Self {
        Gradients {
            blocks: model.params().iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn extend(&mut self, other: Gradients) {
        self.blocks.extend(other.blocks);
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.blocks {
            for g in b.iter_mut() {
                *g *= factor;
            }
        }
    }

    pub fn check_matches<P: Parameters + ?Sized>(&self, model: &P) -> Result<()> {
        let params = model.params();
        if params.len() != self.blocks.len() {
            return Err(Error::shape("gradient block count", params.len(), self.blocks.len()));
        }
        let names = model.param_names();
        for ((p, g), name) in params.iter().zip(&self.blocks).zip(names) {
            if p.len() != g.len() {
                return Err(Error::shape(format!("gradient for {name}"), p.len(), g.len()));
            }
        }
        Ok(())
    }
}

/// Block names of `model`, each prefixed with `{prefix}.`.
pub fn prefixed_names<P: Parameters + ?Sized>(prefix: &str, model: &P) -> Vec<String> {
    model
        .param_names()
        .into_iter()
        .map(|n| format!("{prefix}.{n}"))
        .collect()
}

/// Copies every parameter value into one flat vector.
pub fn flatten_params<P: Parameters + ?Sized>(model: &P) -> Vec<f64> {
    model.params().iter().flat_map(|b| b.iter().copied()).collect()
}

/// Inverse of [`flatten_params`].
pub fn assign_flat<P: Parameters + ?Sized>(model: &mut P, flat: &[f64]) -> Result<()> {
    let total = model.param_count();
    if flat.len() != total {
        return Err(Error::shape("assign_flat", total, flat.len()));
    }
    let mut offset = 0;
    for block in model.params_mut() {
        let n = block.len();
        block.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    Ok(())
}
