use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    Original,
    Linear,
    Autoencoder,
    Denoising,
    Variational,
}

impl ViewKind {
    pub fn short_name(self) -> &'static str {
        match self {
            ViewKind::Original => "original",
            ViewKind::Linear => "linear",
            ViewKind::Autoencoder => "ae",
            ViewKind::Denoising => "dae",
            ViewKind::Variational => "vae",
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Views of a batch of samples: view `v` of sample `i` is row `i` of
/// `views[v]`. Order is always original, linear, autoencoder, then the
/// generative (denoising or variational) view, with absent views omitted.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewStack {
    kinds: Vec<ViewKind>,
    views: Vec<Matrix>,
}

impl ViewStack {
    /// A stack holding only the original vectors.
    pub fn single(original: Matrix) -> Self {
        ViewStack {
            kinds: vec![ViewKind::Original],
            views: vec![original],
        }
    }

    /// Builds a stack from explicit parts without enforcing the canonical
    /// order. Views must share one shape.
    pub fn from_parts(kinds: Vec<ViewKind>, views: Vec<Matrix>) -> Result<Self> {
        if kinds.len() != views.len() {
            return Err(Error::shape("view kinds", views.len(), kinds.len()));
        }
        if views.is_empty() {
            return Err(Error::Usage("a view stack needs at least one view".into()));
        }
        let shape = views[0].shape();
        for (k, v) in kinds.iter().zip(&views) {
            if v.shape() != shape {
                return Err(Error::shape(
                    format!("{k} view"),
                    format!("{}×{}", shape.0, shape.1),
                    format!("{}×{}", v.rows(), v.cols()),
                ));
            }
        }
        Ok(ViewStack { kinds, views })
    }

    pub fn kinds(&self) -> &[ViewKind] {
        &self.kinds
    }

    pub fn views(&self) -> &[Matrix] {
        &self.views
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    pub fn samples(&self) -> usize {
        self.views[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.views[0].cols()
    }

    /// The views of one sample, in stack order.
    pub fn sample(&self, i: usize) -> Vec<&[f64]> {
        self.views.iter().map(|v| v.row(i)).collect()
    }

    pub fn select(&self, indices: &[usize]) -> ViewStack {
        ViewStack {
            kinds: self.kinds.clone(),
            views: self.views.iter().map(|v| v.select_rows(indices)).collect(),
        }
    }

    /// Per-sample concatenation of all views: `samples × (view_count · dim)`.
    pub fn concat_features(&self) -> Matrix {
        let parts: Vec<&Matrix> = self.views.iter().collect();
        Matrix::hconcat(&parts).expect("views share a row count")
    }
}

/// Assembles the canonical view order, checking every view against the
/// original's shape.
pub fn build_view_stack(
    original: Matrix,
    linear: Option<Matrix>,
    autoencoder: Option<Matrix>,
    generative: Option<(ViewKind, Matrix)>,
) -> Result<ViewStack> {
    let mut kinds = vec![ViewKind::Original];
    let mut views = vec![original];
    if let Some(v) = linear {
        kinds.push(ViewKind::Linear);
        views.push(v);
    }
    if let Some(v) = autoencoder {
        kinds.push(ViewKind::Autoencoder);
        views.push(v);
    }
    if let Some((kind, v)) = generative {
        if !matches!(kind, ViewKind::Denoising | ViewKind::Variational) {
            return Err(Error::Usage(format!("{kind} is not a generative view")));
        }
        kinds.push(kind);
        views.push(v);
    }
    ViewStack::from_parts(kinds, views)
}
