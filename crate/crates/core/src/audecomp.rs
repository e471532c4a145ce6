//! Atomic-unit decomposition of linear projections.
//!
//! A projection `y = W x` is a sum of per-dimension contributions
//! `x_i * W[:,i]`. Each column `W[:,i]` is an atomic unit (AU); `x_i` is its
//! coefficient. This module exposes AU columns, per-AU contributions, and
//! the vocabulary direction an AU promotes through the LM head.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::model::{HookSite, Model, ModelConfig, SiteKind};
use crate::numerics::{matvec, Matrix, Vector};

/// Address of one atomic unit: a hook site plus a dimension within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AUId {
    pub site: HookSite,
    pub dim: usize,
}

impl AUId {
    pub fn new(site: HookSite, dim: usize) -> Self {
        Self { site, dim }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        self.site.validate(config)?;
        let site_dim = self.site.dim(config);
        if self.dim >= site_dim {
            return Err(Error::Param(format!(
                "AU dim {} out of range for site {} (dim {site_dim})",
                self.dim, self.site
            )));
        }
        Ok(())
    }
}

impl fmt::Display for AUId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.site, self.dim)
    }
}

/// One AU's share of a projection output: `contribution = coefficient * column`.
#[derive(Debug, Clone)]
pub struct AUContribution {
    pub au: AUId,
    pub coefficient: f32,
    pub column: Vector,
    pub contribution: Vector,
}

/// The weight column an AU names, for sites with a defined consuming
/// projection.
///
/// `AttnHeadOut(l, h, i)` maps to column `h * d_head + i` of layer `l`'s
/// `W_O`; `FfnHidden(l, i)` maps to column `i` of layer `l`'s `W_down`.
/// `FfnOut` and `Residual` AUs have no unique consuming projection and are
/// rejected.
pub fn au_column(model: &Model, au: &AUId) -> Result<Vector> {
    au.validate(model.config())?;
    match au.site.kind {
        SiteKind::AttnHeadOut => {
            let head = au.site.head.expect("validated");
            let col = head * model.config().d_head + au.dim;
            Ok(model.layer(au.site.layer).wo.column(col))
        }
        SiteKind::FfnHidden => Ok(model.layer(au.site.layer).w_down.column(au.dim)),
        SiteKind::FfnOut | SiteKind::Residual => Err(Error::UnsupportedSite(format!(
            "site {} has no unique consuming projection",
            au.site
        ))),
    }
}

/// Split `W x` into its per-AU contributions, stamped with AU identities
/// for `site`. The contributions sum back to `matvec(W, x)`.
pub fn decompose_projection(
    w: &Matrix,
    x: &Vector,
    site: HookSite,
) -> Result<Vec<AUContribution>> {
    if w.cols() != x.dim() {
        return Err(Error::Shape(format!(
            "decompose_projection: matrix is {}x{}, vector has dim {}",
            w.rows(),
            w.cols(),
            x.dim()
        )));
    }
    let mut out = Vec::with_capacity(x.dim());
    for i in 0..x.dim() {
        let coefficient = x.get(i);
        let column = w.column(i);
        let contribution = Vector::new(
            column
                .as_slice()
                .iter()
                .map(|&c| coefficient * c)
                .collect(),
        )?;
        out.push(AUContribution {
            au: AUId::new(site, i),
            coefficient,
            column,
            contribution,
        });
    }
    Ok(out)
}

/// Project an AU column into vocabulary space through the LM head.
///
/// The column is passed through the final norm gain only (elementwise); the
/// RMS division is skipped because it is input-dependent and undefined for a
/// lone column. The result is the unnormalized logit direction the AU
/// promotes.
pub fn au_logit_projection(model: &Model, au: &AUId) -> Result<Vector> {
    let column = au_column(model, au)?;
    let gained = Vector::new(
        column
            .as_slice()
            .iter()
            .zip(model.final_norm().as_slice())
            .map(|(&c, &g)| c * g)
            .collect(),
    )?;
    matvec(model.lm_head(), &gained)
}
