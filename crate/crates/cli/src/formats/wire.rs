//! Shared wire representations of sites and AU addresses.

use serde::{Deserialize, Serialize};

use austeer_core::audecomp::AUId;
use austeer_core::model::HookSite;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteWire {
    pub layer: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<usize>,
}

impl SiteWire {
    pub fn from_site(site: &HookSite) -> Self {
        Self {
            layer: site.layer,
            kind: site.kind.as_str().to_string(),
            head: site.head,
        }
    }

    pub fn to_site(&self) -> Result<HookSite> {
        let kind = self
            .kind
            .parse()
            .map_err(|e| CliError::data(format!("site kind `{}`: {e}", self.kind)))?;
        Ok(HookSite {
            layer: self.layer,
            kind,
            head: self.head,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuWire {
    pub layer: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<usize>,
    pub dim: usize,
}

impl AuWire {
    pub fn from_au(au: &AUId) -> Self {
        Self {
            layer: au.site.layer,
            kind: au.site.kind.as_str().to_string(),
            head: au.site.head,
            dim: au.dim,
        }
    }

    pub fn to_au(&self) -> Result<AUId> {
        let site = SiteWire {
            layer: self.layer,
            kind: self.kind.clone(),
            head: self.head,
        }
        .to_site()?;
        Ok(AUId::new(site, self.dim))
    }
}
