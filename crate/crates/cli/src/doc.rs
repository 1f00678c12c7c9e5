//! Input documents.

use serde::{Deserialize, Serialize};
use strata::model::{AugmentedState, LayerState, NondimState, PhysParams};

use crate::CliError;

pub const SCHEMA: &str = "strata/1";

/// Dimensional state; `w1`/`w2` present together select the augmented system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFields {
    pub h1: f64,
    pub h2: f64,
    pub u1: f64,
    pub u2: f64,
    pub v1: f64,
    pub v2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFields {
    pub gamma: f64,
    pub g: f64,
    #[serde(default)]
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDocument {
    pub schema: String,
    pub params: ParamFields,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateFields>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nondim: Option<NondimState>,
    /// Bottom slope `(db/dx, db/dy)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_b: Option<[f64; 2]>,
}

/// A validated document.
#[derive(Debug, Clone, Copy)]
pub struct Resolved {
    pub params: PhysParams,
    pub layer: LayerState,
    pub augmented: Option<AugmentedState>,
}

fn check_schema(schema: &str) -> Result<(), CliError> {
    if schema != SCHEMA {
        return Err(CliError::Input(format!(
            "unsupported schema {schema:?}, expected {SCHEMA:?}"
        )));
    }
    Ok(())
}

impl StateDocument {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let doc: StateDocument = serde_json::from_str(text)
            .map_err(|e| CliError::Input(format!("state document: {e}")))?;
        doc.resolve()?;
        Ok(doc)
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        check_schema(&self.schema)?;
        let pf = self.params;
        let params = PhysParams::new(pf.gamma, pf.g, pf.f).map_err(input)?;
        if let Some([bx, by]) = self.grad_b {
            if !(bx.is_finite() && by.is_finite()) {
                return Err(CliError::Input("grad_b must be finite".into()));
            }
        }
        match (self.state, self.nondim) {
            (Some(s), None) => {
                let layer = LayerState::new(s.h1, s.h2, s.u1, s.u2, s.v1, s.v2).map_err(input)?;
                let augmented = match (s.w1, s.w2) {
                    (Some(w1), Some(w2)) => {
                        Some(AugmentedState::new(layer, w1, w2).map_err(input)?)
                    }
                    (None, None) => None,
                    _ => return Err(CliError::Input("w1 and w2 must be given together".into())),
                };
                Ok(Resolved {
                    params,
                    layer,
                    augmented,
                })
            }
            (None, Some(nd)) => {
                let nd = NondimState::new(nd.fx, nd.fy, nd.h).map_err(input)?;
                Ok(Resolved {
                    params,
                    layer: nd.to_layer_state(params.g),
                    augmented: None,
                })
            }
            (Some(_), Some(_)) => Err(CliError::Input(
                "give either state or nondim, not both".into(),
            )),
            (None, None) => Err(CliError::Input("missing state or nondim".into())),
        }
    }
}

fn input(e: strata::Error) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisVar {
    Fx,
    Fy,
    H,
    Gamma,
}

impl AxisVar {
    pub fn name(self) -> &'static str {
        match self {
            AxisVar::Fx => "fx",
            AxisVar::Fy => "fy",
            AxisVar::H => "h",
            AxisVar::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub var: AxisVar,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.n - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixed {
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub h: Option<f64>,
    pub gamma: Option<f64>,
}

impl Fixed {
    fn get(&self, var: AxisVar) -> Option<f64> {
        match var {
            AxisVar::Fx => self.fx,
            AxisVar::Fy => self.fy.or(Some(0.0)),
            AxisVar::H => self.h,
            AxisVar::Gamma => self.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionMapSpec {
    pub schema: String,
    pub x: Axis,
    pub y: Axis,
    #[serde(default)]
    pub fixed: Fixed,
}

/// One grid point of a region map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub fx: f64,
    pub fy: f64,
    pub h: f64,
    pub gamma: f64,
}

impl RegionMapSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: RegionMapSpec = serde_json::from_str(text)
            .map_err(|e| CliError::Input(format!("region map spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check_schema(&self.schema)?;
        if self.x.var == self.y.var {
            return Err(CliError::Input("axes must use different variables".into()));
        }
        for a in [&self.x, &self.y] {
            if a.n < 2 {
                return Err(CliError::Input(format!(
                    "axis {}: resolution must be >= 2",
                    a.var.name()
                )));
            }
            if !(a.min.is_finite() && a.max.is_finite() && a.min < a.max) {
                return Err(CliError::Input(format!(
                    "axis {}: need finite min < max",
                    a.var.name()
                )));
            }
        }
        for var in [AxisVar::Fx, AxisVar::Fy, AxisVar::H, AxisVar::Gamma] {
            if var == self.x.var || var == self.y.var {
                continue;
            }
            match self.fixed.get(var) {
                Some(v) if v.is_finite() => {}
                _ => {
                    return Err(CliError::Input(format!(
                        "missing finite fixed value for {}",
                        var.name()
                    )))
                }
            }
        }
        Ok(())
    }

    /// Grid point `(i, j)`: `i` indexes the x axis, `j` the y axis.
    pub fn point(&self, i: usize, j: usize) -> GridPoint {
        let value = |var: AxisVar| {
            if var == self.x.var {
                self.x.value(i)
            } else if var == self.y.var {
                self.y.value(j)
            } else {
                self.fixed.get(var).unwrap()
            }
        };
        GridPoint {
            fx: value(AxisVar::Fx),
            fy: value(AxisVar::Fy),
            h: value(AxisVar::H),
            gamma: value(AxisVar::Gamma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionsSpec {
    pub schema: String,
    pub h: f64,
    pub gammas: Vec<f64>,
}

impl ExpansionsSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: ExpansionsSpec = serde_json::from_str(text)
            .map_err(|e| CliError::Input(format!("expansions spec: {e}")))?;
        check_schema(&spec.schema)?;
        if !(spec.h.is_finite() && spec.h > 0.0) {
            return Err(CliError::Input(format!(
                "h must be positive, got {}",
                spec.h
            )));
        }
        if spec.gammas.is_empty() {
            return Err(CliError::Input("gamma list is empty".into()));
        }
        if let Some(g) = spec.gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
            return Err(CliError::Input(format!("gamma {g} outside (0, 1)")));
        }
        Ok(spec)
    }
}
