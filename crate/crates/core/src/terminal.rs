//! Terminal conditions `ξ`, evaluated on the path state at the horizon.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::PathContext;

type TerminalFn = dyn Fn(&PathContext) -> f64 + Send + Sync;

/// A named functional of the path at time `T`.
#[derive(Clone)]
pub struct TerminalFunctional {
    name: String,
    value: Arc<TerminalFn>,
}

impl fmt::Debug for TerminalFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("TerminalFunctional").field(&self.name).finish()
    }
}

impl TerminalFunctional {
    pub fn new(name: impl Into<String>, value: impl Fn(&PathContext) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, ctx: &PathContext) -> f64 {
        (self.value)(ctx)
    }

    /// `ξ + c`.
    pub fn shifted(&self, c: f64) -> Self {
        if c == 0.0 {
            return self.clone();
        }
        let inner = self.value.clone();
        Self {
            name: format!("{}{:+}", self.name, c),
            value: Arc::new(move |ctx| inner(ctx) + c),
        }
    }

    /// `k ξ`.
    pub fn scaled(&self, k: f64) -> Self {
        if k == 1.0 {
            return self.clone();
        }
        let inner = self.value.clone();
        Self {
            name: format!("{k}*{}", self.name),
            value: Arc::new(move |ctx| k * inner(ctx)),
        }
    }

    /// Looks up a catalog functional.
    ///
    /// * `x_T`, `w_T`: the state and the Brownian motion at `T`;
    /// * `tanh_x`, `clip_x` (`X_T` clipped to `[−1, 1]`): bounded Lipschitz functions
    ///   of `X_T`;
    /// * `pos_x`: `max(X_T, 0)`;
    /// * `one`, `zero`: constants;
    /// * `jump_indicator:j`, `jump_count:j`: `1{N_j(T) ≥ 1}` and `N_j(T)` for the
    ///   zero-based mark index `j`.
    pub fn by_name(name: &str, num_marks: usize) -> Result<Self> {
        let simple: Option<fn(&PathContext) -> f64> = match name {
            "x_T" => Some(|c| c.x),
            "w_T" => Some(|c| c.w),
            "tanh_x" => Some(|c| c.x.tanh()),
            "clip_x" => Some(|c| c.x.clamp(-1.0, 1.0)),
            "pos_x" => Some(|c| c.x.max(0.0)),
            "one" => Some(|_| 1.0),
            "zero" => Some(|_| 0.0),
            _ => None,
        };
        if let Some(f) = simple {
            return Ok(Self::new(name, f));
        }
        let (kind, idx) = name
            .split_once(':')
            .ok_or_else(|| Error::UnknownName(format!("terminal functional `{name}`")))?;
        let j: usize = idx
            .parse()
            .map_err(|_| Error::UnknownName(format!("terminal functional `{name}`")))?;
        if j >= num_marks {
            return Err(Error::InvalidArgument(format!(
                "`{name}` refers to mark {j}, model has {num_marks} marks"
            )));
        }
        match kind {
            "jump_indicator" => Ok(Self::new(name, move |c| if c.counts[j] >= 1 { 1.0 } else { 0.0 })),
            "jump_count" => Ok(Self::new(name, move |c| c.counts[j] as f64)),
            _ => Err(Error::UnknownName(format!("terminal functional `{name}`"))),
        }
    }

    pub fn catalog_names(num_marks: usize) -> Vec<String> {
        let mut names: Vec<String> = ["x_T", "w_T", "tanh_x", "clip_x", "pos_x", "one", "zero"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for j in 0..num_marks {
            names.push(format!("jump_indicator:{j}"));
            names.push(format!("jump_count:{j}"));
        }
        names
    }
}

/// Config form of a terminal functional: a bare catalog name or
/// `{"name": ..., "scale": k, "shift": c}` for `k ξ + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TerminalRef {
    Name(String),
    Spec {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<f64>,
    },
}

impl TerminalRef {
    pub fn name(&self) -> &str {
        match self {
            TerminalRef::Name(n) => n,
            TerminalRef::Spec { name, .. } => name,
        }
    }

    pub fn build(&self, num_marks: usize) -> Result<TerminalFunctional> {
        match self {
            TerminalRef::Name(n) => TerminalFunctional::by_name(n, num_marks),
            TerminalRef::Spec { name, scale, shift } => Ok(TerminalFunctional::by_name(name, num_marks)?
                .scaled(scale.unwrap_or(1.0))
                .shifted(shift.unwrap_or(0.0))),
        }
    }
}

impl From<&str> for TerminalRef {
    fn from(s: &str) -> Self {
        TerminalRef::Name(s.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_evaluates() {
        let counts = [2u32, 0];
        let ctx = PathContext::new(1.0, 0.7, -0.2, &counts);
        let v = |n: &str| TerminalFunctional::by_name(n, 2).unwrap().eval(&ctx);
        assert_eq!(v("x_T"), 0.7);
        assert_eq!(v("w_T"), -0.2);
        assert_eq!(v("jump_indicator:0"), 1.0);
        assert_eq!(v("jump_indicator:1"), 0.0);
        assert_eq!(v("jump_count:0"), 2.0);
        assert_eq!(v("clip_x"), 0.7);
        for n in TerminalFunctional::catalog_names(2) {
            assert!(TerminalFunctional::by_name(&n, 2).is_ok(), "{n}");
        }
    }

    #[test]
    fn bad_names() {
        assert!(TerminalFunctional::by_name("jump_count:2", 2).is_err());
        assert!(TerminalFunctional::by_name("y_T", 2).is_err());
        assert!(TerminalFunctional::by_name("jump_count:x", 2).is_err());
    }

    #[test]
    fn config_forms() {
        let a: TerminalRef = serde_json::from_str(r#""x_T""#).unwrap();
        assert_eq!(a, TerminalRef::Name("x_T".into()));
        let b: TerminalRef = serde_json::from_str(r#"{"name": "one", "shift": 0.5, "scale": 2}"#).unwrap();
        let counts: [u32; 0] = [];
        let ctx = PathContext::origin(1.0, &counts);
        assert_eq!(b.build(0).unwrap().eval(&ctx), 2.5);
    }
}
