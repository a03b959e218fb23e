use serde::{Deserialize, Serialize};

use super::{Case, Report, Verdict};
use crate::error::{Error, Result};
use crate::estimates::quadrature::piecewise_constant_integral;
use crate::estimates::{bihari_bound_from_integral, gronwall_bound};
use crate::generators::RhoFunction;

/// `K` as a step function: `values[i]` on `[knots[i], knots[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseConstant {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

/// JSON input of the `bihari` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BihariConfig {
    pub c: f64,
    #[serde(rename = "K")]
    pub k: PiecewiseConstant,
    pub rho: String,
    pub t: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl BihariConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.k;
        if k.knots.len() != k.values.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "K needs one more knot than values, got {} knots and {} values",
                k.knots.len(),
                k.values.len()
            )));
        }
        if k.knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("K knots must be strictly increasing".into()));
        }
        if k.values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("K values must be >= 0".into()));
        }
        if !(self.c > 0.0) {
            return Err(Error::InvalidArgument(format!("c must be > 0, got {}", self.c)));
        }
        if !(self.t <= self.horizon) {
            return Err(Error::InvalidArgument(format!("need t <= T, got t = {}, T = {}", self.t, self.horizon)));
        }
        RhoFunction::by_name(&self.rho)?;
        Ok(())
    }
}

/// Evaluates `G⁻¹(G(c) + ∫_t^T K)`, plus `c e^{∫K}` for comparison.
pub fn run_bihari(cfg: &BihariConfig) -> Result<Report> {
    cfg.validate()?;
    let (mut report, started) = Report::start("bihari");
    let rho = RhoFunction::by_name(&cfg.rho)?;
    let integral = piecewise_constant_integral(&cfg.k.knots, &cfg.k.values, cfg.t, cfg.horizon);
    let result = bihari_bound_from_integral(cfg.c, integral, &rho)?;
    let mut case = Case::new(format!("rho = {}", rho.name()));
    case.record("bound", result.bound);
    case.record("g_of_c", result.g_of_c);
    case.record("integral_k", integral);
    case.record("gronwall", gronwall_bound(cfg.c, integral));
    case.verdict(Verdict::le("c <= bound", cfg.c, result.value()));
    if !result.in_domain() {
        report.notes.push("G(c) + int K exceeds sup G: the bound is infinite".into());
    }
    report.cases.push(case);
    Ok(report.finish(started))
}
