//! Experiment runners: each reads an [`ExperimentConfig`], works on exact trees (and
//! for convergence also on Monte-Carlo paths), and returns a [`Report`] whose
//! verdicts carry the measured left and right sides of every asserted inequality.

mod apriori;
mod bihari;
mod comparison;
mod convergence;
mod counterexample;
mod solve;
mod truncation;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::estimates::quadrature::integrate;
use crate::generators::{generator_from_ref, ConditionReport, GeneratorRef, GeneratorSpec, SamplerConfig, CHECK_SLACK};
use crate::lattice::{ScenarioTree, SolverOptions, DEFAULT_TOL};
use crate::levy_model::{IncrementLaw, LevyModel, ModelConfig, TimeGrid};
use crate::mc_solver::{McConfig, McScheme, RegressionBasis};
use crate::terminal::{TerminalFunctional, TerminalRef};

pub use apriori::{measure_budget, run_apriori_check, stability_check, Budget, StabilityCheck};
pub use bihari::{run_bihari, BihariConfig, PiecewiseConstant};
pub use comparison::{default_comparison_suite, run_comparison, ComparisonCase};
pub use convergence::{run_convergence, McTreeGap};
pub use counterexample::{
    default_counterexample, run_counterexample, search_counterexample, CounterexampleInstance,
    SearchGrid,
};
pub use solve::{simulate, solve_lattice, solve_monte_carlo};
pub use truncation::run_truncation_study;

/// Quadrature tolerance for pathwise coefficient integrals.
const PATH_QUAD_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Fixed-point tolerance of the implicit tree scheme.
    pub fixed_point: f64,
    /// Slack in `Y ≤ Y' + tol`; defaults to ten times `fixed_point`.
    pub comparison: Option<f64>,
    /// Largest distance accepted at the finest truncation level.
    pub truncation: f64,
    /// Counterexample margin must exceed this multiple of `fixed_point`.
    pub counterexample_factor: f64,
    /// Number of bootstrap standard errors allowed between MC and tree.
    pub mc_standard_errors: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fixed_point: DEFAULT_TOL,
            comparison: None,
            truncation: 1e-12,
            counterexample_factor: 100.0,
            mc_standard_errors: 3.0,
        }
    }
}

impl Tolerances {
    pub fn comparison(&self) -> f64 {
        self.comparison.unwrap_or(10.0 * self.fixed_point)
    }

    fn validate(&self) -> Result<()> {
        let all = [
            ("fixed_point", self.fixed_point),
            ("comparison", self.comparison()),
            ("truncation", self.truncation),
            ("counterexample_factor", self.counterexample_factor),
            ("mc_standard_errors", self.mc_standard_errors),
        ];
        for (name, v) in all {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("tolerance `{name}` must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Lattice,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub paths: usize,
    pub degree: usize,
    pub count_features: bool,
    pub bootstrap: usize,
    pub law: IncrementLaw,
    pub scheme: McScheme,
    /// Tree node cap.
    pub node_cap: usize,
    /// Path counts for the standard-error scaling study.
    pub path_counts: Vec<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Lattice,
            paths: 100_000,
            degree: 3,
            count_features: false,
            bootstrap: 40,
            law: IncrementLaw::Lattice,
            scheme: McScheme::Implicit,
            node_cap: crate::lattice::DEFAULT_NODE_CAP,
            path_counts: vec![],
        }
    }
}

impl SolverConfig {
    pub fn mc_config(&self, paths: usize, seed: u64, opts: SolverOptions) -> McConfig {
        McConfig {
            paths,
            basis: self.basis(),
            seed,
            law: self.law,
            scheme: self.scheme,
            bootstrap: self.bootstrap,
            keep_grid: false,
            solver: opts,
        }
    }

    pub fn basis(&self) -> RegressionBasis {
        RegressionBasis {
            degree: self.degree,
            count_features: self.count_features,
            ..RegressionBasis::default()
        }
    }
}

/// JSON experiment description. Fields not used by an experiment are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub model: ModelConfig,
    /// One generator, or a pair `[f, f']` for comparisons.
    #[serde(default)]
    pub generators: Vec<GeneratorRef>,
    /// One terminal functional, or a pair `[ξ, ξ']`.
    #[serde(default)]
    pub terminals: Vec<TerminalRef>,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Increasing truncation levels `n₁ < n₂ < …`.
    #[serde(default)]
    pub truncation_levels: Vec<u32>,
    /// Step counts for refinement sweeps.
    #[serde(default)]
    pub refinements: Vec<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: &str, model: &LevyModel, grid: &TimeGrid) -> Self {
        Self {
            experiment: experiment.into(),
            model: ModelConfig::from_parts(model, grid),
            generators: vec![],
            terminals: vec![],
            solver: SolverConfig::default(),
            truncation_levels: vec![],
            refinements: vec![],
            tolerances: Tolerances::default(),
            sampler: None,
            seed: 0,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks that the model is valid, every referenced name exists and every
    /// tolerance is positive.
    pub fn validate(&self) -> Result<()> {
        let (model, _) = self.model.build()?;
        self.tolerances.validate()?;
        self.build_generators(&model)?;
        self.build_terminals(&model)?;
        if self.truncation_levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("truncation levels must be strictly increasing".into()));
        }
        if self.truncation_levels.first() == Some(&0) {
            return Err(Error::InvalidArgument("truncation levels must be >= 1".into()));
        }
        Ok(())
    }

    pub fn build_generators(&self, model: &LevyModel) -> Result<Vec<GeneratorSpec>> {
        self.generators.iter().map(|r| generator_from_ref(r, model)).collect()
    }

    pub fn build_terminals(&self, model: &LevyModel) -> Result<Vec<TerminalFunctional>> {
        self.terminals.iter().map(|r| r.build(model.num_marks())).collect()
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions::with_tol(self.tolerances.fixed_point)
    }

    pub fn sampler(&self) -> SamplerConfig {
        let mut s = self.sampler.unwrap_or_default();
        if self.sampler.is_none() {
            s.horizon = self.model.horizon;
        }
        s
    }

    pub fn build_tree(&self, model: &LevyModel, grid: &TimeGrid) -> Result<ScenarioTree> {
        crate::lattice::build_tree_with_cap(model, grid, self.solver.node_cap)
    }
}

/// Relation asserted by a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `lhs ≤ rhs`
    Le,
    /// `lhs > rhs`
    Gt,
    /// `lhs == rhs`
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Value>,
}

impl Verdict {
    pub fn new(name: impl Into<String>, lhs: f64, relation: Relation, rhs: f64) -> Self {
        let passed = match relation {
            Relation::Le => lhs <= rhs,
            Relation::Gt => lhs > rhs,
            Relation::Eq => lhs == rhs,
        };
        Self {
            name: name.into(),
            lhs,
            relation,
            rhs,
            passed,
            witness: None,
        }
    }

    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Le, rhs)
    }

    pub fn gt(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Gt, rhs)
    }

    pub fn eq(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::new(name, lhs, Relation::Eq, rhs)
    }

    /// Attaches a witness, kept only when the verdict failed.
    pub fn with_witness(mut self, witness: impl Serialize) -> Self {
        if !self.passed {
            self.witness = serde_json::to_value(witness).ok();
        }
        self
    }

    /// Attaches context regardless of the outcome.
    pub fn with_detail(mut self, detail: impl Serialize) -> Self {
        self.witness = serde_json::to_value(detail).ok();
        self
    }
}

/// One case of an experiment. Verdicts are only present when every precondition
/// passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub name: String,
    pub preconditions: Vec<Verdict>,
    pub preconditions_met: bool,
    pub verdicts: Vec<Verdict>,
    pub records: BTreeMap<String, Value>,
}

impl Case {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            preconditions: vec![],
            preconditions_met: true,
            verdicts: vec![],
            records: BTreeMap::new(),
        }
    }

    pub fn precondition(&mut self, v: Verdict) {
        self.preconditions_met &= v.passed;
        self.preconditions.push(v);
    }

    /// Adds a verdict unless a precondition failed.
    pub fn verdict(&mut self, v: Verdict) {
        if self.preconditions_met {
            self.verdicts.push(v);
        }
    }

    pub fn record(&mut self, key: &str, value: impl Serialize) {
        self.records
            .insert(key.into(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    pub fn passed(&self) -> bool {
        self.preconditions_met && self.verdicts.iter().all(|v| v.passed)
    }

    pub fn failed_verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub cases: Vec<Case>,
    pub notes: Vec<String>,
    /// Wall-clock time; the only field that varies between identical runs.
    pub timing: Timing,
}

impl Report {
    fn start(experiment: &str) -> (Self, Instant) {
        (
            Self {
                experiment: experiment.into(),
                cases: vec![],
                notes: vec![],
                timing: Timing { elapsed_ms: 0.0 },
            },
            Instant::now(),
        )
    }

    fn finish(mut self, started: Instant) -> Self {
        self.timing.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        self
    }

    /// True iff every case met its preconditions and every verdict passed.
    pub fn all_passed(&self) -> bool {
        !self.cases.is_empty() && self.cases.iter().all(Case::passed)
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.cases.iter().flat_map(|c| c.verdicts.iter())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The JSON report with the timing field removed.
    pub fn reproducible_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut v {
            map.remove("timing");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}_report.json", self.experiment.replace(['/', ' '], "_")));
        std::fs::write(&path, self.to_json()?)?;
        Ok(path)
    }

    /// CSV with one row per verdict: `case, verdict, lhs, relation, rhs, passed`.
    pub fn write_verdicts_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["case", "kind", "verdict", "lhs", "relation", "rhs", "passed"])?;
        for c in &self.cases {
            let rows = c
                .preconditions
                .iter()
                .map(|v| ("precondition", v))
                .chain(c.verdicts.iter().map(|v| ("verdict", v)));
            for (kind, v) in rows {
                let relation = match v.relation {
                    Relation::Le => "<=",
                    Relation::Gt => ">",
                    Relation::Eq => "==",
                };
                w.write_record([
                    c.name.as_str(),
                    kind,
                    v.name.as_str(),
                    &v.lhs.to_string(),
                    relation,
                    &v.rhs.to_string(),
                    &v.passed.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One line per case: `PASS`/`FAIL`/`UNMET` and the case name.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.cases {
            let tag = if !c.preconditions_met {
                "UNMET"
            } else if c.passed() {
                "PASS"
            } else {
                "FAIL"
            };
            out.push_str(&format!("{tag} {}\n", c.name));
            for v in c.failed_verdicts() {
                out.push_str(&format!("    {}: {} {:?} {} failed\n", v.name, v.lhs, v.relation, v.rhs));
            }
        }
        out
    }
}

/// Runs the experiment named in `cfg.experiment`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.experiment.as_str() {
        "comparison" | "compare" => run_comparison(cfg),
        "counterexample" => run_counterexample(cfg),
        "truncation" | "truncate-study" => run_truncation_study(cfg),
        "apriori" => run_apriori_check(cfg),
        "convergence" => run_convergence(cfg),
        other => Err(Error::UnknownName(format!("experiment `{other}`"))),
    }
}

/// `∫_{t_i}^{t_{i+1}} h(s, ctx_node) ds` along every tree path, accumulated forward:
/// returns the pathwise integral `∫_0^T h` at every leaf.
fn pathwise_integrals(tree: &ScenarioTree, h: impl Fn(f64, usize, usize) -> f64 + Sync) -> Vec<f64> {
    use rayon::prelude::*;
    let grid = tree.grid();
    let b = tree.branching();
    let mut acc = vec![0.0];
    for i in 0..grid.steps() {
        let (t0, t1) = (grid.time(i), grid.time(i + 1));
        let step: Vec<f64> = (0..tree.level(i).len())
            .into_par_iter()
            .map(|k| integrate(|s| h(s, i, k), t0, t1, PATH_QUAD_TOL).value)
            .collect();
        acc = (0..acc.len() * b).map(|c| acc[c / b] + step[c / b]).collect();
    }
    acc
}

/// Precondition verdict for a sampled condition check: the largest observed
/// `lhs − rhs` against the check's slack.
fn condition_verdict(report: &ConditionReport) -> Verdict {
    let mut v = Verdict::le(
        format!("{} sampled for {}", report.condition, report.generator),
        report.max_excess,
        CHECK_SLACK,
    );
    v.passed = report.passed;
    v.with_witness(&report.witness)
}

/// Probability-weighted mean of leaf values.
fn leaf_mean(tree: &ScenarioTree, v: &[f64]) -> f64 {
    let leaves = &tree.level(tree.steps()).prob;
    leaves.iter().zip(v).map(|(p, x)| p * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_validation() {
        let text = r#"{
            "experiment": "comparison",
            "model": {"drift": 0.0, "sigma": 1.0, "marks": [{"x": 0.5, "lambda": 1.0}], "T": 1.0, "steps": 3},
            "generators": [{"name": "zero"}, {"name": "constant", "value": 1.0}],
            "terminals": ["x_T", {"name": "x_T", "shift": 0.5}],
            "tolerances": {"fixed_point": 1e-12},
            "seed": 4
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.tolerances.comparison(), 1e-11);
        let back = ExperimentConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);

        let bad_name = text.replace("\"constant\"", "\"nope\"");
        assert!(ExperimentConfig::from_json(&bad_name).is_err());
        let bad_tol = text.replace("1e-12", "0.0");
        assert!(ExperimentConfig::from_json(&bad_tol).is_err());
        let bad_terminal = text.replace("\"x_T\",", "\"jump_count:3\",");
        assert!(ExperimentConfig::from_json(&bad_terminal).is_err());
    }

    #[test]
    fn verdict_relations() {
        assert!(Verdict::le("a", 1.0, 1.0).passed);
        assert!(!Verdict::le("a", f64::NAN, 1.0).passed);
        assert!(!Verdict::gt("a", 1.0, 1.0).passed);
        assert!(Verdict::eq("a", 0.0, 0.0).passed);
    }

    #[test]
    fn failed_precondition_suppresses_verdicts() {
        let mut c = Case::new("x");
        c.precondition(Verdict::le("pre", 2.0, 1.0));
        c.verdict(Verdict::le("v", 0.0, 1.0));
        assert!(c.verdicts.is_empty());
        assert!(!c.passed());
    }
}
