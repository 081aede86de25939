use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bundle::{BundleSpec, FiberShape};
use crate::center::MeasureSpace;
use crate::fiber::{FiberElement, MatrixBlock};
use crate::martingale::{LevelGenerators, WeightPattern};
use crate::presets::{generators_for, LevelPattern};

/// Exponents accepted by the harness; `q = p/(p−1)` is well conditioned for each.
pub const EXPONENT_MENU: [f64; 5] = [1.0, 1.5, 2.0, 3.0, 4.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    pub seed: u64,
    pub bundle: BundleConfig,
    pub tower: TowerConfig,
    #[serde(default = "default_exponents")]
    pub exponents: Vec<f64>,
    /// `"uniform"` (default), `"linear"` or an explicit list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsConfig>,
    /// Random trials per axiom report.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Feasible samples per duality check.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Random inputs for duality and martingale experiments.
    #[serde(default = "default_inputs")]
    pub inputs: usize,
    /// Held steps appended to each martingale for weighted averages.
    #[serde(default = "default_n_ext")]
    pub n_ext: usize,
    /// Inputs `x + h/n` for `n = 1..=double_sequence_len`.
    #[serde(default = "default_double_sequence_len")]
    pub double_sequence_len: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
}

fn default_exponents() -> Vec<f64> {
    vec![1.0, 2.0]
}
fn default_trials() -> usize {
    50
}
fn default_samples() -> usize {
    100
}
fn default_inputs() -> usize {
    5
}
fn default_n_ext() -> usize {
    1000
}
fn default_double_sequence_len() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    pub atoms: Vec<String>,
    pub measure: Vec<f64>,
    pub fibers: Vec<FiberConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    pub dims: Vec<usize>,
    pub trace_weights: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TowerMode {
    /// Each level is exactly the subalgebra its own generators describe;
    /// a non-nested tower is an error.
    #[default]
    Strict,
    /// Level `n` also contains the generators of all earlier levels.
    Cumulative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerConfig {
    #[serde(default)]
    pub mode: TowerMode,
    pub levels: Vec<LevelConfig>,
}

/// Exactly one of `pattern`, `per_atom` or `generators`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_atom: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<GeneratorConfig>>,
}

/// One generator at one atom: real and (optional) imaginary parts of every block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub atom: String,
    pub re: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsConfig {
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub trace: f64,
    pub axioms: f64,
    pub duality_violation: f64,
    pub duality_attainment: f64,
    pub inclusion: f64,
    pub composition: f64,
    pub martingale: f64,
    pub terminal: f64,
    pub pythagoras: f64,
    pub monotone: f64,
    pub double_sequence: f64,
    pub domination: f64,
    /// Relative gap `(sup_x − sup_σ)/sup_x` after extension.
    pub sup_gap: f64,
    /// Convergence threshold for the Cesàro verdict.
    pub cesaro: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            trace: 1e-10,
            axioms: 1e-9,
            duality_violation: 1e-9,
            duality_attainment: 1e-8,
            inclusion: 1e-10,
            composition: 1e-9,
            martingale: 1e-9,
            terminal: 1e-10,
            pythagoras: 1e-8,
            monotone: 1e-9,
            double_sequence: 1e-9,
            domination: 1e-9,
            sup_gap: 1e-3,
            cesaro: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    pub summary: String,
    pub traces: String,
    pub axioms: String,
    pub duality: String,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs {
            summary: "summary.json".into(),
            traces: "traces.csv".into(),
            axioms: "axioms.json".into(),
            duality: "duality.json".into(),
        }
    }
}

/// Schema errors, each prefixed by the path of the offending field.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Parses and validates a TOML experiment config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigErrors(vec![e.to_string()]))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigErrors> {
        let mut errs = Vec::new();
        let b = &self.bundle;
        if self.experiment_id.trim().is_empty() {
            errs.push("experiment_id: must not be empty".into());
        }
        if b.atoms.is_empty() {
            errs.push("bundle.atoms: need at least one atom".into());
        }
        for (i, a) in b.atoms.iter().enumerate() {
            if b.atoms[..i].contains(a) {
                errs.push(format!("bundle.atoms[{i}]: duplicate label {a:?}"));
            }
        }
        if b.measure.len() != b.atoms.len() {
            errs.push(format!(
                "bundle.measure: {} weights for {} atoms",
                b.measure.len(),
                b.atoms.len()
            ));
        }
        for (i, w) in b.measure.iter().enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                errs.push(format!("bundle.measure[{i}]: weight {w} must be finite and > 0"));
            }
        }
        if b.fibers.len() != b.atoms.len() {
            errs.push(format!(
                "bundle.fibers: {} fibers for {} atoms",
                b.fibers.len(),
                b.atoms.len()
            ));
        }
        for (i, f) in b.fibers.iter().enumerate() {
            if f.dims.is_empty() {
                errs.push(format!("bundle.fibers[{i}].dims: need at least one block"));
            }
            if let Some(j) = f.dims.iter().position(|&d| d == 0) {
                errs.push(format!("bundle.fibers[{i}].dims[{j}]: block dimension must be >= 1"));
            }
            if f.trace_weights.len() != f.dims.len() {
                errs.push(format!(
                    "bundle.fibers[{i}].trace_weights: {} weights for {} blocks",
                    f.trace_weights.len(),
                    f.dims.len()
                ));
            }
            for (j, c) in f.trace_weights.iter().enumerate() {
                if !(c.is_finite() && *c > 0.0) {
                    errs.push(format!(
                        "bundle.fibers[{i}].trace_weights[{j}]: {c} must be finite and > 0"
                    ));
                }
            }
        }
        if self.tower.levels.is_empty() {
            errs.push("tower.levels: need at least one level".into());
        }
        for (k, p) in self.exponents.iter().enumerate() {
            if !EXPONENT_MENU.contains(p) {
                errs.push(format!("exponents[{k}]: {p} is not one of {EXPONENT_MENU:?}"));
            }
        }
        if self.exponents.is_empty() {
            errs.push("exponents: need at least one exponent".into());
        }
        for (name, v) in [
            ("trials", self.trials),
            ("samples", self.samples),
            ("inputs", self.inputs),
            ("double_sequence_len", self.double_sequence_len),
        ] {
            if v == 0 {
                errs.push(format!("{name}: must be >= 1"));
            }
        }
        if let Err(e) = self.weight_pattern() {
            errs.push(format!("weights: {e}"));
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("trace", t.trace),
            ("axioms", t.axioms),
            ("duality_violation", t.duality_violation),
            ("duality_attainment", t.duality_attainment),
            ("inclusion", t.inclusion),
            ("composition", t.composition),
            ("martingale", t.martingale),
            ("terminal", t.terminal),
            ("pythagoras", t.pythagoras),
            ("monotone", t.monotone),
            ("double_sequence", t.double_sequence),
            ("domination", t.domination),
            ("sup_gap", t.sup_gap),
            ("cesaro", t.cesaro),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("tolerances.{name}: {v} must be finite and >= 0"));
            }
        }
        for (name, v) in [
            ("summary", &self.outputs.summary),
            ("traces", &self.outputs.traces),
            ("axioms", &self.outputs.axioms),
            ("duality", &self.outputs.duality),
        ] {
            if v.is_empty() || v.contains(['/', '\\']) || v == "." || v == ".." {
                errs.push(format!("outputs.{name}: {v:?} must be a plain file name"));
            }
        }
        // the remaining checks need a well-formed bundle
        if errs.is_empty() {
            match self.bundle_spec() {
                Err(e) => errs.push(format!("bundle: {e}")),
                Ok(bundle) => {
                    for (k, level) in self.tower.levels.iter().enumerate() {
                        if let Err(e) = level_generators(level, &bundle) {
                            errs.push(format!("tower.levels[{k}]{e}"));
                        }
                    }
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigErrors(errs))
        }
    }

    pub fn bundle_spec(&self) -> crate::Result<Arc<BundleSpec>> {
        let space = MeasureSpace::new(self.bundle.atoms.clone(), self.bundle.measure.clone())?;
        let fibers = self
            .bundle
            .fibers
            .iter()
            .map(|f| FiberShape::new(f.dims.clone(), f.trace_weights.clone()))
            .collect::<crate::Result<Vec<_>>>()?;
        BundleSpec::new(space, fibers)
    }

    pub fn weight_pattern(&self) -> Result<WeightPattern, String> {
        match &self.weights {
            None => Ok(WeightPattern::Uniform),
            Some(WeightsConfig::Named(s)) if s == "uniform" => Ok(WeightPattern::Uniform),
            Some(WeightsConfig::Named(s)) if s == "linear" => Ok(WeightPattern::Linear),
            Some(WeightsConfig::Named(s)) => Err(format!("unknown pattern {s:?} (uniform | linear | list)")),
            Some(WeightsConfig::Explicit(w)) => {
                if let Some(k) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                    Err(format!("[{k}] = {} is not positive", w[k]))
                } else {
                    Ok(WeightPattern::Explicit(w.clone()))
                }
            }
        }
    }

    /// Generators of every tower level, validated against the bundle.
    pub fn tower_generators(&self, bundle: &Arc<BundleSpec>) -> Result<Vec<LevelGenerators>, ConfigErrors> {
        let mut out = Vec::new();
        let mut errs = Vec::new();
        for (k, level) in self.tower.levels.iter().enumerate() {
            match level_generators(level, bundle) {
                Ok(g) => out.push(g),
                Err(e) => errs.push(format!("tower.levels[{k}]{e}")),
            }
        }
        if errs.is_empty() {
            Ok(out)
        } else {
            Err(ConfigErrors(errs))
        }
    }
}

fn pattern_generators(
    pattern: &str,
    bundle: &BundleSpec,
    i: usize,
) -> Result<Vec<FiberElement>, String> {
    let p: LevelPattern = pattern.parse().map_err(|e: crate::Error| e.to_string())?;
    generators_for(&p, bundle.fiber(i)).map_err(|e| e.to_string())
}

/// Errors are returned with a leading field suffix (e.g. `.pattern: …`).
fn level_generators(level: &LevelConfig, bundle: &Arc<BundleSpec>) -> Result<LevelGenerators, String> {
    let m = bundle.len();
    let labels = bundle.space().labels();
    match (&level.pattern, &level.per_atom, &level.generators) {
        (Some(p), None, None) => (0..m)
            .map(|i| pattern_generators(p, bundle, i).map_err(|e| format!(".pattern: {e} (atom {:?})", labels[i])))
            .collect(),
        (None, Some(map), None) => {
            if let Some(k) = map.keys().find(|k| !labels.contains(k)) {
                return Err(format!(".per_atom.{k}: unknown atom"));
            }
            (0..m)
                .map(|i| {
                    let p = map
                        .get(&labels[i])
                        .ok_or_else(|| format!(".per_atom: missing atom {:?}", labels[i]))?;
                    pattern_generators(p, bundle, i).map_err(|e| format!(".per_atom.{}: {e}", labels[i]))
                })
                .collect()
        }
        (None, None, Some(gens)) => {
            let mut out: LevelGenerators = vec![Vec::new(); m];
            for (g, gen) in gens.iter().enumerate() {
                let path = format!(".generators[{g}]");
                let i = labels
                    .iter()
                    .position(|l| *l == gen.atom)
                    .ok_or_else(|| format!("{path}.atom: unknown atom {:?}", gen.atom))?;
                out[i].push(explicit_generator(gen, bundle.fiber(i)).map_err(|e| format!("{path}: {e}"))?);
            }
            Ok(out)
        }
        _ => Err(": exactly one of pattern, per_atom, generators must be given".into()),
    }
}

fn explicit_generator(g: &GeneratorConfig, shape: &FiberShape) -> Result<FiberElement, String> {
    if g.re.len() != shape.dims.len() {
        return Err(format!("{} blocks given, fiber has {}", g.re.len(), shape.dims.len()));
    }
    if let Some(im) = &g.im {
        if im.len() != g.re.len() {
            return Err("re and im have different block counts".into());
        }
    }
    let mut blocks = Vec::with_capacity(g.re.len());
    for (j, re) in g.re.iter().enumerate() {
        let n = shape.dims[j];
        let im = g.im.as_ref().map(|im| &im[j]);
        let square = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !square(re) || im.is_some_and(|im| !square(im)) {
            return Err(format!("block {j} must be {n}×{n}"));
        }
        let rows = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| Complex64::new(re[r][c], im.map_or(0.0, |im| im[r][c])))
                    .collect()
            })
            .collect();
        blocks.push(MatrixBlock::from_rows(rows).map_err(|e| e.to_string())?);
    }
    FiberElement::new(blocks).map_err(|e| e.to_string())
}
