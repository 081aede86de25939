use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use super::config::{ConfigErrors, ExperimentConfig, TowerMode};
use crate::bundle::{random_section, BundleSpec, Section, SectionKind};
use crate::condexp::{check_cond_exp_axioms, validate_subalgebra, AxiomReport};
use crate::error::Error;
use crate::martingale::{
    build_filtration, cesaro_equivalence, double_sequence_check, martingale_defect,
    martingale_from_target, martingale_limit, CesaroVerdict, Filtration, TraceRow,
};
use crate::seeds::derive_seed;
use crate::trace::{center_trace, duality_check, lp_norm, DualityReport};

/// Subsets of checks a run performs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    /// Everything below.
    Run,
    /// Trace axioms and conditional-expectation reports for every level.
    CheckAxioms,
    /// Duality reports for every exponent.
    CheckDuality,
    /// Martingale, double-sequence and weighted-average experiments.
    RunMartingale,
}

impl Command {
    fn axioms(self) -> bool {
        matches!(self, Command::Run | Command::CheckAxioms)
    }
    fn duality(self) -> bool {
        matches!(self, Command::Run | Command::CheckDuality)
    }
    fn martingale(self) -> bool {
        matches!(self, Command::Run | Command::RunMartingale)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub experiment_id: String,
    pub checks: Vec<CheckResult>,
    pub seed: u64,
    pub config_hash: String,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error("{0}")]
    Core(#[from] Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
/// Malformed command line (BSD `EX_USAGE`).
pub const EXIT_USAGE: i32 = 64;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Core(_) => EXIT_CONFIG,
            HarnessError::Io { .. } => EXIT_IO,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub fn read_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(super::config::parse_config(&text)?)
}

/// Accumulates the worst residual per check name, in first-seen order.
struct Checks {
    list: Vec<CheckResult>,
}

impl Checks {
    fn record(&mut self, name: &str, residual: f64, tolerance: f64) {
        let r = if residual.is_nan() { f64::INFINITY } else { residual };
        match self.list.iter_mut().find(|c| c.name == name) {
            Some(c) => c.worst_residual = c.worst_residual.max(r),
            None => self.list.push(CheckResult {
                name: name.to_string(),
                worst_residual: r,
                tolerance,
                pass: false,
            }),
        }
    }

    fn finish(mut self) -> Vec<CheckResult> {
        for c in &mut self.list {
            c.pass = c.worst_residual <= c.tolerance;
        }
        self.list
    }
}

#[derive(Serialize)]
struct LevelAxioms {
    level: usize,
    dims: Vec<usize>,
    report: AxiomReport,
}

#[derive(Serialize)]
struct DualityEntry {
    input: usize,
    report: DualityReport,
}

/// Everything a run produces, before it is written out.
pub struct Artifacts {
    pub summary: Summary,
    axioms: Vec<LevelAxioms>,
    duality: Vec<DualityEntry>,
    traces: Vec<TraceRow>,
}

fn build_tower(cfg: &ExperimentConfig, bundle: &Arc<BundleSpec>) -> Result<Filtration, HarnessError> {
    let gens = cfg.tower_generators(bundle)?;
    Ok(match cfg.tower.mode {
        TowerMode::Cumulative => build_filtration(bundle, gens)?,
        TowerMode::Strict => {
            let levels = gens
                .into_iter()
                .map(|g| validate_subalgebra(bundle, g))
                .collect::<Result<Vec<_>, _>>()?;
            Filtration::from_levels(bundle, levels)?
        }
    })
}

// Seed streams for the independent parts of a run.
const STREAM_TRACE: u64 = 1;
const STREAM_AXIOMS: u64 = 2;
const STREAM_DUALITY: u64 = 3;
const STREAM_MARTINGALE: u64 = 4;

/// Runs the checks selected by `cmd` and returns the artifacts in memory.
pub fn run_experiment(cfg: &ExperimentConfig, cmd: Command) -> Result<Artifacts, HarnessError> {
    cfg.validate()?;
    let bundle = cfg.bundle_spec()?;
    let f = Arc::new(build_tower(cfg, &bundle)?);
    let tol = &cfg.tolerances;
    let mut checks = Checks { list: Vec::new() };
    let mut axioms = Vec::new();
    let mut duality = Vec::new();
    let mut traces = Vec::new();

    if cmd.axioms() {
        trace_checks(cfg, &bundle, &mut checks);
        let seed = derive_seed(cfg.seed, STREAM_AXIOMS);
        for (n, e) in f.cond_exps().iter().enumerate() {
            let report = check_cond_exp_axioms(e, cfg.trials, derive_seed(seed, n as u64))?;
            for r in &report.residuals {
                checks.record(&format!("cond_exp.level{}.{}", n + 1, r.name), r.worst, tol.axioms);
            }
            axioms.push(LevelAxioms {
                level: n + 1,
                dims: e.target().dims(),
                report,
            });
        }
    }

    if cmd.duality() {
        let seed = derive_seed(cfg.seed, STREAM_DUALITY);
        for &p in &cfg.exponents {
            for k in 0..cfg.inputs {
                let s = derive_seed(seed, k as u64);
                let x = random_section(&bundle, derive_seed(s, 0), SectionKind::General);
                let report = duality_check(&x, p, cfg.samples, derive_seed(s, 1))?;
                checks.record(&format!("duality.p{p}.violation"), report.max_violation, tol.duality_violation);
                checks.record(
                    &format!("duality.p{p}.attainment"),
                    report.attainment_residual,
                    tol.duality_attainment,
                );
                checks.record(
                    &format!("duality.p{p}.feasibility"),
                    report.feasibility_residual,
                    tol.duality_violation,
                );
                duality.push(DualityEntry { input: k, report });
            }
        }
    }

    if cmd.martingale() {
        martingale_checks(cfg, &bundle, &f, &mut checks, &mut traces)?;
    }

    let summary = Summary {
        experiment_id: cfg.experiment_id.clone(),
        checks: checks.finish(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
    };
    Ok(Artifacts {
        summary,
        axioms,
        duality,
        traces,
    })
}

fn trace_checks(cfg: &ExperimentConfig, bundle: &Arc<BundleSpec>, checks: &mut Checks) {
    let tol = cfg.tolerances.trace;
    let seed = derive_seed(cfg.seed, STREAM_TRACE);
    for t in 0..cfg.trials {
        let s = derive_seed(seed, t as u64);
        let x = random_section(bundle, derive_seed(s, 0), SectionKind::General);
        let y = random_section(bundle, derive_seed(s, 1), SectionKind::General);
        let r = trace_axiom_residuals(&x, &y);
        checks.record("trace.traciality", r.traciality, tol);
        checks.record("trace.positivity", r.positivity, tol);
        checks.record("trace.faithfulness", r.faithfulness, tol);
    }
}

/// Residuals of the trace axioms on one pair of sections.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceAxiomResiduals {
    /// `max_ω max(|Φ(xy) − Φ(yx)|, |Φ(x*x) − Φ(xx*)|)`.
    pub traciality: f64,
    /// `max_ω max(−Re Φ(x*x), |Im Φ(x*x)|, 0)`.
    pub positivity: f64,
    /// Entry size of `x(ω)` on atoms where `Φ(x*x)(ω) < 1e-12`, measured
    /// against the `1e-5` bound (`0` when the bound holds).
    pub faithfulness: f64,
}

pub fn trace_axiom_residuals(x: &Section, y: &Section) -> TraceAxiomResiduals {
    let xy = center_trace(&x.mul(y).expect("same bundle"));
    let yx = center_trace(&y.mul(x).expect("same bundle"));
    let xsx = center_trace(&x.adjoint().mul(x).expect("same bundle"));
    let xxs = center_trace(&x.mul(&x.adjoint()).expect("same bundle"));
    let mut r = TraceAxiomResiduals {
        traciality: 0.0,
        positivity: 0.0,
        faithfulness: 0.0,
    };
    for i in 0..xy.len() {
        r.traciality = r
            .traciality
            .max((xy.get(i) - yx.get(i)).norm())
            .max((xsx.get(i) - xxs.get(i)).norm());
        let v = xsx.get(i);
        r.positivity = r.positivity.max(-v.re).max(v.im.abs());
        if v.re < 1e-12 {
            let size = x.fiber(i).max_abs();
            if size >= 1e-5 {
                r.faithfulness = r.faithfulness.max(size);
            }
        }
    }
    r
}

fn martingale_checks(
    cfg: &ExperimentConfig,
    bundle: &Arc<BundleSpec>,
    f: &Arc<Filtration>,
    checks: &mut Checks,
    traces: &mut Vec<TraceRow>,
) -> Result<(), HarnessError> {
    let tol = &cfg.tolerances;
    if !f.terminal_is_full() {
        return Err(Error::Unsupported(
            "martingale experiments need a tower whose last level is the whole algebra".into(),
        )
        .into());
    }
    let seed = derive_seed(cfg.seed, STREAM_MARTINGALE);
    let inclusion = f.inclusion_residuals().iter().copied().fold(0.0, f64::max);
    checks.record("martingale.inclusion", inclusion, tol.inclusion);
    checks.record(
        "martingale.composition",
        f.composition_residual(cfg.trials.min(20), derive_seed(seed, 0))?,
        tol.composition,
    );
    let restricted = (0..bundle.len())
        .map(|i| {
            let levels = f
                .levels()
                .iter()
                .map(|l| l.restrict(i))
                .collect::<Result<Vec<_>, _>>()?;
            Filtration::from_levels(&bundle.restrict(i), levels)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let weights = cfg.weight_pattern().map_err(|e| ConfigErrors(vec![format!("weights: {e}")]))?;

    for k in 0..cfg.inputs {
        let s = derive_seed(seed, k as u64 + 1);
        let x = random_section(bundle, derive_seed(s, 0), SectionKind::General);
        let h = random_section(bundle, derive_seed(s, 1), SectionKind::General);

        let seq2 = martingale_from_target(&x, f, 2.0)?;
        let nx2 = lp_norm(&x, 2.0)?;
        for xn in seq2.elements() {
            let a = lp_norm(xn, 2.0)?;
            let b = lp_norm(&x.sub(xn)?, 2.0)?;
            for i in 0..bundle.len() {
                let lhs = nx2.get(i).powi(2);
                let rhs = a.get(i).powi(2) + b.get(i).powi(2);
                checks.record("martingale.pythagoras", (lhs - rhs).abs(), tol.pythagoras);
            }
        }

        let defect = martingale_defect(seq2.elements(), f)?;
        checks.record("martingale.defect", defect, tol.martingale);
        let mut local_max = 0.0f64;
        for (i, rf) in restricted.iter().enumerate() {
            let local: Vec<Section> = seq2.elements().iter().map(|e| e.restrict(i)).collect();
            local_max = local_max.max(martingale_defect(&local, rf)?);
        }
        checks.record("martingale.fiberwise", (defect - local_max).abs(), tol.martingale);

        for &p in &cfg.exponents {
            let seq = martingale_from_target(&x, f, p)?;
            let nx = lp_norm(&x, p)?;
            let norms = seq
                .elements()
                .iter()
                .map(|e| lp_norm(e, p))
                .collect::<Result<Vec<_>, _>>()?;
            let bounded = seq.sup_norm()?.sub(&nx)?.max_value().max(0.0);
            checks.record(&format!("martingale.p{p}.bounded"), bounded, tol.monotone);
            let mut grow = 0.0f64;
            for w in norms.windows(2) {
                grow = grow.max(w[0].sub(&w[1])?.max_value());
            }
            checks.record(&format!("martingale.p{p}.norm_monotone"), grow.max(0.0), tol.monotone);

            let lim = martingale_limit(&seq)?;
            let mut decrease = 0.0f64;
            for w in lim.residual_trace.windows(2) {
                decrease = decrease.max(w[1].sub(&w[0])?.max_value());
            }
            checks.record(&format!("martingale.p{p}.residual_monotone"), decrease.max(0.0), tol.monotone);
            let terminal = lim.residual_trace.last().map_or(0.0, |c| c.max_value());
            checks.record(&format!("martingale.p{p}.terminal"), terminal, tol.terminal);
            checks.record(&format!("martingale.p{p}.limit"), lim.consistency_residual, tol.martingale);

            let xs = (1..=cfg.double_sequence_len)
                .map(|n| x.add(&h.scale_real(1.0 / n as f64)))
                .collect::<Result<Vec<_>, _>>()?;
            let ds = double_sequence_check(&xs, &x, f, p)?;
            checks.record(
                &format!("double_sequence.p{p}.corner"),
                (ds.corner - ds.input_tolerance).max(0.0),
                tol.double_sequence,
            );
            checks.record(&format!("double_sequence.p{p}.triangle"), ds.triangle_violation, tol.double_sequence);
            checks.record(
                &format!("double_sequence.p{p}.contraction"),
                ds.contraction_violation,
                tol.double_sequence,
            );

            let report = cesaro_equivalence(&seq, &weights, cfg.n_ext, tol.cesaro)?;
            checks.record(
                &format!("cesaro.p{p}.domination"),
                report.comparison.domination_violation(),
                tol.domination,
            );
            checks.record(&format!("cesaro.p{p}.sup_gap"), report.comparison.relative_gap(), tol.sup_gap);
            let verdict = if report.verdict == CesaroVerdict::BothConverge { 0.0 } else { 1.0 };
            checks.record(&format!("cesaro.p{p}.verdict"), verdict, 0.0);
            let depth = f.depth();
            traces.extend(
                report
                    .rows(&format!("{}/x{k}/p{p}", cfg.experiment_id))
                    .into_iter()
                    .filter(|r| keep_trace_row(r.n, depth, depth + cfg.n_ext)),
            );
        }
    }
    Ok(())
}

/// Every tower step is kept; held steps only at `n − K` a power of two and at the end.
fn keep_trace_row(n: usize, depth: usize, last: usize) -> bool {
    n <= depth || n == last || (n - depth).is_power_of_two()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

impl Artifacts {
    /// Writes the summary and whichever reports the run produced into `out`.
    pub fn write(&self, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
        let mut written = Vec::new();
        let o = &cfg.outputs;
        let path = out.join(&o.summary);
        write_file(&path, &json(&self.summary))?;
        written.push(path);
        if !self.axioms.is_empty() {
            let path = out.join(&o.axioms);
            write_file(&path, &json(&self.axioms))?;
            written.push(path);
        }
        if !self.duality.is_empty() {
            let path = out.join(&o.duality);
            write_file(&path, &json(&self.duality))?;
            written.push(path);
        }
        if !self.traces.is_empty() {
            let path = out.join(&o.traces);
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &self.traces {
                w.serialize(row).expect("in-memory csv");
            }
            let bytes = w.into_inner().expect("in-memory csv");
            write_file(&path, &bytes)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// The bundled fixture configs, by name.
pub const FIXTURES: [(&str, &str); 3] = [
    ("mat2_tower", include_str!("../../fixtures/mat2_tower.toml")),
    ("heterogeneous", include_str!("../../fixtures/heterogeneous.toml")),
    ("broken_tower", include_str!("../../fixtures/broken_tower.toml")),
];

/// Writes each fixture config as `<out>/<name>.toml` and its expected
/// outcome: the artifacts of a full run under `<out>/<name>/`, or the error
/// message as `<out>/<name>.error` for configs that must be rejected.
///
/// Returns whether every outcome matched its expectation (fixtures whose name
/// starts with `broken` are expected to fail with an inconsistency).
pub fn emit_fixtures(
    out: &Path,
    only: Option<&ExperimentConfig>,
    seed_override: Option<u64>,
) -> Result<bool, HarnessError> {
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut configs: Vec<(String, ExperimentConfig)> = Vec::new();
    match only {
        Some(cfg) => configs.push((cfg.experiment_id.clone(), cfg.clone())),
        None => {
            for (name, text) in FIXTURES {
                configs.push((name.to_string(), super::config::parse_config(text)?));
            }
        }
    }
    let mut ok = true;
    for (name, mut cfg) in configs {
        if let Some(s) = seed_override {
            cfg.seed = s;
        }
        write_file(&out.join(format!("{name}.toml")), cfg.to_toml().as_bytes())?;
        let expect_failure = name.starts_with("broken");
        match run_experiment(&cfg, Command::Run) {
            Ok(art) => {
                art.write(&cfg, &out.join(&name))?;
                ok &= art.summary.passed() && !expect_failure;
            }
            Err(HarnessError::Core(e)) => {
                write_file(&out.join(format!("{name}.error")), format!("{e}\n").as_bytes())?;
                ok &= expect_failure && matches!(e, Error::Inconsistency(_));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ok)
}
