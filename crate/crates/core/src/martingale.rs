//! Filtrations, `L_p(M, Φ)`-martingales and their weighted averages.
//!
//! Towers are finite, `M_1 ⊂ … ⊂ M_K`, and when `M_K = M` every limit along
//! the tower is attained at `K`. Statements about `n → ∞` for weighted
//! averages are emulated by holding `x_K` fixed for a number of extra steps.

use std::sync::Arc;

use serde::Serialize;

use crate::bundle::{random_section, same_bundle, BundleSpec, Section, SectionKind};
use crate::center::{center_sup, CenterElement};
use crate::condexp::{build_cond_exp, validate_subalgebra, CondExp, SubalgebraBasis};
use crate::error::{Error, Result};
use crate::fiber::FiberElement;
use crate::seeds::derive_seed;
use crate::trace::lp_norm;

/// A level whose basis leaves the next level by more than this is rejected.
pub const INCLUSION_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Filtration {
    bundle: Arc<BundleSpec>,
    levels: Vec<Arc<SubalgebraBasis>>,
    cond_exps: Vec<CondExp>,
    inclusion_residuals: Vec<f64>,
    terminal_is_full: bool,
}

/// Per-atom generator lists for each level.
pub type LevelGenerators = Vec<Vec<FiberElement>>;

/// Builds a tower in which level `n` is generated by the generators of
/// levels `1..=n`, so `M_n ⊂ M_{n+1}` by construction; inclusions are then
/// re-verified.
pub fn build_filtration(bundle: &Arc<BundleSpec>, levels_gens: Vec<LevelGenerators>) -> Result<Filtration> {
    let mut acc: LevelGenerators = vec![Vec::new(); bundle.len()];
    let mut levels = Vec::with_capacity(levels_gens.len());
    for gens in levels_gens {
        if gens.len() != bundle.len() {
            return Err(Error::ShapeMismatch(format!(
                "level has {} generator lists for {} atoms",
                gens.len(),
                bundle.len()
            )));
        }
        for (a, s) in acc.iter_mut().zip(gens) {
            a.extend(s);
        }
        levels.push(validate_subalgebra(bundle, acc.clone())?);
    }
    Filtration::from_levels(bundle, levels)
}

impl Filtration {
    /// A tower from independently validated levels; fails with an
    /// inconsistency error if some `M_n ⊄ M_{n+1}`.
    pub fn from_levels(bundle: &Arc<BundleSpec>, levels: Vec<SubalgebraBasis>) -> Result<Filtration> {
        if levels.is_empty() {
            return Err(Error::Usage("a filtration needs at least one level".into()));
        }
        if let Some(l) = levels.iter().find(|l| !same_bundle(l.bundle(), bundle)) {
            return Err(Error::StructureMismatch(format!(
                "level over a different bundle ({} atoms)",
                l.bundle().len()
            )));
        }
        let levels: Vec<Arc<SubalgebraBasis>> = levels.into_iter().map(Arc::new).collect();
        let cond_exps: Vec<CondExp> = levels.iter().cloned().map(build_cond_exp).collect();
        let mut inclusion_residuals = Vec::with_capacity(levels.len().saturating_sub(1));
        for n in 0..levels.len() - 1 {
            let r = inclusion_residual(&levels[n], &levels[n + 1]);
            if r > INCLUSION_TOL {
                return Err(Error::Inconsistency(format!(
                    "level {} is not contained in level {} (residual {r:e})",
                    n + 1,
                    n + 2
                )));
            }
            inclusion_residuals.push(r);
        }
        let terminal_is_full = levels.last().is_some_and(|l| l.is_full());
        Ok(Filtration {
            bundle: bundle.clone(),
            levels,
            cond_exps,
            inclusion_residuals,
            terminal_is_full,
        })
    }

    pub fn bundle(&self) -> &Arc<BundleSpec> {
        &self.bundle
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Arc<SubalgebraBasis>] {
        &self.levels
    }

    /// `E(·|M_n)` for `n = 1..=K` (index `n − 1`).
    pub fn cond_exps(&self) -> &[CondExp] {
        &self.cond_exps
    }

    pub fn cond_exp(&self, n: usize) -> &CondExp {
        &self.cond_exps[n]
    }

    /// `max` over basis vectors `e` of `M_n` of `‖e − E(e|M_{n+1})‖_2`.
    pub fn inclusion_residuals(&self) -> &[f64] {
        &self.inclusion_residuals
    }

    pub fn terminal_is_full(&self) -> bool {
        self.terminal_is_full
    }

    /// `max ‖E_m(E_n(x)) − E_{min(m,n)}(x)‖` over `trials` random `x` and all
    /// level pairs.
    pub fn composition_residual(&self, trials: usize, seed: u64) -> Result<f64> {
        let mut worst = 0.0f64;
        for t in 0..trials {
            let x = random_section(&self.bundle, derive_seed(seed, t as u64), SectionKind::General);
            let ex: Vec<Section> = self
                .cond_exps
                .iter()
                .map(|e| e.apply(&x))
                .collect::<Result<_>>()?;
            for (m, em) in self.cond_exps.iter().enumerate() {
                for (n, exn) in ex.iter().enumerate() {
                    let lhs = em.apply(exn)?;
                    worst = worst.max(lhs.max_abs_diff(&ex[m.min(n)])?);
                }
            }
        }
        Ok(worst)
    }
}

fn inclusion_residual(lower: &SubalgebraBasis, upper: &SubalgebraBasis) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..lower.bundle().len() {
        let w = &lower.bundle().fiber(i).trace_weights;
        for e in lower.basis(i) {
            let r = e.sub(&upper.project_fiber(i, e)).expect("same fiber shape");
            worst = worst.max(r.trace_inner(&r, w).re.max(0.0).sqrt());
        }
    }
    worst
}

#[derive(Clone, Debug)]
pub struct MartingaleSeq {
    filtration: Arc<Filtration>,
    elements: Vec<Section>,
    p: f64,
}

impl MartingaleSeq {
    /// Wraps `elements` after checking the martingale property at `tol`.
    pub fn new(filtration: Arc<Filtration>, elements: Vec<Section>, p: f64, tol: f64) -> Result<Self> {
        check_exponent(p)?;
        if !is_martingale(&elements, &filtration, tol)? {
            return Err(Error::ContractViolation(
                "sequence does not satisfy E(x_{n+1}|M_n) = x_n".into(),
            ));
        }
        Ok(MartingaleSeq {
            filtration,
            elements,
            p,
        })
    }

    pub fn filtration(&self) -> &Arc<Filtration> {
        &self.filtration
    }

    pub fn elements(&self) -> &[Section] {
        &self.elements
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// `sup_n ‖x_n‖_p`, pointwise over atoms.
    pub fn sup_norm(&self) -> Result<CenterElement<f64>> {
        let norms = self
            .elements
            .iter()
            .map(|x| lp_norm(x, self.p))
            .collect::<Result<Vec<_>>>()?;
        center_sup(&norms)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::Usage(format!("exponent must be finite and >= 1, got {p}")))
    }
}

/// `x_n = E(x|M_n)`.
pub fn martingale_from_target(x: &Section, f: &Arc<Filtration>, p: f64) -> Result<MartingaleSeq> {
    check_exponent(p)?;
    let elements = f
        .cond_exps()
        .iter()
        .map(|e| e.apply(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(MartingaleSeq {
        filtration: f.clone(),
        elements,
        p,
    })
}

/// `max_n max_ω ‖E(x_{n+1}|M_n) − x_n‖_1(ω)`, plus `‖x_1 − E(x_1|M_1)‖_1`
/// so that `x_1` is required to be `M_1`-measurable.
pub fn martingale_defect(seq: &[Section], f: &Filtration) -> Result<f64> {
    if seq.len() != f.depth() {
        return Err(Error::Usage(format!(
            "sequence of length {} for a tower of depth {}",
            seq.len(),
            f.depth()
        )));
    }
    let mut worst = 0.0f64;
    for (n, x) in seq.iter().enumerate() {
        let e = f.cond_exp(n);
        let d = e.apply(x)?.sub(x)?;
        worst = worst.max(lp_norm(&d, 1.0)?.max_value());
        if let Some(next) = seq.get(n + 1) {
            let d = e.apply(next)?.sub(x)?;
            worst = worst.max(lp_norm(&d, 1.0)?.max_value());
        }
    }
    Ok(worst)
}

/// Whether `seq` is adapted and `E(x_{n+1}|M_n) = x_n` within `tol` in `‖·‖_1`.
pub fn is_martingale(seq: &[Section], f: &Filtration, tol: f64) -> Result<bool> {
    Ok(martingale_defect(seq, f)? <= tol)
}

#[derive(Clone, Debug)]
pub struct MartingaleLimit {
    pub limit: Section,
    /// `max_n max_ω |E(x|M_n) − x_n|` (entrywise).
    pub consistency_residual: f64,
    /// `‖x_n − x‖_p` for each `n`.
    pub residual_trace: Vec<CenterElement<f64>>,
}

/// The `x` with `x_n = E(x|M_n)`; in a full finite tower this is `x_K`.
pub fn martingale_limit(seq: &MartingaleSeq) -> Result<MartingaleLimit> {
    let f = seq.filtration();
    if !f.terminal_is_full() {
        return Err(Error::Unsupported(
            "martingale limit needs a tower whose last level is the whole algebra".into(),
        ));
    }
    let limit = seq.elements().last().expect("non-empty tower").clone();
    let mut consistency = 0.0f64;
    let mut residual_trace = Vec::with_capacity(seq.elements().len());
    for (e, xn) in f.cond_exps().iter().zip(seq.elements()) {
        consistency = consistency.max(e.apply(&limit)?.max_abs_diff(xn)?);
        residual_trace.push(lp_norm(&xn.sub(&limit)?, seq.p())?);
    }
    Ok(MartingaleLimit {
        limit,
        consistency_residual: consistency,
        residual_trace,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoubleSequenceReport {
    pub p: f64,
    /// `grid[n][m] = max_ω ‖E(x_n|M_m) − x‖_p`.
    pub grid: Vec<Vec<f64>>,
    pub corner: f64,
    /// `max_ω ‖x_N − x‖_p`, how far the last input is from the target.
    pub input_tolerance: f64,
    /// Largest excess of a cell over `‖x_n − x‖_p + ‖E(x|M_m) − x‖_p`.
    pub triangle_violation: f64,
    /// Largest excess of `‖E(x_n|M_m) − E(x|M_m)‖_p` over `‖x_n − x‖_p`.
    pub contraction_violation: f64,
    pub pass: bool,
}

/// Slack on every inequality in [`double_sequence_check`].
pub const DOUBLE_SEQUENCE_SLACK: f64 = 1e-9;

/// Residuals of `E(x_n|M_m)` against `x` over the grid of input index `n`
/// and tower level `m`.
pub fn double_sequence_check(
    xs: &[Section],
    x: &Section,
    f: &Filtration,
    p: f64,
) -> Result<DoubleSequenceReport> {
    check_exponent(p)?;
    if !f.terminal_is_full() {
        return Err(Error::Unsupported(
            "double sequence check needs a tower whose last level is the whole algebra".into(),
        ));
    }
    if xs.is_empty() {
        return Err(Error::Usage("double sequence check needs at least one input".into()));
    }
    let ex: Vec<Section> = f.cond_exps().iter().map(|e| e.apply(x)).collect::<Result<_>>()?;
    let tower_res = ex
        .iter()
        .map(|y| lp_norm(&y.sub(x)?, p))
        .collect::<Result<Vec<_>>>()?;

    let mut grid = Vec::with_capacity(xs.len());
    let (mut triangle, mut contraction) = (0.0f64, 0.0f64);
    let mut input_res = Vec::with_capacity(xs.len());
    for xn in xs {
        let dn = lp_norm(&xn.sub(x)?, p)?;
        let mut row = Vec::with_capacity(f.depth());
        for (m, e) in f.cond_exps().iter().enumerate() {
            let exn = e.apply(xn)?;
            let cell = lp_norm(&exn.sub(x)?, p)?;
            let bound = dn.add(&tower_res[m])?;
            triangle = triangle.max(cell.sub(&bound)?.max_value());
            let c = lp_norm(&exn.sub(&ex[m])?, p)?;
            contraction = contraction.max(c.sub(&dn)?.max_value());
            row.push(cell.max_value());
        }
        grid.push(row);
        input_res.push(dn.max_value());
    }
    let corner = *grid.last().and_then(|r| r.last()).expect("non-empty grid");
    let input_tolerance = *input_res.last().expect("non-empty");
    let triangle_violation = triangle.max(0.0);
    let contraction_violation = contraction.max(0.0);
    let pass = corner <= input_tolerance + DOUBLE_SEQUENCE_SLACK
        && triangle_violation <= DOUBLE_SEQUENCE_SLACK
        && contraction_violation <= DOUBLE_SEQUENCE_SLACK;
    Ok(DoubleSequenceReport {
        p,
        grid,
        corner,
        input_tolerance,
        triangle_violation,
        contraction_violation,
        pass,
    })
}

/// Weight sequences `w_1, w_2, …`.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightPattern {
    /// `w_k = 1`.
    Uniform,
    /// `w_k = k`.
    Linear,
    Explicit(Vec<f64>),
}

impl WeightPattern {
    /// The first `n` weights; explicit lists shorter than `n` are an error.
    pub fn take(&self, n: usize) -> Result<Vec<f64>> {
        let w = match self {
            WeightPattern::Uniform => vec![1.0; n],
            WeightPattern::Linear => (1..=n).map(|k| k as f64).collect(),
            WeightPattern::Explicit(w) => {
                if w.len() < n {
                    return Err(Error::Usage(format!("{} explicit weights for {n} terms", w.len())));
                }
                w[..n].to_vec()
            }
        };
        check_weights(&w)?;
        Ok(w)
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    match w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(k) => Err(Error::Usage(format!("weight w_{} = {} is not positive", k + 1, w[k]))),
        None => Ok(()),
    }
}

/// `σ_n = W_n^{-1} Σ_{k≤n} w_k x_k` with `W_n = Σ_{k≤n} w_k`.
///
/// Computed incrementally as `σ_n = σ_{n−1} + (w_n/W_n)(x_n − σ_{n−1})`, which
/// reproduces a constant sequence exactly.
pub fn weighted_averages(xs: &[Section], w: &[f64]) -> Result<Vec<Section>> {
    if w.len() < xs.len() {
        return Err(Error::Usage(format!("{} weights for {} terms", w.len(), xs.len())));
    }
    check_weights(&w[..xs.len()])?;
    let mut out: Vec<Section> = Vec::with_capacity(xs.len());
    let mut total = 0.0;
    for (x, &wk) in xs.iter().zip(w) {
        total += wk;
        let next = match out.last() {
            None => x.clone(),
            Some(prev) => prev.add(&x.sub(prev)?.scale_real(wk / total))?,
        };
        out.push(next);
    }
    Ok(out)
}

/// `x_1, …, x_K, x_K, …, x_K` with `n_ext` extra copies of `x_K`.
pub fn extend_by_holding(xs: &[Section], n_ext: usize) -> Vec<Section> {
    let mut out = xs.to_vec();
    if let Some(last) = xs.last() {
        out.extend(std::iter::repeat_n(last.clone(), n_ext));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupComparison {
    pub sup_x: CenterElement<f64>,
    pub sup_sigma: CenterElement<f64>,
    /// `sup_x − sup_σ`.
    pub gap: CenterElement<f64>,
}

impl SupComparison {
    /// `max_ω max(0, sup_σ − sup_x)`.
    pub fn domination_violation(&self) -> f64 {
        self.gap.values().iter().map(|g| (-g).max(0.0)).fold(0.0, f64::max)
    }

    /// `max_ω gap(ω) / sup_x(ω)` over atoms with `sup_x > 0`.
    pub fn relative_gap(&self) -> f64 {
        self.gap
            .values()
            .iter()
            .zip(self.sup_x.values())
            .filter(|(_, s)| **s > 0.0)
            .map(|(g, s)| g / s)
            .fold(0.0, f64::max)
    }
}

/// Pointwise `sup_n ‖x_n‖_p` against `sup_n ‖σ_n‖_p` over the given range.
pub fn sup_norm_comparison(xs: &[Section], w: &[f64], p: f64) -> Result<SupComparison> {
    check_exponent(p)?;
    let sigma = weighted_averages(xs, w)?;
    let nx = xs.iter().map(|x| lp_norm(x, p)).collect::<Result<Vec<_>>>()?;
    let ns = sigma.iter().map(|s| lp_norm(s, p)).collect::<Result<Vec<_>>>()?;
    let sup_x = center_sup(&nx)?;
    let sup_sigma = center_sup(&ns)?;
    let gap = sup_x.sub(&sup_sigma)?;
    Ok(SupComparison {
        sup_x,
        sup_sigma,
        gap,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CesaroVerdict {
    BothConverge,
    NeitherConverges,
    ExactlyOne,
}

/// One row of a residual trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub experiment_id: String,
    pub n: usize,
    pub omega: String,
    pub residual_xp: f64,
    pub residual_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CesaroReport {
    pub p: f64,
    pub tol: f64,
    /// `‖x_n − y‖_p` over the extended run.
    pub residual_x: Vec<CenterElement<f64>>,
    /// `‖σ_n − y‖_p` over the extended run.
    pub residual_sigma: Vec<CenterElement<f64>>,
    pub comparison: SupComparison,
    pub verdict: CesaroVerdict,
}

impl CesaroReport {
    pub fn final_residual_x(&self) -> f64 {
        self.residual_x.last().map_or(0.0, CenterElement::max_value)
    }

    pub fn final_residual_sigma(&self) -> f64 {
        self.residual_sigma.last().map_or(0.0, CenterElement::max_value)
    }

    pub fn rows(&self, experiment_id: &str) -> Vec<TraceRow> {
        let mut out = Vec::new();
        for (n, (rx, rs)) in self.residual_x.iter().zip(&self.residual_sigma).enumerate() {
            for (i, omega) in rx.space().labels().iter().enumerate() {
                out.push(TraceRow {
                    experiment_id: experiment_id.to_string(),
                    n: n + 1,
                    omega: omega.clone(),
                    residual_xp: rx.get(i),
                    residual_sigma: rs.get(i),
                });
            }
        }
        out
    }
}

/// Tolerance used to decide whether the input is a martingale.
pub const MARTINGALE_TOL: f64 = 1e-9;

/// Convergence of `x_n` against that of `σ_n` to the limit `y = x_K`, over the
/// run extended by `n_ext` held steps.
pub fn cesaro_equivalence(
    seq: &MartingaleSeq,
    w: &WeightPattern,
    n_ext: usize,
    tol: f64,
) -> Result<CesaroReport> {
    if !is_martingale(seq.elements(), seq.filtration(), MARTINGALE_TOL)? {
        return Err(Error::ContractViolation(
            "cesaro_equivalence requires a martingale".into(),
        ));
    }
    let y = martingale_limit(seq)?.limit;
    let p = seq.p();
    let xs = extend_by_holding(seq.elements(), n_ext);
    let weights = w.take(xs.len())?;
    let sigma = weighted_averages(&xs, &weights)?;
    let residual_x = xs
        .iter()
        .map(|x| lp_norm(&x.sub(&y)?, p))
        .collect::<Result<Vec<_>>>()?;
    let residual_sigma = sigma
        .iter()
        .map(|s| lp_norm(&s.sub(&y)?, p))
        .collect::<Result<Vec<_>>>()?;
    let comparison = sup_norm_comparison(&xs, &weights, p)?;
    let last = |r: &[CenterElement<f64>]| r.last().map_or(0.0, CenterElement::max_value);
    let verdict = match (last(&residual_x) <= tol, last(&residual_sigma) <= tol) {
        (true, true) => CesaroVerdict::BothConverge,
        (false, false) => CesaroVerdict::NeitherConverges,
        _ => CesaroVerdict::ExactlyOne,
    };
    Ok(CesaroReport {
        p,
        tol,
        residual_x,
        residual_sigma,
        comparison,
        verdict,
    })
}
