//! Trace-preserving conditional expectations onto unital *-subalgebras.
//!
//! `E(·|N)` is computed fiberwise as the orthogonal projection of `M(ω)` onto
//! `N(ω)` in the trace inner product `⟨a, b⟩_ω = τ_ω(b* a)`. In finite
//! dimension this map is the unique positive unital `N`-bimodule map that
//! preserves `Φ`, and its `L_p` extension is the same linear map.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bundle::{random_section, same_bundle, BundleSpec, FiberShape, Section, SectionKind};
use crate::error::{Error, Result};
use crate::fiber::{self, FiberElement};
use crate::seeds::derive_seed;
use crate::trace::{center_trace, lp_norm, scalarize, ScalarizationWeights};

/// Gram–Schmidt drops a candidate whose residual (relative to its norm)
/// falls below this.
pub const PIVOT_TOL: f64 = 1e-10;
/// `𝟙` must lie in the span within this residual.
pub const UNIT_TOL: f64 = 1e-10;
/// Products and adjoints of basis elements must stay in the span within this.
pub const CLOSURE_TOL: f64 = 1e-9;
/// Orthonormalized basis must have Gram matrix `I` within this.
pub const GRAM_TOL: f64 = 1e-10;

/// A validated unital *-subalgebra `N ⊂ M`, one orthonormal basis per atom.
#[derive(Clone, Debug)]
pub struct SubalgebraBasis {
    bundle: Arc<BundleSpec>,
    generators: Vec<Vec<FiberElement>>,
    basis: Vec<Vec<FiberElement>>,
}

impl SubalgebraBasis {
    pub fn bundle(&self) -> &Arc<BundleSpec> {
        &self.bundle
    }

    /// The generators as given, before closure.
    pub fn generators(&self) -> &[Vec<FiberElement>] {
        &self.generators
    }

    /// Orthonormal basis of `N(ω_i)` for the trace inner product.
    pub fn basis(&self, i: usize) -> &[FiberElement] {
        &self.basis[i]
    }

    /// `dim N(ω_i)`.
    pub fn dim(&self, i: usize) -> usize {
        self.basis[i].len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.basis.iter().map(Vec::len).collect()
    }

    /// `N = M`.
    pub fn is_full(&self) -> bool {
        (0..self.bundle.len()).all(|i| self.dim(i) == self.bundle.fiber(i).algebra_dim())
    }

    /// The same subalgebra over the single-atom bundle `{ω_i}`, rebuilt from
    /// the generators at `ω_i` alone.
    pub fn restrict(&self, i: usize) -> Result<SubalgebraBasis> {
        validate_subalgebra(&self.bundle.restrict(i), vec![self.generators[i].clone()])
    }

    /// Orthogonal projection of `a ∈ M(ω_i)` onto `N(ω_i)`.
    pub fn project_fiber(&self, i: usize, a: &FiberElement) -> FiberElement {
        project(&self.basis[i], &self.bundle.fiber(i).trace_weights, a)
    }
}

fn project(basis: &[FiberElement], weights: &[f64], a: &FiberElement) -> FiberElement {
    let mut out = FiberElement::zeros(&a.shape());
    for e in basis {
        let c = a.trace_inner(e, weights);
        out = out.add_scaled(c, e).expect("basis matches fiber shape");
    }
    out
}

fn trace_norm2(a: &FiberElement, weights: &[f64]) -> f64 {
    a.trace_inner(a, weights).re.max(0.0).sqrt()
}

/// Incremental orthonormal basis with reorthogonalization.
struct Orthonormalizer<'a> {
    weights: &'a [f64],
    basis: Vec<FiberElement>,
}

impl Orthonormalizer<'_> {
    /// Adds `a` if it is not already in the span; returns whether it was added.
    fn push(&mut self, a: &FiberElement) -> Result<bool> {
        let norm = trace_norm2(a, self.weights);
        if norm == 0.0 {
            if a.max_abs() > 0.0 {
                return Err(Error::ContractViolation(
                    "trace inner product is degenerate on a nonzero element".into(),
                ));
            }
            return Ok(false);
        }
        let mut r = a.scale_real(1.0 / norm);
        for _ in 0..2 {
            r = r.sub(&project(&self.basis, self.weights, &r))?;
        }
        let rn = trace_norm2(&r, self.weights);
        if rn <= PIVOT_TOL {
            return Ok(false);
        }
        self.basis.push(r.scale_real(1.0 / rn));
        Ok(true)
    }
}

fn close_fiber(shape: &FiberShape, gens: &[FiberElement]) -> Result<Vec<FiberElement>> {
    let cap = shape.algebra_dim();
    let mut on = Orthonormalizer {
        weights: &shape.trace_weights,
        basis: Vec::new(),
    };
    on.push(&FiberElement::identity(&shape.dims))?;
    for g in gens {
        on.push(g)?;
        on.push(&g.adjoint())?;
    }
    loop {
        let snapshot = on.basis.clone();
        let mut added = false;
        for a in &snapshot {
            added |= on.push(&a.adjoint())?;
            for b in &snapshot {
                added |= on.push(&a.mul(b)?)?;
            }
        }
        if on.basis.len() > cap {
            return Err(Error::Inconsistency(format!(
                "closure reached dimension {} > {cap}",
                on.basis.len()
            )));
        }
        if !added {
            break;
        }
    }
    Ok(on.basis)
}

fn post_validate(label: &str, shape: &FiberShape, basis: &[FiberElement]) -> Result<()> {
    let w = &shape.trace_weights;
    let residual = |a: &FiberElement| {
        a.sub(&project(basis, w, a))
            .map(|r| trace_norm2(&r, w))
            .unwrap_or(f64::INFINITY)
    };
    let unit = residual(&FiberElement::identity(&shape.dims));
    if unit > UNIT_TOL {
        return Err(Error::Inconsistency(format!(
            "unit not in subalgebra at {label:?} (residual {unit:e})"
        )));
    }
    let mut closure = 0.0f64;
    for a in basis {
        closure = closure.max(residual(&a.adjoint()));
        for b in basis {
            closure = closure.max(residual(&a.mul(b)?));
        }
    }
    if closure > CLOSURE_TOL {
        return Err(Error::Inconsistency(format!(
            "subalgebra at {label:?} not closed (residual {closure:e})"
        )));
    }
    for (k, a) in basis.iter().enumerate() {
        for (l, b) in basis.iter().enumerate() {
            let target = if k == l { 1.0 } else { 0.0 };
            let g = a.trace_inner(b, w) - target;
            if g.norm() > GRAM_TOL {
                return Err(Error::Inconsistency(format!(
                    "Gram matrix at {label:?} deviates from I by {:e}",
                    g.norm()
                )));
            }
        }
    }
    Ok(())
}

/// Closes per-atom generators to a unital *-subalgebra and orthonormalizes.
///
/// The span of `{𝟙} ∪ generators ∪ generators*` is repeatedly enlarged by
/// adjoints and pairwise products of basis elements until no new direction
/// appears.
pub fn validate_subalgebra(
    bundle: &Arc<BundleSpec>,
    generators: Vec<Vec<FiberElement>>,
) -> Result<SubalgebraBasis> {
    if generators.len() != bundle.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} generator lists for {} atoms",
            generators.len(),
            bundle.len()
        )));
    }
    let mut basis = Vec::with_capacity(bundle.len());
    for (i, gens) in generators.iter().enumerate() {
        let shape = bundle.fiber(i);
        let label = &bundle.space().labels()[i];
        if let Some(g) = gens.iter().find(|g| g.shape() != shape.dims) {
            return Err(Error::ShapeMismatch(format!(
                "generator at {label:?} has shape {:?}, fiber is {:?}",
                g.shape(),
                shape.dims
            )));
        }
        let b = close_fiber(shape, gens)?;
        post_validate(label, shape, &b)?;
        basis.push(b);
    }
    Ok(SubalgebraBasis {
        bundle: bundle.clone(),
        generators,
        basis,
    })
}

/// `E(·|N)` for a validated `N`.
#[derive(Clone, Debug)]
pub struct CondExp {
    target: Arc<SubalgebraBasis>,
}

pub fn build_cond_exp(n: Arc<SubalgebraBasis>) -> CondExp {
    CondExp { target: n }
}

impl CondExp {
    pub fn target(&self) -> &Arc<SubalgebraBasis> {
        &self.target
    }

    pub fn bundle(&self) -> &Arc<BundleSpec> {
        self.target.bundle()
    }

    /// `E_ω` applied to one fiber element.
    pub fn project_fiber(&self, i: usize, a: &FiberElement) -> FiberElement {
        self.target.project_fiber(i, a)
    }

    /// `E(x)`, computed fiber by fiber.
    pub fn apply(&self, x: &Section) -> Result<Section> {
        if !same_bundle(x.bundle(), self.bundle()) {
            return Err(Error::StructureMismatch(
                "section and conditional expectation live on different bundles".into(),
            ));
        }
        Ok(x.map_fibers(|i, a| self.project_fiber(i, a)))
    }

    /// `E` over the single-atom bundle `{ω_i}`, built independently.
    pub fn restrict(&self, i: usize) -> Result<CondExp> {
        Ok(build_cond_exp(Arc::new(self.target.restrict(i)?)))
    }

    /// A random element of `N`: Gaussian coefficients on the orthonormal basis.
    pub fn random_element_of_n(&self, seed: u64) -> Section {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = self.bundle();
        Section::from_fn(b.clone(), |i, shape| {
            let mut out = FiberElement::zeros(&shape.dims);
            for e in self.target.basis(i) {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                let c = Complex64::new(re, im) / std::f64::consts::SQRT_2;
                out = out.add_scaled(c, e).expect("basis matches fiber shape");
            }
            out
        })
        .expect("fibers built from the bundle's shapes")
    }

    /// `max_ω ‖x(ω) − E_ω(x(ω))‖_2`, the distance of `x` from `N`.
    pub fn membership_residual(&self, x: &Section) -> Result<f64> {
        let ex = self.apply(x)?;
        let d = x.sub(&ex)?;
        Ok(lp_norm(&d, 2.0)?.max_value())
    }
}

/// Worst residual of one axiom, overall and per atom.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomResidual {
    pub name: String,
    pub worst: f64,
    pub per_fiber: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomReport {
    pub trials: usize,
    pub seed: u64,
    pub atoms: Vec<String>,
    pub residuals: Vec<AxiomResidual>,
}

impl AxiomReport {
    pub fn worst(&self) -> f64 {
        self.residuals.iter().map(|r| r.worst).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&AxiomResidual> {
        self.residuals.iter().find(|r| r.name == name)
    }
}

/// Exponents for which the `L_p` contraction is checked.
pub const CONTRACTION_EXPONENTS: [f64; 4] = [1.0, 2.0, 3.0, 4.0];

struct Tracker {
    names: Vec<String>,
    values: Vec<Vec<f64>>,
    m: usize,
}

impl Tracker {
    fn new(m: usize) -> Self {
        Tracker {
            names: Vec::new(),
            values: Vec::new(),
            m,
        }
    }

    fn slot(&mut self, name: &str) -> usize {
        match self.names.iter().position(|n| n == name) {
            Some(k) => k,
            None => {
                self.names.push(name.to_string());
                self.values.push(vec![0.0; self.m]);
                self.names.len() - 1
            }
        }
    }

    fn record(&mut self, name: &str, per_fiber: &[f64]) {
        let k = self.slot(name);
        for (acc, &v) in self.values[k].iter_mut().zip(per_fiber) {
            *acc = acc.max(if v.is_nan() { f64::INFINITY } else { v });
        }
    }

    fn finish(self) -> Vec<AxiomResidual> {
        self.names
            .into_iter()
            .zip(self.values)
            .map(|(name, per_fiber)| AxiomResidual {
                worst: per_fiber.iter().copied().fold(0.0, f64::max),
                name,
                per_fiber,
            })
            .collect()
    }
}

fn fiber_diffs(a: &Section, b: &Section) -> Result<Vec<f64>> {
    a.fiberwise_max_abs_diff(b)
}

fn min_eigenvalues(x: &Section) -> Result<Vec<f64>> {
    x.fibers()
        .iter()
        .map(|f| Ok(fiber::herm_eig(&f.hermitian_part_fiber())?.min_eigenvalue()))
        .collect()
}

impl FiberElement {
    fn hermitian_part_fiber(&self) -> FiberElement {
        FiberElement::from_blocks_unchecked(self.blocks().iter().map(|b| b.hermitian_part()).collect())
    }
}

/// Checks the defining properties of `E` on `trials` seeded random inputs.
///
/// Residual names: `idempotence`, `unitality`, `fixed_points`, `adjoint`,
/// `positivity`, `module`, `trace_preservation`, `bimodule_trace`,
/// `self_adjointness`, `contraction_p{1,2,3,4}`, `fiberwise`,
/// `scalarization`, `monotone`. Positivity, contraction and monotonicity
/// residuals are violations (`0` when the inequality holds).
pub fn check_cond_exp_axioms(e: &CondExp, trials: usize, seed: u64) -> Result<AxiomReport> {
    if trials == 0 {
        return Err(Error::Usage("check_cond_exp_axioms needs at least one trial".into()));
    }
    let b = e.bundle();
    let m = b.len();
    let mut t = Tracker::new(m);
    let one = Section::identity(b);

    t.record("unitality", &fiber_diffs(&e.apply(&one)?, &one)?);

    let restricted = (0..m).map(|i| e.restrict(i)).collect::<Result<Vec<_>>>()?;

    for trial in 0..trials {
        let s = derive_seed(seed, trial as u64);
        let x = random_section(b, derive_seed(s, 0), SectionKind::General);
        let y = random_section(b, derive_seed(s, 1), SectionKind::General);
        let pos = random_section(b, derive_seed(s, 2), SectionKind::Positive);
        let a = e.random_element_of_n(derive_seed(s, 3));
        let c = e.random_element_of_n(derive_seed(s, 4));
        let n = e.random_element_of_n(derive_seed(s, 5));

        let ex = e.apply(&x)?;
        t.record("idempotence", &fiber_diffs(&e.apply(&ex)?, &ex)?);
        t.record("fixed_points", &fiber_diffs(&e.apply(&a)?, &a)?);
        t.record("adjoint", &fiber_diffs(&e.apply(&x.adjoint())?, &ex.adjoint())?);

        let epos = e.apply(&pos)?;
        let mins = min_eigenvalues(&epos)?;
        t.record("positivity", &mins.iter().map(|l| (-l).max(0.0)).collect::<Vec<_>>());

        let axc = a.mul(&x)?.mul(&c)?;
        let module = a.mul(&ex)?.mul(&c)?;
        t.record("module", &fiber_diffs(&e.apply(&axc)?, &module)?);

        let phi_x = center_trace(&x);
        let phi_ex = center_trace(&ex);
        t.record("trace_preservation", phi_ex.sub(&phi_x)?.abs().values());

        let lhs = center_trace(&ex.mul(&n)?);
        let rhs = center_trace(&x.mul(&n)?);
        t.record("bimodule_trace", lhs.sub(&rhs)?.abs().values());

        let ey = e.apply(&y)?;
        let lhs = center_trace(&ex.mul(&y)?);
        let rhs = center_trace(&x.mul(&ey)?);
        t.record("self_adjointness", lhs.sub(&rhs)?.abs().values());

        for p in CONTRACTION_EXPONENTS {
            let nx = lp_norm(&x, p)?;
            let nex = lp_norm(&ex, p)?;
            let v: Vec<f64> = nex.sub(&nx)?.values().iter().map(|d| d.max(0.0)).collect();
            t.record(&format!("contraction_p{p}"), &v);
        }

        let fw: Vec<f64> = (0..m)
            .map(|i| {
                let local = restricted[i].project_fiber(0, x.fiber(i));
                if local == *ex.fiber(i) {
                    0.0
                } else {
                    local.max_abs_diff(ex.fiber(i)).unwrap_or(f64::INFINITY).max(f64::MIN_POSITIVE)
                }
            })
            .collect();
        t.record("fiberwise", &fw);

        let nu = ScalarizationWeights::random(m, derive_seed(s, 6));
        let d = (scalarize(&nu, &ex)? - scalarize(&nu, &x)?).norm();
        t.record("scalarization", &vec![d; m]);

        // x ≤ x + q for positive q, so E(x + q) − E(x) must be positive
        let q = random_section(b, derive_seed(s, 7), SectionKind::Positive);
        let step = e.apply(&pos.add(&q)?)?.sub(&epos)?;
        let mins = min_eigenvalues(&step)?;
        t.record("monotone", &mins.iter().map(|l| (-l).max(0.0)).collect::<Vec<_>>());
    }

    Ok(AxiomReport {
        trials,
        seed,
        atoms: b.space().labels().to_vec(),
        residuals: t.finish(),
    })
}
