//! The center-valued trace `Φ`, its scalarizations, the `L_p(M, Φ)` norms
//! and the duality between `L_p` and `L_q`.
//!
//! On a bundle, `Φ(x)(ω) = τ_ω(x(ω)) = Σ_j c_j(ω) tr(x(ω)_j)` and
//! `‖x‖_p = Φ(|x|^p)^{1/p}` is a center-valued norm. Every element of `M` is
//! `Φ`-integrable in finite dimension, so `L_p(M, Φ) = M` as sets.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::bundle::{random_section, BundleSpec, Section, SectionKind};
use crate::center::{CenterElement, ComplexCenter, MeasureSpace};
use crate::error::{Error, Result};
use crate::fiber::{self, FiberElement};
use crate::seeds::derive_seed;

/// Fibers with `‖x‖_p(ω)` below this get a zero duality witness.
pub const ZERO_NORM_CUTOFF: f64 = 1e-12;

/// `Φ(x)`.
pub fn center_trace(x: &Section) -> ComplexCenter {
    let b = x.bundle();
    CenterElement::from_fn(b.space().clone(), |i| {
        x.fiber(i).weighted_trace(&b.fiber(i).trace_weights)
    })
}

/// `Φ_0(x) = Φ(x)·(1 + Φ(1))^{-1}`, a trace with `Φ_0(1) < 1`.
pub fn normalize_trace(x: &Section) -> ComplexCenter {
    let b = x.bundle();
    let phi = center_trace(x);
    phi.map_indexed(|i, v| v / (1.0 + b.fiber(i).trace_of_identity()))
}

impl<T: Copy> CenterElement<T> {
    fn map_indexed<U: Copy>(&self, f: impl Fn(usize, T) -> U) -> CenterElement<U> {
        CenterElement::from_fn(self.space().clone(), |i| f(i, self.get(i)))
    }
}

/// Weights `ν(ω) > 0` of a faithful trace on the center.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalarizationWeights {
    nu: Vec<f64>,
}

impl ScalarizationWeights {
    pub fn new(nu: Vec<f64>) -> Result<Self> {
        if nu.is_empty() || nu.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Usage("scalarization weights must be finite and > 0".into()));
        }
        Ok(ScalarizationWeights { nu })
    }

    /// `ν = μ`, integration against the measure.
    pub fn from_measure(space: &MeasureSpace) -> Self {
        ScalarizationWeights {
            nu: space.weights().to_vec(),
        }
    }

    /// Weights drawn uniformly from `[0.1, 2)`.
    pub fn random(m: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ScalarizationWeights {
            nu: (0..m).map(|_| rng.random_range(0.1..2.0)).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.nu
    }
}

/// `τ(x) = ν(Φ(x)) = Σ_ω ν(ω) Φ(x)(ω)`, a faithful numerical trace on `M`.
pub fn scalarize(nu: &ScalarizationWeights, x: &Section) -> Result<Complex64> {
    let phi = center_trace(x);
    if nu.nu.len() != phi.len() {
        return Err(Error::StructureMismatch(format!(
            "{} scalarization weights for {} atoms",
            nu.nu.len(),
            phi.len()
        )));
    }
    Ok(phi.values().iter().zip(&nu.nu).map(|(v, w)| v * w).sum())
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::Usage(format!("L_p exponent must be finite and >= 1, got {p}")))
    }
}

/// `‖a‖_{p,τ} = τ(|a|^p)^{1/p}` for one fiber element.
pub fn fiber_lp_norm(a: &FiberElement, weights: &[f64], p: f64) -> f64 {
    let s: f64 = a
        .blocks()
        .iter()
        .zip(weights)
        .map(|(b, &c)| c * fiber::abs_power_trace_block(b, p))
        .sum();
    s.powf(1.0 / p)
}

/// The center-valued norm `‖x‖_{p,Φ} = Φ(|x|^p)^{1/p}`; `‖x‖_{1,Φ} = Φ(|x|)`.
pub fn lp_norm(x: &Section, p: f64) -> Result<CenterElement<f64>> {
    check_exponent(p)?;
    let b = x.bundle();
    Ok(CenterElement::from_fn(b.space().clone(), |i| {
        fiber_lp_norm(x.fiber(i), &b.fiber(i).trace_weights, p)
    }))
}

/// Conjugate exponent `p/(p − 1)`; infinite for `p = 1`.
pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// The witness attaining `‖x‖_p = sup |Φ(xy)|` over the unit ball of the dual.
///
/// With `x(ω) = u h` the polar decomposition, `y(ω) = s · h^{p−1} u*` where
/// `s = ‖x‖_p(ω)^{1−p}`; for `p = 1`, `y(ω) = u*`. Then
/// `Φ(xy) = ‖x‖_p` and `‖y‖_q = 1` (`‖y‖_M ≤ 1` for `p = 1`). Fibers on which
/// `x` has norm below [`ZERO_NORM_CUTOFF`] get `y(ω) = 0`.
pub fn dual_extremal(x: &Section, p: f64) -> Result<Section> {
    let norms = lp_norm(x, p)?;
    Ok(x.map_fibers(|i, xi| {
        let n = norms.get(i);
        if n < ZERO_NORM_CUTOFF {
            return FiberElement::zeros(&xi.shape());
        }
        let (u, _) = fiber::polar(xi);
        if p == 1.0 {
            u.adjoint()
        } else {
            let hp = if p == 2.0 {
                fiber::polar(xi).1
            } else {
                fiber::abs_power(xi, p - 1.0)
            };
            hp.mul(&u.adjoint())
                .expect("same shape")
                .scale_real(n.powf(1.0 - p))
        }
    }))
}

/// Per-atom row of a [`DualityReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityFiberRow {
    pub omega: String,
    pub norm: f64,
    /// `max |Φ(xy)|(ω)` over the sampled feasible `y`.
    pub sup_sampled: f64,
    /// `Φ(x·y_extremal)(ω)`, real part.
    pub extremal_value: f64,
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualityReport {
    pub p: f64,
    pub samples: usize,
    pub seed: u64,
    /// `max(0, max_{y,ω} |Φ(xy)|(ω) − ‖x‖_p(ω))` over sampled feasible `y`.
    pub max_violation: f64,
    /// `max_ω |Φ(x·y_extremal)(ω) − ‖x‖_p(ω)|`.
    pub attainment_residual: f64,
    /// How far the extremal witness leaves the dual unit ball.
    pub feasibility_residual: f64,
    pub per_fiber: Vec<DualityFiberRow>,
}

/// Dual-ball norm of `y` for the duality with `L_p`: `‖y‖_q` for `p > 1`
/// and the fiberwise operator norm for `p = 1`.
fn dual_norm(y: &Section, p: f64) -> Result<CenterElement<f64>> {
    if p == 1.0 {
        Ok(CenterElement::from_fn(y.bundle().space().clone(), |i| {
            fiber::spectral_norm(y.fiber(i))
        }))
    } else {
        lp_norm(y, conjugate_exponent(p))
    }
}

/// Checks `‖x‖_p = sup{|Φ(xy)| : y in the dual unit ball}` numerically.
///
/// Each of the `samples` random `y` is drawn from a seed derived from
/// `(seed, sample index)` and rescaled fiberwise onto the boundary of the dual
/// ball; none may exceed `‖x‖_p`. The extremal witness from
/// [`dual_extremal`] must attain it.
pub fn duality_check(x: &Section, p: f64, samples: usize, seed: u64) -> Result<DualityReport> {
    if samples == 0 {
        return Err(Error::Usage("duality_check needs at least one sample".into()));
    }
    let bundle: &Arc<BundleSpec> = x.bundle();
    let norms = lp_norm(x, p)?;
    let m = bundle.len();
    let mut sup = vec![0.0f64; m];
    for s in 0..samples {
        let y = random_section(bundle, derive_seed(seed, s as u64), SectionKind::General);
        let yn = dual_norm(&y, p)?;
        let y = y.center_scale(&yn.map(|v| if v > 0.0 { 1.0 / v } else { 0.0 }))?;
        let val = center_trace(&x.mul(&y)?).abs();
        for (acc, &v) in sup.iter_mut().zip(val.values()) {
            *acc = acc.max(v);
        }
    }

    let witness = dual_extremal(x, p)?;
    let attained = center_trace(&x.mul(&witness)?);
    let wn = dual_norm(&witness, p)?;

    let mut per_fiber = Vec::with_capacity(m);
    let (mut max_violation, mut attainment, mut feasibility) = (0.0f64, 0.0f64, 0.0f64);
    for (i, &s) in sup.iter().enumerate() {
        let violation = (s - norms.get(i)).max(0.0);
        max_violation = max_violation.max(violation);
        attainment = attainment.max((attained.get(i) - norms.get(i)).norm());
        feasibility = feasibility.max((wn.get(i) - 1.0).max(0.0));
        per_fiber.push(DualityFiberRow {
            omega: bundle.space().labels()[i].clone(),
            norm: norms.get(i),
            sup_sampled: s,
            extremal_value: attained.get(i).re,
            violation,
        });
    }
    Ok(DualityReport {
        p,
        samples,
        seed,
        max_violation,
        attainment_residual: attainment,
        feasibility_residual: feasibility,
        per_fiber,
    })
}
