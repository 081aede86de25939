#![allow(dead_code)]

use std::sync::Arc;

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use nclp::bundle::{BundleSpec, FiberShape, Section};
use nclp::center::MeasureSpace;
use nclp::fiber::FiberElement;
use nclp::martingale::{build_filtration, Filtration, LevelGenerators};
use nclp::presets::{generators_for, LevelPattern};

/// Four atoms with fibers `Mat(2)`, `Mat(3)`, `Mat(2)⊕Mat(2)`, `Mat(1)` and
/// dyadic trace weights (exact in binary).
pub fn heterogeneous() -> Arc<BundleSpec> {
    BundleSpec::new(
        MeasureSpace::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![0.5, 1.0, 0.25, 2.0],
        )
        .unwrap(),
        vec![
            FiberShape::matrix(2, 0.5),
            FiberShape::matrix(3, 0.25),
            FiberShape::new(vec![2, 2], vec![0.5, 0.125]).unwrap(),
            FiberShape::matrix(1, 2.0),
        ],
    )
    .unwrap()
}

pub fn mat2() -> Arc<BundleSpec> {
    BundleSpec::new(MeasureSpace::uniform(1).unwrap(), vec![FiberShape::matrix(2, 0.5)]).unwrap()
}

/// The intermediate level between diagonal and full on each fiber type of
/// [`heterogeneous`].
pub const MID: [&str; 4] = ["block(1,1)", "block(1,2)", "block(1,1)⊕full", "full"];

/// One pattern per atom; a single entry applies to every atom.
pub fn level(b: &Arc<BundleSpec>, patterns: &[&str]) -> LevelGenerators {
    (0..b.len())
        .map(|i| {
            let p: LevelPattern = patterns[if patterns.len() == 1 { 0 } else { i }].parse().unwrap();
            generators_for(&p, b.fiber(i)).unwrap()
        })
        .collect()
}

pub fn tower(b: &Arc<BundleSpec>, levels: &[&[&str]]) -> Arc<Filtration> {
    Arc::new(build_filtration(b, levels.iter().map(|l| level(b, l)).collect()).unwrap())
}

/// Full towers of depth 3, 4 and 5 on [`heterogeneous`].
pub fn heterogeneous_towers() -> Vec<Arc<Filtration>> {
    let b = heterogeneous();
    vec![
        tower(&b, &[&["scalars"], &["diagonal"], &["full"]]),
        tower(&b, &[&["scalars"], &["diagonal"], &MID, &["full"]]),
        tower(&b, &[&["scalars"], &["center"], &["diagonal"], &MID, &["full"]]),
    ]
}

pub type Q = BigRational;
pub type CQ = Complex<Q>;

pub fn q(x: f64) -> Q {
    BigRational::from_float(x).expect("finite")
}

fn cq(z: Complex64) -> CQ {
    Complex::new(q(z.re), q(z.im))
}

/// A fiber element with exact complex-rational blocks (row-major).
#[derive(Clone, Debug)]
pub struct ExactFiber {
    pub dims: Vec<usize>,
    pub blocks: Vec<Vec<CQ>>,
}

impl ExactFiber {
    pub fn from_float(a: &FiberElement) -> Self {
        ExactFiber {
            dims: a.shape(),
            blocks: a
                .blocks()
                .iter()
                .map(|b| b.entries().iter().map(|&z| cq(z)).collect())
                .collect(),
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        ExactFiber {
            dims: dims.to_vec(),
            blocks: dims.iter().map(|&n| vec![CQ::zero(); n * n]).collect(),
        }
    }

    pub fn identity(dims: &[usize]) -> Self {
        let mut out = Self::zeros(dims);
        for (j, &n) in dims.iter().enumerate() {
            for i in 0..n {
                out.blocks[j][i * n + i] = Complex::new(Q::from_integer(BigInt::from(1)), Q::zero());
            }
        }
        out
    }

    fn axpy(&self, s: &CQ, other: &ExactFiber) -> ExactFiber {
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect())
            .collect();
        ExactFiber {
            dims: self.dims.clone(),
            blocks,
        }
    }

    /// `Σ_j c_j tr(b_j* a_j)`.
    fn inner(&self, b: &ExactFiber, weights: &[Q]) -> CQ {
        let mut s = CQ::zero();
        for ((x, y), c) in self.blocks.iter().zip(&b.blocks).zip(weights) {
            let mut t = CQ::zero();
            for (u, v) in x.iter().zip(y) {
                t += v.conj() * u;
            }
            s += t * Complex::new(c.clone(), Q::zero());
        }
        s
    }

    fn is_zero(&self) -> bool {
        self.blocks.iter().all(|b| b.iter().all(Zero::is_zero))
    }

    pub fn to_float(&self) -> Vec<Vec<Complex64>> {
        self.blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|z| Complex64::new(z.re.to_f64().unwrap(), z.im.to_f64().unwrap()))
                    .collect()
            })
            .collect()
    }
}

/// Exact conditional expectation onto `span(spanning)` with the trace weights
/// `weights`: unnormalized Gram–Schmidt in rational arithmetic, then
/// `E(x) = Σ ⟨x, v⟩/⟨v, v⟩ · v`.
pub fn exact_cond_exp(spanning: &[ExactFiber], weights: &[f64], x: &ExactFiber) -> ExactFiber {
    let w: Vec<Q> = weights.iter().map(|&c| q(c)).collect();
    let mut ortho: Vec<(ExactFiber, CQ)> = Vec::new();
    for g in spanning {
        let mut v = g.clone();
        for (u, uu) in &ortho {
            let c = g.inner(u, &w) / uu;
            v = v.axpy(&-c, u);
        }
        if !v.is_zero() {
            let vv = v.inner(&v, &w);
            ortho.push((v, vv));
        }
    }
    let mut out = ExactFiber::zeros(&x.dims);
    for (v, vv) in &ortho {
        out = out.axpy(&(x.inner(v, &w) / vv), v);
    }
    out
}

/// Largest entrywise distance between an exact and a float fiber.
pub fn exact_vs_float(e: &ExactFiber, a: &FiberElement) -> f64 {
    let f = e.to_float();
    let mut worst = 0.0f64;
    for (eb, ab) in f.iter().zip(a.blocks()) {
        for (x, y) in eb.iter().zip(ab.entries()) {
            worst = worst.max((x - y).norm());
        }
    }
    worst
}

/// Rational-oracle check of `E` at every atom whose blocks are all at most 2×2.
/// Returns the worst entrywise disagreement.
pub fn oracle_disagreement(
    b: &Arc<BundleSpec>,
    patterns: &[&str],
    e: &nclp::condexp::CondExp,
    x: &Section,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..b.len() {
        let shape = b.fiber(i);
        if shape.dims.iter().any(|&n| n > 2) {
            continue;
        }
        let p: LevelPattern = patterns[if patterns.len() == 1 { 0 } else { i }].parse().unwrap();
        let mut spanning = vec![ExactFiber::identity(&shape.dims)];
        spanning.extend(generators_for(&p, shape).unwrap().iter().map(ExactFiber::from_float));
        let exact = exact_cond_exp(&spanning, &shape.trace_weights, &ExactFiber::from_float(x.fiber(i)));
        worst = worst.max(exact_vs_float(&exact, e.apply(x).unwrap().fiber(i)));
    }
    worst
}

/// Writes a line straight to stderr so it shows even when test output is captured.
pub fn report(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stderr(), "{line}");
}
