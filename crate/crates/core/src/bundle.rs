//! The global algebra `M` as a bundle of fibers `M(ω) = ⊕_j Mat(n_j(ω))`
//! over a finite measure space.
//!
//! Sections are the primitive representation of elements of `M`; there is no
//! separate abstract algebra to map from. Evaluating a section at an atom is
//! the lifting `x ↦ x(ω)`: on atomic `Ω` every class has exactly one
//! everywhere-defined representative, so the lifting is linear,
//! multiplicative, `*`-preserving and center-covariant by construction.
//!
//! In finite dimension `L_p(M, Φ)` and `M` are the same set with different
//! norms, so a [`Section`] also represents elements of every `L_p(M, Φ)`.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::center::{CenterElement, MeasureSpace};
use crate::error::{Error, Result};
use crate::fiber::{self, FiberElement, MatrixBlock};

/// Block dims of one fiber and the weights `c_j > 0` of its trace
/// `τ_ω(a) = Σ_j c_j tr(a_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberShape {
    pub dims: Vec<usize>,
    pub trace_weights: Vec<f64>,
}

impl FiberShape {
    pub fn new(dims: Vec<usize>, trace_weights: Vec<f64>) -> Result<Self> {
        let shape = FiberShape {
            dims,
            trace_weights,
        };
        shape.validate()?;
        Ok(shape)
    }

    /// A single full matrix algebra `Mat(n)` with trace weight `c`.
    pub fn matrix(n: usize, c: f64) -> Self {
        FiberShape {
            dims: vec![n],
            trace_weights: vec![c],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Usage("fiber with no blocks".into()));
        }
        if self.dims.len() != self.trace_weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} blocks but {} trace weights",
                self.dims.len(),
                self.trace_weights.len()
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::Usage("block dim must be >= 1".into()));
        }
        if let Some(c) = self.trace_weights.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::ContractViolation(format!(
                "trace weight {c} is not positive; the fiber trace must be faithful"
            )));
        }
        Ok(())
    }

    /// `Σ_j n_j²`.
    pub fn algebra_dim(&self) -> usize {
        self.dims.iter().map(|n| n * n).sum()
    }

    /// `τ_ω(1) = Σ_j c_j n_j`.
    pub fn trace_of_identity(&self) -> f64 {
        self.dims
            .iter()
            .zip(&self.trace_weights)
            .map(|(&n, &c)| c * n as f64)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BundleSpec {
    space: Arc<MeasureSpace>,
    fibers: Vec<FiberShape>,
}

impl BundleSpec {
    pub fn new(space: MeasureSpace, fibers: Vec<FiberShape>) -> Result<Arc<Self>> {
        if fibers.len() != space.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} fiber shapes for {} atoms",
                fibers.len(),
                space.len()
            )));
        }
        for f in &fibers {
            f.validate()?;
        }
        Ok(Arc::new(BundleSpec {
            space: Arc::new(space),
            fibers,
        }))
    }

    pub fn space(&self) -> &Arc<MeasureSpace> {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.fibers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fibers.is_empty()
    }

    pub fn fibers(&self) -> &[FiberShape] {
        &self.fibers
    }

    pub fn fiber(&self, i: usize) -> &FiberShape {
        &self.fibers[i]
    }

    pub fn atom_index(&self, label: &str) -> Result<usize> {
        self.space.index_of(label)
    }

    /// The one-atom bundle over `{ω_i}`.
    pub fn restrict(&self, i: usize) -> Arc<BundleSpec> {
        Arc::new(BundleSpec {
            space: Arc::new(self.space.restrict(i)),
            fibers: vec![self.fibers[i].clone()],
        })
    }

    /// True when every fiber trace satisfies `τ_ω(1) = 1`.
    pub fn has_normalized_traces(&self) -> bool {
        self.fibers
            .iter()
            .all(|f| (f.trace_of_identity() - 1.0).abs() <= 1e-15)
    }
}

pub(crate) fn same_bundle(a: &Arc<BundleSpec>, b: &Arc<BundleSpec>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Kinds of random sections in the test corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionKind {
    General,
    Hermitian,
    Positive,
    Unitary,
    Projection,
}

/// A section `ω ↦ x(ω) ∈ M(ω)`.
#[derive(Clone, Debug)]
pub struct Section {
    bundle: Arc<BundleSpec>,
    fibers: Vec<FiberElement>,
}

impl PartialEq for Section {
    fn eq(&self, other: &Self) -> bool {
        same_bundle(&self.bundle, &other.bundle) && self.fibers == other.fibers
    }
}

impl Section {
    pub fn new(bundle: Arc<BundleSpec>, fibers: Vec<FiberElement>) -> Result<Self> {
        if fibers.len() != bundle.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} fibers for a bundle over {} atoms",
                fibers.len(),
                bundle.len()
            )));
        }
        for (i, (f, shape)) in fibers.iter().zip(bundle.fibers()).enumerate() {
            if f.shape() != shape.dims {
                return Err(Error::ShapeMismatch(format!(
                    "fiber {i} has shape {:?}, bundle expects {:?}",
                    f.shape(),
                    shape.dims
                )));
            }
        }
        Ok(Section { bundle, fibers })
    }

    /// Builds a section fiber by fiber; `f` receives the atom index and its shape.
    pub fn from_fn(
        bundle: Arc<BundleSpec>,
        mut f: impl FnMut(usize, &FiberShape) -> FiberElement,
    ) -> Result<Self> {
        let fibers = bundle
            .fibers()
            .iter()
            .enumerate()
            .map(|(i, s)| f(i, s))
            .collect();
        Self::new(bundle, fibers)
    }

    pub fn identity(bundle: &Arc<BundleSpec>) -> Self {
        Self::from_fn(bundle.clone(), |_, s| FiberElement::identity(&s.dims)).expect("shapes match")
    }

    pub fn zeros(bundle: &Arc<BundleSpec>) -> Self {
        Self::from_fn(bundle.clone(), |_, s| FiberElement::zeros(&s.dims)).expect("shapes match")
    }

    pub fn bundle(&self) -> &Arc<BundleSpec> {
        &self.bundle
    }

    pub fn fibers(&self) -> &[FiberElement] {
        &self.fibers
    }

    pub fn fiber(&self, i: usize) -> &FiberElement {
        &self.fibers[i]
    }

    /// Evaluation at the atom labelled `label`.
    pub fn fiber_eval(&self, label: &str) -> Result<&FiberElement> {
        Ok(&self.fibers[self.bundle.atom_index(label)?])
    }

    pub fn into_fibers(self) -> Vec<FiberElement> {
        self.fibers
    }

    fn check_bundle(&self, other: &Section) -> Result<()> {
        if same_bundle(&self.bundle, &other.bundle) {
            Ok(())
        } else {
            Err(Error::StructureMismatch("sections over different bundles".into()))
        }
    }

    fn zip_with(
        &self,
        other: &Section,
        f: impl Fn(&FiberElement, &FiberElement) -> Result<FiberElement>,
    ) -> Result<Section> {
        self.check_bundle(other)?;
        let fibers = self
            .fibers
            .iter()
            .zip(&other.fibers)
            .map(|(a, b)| f(a, b))
            .collect::<Result<_>>()?;
        Ok(Section {
            bundle: self.bundle.clone(),
            fibers,
        })
    }

    /// Applies `f` to every fiber. `f` must preserve fiber shapes.
    pub fn map_fibers(&self, f: impl Fn(usize, &FiberElement) -> FiberElement) -> Section {
        Section {
            bundle: self.bundle.clone(),
            fibers: self.fibers.iter().enumerate().map(|(i, x)| f(i, x)).collect(),
        }
    }

    pub fn add(&self, other: &Section) -> Result<Section> {
        self.zip_with(other, FiberElement::add)
    }

    pub fn sub(&self, other: &Section) -> Result<Section> {
        self.zip_with(other, FiberElement::sub)
    }

    pub fn mul(&self, other: &Section) -> Result<Section> {
        self.zip_with(other, FiberElement::mul)
    }

    pub fn adjoint(&self) -> Section {
        self.map_fibers(|_, x| x.adjoint())
    }

    pub fn scale(&self, s: Complex64) -> Section {
        self.map_fibers(|_, x| x.scale(s))
    }

    pub fn scale_real(&self, s: f64) -> Section {
        self.scale(Complex64::new(s, 0.0))
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, s: Complex64, other: &Section) -> Result<Section> {
        self.zip_with(other, |a, b| a.add_scaled(s, b))
    }

    /// The `L_0(Ω)`-module action: fiber `ω` becomes `z(ω)·x(ω)`.
    pub fn center_scale<T>(&self, z: &CenterElement<T>) -> Result<Section>
    where
        T: Copy + Into<Complex64>,
    {
        if z.space().as_ref() != self.bundle.space().as_ref() {
            return Err(Error::StructureMismatch(
                "center element and section over different measure spaces".into(),
            ));
        }
        Ok(self.map_fibers(|i, x| x.scale(z.get(i).into())))
    }

    /// C*-norm `‖x‖_M = max_ω ‖x(ω)‖_op`.
    pub fn uniform_norm(&self) -> f64 {
        self.fibers.iter().map(fiber::spectral_norm).fold(0.0, f64::max)
    }

    /// Entrywise `max |x − y|` over all fibers.
    pub fn max_abs_diff(&self, other: &Section) -> Result<f64> {
        self.check_bundle(other)?;
        self.fibers
            .iter()
            .zip(&other.fibers)
            .map(|(a, b)| a.max_abs_diff(b))
            .try_fold(0.0, |acc, d| Ok(f64::max(acc, d?)))
    }

    /// Per-atom entrywise `max |x(ω) − y(ω)|`.
    pub fn fiberwise_max_abs_diff(&self, other: &Section) -> Result<Vec<f64>> {
        self.check_bundle(other)?;
        self.fibers
            .iter()
            .zip(&other.fibers)
            .map(|(a, b)| a.max_abs_diff(b))
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.fibers.iter().map(FiberElement::max_abs).fold(0.0, f64::max)
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.fibers
            .iter()
            .map(FiberElement::hermitian_defect)
            .fold(0.0, f64::max)
    }

    /// The section over the one-atom bundle `{ω_i}`.
    pub fn restrict(&self, i: usize) -> Section {
        Section {
            bundle: self.bundle.restrict(i),
            fibers: vec![self.fibers[i].clone()],
        }
    }

    /// Moves the fibers onto another bundle with identical fiber shapes.
    pub fn rebind(&self, bundle: Arc<BundleSpec>) -> Result<Section> {
        Section::new(bundle, self.fibers.clone())
    }
}

/// Deterministic random section.
///
/// Entries are i.i.d. standard complex Gaussians drawn fiber by fiber, block
/// by block, row-major, from a ChaCha8 stream seeded with `seed`. `Hermitian`
/// symmetrizes, `Positive` is `g*g`, `Unitary` is the polar part of `g`, and
/// `Projection` is the spectral projection of a random Hermitian block above
/// its median eigenvalue.
pub fn random_section(bundle: &Arc<BundleSpec>, seed: u64, kind: SectionKind) -> Section {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Section::from_fn(bundle.clone(), |_, shape| {
        let blocks = shape
            .dims
            .iter()
            .map(|&n| {
                let g = MatrixBlock::gaussian(n, &mut rng);
                random_block(g, kind)
            })
            .collect();
        FiberElement::new(blocks).expect("finite gaussian entries")
    })
    .expect("shapes match")
}

fn random_block(g: MatrixBlock, kind: SectionKind) -> MatrixBlock {
    match kind {
        SectionKind::General => g,
        SectionKind::Hermitian => g.hermitian_part(),
        SectionKind::Positive => &g.adjoint() * &g,
        SectionKind::Unitary => fiber::polar_block(&g).0,
        SectionKind::Projection => {
            let eig = fiber::herm_eig_block(&g.hermitian_part()).expect("Hermitian");
            let ev = &eig.eigenvalues;
            let n = ev.len();
            let median = if n % 2 == 1 {
                ev[n / 2]
            } else {
                0.5 * (ev[n / 2 - 1] + ev[n / 2])
            };
            fiber::spectral_projection_from(&eig, median)
        }
    }
}

/// One row of the flat section record format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionRecord {
    pub omega: String,
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub re: f64,
    pub im: f64,
}

/// Flattens a section into `(ω, block, row, col, re, im)` rows, every entry
/// included, in atom/block/row-major order.
pub fn section_records(x: &Section) -> Vec<SectionRecord> {
    let labels = x.bundle.space().labels();
    let mut rows = Vec::new();
    for (label, f) in labels.iter().zip(&x.fibers) {
        for (j, b) in f.blocks().iter().enumerate() {
            for r in 0..b.dim() {
                for c in 0..b.dim() {
                    let z = b.get(r, c);
                    rows.push(SectionRecord {
                        omega: label.clone(),
                        block: j,
                        row: r,
                        col: c,
                        re: z.re,
                        im: z.im,
                    });
                }
            }
        }
    }
    rows
}

/// Writes the flat record format as CSV with header
/// `omega,block,row,col,re,im`. Floats are written in shortest round-trip form.
pub fn write_section_csv<W: Write>(x: &Section, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in section_records(x) {
        w.serialize(rec).map_err(std::io::Error::other)?;
    }
    w.flush()
}

/// Rebuilds a section from records. Entries not mentioned are zero; an
/// unknown atom, out-of-range index or repeated entry is an error.
pub fn section_from_records(
    bundle: &Arc<BundleSpec>,
    records: impl IntoIterator<Item = SectionRecord>,
) -> Result<Section> {
    let mut fibers: Vec<Vec<MatrixBlock>> = bundle
        .fibers()
        .iter()
        .map(|s| s.dims.iter().map(|&n| MatrixBlock::zeros(n)).collect())
        .collect();
    let mut seen: Vec<Vec<Vec<bool>>> = bundle
        .fibers()
        .iter()
        .map(|s| s.dims.iter().map(|&n| vec![false; n * n]).collect())
        .collect();
    for rec in records {
        let i = bundle.atom_index(&rec.omega)?;
        let blocks = &mut fibers[i];
        let b = blocks.get_mut(rec.block).ok_or_else(|| {
            Error::ShapeMismatch(format!("atom {:?} has no block {}", rec.omega, rec.block))
        })?;
        let n = b.dim();
        if rec.row >= n || rec.col >= n {
            return Err(Error::ShapeMismatch(format!(
                "entry ({}, {}) outside block {} of dim {n} at atom {:?}",
                rec.row, rec.col, rec.block, rec.omega
            )));
        }
        let flag = &mut seen[i][rec.block][rec.row * n + rec.col];
        if *flag {
            return Err(Error::Usage(format!(
                "duplicate entry ({}, {}) in block {} at atom {:?}",
                rec.row, rec.col, rec.block, rec.omega
            )));
        }
        *flag = true;
        b.set(rec.row, rec.col, Complex64::new(rec.re, rec.im));
    }
    let fibers = fibers
        .into_iter()
        .map(FiberElement::new)
        .collect::<Result<Vec<_>>>()?;
    Section::new(bundle.clone(), fibers)
}

pub fn read_section_csv<R: Read>(bundle: &Arc<BundleSpec>, input: R) -> Result<Section> {
    let mut rdr = csv::Reader::from_reader(input);
    let records = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<SectionRecord>, _>>()
        .map_err(|e| Error::Usage(format!("malformed section record: {e}")))?;
    section_from_records(bundle, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::center::CenterElement;

    fn bundle() -> Arc<BundleSpec> {
        BundleSpec::new(
            MeasureSpace::uniform(3).unwrap(),
            vec![
                FiberShape::matrix(2, 0.5),
                FiberShape::new(vec![2, 1], vec![1.0, 2.0]).unwrap(),
                FiberShape::matrix(3, 1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn rejects_non_faithful_trace() {
        assert!(FiberShape::new(vec![2], vec![0.0]).is_err());
        assert!(FiberShape::new(vec![0], vec![1.0]).is_err());
        assert!(BundleSpec::new(MeasureSpace::uniform(2).unwrap(), vec![FiberShape::matrix(2, 1.0)]).is_err());
    }

    #[test]
    fn unit_and_products() {
        let b = bundle();
        let x = random_section(&b, 1, SectionKind::General);
        let y = random_section(&b, 2, SectionKind::General);
        let one = Section::identity(&b);
        assert_eq!(x.mul(&one).unwrap(), x);
        assert_eq!(one.mul(&x).unwrap(), x);

        let lhs = x.mul(&y).unwrap().adjoint();
        let rhs = y.adjoint().mul(&x.adjoint()).unwrap();
        assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-10);

        let sum = x.add(&y).unwrap();
        for (i, label) in b.space().labels().iter().enumerate() {
            assert_eq!(sum.fiber_eval(label).unwrap(), &x.fiber(i).add(y.fiber(i)).unwrap());
        }
    }

    #[test]
    fn fiber_eval_is_a_unital_star_homomorphism() {
        let b = bundle();
        let x = random_section(&b, 3, SectionKind::General);
        let y = random_section(&b, 4, SectionKind::General);
        let xy = x.mul(&y).unwrap();
        let z = CenterElement::new(b.space().clone(), vec![2.0, -0.5, 0.0]).unwrap();
        let zx = x.center_scale(&z).unwrap();
        for (i, label) in b.space().labels().iter().enumerate() {
            assert_eq!(
                Section::identity(&b).fiber_eval(label).unwrap(),
                &FiberElement::identity(&b.fiber(i).dims)
            );
            assert_eq!(
                xy.fiber_eval(label).unwrap(),
                &x.fiber_eval(label).unwrap().mul(y.fiber_eval(label).unwrap()).unwrap()
            );
            assert_eq!(
                x.adjoint().fiber_eval(label).unwrap(),
                &x.fiber_eval(label).unwrap().adjoint()
            );
            assert_eq!(
                zx.fiber_eval(label).unwrap(),
                &x.fiber_eval(label).unwrap().scale_real(z.get(i))
            );
        }
        assert!(matches!(x.fiber_eval("nowhere"), Err(Error::Usage(_))));
    }

    #[test]
    fn center_scale_by_one_and_zero() {
        let b = bundle();
        let x = random_section(&b, 5, SectionKind::General);
        let one = CenterElement::constant(b.space().clone(), 1.0);
        let zero = CenterElement::constant(b.space().clone(), 0.0);
        assert_eq!(x.center_scale(&one).unwrap(), x);
        assert_eq!(x.center_scale(&zero).unwrap().max_abs(), 0.0);
        let other = CenterElement::constant(Arc::new(MeasureSpace::uniform(2).unwrap()), 1.0);
        assert!(x.center_scale(&other).is_err());
    }

    #[test]
    fn bundle_mismatch() {
        let b = bundle();
        let c = BundleSpec::new(MeasureSpace::uniform(1).unwrap(), vec![FiberShape::matrix(2, 1.0)])
            .unwrap();
        let x = Section::identity(&b);
        let y = Section::identity(&c);
        assert!(matches!(x.add(&y), Err(Error::StructureMismatch(_))));
    }

    #[test]
    fn uniform_norm_examples() {
        let b = bundle();
        assert!((Section::identity(&b).uniform_norm() - 1.0).abs() < 1e-14);
        let u = random_section(&b, 6, SectionKind::Unitary);
        assert!((u.uniform_norm() - 1.0).abs() < 1e-10);
        assert_eq!(Section::zeros(&b).uniform_norm(), 0.0);
    }

    #[test]
    fn random_sections_are_deterministic_and_well_formed() {
        let b = bundle();
        for kind in [
            SectionKind::General,
            SectionKind::Hermitian,
            SectionKind::Positive,
            SectionKind::Unitary,
            SectionKind::Projection,
        ] {
            let x = random_section(&b, 42, kind);
            let y = random_section(&b, 42, kind);
            assert_eq!(x, y);
        }
        let p = random_section(&b, 8, SectionKind::Positive);
        for f in p.fibers() {
            assert!(fiber::herm_eig(f).unwrap().min_eigenvalue() >= -1e-10);
        }
        let q = random_section(&b, 8, SectionKind::Projection);
        assert!(q.mul(&q).unwrap().max_abs_diff(&q).unwrap() < 1e-10);
        assert!(q.adjoint().max_abs_diff(&q).unwrap() < 1e-10);
    }

    #[test]
    fn records_round_trip_bitwise() {
        let b = bundle();
        let x = random_section(&b, 77, SectionKind::General);
        let mut buf = Vec::new();
        write_section_csv(&x, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("omega,block,row,col,re,im\n"));
        let back = read_section_csv(&b, buf.as_slice()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn records_reject_bad_rows() {
        let b = bundle();
        let rec = |omega: &str, block, row, col| SectionRecord {
            omega: omega.into(),
            block,
            row,
            col,
            re: 1.0,
            im: 0.0,
        };
        assert!(section_from_records(&b, vec![rec("w9", 0, 0, 0)]).is_err());
        assert!(section_from_records(&b, vec![rec("w1", 2, 0, 0)]).is_err());
        assert!(section_from_records(&b, vec![rec("w0", 0, 2, 0)]).is_err());
        assert!(section_from_records(&b, vec![rec("w0", 0, 0, 0), rec("w0", 0, 0, 0)]).is_err());
        let x = section_from_records(&b, vec![rec("w2", 0, 1, 1)]).unwrap();
        assert_eq!(x.fiber(2).block(0).get(1, 1), Complex64::new(1.0, 0.0));
    }
}
