//! Closed forms and exact-rational oracles for conditional expectations and
//! martingale residuals.

mod common;

use std::sync::Arc;

use common::{exact_cond_exp, exact_vs_float, heterogeneous, level, q, ExactFiber, Q};
use num_complex::Complex64;
use num_traits::{Signed, Zero};

use nclp::bundle::{random_section, BundleSpec, FiberShape, Section, SectionKind};
use nclp::center::MeasureSpace;
use nclp::condexp::{build_cond_exp, validate_subalgebra};
use nclp::fiber::{FiberElement, MatrixBlock};
use nclp::martingale::{build_filtration, martingale_from_target, martingale_limit};
use nclp::presets::{generators_for, LevelPattern};
use nclp::seeds::derive_seed;

fn single(shape: FiberShape) -> Arc<BundleSpec> {
    BundleSpec::new(MeasureSpace::uniform(1).unwrap(), vec![shape]).unwrap()
}

fn cond_exp(b: &Arc<BundleSpec>, pattern: &str) -> nclp::condexp::CondExp {
    build_cond_exp(Arc::new(validate_subalgebra(b, level(b, &[pattern])).unwrap()))
}

#[test]
fn diagonal_expectation_is_the_pinching() {
    for n in 1..=4 {
        let b = single(FiberShape::matrix(n, 0.3));
        let e = cond_exp(&b, "diagonal");
        for s in 0..20 {
            let x = random_section(&b, derive_seed(100, s), SectionKind::General);
            let a = x.fiber(0).block(0);
            let pinched = MatrixBlock::from_fn(n, |i, j| if i == j { a.get(i, i) } else { Complex64::new(0.0, 0.0) });
            let got = e.apply(&x).unwrap();
            assert!(got.fiber(0).block(0).max_abs_diff(&pinched) < 1e-14);
        }
    }
}

#[test]
fn scalar_expectation_is_the_normalized_trace() {
    let b = heterogeneous();
    let e = cond_exp(&b, "scalars");
    for s in 0..20 {
        let x = random_section(&b, derive_seed(101, s), SectionKind::General);
        let got = e.apply(&x).unwrap();
        for i in 0..b.len() {
            let shape = b.fiber(i);
            let m = x.fiber(i).weighted_trace(&shape.trace_weights) / shape.trace_of_identity();
            let want = FiberElement::identity(&shape.dims).scale(m);
            assert!(got.fiber(i).sub(&want).unwrap().max_abs() < 1e-14);
        }
    }
}

#[test]
fn center_expectation_averages_each_block() {
    let b = single(FiberShape::new(vec![2, 3], vec![0.5, 2.0]).unwrap());
    let e = cond_exp(&b, "center");
    for s in 0..20 {
        let x = random_section(&b, derive_seed(102, s), SectionKind::General);
        let got = e.apply(&x).unwrap();
        for (j, &n) in [2usize, 3].iter().enumerate() {
            let m = x.fiber(0).block(j).trace() / n as f64;
            let want = MatrixBlock::identity(n).scale(m);
            assert!(got.fiber(0).block(j).max_abs_diff(&want) < 1e-14);
        }
    }
}

#[test]
fn rational_oracle_agrees_on_small_blocks() {
    let cases: [(FiberShape, &str); 5] = [
        (FiberShape::matrix(2, 0.5), "diagonal"),
        (FiberShape::matrix(2, 0.5), "scalars"),
        (FiberShape::new(vec![1, 2], vec![2.0, 0.25]).unwrap(), "center"),
        (FiberShape::new(vec![2, 2], vec![0.5, 0.125]).unwrap(), "block(1,1)⊕full"),
        (FiberShape::new(vec![1, 1, 2], vec![1.0, 4.0, 0.5]).unwrap(), "diagonal"),
    ];
    for (k, (shape, pattern)) in cases.into_iter().enumerate() {
        let b = single(shape.clone());
        let e = cond_exp(&b, pattern);
        let p: LevelPattern = pattern.parse().unwrap();
        let mut spanning = vec![ExactFiber::identity(&shape.dims)];
        spanning.extend(generators_for(&p, &shape).unwrap().iter().map(ExactFiber::from_float));
        for s in 0..20 {
            let x = random_section(&b, derive_seed(103 + k as u64, s), SectionKind::General);
            let exact = exact_cond_exp(&spanning, &shape.trace_weights, &ExactFiber::from_float(x.fiber(0)));
            let d = exact_vs_float(&exact, e.apply(&x).unwrap().fiber(0));
            assert!(d <= 1e-12, "{pattern} on {:?}: {d:e}", shape.dims);
        }
    }
}

fn diag_section(b: &Arc<BundleSpec>, v: &[f64]) -> Section {
    let blocks = v.iter().map(|&t| MatrixBlock::from_real_diag(&[t])).collect();
    Section::new(b.clone(), vec![FiberElement::new(blocks).unwrap()]).unwrap()
}

/// Commutative witness that `‖x_n − x‖_p` can increase along a tower when
/// `p ≠ 2`: weights (4, 2, 1), `x = (0, 2, −1)`, tower
/// scalars ⊂ span{e_0, e_1 + e_2} ⊂ full. Exactly, `‖x_1 − x‖_4^4 = 39606/2401`
/// and `‖x_2 − x‖_4^4 = 18`.
#[test]
fn residual_can_increase_for_p_four() {
    let b = single(FiberShape::new(vec![1, 1, 1], vec![4.0, 2.0, 1.0]).unwrap());
    let split = FiberElement::unit(&[1, 1, 1], 0, 0, 0);
    let f = Arc::new(
        build_filtration(&b, vec![level(&b, &["scalars"]), vec![vec![split]], level(&b, &["full"])]).unwrap(),
    );
    let x = diag_section(&b, &[0.0, 2.0, -1.0]);

    let r4: Vec<Q> = vec![Q::new(39606.into(), 2401.into()), Q::from_integer(18.into())];
    assert!(r4[1] > r4[0]);

    let seq = martingale_from_target(&x, &f, 4.0).unwrap();
    let lim = martingale_limit(&seq).unwrap();
    let res: Vec<f64> = lim.residual_trace.iter().map(|c| c.get(0)).collect();
    for (got, want) in res.iter().zip(&r4) {
        let w: f64 = num_traits::ToPrimitive::to_f64(want).unwrap().powf(0.25);
        assert!((got - w).abs() < 1e-12, "{got} vs {w}");
    }
    assert!(res[1] > res[0] + 1e-2);
    assert!(res[2].abs() < 1e-15);

    // the same tower is monotone at p = 2
    let seq = martingale_from_target(&x, &f, 2.0).unwrap();
    let lim = martingale_limit(&seq).unwrap();
    let res: Vec<f64> = lim.residual_trace.iter().map(|c| c.get(0)).collect();
    assert!(res.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn exact_residuals_match_martingale_values() {
    let b = single(FiberShape::new(vec![1, 1, 1], vec![4.0, 2.0, 1.0]).unwrap());
    let split = FiberElement::unit(&[1, 1, 1], 0, 0, 0);
    let f = Arc::new(
        build_filtration(&b, vec![level(&b, &["scalars"]), vec![vec![split]], level(&b, &["full"])]).unwrap(),
    );
    let x = diag_section(&b, &[0.0, 2.0, -1.0]);
    let seq = martingale_from_target(&x, &f, 4.0).unwrap();
    let want: [[Q; 3]; 2] = [
        [Q::new(3.into(), 7.into()), Q::new(3.into(), 7.into()), Q::new(3.into(), 7.into())],
        [Q::zero(), Q::from_integer(1.into()), Q::from_integer(1.into())],
    ];
    for (xn, w) in seq.elements().iter().zip(&want) {
        for (j, wj) in w.iter().enumerate() {
            let got = q(xn.fiber(0).block(j).get(0, 0).re);
            assert!((got - wj).abs() < q(1e-15));
        }
    }
}
