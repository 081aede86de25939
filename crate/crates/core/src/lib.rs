//! Noncommutative `L_p(M, Φ)` spaces over finite bundles of matrix algebras.
//!
//! `M` is a bundle over a finite measure space `Ω` whose fiber at `ω` is a
//! finite direct sum of full matrix algebras with a faithful trace `τ_ω`.
//! The center-valued trace is `Φ(x)(ω) = τ_ω(x(ω))`.

pub mod bundle;
pub mod center;
pub mod condexp;
pub mod error;
pub mod fiber;
pub mod harness;
pub mod martingale;
pub mod presets;
pub mod seeds;
pub mod trace;

pub use bundle::{random_section, BundleSpec, FiberShape, Section, SectionKind};
pub use center::{center_sup, o_converges, CenterElement, ComplexCenter, MeasureSpace};
pub use error::{Error, Result};
pub use fiber::{FiberElement, MatrixBlock};
