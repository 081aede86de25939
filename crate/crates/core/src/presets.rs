//! Named subalgebra patterns and their generators.
//!
//! A level pattern is one of
//!
//! - `scalars`: multiples of `𝟙`;
//! - `center`: the block identities, i.e. the center of the fiber;
//! - `diagonal`, `full`, `block(k1,k2,…)`: the same block pattern in every block;
//! - `p1⊕p2⊕…` (or `p1+p2+…`): one block pattern per block of the fiber.
//!
//! Block patterns are `scalar`, `diagonal`, `full` and `block(k1,…)`, the
//! last being block-diagonal matrices with diagonal blocks of sizes `k_i`.

use std::fmt;

use crate::bundle::FiberShape;
use crate::error::{Error, Result};
use crate::fiber::FiberElement;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockPattern {
    Scalar,
    Diagonal,
    Full,
    Partition(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LevelPattern {
    Scalars,
    Center,
    Uniform(BlockPattern),
    PerBlock(Vec<BlockPattern>),
}

impl fmt::Display for BlockPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockPattern::Scalar => write!(f, "scalar"),
            BlockPattern::Diagonal => write!(f, "diagonal"),
            BlockPattern::Full => write!(f, "full"),
            BlockPattern::Partition(ks) => {
                let ks: Vec<String> = ks.iter().map(usize::to_string).collect();
                write!(f, "block({})", ks.join(","))
            }
        }
    }
}

impl fmt::Display for LevelPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelPattern::Scalars => write!(f, "scalars"),
            LevelPattern::Center => write!(f, "center"),
            LevelPattern::Uniform(b) => write!(f, "{b}"),
            LevelPattern::PerBlock(bs) => {
                let parts: Vec<String> = bs.iter().map(ToString::to_string).collect();
                write!(f, "{}", parts.join("⊕"))
            }
        }
    }
}

fn parse_block(s: &str) -> Result<BlockPattern> {
    let s = s.trim();
    match s {
        "scalar" | "scalars" => return Ok(BlockPattern::Scalar),
        "diagonal" => return Ok(BlockPattern::Diagonal),
        "full" => return Ok(BlockPattern::Full),
        _ => {}
    }
    let inner = s
        .strip_prefix("block(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| Error::Usage(format!("unknown block pattern {s:?}")))?;
    let ks = inner
        .split(',')
        .map(|k| {
            k.trim()
                .parse::<usize>()
                .ok()
                .filter(|&k| k > 0)
                .ok_or_else(|| Error::Usage(format!("bad block size {k:?} in {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockPattern::Partition(ks))
}

impl std::str::FromStr for LevelPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.contains('⊕') || s.contains('+') {
            let parts = s
                .split(['⊕', '+'])
                .map(parse_block)
                .collect::<Result<Vec<_>>>()?;
            return Ok(LevelPattern::PerBlock(parts));
        }
        match s {
            "scalars" => Ok(LevelPattern::Scalars),
            "center" => Ok(LevelPattern::Center),
            _ => parse_block(s).map(LevelPattern::Uniform),
        }
    }
}

fn block_units(shape: &[usize], j: usize, pattern: &BlockPattern) -> Result<Vec<FiberElement>> {
    let n = shape[j];
    let unit = |a: usize, b: usize| FiberElement::unit(shape, j, a, b);
    Ok(match pattern {
        BlockPattern::Scalar => {
            let mut blocks = FiberElement::zeros(shape);
            for a in 0..n {
                blocks = blocks.add(&unit(a, a))?;
            }
            vec![blocks]
        }
        BlockPattern::Diagonal => (0..n).map(|a| unit(a, a)).collect(),
        BlockPattern::Full => (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| unit(a, b))
            .collect(),
        BlockPattern::Partition(ks) => {
            let total: usize = ks.iter().sum();
            if total != n {
                return Err(Error::Usage(format!(
                    "{pattern} has total size {total} but block {j} has dimension {n}"
                )));
            }
            let mut out = Vec::new();
            let mut start = 0;
            for &k in ks {
                for a in start..start + k {
                    for b in start..start + k {
                        out.push(unit(a, b));
                    }
                }
                start += k;
            }
            out
        }
    })
}

/// Generators of the subalgebra of one fiber described by `pattern`.
pub fn generators_for(pattern: &LevelPattern, shape: &FiberShape) -> Result<Vec<FiberElement>> {
    let dims = &shape.dims;
    match pattern {
        LevelPattern::Scalars => Ok(vec![FiberElement::identity(dims)]),
        LevelPattern::Center => (0..dims.len())
            .map(|j| block_units(dims, j, &BlockPattern::Scalar).map(|mut v| v.remove(0)))
            .collect(),
        LevelPattern::Uniform(b) => {
            let mut out = Vec::new();
            for j in 0..dims.len() {
                out.extend(block_units(dims, j, b)?);
            }
            Ok(out)
        }
        LevelPattern::PerBlock(bs) => {
            if bs.len() != dims.len() {
                return Err(Error::Usage(format!(
                    "pattern {pattern} has {} parts for a fiber with {} blocks",
                    bs.len(),
                    dims.len()
                )));
            }
            let mut out = Vec::new();
            for (j, b) in bs.iter().enumerate() {
                out.extend(block_units(dims, j, b)?);
            }
            Ok(out)
        }
    }
}
