use std::fmt;

use super::operator::{Operator, C64};
use super::{SpinError, DEFAULT_MAX_DIM};

/// Spin quantum number, stored as the integer `2s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Spin(u32);

impl Spin {
    pub const HALF: Spin = Spin(1);
    pub const ONE: Spin = Spin(2);
    pub const THREE_HALVES: Spin = Spin(3);

    pub fn new(s: f64) -> Result<Self, SpinError> {
        let twice = 2.0 * s;
        if !twice.is_finite() || twice < 0.0 || (twice - twice.round()).abs() > 1e-9 {
            return Err(SpinError::NotHalfInteger(s));
        }
        Ok(Spin(twice.round() as u32))
    }

    pub const fn from_twice(twice_s: u32) -> Self {
        Spin(twice_s)
    }

    pub fn twice(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn dim(self) -> usize {
        self.0 as usize + 1
    }

    /// Projections in descending order: s, s-1, ..., -s.
    pub fn projections(self) -> impl Iterator<Item = f64> {
        let s = self.value();
        (0..self.dim()).map(move |k| s - k as f64)
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinSite {
    pub label: String,
    pub spin: Spin,
}

impl SpinSite {
    pub fn new(label: impl Into<String>, spin: Spin) -> Self {
        Self {
            label: label.into(),
            spin,
        }
    }

    pub fn dim(&self) -> usize {
        self.spin.dim()
    }
}

/// Cartesian and ladder operators for a single spin, in the |s, m⟩ basis
/// ordered m = s, s-1, ..., -s.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub sx: Operator,
    pub sy: Operator,
    pub sz: Operator,
    pub plus: Operator,
    pub minus: Operator,
}

pub fn spin_operators(s: Spin) -> SpinOperators {
    let sv = s.value();
    let dim = s.dim();
    let ms: Vec<f64> = s.projections().collect();

    let sz = Operator::from_diagonal(&ms);
    // S+ |m⟩ = sqrt(s(s+1) - m(m+1)) |m+1⟩; row index k-1 holds m+1.
    let mut plus = Operator::zeros(dim);
    for k in 1..dim {
        let m = ms[k];
        plus[(k - 1, k)] = C64::new((sv * (sv + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
    }
    let minus = plus.adjoint();
    let sx = (&plus + &minus).scale_re(0.5);
    let sy = (&plus - &minus).scale(C64::new(0.0, -0.5));

    SpinOperators {
        sx,
        sy,
        sz,
        plus,
        minus,
    }
}

/// Lift a single-site operator into the full product space.
pub fn embed(op: &Operator, site_index: usize, system: &[SpinSite]) -> Result<Operator, SpinError> {
    let site = system.get(site_index).ok_or(SpinError::SiteOutOfRange {
        index: site_index,
        len: system.len(),
    })?;
    if op.dim() != site.dim() {
        return Err(SpinError::DimensionMismatch {
            expected: site.dim(),
            found: op.dim(),
        });
    }
    let total: usize = system.iter().map(SpinSite::dim).product();
    if total > DEFAULT_MAX_DIM {
        return Err(SpinError::DimensionCap {
            dim: total,
            cap: DEFAULT_MAX_DIM,
        });
    }

    let mut out: Option<Operator> = None;
    for (k, s) in system.iter().enumerate() {
        let factor = if k == site_index {
            op.clone()
        } else {
            Operator::identity(s.dim())
        };
        out = Some(match out {
            None => factor,
            Some(acc) => acc.kron(&factor),
        });
    }
    Ok(out.expect("system has at least one site"))
}
