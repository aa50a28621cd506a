use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::{squared_distance, Grid, Point};
use crate::error::{Error, Result};
use crate::numeric::pow_from_squared;

const SYMMETRY_SAMPLES: usize = 100;
const SYMMETRY_TOLERANCE: f64 = 1e-10;
const SYMMETRY_SEED: u64 = 0x5eed_c0ff_ee00_0001;

/// `c(θ, x) = s·|θ − x|^p / p`. A zero scale gives the null transport cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransportCost {
    pub exponent: f64,
    pub scale: f64,
}

impl TransportCost {
    pub fn new(exponent: f64, scale: f64) -> Result<Self> {
        if !(exponent >= 1.0 && exponent.is_finite()) {
            return Err(Error::Precondition(format!("transport exponent must be >= 1, got {exponent}")));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::Precondition(format!("transport scale must be >= 0, got {scale}")));
        }
        Ok(Self { exponent, scale })
    }

    pub fn zero() -> Self {
        Self { exponent: 2.0, scale: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        self.scale == 0.0
    }

    #[inline]
    pub fn eval(&self, theta: Point, x: Point) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        self.scale * pow_from_squared(squared_distance(theta, x), self.exponent) / self.exponent
    }

    /// `∂c/∂θ` on the real line.
    #[inline]
    pub fn d_theta_1d(&self, theta: f64, x: f64) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        let d = theta - x;
        if d == 0.0 {
            return 0.0;
        }
        let p = self.exponent;
        let mag = if p == 2.0 {
            d.abs()
        } else if p == 4.0 {
            d.abs().powi(3)
        } else {
            d.abs().powf(p - 1.0)
        };
        self.scale * mag * d.signum()
    }
}

/// Congestion term `f(x, m)` acting on the density `m` of `ν` against `m₀`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Congestion {
    None,
    Log,
    Power { alpha: f64 },
}

impl Congestion {
    /// `f(m)`. `Log` at zero density returns `-∞`.
    #[inline]
    pub fn marginal(&self, density: f64) -> f64 {
        match *self {
            Congestion::None => 0.0,
            Congestion::Log => density.ln(),
            Congestion::Power { alpha } => {
                if alpha == 1.0 {
                    density
                } else if alpha == 2.0 {
                    density * density
                } else {
                    density.powf(alpha)
                }
            }
        }
    }

    /// `F(m) = ∫₀^m f(s) ds`, with `F(0) = 0` for `Log` (limit of `m log m − m`).
    #[inline]
    pub fn primitive(&self, density: f64) -> f64 {
        match *self {
            Congestion::None => 0.0,
            Congestion::Log => {
                if density == 0.0 {
                    0.0
                } else {
                    density * density.ln() - density
                }
            }
            Congestion::Power { alpha } => density.powf(alpha + 1.0) / (alpha + 1.0),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Congestion::None)
    }
}

/// `a·|A·x + B·y + b|^q`, with `A`, `B` at most 2×2 and `|·|` Euclidean.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePowerTerm {
    pub coefficient: f64,
    rows: usize,
    x_map: [[f64; 2]; 2],
    y_map: [[f64; 2]; 2],
    offset: [f64; 2],
    pub exponent: f64,
    pub symmetric: bool,
}

impl AffinePowerTerm {
    /// `x_map`, `y_map` are lists of rows; an empty `y_map` means `B = 0`.
    pub fn new(
        coefficient: f64,
        x_map: &[Vec<f64>],
        y_map: &[Vec<f64>],
        offset: &[f64],
        exponent: f64,
        symmetric: bool,
    ) -> Result<Self> {
        let rows = x_map.len();
        if rows == 0 || rows > 2 {
            return Err(Error::Precondition(format!("term needs 1 or 2 rows, got {rows}")));
        }
        if !(exponent >= 1.0 && exponent.is_finite()) {
            return Err(Error::Precondition(format!("term exponent must be >= 1, got {exponent}")));
        }
        if !coefficient.is_finite() {
            return Err(Error::Precondition("term coefficient must be finite".into()));
        }
        if !y_map.is_empty() && y_map.len() != rows {
            return Err(Error::Precondition(format!(
                "B has {} rows but A has {rows}",
                y_map.len()
            )));
        }
        if offset.len() != rows {
            return Err(Error::Precondition(format!(
                "offset has {} entries but A has {rows} rows",
                offset.len()
            )));
        }
        let fill = |m: &[Vec<f64>]| -> Result<[[f64; 2]; 2]> {
            let mut out = [[0.0; 2]; 2];
            for (r, row) in m.iter().enumerate() {
                if row.is_empty() || row.len() > 2 {
                    return Err(Error::Precondition(format!("row of length {}", row.len())));
                }
                for (c, &v) in row.iter().enumerate() {
                    out[r][c] = v;
                }
            }
            Ok(out)
        };
        let mut off = [0.0; 2];
        off[..rows].copy_from_slice(offset);
        Ok(Self {
            coefficient,
            rows,
            x_map: fill(x_map)?,
            y_map: fill(y_map)?,
            offset: off,
            exponent,
            symmetric,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn x_map(&self) -> Vec<Vec<f64>> {
        self.x_map[..self.rows].iter().map(|r| r.to_vec()).collect()
    }

    pub fn y_map(&self) -> Vec<Vec<f64>> {
        self.y_map[..self.rows].iter().map(|r| r.to_vec()).collect()
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset[..self.rows]
    }

    pub fn has_y_dependence(&self) -> bool {
        self.y_map.iter().flatten().any(|&v| v != 0.0)
    }

    #[inline]
    pub fn eval(&self, x: Point, y: Point) -> f64 {
        let mut s = 0.0;
        for r in 0..self.rows {
            let v = self.x_map[r][0] * x[0]
                + self.x_map[r][1] * x[1]
                + self.y_map[r][0] * y[0]
                + self.y_map[r][1] * y[1]
                + self.offset[r];
            s += v * v;
        }
        self.coefficient * pow_from_squared(s, self.exponent)
    }
}

/// The separable cost `F(θ, x, ν) = c(θ, x) + f(x, dν/dm₀) + V₀(x) + ∫ w(x, y) dν(y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    pub transport: TransportCost,
    pub congestion: Congestion,
    pub potential: Vec<AffinePowerTerm>,
    pub kernel: Vec<AffinePowerTerm>,
    /// Custom reference measure on the strategy grid; `None` means cell volumes.
    pub reference: Option<Vec<f64>>,
}

impl CostModel {
    pub fn new(transport: TransportCost, congestion: Congestion) -> Self {
        Self { transport, congestion, potential: Vec::new(), kernel: Vec::new(), reference: None }
    }

    pub fn with_potential(mut self, term: AffinePowerTerm) -> Self {
        self.potential.push(term);
        self
    }

    pub fn with_kernel(mut self, term: AffinePowerTerm) -> Self {
        self.kernel.push(term);
        self
    }

    #[inline]
    pub fn potential_at(&self, x: Point) -> f64 {
        self.potential.iter().map(|t| t.eval(x, [0.0; 2])).sum()
    }

    #[inline]
    pub fn kernel_at(&self, x: Point, y: Point) -> f64 {
        self.kernel.iter().map(|t| t.eval(x, y)).sum()
    }

    pub fn has_kernel(&self) -> bool {
        !self.kernel.is_empty()
    }

    pub fn kernel_is_symmetric(&self) -> bool {
        self.kernel.iter().all(|t| t.symmetric)
    }

    pub fn require_symmetric(&self) -> Result<()> {
        match self.kernel.iter().position(|t| !t.symmetric) {
            None => Ok(()),
            Some(k) => Err(Error::AsymmetricKernel(format!("kernel term {k} is not flagged symmetric"))),
        }
    }

    /// `m₀` on the strategy grid.
    pub fn reference_weights(&self, grid: &Grid) -> Vec<f64> {
        match &self.reference {
            Some(w) => w.clone(),
            None => grid.cell_volumes().to_vec(),
        }
    }

    /// Checks the symmetry flags on sampled pairs of the strategy box and the
    /// structural constraints (`B = 0` for potentials, dimensions, `m₀`).
    pub fn validate(&self, strategy_grid: &Grid) -> Result<()> {
        let dim = strategy_grid.dim();
        for (k, t) in self.potential.iter().enumerate() {
            if t.has_y_dependence() {
                return Err(Error::Schema {
                    key: format!("cost.potential[{k}].b"),
                    reason: "potential terms cannot depend on y".into(),
                });
            }
        }
        for (k, t) in self.potential.iter().chain(&self.kernel).enumerate() {
            let uses_second_axis =
                t.x_map.iter().chain(&t.y_map).any(|r| r[1] != 0.0);
            if dim == 1 && uses_second_axis {
                return Err(Error::Precondition(format!(
                    "term {k} uses a second coordinate on a 1D grid"
                )));
            }
        }
        if let Congestion::Power { alpha } = self.congestion {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::Schema {
                    key: "cost.f.alpha".into(),
                    reason: format!("power congestion needs alpha > 0, got {alpha}"),
                });
            }
        }
        if let Some(w) = &self.reference {
            if w.len() != strategy_grid.len() {
                return Err(Error::Schema {
                    key: "cost.reference_measure".into(),
                    reason: format!("{} weights for {} strategy nodes", w.len(), strategy_grid.len()),
                });
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Schema {
                    key: "cost.reference_measure".into(),
                    reason: "weights must be finite and nonnegative".into(),
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(SYMMETRY_SEED);
        let bounds = strategy_grid.bounds().to_vec();
        let sample = |rng: &mut ChaCha8Rng| -> Point {
            let mut p = [0.0; 2];
            for (k, &(lo, hi)) in bounds.iter().enumerate() {
                p[k] = rng.gen_range(lo..=hi);
            }
            p
        };
        for (k, t) in self.kernel.iter().enumerate() {
            if !t.symmetric {
                continue;
            }
            for _ in 0..SYMMETRY_SAMPLES {
                let x = sample(&mut rng);
                let y = sample(&mut rng);
                let gap = (t.eval(x, y) - t.eval(y, x)).abs();
                if gap > SYMMETRY_TOLERANCE {
                    return Err(Error::AsymmetricKernel(format!(
                        "kernel term {k} flagged symmetric but |φ(x,y) − φ(y,x)| = {gap:e} at x = {x:?}, y = {y:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}
