//! Heterogeneous coefficient fields `a(x)`.
//!
//! Periodic fields are stored as a profile on the unit cell together with the
//! map from physical to cell coordinates, `y = S^T x / period`. The cell
//! problems are solved in `y`; the physical field is the pull-back.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, Mat2};
use crate::{Error, Point, Result};

/// Scalar profile on the unit cell `[0, 1)^2`, extended periodically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum CellProfile {
    /// `exp(kappa sin(2 pi y1) sin(2 pi y2))`.
    Exponential { kappa: f64 },
    /// Two-phase laminate in `y1`: `values[0]` on `[0, 1/2)`, `values[1]` on `[1/2, 1)`.
    Laminate { values: [f64; 2] },
    /// 2x2 checkerboard of tiles of side 1/2; tile `(i, j)` takes `high`
    /// when `i + j + phase` is even and `1 / high` otherwise.
    Checkerboard { high: f64, phase: u8 },
}

impl CellProfile {
    pub fn eval(&self, y: Point) -> f64 {
        match *self {
            CellProfile::Exponential { kappa } => {
                (kappa * (2.0 * PI * y[0]).sin() * (2.0 * PI * y[1]).sin()).exp()
            }
            CellProfile::Laminate { values } => {
                if frac(y[0]) < 0.5 {
                    values[0]
                } else {
                    values[1]
                }
            }
            CellProfile::Checkerboard { high, phase } => {
                let i = (2.0 * frac(y[0])).floor() as i64;
                let j = (2.0 * frac(y[1])).floor() as i64;
                if (i + j + phase as i64) % 2 == 0 {
                    high
                } else {
                    1.0 / high
                }
            }
        }
    }

    /// Pointwise range `(min, max)` of the profile.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            CellProfile::Exponential { kappa } => ((-kappa.abs()).exp(), kappa.abs().exp()),
            CellProfile::Laminate { values } => {
                (values[0].min(values[1]), values[0].max(values[1]))
            }
            CellProfile::Checkerboard { high, .. } => (high.min(1.0 / high), high.max(1.0 / high)),
        }
    }
}

fn frac(t: f64) -> f64 {
    let f = t - t.floor();
    // t - floor(t) can round up to 1 for tiny negative t
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// The smooth reference cell `y -> exp(1.5 sin(2 pi y1) sin(2 pi y2))`.
///
/// It is symmetric under `y1 <-> y2` and under `y1 -> 1/2 - y1`, so its
/// homogenized matrix is a multiple of the identity.
pub fn default_periodic_cell() -> CellProfile {
    CellProfile::Exponential { kappa: 1.5 }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CoeffKind {
    Constant(Mat2),
    /// `a(x) = cell(S^T x / epsilon) Id / normalization`.
    RotatedPeriodic {
        cell: CellProfile,
        rotation_angle: f64,
        epsilon: f64,
        normalization: f64,
    },
    /// Alternating tiles of side `epsilon` with values `sqrt(c)` and `1/sqrt(c)`.
    Checkerboard {
        contrast: f64,
        epsilon: f64,
        seed: u64,
        normalization: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoeffField {
    kind: CoeffKind,
    lambda: f64,
}

/// Description of a periodic field in cell coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicStructure {
    pub cell: CellProfile,
    pub rotation_angle: f64,
    /// Physical length of one unit cell.
    pub period: f64,
    pub normalization: f64,
}

impl PeriodicStructure {
    /// Cell coordinates `S^T x / period` of a physical point.
    pub fn to_cell(&self, x: Point) -> Point {
        let st = linalg::transpose(&linalg::rotation(self.rotation_angle));
        let y = linalg::mat_vec(&st, x);
        [y[0] / self.period, y[1] / self.period]
    }

    pub fn rotation(&self) -> Mat2 {
        linalg::rotation(self.rotation_angle)
    }

    /// Scalar coefficient on the cell, normalization applied.
    pub fn cell_value(&self, y: Point) -> f64 {
        self.cell.eval(y) / self.normalization
    }
}

impl CoeffField {
    pub fn constant(m: Mat2) -> Result<Self> {
        let sym = 0.5 * (m[0][1] + m[1][0]);
        if (m[0][1] - m[1][0]).abs() > 1e-14 * (m[0][0].abs() + m[1][1].abs()) {
            return Err(Error::Config(
                "constant coefficient must be symmetric".into(),
            ));
        }
        let (lo, hi) = linalg::sym_eigenvalues(&[[m[0][0], sym], [sym, m[1][1]]]);
        if !(lo > 0.0) {
            return Err(Error::Config(
                "constant coefficient must be positive definite".into(),
            ));
        }
        Ok(Self {
            kind: CoeffKind::Constant(m),
            lambda: lo.min(1.0 / hi),
        })
    }

    pub fn identity() -> Self {
        Self::constant(linalg::IDENTITY).expect("identity is SPD")
    }

    pub fn rotated_periodic(cell: CellProfile, rotation_angle: f64, epsilon: f64) -> Result<Self> {
        Self::rotated_periodic_normalized(cell, rotation_angle, epsilon, 1.0)
    }

    pub fn rotated_periodic_normalized(
        cell: CellProfile,
        rotation_angle: f64,
        epsilon: f64,
        normalization: f64,
    ) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        check_positive("normalization", normalization)?;
        let (lo, hi) = cell.range();
        if !(lo > 0.0) {
            return Err(Error::Config("cell profile must be positive".into()));
        }
        Ok(Self {
            kind: CoeffKind::RotatedPeriodic {
                cell,
                rotation_angle,
                epsilon,
                normalization,
            },
            lambda: (lo / normalization).min(normalization / hi),
        })
    }

    /// Alternating checkerboard. The seed selects which tile parity carries
    /// the high value; both choices are self-dual.
    pub fn checkerboard(contrast: f64, epsilon: f64, seed: u64) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        if !(contrast > 1.0) {
            return Err(Error::Config(format!(
                "checkerboard contrast {contrast} must exceed 1"
            )));
        }
        Ok(Self {
            kind: CoeffKind::Checkerboard {
                contrast,
                epsilon,
                seed,
                normalization: 1.0,
            },
            lambda: contrast.sqrt().recip(),
        })
    }

    pub fn kind(&self) -> &CoeffKind {
        &self.kind
    }

    /// Ellipticity constant: eigenvalues of `a(x)` lie in `[lambda, 1/lambda]`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, CoeffKind::Constant(_))
    }

    /// Oscillation length (cell period in physical units), if any.
    pub fn epsilon(&self) -> Option<f64> {
        match self.kind {
            CoeffKind::Constant(_) => None,
            CoeffKind::RotatedPeriodic { epsilon, .. } => Some(epsilon),
            CoeffKind::Checkerboard { epsilon, .. } => Some(epsilon),
        }
    }

    /// The unit-cell description of a periodic field.
    pub fn periodic_structure(&self) -> Option<PeriodicStructure> {
        match &self.kind {
            CoeffKind::Constant(_) => None,
            CoeffKind::RotatedPeriodic {
                cell,
                rotation_angle,
                epsilon,
                normalization,
            } => Some(PeriodicStructure {
                cell: cell.clone(),
                rotation_angle: *rotation_angle,
                period: *epsilon,
                normalization: *normalization,
            }),
            CoeffKind::Checkerboard {
                contrast,
                epsilon,
                seed,
                normalization,
            } => Some(PeriodicStructure {
                cell: CellProfile::Checkerboard {
                    high: contrast.sqrt(),
                    phase: (seed % 2) as u8,
                },
                rotation_angle: 0.0,
                // two tiles per unit cell
                period: 2.0 * epsilon,
                normalization: *normalization,
            }),
        }
    }

    /// Scalar value when the field is a multiple of the identity.
    pub fn scalar_at(&self, x: Point) -> Option<f64> {
        match &self.kind {
            CoeffKind::Constant(m) => {
                if m[0][1] == 0.0 && m[1][0] == 0.0 && m[0][0] == m[1][1] {
                    Some(m[0][0])
                } else {
                    None
                }
            }
            _ => {
                let p = self.periodic_structure().expect("periodic");
                Some(p.cell_value(p.to_cell(x)))
            }
        }
    }

    pub fn eval(&self, x: Point) -> Mat2 {
        match &self.kind {
            CoeffKind::Constant(m) => *m,
            _ => linalg::scaled_identity(self.scalar_at(x).expect("periodic fields are scalar")),
        }
    }

    /// Same field at a different oscillation length.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        let mut out = self.clone();
        match &mut out.kind {
            CoeffKind::Constant(_) => {}
            CoeffKind::RotatedPeriodic { epsilon: e, .. } => *e = epsilon,
            CoeffKind::Checkerboard { epsilon: e, .. } => *e = epsilon,
        }
        Ok(out)
    }

    /// The field divided by `c`.
    pub fn scaled_down(&self, c: f64) -> Result<Self> {
        check_positive("normalization", c)?;
        let mut out = self.clone();
        match &mut out.kind {
            CoeffKind::Constant(m) => *m = linalg::mat_scale(m, 1.0 / c),
            CoeffKind::RotatedPeriodic { normalization, .. } => *normalization *= c,
            CoeffKind::Checkerboard { normalization, .. } => *normalization *= c,
        }
        let (lo, hi) = match &out.kind {
            CoeffKind::Constant(m) => linalg::sym_eigenvalues(m),
            _ => {
                let p = out.periodic_structure().expect("periodic");
                let (lo, hi) = p.cell.range();
                (lo / p.normalization, hi / p.normalization)
            }
        };
        out.lambda = lo.min(1.0 / hi);
        Ok(out)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} must be positive")))
    }
}

/// Divides the field by `c = (abar_11 + abar_22) / 2` so that its homogenized
/// matrix becomes the identity.
pub fn normalize_to_identity(field: &CoeffField, abar: &Mat2) -> Result<CoeffField> {
    let trace = abar[0][0] + abar[1][1];
    let aniso = (abar[0][0] - abar[1][1]).abs() + 2.0 * abar[0][1].abs().max(abar[1][0].abs());
    if !(trace > 0.0) || aniso > 0.1 * trace {
        return Err(Error::NotNormalizable(format!(
            "homogenized matrix {abar:?} is not close to a multiple of the identity"
        )));
    }
    field.scaled_down(0.5 * trace)
}
