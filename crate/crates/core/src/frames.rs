//! Reference-frame and per-unit conversions.
//!
//! All transforms use the amplitude-invariant (peak-scaled) convention, so a
//! balanced set of phase amplitude `V` maps to a stationary vector of length
//! `V` and to a constant dq vector of length `V`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vector in the stationary αβ frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlphaBetaPair {
    pub alpha: f64,
    pub beta: f64,
}

/// A vector in a rotating dq frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DqPair {
    pub d: f64,
    pub q: f64,
}

/// Three phase quantities `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbcTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl AlphaBetaPair {
    pub const ZERO: Self = Self { alpha: 0.0, beta: 0.0 };

    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// Unit vector at angle `theta`.
    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self { alpha: c, beta: s }
    }

    pub fn norm(&self) -> f64 {
        self.alpha.hypot(self.beta)
    }

    pub fn angle(&self) -> f64 {
        self.beta.atan2(self.alpha)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.alpha * k, self.beta * k)
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite()
    }
}

impl DqPair {
    pub const ZERO: Self = Self { d: 0.0, q: 0.0 };

    pub const fn new(d: f64, q: f64) -> Self {
        Self { d, q }
    }

    pub fn norm(&self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn angle(&self) -> f64 {
        self.q.atan2(self.d)
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.d * k, self.q * k)
    }

    /// Rotates the vector by `angle` within its own frame (complex multiply
    /// by `e^{j angle}`).
    pub fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.d - s * self.q, s * self.d + c * self.q)
    }

    /// Multiplication by `j`: a quarter-turn lead.
    pub fn quarter_turn(self) -> Self {
        Self::new(-self.q, self.d)
    }

    /// Complex product, treating `(d, q)` as `d + jq`.
    pub fn cmul(self, other: Self) -> Self {
        Self::new(self.d * other.d - self.q * other.q, self.d * other.q + self.q * other.d)
    }

    /// Complex quotient, treating `(d, q)` as `d + jq`.
    pub fn cdiv(self, other: Self) -> Self {
        let den = other.d * other.d + other.q * other.q;
        Self::new(
            (self.d * other.d + self.q * other.q) / den,
            (self.q * other.d - self.d * other.q) / den,
        )
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.d * other.d + self.q * other.q
    }

    pub fn is_finite(&self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }
}

macro_rules! impl_vector_ops {
    ($ty:ident, $x:ident, $y:ident) => {
        impl Add for $ty {
            type Output = $ty;
            fn add(self, rhs: $ty) -> $ty {
                $ty::new(self.$x + rhs.$x, self.$y + rhs.$y)
            }
        }

        impl Sub for $ty {
            type Output = $ty;
            fn sub(self, rhs: $ty) -> $ty {
                $ty::new(self.$x - rhs.$x, self.$y - rhs.$y)
            }
        }

        impl Neg for $ty {
            type Output = $ty;
            fn neg(self) -> $ty {
                $ty::new(-self.$x, -self.$y)
            }
        }

        impl Mul<f64> for $ty {
            type Output = $ty;
            fn mul(self, k: f64) -> $ty {
                self.scale(k)
            }
        }
    };
}

impl_vector_ops!(AlphaBetaPair, alpha, beta);
impl_vector_ops!(DqPair, d, q);

impl AbcTriple {
    pub fn sum(&self) -> f64 {
        self.a + self.b + self.c
    }
}

/// Stationary to rotating frame at angle `theta`.
pub fn park(x: AlphaBetaPair, theta: f64) -> DqPair {
    let (s, c) = theta.sin_cos();
    DqPair {
        d: x.alpha * c + x.beta * s,
        q: -x.alpha * s + x.beta * c,
    }
}

/// Rotating to stationary frame at angle `theta`.
pub fn inverse_park(x: DqPair, theta: f64) -> AlphaBetaPair {
    let (s, c) = theta.sin_cos();
    AlphaBetaPair {
        alpha: x.d * c - x.q * s,
        beta: x.d * s + x.q * c,
    }
}

/// Amplitude-invariant inverse Clarke transform.
pub fn alphabeta_to_abc(x: AlphaBetaPair) -> AbcTriple {
    let half_sqrt3 = 0.5 * 3f64.sqrt();
    let a = x.alpha;
    let b = -0.5 * x.alpha + half_sqrt3 * x.beta;
    // c is taken as -(a + b) so the set is balanced to the last bit
    AbcTriple { a, b, c: -(a + b) }
}

/// Amplitude-invariant Clarke transform of a phase triple (zero-sequence
/// discarded).
pub fn abc_to_alphabeta(x: AbcTriple) -> AlphaBetaPair {
    AlphaBetaPair {
        alpha: (2.0 * x.a - x.b - x.c) / 3.0,
        beta: (x.b - x.c) / 3f64.sqrt(),
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut w = theta % two_pi;
    if w <= -PI {
        w += two_pi;
    } else if w > PI {
        w -= two_pi;
    }
    w
}

/// Per-unit bases; see [`PerUnitBase::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUnitBase {
    /// Three-phase power base, W.
    pub s_base: f64,
    /// Phase-peak voltage base, V.
    pub v_base: f64,
    /// Phase-peak current base, A.
    pub i_base: f64,
    /// Impedance base, Ω.
    pub z_base: f64,
    /// Angular frequency base, rad/s.
    pub omega_base: f64,
}

/// Which base a quantity is normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QuantityKind {
    Voltage,
    Current,
    Impedance,
    Power,
    Frequency,
}

impl FromStr for QuantityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "voltage" => Ok(Self::Voltage),
            "current" => Ok(Self::Current),
            "impedance" => Ok(Self::Impedance),
            "power" => Ok(Self::Power),
            "frequency" => Ok(Self::Frequency),
            other => Err(Error::invalid("quantity kind", format!("unknown kind `{other}`"))),
        }
    }
}

impl fmt::Display for QuantityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Voltage => "voltage",
            Self::Current => "current",
            Self::Impedance => "impedance",
            Self::Power => "power",
            Self::Frequency => "frequency",
        };
        f.write_str(s)
    }
}

impl PerUnitBase {
    /// Builds the base set from power, phase-peak voltage and angular
    /// frequency. `i_base = (2/3) s_base / v_base`, `z_base = v_base / i_base`.
    pub fn new(s_base: f64, v_base: f64, omega_base: f64) -> Result<Self> {
        for (name, v) in [("s_base", s_base), ("v_base", v_base), ("omega_base", omega_base)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        let i_base = 2.0 / 3.0 * s_base / v_base;
        Ok(Self {
            s_base,
            v_base,
            i_base,
            z_base: v_base / i_base,
            omega_base,
        })
    }

    /// Base for a 2 kW, 200 V line-to-line RMS, 50 Hz system.
    pub fn default_hardware() -> Self {
        Self::new(2000.0, 200.0 * 2f64.sqrt() / 3f64.sqrt(), 2.0 * PI * 50.0)
            .expect("hard-coded base is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::new(self.s_base, self.v_base, self.omega_base)?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs();
        if !close(self.i_base, rebuilt.i_base) || !close(self.z_base, rebuilt.z_base) {
            return Err(Error::invalid(
                "base",
                "i_base and z_base must follow from s_base and v_base",
            ));
        }
        Ok(())
    }

    pub fn base_of(&self, kind: QuantityKind) -> f64 {
        match kind {
            QuantityKind::Voltage => self.v_base,
            QuantityKind::Current => self.i_base,
            QuantityKind::Impedance => self.z_base,
            QuantityKind::Power => self.s_base,
            QuantityKind::Frequency => self.omega_base,
        }
    }

    pub fn to_per_unit(&self, x: f64, kind: QuantityKind) -> f64 {
        x / self.base_of(kind)
    }

    pub fn from_per_unit(&self, x: f64, kind: QuantityKind) -> f64 {
        x * self.base_of(kind)
    }

    /// Inductance expressed as per-unit reactance at `omega_base`.
    pub fn inductance_to_pu(&self, l: f64) -> f64 {
        l * self.omega_base / self.z_base
    }

    pub fn inductance_from_pu(&self, x_pu: f64) -> f64 {
        x_pu * self.z_base / self.omega_base
    }

    /// Capacitance expressed as per-unit susceptance at `omega_base`.
    pub fn capacitance_to_pu(&self, c: f64) -> f64 {
        c * self.omega_base * self.z_base
    }

    pub fn capacitance_from_pu(&self, b_pu: f64) -> f64 {
        b_pu / (self.omega_base * self.z_base)
    }
}

impl Default for PerUnitBase {
    fn default() -> Self {
        Self::default_hardware()
    }
}
