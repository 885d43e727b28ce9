/// Arithmetic carrier accepted by the expression evaluator.
///
/// Fallible operations return a short reason string; the evaluator attaches
/// the offending subexpression before surfacing it as an [`crate::Error`].
pub trait Scalar: Clone + std::fmt::Debug {
    /// A constant of the same kind (and, for jets, the same space and degree).
    fn lift(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    /// Overwrites the value component, leaving derivatives untouched.
    fn set_value(&mut self, v: f64);
    /// True when every derivative component vanishes.
    fn is_constant(&self) -> bool;

    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn recip(&self) -> Result<Self, &'static str>;
    fn div(&self, other: &Self) -> Result<Self, &'static str>;

    fn sqrt(&self) -> Result<Self, &'static str>;
    fn sin(&self) -> Result<Self, &'static str>;
    fn cos(&self) -> Result<Self, &'static str>;
    fn exp(&self) -> Result<Self, &'static str>;
    fn ln(&self) -> Result<Self, &'static str>;
    fn abs(&self) -> Result<Self, &'static str>;
    /// Power with a real (non-varying) exponent.
    fn powf(&self, p: f64) -> Result<Self, &'static str>;

    /// Integer power by binary exponentiation.
    ///
    /// Both `f64` and jets route integer exponents through here, so the value
    /// component of a jet power matches the plain evaluation bit for bit.
    fn powi(&self, k: i64) -> Result<Self, &'static str> {
        if k == 0 {
            return Ok(self.lift(1.0));
        }
        let mut e = k.unsigned_abs();
        let mut base = self.clone();
        let mut acc: Option<Self> = None;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => base.clone(),
                    Some(a) => a.mul(&base),
                });
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        let acc = acc.expect("nonzero exponent");
        if k < 0 {
            acc.recip()
        } else {
            Ok(acc)
        }
    }

    /// General power `self^exponent`; constant exponents take the `powf` path.
    fn pow(&self, exponent: &Self) -> Result<Self, &'static str> {
        if exponent.is_constant() {
            self.powf(exponent.value())
        } else {
            if self.value() <= 0.0 {
                return Err("power with varying exponent requires a positive base");
            }
            let value = Scalar::powf(&self.value(), exponent.value())?;
            let mut out = self.ln()?.mul(exponent).exp()?;
            out.set_value(value);
            Ok(out)
        }
    }
}

/// Exponents handled exactly by repeated multiplication.
pub(crate) fn small_integer(p: f64) -> Option<i64> {
    if p.fract() == 0.0 && p.abs() <= 64.0 {
        Some(p as i64)
    } else {
        None
    }
}

fn finite(v: f64) -> Result<f64, &'static str> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err("non-finite result")
    }
}

impl Scalar for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn set_value(&mut self, v: f64) {
        *self = v;
    }
    fn is_constant(&self) -> bool {
        true
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn recip(&self) -> Result<Self, &'static str> {
        if *self == 0.0 {
            return Err("division by zero");
        }
        finite(1.0 / self)
    }
    fn div(&self, other: &Self) -> Result<Self, &'static str> {
        if *other == 0.0 {
            return Err("division by zero");
        }
        finite(self / other)
    }
    fn sqrt(&self) -> Result<Self, &'static str> {
        if *self < 0.0 {
            return Err("square root of a negative number");
        }
        Ok(f64::sqrt(*self))
    }
    fn sin(&self) -> Result<Self, &'static str> {
        Ok(f64::sin(*self))
    }
    fn cos(&self) -> Result<Self, &'static str> {
        Ok(f64::cos(*self))
    }
    fn exp(&self) -> Result<Self, &'static str> {
        finite(f64::exp(*self))
    }
    fn ln(&self) -> Result<Self, &'static str> {
        if *self <= 0.0 {
            return Err("logarithm of a non-positive number");
        }
        Ok(f64::ln(*self))
    }
    fn abs(&self) -> Result<Self, &'static str> {
        Ok(f64::abs(*self))
    }
    fn powf(&self, p: f64) -> Result<Self, &'static str> {
        if let Some(k) = small_integer(p) {
            return self.powi(k);
        }
        if *self < 0.0 {
            return Err("non-integer power of a negative number");
        }
        if *self == 0.0 && p < 0.0 {
            return Err("negative power of zero");
        }
        finite(f64::powf(*self, p))
    }
}
