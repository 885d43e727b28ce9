use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use std::sync::LazyLock;

use super::scalar::{small_integer, Scalar};
use crate::error::{Error, Result};

/// Monomial bookkeeping shared by every jet over the same number of variables.
///
/// Monomials are stored in graded order, so the coefficients of total degree
/// `<= d` always form a prefix of length `offsets[d + 1]`.
pub struct JetSpace {
    nvars: usize,
    max_degree: usize,
    exponents: Vec<Vec<u8>>,
    offsets: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    // (lhs, rhs, out), sorted by `out`
    mul: Vec<(u32, u32, u32)>,
    mul_ends: Vec<usize>,
    // per variable: (src, dst, factor), sorted by `dst`
    deriv: Vec<Vec<(u32, u32, f64)>>,
    deriv_ends: Vec<Vec<usize>>,
    factorial: Vec<f64>,
}

static SPACES: LazyLock<Mutex<HashMap<usize, Arc<JetSpace>>>> = LazyLock::new(|| Mutex::new(HashMap::new()));

impl JetSpace {
    /// Shared space over `nvars` variables supporting at least `degree`.
    pub fn get(nvars: usize, degree: usize) -> Arc<JetSpace> {
        let mut spaces = SPACES.lock().expect("jet space cache poisoned");
        if let Some(s) = spaces.get(&nvars) {
            if s.max_degree >= degree {
                return s.clone();
            }
        }
        let s = Arc::new(JetSpace::build(nvars, degree));
        spaces.insert(nvars, s.clone());
        s
    }

    fn build(nvars: usize, max_degree: usize) -> JetSpace {
        let mut exponents: Vec<Vec<u8>> = Vec::new();
        let mut offsets = vec![0usize];
        for d in 0..=max_degree {
            let mut cur = vec![0u8; nvars];
            push_compositions(&mut exponents, &mut cur, 0, d);
            offsets.push(exponents.len());
        }
        let index: HashMap<Vec<u8>, usize> =
            exponents.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let degree_of = |i: usize| offsets.partition_point(|&o| o <= i) - 1;

        let mut mul = Vec::new();
        for (i, a) in exponents.iter().enumerate() {
            let da = degree_of(i);
            for (j, b) in exponents.iter().enumerate() {
                if da + degree_of(j) > max_degree {
                    continue;
                }
                let sum: Vec<u8> = a.iter().zip(b).map(|(p, q)| p + q).collect();
                mul.push((i as u32, j as u32, index[&sum] as u32));
            }
        }
        mul.sort_by_key(|&(i, j, k)| (k, i, j));
        let mul_ends = (0..=max_degree)
            .map(|d| mul.partition_point(|&(_, _, k)| (k as usize) < offsets[d + 1]))
            .collect();

        let mut deriv = Vec::with_capacity(nvars);
        let mut deriv_ends = Vec::with_capacity(nvars);
        for v in 0..nvars {
            let mut entries = Vec::new();
            for (src, e) in exponents.iter().enumerate() {
                if e[v] == 0 {
                    continue;
                }
                let mut lower = e.clone();
                lower[v] -= 1;
                entries.push((src as u32, index[&lower] as u32, f64::from(e[v])));
            }
            entries.sort_by_key(|&(_, dst, _)| dst);
            let ends = (0..max_degree)
                .map(|d| entries.partition_point(|&(_, dst, _)| (dst as usize) < offsets[d + 1]))
                .collect();
            deriv.push(entries);
            deriv_ends.push(ends);
        }

        let factorial = exponents
            .iter()
            .map(|e| e.iter().map(|&k| (1..=u32::from(k)).map(f64::from).product::<f64>()).product())
            .collect();

        JetSpace { nvars, max_degree, exponents, offsets, index, mul, mul_ends, deriv, deriv_ends, factorial }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Exponent vector of the monomial stored at `slot`.
    pub fn monomial(&self, slot: usize) -> &[u8] {
        &self.exponents[slot]
    }

    fn len(&self, degree: usize) -> usize {
        self.offsets[degree + 1]
    }
}

fn push_compositions(out: &mut Vec<Vec<u8>>, cur: &mut Vec<u8>, pos: usize, remaining: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = remaining as u8;
        out.push(cur.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k as u8;
        push_compositions(out, cur, pos + 1, remaining - k);
    }
    cur[pos] = 0;
}

/// Truncated multivariate Taylor expansion at a point: the value together
/// with every partial derivative up to `degree`.
///
/// Coefficients are Taylor coefficients, so the mixed partial for exponent
/// vector `a` is `coeff(a) * a!`.
#[derive(Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    degree: usize,
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet").field("degree", &self.degree).field("coeffs", &self.c).finish()
    }
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, degree: usize, value: f64) -> Jet {
        assert!(degree <= space.max_degree);
        let mut c = vec![0.0; space.len(degree)];
        c[0] = value;
        Jet { space: space.clone(), degree, c }
    }

    /// The coordinate function `z_var` expanded around `value`.
    pub fn variable(space: &Arc<JetSpace>, degree: usize, var: usize, value: f64) -> Jet {
        let mut j = Jet::constant(space, degree, value);
        if degree > 0 {
            let mut e = vec![0u8; space.nvars];
            e[var] = 1;
            j.c[space.index[&e]] = 1.0;
        }
        j
    }

    /// Seeds every coordinate of a point as a jet variable.
    pub fn seed(point: &[f64], degree: usize) -> Vec<Jet> {
        let space = JetSpace::get(point.len(), degree);
        point.iter().enumerate().map(|(v, &p)| Jet::variable(&space, degree, v, p)).collect()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nvars(&self) -> usize {
        self.space.nvars
    }

    pub fn space(&self) -> &Arc<JetSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    /// Mixed partial derivative for the given exponent vector.
    pub fn partial(&self, exponents: &[u8]) -> Result<f64> {
        let order: usize = exponents.iter().map(|&k| usize::from(k)).sum();
        if order > self.degree {
            return Err(Error::DepthExceeded { requested: order, max: self.degree });
        }
        let i = self.space.index[exponents];
        Ok(self.c[i] * self.space.factorial[i])
    }

    /// First partial along one coordinate.
    pub fn d(&self, var: usize) -> Result<f64> {
        let mut e = vec![0u8; self.space.nvars];
        e[var] = 1;
        self.partial(&e)
    }

    /// Gradient at the expansion point.
    pub fn gradient(&self) -> Result<Vec<f64>> {
        (0..self.space.nvars).map(|v| self.d(v)).collect()
    }

    /// The jet of the partial derivative along `var`, one degree lower.
    pub fn derivative(&self, var: usize) -> Result<Jet> {
        if self.degree == 0 {
            return Err(Error::DepthExceeded { requested: 1, max: 0 });
        }
        let out_degree = self.degree - 1;
        let mut c = vec![0.0; self.space.len(out_degree)];
        let end = self.space.deriv_ends[var][out_degree];
        for &(src, dst, factor) in &self.space.deriv[var][..end] {
            c[dst as usize] += factor * self.c[src as usize];
        }
        Ok(Jet { space: self.space.clone(), degree: out_degree, c })
    }

    pub fn truncate(&self, degree: usize) -> Jet {
        let degree = degree.min(self.degree);
        Jet { space: self.space.clone(), degree, c: self.c[..self.space.len(degree)].to_vec() }
    }

    pub fn scale(&self, k: f64) -> Jet {
        Jet { space: self.space.clone(), degree: self.degree, c: self.c.iter().map(|v| v * k).collect() }
    }

    fn wider_space(&self, other: &Jet) -> Arc<JetSpace> {
        assert_eq!(self.space.nvars, other.space.nvars, "jets over different variable counts");
        if self.space.max_degree >= other.space.max_degree {
            self.space.clone()
        } else {
            other.space.clone()
        }
    }

    fn zip(&self, other: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        let space = self.wider_space(other);
        let degree = self.degree.min(other.degree);
        let len = space.len(degree);
        let c = self.c[..len].iter().zip(&other.c[..len]).map(|(a, b)| f(*a, *b)).collect();
        Jet { space, degree, c }
    }

    fn product(&self, other: &Jet) -> Jet {
        let space = self.wider_space(other);
        let degree = self.degree.min(other.degree);
        let mut c = vec![0.0; space.len(degree)];
        for &(i, j, k) in &space.mul[..space.mul_ends[degree]] {
            c[k as usize] += self.c[i as usize] * other.c[j as usize];
        }
        Jet { space, degree, c }
    }

    /// `sum_k coeffs[k] * (self - value)^k`, truncated; `coeffs[0]` becomes the
    /// exact value component.
    fn compose(&self, coeffs: &[f64]) -> Jet {
        let mut shifted = self.clone();
        shifted.c[0] = 0.0;
        let d = self.degree;
        let mut acc = Jet::constant(&self.space, d, coeffs[d]);
        for k in (0..d).rev() {
            acc = acc.product(&shifted);
            acc.c[0] = coeffs[k];
        }
        acc
    }

    fn checked(self) -> std::result::Result<Jet, &'static str> {
        if self.c.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err("non-finite result")
        }
    }
}

impl Scalar for Jet {
    fn lift(&self, c: f64) -> Self {
        Jet::constant(&self.space, self.degree, c)
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn set_value(&mut self, v: f64) {
        self.c[0] = v;
    }
    fn is_constant(&self) -> bool {
        self.c[1..].iter().all(|&v| v == 0.0)
    }
    fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }
    fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }
    fn mul(&self, other: &Self) -> Self {
        self.product(other)
    }
    fn neg(&self) -> Self {
        Jet { space: self.space.clone(), degree: self.degree, c: self.c.iter().map(|v| -v).collect() }
    }
    fn recip(&self) -> std::result::Result<Self, &'static str> {
        let u = self.value();
        if u == 0.0 {
            return Err("division by zero");
        }
        let r = 1.0 / u;
        let coeffs: Vec<f64> = (0..=self.degree)
            .map(|k| if k % 2 == 0 { r.powi(k as i32 + 1) } else { -r.powi(k as i32 + 1) })
            .collect();
        let mut out = self.compose(&coeffs);
        out.c[0] = Scalar::recip(&u)?;
        out.checked()
    }
    fn div(&self, other: &Self) -> std::result::Result<Self, &'static str> {
        let value = Scalar::div(&self.value(), &other.value())?;
        let mut q = self.product(&other.recip()?);
        q.c[0] = value;
        q.checked()
    }
    fn sqrt(&self) -> std::result::Result<Self, &'static str> {
        let value = Scalar::sqrt(&self.value())?;
        let mut out = self.powf(0.5)?;
        out.c[0] = value;
        Ok(out)
    }
    fn sin(&self) -> std::result::Result<Self, &'static str> {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let coeffs: Vec<f64> = (0..=self.degree).map(|k| cycle[k % 4] / factorial(k)).collect();
        self.compose(&coeffs).checked()
    }
    fn cos(&self) -> std::result::Result<Self, &'static str> {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let coeffs: Vec<f64> = (0..=self.degree).map(|k| cycle[k % 4] / factorial(k)).collect();
        self.compose(&coeffs).checked()
    }
    fn exp(&self) -> std::result::Result<Self, &'static str> {
        let e = Scalar::exp(&self.value())?;
        let coeffs: Vec<f64> = (0..=self.degree).map(|k| e / factorial(k)).collect();
        self.compose(&coeffs).checked()
    }
    fn ln(&self) -> std::result::Result<Self, &'static str> {
        let u = self.value();
        let l = Scalar::ln(&u)?;
        let coeffs: Vec<f64> = (0..=self.degree)
            .map(|k| match k {
                0 => l,
                _ => {
                    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                    sign / (k as f64 * u.powi(k as i32))
                }
            })
            .collect();
        self.compose(&coeffs).checked()
    }
    fn abs(&self) -> std::result::Result<Self, &'static str> {
        let u = self.value();
        if self.degree > 0 && u == 0.0 {
            return Err("absolute value is not differentiable at zero");
        }
        Ok(if u < 0.0 { self.neg() } else { self.clone() })
    }
    fn powf(&self, p: f64) -> std::result::Result<Self, &'static str> {
        if let Some(k) = small_integer(p) {
            return self.powi(k);
        }
        let u = self.value();
        let value = Scalar::powf(&u, p)?;
        if self.degree == 0 {
            return Ok(self.lift(value));
        }
        if u <= 0.0 {
            return Err("non-integer power is not differentiable at a non-positive base");
        }
        // (u0 + h)^p = sum_k binom(p, k) u0^(p-k) h^k
        let mut coeffs = Vec::with_capacity(self.degree + 1);
        let mut binom = 1.0;
        for k in 0..=self.degree {
            coeffs.push(binom * u.powf(p - k as f64));
            binom *= (p - k as f64) / (k as f64 + 1.0);
        }
        let mut out = self.compose(&coeffs);
        out.c[0] = value;
        out.checked()
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}
