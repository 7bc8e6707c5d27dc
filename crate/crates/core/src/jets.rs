//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] holds the Taylor coefficients of a quantity with respect to a
//! small number of perturbation variables, truncated at a fixed total degree.
//! Coefficients are stored densely in graded-lexicographic order: all
//! monomials of degree 0, then degree 1, and so on, with exponents of the
//! first variable descending inside each degree.
//!
//! Elementary functions use the Euler-operator form of the classical Taylor
//! recurrences, so every operation costs one pass over the precomputed
//! product table of the shape.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

const MAX_VARS: usize = 8;
const MAX_ORDER: usize = 255;

/// Monomial layout and product table for one `(order, nvars)` pair.
#[derive(Debug)]
pub struct JetShape {
    order: usize,
    nvars: usize,
    exps: Vec<u8>,
    degree: Vec<u32>,
    index: HashMap<u64, u32>,
    term_start: Vec<u32>,
    terms: Vec<(u32, u32)>,
}

fn pack(exps: &[u8]) -> u64 {
    exps.iter()
        .enumerate()
        .fold(0u64, |acc, (i, &e)| acc | ((e as u64) << (8 * i)))
}

fn monomials_of_degree(nvars: usize, degree: usize, out: &mut Vec<Vec<u8>>) {
    fn rec(prefix: &mut Vec<u8>, remaining: usize, slots: usize, out: &mut Vec<Vec<u8>>) {
        if slots == 1 {
            prefix.push(remaining as u8);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e as u8);
            rec(prefix, remaining - e, slots - 1, out);
            prefix.pop();
        }
    }
    rec(&mut Vec::with_capacity(nvars), degree, nvars, out);
}

impl JetShape {
    fn build(order: usize, nvars: usize) -> JetShape {
        let mut monos = Vec::new();
        for d in 0..=order {
            monomials_of_degree(nvars, d, &mut monos);
        }
        let len = monos.len();
        let mut exps = Vec::with_capacity(len * nvars);
        let mut degree = Vec::with_capacity(len);
        let mut index = HashMap::with_capacity(len);
        for (k, m) in monos.iter().enumerate() {
            exps.extend_from_slice(m);
            degree.push(m.iter().map(|&e| e as u32).sum());
            index.insert(pack(m), k as u32);
        }
        let mut grouped: Vec<Vec<(u32, u32)>> = vec![Vec::new(); len];
        let mut sum = vec![0u8; nvars];
        for i in 0..len {
            for j in 0..len {
                if (degree[i] + degree[j]) as usize > order {
                    continue;
                }
                for v in 0..nvars {
                    sum[v] = monos[i][v] + monos[j][v];
                }
                let k = index[&pack(&sum)];
                grouped[k as usize].push((i as u32, j as u32));
            }
        }
        let mut term_start = Vec::with_capacity(len + 1);
        let mut terms = Vec::new();
        for g in grouped {
            term_start.push(terms.len() as u32);
            terms.extend(g);
        }
        term_start.push(terms.len() as u32);
        JetShape {
            order,
            nvars,
            exps,
            degree,
            index,
            term_start,
            terms,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    /// Exponents of the monomial stored at position `k`.
    pub fn exponents(&self, k: usize) -> &[u8] {
        &self.exps[k * self.nvars..(k + 1) * self.nvars]
    }

    pub fn degree_of(&self, k: usize) -> usize {
        self.degree[k] as usize
    }

    /// Storage position of a multi-degree, if it is within the truncation.
    pub fn position(&self, multidegree: &[usize]) -> Option<usize> {
        if multidegree.len() != self.nvars || multidegree.iter().sum::<usize>() > self.order {
            return None;
        }
        let packed: Vec<u8> = multidegree.iter().map(|&e| e as u8).collect();
        self.index.get(&pack(&packed)).map(|&k| k as usize)
    }

    fn terms_of(&self, k: usize) -> &[(u32, u32)] {
        &self.terms[self.term_start[k] as usize..self.term_start[k + 1] as usize]
    }
}

/// Number of monomials of total degree at most `order` in `nvars` variables.
pub fn monomial_count(order: usize, nvars: usize) -> usize {
    // binomial(order + nvars, nvars)
    let mut c: usize = 1;
    for i in 1..=nvars {
        c = c * (order + i) / i;
    }
    c
}

/// Shared, cached layout for the given truncation.
pub fn shape(order: usize, nvars: usize) -> Result<Arc<JetShape>> {
    if nvars == 0 || nvars > MAX_VARS {
        return Err(Error::JetRange(format!(
            "nvars must be in 1..={MAX_VARS}, got {nvars}"
        )));
    }
    if order > MAX_ORDER {
        return Err(Error::JetRange(format!(
            "order must be at most {MAX_ORDER}, got {order}"
        )));
    }
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetShape>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    Ok(guard
        .entry((order, nvars))
        .or_insert_with(|| Arc::new(JetShape::build(order, nvars)))
        .clone())
}

/// Elementary operations accepted by [`Jet::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    PowInt(u32),
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl JetOp {
    pub fn arity(self) -> usize {
        match self {
            JetOp::Add | JetOp::Sub | JetOp::Mul | JetOp::Div => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Jet {
    shape: Arc<JetShape>,
    coeffs: Vec<f64>,
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.same_shape(other) && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn constant(value: f64, order: usize, nvars: usize) -> Result<Jet> {
        let shape = shape(order, nvars)?;
        let mut coeffs = vec![0.0; shape.len()];
        coeffs[0] = value;
        Ok(Jet { shape, coeffs })
    }

    /// The affine jet `value + x_index`.
    pub fn variable(index: usize, value: f64, order: usize, nvars: usize) -> Result<Jet> {
        if index >= nvars {
            return Err(Error::JetRange(format!(
                "variable index {index} out of range for {nvars} variables"
            )));
        }
        let mut jet = Jet::constant(value, order, nvars)?;
        if order >= 1 {
            // degree-1 block starts at position 1, first variable first
            jet.coeffs[1 + index] = 1.0;
        }
        Ok(jet)
    }

    /// Builds a jet from coefficients in storage order.
    pub fn from_coeffs(order: usize, nvars: usize, coeffs: Vec<f64>) -> Result<Jet> {
        let shape = shape(order, nvars)?;
        if coeffs.len() != shape.len() {
            return Err(Error::JetRange(format!(
                "expected {} coefficients, got {}",
                shape.len(),
                coeffs.len()
            )));
        }
        Ok(Jet { shape, coeffs })
    }

    /// A constant with the same truncation as `self`.
    pub fn constant_like(&self, value: f64) -> Jet {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        coeffs[0] = value;
        Jet {
            shape: self.shape.clone(),
            coeffs,
        }
    }

    pub fn zero_like(&self) -> Jet {
        self.constant_like(0.0)
    }

    pub fn order(&self) -> usize {
        self.shape.order
    }

    pub fn nvars(&self) -> usize {
        self.shape.nvars
    }

    pub fn shape(&self) -> &Arc<JetShape> {
        &self.shape
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Constant term.
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn same_shape(&self, other: &Jet) -> bool {
        Arc::ptr_eq(&self.shape, &other.shape)
            || (self.shape.order == other.shape.order && self.shape.nvars == other.shape.nvars)
    }

    fn check(&self, other: &Jet) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::JetShape(
                self.order(),
                self.nvars(),
                other.order(),
                other.nvars(),
            ))
        }
    }

    /// Taylor coefficient of the monomial with the given exponents.
    pub fn coefficient(&self, multidegree: &[usize]) -> Result<f64> {
        self.shape
            .position(multidegree)
            .map(|k| self.coeffs[k])
            .ok_or_else(|| {
                Error::JetRange(format!(
                    "multidegree {multidegree:?} outside (order {}, nvars {})",
                    self.order(),
                    self.nvars()
                ))
            })
    }

    /// Mixed partial derivative: coefficient times the multidegree factorial.
    pub fn derivative(&self, multidegree: &[usize]) -> Result<f64> {
        let c = self.coefficient(multidegree)?;
        let fact: f64 = multidegree
            .iter()
            .map(|&e| (1..=e).map(|i| i as f64).product::<f64>())
            .product();
        Ok(c * fact)
    }

    pub fn try_add(&self, other: &Jet) -> Result<Jet> {
        self.check(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Jet {
            shape: self.shape.clone(),
            coeffs,
        })
    }

    pub fn try_sub(&self, other: &Jet) -> Result<Jet> {
        self.check(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Jet {
            shape: self.shape.clone(),
            coeffs,
        })
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: f64, other: &Jet) -> Result<()> {
        self.check(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    pub fn scale(&self, factor: f64) -> Jet {
        Jet {
            shape: self.shape.clone(),
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn add_scalar(&self, value: f64) -> Jet {
        let mut out = self.clone();
        out.coeffs[0] += value;
        out
    }

    pub fn try_mul(&self, other: &Jet) -> Result<Jet> {
        self.check(other)?;
        let shape = &self.shape;
        let a = &self.coeffs;
        let b = &other.coeffs;
        let mut out = vec![0.0; a.len()];
        if shape.nvars == 1 {
            for (k, slot) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for i in 0..=k {
                    acc += a[i] * b[k - i];
                }
                *slot = acc;
            }
        } else {
            for (k, slot) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &(i, j) in shape.terms_of(k) {
                    acc += a[i as usize] * b[j as usize];
                }
                *slot = acc;
            }
        }
        Ok(Jet {
            shape: shape.clone(),
            coeffs: out,
        })
    }

    pub fn try_div(&self, other: &Jet) -> Result<Jet> {
        self.check(other)?;
        let b0 = other.coeffs[0];
        if b0 == 0.0 || !b0.is_finite() {
            return Err(Error::JetDomain(
                "division by a jet with zero constant term".into(),
            ));
        }
        let shape = &self.shape;
        let a = &self.coeffs;
        let b = &other.coeffs;
        let mut q = vec![0.0; a.len()];
        for k in 0..a.len() {
            let mut acc = a[k];
            for &(i, j) in shape.terms_of(k) {
                if j != 0 {
                    acc -= q[i as usize] * b[j as usize];
                }
            }
            q[k] = acc / b0;
        }
        Ok(Jet {
            shape: shape.clone(),
            coeffs: q,
        })
    }

    pub fn powi(&self, exponent: u32) -> Jet {
        let mut result = self.constant_like(1.0);
        let mut base = self.clone();
        let mut e = exponent;
        while e > 0 {
            if e & 1 == 1 {
                result = result.try_mul(&base).expect("same shape");
            }
            e >>= 1;
            if e > 0 {
                base = base.try_mul(&base).expect("same shape");
            }
        }
        result
    }

    pub fn exp(&self) -> Jet {
        let shape = &self.shape;
        let a = &self.coeffs;
        let mut b = vec![0.0; a.len()];
        b[0] = a[0].exp();
        for k in 1..a.len() {
            let d = shape.degree[k] as f64;
            let mut acc = 0.0;
            for &(i, j) in shape.terms_of(k) {
                let di = shape.degree[i as usize];
                if di != 0 {
                    acc += di as f64 * a[i as usize] * b[j as usize];
                }
            }
            b[k] = acc / d;
        }
        Jet {
            shape: shape.clone(),
            coeffs: b,
        }
    }

    /// Sine and cosine together; they share one recurrence.
    pub fn sin_cos(&self) -> (Jet, Jet) {
        let shape = &self.shape;
        let a = &self.coeffs;
        let n = a.len();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        s[0] = a[0].sin();
        c[0] = a[0].cos();
        for k in 1..n {
            let d = shape.degree[k] as f64;
            let mut acc_s = 0.0;
            let mut acc_c = 0.0;
            for &(i, j) in shape.terms_of(k) {
                let di = shape.degree[i as usize];
                if di != 0 {
                    let w = di as f64 * a[i as usize];
                    acc_s += w * c[j as usize];
                    acc_c -= w * s[j as usize];
                }
            }
            s[k] = acc_s / d;
            c[k] = acc_c / d;
        }
        (
            Jet {
                shape: shape.clone(),
                coeffs: s,
            },
            Jet {
                shape: shape.clone(),
                coeffs: c,
            },
        )
    }

    pub fn sin(&self) -> Jet {
        self.sin_cos().0
    }

    pub fn cos(&self) -> Jet {
        self.sin_cos().1
    }

    pub fn sqrt(&self) -> Result<Jet> {
        let a0 = self.coeffs[0];
        if !(a0 > 0.0) {
            return Err(Error::JetDomain(format!(
                "sqrt of jet with nonpositive constant term {a0}"
            )));
        }
        let shape = &self.shape;
        let a = &self.coeffs;
        let mut s = vec![0.0; a.len()];
        s[0] = a0.sqrt();
        for k in 1..a.len() {
            let mut acc = a[k];
            for &(i, j) in shape.terms_of(k) {
                if i != 0 && j != 0 {
                    acc -= s[i as usize] * s[j as usize];
                }
            }
            s[k] = acc / (2.0 * s[0]);
        }
        Ok(Jet {
            shape: shape.clone(),
            coeffs: s,
        })
    }

    pub fn apply(op: JetOp, args: &[&Jet]) -> Result<Jet> {
        if args.len() != op.arity() {
            return Err(Error::JetRange(format!(
                "{op:?} expects {} arguments, got {}",
                op.arity(),
                args.len()
            )));
        }
        match op {
            JetOp::Add => args[0].try_add(args[1]),
            JetOp::Sub => args[0].try_sub(args[1]),
            JetOp::Mul => args[0].try_mul(args[1]),
            JetOp::Div => args[0].try_div(args[1]),
            JetOp::Neg => Ok(args[0].neg()),
            JetOp::PowInt(e) => Ok(args[0].powi(e)),
            JetOp::Sin => Ok(args[0].sin()),
            JetOp::Cos => Ok(args[0].cos()),
            JetOp::Exp => Ok(args[0].exp()),
            JetOp::Sqrt => args[0].sqrt(),
        }
    }

    /// Partial derivative with respect to one variable; the result is exact
    /// through degree `order - 1`.
    pub fn differentiate(&self, var: usize) -> Result<Jet> {
        if var >= self.nvars() {
            return Err(Error::JetRange(format!("no variable {var}")));
        }
        if self.order() == 0 {
            return Err(Error::JetRange(
                "cannot differentiate an order-0 jet".into(),
            ));
        }
        let target = shape(self.order() - 1, self.nvars())?;
        let mut out = vec![0.0; target.len()];
        let mut buf = [0u8; MAX_VARS];
        for k in 0..self.coeffs.len() {
            let e = self.shape.exponents(k);
            if e[var] == 0 {
                continue;
            }
            let nv = self.nvars();
            buf[..nv].copy_from_slice(e);
            buf[var] -= 1;
            let dst = target.index[&pack(&buf[..nv])] as usize;
            out[dst] = self.coeffs[k] * e[var] as f64;
        }
        Ok(Jet {
            shape: target,
            coeffs: out,
        })
    }

    /// Drops all terms above `order` (which must not exceed the current order).
    pub fn truncate(&self, order: usize) -> Result<Jet> {
        if order > self.order() {
            return Err(Error::JetRange(format!(
                "cannot truncate order {} jet to order {order}",
                self.order()
            )));
        }
        let target = shape(order, self.nvars())?;
        // graded storage: the lower-order layout is a prefix
        let coeffs = self.coeffs[..target.len()].to_vec();
        Ok(Jet {
            shape: target,
            coeffs,
        })
    }

    /// Re-embeds the jet in `nvars >= self.nvars()` variables (new variables
    /// appended) and truncation `order`. Coefficients that were not carried
    /// are set to zero.
    pub fn lift(&self, nvars: usize, order: usize) -> Result<Jet> {
        if nvars < self.nvars() {
            return Err(Error::JetRange(format!(
                "cannot lift {} variables into {nvars}",
                self.nvars()
            )));
        }
        let target = shape(order, nvars)?;
        let mut out = vec![0.0; target.len()];
        let mut buf = [0u8; MAX_VARS];
        let nv = self.nvars();
        for k in 0..self.coeffs.len() {
            if self.shape.degree_of(k) > order {
                break;
            }
            buf[..nv].copy_from_slice(self.shape.exponents(k));
            for b in buf.iter_mut().take(nvars).skip(nv) {
                *b = 0;
            }
            let dst = target.index[&pack(&buf[..nvars])] as usize;
            out[dst] = self.coeffs[k];
        }
        Ok(Jet {
            shape: target,
            coeffs: out,
        })
    }

    /// Sets the trailing variables (beyond the first `nvars`) to zero.
    pub fn restrict(&self, nvars: usize) -> Result<Jet> {
        if nvars == 0 || nvars > self.nvars() {
            return Err(Error::JetRange(format!(
                "cannot restrict {} variables to {nvars}",
                self.nvars()
            )));
        }
        let target = shape(self.order(), nvars)?;
        let mut out = vec![0.0; target.len()];
        for k in 0..self.coeffs.len() {
            let e = self.shape.exponents(k);
            if e[nvars..].iter().any(|&x| x != 0) {
                continue;
            }
            let dst = target.index[&pack(&e[..nvars])] as usize;
            out[dst] = self.coeffs[k];
        }
        Ok(Jet {
            shape: target,
            coeffs: out,
        })
    }

    /// Evaluates the truncated polynomial at a point.
    pub fn eval_at(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.nvars() {
            return Err(Error::JetRange("point dimension mismatch".into()));
        }
        let mut acc = 0.0;
        for k in 0..self.coeffs.len() {
            let e = self.shape.exponents(k);
            let mut m = self.coeffs[k];
            for (x, &p) in point.iter().zip(e) {
                m *= x.powi(p as i32);
            }
            acc += m;
        }
        Ok(acc)
    }

    /// Substitutes jets into a Taylor polynomial: with `self` expanded about
    /// some base point `b` in `args.len()` variables, returns the jet of
    /// `self(args - b)` where only the non-constant parts of `args` enter.
    /// The result has the shape of `args`.
    pub fn compose(&self, args: &[Jet]) -> Result<Jet> {
        if args.len() != self.nvars() {
            return Err(Error::JetRange(format!(
                "composition expects {} arguments, got {}",
                self.nvars(),
                args.len()
            )));
        }
        let like = &args[0];
        for a in args {
            like.check(a)?;
        }
        let top = self.order().min(like.order());
        let identity = like.nvars() == args.len()
            && args.iter().enumerate().all(|(v, a)| {
                a.coeffs[1..]
                    .iter()
                    .enumerate()
                    .all(|(k, &c)| c == if k == v { 1.0 } else { 0.0 })
            });
        if identity {
            // args are the coordinate variables themselves
            let mut out = self.truncate(top)?.coeffs;
            out.resize(like.coeffs.len(), 0.0);
            return Ok(Jet {
                shape: like.shape.clone(),
                coeffs: out,
            });
        }
        let powers: Vec<Vec<Jet>> = args
            .iter()
            .map(|a| {
                let mut d = a.clone();
                d.coeffs[0] = 0.0;
                let mut p = vec![like.constant_like(1.0)];
                for _ in 0..top {
                    let next = p.last().expect("nonempty").try_mul(&d).expect("same shape");
                    p.push(next);
                }
                p
            })
            .collect();
        let mut acc = like.zero_like();
        for k in 0..self.coeffs.len() {
            if self.shape.degree_of(k) > top {
                break;
            }
            let c = self.coeffs[k];
            if c == 0.0 {
                continue;
            }
            let e = self.shape.exponents(k);
            let mut term: Option<Jet> = None;
            for (v, &ev) in e.iter().enumerate() {
                if ev == 0 {
                    continue;
                }
                let p = &powers[v][ev as usize];
                term = Some(match term {
                    None => p.clone(),
                    Some(t) => t.try_mul(p)?,
                });
            }
            match term {
                None => acc.coeffs[0] += c,
                Some(t) => acc.axpy(c, &t)?,
            }
        }
        Ok(acc)
    }

    /// Univariate Horner evaluation of `sum_i poly[i] * t^i` where `t` is a jet.
    pub fn horner(poly: &[f64], t: &Jet) -> Jet {
        let mut acc = t.zero_like();
        for &c in poly.iter().rev() {
            acc = acc.try_mul(t).expect("same shape").add_scalar(c);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn variable_seeds() {
        let j = Jet::variable(0, 2.0, 2, 1).unwrap();
        assert_eq!(j.coeffs(), &[2.0, 1.0, 0.0]);
        let j = Jet::variable(1, 0.0, 1, 2).unwrap();
        assert_eq!(j.coeffs(), &[0.0, 0.0, 1.0]);
        let j = Jet::variable(0, 0.5, 0, 1).unwrap();
        assert_eq!(j.coeffs(), &[0.5]);
        assert!(Jet::variable(2, 0.0, 1, 2).is_err());
    }

    #[test]
    fn elementary_examples() {
        let s = Jet::variable(0, 0.0, 2, 1).unwrap().add_scalar(1.0);
        let sq = Jet::apply(JetOp::Mul, &[&s, &s]).unwrap();
        assert_eq!(sq.coeffs(), &[1.0, 2.0, 1.0]);

        let x = Jet::variable(0, 0.0, 3, 1).unwrap();
        let sin = Jet::apply(JetOp::Sin, &[&x]).unwrap();
        assert_relative_eq!(sin.coeffs()[0], 0.0);
        assert_relative_eq!(sin.coeffs()[1], 1.0);
        assert_relative_eq!(sin.coeffs()[2], 0.0);
        assert_relative_eq!(sin.coeffs()[3], -1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(sin.derivative(&[3]).unwrap(), -1.0, epsilon = 1e-15);

        let one = s.constant_like(1.0);
        let q = Jet::apply(JetOp::Div, &[&one, &s]).unwrap();
        assert_eq!(q.coeffs(), &[1.0, -1.0, 1.0]);
        assert_eq!(sq.coefficient(&[1]).unwrap(), 2.0);
        assert_eq!(
            Jet::constant(5.0, 3, 2)
                .unwrap()
                .coefficient(&[0, 0])
                .unwrap(),
            5.0
        );
    }

    #[test]
    fn errors() {
        let a = Jet::variable(0, 0.0, 2, 1).unwrap();
        let b = Jet::variable(0, 0.0, 3, 1).unwrap();
        assert!(matches!(a.try_add(&b), Err(Error::JetShape(..))));
        assert!(matches!(
            a.constant_like(1.0).try_div(&a),
            Err(Error::JetDomain(_))
        ));
        assert!(a.sqrt().is_err());
        assert!(a.coefficient(&[3]).is_err());
        assert!(Jet::apply(JetOp::Add, &[&a]).is_err());
    }

    #[test]
    fn layout_is_graded_lex() {
        let s = shape(2, 2).unwrap();
        let e: Vec<_> = (0..s.len()).map(|k| s.exponents(k).to_vec()).collect();
        assert_eq!(
            e,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
        assert_eq!(monomial_count(2, 2), 6);
        assert_eq!(monomial_count(30, 2), 496);
    }

    #[test]
    fn differentiate_lift_restrict() {
        // p = x^2 y + 3 y at (x, y) variables
        let x = Jet::variable(0, 0.0, 3, 2).unwrap();
        let y = Jet::variable(1, 0.0, 3, 2).unwrap();
        let p = x
            .powi(2)
            .try_mul(&y)
            .unwrap()
            .try_add(&y.scale(3.0))
            .unwrap();
        let dx = p.differentiate(0).unwrap();
        assert_eq!(dx.order(), 2);
        assert_eq!(dx.coefficient(&[1, 1]).unwrap(), 2.0);
        let dy = p.differentiate(1).unwrap();
        assert_eq!(dy.coefficient(&[2, 0]).unwrap(), 1.0);
        assert_eq!(dy.coefficient(&[0, 0]).unwrap(), 3.0);

        let lifted = p.lift(3, 4).unwrap();
        assert_eq!(lifted.coefficient(&[2, 1, 0]).unwrap(), 1.0);
        let back = lifted.restrict(2).unwrap().truncate(3).unwrap();
        assert_eq!(back, p);
        let r = p.restrict(1).unwrap();
        assert!(r.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn multivariate_exp_matches_product() {
        // exp(x + y) = exp(x) exp(y)
        let x = Jet::variable(0, 0.3, 5, 2).unwrap();
        let y = Jet::variable(1, -0.2, 5, 2).unwrap();
        let lhs = x.try_add(&y).unwrap().exp();
        let rhs = x.exp().try_mul(&y.exp()).unwrap();
        for (a, b) in lhs.coeffs().iter().zip(rhs.coeffs()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn horner_matches_direct() {
        let t = Jet::variable(0, 0.5, 3, 1).unwrap();
        let h = Jet::horner(&[1.0, 2.0, 3.0], &t);
        let direct = t
            .powi(2)
            .scale(3.0)
            .try_add(&t.scale(2.0))
            .unwrap()
            .add_scalar(1.0);
        assert_eq!(h.coeffs().len(), 4);
        for (a, b) in h.coeffs().iter().zip(direct.coeffs()) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }
}
