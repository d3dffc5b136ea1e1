//! Truncated multivariate power series ("jets").
//!
//! A [`Jet`] stores the coefficients of a polynomial in `m` variables up to
//! a total degree `order`. Coefficients are kept in a sparse map keyed by
//! [`MultiIndex`] in graded-lexicographic order; exact zeros are never
//! stored, so two jets with the same nonzero coefficients compare equal.
//!
//! Every jet also carries a `reliable_order`: the highest degree whose
//! coefficients are known to be correct for the function the jet
//! approximates. Differentiation lowers it by one because the degree
//! `order + 1` part of the source is unknown.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Exponent tuple of a monomial, with its total degree cached.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exps: Vec<u32>,
    degree: u32,
}

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        let degree = exps.iter().sum();
        MultiIndex { exps, degree }
    }

    pub fn zero(num_vars: usize) -> Self {
        MultiIndex { exps: vec![0; num_vars], degree: 0 }
    }

    pub fn unit(num_vars: usize, var: usize) -> Self {
        let mut exps = vec![0; num_vars];
        exps[var] = 1;
        MultiIndex { exps, degree: 1 }
    }

    pub fn exps(&self) -> &[u32] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn num_vars(&self) -> usize {
        self.exps.len()
    }

    pub fn get(&self, var: usize) -> u32 {
        self.exps[var]
    }

    /// Exponent-wise sum (the index of the product of two monomials).
    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        let exps = self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect();
        MultiIndex { exps, degree: self.degree + other.degree }
    }
}

impl Ord for MultiIndex {
    // Graded lex: lower degree first, then larger exponent in earlier
    // variables first (x1 < x2 < x1^2 < x1 x2 < x2^2 ...).
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree
            .cmp(&other.degree)
            .then_with(|| other.exps.cmp(&self.exps))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All exponent tuples in `num_vars` variables of total degree `degree`,
/// in graded-lex order.
pub fn monomials_of_degree(num_vars: usize, degree: u32) -> Vec<MultiIndex> {
    fn rec(var: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if var + 1 == cur.len() {
            cur[var] = left;
            out.push(MultiIndex::new(cur.clone()));
            return;
        }
        for e in (0..=left).rev() {
            cur[var] = e;
            rec(var + 1, left - e, cur, out);
        }
        cur[var] = 0;
    }
    let mut out = Vec::new();
    if num_vars == 0 {
        return out;
    }
    rec(0, degree, &mut vec![0; num_vars], &mut out);
    out
}

/// All exponent tuples of total degree at most `order`, in graded-lex order.
pub fn monomials_up_to(num_vars: usize, order: u32) -> Vec<MultiIndex> {
    (0..=order).flat_map(|d| monomials_of_degree(num_vars, d)).collect()
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Truncated multivariate power series.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    num_vars: usize,
    order: u32,
    reliable: u32,
    coeffs: BTreeMap<MultiIndex, f64>,
}

impl Jet {
    /// The zero jet.
    ///
    /// # Panics
    /// If `num_vars` is zero.
    pub fn zero(num_vars: usize, order: u32) -> Self {
        assert!(num_vars > 0, "a jet needs at least one variable");
        Jet { num_vars, order, reliable: order, coeffs: BTreeMap::new() }
    }

    pub fn constant(num_vars: usize, order: u32, value: f64) -> Self {
        let mut j = Jet::zero(num_vars, order);
        j.add_term(MultiIndex::zero(num_vars), value);
        j
    }

    /// The coordinate function `x_var`.
    pub fn var(num_vars: usize, order: u32, var: usize) -> Self {
        let mut j = Jet::zero(num_vars, order);
        if order >= 1 {
            j.add_term(MultiIndex::unit(num_vars, var), 1.0);
        }
        j
    }

    /// Builds a jet from `(exponents, coefficient)` pairs. Repeated exponents
    /// accumulate; terms above `order` are dropped.
    pub fn from_terms<I>(num_vars: usize, order: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut j = Jet::zero(num_vars, order);
        for (exps, c) in terms {
            if exps.len() != num_vars {
                return Err(Error::Structure(format!(
                    "monomial has {} exponents, jet has {} variables",
                    exps.len(),
                    num_vars
                )));
            }
            j.add_term(MultiIndex::new(exps), c);
        }
        Ok(j)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn reliable_order(&self) -> u32 {
        self.reliable
    }

    /// Overrides the reliable order (clamped to `order`). Used when the
    /// caller knows the source is polynomial-exact.
    pub fn with_reliable_order(mut self, reliable: u32) -> Self {
        self.reliable = reliable.min(self.order);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    /// Nonzero terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> + '_ {
        self.coeffs.iter().map(|(k, v)| (k, *v))
    }

    pub fn coeff(&self, exps: &[u32]) -> f64 {
        self.coeffs.get(&MultiIndex::new(exps.to_vec())).copied().unwrap_or(0.0)
    }

    pub fn coeff_of(&self, idx: &MultiIndex) -> f64 {
        self.coeffs.get(idx).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff_of(&MultiIndex::zero(self.num_vars))
    }

    /// Adds `c` to the coefficient of `idx`, keeping the sparse form
    /// canonical. Terms above the truncation order are ignored.
    pub fn add_term(&mut self, idx: MultiIndex, c: f64) {
        debug_assert_eq!(idx.num_vars(), self.num_vars);
        if idx.degree() > self.order || c == 0.0 {
            return;
        }
        match self.coeffs.entry(idx) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let v = *e.get() + c;
                if v == 0.0 {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    pub fn set_coeff(&mut self, idx: MultiIndex, c: f64) {
        self.coeffs.remove(&idx);
        self.add_term(idx, c);
    }

    /// Largest stored degree (0 for the zero jet).
    pub fn degree(&self) -> u32 {
        self.coeffs.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    /// Smallest stored degree, `None` for the zero jet.
    pub fn valuation(&self) -> Option<u32> {
        self.coeffs.keys().next().map(MultiIndex::degree)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest coefficient-wise difference (both jets must share the
    /// variable count; orders may differ).
    pub fn max_abs_diff(&self, other: &Jet) -> f64 {
        assert_eq!(self.num_vars, other.num_vars);
        let mut m: f64 = 0.0;
        for (k, v) in &self.coeffs {
            m = m.max((v - other.coeff_of(k)).abs());
        }
        for (k, v) in &other.coeffs {
            if !self.coeffs.contains_key(k) {
                m = m.max(v.abs());
            }
        }
        m
    }

    fn check_compatible(&self, other: &Jet) -> Result<()> {
        if self.num_vars != other.num_vars || self.order != other.order {
            return Err(Error::Structure(format!(
                "jets differ: ({} vars, order {}) vs ({} vars, order {})",
                self.num_vars, self.order, other.num_vars, other.order
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Jet) -> Result<Jet> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (k, v) in &other.coeffs {
            out.add_term(k.clone(), *v);
        }
        out.reliable = self.reliable.min(other.reliable);
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut out = Jet::zero(self.num_vars, self.order);
        out.reliable = self.reliable;
        if s != 0.0 {
            for (k, v) in &self.coeffs {
                out.add_term(k.clone(), v * s);
            }
        }
        out
    }

    /// Truncated product.
    pub fn try_mul(&self, other: &Jet) -> Result<Jet> {
        self.check_compatible(other)?;
        let r = self.order;
        let mut acc: BTreeMap<MultiIndex, f64> = BTreeMap::new();
        for (ka, va) in &self.coeffs {
            for (kb, vb) in &other.coeffs {
                // keys are sorted by degree, so the rest of `other` is too high
                if ka.degree() + kb.degree() > r {
                    break;
                }
                *acc.entry(ka.plus(kb)).or_insert(0.0) += va * vb;
            }
        }
        acc.retain(|_, v| *v != 0.0);
        Ok(Jet {
            num_vars: self.num_vars,
            order: r,
            reliable: self.reliable.min(other.reliable),
            coeffs: acc,
        })
    }

    /// Integer power by repeated multiplication.
    pub fn powi(&self, e: u32) -> Jet {
        let mut out = Jet::constant(self.num_vars, self.order, 1.0);
        out.reliable = self.reliable;
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    /// `∂/∂x_var`. The result keeps the truncation order but its reliable
    /// order drops by one.
    pub fn partial(&self, var: usize) -> Result<Jet> {
        if var >= self.num_vars {
            return Err(Error::Structure(format!(
                "variable index {var} out of range for {} variables",
                self.num_vars
            )));
        }
        let mut out = Jet::zero(self.num_vars, self.order);
        for (k, v) in &self.coeffs {
            let e = k.get(var);
            if e > 0 {
                let mut exps = k.exps().to_vec();
                exps[var] -= 1;
                out.add_term(MultiIndex::new(exps), v * f64::from(e));
            }
        }
        out.reliable = self.reliable.saturating_sub(1);
        Ok(out)
    }

    /// Evaluates the polynomial at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.num_vars, "evaluation point has wrong dimension");
        let top = self.degree() as usize;
        let pows: Vec<Vec<f64>> = x
            .iter()
            .map(|&xi| {
                let mut p = Vec::with_capacity(top + 1);
                let mut acc = 1.0;
                for _ in 0..=top {
                    p.push(acc);
                    acc *= xi;
                }
                p
            })
            .collect();
        self.coeffs
            .iter()
            .map(|(k, v)| {
                k.exps()
                    .iter()
                    .enumerate()
                    .fold(*v, |acc, (i, &e)| acc * pows[i][e as usize])
            })
            .sum()
    }

    /// Degree-`d` homogeneous part.
    pub fn homogeneous(&self, d: u32) -> Jet {
        let mut out = Jet::zero(self.num_vars, self.order);
        out.reliable = self.reliable;
        for (k, v) in &self.coeffs {
            if k.degree() == d {
                out.add_term(k.clone(), *v);
            }
        }
        out
    }

    /// Drops all terms of degree above `d` (the truncation order is kept).
    pub fn truncated(&self, d: u32) -> Jet {
        let mut out = self.clone();
        out.coeffs.retain(|k, _| k.degree() <= d);
        out
    }

    /// Changes the truncation order. Lowering drops terms; raising keeps the
    /// stored terms (the reliable order is unchanged).
    pub fn with_order(&self, order: u32) -> Jet {
        let mut out = Jet::zero(self.num_vars, order);
        out.reliable = self.reliable.min(order);
        for (k, v) in &self.coeffs {
            out.add_term(k.clone(), *v);
        }
        out
    }

    /// Re-embeds the jet in `num_vars` variables; variable `i` of `self`
    /// becomes variable `map[i]` of the result.
    pub fn remap_vars(&self, num_vars: usize, map: &[usize]) -> Jet {
        assert_eq!(map.len(), self.num_vars);
        let mut out = Jet::zero(num_vars, self.order);
        out.reliable = self.reliable;
        for (k, v) in &self.coeffs {
            let mut exps = vec![0; num_vars];
            for (i, &e) in k.exps().iter().enumerate() {
                exps[map[i]] += e;
            }
            out.add_term(MultiIndex::new(exps), *v);
        }
        out
    }

    /// Appends `extra` trailing variables that the jet does not depend on.
    pub fn extend_vars(&self, extra: usize) -> Jet {
        let map: Vec<usize> = (0..self.num_vars).collect();
        self.remap_vars(self.num_vars + extra, &map)
    }

    /// Keeps only the terms with `x_var` absent (restriction to `x_var = 0`).
    pub fn at_var_zero(&self, var: usize) -> Jet {
        let mut out = self.clone();
        out.coeffs.retain(|k, _| k.get(var) == 0);
        out
    }

    /// Exact division by the coordinate `x_var`: returns `(q, rem)` with
    /// `self = x_var * q + rem` and `rem` free of `x_var`. The quotient has
    /// its reliable order lowered by one.
    pub fn div_by_var(&self, var: usize) -> (Jet, Jet) {
        let mut q = Jet::zero(self.num_vars, self.order);
        let mut rem = Jet::zero(self.num_vars, self.order);
        for (k, v) in &self.coeffs {
            if k.get(var) > 0 {
                let mut exps = k.exps().to_vec();
                exps[var] -= 1;
                q.add_term(MultiIndex::new(exps), *v);
            } else {
                rem.add_term(k.clone(), *v);
            }
        }
        q.reliable = self.reliable.saturating_sub(1);
        rem.reliable = self.reliable;
        (q, rem)
    }

    /// Re-expansion about a shifted origin: returns `q` with
    /// `q(h) = self(h + c)`. Exact for the stored polynomial; the caller is
    /// responsible for staying inside the region where the jet is trusted.
    pub fn shift(&self, c: &[f64]) -> Jet {
        assert_eq!(c.len(), self.num_vars);
        let mut out = Jet::zero(self.num_vars, self.order);
        out.reliable = self.reliable;
        for (k, v) in &self.coeffs {
            // expand prod_i (h_i + c_i)^{e_i} one variable at a time
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![0; self.num_vars], *v)];
            for (i, &e) in k.exps().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (e as usize + 1));
                for (exps, coef) in &partial {
                    for j in 0..=e {
                        let w = binomial(e, j) * c[i].powi((e - j) as i32);
                        if w == 0.0 {
                            continue;
                        }
                        let mut ex = exps.clone();
                        ex[i] = j;
                        next.push((ex, coef * w));
                    }
                }
                partial = next;
            }
            for (exps, coef) in partial {
                out.add_term(MultiIndex::new(exps), coef);
            }
        }
        out
    }
}

impl Add for &Jet {
    type Output = Jet;
    /// # Panics
    /// On variable-count or order mismatch; use [`Jet::try_add`] to handle it.
    fn add(self, rhs: &Jet) -> Jet {
        self.try_add(rhs).expect("jet addition")
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.try_add(&rhs.scale(-1.0)).expect("jet subtraction")
    }
}

impl Mul for &Jet {
    type Output = Jet;
    /// # Panics
    /// On variable-count or order mismatch; use [`Jet::try_mul`] to handle it.
    fn mul(self, rhs: &Jet) -> Jet {
        self.try_mul(rhs).expect("jet multiplication")
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl fmt::Display for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        for (n, (k, v)) in self.coeffs.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{v}")?;
            for (i, &e) in k.exps().iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{}", i + 1, e)?,
                }
            }
        }
        Ok(())
    }
}

/// Checked truncated product.
pub fn jet_mul(a: &Jet, b: &Jet) -> Result<Jet> {
    a.try_mul(b)
}

/// `∂a/∂x_var`.
pub fn jet_partial(a: &Jet, var: usize) -> Result<Jet> {
    a.partial(var)
}

/// Composition `outer ∘ inner`, truncated at the shared order.
///
/// `inner` supplies one component per variable of `outer`; its components
/// must have zero constant term so that truncation commutes with
/// substitution.
pub fn jet_compose(outer: &Jet, inner: &JetVector) -> Result<Jet> {
    if inner.len() != outer.num_vars {
        return Err(Error::Structure(format!(
            "outer jet has {} variables but inner map has {} components",
            outer.num_vars,
            inner.len()
        )));
    }
    if inner.order() != outer.order {
        return Err(Error::Structure(format!(
            "outer order {} differs from inner order {}",
            outer.order,
            inner.order()
        )));
    }
    for (i, c) in inner.iter().enumerate() {
        let c0 = c.constant_term();
        if c0 != 0.0 {
            return Err(Error::NonzeroConstant { index: i, value: c0 });
        }
    }
    let m = inner.num_vars();
    let r = outer.order;
    // powers[i][e] = inner_i^e, built lazily up to the largest exponent used
    let mut max_exp = vec![0u32; outer.num_vars];
    for k in outer.coeffs.keys() {
        for (i, &e) in k.exps().iter().enumerate() {
            max_exp[i] = max_exp[i].max(e);
        }
    }
    let powers: Vec<Vec<Jet>> = inner
        .iter()
        .zip(&max_exp)
        .map(|(c, &top)| {
            let mut p = vec![Jet::constant(m, r, 1.0)];
            for e in 1..=top {
                let next = &p[e as usize - 1] * c;
                p.push(next);
            }
            p
        })
        .collect();
    let mut out = Jet::zero(m, r);
    for (k, v) in &outer.coeffs {
        let mut term = Jet::constant(m, r, *v);
        for (i, &e) in k.exps().iter().enumerate() {
            if e > 0 {
                term = &term * &powers[i][e as usize];
            }
        }
        for (kk, vv) in term.coeffs {
            out.add_term(kk, vv);
        }
    }
    out.reliable = outer.reliable.min(inner.reliable_order());
    Ok(out)
}

/// A vector of jets sharing variable count and order.
#[derive(Clone, Debug, PartialEq)]
pub struct JetVector {
    comps: Vec<Jet>,
    num_vars: usize,
    order: u32,
}

impl JetVector {
    pub fn new(comps: Vec<Jet>) -> Result<Self> {
        let first = comps
            .first()
            .ok_or_else(|| Error::Structure("empty jet vector".into()))?;
        let (m, r) = (first.num_vars, first.order);
        for (i, c) in comps.iter().enumerate() {
            if c.num_vars != m || c.order != r {
                return Err(Error::Structure(format!(
                    "component {i} has ({} vars, order {}), expected ({m} vars, order {r})",
                    c.num_vars, c.order
                )));
            }
        }
        Ok(JetVector { comps, num_vars: m, order: r })
    }

    /// Like [`JetVector::new`] but allows zero components, which needs the
    /// variable count and order up front.
    pub fn with_shape(comps: Vec<Jet>, num_vars: usize, order: u32) -> Result<Self> {
        for (i, c) in comps.iter().enumerate() {
            if c.num_vars != num_vars || c.order != order {
                return Err(Error::Structure(format!("component {i} has the wrong shape")));
            }
        }
        Ok(JetVector { comps, num_vars, order })
    }

    pub fn zeros(len: usize, num_vars: usize, order: u32) -> Self {
        JetVector { comps: vec![Jet::zero(num_vars, order); len], num_vars, order }
    }

    /// The identity map in `num_vars` variables.
    pub fn identity(num_vars: usize, order: u32) -> Self {
        let comps = (0..num_vars).map(|i| Jet::var(num_vars, order, i)).collect();
        JetVector { comps, num_vars, order }
    }

    /// Linear map `x ↦ A x` (rows of `a` become components).
    pub fn linear(a: &DMatrix<f64>, order: u32) -> Self {
        let m = a.ncols();
        let comps = (0..a.nrows())
            .map(|i| {
                let mut j = Jet::zero(m, order);
                for c in 0..m {
                    j.add_term(MultiIndex::unit(m, c), a[(i, c)]);
                }
                j
            })
            .collect();
        JetVector { comps, num_vars: m, order }
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn reliable_order(&self) -> u32 {
        self.comps.iter().map(Jet::reliable_order).min().unwrap_or(self.order)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Jet> {
        self.comps.iter()
    }

    pub fn components(&self) -> &[Jet] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Jet> {
        self.comps
    }

    pub fn get(&self, i: usize) -> &Jet {
        &self.comps[i]
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|c| c.eval(x)).collect()
    }

    /// Componentwise composition `self ∘ inner`.
    pub fn compose(&self, inner: &JetVector) -> Result<JetVector> {
        let comps = self
            .comps
            .iter()
            .map(|c| jet_compose(c, inner))
            .collect::<Result<Vec<_>>>()?;
        JetVector::with_shape(comps, inner.num_vars, self.order)
    }

    /// Jacobian at the origin: entry `(i, j)` is the `x_j` coefficient of
    /// component `i`.
    pub fn linear_part(&self) -> DMatrix<f64> {
        let m = self.num_vars;
        DMatrix::from_fn(self.len(), m, |i, j| {
            self.comps[i].coeff_of(&MultiIndex::unit(m, j))
        })
    }

    pub fn constant_part(&self) -> Vec<f64> {
        self.comps.iter().map(Jet::constant_term).collect()
    }

    pub fn homogeneous(&self, d: u32) -> JetVector {
        self.map(|c| c.homogeneous(d))
    }

    pub fn map<F: Fn(&Jet) -> Jet>(&self, f: F) -> JetVector {
        let comps: Vec<Jet> = self.comps.iter().map(f).collect();
        let (num_vars, order) = comps
            .first()
            .map(|c| (c.num_vars, c.order))
            .unwrap_or((self.num_vars, self.order));
        JetVector { comps, num_vars, order }
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn max_abs_diff(&self, other: &JetVector) -> f64 {
        assert_eq!(self.len(), other.len());
        self.comps
            .iter()
            .zip(&other.comps)
            .fold(0.0, |m, (a, b)| m.max(a.max_abs_diff(b)))
    }

    pub fn try_add(&self, other: &JetVector) -> Result<JetVector> {
        if self.len() != other.len() {
            return Err(Error::Structure("jet vectors differ in length".into()));
        }
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.try_add(b))
            .collect::<Result<Vec<_>>>()?;
        JetVector::with_shape(comps, self.num_vars, self.order)
    }

    pub fn scale(&self, s: f64) -> JetVector {
        self.map(|c| c.scale(s))
    }

    /// Matrix-vector product `A · self` with a constant matrix.
    pub fn left_mul(&self, a: &DMatrix<f64>) -> JetVector {
        assert_eq!(a.ncols(), self.len());
        let comps = (0..a.nrows())
            .map(|i| {
                let mut acc = Jet::zero(self.num_vars, self.order);
                for j in 0..a.ncols() {
                    if a[(i, j)] != 0.0 {
                        acc = &acc + &self.comps[j].scale(a[(i, j)]);
                    }
                }
                acc
            })
            .collect();
        JetVector { comps, num_vars: self.num_vars, order: self.order }
    }

    pub fn push(&mut self, c: Jet) -> Result<()> {
        if c.num_vars != self.num_vars || c.order != self.order {
            return Err(Error::Structure("pushed component has the wrong shape".into()));
        }
        self.comps.push(c);
        Ok(())
    }
}

impl Add for &JetVector {
    type Output = JetVector;
    fn add(self, rhs: &JetVector) -> JetVector {
        self.try_add(rhs).expect("jet vector addition")
    }
}

impl Sub for &JetVector {
    type Output = JetVector;
    fn sub(self, rhs: &JetVector) -> JetVector {
        self.try_add(&rhs.scale(-1.0)).expect("jet vector subtraction")
    }
}

impl std::ops::Index<usize> for JetVector {
    type Output = Jet;
    fn index(&self, i: usize) -> &Jet {
        &self.comps[i]
    }
}

impl<'a> IntoIterator for &'a JetVector {
    type Item = &'a Jet;
    type IntoIter = std::slice::Iter<'a, Jet>;
    fn into_iter(self) -> Self::IntoIter {
        self.comps.iter()
    }
}

/// Square or rectangular matrix of jets, used for Jacobians and their
/// inverses along the pipelines.
#[derive(Clone, Debug, PartialEq)]
pub struct JetMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Jet>,
}

impl JetMatrix {
    pub fn from_fn<F: FnMut(usize, usize) -> Jet>(rows: usize, cols: usize, mut f: F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        JetMatrix { rows, cols, data }
    }

    pub fn constant(a: &DMatrix<f64>, num_vars: usize, order: u32) -> Self {
        JetMatrix::from_fn(a.nrows(), a.ncols(), |i, j| Jet::constant(num_vars, order, a[(i, j)]))
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Jet {
        &self.data[i * self.cols + j]
    }

    /// Values of the entries at the origin.
    pub fn constant_part(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).constant_term())
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).eval(x))
    }

    pub fn mul(&self, other: &JetMatrix) -> JetMatrix {
        assert_eq!(self.cols, other.rows);
        JetMatrix::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = self.get(i, 0) * other.get(0, j);
            for k in 1..self.cols {
                acc = &acc + &(self.get(i, k) * other.get(k, j));
            }
            acc
        })
    }

    pub fn mul_vec(&self, v: &JetVector) -> JetVector {
        assert_eq!(self.cols, v.len());
        let comps = (0..self.rows)
            .map(|i| {
                let mut acc = self.get(i, 0) * v.get(0);
                for k in 1..self.cols {
                    acc = &acc + &(self.get(i, k) * v.get(k));
                }
                acc
            })
            .collect();
        JetVector::new(comps).expect("consistent shapes")
    }

    pub fn sub(&self, other: &JetMatrix) -> JetMatrix {
        JetMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j) - other.get(i, j))
    }

    pub fn scale(&self, s: f64) -> JetMatrix {
        JetMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j).scale(s))
    }

    /// Entrywise composition with `inner`.
    pub fn compose(&self, inner: &JetVector) -> Result<JetMatrix> {
        let data = self
            .data
            .iter()
            .map(|e| jet_compose(e, inner))
            .collect::<Result<Vec<_>>>()?;
        Ok(JetMatrix { rows: self.rows, cols: self.cols, data })
    }

    /// Inverse of a square jet matrix by the Newton iteration
    /// `X ← X(2I − AX)`, which doubles the number of correct degrees per
    /// sweep. Fails when the constant part is singular.
    pub fn inverse(&self) -> Result<JetMatrix> {
        if self.rows != self.cols {
            return Err(Error::Structure("inverse of a non-square jet matrix".into()));
        }
        let n = self.rows;
        let a0 = self.constant_part();
        let inv0 = crate::linalg::inverse(&a0, "constant part of jet matrix")?;
        let e = &self.data[0];
        let (m, r) = (e.num_vars(), e.order());
        let mut x = JetMatrix::constant(&inv0, m, r);
        let two_i = JetMatrix::constant(&(DMatrix::identity(n, n) * 2.0), m, r);
        let sweeps = 2 + (f64::from(r + 1)).log2().ceil() as usize;
        for _ in 0..sweeps {
            let ax = self.mul(&x);
            x = x.mul(&two_i.sub(&ax));
        }
        Ok(x)
    }

    pub fn entries(&self) -> &[Jet] {
        &self.data
    }
}
