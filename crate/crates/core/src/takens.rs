//! Time-1 maps of vector fields with nilpotent linear part, and the inverse
//! problem: the unique formal vector field whose time-1 map matches a given
//! map jet with unipotent linear part.
//!
//! Both directions share one primitive. For a nilpotent `Λ`, `e^{Λτ}` is a
//! matrix polynomial in `τ`, so every quantity in the Picard recursion is a
//! polynomial in `τ` with jet coefficients and the integrals
//! `∫₀ᵗ (t−τ)^k τ^p dτ = t^{k+p+1} k! p!/(k+p+1)!` are exact.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fastslow::{self, nilpotency_index, FastSlowMapSpec, SingularityTag};
use crate::jet::{monomials_of_degree, Jet, JetVector, MultiIndex};
use crate::linalg;
use crate::tolerance::Tolerances;

const NILP_TOL: f64 = 1e-9;

/// Multiplicative Jordan–Chevalley split `A = B (I + M)` with `B`
/// semisimple, `M` nilpotent and `BM = MB`.
#[derive(Clone, Debug)]
pub struct LinearPartDecomposition {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub nilpotent_index_of_m: Option<usize>,
    pub is_unipotent: bool,
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Horner evaluation of a real polynomial (ascending coefficients) at a matrix.
fn matrix_poly(coeffs: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut acc = DMatrix::zeros(n, n);
    for c in coeffs.iter().rev() {
        acc = &acc * x + DMatrix::identity(n, n) * *c;
    }
    acc
}

/// Splits `A` into its semisimple and unipotent factors.
///
/// The semisimple part is the limit of the Newton iteration
/// `X ← X − p(X) p'(X)^{-1}` started at `A`, where `p` is the square-free
/// polynomial whose roots are the clustered eigenvalues of `A`. This gives
/// the same `B` as diagonalizing in a Jordan basis without computing one.
/// Eigenvalue clusters that cannot be resolved at double precision are
/// refused rather than mis-split.
pub fn jordan_chevalley_split(a: &DMatrix<f64>, tol: &Tolerances) -> Result<LinearPartDecomposition> {
    if a.nrows() != a.ncols() {
        return Err(Error::Structure("linear part must be square".into()));
    }
    let dim = a.nrows();
    let eigs = linalg::eigenvalues(a);
    let scale = eigs.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let cluster_tol = 1e-4 * scale;
    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for z in eigs {
        match clusters.iter_mut().find(|c| (c[0] - z).norm() <= cluster_tol) {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }
    let centers: Vec<Complex64> = clusters
        .iter()
        .map(|c| c.iter().sum::<Complex64>() / c.len() as f64)
        .collect();
    let mut p = vec![Complex64::new(1.0, 0.0)];
    for c in &centers {
        p = poly_mul(&p, &[-c, Complex64::new(1.0, 0.0)]);
    }
    let p_re: Vec<f64> = p.iter().map(|c| c.re).collect();
    let dp: Vec<f64> = p_re.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect();

    let unipotent_centers = centers.iter().all(|c| (c - 1.0).norm() <= tol.unit);
    let mut x = a.clone();
    if unipotent_centers {
        x = DMatrix::identity(dim, dim);
    } else {
        let anorm = a.norm().max(1.0);
        for _ in 0..60 {
            let px = matrix_poly(&p_re, &x);
            if px.norm() <= 1e-14 * anorm.powi(centers.len() as i32) {
                break;
            }
            let dpx = matrix_poly(&dp, &x);
            let inv = linalg::inverse(&dpx, "Jordan-Chevalley Newton step").map_err(|e| {
                Error::Degenerate(format!("eigenvalue clusters cannot be separated: {e}"))
            })?;
            x -= px * inv;
        }
    }
    let b = x;
    let binv = linalg::inverse(&b, "semisimple factor")
        .map_err(|_| Error::Unsupported("singular linear part has no multiplicative split".into()))?;
    let m = if unipotent_centers { a - DMatrix::identity(dim, dim) } else { &binv * a - DMatrix::identity(dim, dim) };
    let scale_a = a.norm().max(1.0);
    let recon = (a - &b * (DMatrix::identity(dim, dim) + &m)).norm();
    let comm = (&b * &m - &m * &b).norm();
    let nilpotent_index_of_m = nilpotency_index(&m, NILP_TOL);
    if recon > 1e-9 * scale_a || comm > 1e-9 * scale_a || nilpotent_index_of_m.is_none() {
        return Err(Error::Degenerate(format!(
            "defective eigenproblem beyond the conditioning cap (reconstruction {recon:e}, commutator {comm:e})"
        )));
    }
    Ok(LinearPartDecomposition {
        a: a.clone(),
        b,
        m,
        nilpotent_index_of_m,
        is_unipotent: unipotent_centers,
    })
}

/// Polynomial in τ with jet-vector coefficients: `Σ_p τ^p X[p]`.
type TauVec = Vec<JetVector>;
/// Polynomial in τ with scalar-jet coefficients.
type TauJet = Vec<Jet>;

fn tau_mul(a: &TauJet, b: &TauJet) -> TauJet {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let (m, r) = (a[0].num_vars(), a[0].order());
    let mut out = vec![Jet::zero(m, r); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if !y.is_zero() {
                out[i + j] = &out[i + j] + &(x * y);
            }
        }
    }
    trim(&mut out);
    out
}

fn trim(p: &mut TauJet) {
    while p.last().is_some_and(Jet::is_zero) {
        p.pop();
    }
}

fn component(x: &TauVec, i: usize) -> TauJet {
    let mut out: TauJet = x.iter().map(|c| c.get(i).clone()).collect();
    trim(&mut out);
    out
}

/// `F(x(τ))` for a jet vector `F` and a τ-polynomial trajectory `x`.
fn compose_tau(f: &JetVector, x: &TauVec) -> TauVec {
    let (m, r) = (x[0].num_vars(), x[0].order());
    let comps: Vec<TauJet> = (0..f.num_vars()).map(|i| component(x, i)).collect();
    let mut max_exp = vec![0u32; f.num_vars()];
    for c in f.iter() {
        for (k, _) in c.terms() {
            for (i, &e) in k.exps().iter().enumerate() {
                max_exp[i] = max_exp[i].max(e);
            }
        }
    }
    let powers: Vec<Vec<TauJet>> = comps
        .iter()
        .zip(&max_exp)
        .map(|(c, &top)| {
            let mut p = vec![vec![Jet::constant(m, r, 1.0)]];
            for e in 1..=top as usize {
                let next = tau_mul(&p[e - 1], c);
                p.push(next);
            }
            p
        })
        .collect();
    let mut out_comps: Vec<TauJet> = Vec::with_capacity(f.len());
    for c in f.iter() {
        let mut acc: TauJet = Vec::new();
        for (k, v) in c.terms() {
            let mut term: TauJet = vec![Jet::constant(m, r, v)];
            for (i, &e) in k.exps().iter().enumerate() {
                if e > 0 {
                    term = tau_mul(&term, &powers[i][e as usize]);
                }
            }
            if acc.len() < term.len() {
                acc.resize(term.len(), Jet::zero(m, r));
            }
            for (p, t) in term.into_iter().enumerate() {
                acc[p] = &acc[p] + &t;
            }
        }
        trim(&mut acc);
        out_comps.push(acc);
    }
    let len = out_comps.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|p| {
            let cs = out_comps
                .iter()
                .map(|c| c.get(p).cloned().unwrap_or_else(|| Jet::zero(m, r)))
                .collect();
            JetVector::with_shape(cs, m, r).expect("consistent shapes")
        })
        .collect()
}

/// Powers `Λ^0, …, Λ^{ν−1}` of a nilpotent matrix, with `Λ^ν = 0`.
fn nilpotent_powers(lambda: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let nu = nilpotency_index(lambda, NILP_TOL).ok_or_else(|| {
        Error::Unsupported(
            "linear part is not nilpotent; use jordan_chevalley_split to inspect the semisimple factor".into(),
        )
    })?;
    let dim = lambda.nrows();
    let mut out = vec![DMatrix::identity(dim, dim)];
    for k in 1..nu {
        let next = &out[k - 1] * lambda;
        out.push(next);
    }
    Ok(out)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `∫₀ᵗ e^{Λ(t−τ)} Z(τ) dτ` as a polynomial in `t`.
fn integrate_exp(powers: &[DMatrix<f64>], z: &TauVec) -> TauVec {
    if z.is_empty() {
        return Vec::new();
    }
    let (m, r, len) = (z[0].num_vars(), z[0].order(), z[0].len());
    let top = powers.len() + z.len();
    let mut out: TauVec = vec![JetVector::zeros(len, m, r); top];
    for (k, lk) in powers.iter().enumerate() {
        for (p, zp) in z.iter().enumerate() {
            let w = factorial(p) / factorial(k + p + 1);
            let term = zp.left_mul(lk).scale(w);
            out[k + p + 1] = &out[k + p + 1] + &term;
        }
    }
    while out.last().is_some_and(|v| v.max_abs() == 0.0) {
        out.pop();
    }
    out
}

fn tau_sum(a: &TauVec, b: &TauVec) -> TauVec {
    let len = a.len().max(b.len());
    (0..len)
        .map(|p| match (a.get(p), b.get(p)) {
            (Some(x), Some(y)) => x + y,
            (Some(x), None) => x.clone(),
            (None, Some(y)) => y.clone(),
            (None, None) => unreachable!(),
        })
        .collect()
}

fn eval_at_one(x: &TauVec) -> JetVector {
    let mut acc = x[0].clone();
    for v in &x[1..] {
        acc = &acc + v;
    }
    acc
}

fn check_field(v: &JetVector) -> Result<()> {
    if v.len() != v.num_vars() {
        return Err(Error::Structure(format!(
            "vector field has {} components in {} variables",
            v.len(),
            v.num_vars()
        )));
    }
    for (i, c) in v.iter().enumerate() {
        let c0 = c.constant_term();
        if c0 != 0.0 {
            return Err(Error::NonzeroConstant { index: i, value: c0 });
        }
    }
    Ok(())
}

/// Nonlinear part (degrees ≥ 2) of a jet vector.
fn nonlinear_part(v: &JetVector) -> JetVector {
    v.map(|c| {
        let mut out = c.clone();
        for d in 0..=1 {
            out = &out - &c.homogeneous(d);
        }
        out
    })
}

/// Jet of the time-1 map of `v`, by Picard iteration with exact
/// τ-integration. The linear part of `v` must be nilpotent.
pub fn flow_time1_jet(v: &JetVector, order: u32) -> Result<JetVector> {
    check_field(v)?;
    let v = v.map(|c| c.with_order(order));
    let m = v.num_vars();
    let lambda = v.linear_part();
    let powers = nilpotent_powers(&lambda)?;
    let ident = JetVector::identity(m, order);
    let x1: TauVec = powers
        .iter()
        .enumerate()
        .map(|(k, lk)| ident.left_mul(lk).scale(1.0 / factorial(k)))
        .collect();
    let fnl = nonlinear_part(&v);
    let mut x = x1.clone();
    for l in 2..=order {
        let y = compose_tau(&fnl, &x);
        let integral = integrate_exp(&powers, &y);
        x = tau_sum(&x1, &integral)
            .into_iter()
            .map(|c| c.map(|j| j.truncated(l)))
            .collect();
    }
    let mut out = eval_at_one(&x);
    out = out.map(|c| c.clone().with_reliable_order(v.reliable_order()));
    Ok(out)
}

/// Result of a formal embedding.
#[derive(Clone, Debug)]
pub struct EmbeddingResult {
    pub v: JetVector,
    pub matched_order: u32,
    /// Largest coefficient of `j^r Φ¹_V − j^r H`.
    pub residual: f64,
}

fn check_map(h: &JetVector) -> Result<()> {
    if h.len() != h.num_vars() {
        return Err(Error::Structure(format!("map has {} components in {} variables", h.len(), h.num_vars())));
    }
    for (i, c) in h.iter().enumerate() {
        let c0 = c.constant_term();
        if c0 != 0.0 {
            return Err(Error::Precondition(format!(
                "map does not fix the origin: component {i} has constant term {c0:e}"
            )));
        }
    }
    Ok(())
}

/// Matrix of `F ↦ ∫₀¹ e^{Λ(1−τ)} F(e^{Λτ}x) dτ` on homogeneous degree-`l`
/// vector fields, in the basis `e_i x^α` (component-major, graded-lex `α`).
fn matching_operator(powers: &[DMatrix<f64>], m: usize, order: u32, l: u32) -> (Vec<MultiIndex>, DMatrix<f64>) {
    let basis = monomials_of_degree(m, l);
    let nb = basis.len();
    let ident = JetVector::identity(m, order);
    let flow: TauVec = powers
        .iter()
        .enumerate()
        .map(|(k, lk)| ident.left_mul(lk).scale(1.0 / factorial(k)))
        .collect();
    let lin: Vec<TauJet> = (0..m).map(|i| component(&flow, i)).collect();
    let mut op = DMatrix::zeros(m * nb, m * nb);
    for (ai, alpha) in basis.iter().enumerate() {
        let mut mono: TauJet = vec![Jet::constant(m, order, 1.0)];
        for (v, &e) in alpha.exps().iter().enumerate() {
            for _ in 0..e {
                mono = tau_mul(&mono, &lin[v]);
            }
        }
        for i in 0..m {
            let z: TauVec = mono
                .iter()
                .map(|c| {
                    let mut comps = vec![Jet::zero(m, order); m];
                    comps[i] = c.clone();
                    JetVector::with_shape(comps, m, order).expect("consistent shapes")
                })
                .collect();
            let image = eval_at_one(&integrate_exp(powers, &z));
            let col = i * nb + ai;
            for (row_comp, jet) in image.iter().enumerate() {
                for (bi, beta) in basis.iter().enumerate() {
                    op[(row_comp * nb + bi, col)] = jet.coeff_of(beta);
                }
            }
        }
    }
    (basis, op)
}

/// Logarithm of a unipotent matrix, `Σ (−1)^{k+1} (A − I)^k / k`. Equals
/// `A − I` whenever `(A − I)² = 0`.
pub fn unipotent_log(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = a.nrows();
    let nil = a - DMatrix::identity(dim, dim);
    let powers = nilpotent_powers(&nil)?;
    let mut out = DMatrix::zeros(dim, dim);
    for (k, p) in powers.iter().enumerate().skip(1) {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        out += p * (sign / k as f64);
    }
    Ok(out)
}

/// The unique formal vector field `V` with linear part `log A` whose time-1
/// map agrees with `h` through degree `order`. `h` must fix the origin and
/// have unipotent linear part `A`.
pub fn takens_embed_unipotent(h: &JetVector, order: u32) -> Result<EmbeddingResult> {
    check_map(h)?;
    let h = h.map(|c| c.with_order(order));
    let m = h.num_vars();
    let a = h.linear_part();
    let powers = match unipotent_log(&a).and_then(|lambda| Ok((nilpotent_powers(&lambda)?, lambda))) {
        Ok(p) => p,
        Err(_) => {
            let diag = match jordan_chevalley_split(&a, &Tolerances::default()) {
                Ok(d) if !d.is_unipotent => "the semisimple factor B differs from the identity".to_string(),
                Ok(_) => "A − I is not nilpotent at the configured tolerance".to_string(),
                Err(e) => format!("Jordan-Chevalley split failed: {e}"),
            };
            return Err(Error::Unsupported(format!(
                "linear part is not unipotent ({diag}); only the unipotent embedding is implemented"
            )));
        }
    };
    let (powers, lambda) = powers;
    let mut v = JetVector::linear(&lambda, order);
    for l in 2..=order {
        let phi = flow_time1_jet(&v, order)?;
        let resid = (&h - &phi).homogeneous(l);
        let (basis, op) = matching_operator(&powers, m, order, l);
        let nb = basis.len();
        let rhs = DVector::from_fn(m * nb, |row, _| resid.get(row / nb).coeff_of(&basis[row % nb]));
        let sol = linalg::solve(&op, &rhs, &format!("degree-{l} matching operator"))
            .map_err(|e| Error::Internal(format!("matching operator should be invertible: {e}")))?;
        let comps = (0..m)
            .map(|i| {
                let mut c = v.get(i).clone();
                for (bi, beta) in basis.iter().enumerate() {
                    c.add_term(beta.clone(), sol[i * nb + bi]);
                }
                c
            })
            .collect();
        v = JetVector::with_shape(comps, m, order)?;
    }
    let phi = flow_time1_jet(&v, order)?;
    let residual = phi.max_abs_diff(&h);
    let scale = h.max_abs().max(1.0);
    if residual > 1e-9 * scale {
        return Err(Error::Internal(format!("embedding residual {residual:e} exceeds 1e-9")));
    }
    Ok(EmbeddingResult { v, matched_order: order, residual })
}

/// Comparison of the slow map with the time-1 map of the reduced flow.
#[derive(Clone, Debug)]
pub struct ReducedEmbeddingReport {
    /// Largest difference between the linear parts of `V` and `ε Π G(z, 0)`.
    pub linear_discrepancy: f64,
    /// `(l, d_l)`: largest difference among degree-`l` terms with ε-exponent 0 or 1.
    pub per_degree: Vec<(u32, f64)>,
    /// Pure ε² coefficient of each component of `V` (generic solve).
    pub eps2_generic: Vec<f64>,
    /// The same coefficients from the closed formula `b − Σ_s b_s a_s / 2`.
    pub eps2_closed: Vec<f64>,
    pub eps2_difference: f64,
    pub embedding: EmbeddingResult,
}

/// Embeds the slow map `z ↦ z + ε Π(z) G(z, ε)` about a normally hyperbolic
/// point `z0` and compares it with the reduced vector field `Π(z) G(z, 0)`.
pub fn verify_reduced_embedding(
    spec: &FastSlowMapSpec,
    z0: &[f64],
    order: u32,
    tol: &Tolerances,
) -> Result<ReducedEmbeddingReport> {
    if order < 2 {
        return Err(Error::Precondition("order must be at least 2".into()));
    }
    let class = fastslow::classify_point(spec, z0, tol)?;
    if !matches!(
        class.tag,
        SingularityTag::NhAttracting | SingularityTag::NhRepelling | SingularityTag::NhSaddle
    ) {
        return Err(Error::Precondition(format!("point is not normally hyperbolic ({class})")));
    }
    let rd = fastslow::reduced_data(spec, z0, tol)?;
    if !rd.valid {
        return Err(Error::Precondition("reduced data is not valid at the point".into()));
    }
    let local = spec.shifted_to(z0)?;
    let n = spec.n();
    let pi = fastslow::projection_jet(&local)?;
    let pi_ext = |i: usize, j: usize| pi.get(i, j).with_order(order).extend_vars(1);
    let g: Vec<Jet> = local.g_jets().iter().map(|c| c.with_order(order)).collect();
    let g0: Vec<Jet> = g.iter().map(|c| c.at_var_zero(n)).collect();
    let eps = Jet::var(n + 1, order, n);
    let mut h_comps = Vec::with_capacity(n + 1);
    let mut red_comps = Vec::with_capacity(n + 1);
    for i in 0..n {
        let mut pg = Jet::zero(n + 1, order);
        let mut pg0 = Jet::zero(n + 1, order);
        for (j, (gj, g0j)) in g.iter().zip(&g0).enumerate() {
            let p = pi_ext(i, j);
            pg = &pg + &(&p * gj);
            pg0 = &pg0 + &(&p * g0j);
        }
        h_comps.push(&Jet::var(n + 1, order, i) + &(&eps * &pg));
        red_comps.push(&eps * &pg0);
    }
    h_comps.push(eps.clone());
    red_comps.push(Jet::zero(n + 1, order));
    let h = JetVector::new(h_comps)?;
    let reduced = JetVector::new(red_comps)?;
    let embedding = takens_embed_unipotent(&h, order)?;
    let v = &embedding.v;

    let mut linear_discrepancy: f64 = 0.0;
    let mut per_degree = Vec::new();
    for d in 1..=order {
        let mut worst: f64 = 0.0;
        for (vc, rc) in v.iter().zip(reduced.iter()) {
            let diff = &vc.homogeneous(d) - &rc.homogeneous(d);
            for (k, c) in diff.terms() {
                if d == 1 || k.get(n) <= 1 {
                    worst = worst.max(c.abs());
                }
            }
        }
        if d == 1 {
            linear_discrepancy = worst;
        } else {
            per_degree.push((d, worst));
        }
    }

    let mut eps_pow = vec![0u32; n + 1];
    eps_pow[n] = 2;
    let eps2 = MultiIndex::new(eps_pow);
    let eps1 = MultiIndex::unit(n + 1, n);
    let a: Vec<f64> = (0..n).map(|s| h.get(s).coeff_of(&eps1)).collect();
    let mut eps2_generic = Vec::with_capacity(n);
    let mut eps2_closed = Vec::with_capacity(n);
    for i in 0..n {
        eps2_generic.push(v.get(i).coeff_of(&eps2));
        let mut closed = h.get(i).coeff_of(&eps2);
        for (s, a_s) in a.iter().enumerate() {
            let mut e = vec![0u32; n + 1];
            e[s] = 1;
            e[n] = 1;
            closed -= 0.5 * h.get(i).coeff_of(&MultiIndex::new(e)) * a_s;
        }
        eps2_closed.push(closed);
    }
    let eps2_difference = eps2_generic
        .iter()
        .zip(&eps2_closed)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    Ok(ReducedEmbeddingReport {
        linear_discrepancy,
        per_degree,
        eps2_generic,
        eps2_closed,
        eps2_difference,
        embedding,
    })
}
