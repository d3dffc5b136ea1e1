//! Planar fold, transcritical and pitchfork points, regular contact points
//! in higher dimension and the center-manifold reduction at them.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fastslow::FastSlowMapSpec;
use crate::jet::{jet_compose, monomials_of_degree, monomials_up_to, Jet, JetVector, MultiIndex};
use crate::linalg;
use crate::takens::{takens_embed_unipotent, EmbeddingResult};
use crate::tolerance::Tolerances;

/// The three planar codimension-one cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanarCase {
    Fold,
    Transcritical,
    Pitchfork,
}

impl fmt::Display for PlanarCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanarCase::Fold => "Fold",
            PlanarCase::Transcritical => "Transcritical",
            PlanarCase::Pitchfork => "Pitchfork",
        })
    }
}

impl FromStr for PlanarCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fold" => Ok(PlanarCase::Fold),
            "transcritical" => Ok(PlanarCase::Transcritical),
            "pitchfork" => Ok(PlanarCase::Pitchfork),
            _ => Err(Error::Format(format!("unknown case {s:?} (fold, transcritical, pitchfork)"))),
        }
    }
}

/// Partial derivatives at the origin of a planar fast component
/// `f̃(x, y, ε)` and the slow drift `g0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarPartials {
    pub f: f64,
    pub fx: f64,
    pub fy: f64,
    pub fxx: f64,
    pub fxy: f64,
    pub fyy: f64,
    pub fxxx: f64,
    /// `∂f̃/∂ε`.
    pub delta: f64,
    pub g0: f64,
}

impl PlanarPartials {
    fn from_jet(f: &Jet, g0: f64) -> Self {
        PlanarPartials {
            f: f.coeff(&[0, 0, 0]),
            fx: f.coeff(&[1, 0, 0]),
            fy: f.coeff(&[0, 1, 0]),
            fxx: 2.0 * f.coeff(&[2, 0, 0]),
            fxy: f.coeff(&[1, 1, 0]),
            fyy: 2.0 * f.coeff(&[0, 2, 0]),
            fxxx: 6.0 * f.coeff(&[3, 0, 0]),
            delta: f.coeff(&[0, 0, 1]),
            g0,
        }
    }
}

/// Normal-form coefficients of a planar singularity.
///
/// Transcritical and fold: `α = f_xx/2`, `β = f_xy/2`, `γ = f_yy/2`.
/// Pitchfork: `α = f_xy`, `β = f_yy/2`, `γ = f_xxx/6`. In all cases
/// `δ = ∂f̃/∂ε` and `g0 = g(0, 0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalFormCoefficients {
    pub case: PlanarCase,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub g0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanarClassification {
    pub case: PlanarCase,
    pub coefficients: NormalFormCoefficients,
    pub partials: PlanarPartials,
    /// Whether the signs match the orientation used by the exit and
    /// branch-selection experiments.
    pub oriented: bool,
}

/// Planar fast component `f̃ = N11 f + ε G1` in `(x, y, ε)` and `g = G2`.
fn planar_components(spec: &FastSlowMapSpec) -> Result<(Jet, Jet)> {
    if spec.n() != 2 || spec.k() != 1 {
        return Err(Error::Precondition(format!(
            "planar analysis needs n = 2, k = 1 (got n = {}, k = {})",
            spec.n(),
            spec.k()
        )));
    }
    if !spec.n_entry(1, 0).is_zero() {
        return Err(Error::Precondition(
            "planar analysis needs standard form: N must have a zero second row".into(),
        ));
    }
    let r = spec.order();
    let eps = Jet::var(3, r, 2);
    let nf = (spec.n_entry(0, 0) * &spec.f_jets()[0]).extend_vars(1);
    let f = &nf + &(&eps * &spec.g_jets()[0]);
    Ok((f, spec.g_jets()[1].clone()))
}

fn check_conditions(p: &PlanarPartials, tol: &Tolerances) -> Vec<(PlanarCase, Vec<String>)> {
    let zero = |name: &str, v: f64, out: &mut Vec<String>| {
        if v.abs() > tol.cond {
            out.push(format!("{name} = {v:e} should vanish (|.| <= {:e})", tol.cond));
        }
    };
    let nonzero = |name: &str, v: f64, out: &mut Vec<String>| {
        if v.abs() < tol.floor {
            out.push(format!("{name} = {v:e} should be nonzero (|.| >= {:e})", tol.floor));
        }
    };
    let mut fold = Vec::new();
    zero("f", p.f, &mut fold);
    zero("f_x", p.fx, &mut fold);
    nonzero("f_xx", p.fxx, &mut fold);
    nonzero("f_y", p.fy, &mut fold);
    nonzero("g", p.g0, &mut fold);

    let mut tc = Vec::new();
    zero("f", p.f, &mut tc);
    zero("f_x", p.fx, &mut tc);
    zero("f_y", p.fy, &mut tc);
    nonzero("f_xx", p.fxx, &mut tc);
    let det = p.fxx * p.fyy - p.fxy * p.fxy;
    if det > -tol.floor {
        tc.push(format!("Hessian determinant = {det:e} should be negative"));
    }
    nonzero("g", p.g0, &mut tc);

    let mut pf = Vec::new();
    zero("f", p.f, &mut pf);
    zero("f_x", p.fx, &mut pf);
    zero("f_y", p.fy, &mut pf);
    zero("f_xx", p.fxx, &mut pf);
    nonzero("f_xxx", p.fxxx, &mut pf);
    nonzero("f_xy", p.fxy, &mut pf);
    nonzero("g", p.g0, &mut pf);

    vec![(PlanarCase::Fold, fold), (PlanarCase::Transcritical, tc), (PlanarCase::Pitchfork, pf)]
}

fn classify_partials(p: PlanarPartials, tol: &Tolerances) -> Result<PlanarClassification> {
    let results = check_conditions(&p, tol);
    let matched: Vec<PlanarCase> = results.iter().filter(|(_, f)| f.is_empty()).map(|(c, _)| *c).collect();
    match matched.as_slice() {
        [case] => {
            let case = *case;
            let coefficients = match case {
                PlanarCase::Fold | PlanarCase::Transcritical => NormalFormCoefficients {
                    case,
                    alpha: 0.5 * p.fxx,
                    beta: 0.5 * p.fxy,
                    gamma: 0.5 * p.fyy,
                    delta: p.delta,
                    g0: p.g0,
                },
                PlanarCase::Pitchfork => NormalFormCoefficients {
                    case,
                    alpha: p.fxy,
                    beta: 0.5 * p.fyy,
                    gamma: p.fxxx / 6.0,
                    delta: p.delta,
                    g0: p.g0,
                },
            };
            let oriented = match case {
                PlanarCase::Fold => p.fxx > 0.0 && p.fy < 0.0 && p.g0 < 0.0,
                PlanarCase::Transcritical => p.fxx > 0.0 && p.g0 > 0.0,
                PlanarCase::Pitchfork => p.fxy > 0.0 && p.fxxx < 0.0,
            };
            Ok(PlanarClassification { case, coefficients, partials: p, oriented })
        }
        [] => {
            let detail: Vec<String> =
                results.iter().map(|(c, f)| format!("{c}: {}", f.join("; "))).collect();
            Err(Error::Degenerate(format!("no planar singularity matches ({})", detail.join(" | "))))
        }
        many => Err(Error::Degenerate(format!(
            "ambiguous planar singularity: {:?} all match (f = {:e}, f_x = {:e}, f_y = {:e}, f_xx = {:e})",
            many, p.f, p.fx, p.fy, p.fxx
        ))),
    }
}

/// Classifies the base point of a planar standard-form spec as a fold,
/// transcritical or pitchfork point.
pub fn classify_planar_singularity(spec: &FastSlowMapSpec, tol: &Tolerances) -> Result<PlanarClassification> {
    let (f, g) = planar_components(spec)?;
    classify_partials(PlanarPartials::from_jet(&f, g.constant_term()), tol)
}

/// Critical value of the threshold parameter: 1 for transcritical, 0 for
/// pitchfork points.
pub fn lambda_critical(case: PlanarCase) -> Option<f64> {
    match case {
        PlanarCase::Fold => None,
        PlanarCase::Transcritical => Some(1.0),
        PlanarCase::Pitchfork => Some(0.0),
    }
}

/// Threshold parameter `λ` that decides between exchange of stability and
/// fast escape (transcritical) or selects a branch (pitchfork).
pub fn threshold_lambda(c: &NormalFormCoefficients) -> Result<f64> {
    match c.case {
        PlanarCase::Fold => Err(Error::Precondition("fold points have no threshold parameter".into())),
        PlanarCase::Transcritical => {
            let rad = c.beta * c.beta - c.gamma * c.alpha;
            if !(rad > 0.0) {
                return Err(Error::Degenerate(format!("beta^2 - gamma*alpha = {rad:e} must be positive")));
            }
            Ok((c.delta * c.alpha + c.g0 * c.beta) / (c.g0.abs() * rad.sqrt()))
        }
        PlanarCase::Pitchfork => {
            if !(c.gamma < 0.0) {
                return Err(Error::Degenerate(format!("gamma = {:e} must be negative", c.gamma)));
            }
            if c.alpha == 0.0 || c.g0 == 0.0 {
                return Err(Error::Degenerate("alpha and g0 must be nonzero".into()));
            }
            // the denominator carries |alpha| twice, as in the published formula
            Ok((c.delta * c.alpha + c.beta * c.g0) * (-c.gamma).sqrt() / (c.alpha * c.g0.abs() * c.alpha.abs()))
        }
    }
}

/// Embedding of a planar map and the structural checks on the field.
#[derive(Clone, Debug)]
pub struct PlanarEmbedding {
    pub map_case: PlanarClassification,
    pub field_case: PlanarClassification,
    pub embedding: EmbeddingResult,
    /// `K` with `V_x(x, y, 0) = K · j^r f̃(x, y, 0)` through degree `r`.
    pub k_factor: Jet,
    pub k0: f64,
    pub factor_residual: f64,
    /// Largest violation of `V_y = ε (g0 + O(x, y, ε))`.
    pub slow_discrepancy: f64,
}

fn drop_last_var(j: &Jet) -> Jet {
    let m = j.num_vars() - 1;
    let z = j.at_var_zero(m);
    let mut out = Jet::zero(m, j.order());
    for (k, c) in z.terms() {
        out.add_term(MultiIndex::new(k.exps()[..m].to_vec()), c);
    }
    out
}

/// Least-squares `K` with `truncated(K · f) ≈ target`, `K` of degree at most
/// `order − val(f)`. Returns `(K, max residual)`.
fn divide_by(target: &Jet, f: &Jet) -> Result<(Jet, f64)> {
    let (m, r) = (f.num_vars(), f.order());
    let val = f
        .valuation()
        .ok_or_else(|| Error::Degenerate("cannot factor by the zero polynomial".into()))?;
    let rows = monomials_up_to(m, r);
    let cols = monomials_up_to(m, r.saturating_sub(val));
    let mut a = DMatrix::zeros(rows.len(), cols.len());
    for (ci, alpha) in cols.iter().enumerate() {
        let mut mono = Jet::zero(m, r);
        mono.add_term(alpha.clone(), 1.0);
        let prod = &mono * f;
        for (ri, beta) in rows.iter().enumerate() {
            a[(ri, ci)] = prod.coeff_of(beta);
        }
    }
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|beta| target.coeff_of(beta)));
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-13)
        .map_err(|e| Error::Internal(format!("least-squares factorization failed: {e}")))?;
    let resid = (&a * &sol - &b).amax();
    let k = Jet::from_terms(m, r, cols.iter().zip(sol.iter()).map(|(c, v)| (c.exps().to_vec(), *v)))?;
    Ok((k, resid))
}

/// Embeds the extended planar map `(x, y, ε)` into a vector field and
/// checks that the field has the same singularity with `V_x = K f̃ + O(ε)`,
/// `K(0) = 1`, and `V_y = ε (g0 + O(x, y, ε))`.
pub fn embed_2d(spec: &FastSlowMapSpec, tol: &Tolerances) -> Result<PlanarEmbedding> {
    const FACTOR_TOL: f64 = 1e-8;
    let map_case = classify_planar_singularity(spec, tol)?;
    let (f_tilde, _) = planar_components(spec)?;
    let r = spec.order();
    let h = spec.extended_map_jet();
    let embedding = takens_embed_unipotent(&h, r)?;
    let v = &embedding.v;

    let vy = v.get(1);
    let mut slow_discrepancy: f64 = 0.0;
    for (k, c) in vy.terms() {
        if k.get(2) == 0 {
            slow_discrepancy = slow_discrepancy.max(c.abs());
        }
    }
    let g0 = map_case.partials.g0;
    slow_discrepancy = slow_discrepancy.max((vy.coeff(&[0, 0, 1]) - g0).abs());
    if slow_discrepancy > FACTOR_TOL {
        return Err(Error::EmbeddingStructure(format!(
            "slow component is not eps*(g0 + ...): discrepancy {slow_discrepancy:e}"
        )));
    }

    let f0 = drop_last_var(&f_tilde);
    let vx0 = drop_last_var(v.get(0));
    let (k_factor, factor_residual) = divide_by(&vx0, &f0)?;
    let k0 = k_factor.constant_term();
    if factor_residual > FACTOR_TOL {
        return Err(Error::EmbeddingStructure(format!(
            "V_x(x, y, 0) is not a multiple of f(x, y, 0): residual {factor_residual:e}"
        )));
    }
    if (k0 - 1.0).abs() > FACTOR_TOL {
        return Err(Error::EmbeddingStructure(format!("K(0, 0) = {k0} differs from 1")));
    }

    let field_partials = PlanarPartials::from_jet(v.get(0), vy.coeff(&[0, 0, 1]));
    let field_case = classify_partials(field_partials, tol)
        .map_err(|e| Error::EmbeddingStructure(format!("embedded field is not a planar singularity: {e}")))?;
    if field_case.case != map_case.case {
        return Err(Error::EmbeddingStructure(format!(
            "map has a {} point but the embedded field has a {} point",
            map_case.case, field_case.case
        )));
    }
    Ok(PlanarEmbedding { map_case, field_case, embedding, k_factor, k0, factor_residual, slow_discrepancy })
}

/// Null vectors and complements of `Df N` at a contact point.
///
/// `l` and `r` are normalized so that `l·r = 1` and the largest entry of
/// `r` is positive; `P` is an orthonormal basis of `l^⊥` and `Q` completes
/// `l` so that `(r P)` and `(l; Q)` are mutually inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactFrame {
    pub l: DVector<f64>,
    pub r: DVector<f64>,
    /// `(n−k−1) × (n−k)`.
    pub q: DMatrix<f64>,
    /// `(n−k) × (n−k−1)`.
    pub p: DMatrix<f64>,
}

impl ContactFrame {
    /// Frame for a matrix of corank one.
    pub fn from_dfn(dfn: &DMatrix<f64>) -> Result<Self> {
        let m = dfn.nrows();
        let svd = dfn.clone().svd(true, true);
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let vt = svd.v_t.as_ref().expect("right singular vectors requested");
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let mut r: DVector<f64> = vt.row(imin).transpose();
        let lead = r.iter().fold(0.0f64, |b, &x| if x.abs() > b.abs() { x } else { b });
        if lead < 0.0 {
            r = -r;
        }
        let l0: DVector<f64> = u.column(imin).into_owned();
        let lr = l0.dot(&r);
        if lr.abs() < 1e-8 {
            return Err(Error::Degenerate(format!(
                "left and right null vectors are orthogonal (l.r = {lr:e}); the zero eigenvalue is not simple"
            )));
        }
        let l = l0 / lr;
        let p = linalg::orthogonal_complement(&l);
        let mut rp = DMatrix::zeros(m, m);
        rp.set_column(0, &r);
        if m > 1 {
            rp.columns_mut(1, m - 1).copy_from(&p);
        }
        let inv = linalg::inverse(&rp, "contact frame (r P)")?;
        let q = inv.rows(1, m - 1).into_owned();
        Ok(ContactFrame { l, r, q, p })
    }

    /// Largest entry of `(r P)(l; Q) − I` and `(l; Q)(r P) − I`.
    pub fn inverse_residual(&self) -> f64 {
        let m = self.r.len();
        let mut rp = DMatrix::zeros(m, m);
        let mut lq = DMatrix::zeros(m, m);
        rp.set_column(0, &self.r);
        lq.set_row(0, &self.l.transpose());
        if m > 1 {
            rp.columns_mut(1, m - 1).copy_from(&self.p);
            lq.rows_mut(1, m - 1).copy_from(&self.q);
        }
        let id = DMatrix::<f64>::identity(m, m);
        (&rp * &lq - &id).amax().max((&lq * &rp - &id).amax())
    }
}

/// Outcome of the regular-contact test at a point of the critical manifold.
#[derive(Clone, Debug)]
pub struct ContactReport {
    pub rank_dfn: usize,
    pub rank_df: usize,
    /// `l · (D²f(Nr, Nr) + Df DN(Nr, r))`.
    pub nondegeneracy: f64,
    /// `N r (l Df G(z, 0))`.
    pub slow_regularity: DVector<f64>,
    pub frame: Option<ContactFrame>,
    pub is_contact: bool,
}

/// Tests the rank, transversality, nondegeneracy and slow-regularity
/// conditions of a regular contact point.
pub fn check_regular_contact(spec: &FastSlowMapSpec, z: &[f64], tol: &Tolerances) -> Result<ContactReport> {
    let fz = spec.f_at(z, tol)?.norm();
    if fz > tol.manifold {
        return Err(Error::Precondition(format!(
            "point is not on the critical manifold: |f(z)| = {fz:e}"
        )));
    }
    let (n, m) = (spec.n(), spec.fast_dim());
    let h = spec.local(z, tol)?;
    let df = spec.df_at(z, tol)?;
    let nm = spec.n_at(z, tol)?;
    let dfn = &df * &nm;
    let rank_dfn = linalg::rank(&dfn, tol.rank);
    let rank_df = linalg::rank(&df, tol.rank);
    if rank_dfn + 1 != m {
        return Ok(ContactReport {
            rank_dfn,
            rank_df,
            nondegeneracy: 0.0,
            slow_regularity: DVector::zeros(n),
            frame: None,
            is_contact: false,
        });
    }
    let frame = ContactFrame::from_dfn(&dfn)?;
    let nr = &nm * &frame.r;
    let mut c = DVector::zeros(m);
    for i in 0..m {
        let mut acc = 0.0;
        for a in 0..n {
            let dfa = spec.df_jet(i, a);
            for b in 0..n {
                let d2 = dfa.partial(b)?.eval(&h);
                acc += d2 * nr[b] * nr[a];
            }
            for j in 0..m {
                for b in 0..n {
                    let dn = spec.n_entry(a, j).partial(b)?.eval(&h);
                    acc += df[(i, a)] * dn * nr[b] * frame.r[j];
                }
            }
        }
        c[i] = acc;
    }
    let nondegeneracy = frame.l.dot(&c);
    let g0 = spec.g_at(z, 0.0, tol)?;
    let s = frame.l.dot(&(&df * g0));
    let slow_regularity = &nr * s;
    let is_contact = rank_df == m && nondegeneracy.abs() >= tol.floor && slow_regularity.norm() >= tol.floor;
    Ok(ContactReport { rank_dfn, rank_df, nondegeneracy, slow_regularity, frame: Some(frame), is_contact })
}

/// The map in coordinates `(x, u, w, ε)` where the critical manifold is
/// `{u = 0, w = 0}` and the fast block is split along the contact direction.
#[derive(Clone, Debug)]
pub struct ContactNormalForm {
    pub k: usize,
    pub fast_dim: usize,
    pub order: u32,
    pub frame: ContactFrame,
    /// `y = K(x, v)` solving `f(x, K(x, v)) = v`, in the variables `(x, v)`.
    pub k_inverse: JetVector,
    /// `Ĥ` in the `n + 1` variables `(x, u, w, ε)`; the last component is ε.
    pub map: JetVector,
    /// Largest violation of `Ĥ(x, 0, 0, 0) = (x, 0, 0, 0)` and of the block
    /// structure of the Jacobian at the origin.
    pub structure_residual: f64,
    /// `N^x` (first `k` rows of `N`) at the contact point.
    pub n_x0: DMatrix<f64>,
    /// `Df N` at the contact point.
    pub dfn0: DMatrix<f64>,
    /// `G^x(0, 0)`.
    pub g_x0: DVector<f64>,
    /// `l Df G(0, 0)`.
    pub l_df_g0: f64,
}

fn var_vector(num_vars: usize, order: u32, vars: std::ops::Range<usize>) -> Vec<Jet> {
    vars.map(|i| Jet::var(num_vars, order, i)).collect()
}

/// Rectifies the critical manifold and splits the fast coordinates at the
/// base point, which must be a regular contact point. The last `n − k`
/// coordinates must be solvable from `v = f(x, y)`.
pub fn cm_normal_form_transform(spec: &FastSlowMapSpec, tol: &Tolerances) -> Result<ContactNormalForm> {
    let (n, k, m, r) = (spec.n(), spec.k(), spec.fast_dim(), spec.order());
    let base = spec.base_point().to_vec();
    let report = check_regular_contact(spec, &base, tol)?;
    if !report.is_contact {
        return Err(Error::Precondition(format!(
            "base point is not a regular contact point (rank Df N = {}, rank Df = {}, nondegeneracy {:e}, |slow regularity| {:e})",
            report.rank_dfn,
            report.rank_df,
            report.nondegeneracy,
            report.slow_regularity.norm()
        )));
    }
    let frame = report.frame.expect("contact points carry a frame");
    let zero = vec![0.0; n];
    let df_jets = spec.df_jet_matrix();
    let df0 = df_jets.eval(&zero);
    let dyf0 = df0.columns(k, m).into_owned();
    let dyf0_inv = linalg::inverse(&dyf0, "D_y f").map_err(|_| {
        Error::Precondition(format!(
            "D_y f is singular at the contact point; reorder the variables so that the last {m} coordinates can be solved from f"
        ))
    })?;

    // Newton iteration on jets for y = K(x, v)
    let dyf_jets = crate::jet::JetMatrix::from_fn(m, m, |i, j| df_jets.get(i, k + j).clone());
    let mut lin = DMatrix::zeros(m, n);
    lin.columns_mut(0, k).copy_from(&(-&dyf0_inv * df0.columns(0, k)));
    lin.columns_mut(k, m).copy_from(&dyf0_inv);
    let mut kinv = JetVector::linear(&lin, r);
    let v_vars = JetVector::new(var_vector(n, r, k..n))?;
    let f = spec.f_jets();
    let scale = f.max_abs().max(1.0);
    let mut resid = f64::INFINITY;
    for _ in 0..12 {
        let mut inner = var_vector(n, r, 0..k);
        inner.extend(kinv.iter().cloned());
        let inner = JetVector::new(inner)?;
        let fk = &f.compose(&inner)? - &v_vars;
        resid = fk.max_abs();
        if resid <= 1e-14 * scale {
            break;
        }
        let jinv = dyf_jets.compose(&inner)?.inverse()?;
        kinv = &kinv - &jinv.mul_vec(&fk);
    }
    if resid > 1e-12 * scale {
        return Err(Error::NoConvergence { iterations: 12, residual: resid });
    }

    // σ(x, u, w, ε) = (x, K(x, r u + P w), ε)
    let nv = n + 1;
    let mut v_of_uw = var_vector(nv, r, 0..k);
    for j in 0..m {
        let mut vj = Jet::var(nv, r, k).scale(frame.r[j]);
        for c in 0..m - 1 {
            vj = &vj + &Jet::var(nv, r, k + 1 + c).scale(frame.p[(j, c)]);
        }
        v_of_uw.push(vj);
    }
    let v_of_uw = JetVector::new(v_of_uw)?;
    let mut sigma = var_vector(nv, r, 0..k);
    for kc in kinv.iter() {
        sigma.push(jet_compose(kc, &v_of_uw)?);
    }
    sigma.push(Jet::var(nv, r, n));
    let sigma = JetVector::new(sigma)?;
    let zbar = spec.extended_map_jet().compose(&sigma)?;
    let zbar_n = JetVector::new(zbar.components()[..n].to_vec())?;
    let fz = f.compose(&zbar_n)?;
    let mut comps: Vec<Jet> = zbar.components()[..k].to_vec();
    let mut u = Jet::zero(nv, r);
    for j in 0..m {
        u = &u + &fz.get(j).scale(frame.l[j]);
    }
    comps.push(u);
    for c in 0..m - 1 {
        let mut w = Jet::zero(nv, r);
        for j in 0..m {
            w = &w + &fz.get(j).scale(frame.q[(c, j)]);
        }
        comps.push(w);
    }
    comps.push(Jet::var(nv, r, n));
    let map = JetVector::new(comps)?;

    // critical manifold inside {u = w = 0}: Ĥ(x, 0, 0, 0) = (x, 0, 0, 0)
    let mut structure_residual: f64 = 0.0;
    for (i, c) in map.iter().enumerate().take(n) {
        let d = c - &Jet::var(nv, r, i);
        for (idx, val) in d.terms() {
            if idx.exps()[k..].iter().all(|&e| e == 0) {
                structure_residual = structure_residual.max(val.abs());
            }
        }
    }
    let jac = map.linear_part();
    let dfn0 = &df0 * spec.n_jet_matrix().eval(&zero);
    for i in k..n {
        for j in 0..k {
            structure_residual = structure_residual.max(jac[(i, j)].abs());
        }
    }
    for j in k + 1..n {
        structure_residual = structure_residual.max(jac[(k, j)].abs());
        structure_residual = structure_residual.max(jac[(j, k)].abs());
    }
    structure_residual = structure_residual.max((jac[(k, k)] - 1.0).abs());
    if structure_residual > 1e-9 {
        return Err(Error::Internal(format!(
            "transformed map lacks the contact normal-form structure (residual {structure_residual:e})"
        )));
    }
    let nm0 = spec.n_jet_matrix().eval(&zero);
    let g0 = spec.g_at(&base, 0.0, tol)?;
    Ok(ContactNormalForm {
        k,
        fast_dim: m,
        order: r,
        l_df_g0: frame.l.dot(&(&df0 * &g0)),
        frame,
        k_inverse: kinv,
        map,
        structure_residual,
        n_x0: nm0.rows(0, k).into_owned(),
        dfn0,
        g_x0: g0.rows(0, k).into_owned(),
    })
}

/// Center-manifold graph and the restricted `(k+1)`-dimensional map, in
/// the variables `ξ = (x, u, ε)`.
#[derive(Clone, Debug)]
pub struct CenterManifoldData {
    pub k: usize,
    pub order: u32,
    /// `w = W(x, u, ε)`, one jet per stable/unstable fast direction.
    pub w: Vec<Jet>,
    /// `(x, u) ↦ Ĥ^{x,u}(x, u, W(x, u, ε), ε)`.
    pub restricted_map: JetVector,
    /// `Ñ = (Ñ^x, Ñ^u)` with `f̃ = u`.
    pub restricted_n: JetVector,
    pub restricted_f: Jet,
    pub restricted_g: JetVector,
    /// Largest coefficient of `Ĥ^w(ξ, W) − W(Ĥ^{x,u}(ξ, W), ε)`.
    pub invariance_residual: f64,
    /// Largest coefficient of `W(x, 0, 0)`.
    pub graph_on_critical: f64,
    /// Largest coefficient of the restricted layer map moving points of `{u = 0}`.
    pub critical_residual: f64,
    /// Eigenvalues `λ_j` of `Q Df N P`.
    pub lambdas: Vec<Complex64>,
    /// `1 + Ñ^u(0, 0)`.
    pub multiplier: f64,
    /// `|Ñ(0,0) − (N^x(r + P W_0), l Df N (r + P W_0))|` with `W_0 = ∂W/∂u(0)`.
    pub n_closed_discrepancy: f64,
    /// `|G̃(0,0,0) − (G^x, l Df G)|`.
    pub g_closed_discrepancy: f64,
}

impl CenterManifoldData {
    /// The restricted map with `ε ↦ ε` appended.
    pub fn extended_map(&self) -> JetVector {
        let mut comps = self.restricted_map.components().to_vec();
        comps.push(Jet::var(self.k + 2, self.order, self.k + 1));
        JetVector::new(comps).expect("consistent shapes")
    }
}

/// `(x, u, W(ξ), ε)` as a map of `ξ`.
fn lift_graph(k: usize, order: u32, w: &[Jet]) -> Result<JetVector> {
    let nv = k + 2;
    let mut comps = var_vector(nv, order, 0..k + 1);
    comps.extend(w.iter().cloned());
    comps.push(Jet::var(nv, order, k + 1));
    JetVector::new(comps)
}

fn subvector(v: &JetVector, range: std::ops::Range<usize>) -> Result<JetVector> {
    JetVector::new(v.components()[range].to_vec())
}

/// Solves the invariance equation for the center-manifold graph degree by
/// degree and restricts the map to it.
pub fn center_manifold_restricted_map(
    nf: &ContactNormalForm,
    order: u32,
    tol: &Tolerances,
) -> Result<CenterManifoldData> {
    if order > nf.order || order < 2 {
        return Err(Error::Precondition(format!("order must lie in 2..={}", nf.order)));
    }
    let (k, m) = (nf.k, nf.fast_dim);
    let mw = m - 1;
    let nv = k + 2;
    let h = nf.map.map(|c| c.with_order(order));
    let jac = h.linear_part();
    let b = jac.view((k + 1, k + 1), (mw, mw)) - DMatrix::<f64>::identity(mw, mw);
    let lambdas = linalg::eigenvalues(&b);
    for lam in &lambdas {
        if lam.norm() < 1e-8 || ((Complex64::new(1.0, 0.0) + lam).norm() - 1.0).abs() <= tol.unit {
            return Err(Error::Precondition(format!(
                "Q Df N P is not regular off the unit circle: eigenvalue {lam} gives multiplier {}",
                Complex64::new(1.0, 0.0) + lam
            )));
        }
    }
    let h_xu = subvector(&h, 0..k + 1)?;
    let h_w: Vec<Jet> = h.components()[k + 1..k + 1 + mw].to_vec();
    let ibm = DMatrix::<f64>::identity(mw, mw) + &b;

    let invariance_defect = |w: &[Jet]| -> Result<(Vec<Jet>, JetVector)> {
        let inner = lift_graph(k, order, w)?;
        let mut l_comps = h_xu.compose(&inner)?.into_components();
        l_comps.push(Jet::var(nv, order, k + 1));
        let l = JetVector::new(l_comps)?;
        let mut defect = Vec::with_capacity(mw);
        for (c, hw) in h_w.iter().enumerate() {
            defect.push(&jet_compose(hw, &inner)? - &jet_compose(&w[c], &l)?);
        }
        Ok((defect, l))
    };

    let mut w: Vec<Jet> = vec![Jet::zero(nv, order); mw];
    if mw > 0 {
        for d in 1..=order {
            let (defect, l) = invariance_defect(&w)?;
            let l1 = JetVector::linear(&l.linear_part(), order);
            let basis = monomials_of_degree(nv, d);
            let nb = basis.len();
            let mut op = DMatrix::zeros(mw * nb, mw * nb);
            for (ai, alpha) in basis.iter().enumerate() {
                let mut mono = Jet::zero(nv, order);
                mono.add_term(alpha.clone(), 1.0);
                let moved = jet_compose(&mono, &l1)?;
                for c in 0..mw {
                    let col = c * nb + ai;
                    for c2 in 0..mw {
                        op[(c2 * nb + ai, col)] += ibm[(c2, c)];
                    }
                    for (bi, beta) in basis.iter().enumerate() {
                        op[(c * nb + bi, col)] -= moved.coeff_of(beta);
                    }
                }
            }
            let rhs = DVector::from_fn(mw * nb, |row, _| -defect[row / nb].coeff_of(&basis[row % nb]));
            let sol = linalg::solve(&op, &rhs, &format!("degree-{d} invariance equation"))?;
            for (c, wc) in w.iter_mut().enumerate() {
                for (ai, alpha) in basis.iter().enumerate() {
                    wc.add_term(alpha.clone(), sol[c * nb + ai]);
                }
            }
        }
    }
    let (defect, _) = invariance_defect(&w)?;
    let invariance_residual = defect.iter().fold(0.0f64, |acc, d| acc.max(d.max_abs()));
    let mut graph_on_critical: f64 = 0.0;
    for wc in &w {
        for (idx, c) in wc.terms() {
            if idx.get(k) == 0 && idx.get(k + 1) == 0 {
                graph_on_critical = graph_on_critical.max(c.abs());
            }
        }
    }

    let restricted_map = h_xu.compose(&lift_graph(k, order, &w)?)?;
    let mut n_comps = Vec::with_capacity(k + 1);
    let mut g_comps = Vec::with_capacity(k + 1);
    let mut critical_residual: f64 = 0.0;
    for (i, c) in restricted_map.iter().enumerate() {
        let layer = &c.at_var_zero(k + 1) - &Jet::var(nv, order, i);
        let (q, rem) = layer.div_by_var(k);
        critical_residual = critical_residual.max(rem.max_abs());
        n_comps.push(q);
        let (g, _) = (c - &c.at_var_zero(k + 1)).div_by_var(k + 1);
        g_comps.push(g);
    }
    let restricted_n = JetVector::new(n_comps)?;
    let restricted_g = JetVector::new(g_comps)?;
    let restricted_f = Jet::var(nv, order, k);
    let n0 = restricted_n.constant_part();
    let multiplier = 1.0 + n0[k];

    let w0 = DVector::from_iterator(mw, w.iter().map(|wc| wc.coeff_of(&MultiIndex::unit(nv, k))));
    let dir = &nf.frame.r + &nf.frame.p * &w0;
    let nx_closed = &nf.n_x0 * &dir;
    let nu_closed = nf.frame.l.dot(&(&nf.dfn0 * &dir));
    let mut n_closed_discrepancy = (n0[k] - nu_closed).abs();
    for i in 0..k {
        n_closed_discrepancy = n_closed_discrepancy.max((n0[i] - nx_closed[i]).abs());
    }
    let g0 = restricted_g.constant_part();
    let mut g_closed_discrepancy = (g0[k] - nf.l_df_g0).abs();
    for i in 0..k {
        g_closed_discrepancy = g_closed_discrepancy.max((g0[i] - nf.g_x0[i]).abs());
    }
    Ok(CenterManifoldData {
        k,
        order,
        w,
        restricted_map,
        restricted_n,
        restricted_f,
        restricted_g,
        invariance_residual,
        graph_on_critical,
        critical_residual,
        lambdas,
        multiplier,
        n_closed_discrepancy,
        g_closed_discrepancy,
    })
}

/// Embedding of the restricted map and the coefficient identities checked on it.
#[derive(Clone, Debug)]
pub struct CenterEmbedding {
    pub embedding: EmbeddingResult,
    /// `|∂V/∂u(0) − Ñ(0,0)|` and `|∂V/∂ε(0) − G̃(0,0,0)|`.
    pub linear_discrepancy: f64,
    /// Largest pure-`x` coefficient of `V(x, u, 0)`.
    pub pure_x_terms: f64,
    /// `max_m |∂𝔑^u/∂x_m(0,0) − ∂Ñ^u/∂x_m(0,0)|`.
    pub partials_discrepancy: f64,
    /// Largest violation of the closed-form quadratic coefficients of `V_u`.
    pub quadratic_discrepancy: f64,
    /// `u²` coefficient of `V_u` from the generic solve.
    pub uu_generic: f64,
    /// The same coefficient from `b_uu − ½ Σ_s b_{x_s u} Ñ^x_s(0,0)`.
    pub uu_closed: f64,
}

/// Embeds the restricted map and verifies the linear part, the factor
/// structure `V(x, u, 0) = 𝔑 u` and the quadratic coefficient identities
/// of the `u` component.
pub fn embed_on_center_manifold(cm: &CenterManifoldData, order: u32) -> Result<CenterEmbedding> {
    const TOL: f64 = 1e-8;
    if order > cm.order {
        return Err(Error::Precondition(format!("order must be at most {}", cm.order)));
    }
    let (k, nv) = (cm.k, cm.k + 2);
    let h = cm.extended_map().map(|c| c.with_order(order));
    let embedding = takens_embed_unipotent(&h, order)?;
    let v = &embedding.v;
    let unit = |i: usize| MultiIndex::unit(nv, i);
    let n0 = cm.restricted_n.constant_part();
    let g0 = cm.restricted_g.constant_part();

    // log(I + Λ) = Λ − Λ²/2 and Λ² only touches the ε column, through Ñ(0) G̃^u(0)
    let mut linear_discrepancy: f64 = 0.0;
    for i in 0..=k {
        let eps_col = g0[i] - 0.5 * n0[i] * g0[k];
        linear_discrepancy = linear_discrepancy.max((v.get(i).coeff_of(&unit(k)) - n0[i]).abs());
        linear_discrepancy = linear_discrepancy.max((v.get(i).coeff_of(&unit(k + 1)) - eps_col).abs());
    }
    let mut pure_x_terms: f64 = 0.0;
    for i in 0..=k {
        for (idx, c) in v.get(i).terms() {
            if idx.get(k) == 0 && idx.get(k + 1) == 0 {
                pure_x_terms = pure_x_terms.max(c.abs());
            }
        }
    }
    let vu = v.get(k);
    let hu = cm.restricted_map.get(k);
    let xu = |s: usize| unit(s).plus(&unit(k));
    let mut partials_discrepancy: f64 = 0.0;
    for s in 0..k {
        partials_discrepancy = partials_discrepancy.max((vu.coeff_of(&xu(s)) - hu.coeff_of(&xu(s))).abs());
    }
    let mut quadratic_discrepancy = partials_discrepancy;
    for i in 0..k {
        for j in i..k {
            quadratic_discrepancy = quadratic_discrepancy.max(vu.coeff_of(&unit(i).plus(&unit(j))).abs());
        }
    }
    let uu = unit(k).plus(&unit(k));
    let uu_generic = vu.coeff_of(&uu);
    let uu_closed = hu.coeff_of(&uu) - 0.5 * (0..k).map(|s| hu.coeff_of(&xu(s)) * n0[s]).sum::<f64>();
    quadratic_discrepancy = quadratic_discrepancy.max((uu_generic - uu_closed).abs());

    let checks = [
        ("linear part", linear_discrepancy),
        ("factor structure V(x, u, 0) = N u", pure_x_terms),
        ("partials identity for N^u", partials_discrepancy),
        ("quadratic coefficient identities", quadratic_discrepancy),
    ];
    for (name, value) in checks {
        if value > TOL {
            return Err(Error::EmbeddingStructure(format!("{name} fails: discrepancy {value:e}")));
        }
    }
    Ok(CenterEmbedding {
        embedding,
        linear_discrepancy,
        pure_x_terms,
        partials_discrepancy,
        quadratic_discrepancy,
        uu_generic,
        uu_closed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapspec::parse_mapspec;

    fn spec(text: &str) -> FastSlowMapSpec {
        parse_mapspec(text).unwrap().spec
    }

    fn planar(f: &str, g: &str) -> FastSlowMapSpec {
        spec(&format!(
            "dims 2 1\norder 4\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n{f}[G 1]\n0 0 0 : 0\n[G 2]\n{g}"
        ))
    }

    fn fold() -> FastSlowMapSpec {
        planar("2 0 : 1\n0 1 : -1\n", "0 0 0 : -1\n")
    }

    fn transcritical(lam: f64) -> FastSlowMapSpec {
        spec(&format!(
            "dims 2 1\norder 4\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n2 0 : 1\n0 2 : -1\n\
             [G 1]\n0 0 0 : {lam}\n[G 2]\n0 0 0 : 1\n"
        ))
    }

    fn pitchfork(lam: f64, g0: f64) -> FastSlowMapSpec {
        spec(&format!(
            "dims 2 1\norder 4\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n1 1 : 1\n3 0 : -1\n\
             [G 1]\n0 0 0 : {lam}\n[G 2]\n0 0 0 : {g0}\n"
        ))
    }

    /// Fold direction `x1`, slow `x2`, stable fast direction `x3`.
    const CONTACT_3D: &str = "dims 3 1\norder 4\nbase 0 0 0\n\
        [N 1 1]\n0 0 0 : 1\n0 0 1 : 0.2\n[N 2 1]\n1 0 0 : 0.1\n[N 3 2]\n0 0 0 : 1\n\
        [f 1]\n2 0 0 : 1\n0 1 0 : -1\n1 0 1 : 0.4\n3 0 0 : 0.3\n\
        [f 2]\n0 0 1 : -0.5\n1 1 0 : 0.3\n2 0 0 : 0.2\n\
        [G 1]\n0 0 0 0 : 0.1\n0 1 0 0 : 0.2\n[G 2]\n0 0 0 0 : -1\n1 0 0 0 : 0.3\n0 0 0 1 : 0.1\n\
        [G 3]\n1 0 0 0 : 0.2\n";

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn planar_examples() {
        let c = classify_planar_singularity(&fold(), &tol()).unwrap();
        assert_eq!(c.case, PlanarCase::Fold);
        assert_eq!((c.partials.fxx, c.partials.fy, c.partials.g0), (2.0, -1.0, -1.0));
        assert!(c.oriented);

        let c = classify_planar_singularity(&planar("2 0 : 1\n0 2 : -1\n", "0 0 0 : 1\n"), &tol()).unwrap();
        assert_eq!(c.case, PlanarCase::Transcritical);
        let k = &c.coefficients;
        assert_eq!((k.alpha, k.beta, k.gamma), (1.0, 0.0, -1.0));
        assert_eq!(4.0 * k.alpha * k.gamma - 4.0 * k.beta * k.beta, -4.0);

        let c = classify_planar_singularity(&planar("1 1 : 1\n3 0 : -1\n", "0 0 0 : 1\n"), &tol()).unwrap();
        assert_eq!(c.case, PlanarCase::Pitchfork);
        assert_eq!((c.coefficients.alpha, c.coefficients.gamma), (1.0, -1.0));
        assert!(c.oriented);
    }

    #[test]
    fn degenerate_planar_points_are_reported() {
        // cusp-like: f = x^3 - y has f_xx = 0
        let err = classify_planar_singularity(&planar("3 0 : 1\n0 1 : -1\n", "0 0 0 : -1\n"), &tol()).unwrap_err();
        match err {
            Error::Degenerate(msg) => assert!(msg.contains("f_xx"), "{msg}"),
            e => panic!("unexpected {e:?}"),
        }
        let err = classify_planar_singularity(&planar("2 0 : 1\n0 1 : -1\n", "0 0 0 : 0\n"), &tol()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(ref m) if m.contains("g = 0")), "{err}");
    }

    #[test]
    fn threshold_lambda_examples() {
        for lam in [0.5, 2.0, -0.3] {
            let c = classify_planar_singularity(&transcritical(lam), &tol()).unwrap();
            assert!((threshold_lambda(&c.coefficients).unwrap() - lam).abs() < 1e-15);
            let c = classify_planar_singularity(&pitchfork(lam, 1.0), &tol()).unwrap();
            assert!((threshold_lambda(&c.coefficients).unwrap() - lam).abs() < 1e-15);
        }
        let c = classify_planar_singularity(&transcritical(0.0), &tol()).unwrap();
        assert_eq!(threshold_lambda(&c.coefficients).unwrap(), 0.0);
        let fold = classify_planar_singularity(&fold(), &tol()).unwrap();
        assert!(threshold_lambda(&fold.coefficients).is_err());
    }

    #[test]
    fn transcritical_lambda_ignores_drift_magnitude() {
        for g0 in [0.5, 1.0, 3.0, -2.0] {
            let c = NormalFormCoefficients {
                case: PlanarCase::Transcritical,
                alpha: 1.0,
                beta: 0.3,
                gamma: -0.5,
                delta: 0.0,
                g0,
            };
            let want = 0.3 * g0.signum() / (0.09f64 + 0.5).sqrt();
            assert!((threshold_lambda(&c).unwrap() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn planar_embeddings_preserve_case() {
        for (s, case) in [
            (fold(), PlanarCase::Fold),
            (transcritical(0.5), PlanarCase::Transcritical),
            (pitchfork(0.5, 1.0), PlanarCase::Pitchfork),
        ] {
            let e = embed_2d(&s, &tol()).unwrap();
            assert_eq!(e.map_case.case, case);
            assert_eq!(e.field_case.case, case);
            assert!((e.k0 - 1.0).abs() < 1e-8);
            assert!(e.factor_residual < 1e-8);
            assert!(e.embedding.residual < 1e-9);
        }
    }

    #[test]
    fn fold_is_a_regular_contact_point() {
        let rep = check_regular_contact(&fold(), &[0.0, 0.0], &tol()).unwrap();
        assert!(rep.is_contact);
        assert_eq!(rep.rank_dfn, 0);
        assert_eq!(rep.nondegeneracy, 2.0);
        let rep = check_regular_contact(&fold(), &[-0.5, 0.25], &tol()).unwrap();
        assert!(!rep.is_contact);
        assert_eq!(rep.rank_dfn, 1);
    }

    #[test]
    fn fold_rectification_inverts_by_hand() {
        let nf = cm_normal_form_transform(&fold(), &tol()).unwrap();
        // v = x^2 - y  ⇒  y = x^2 - v
        let want = Jet::from_terms(2, 4, [(vec![2, 0], 1.0), (vec![0, 1], -1.0)]).unwrap();
        assert!(nf.k_inverse.get(0).max_abs_diff(&want) < 1e-14);
        let cm = center_manifold_restricted_map(&nf, 4, &tol()).unwrap();
        assert!(cm.w.is_empty());
        assert!(cm.restricted_map.max_abs_diff(&subvector(&nf.map, 0..2).unwrap()) == 0.0);
        assert!((cm.multiplier - 1.0).abs() < 1e-14);
        let emb = embed_on_center_manifold(&cm, 4).unwrap();
        assert!(emb.quadratic_discrepancy < 1e-12);
    }

    #[test]
    fn three_dimensional_contact_point() {
        let s = spec(CONTACT_3D);
        let c = crate::fastslow::classify_point(&s, &[0.0; 3], &tol()).unwrap();
        assert_eq!(c.tag, crate::fastslow::SingularityTag::FoldContact);
        let rep = check_regular_contact(&s, &[0.0; 3], &tol()).unwrap();
        assert!(rep.is_contact);
        assert_eq!((rep.rank_dfn, rep.rank_df), (1, 2));
        // D²f = f1_x1x1 = 2 and Df DN = ∂f1/∂x2 · ∂N_21/∂x1 = -0.1
        assert!((rep.nondegeneracy - 1.9).abs() < 1e-14);
        let frame = rep.frame.unwrap();
        assert!(frame.inverse_residual() < 1e-12);
        let dfn = s.dfn_at(&[0.0; 3], &tol()).unwrap();
        assert!((frame.l.transpose() * &dfn).amax() < 1e-12);
        assert!((&dfn * &frame.r).amax() < 1e-12);
    }

    #[test]
    fn three_dimensional_center_manifold() {
        let s = spec(CONTACT_3D);
        let nf = cm_normal_form_transform(&s, &tol()).unwrap();
        assert!(nf.structure_residual < 1e-12);
        // K really inverts v = f(x, y) near the origin
        let (x, v) = (0.03, [0.02, -0.01]);
        let y = nf.k_inverse.eval(&[x, v[0], v[1]]);
        let fv = s.f_jets().eval(&[x, y[0], y[1]]);
        assert!((fv[0] - v[0]).abs() < 1e-8 && (fv[1] - v[1]).abs() < 1e-8);

        let cm = center_manifold_restricted_map(&nf, 4, &tol()).unwrap();
        assert!(cm.invariance_residual <= 1e-10, "{}", cm.invariance_residual);
        assert!(cm.graph_on_critical < 1e-12);
        assert!(cm.critical_residual < 1e-12);
        assert!((cm.multiplier - 1.0).abs() <= 1e-10);
        assert!(cm.n_closed_discrepancy < 1e-12);
        assert!(cm.g_closed_discrepancy < 1e-12);
        assert_eq!(cm.lambdas.len(), 1);
        assert!((cm.lambdas[0].re + 0.5).abs() < 1e-12);

        let emb = embed_on_center_manifold(&cm, 4).unwrap();
        assert!(emb.quadratic_discrepancy <= 1e-8);
        // the correction term is not zero, so the sign of the identity matters
        let hu = cm.restricted_map.get(1);
        let corr = hu.coeff(&[1, 1, 0]) * cm.restricted_n.get(0).constant_term();
        assert!(corr.abs() > 1e-3, "{corr}");
        assert!((emb.uu_generic - (hu.coeff(&[0, 2, 0]) + 0.5 * corr)).abs() > 1e-4);
    }

    #[test]
    fn singular_coordinate_split_is_refused() {
        // slow variable first: D_y f is singular at the fold
        let text = "dims 3 1\norder 4\nbase 0 0 0\n[N 2 1]\n0 0 0 : 1\n[N 3 2]\n0 0 0 : 1\n\
            [f 1]\n0 2 0 : 1\n1 0 0 : -1\n[f 2]\n0 0 1 : -0.5\n\
            [G 1]\n0 0 0 0 : -1\n[G 2]\n0 0 0 0 : 0\n[G 3]\n0 0 0 0 : 0\n";
        let err = cm_normal_form_transform(&spec(text), &tol()).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("reorder")), "{err}");
    }

    #[test]
    fn decoupled_linear_stable_block_has_flat_graph() {
        let text = "dims 3 1\norder 4\nbase 0 0 0\n[N 1 1]\n0 0 0 : 1\n[N 3 2]\n0 0 0 : 1\n\
            [f 1]\n2 0 0 : 1\n0 1 0 : -1\n[f 2]\n0 0 1 : -0.5\n\
            [G 1]\n0 0 0 0 : 0\n[G 2]\n0 0 0 0 : -1\n[G 3]\n0 0 0 0 : 0\n";
        let nf = cm_normal_form_transform(&spec(text), &tol()).unwrap();
        let cm = center_manifold_restricted_map(&nf, 4, &tol()).unwrap();
        assert!(cm.w[0].max_abs() < 1e-14);
    }
}
