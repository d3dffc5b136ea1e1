//! Fast-slow maps `z ↦ z + N(z) f(z) + ε G(z, ε)` and their singular theory:
//! nontrivial multipliers, classification of critical-manifold points,
//! the oblique projection onto the critical manifold and the reduced map.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jet::{Jet, JetMatrix, JetVector};
use crate::linalg;
use crate::tolerance::Tolerances;

/// A fast-slow map given by polynomial jets about `base_point`.
///
/// All jets are expansions in the displacement `h = z − base_point`; `G`
/// carries ε as an extra trailing variable. The stored polynomials are
/// taken as the exact map, so derivatives computed from them are treated as
/// exact to the full order.
#[derive(Clone, Debug, PartialEq)]
pub struct FastSlowMapSpec {
    n: usize,
    k: usize,
    order: u32,
    n_mat: Vec<Vec<Jet>>,
    f: JetVector,
    g: JetVector,
    base: Vec<f64>,
    df: Vec<Vec<Jet>>,
}

fn exact_partial(j: &Jet, var: usize) -> Jet {
    j.partial(var).expect("variable in range").with_reliable_order(j.order())
}

impl FastSlowMapSpec {
    /// Validates shapes and checks that `N(base_point)` has full column
    /// rank (the map's fast directions must be independent).
    pub fn new(
        n: usize,
        k: usize,
        order: u32,
        base: Vec<f64>,
        n_mat: Vec<Vec<Jet>>,
        f: Vec<Jet>,
        g: Vec<Jet>,
    ) -> Result<Self> {
        if k >= n {
            return Err(Error::Structure(format!("slow dimension k={k} must be below n={n}")));
        }
        if order < 3 {
            return Err(Error::Structure(format!("order must be at least 3, got {order}")));
        }
        let m = n - k;
        if base.len() != n {
            return Err(Error::Structure(format!("base point has {} entries, need {n}", base.len())));
        }
        if n_mat.len() != n || n_mat.iter().any(|row| row.len() != m) {
            return Err(Error::Structure(format!("N must be {n}x{m}")));
        }
        for (i, row) in n_mat.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if e.num_vars() != n || e.order() != order {
                    return Err(Error::Structure(format!(
                        "N[{},{}] must be a jet in {n} variables of order {order}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        if f.len() != m {
            return Err(Error::Structure(format!("f needs {m} components, got {}", f.len())));
        }
        if g.len() != n {
            return Err(Error::Structure(format!("G needs {n} components, got {}", g.len())));
        }
        let f = JetVector::with_shape(f, n, order)
            .map_err(|_| Error::Structure(format!("f components must be jets in {n} variables of order {order}")))?;
        let g = JetVector::with_shape(g, n + 1, order).map_err(|_| {
            Error::Structure(format!("G components must be jets in {} variables of order {order}", n + 1))
        })?;
        let df = f
            .iter()
            .map(|fi| (0..n).map(|j| exact_partial(fi, j)).collect())
            .collect();
        let spec = FastSlowMapSpec { n, k, order, n_mat, f, g, base, df };
        let n0 = spec.n_matrix_local(&vec![0.0; n]);
        let rk = linalg::rank(&n0, 1e-9);
        if rk != m {
            return Err(Error::Assumption(format!(
                "N must have full column rank at the base point: rank {rk} < {m}"
            )));
        }
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of fast directions `n − k`.
    pub fn fast_dim(&self) -> usize {
        self.n - self.k
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn base_point(&self) -> &[f64] {
        &self.base
    }

    pub fn n_entry(&self, i: usize, j: usize) -> &Jet {
        &self.n_mat[i][j]
    }

    pub fn n_jets(&self) -> &[Vec<Jet>] {
        &self.n_mat
    }

    pub fn f_jets(&self) -> &JetVector {
        &self.f
    }

    pub fn g_jets(&self) -> &JetVector {
        &self.g
    }

    /// `∂f_i/∂z_j` as jets (exact for the polynomial map).
    pub fn df_jet(&self, i: usize, j: usize) -> &Jet {
        &self.df[i][j]
    }

    /// Displacement from the base point, checked against the trust radius.
    pub fn local(&self, z: &[f64], tol: &Tolerances) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(Error::Structure(format!("point has {} entries, need {}", z.len(), self.n)));
        }
        let h: Vec<f64> = z.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        let distance = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        if distance > tol.trust_radius {
            return Err(Error::Domain { distance, radius: tol.trust_radius });
        }
        Ok(h)
    }

    fn n_matrix_local(&self, h: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.fast_dim(), |i, j| self.n_mat[i][j].eval(h))
    }

    fn df_local(&self, h: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.fast_dim(), self.n, |i, j| self.df[i][j].eval(h))
    }

    fn with_eps(h: &[f64], eps: f64) -> Vec<f64> {
        let mut he = h.to_vec();
        he.push(eps);
        he
    }

    pub fn f_at(&self, z: &[f64], tol: &Tolerances) -> Result<DVector<f64>> {
        let h = self.local(z, tol)?;
        Ok(DVector::from_vec(self.f.eval(&h)))
    }

    pub fn df_at(&self, z: &[f64], tol: &Tolerances) -> Result<DMatrix<f64>> {
        let h = self.local(z, tol)?;
        Ok(self.df_local(&h))
    }

    pub fn n_at(&self, z: &[f64], tol: &Tolerances) -> Result<DMatrix<f64>> {
        let h = self.local(z, tol)?;
        Ok(self.n_matrix_local(&h))
    }

    pub fn g_at(&self, z: &[f64], eps: f64, tol: &Tolerances) -> Result<DVector<f64>> {
        let h = self.local(z, tol)?;
        Ok(DVector::from_vec(self.g.eval(&Self::with_eps(&h, eps))))
    }

    /// `Df(z) N(z)`, the fast-block linearization.
    pub fn dfn_at(&self, z: &[f64], tol: &Tolerances) -> Result<DMatrix<f64>> {
        let h = self.local(z, tol)?;
        Ok(self.df_local(&h) * self.n_matrix_local(&h))
    }

    /// One application of the map. Polynomial maps are evaluated anywhere;
    /// no trust-region check is made here so orbits may leave and re-enter.
    pub fn step(&self, z: &[f64], eps: f64) -> Vec<f64> {
        let h: Vec<f64> = z.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        let f = self.f.eval(&h);
        let nm = self.n_matrix_local(&h);
        let g = self.g.eval(&Self::with_eps(&h, eps));
        (0..self.n)
            .map(|i| {
                let nf: f64 = (0..self.fast_dim()).map(|j| nm[(i, j)] * f[j]).sum();
                z[i] + nf + eps * g[i]
            })
            .collect()
    }

    /// The same map re-expanded about another base point. Exact for the
    /// stored polynomials.
    pub fn shifted_to(&self, new_base: &[f64]) -> Result<FastSlowMapSpec> {
        if new_base.len() != self.n {
            return Err(Error::Structure("new base point has the wrong dimension".into()));
        }
        let c: Vec<f64> = new_base.iter().zip(&self.base).map(|(a, b)| a - b).collect();
        let ce = Self::with_eps(&c, 0.0);
        let n_mat = self
            .n_mat
            .iter()
            .map(|row| row.iter().map(|e| e.shift(&c)).collect())
            .collect();
        let f = self.f.iter().map(|e| e.shift(&c)).collect();
        let g = self.g.iter().map(|e| e.shift(&ce)).collect();
        FastSlowMapSpec::new(self.n, self.k, self.order, new_base.to_vec(), n_mat, f, g)
    }

    /// `N` as a matrix of jets in the local variables.
    pub fn n_jet_matrix(&self) -> JetMatrix {
        JetMatrix::from_fn(self.n, self.fast_dim(), |i, j| self.n_mat[i][j].clone())
    }

    /// `Df` as a matrix of jets in the local variables.
    pub fn df_jet_matrix(&self) -> JetMatrix {
        JetMatrix::from_fn(self.fast_dim(), self.n, |i, j| self.df[i][j].clone())
    }

    /// The extended map `(h, ε) ↦ (h + N f + ε G, ε)` as a jet in the
    /// `n + 1` local variables. Requires `f(base_point) = 0` for the result
    /// to fix the origin.
    pub fn extended_map_jet(&self) -> JetVector {
        let (n, r) = (self.n, self.order);
        let eps = Jet::var(n + 1, r, n);
        let mut comps = Vec::with_capacity(n + 1);
        for i in 0..n {
            let mut c = Jet::var(n + 1, r, i);
            for j in 0..self.fast_dim() {
                let nf = &self.n_mat[i][j] * &self.f[j];
                c = &c + &nf.extend_vars(1);
            }
            c = &c + &(&eps * &self.g[i]);
            comps.push(c);
        }
        comps.push(eps);
        JetVector::new(comps).expect("consistent shapes")
    }
}

/// Nontrivial multipliers at a point: eigenvalues of `I + Df N`.
#[derive(Clone, Debug)]
pub struct MultiplierSet {
    pub values: Vec<Complex64>,
    /// Columns are unit eigenvectors, one per value.
    pub eigen_basis: DMatrix<Complex64>,
}

/// Classification labels for points of the critical manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SingularityTag {
    NhAttracting,
    NhRepelling,
    NhSaddle,
    FoldContact,
    Flip,
    NeimarkSacker,
    MixedNonNh,
}

impl fmt::Display for SingularityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SingularityTag::NhAttracting => "NH_attracting",
            SingularityTag::NhRepelling => "NH_repelling",
            SingularityTag::NhSaddle => "NH_saddle",
            SingularityTag::FoldContact => "FoldContact",
            SingularityTag::Flip => "Flip",
            SingularityTag::NeimarkSacker => "NeimarkSacker",
            SingularityTag::MixedNonNh => "MixedNonNH",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingularityClass {
    pub tag: SingularityTag,
    pub superstable: bool,
    /// Nilpotency index of `Df N` when every multiplier equals 1.
    pub unipotent_index: Option<usize>,
}

impl fmt::Display for SingularityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag)?;
        if self.superstable {
            write!(f, " superstable")?;
        }
        if let Some(l) = self.unipotent_index {
            write!(f, " unipotent_index={l}")?;
        }
        Ok(())
    }
}

/// Oblique projection onto the tangent space of the critical manifold
/// along the fast fibers, and the reduced vector field it induces.
#[derive(Clone, Debug)]
pub struct ReducedData {
    pub projection: DMatrix<f64>,
    pub reduced_field: DVector<f64>,
    pub valid: bool,
}

/// Eigenvalues and eigenvectors of `I + Df(z) N(z)`.
pub fn nontrivial_multipliers(
    spec: &FastSlowMapSpec,
    z: &[f64],
    tol: &Tolerances,
) -> Result<MultiplierSet> {
    let m = spec.fast_dim();
    let a = DMatrix::identity(m, m) + spec.dfn_at(z, tol)?;
    let values = linalg::eigenvalues(&a);
    for mu in &values {
        let res = linalg::char_poly_residual(&a, *mu);
        if res > 1e-9 {
            return Err(Error::Internal(format!(
                "eigenvalue {mu} fails the characteristic polynomial check (residual {res:e})"
            )));
        }
    }
    let mut eigen_basis = DMatrix::zeros(m, m);
    for (j, mu) in values.iter().enumerate() {
        eigen_basis.set_column(j, &linalg::eigenvector(&a, *mu));
    }
    Ok(MultiplierSet { values, eigen_basis })
}

/// Smallest `l` with `‖M^l‖_F ≤ tol · max(1, ‖M‖_F)^l`, or `None` when no
/// `l` up to the dimension qualifies.
pub fn nilpotency_index(m: &DMatrix<f64>, tol: f64) -> Option<usize> {
    assert_eq!(m.nrows(), m.ncols(), "nilpotency index needs a square matrix");
    let dim = m.nrows();
    let scale = m.norm().max(1.0);
    let mut p = DMatrix::identity(dim, dim);
    for l in 1..=dim.max(1) {
        p = &p * m;
        if p.norm() <= tol * scale.powi(l as i32) {
            return Some(l);
        }
    }
    None
}

/// Classifies a point of the critical manifold by where its nontrivial
/// multipliers sit relative to the unit circle.
pub fn classify_point(
    spec: &FastSlowMapSpec,
    z: &[f64],
    tol: &Tolerances,
) -> Result<SingularityClass> {
    let fz = spec.f_at(z, tol)?;
    let res = fz.norm();
    if res > tol.manifold {
        return Err(Error::Precondition(format!(
            "point is not on the critical manifold: |f(z)| = {res:e} > {:e}",
            tol.manifold
        )));
    }
    let mults = nontrivial_multipliers(spec, z, tol)?;
    let vals = &mults.values;
    let superstable = vals.iter().any(|mu| mu.norm() <= tol.zero);
    let on_circle: Vec<Complex64> =
        vals.iter().copied().filter(|mu| (mu.norm() - 1.0).abs() <= tol.unit).collect();
    let tag = if on_circle.is_empty() {
        let inside = vals.iter().filter(|mu| mu.norm() < 1.0).count();
        if inside == vals.len() {
            SingularityTag::NhAttracting
        } else if inside == 0 {
            SingularityTag::NhRepelling
        } else {
            SingularityTag::NhSaddle
        }
    } else if on_circle.len() == 1 {
        let mu = on_circle[0];
        if (mu - 1.0).norm() <= tol.unit {
            SingularityTag::FoldContact
        } else if (mu + 1.0).norm() <= tol.unit {
            SingularityTag::Flip
        } else {
            SingularityTag::MixedNonNh
        }
    } else if on_circle.len() == 2
        && on_circle[0].im.abs() > tol.unit
        && (on_circle[0] - on_circle[1].conj()).norm() <= tol.unit
    {
        SingularityTag::NeimarkSacker
    } else {
        SingularityTag::MixedNonNh
    };
    // Defective unit multipliers are perturbed by about sqrt(machine eps)
    // per Jordan block size, so the unipotent test goes through the matrix.
    let dfn = spec.dfn_at(z, tol)?;
    let unipotent_index = nilpotency_index(&dfn, tol.nilp);
    Ok(SingularityClass { tag, superstable, unipotent_index })
}

/// `Π = I − N (Df N)^{-1} Df` and `Π G(z, 0)`. Returns `valid = false` with
/// zero matrices when `Df N` is singular.
pub fn reduced_data(spec: &FastSlowMapSpec, z: &[f64], tol: &Tolerances) -> Result<ReducedData> {
    let n = spec.n();
    let df = spec.df_at(z, tol)?;
    let nm = spec.n_at(z, tol)?;
    let dfn = &df * &nm;
    match linalg::inverse(&dfn, "Df N") {
        Ok(inv) => {
            let projection = DMatrix::identity(n, n) - &nm * inv * &df;
            let g0 = spec.g_at(z, 0.0, tol)?;
            let reduced_field = &projection * g0;
            Ok(ReducedData { projection, reduced_field, valid: true })
        }
        Err(_) => Ok(ReducedData {
            projection: DMatrix::zeros(n, n),
            reduced_field: DVector::zeros(n),
            valid: false,
        }),
    }
}

/// One step `z + ε Π G(z, 0)` of the reduced map.
pub fn reduced_map_step(
    spec: &FastSlowMapSpec,
    z: &[f64],
    eps: f64,
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    if eps < 0.0 {
        return Err(Error::Precondition(format!("eps must be nonnegative, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(z.to_vec());
    }
    let rd = reduced_data(spec, z, tol)?;
    if !rd.valid {
        let mults = nontrivial_multipliers(spec, z, tol)?;
        let list: Vec<String> = mults.values.iter().map(|m| format!("{m}")).collect();
        return Err(Error::Precondition(format!(
            "reduced map undefined: Df N is singular (multipliers {})",
            list.join(", ")
        )));
    }
    Ok(z.iter().zip(rd.reduced_field.iter()).map(|(a, b)| a + eps * b).collect())
}

/// Newton iteration with minimum-norm updates onto `{f = 0}`.
pub fn critical_manifold_solve(
    spec: &FastSlowMapSpec,
    guess: &[f64],
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    const MAX_ITER: usize = 50;
    let mut z = guess.to_vec();
    let mut res = spec.f_at(&z, tol)?.norm();
    if res <= tol.manifold {
        return Ok(z);
    }
    let df0 = spec.df_at(&z, tol)?;
    if linalg::rank(&df0, tol.rank) < spec.fast_dim() {
        return Err(Error::Precondition("Df at the initial guess does not have full row rank".into()));
    }
    for _ in 0..MAX_ITER {
        let fz = spec.f_at(&z, tol)?;
        let step = linalg::pseudo_inverse(&spec.df_at(&z, tol)?) * fz;
        for (zi, si) in z.iter_mut().zip(step.iter()) {
            *zi -= si;
        }
        res = spec.f_at(&z, tol)?.norm();
        if res <= tol.manifold {
            return Ok(z);
        }
    }
    Err(Error::NoConvergence { iterations: MAX_ITER, residual: res })
}

/// Jet of `Π(z)` about the base point, with `(Df N)^{-1}` inverted as a jet
/// matrix. Fails when `Df N` is singular at the base point.
pub fn projection_jet(spec: &FastSlowMapSpec) -> Result<JetMatrix> {
    let n = spec.n();
    let df = spec.df_jet_matrix();
    let nm = spec.n_jet_matrix();
    let inv = df.mul(&nm).inverse()?;
    let correction = nm.mul(&inv).mul(&df);
    let (m, r) = (n, spec.order());
    Ok(JetMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { Jet::constant(m, r, 1.0) } else { Jet::zero(m, r) };
        &id - correction.get(i, j)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapspec::parse_mapspec;

    const FOLD: &str = "dims 2 1\norder 4\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n2 0 : 1\n0 1 : -1\n[G 1]\n0 0 0 : 0\n[G 2]\n0 0 0 : -1\n";
    // f = -x + x^2 with a unit slow drift: superstable along x = 0
    const SUPERSTABLE: &str = "dims 2 1\norder 3\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n1 0 : -1\n2 0 : 1\n[G 1]\n0 0 0 : 0\n[G 2]\n0 0 0 : 1\n";

    fn spec(text: &str) -> FastSlowMapSpec {
        parse_mapspec(text).unwrap().spec
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    /// Two fast variables with `I + Df N = a`, one slow variable.
    fn linear_fast_block(a: [[f64; 2]; 2]) -> FastSlowMapSpec {
        let l = [[a[0][0] - 1.0, a[0][1]], [a[1][0], a[1][1] - 1.0]];
        let text = format!(
            "dims 3 1\norder 3\nbase 0 0 0\n[N 1 1]\n0 0 0 : 1\n[N 2 2]\n0 0 0 : 1\n\
             [f 1]\n1 0 0 : {}\n0 1 0 : {}\n[f 2]\n1 0 0 : {}\n0 1 0 : {}\n\
             [G 1]\n0 0 0 0 : 0\n[G 2]\n0 0 0 0 : 0\n[G 3]\n0 0 0 0 : 1\n",
            l[0][0], l[0][1], l[1][0], l[1][1]
        );
        spec(&text)
    }

    #[test]
    fn fold_multipliers() {
        let s = spec(FOLD);
        let m = nontrivial_multipliers(&s, &[0.1, 0.01], &tol()).unwrap();
        assert!((m.values[0] - Complex64::new(1.2, 0.0)).norm() < 1e-14);
        let m = nontrivial_multipliers(&s, &[0.0, 0.0], &tol()).unwrap();
        assert_eq!(m.values[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn superstable_multiplier_is_zero() {
        let s = spec(SUPERSTABLE);
        for y in [0.0, 0.3, -0.5] {
            let m = nontrivial_multipliers(&s, &[0.0, y], &tol()).unwrap();
            assert!(m.values[0].norm() < 1e-15);
        }
    }

    #[test]
    fn classification_examples() {
        let s = spec(FOLD);
        let c = classify_point(&s, &[-0.2, 0.04], &tol()).unwrap();
        assert_eq!(c.tag, SingularityTag::NhAttracting);
        let c = classify_point(&s, &[0.2, 0.04], &tol()).unwrap();
        assert_eq!(c.tag, SingularityTag::NhRepelling);
        let c = classify_point(&s, &[0.0, 0.0], &tol()).unwrap();
        assert_eq!(c.tag, SingularityTag::FoldContact);
        assert_eq!(c.unipotent_index, Some(1));
        assert_eq!(c.to_string(), "FoldContact unipotent_index=1");

        let c = classify_point(&spec(SUPERSTABLE), &[0.0, 0.0], &tol()).unwrap();
        assert_eq!(c.tag, SingularityTag::NhAttracting);
        assert!(c.superstable);
        assert_eq!(c.unipotent_index, None);
    }

    #[test]
    fn flip_neimark_sacker_saddle_and_mixed() {
        let c = classify_point(&linear_fast_block([[-1.0, 0.0], [0.0, 0.5]]), &[0.0; 3], &tol()).unwrap();
        assert_eq!(c.tag, SingularityTag::Flip);
        let (cs, sn) = (0.3f64.cos(), 0.3f64.sin());
        let c = classify_point(&linear_fast_block([[cs, -sn], [sn, cs]]), &[0.0; 3], &tol()).unwrap();
        assert_eq!(c.tag, SingularityTag::NeimarkSacker);
        let c = classify_point(&linear_fast_block([[0.5, 0.0], [0.0, 2.0]]), &[0.0; 3], &tol()).unwrap();
        assert_eq!(c.tag, SingularityTag::NhSaddle);
        let c = classify_point(&linear_fast_block([[1.0, 0.0], [0.0, -1.0]]), &[0.0; 3], &tol()).unwrap();
        assert_eq!(c.tag, SingularityTag::MixedNonNh);
        // double unit multiplier with a Jordan block: nilpotent Df N of index 2
        let c = classify_point(&linear_fast_block([[1.0, 1.0], [0.0, 1.0]]), &[0.0; 3], &tol()).unwrap();
        assert_eq!(c.unipotent_index, Some(2));
    }

    #[test]
    fn classification_requires_critical_point() {
        let err = classify_point(&spec(FOLD), &[0.1, 0.0], &tol()).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("|f(z)|")), "{err}");
        let err = classify_point(&spec(FOLD), &[3.0, 9.0], &tol()).unwrap_err();
        assert!(matches!(err, Error::Domain { .. }));
    }

    #[test]
    fn projection_examples() {
        let lin = "dims 2 1\norder 3\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n1 0 : 1\n[G 1]\n0 0 0 : 0.7\n[G 2]\n0 0 0 : 1\n";
        let rd = reduced_data(&spec(lin), &[0.0, 0.0], &tol()).unwrap();
        assert!(rd.valid);
        assert_eq!(rd.projection, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert_eq!(rd.reduced_field.as_slice(), &[0.0, 1.0]);

        let rd = reduced_data(&spec(SUPERSTABLE), &[0.0, 0.3], &tol()).unwrap();
        assert!(rd.valid);
        assert!((rd.projection.clone() - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).norm() < 1e-15);
        assert!((rd.reduced_field[1] - 1.0).abs() < 1e-15);

        let rd = reduced_data(&spec(FOLD), &[0.0, 0.0], &tol()).unwrap();
        assert!(!rd.valid);
    }

    #[test]
    fn projector_laws_on_fold_branch() {
        let s = spec(FOLD);
        for x in [-0.6, -0.3, -0.1, 0.2, 0.5] {
            let z = [x, x * x];
            let rd = reduced_data(&s, &z, &tol()).unwrap();
            let p = &rd.projection;
            assert!((p * p - p).norm() < 1e-9);
            assert!((p * s.n_at(&z, &tol()).unwrap()).norm() < 1e-9);
            // tangent to y = x^2 at z is (1, 2x)
            let t = p * DVector::from_vec(vec![1.0, 2.0 * x]);
            assert!((t - DVector::from_vec(vec![1.0, 2.0 * x])).norm() < 1e-12);
        }
    }

    #[test]
    fn reduced_map_examples() {
        let s = spec(SUPERSTABLE);
        let z = reduced_map_step(&s, &[0.0, 0.5], 0.01, &tol()).unwrap();
        assert_eq!(z[0], 0.0);
        assert!((z[1] - 0.51).abs() < 1e-15);
        assert_eq!(reduced_map_step(&s, &[0.0, 0.5], 0.0, &tol()).unwrap(), vec![0.0, 0.5]);

        let f = spec(FOLD);
        let z = reduced_map_step(&f, &[-0.2, 0.04], 0.1, &tol()).unwrap();
        assert!((z[1] - (0.04 - 0.1)).abs() < 1e-15);
        let err = reduced_map_step(&f, &[0.0, 0.0], 0.1, &tol()).unwrap_err();
        assert!(err.to_string().contains("multipliers 1"), "{err}");
    }

    #[test]
    fn critical_manifold_examples() {
        let s = spec(FOLD);
        let z = critical_manifold_solve(&s, &[0.5, 0.2], &tol()).unwrap();
        assert!(s.f_at(&z, &tol()).unwrap().norm() <= 1e-12);
        let on = [0.3, 0.09];
        assert_eq!(critical_manifold_solve(&s, &on, &tol()).unwrap(), on.to_vec());
        let lin = "dims 2 1\norder 3\nbase 0 1\n[N 1 1]\n0 0 : 1\n[f 1]\n1 0 : 1\n[G 1]\n0 0 0 : 0\n[G 2]\n0 0 0 : 1\n";
        let z = critical_manifold_solve(&spec(lin), &[0.3, 1.0], &tol()).unwrap();
        assert_eq!(z, vec![0.0, 1.0]);
    }

    #[test]
    fn nilpotency_index_examples() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(nilpotency_index(&j, 1e-9), Some(2));
        assert_eq!(nilpotency_index(&DMatrix::identity(3, 3), 1e-9), None);
        assert_eq!(nilpotency_index(&DMatrix::zeros(1, 1), 1e-9), Some(1));
    }

    #[test]
    fn shifted_spec_is_the_same_map() {
        let s = spec(FOLD);
        let t = s.shifted_to(&[-0.3, 0.09]).unwrap();
        for z in [[-0.25, 0.1], [0.1, -0.2], [0.4, 0.4]] {
            let a = s.step(&z, 0.01);
            let b = t.step(&z, 0.01);
            assert!((a[0] - b[0]).abs() < 1e-15 && (a[1] - b[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_jet_matches_pointwise_projection() {
        let s = spec(FOLD).shifted_to(&[-0.4, 0.16]).unwrap();
        let pj = projection_jet(&s).unwrap();
        let z = [-0.4, 0.16];
        let rd = reduced_data(&s, &z, &tol()).unwrap();
        assert!((pj.eval(&[0.0, 0.0]) - rd.projection).norm() < 1e-14);
        // along S the jet agrees with the pointwise projector up to truncation
        let x = -0.38;
        let z = [x, x * x];
        let p = reduced_data(&s, &z, &tol()).unwrap().projection;
        let h = [x + 0.4, x * x - 0.16];
        assert!((pj.eval(&h) - p).norm() < 1e-5);
    }

    #[test]
    fn order_below_three_is_rejected() {
        let text = FOLD.replace("order 4", "order 2");
        assert!(matches!(parse_mapspec(&text), Err(Error::Structure(_))));
    }
}
