//! Forward iteration, numerical time-1 flows and the planar scaling
//! experiments (fold exit law, transcritical and pitchfork branch selection).

use std::fmt;

use nalgebra::DVector;
use ode_solvers::{Dop853, OutputType, System};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fastslow::FastSlowMapSpec;
use crate::jet::JetVector;
use crate::singularity::{classify_planar_singularity, lambda_critical, threshold_lambda, PlanarCase};
use crate::tolerance::Tolerances;

/// Axis-aligned box `lower ≤ z ≤ upper`. Infinite bounds are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Structure(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Precondition("box lower bound exceeds upper bound".into()));
        }
        Ok(BoxRegion { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        BoxRegion { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    /// Box `center ± half` in every coordinate.
    pub fn centered(center: &[f64], half: &[f64]) -> Result<Self> {
        if center.len() != half.len() {
            return Err(Error::Structure("center and half widths differ in length".into()));
        }
        let lower = center.iter().zip(half).map(|(c, h)| c - h).collect();
        let upper = center.iter().zip(half).map(|(c, h)| c + h).collect();
        BoxRegion::new(lower, upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    /// Face crossed by `z`, picking the largest overshoot when several
    /// bounds are violated at once.
    fn violated_face(&self, z: &[f64]) -> Option<ExitFace> {
        let mut best: Option<(f64, ExitFace)> = None;
        for (i, x) in z.iter().enumerate() {
            let over = [(self.lower[i] - x, false), (x - self.upper[i], true)];
            for (amount, upper) in over {
                if amount > 0.0 && best.as_ref().is_none_or(|(a, _)| amount > *a) {
                    best = Some((amount, ExitFace { var: i, upper }));
                }
            }
        }
        best.map(|(_, f)| f)
    }

    fn bound(&self, face: ExitFace) -> f64 {
        if face.upper {
            self.upper[face.var]
        } else {
            self.lower[face.var]
        }
    }
}

/// A face of a [`BoxRegion`]: coordinate index and side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExitFace {
    pub var: usize,
    pub upper: bool,
}

impl fmt::Display for ExitFace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "z{}{}", self.var + 1, if self.upper { "+" } else { "-" })
    }
}

/// Forward orbit of a map spec at fixed ε.
#[derive(Clone, Debug)]
pub struct Orbit {
    /// Starting point followed by the iterates. When the orbit exits, the
    /// last point is the first one outside the box.
    pub points: Vec<Vec<f64>>,
    pub eps: f64,
    pub exited: bool,
    pub exit_face: Option<ExitFace>,
}

impl Orbit {
    pub fn steps(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn last(&self) -> &[f64] {
        self.points.last().expect("orbit holds at least the start point")
    }

    /// Point where the last segment meets the exit face, by linear
    /// interpolation between the last inside and the first outside point.
    pub fn exit_point(&self, region: &BoxRegion) -> Option<Vec<f64>> {
        let face = self.exit_face?;
        let n = self.points.len();
        let (a, b) = (&self.points[n - 2], &self.points[n - 1]);
        Some(crossing(a, b, face.var, region.bound(face)))
    }

    /// Largest `|z_{k+1} − H(z_k)|` over every `stride`-th consecutive pair.
    pub fn max_step_defect(&self, spec: &FastSlowMapSpec, stride: usize) -> f64 {
        self.points
            .windows(2)
            .step_by(stride.max(1))
            .map(|w| {
                let next = spec.step(&w[0], self.eps);
                next.iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

fn crossing(a: &[f64], b: &[f64], var: usize, level: f64) -> Vec<f64> {
    let t = (level - a[var]) / (b[var] - a[var]);
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Iterates `z ↦ H(z, ε)` from `z0` until the orbit leaves `region` or
/// `max_steps` maps have been applied.
pub fn iterate_map_orbit(
    spec: &FastSlowMapSpec,
    z0: &[f64],
    eps: f64,
    region: &BoxRegion,
    max_steps: usize,
) -> Result<Orbit> {
    check_dims(spec, z0, region)?;
    if !(eps >= 0.0) {
        return Err(Error::Precondition(format!("eps must be nonnegative, got {eps}")));
    }
    if !region.contains(z0) {
        return Err(Error::Precondition("starting point lies outside the box".into()));
    }
    let mut points = vec![z0.to_vec()];
    for _ in 0..max_steps {
        let next = spec.step(points.last().expect("nonempty"), eps);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integration("orbit overflowed to a non-finite value".into()));
        }
        let face = region.violated_face(&next);
        points.push(next);
        if face.is_some() {
            return Ok(Orbit { points, eps, exited: true, exit_face: face });
        }
    }
    Ok(Orbit { points, eps, exited: false, exit_face: None })
}

fn check_dims(spec: &FastSlowMapSpec, z: &[f64], region: &BoxRegion) -> Result<()> {
    if z.len() != spec.n() || region.dim() != spec.n() {
        return Err(Error::Structure(format!(
            "point has {} and box {} coordinates, spec has {}",
            z.len(),
            region.dim(),
            spec.n()
        )));
    }
    Ok(())
}

struct Field<F> {
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> System<f64, DVector<f64>> for Field<F> {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let v = (self.f)(y.as_slice());
        dy.copy_from_slice(&v);
    }
}

/// Relative and absolute tolerance of the time-1 integrator.
pub const INTEGRATOR_TOL: f64 = 1e-12;

/// Time-1 map of `ż = field(z)` by an adaptive 8(5,3) Dormand–Prince pair.
pub fn integrate_time1<F>(field: F, z0: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let y0 = DVector::from_column_slice(z0);
    let mut solver = Dop853::new(Field { f: field }, 0.0, 1.0, 1.0, y0, INTEGRATOR_TOL, INTEGRATOR_TOL);
    solver.set_output(OutputType::Sparse);
    solver.integrate().map_err(|e| Error::Integration(e.to_string()))?;
    let (ts, ys) = solver.results().get();
    match (ts.last(), ys.last()) {
        (Some(t), Some(y)) if (t - 1.0).abs() < 1e-12 => Ok(y.iter().copied().collect()),
        _ => Err(Error::Integration("integrator stopped before t = 1".into())),
    }
}

/// [`integrate_time1`] for a polynomial field given as a jet vector.
pub fn integrate_time1_jet(v: &JetVector, z0: &[f64]) -> Result<Vec<f64>> {
    if v.len() != v.num_vars() || z0.len() != v.len() {
        return Err(Error::Structure(format!(
            "field has {} components in {} variables, point has {}",
            v.len(),
            v.num_vars(),
            z0.len()
        )));
    }
    integrate_time1(|z| v.eval(z), z0)
}

/// Options for [`track_slow_manifold`].
#[derive(Clone, Debug)]
pub struct TrackOptions {
    /// Iterates dropped before the orbit counts as the slow manifold.
    pub transient: usize,
    pub max_steps: usize,
    /// Region outside which tracking stops. Defaults to the box of
    /// half-width `trust_radius` about the base point.
    pub region: Option<BoxRegion>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        TrackOptions { transient: 10, max_steps: 20_000, region: None }
    }
}

/// Post-transient orbit shadowing the attracting slow manifold.
#[derive(Clone, Debug)]
pub struct SlowCurve {
    pub seed: Vec<f64>,
    pub orbit: Orbit,
    /// Index into `orbit.points` of the first point after the transient.
    pub start: usize,
}

impl SlowCurve {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.orbit.points[self.start.min(self.orbit.points.len())..]
    }
}

fn unbounded_tol(tol: &Tolerances) -> Tolerances {
    Tolerances { trust_radius: f64::INFINITY, ..tol.clone() }
}

fn require_planar(spec: &FastSlowMapSpec) -> Result<()> {
    if spec.n() != 2 || spec.k() != 1 {
        return Err(Error::Structure(format!("expected a planar spec (n = 2, k = 1), got n = {}, k = {}", spec.n(), spec.k())));
    }
    Ok(())
}

/// Point of the critical manifold near `(x, y)`. Solves for `y` with `x`
/// held fixed, or for `x` with `y` held fixed when `∂f/∂y` vanishes.
fn planar_critical_point(spec: &FastSlowMapSpec, x: f64, y: f64, tol: &Tolerances) -> Result<[f64; 2]> {
    const MAX_ITER: usize = 60;
    let loose = unbounded_tol(tol);
    let df = spec.df_at(&[x, y], &loose)?;
    let var = if df[(0, 1)].abs() > tol.floor { 1 } else { 0 };
    let mut z = [x, y];
    for _ in 0..MAX_ITER {
        let f = spec.f_at(&z, &loose)?[0];
        if f.abs() <= tol.manifold {
            return Ok(z);
        }
        let d = spec.df_at(&z, &loose)?[(0, var)];
        if d.abs() < tol.rank {
            break;
        }
        z[var] -= f / d;
    }
    let f = spec.f_at(&z, &loose)?[0];
    if f.abs() <= tol.manifold {
        return Ok(z);
    }
    Err(Error::NoConvergence { iterations: MAX_ITER, residual: f.abs() })
}

/// Multiplier `1 + Df N` of the layer map at a planar point.
fn layer_multiplier(spec: &FastSlowMapSpec, z: &[f64], tol: &Tolerances) -> Result<f64> {
    Ok(1.0 + spec.dfn_at(z, &unbounded_tol(tol))?[(0, 0)])
}

/// Seeds on the critical manifold over `x_start` (see
/// [`planar_critical_point`]), shifts the seed by `ε Π G`, iterates, and
/// drops the transient.
pub fn track_slow_manifold(
    spec: &FastSlowMapSpec,
    eps: f64,
    x_start: f64,
    opts: &TrackOptions,
    tol: &Tolerances,
) -> Result<SlowCurve> {
    require_planar(spec)?;
    let base = spec.base_point();
    let on_s = planar_critical_point(spec, x_start, base[1], tol)?;
    let mu = layer_multiplier(spec, &on_s, tol)?;
    if mu.abs() >= 1.0 - tol.unit {
        return Err(Error::Precondition(format!(
            "seed ({}, {}) is not in the attracting band: layer multiplier {mu}",
            on_s[0], on_s[1]
        )));
    }
    let rd = crate::fastslow::reduced_data(spec, &on_s, &unbounded_tol(tol))?;
    let seed: Vec<f64> = on_s.iter().zip(rd.reduced_field.iter()).map(|(z, v)| z + eps * v).collect();
    let region = match &opts.region {
        Some(r) => r.clone(),
        None => BoxRegion::centered(base, &[tol.trust_radius; 2])?,
    };
    let orbit = iterate_map_orbit(spec, &seed, eps, &region, opts.max_steps)?;
    Ok(SlowCurve { seed, orbit, start: opts.transient })
}

/// Least-squares line through `(log ε, log |observable|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub eps_values: Vec<f64>,
    pub observables: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl ScalingFit {
    pub fn fit(eps_values: Vec<f64>, observables: Vec<f64>) -> Result<Self> {
        if eps_values.len() != observables.len() || eps_values.len() < 2 {
            return Err(Error::Precondition("a scaling fit needs at least two paired samples".into()));
        }
        if eps_values.iter().chain(&observables).any(|v| *v == 0.0 || !v.is_finite()) || eps_values.iter().any(|e| *e < 0.0) {
            return Err(Error::Precondition("scaling fit needs positive ε and nonzero finite observables".into()));
        }
        let xs: Vec<f64> = eps_values.iter().map(|e| e.ln()).collect();
        let ys: Vec<f64> = observables.iter().map(|o| o.abs().ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::Degenerate("all ε values coincide".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
        Ok(ScalingFit { eps_values, observables, slope, intercept, r_squared })
    }
}

/// `n` logarithmically spaced values from `a` to `b` inclusive.
pub fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let (la, lb) = (a.ln(), b.ln());
            (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

/// Options for [`fold_exit_experiment`].
#[derive(Clone, Debug)]
pub struct FoldExitOptions {
    /// Seed abscissa on the attracting branch.
    pub x_start: f64,
    pub transient: usize,
    /// Step cap is `step_factor / ε + 10 000`.
    pub step_factor: f64,
}

impl Default for FoldExitOptions {
    fn default() -> Self {
        FoldExitOptions { x_start: -0.5, transient: 10, step_factor: 10.0 }
    }
}

/// Outcome for one ε of the fold exit experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldExitRow {
    pub eps: f64,
    /// Interpolated `y` at the first crossing of `x = ρ`, or the error.
    pub y_out: std::result::Result<f64, Error>,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct FoldExitReport {
    pub rho: f64,
    pub rows: Vec<FoldExitRow>,
    /// Fit over the rows that produced an exit value.
    pub fit: ScalingFit,
}

/// Exit height of the attracting slow manifold at the section `x = ρ`
/// past a regular fold, over a grid of ε, with a log-log fit.
pub fn fold_exit_experiment(
    spec: &FastSlowMapSpec,
    rho: f64,
    eps_grid: &[f64],
    opts: &FoldExitOptions,
    tol: &Tolerances,
) -> Result<FoldExitReport> {
    require_planar(spec)?;
    let class = classify_planar_singularity(spec, tol)?;
    if class.case != PlanarCase::Fold || !class.oriented {
        return Err(Error::Precondition(format!(
            "fold exit needs an oriented regular fold, got {} (oriented = {})",
            class.case, class.oriented
        )));
    }
    if !(rho > 0.0) {
        return Err(Error::Precondition(format!("rho must be positive, got {rho}")));
    }
    let rows: Vec<FoldExitRow> = eps_grid.par_iter().map(|&eps| fold_exit_row(spec, rho, eps, opts, tol)).collect();
    let (es, ys): (Vec<f64>, Vec<f64>) =
        rows.iter().filter_map(|r| r.y_out.as_ref().ok().map(|y| (r.eps, *y))).unzip();
    let fit = ScalingFit::fit(es, ys)?;
    Ok(FoldExitReport { rho, rows, fit })
}

fn fold_exit_row(spec: &FastSlowMapSpec, rho: f64, eps: f64, opts: &FoldExitOptions, tol: &Tolerances) -> FoldExitRow {
    let base = spec.base_point();
    let cap = (opts.step_factor / eps) as usize + 10_000;
    let region = BoxRegion::new(
        vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
        vec![base[0] + rho, f64::INFINITY],
    )
    .expect("valid box");
    let track = TrackOptions { transient: opts.transient, max_steps: cap, region: Some(region.clone()) };
    let result = track_slow_manifold(spec, eps, base[0] + opts.x_start, &track, tol).and_then(|curve| {
        let orbit = &curve.orbit;
        if !orbit.exited {
            return Err(Error::NoConvergence { iterations: cap, residual: orbit.last()[0] - base[0] - rho });
        }
        let exit = orbit.exit_point(&region).expect("exited orbit has an exit point");
        Ok((exit[1] - base[1], orbit.steps()))
    });
    match result {
        Ok((y, steps)) => FoldExitRow { eps, y_out: Ok(y), steps },
        Err(e) => FoldExitRow { eps, y_out: Err(e), steps: 0 },
    }
}

/// Outcome labels of the branch selection experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchLabel {
    ExchangeOfStability,
    FastEscape,
    BranchPlus,
    BranchMinus,
    BothToCenter,
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BranchLabel::ExchangeOfStability => "ExchangeOfStability",
            BranchLabel::FastEscape => "FastEscape",
            BranchLabel::BranchPlus => "BranchPlus",
            BranchLabel::BranchMinus => "BranchMinus",
            BranchLabel::BothToCenter => "BothToCenter",
        };
        f.write_str(s)
    }
}

/// Geometry and thresholds of the branch selection experiment.
#[derive(Clone, Debug)]
pub struct BranchOptions {
    /// Half-widths of the box about the singular point, fast then slow.
    pub half_width: [f64; 2],
    /// Seeds sit at `y = −sign(g₀) · seed_fraction · half_width[1]`.
    pub seed_fraction: f64,
    /// Matching distance is `match_factor · √ε`.
    pub match_factor: f64,
    /// Required `|λ − λ_crit|`.
    pub band: f64,
    /// Grid size of the root scan along the exit section.
    pub scan_points: usize,
    pub max_steps: usize,
}

impl Default for BranchOptions {
    fn default() -> Self {
        BranchOptions {
            half_width: [0.8, 0.3],
            seed_fraction: 0.9,
            match_factor: 5.0,
            band: 0.25,
            scan_points: 400,
            max_steps: 200_000,
        }
    }
}

/// One seed's trajectory through the box.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: Vec<f64>,
    pub exit_face: ExitFace,
    pub exit_point: Vec<f64>,
    /// Critical-manifold point matched at the exit section, if the orbit
    /// left through the downstream slow face.
    pub matched_branch: Option<Vec<f64>>,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct BranchOutcome {
    pub case: PlanarCase,
    pub lambda: f64,
    pub lambda_critical: f64,
    pub label: BranchLabel,
    pub d_match: f64,
    pub seeds: Vec<SeedOutcome>,
}

impl BranchOutcome {
    /// `|y_exit − y*|` of the first seed, the distance from the critical fiber.
    pub fn fiber_distance(&self, spec: &FastSlowMapSpec) -> f64 {
        (self.seeds[0].exit_point[1] - spec.base_point()[1]).abs()
    }
}

/// Roots of `f(·, y)` on `[lo, hi]` by sign scan and bisection.
fn section_roots(spec: &FastSlowMapSpec, y: f64, lo: f64, hi: f64, samples: usize) -> Result<Vec<[f64; 2]>> {
    let loose = Tolerances { trust_radius: f64::INFINITY, ..Tolerances::default() };
    let f = |x: f64| -> Result<f64> { Ok(spec.f_at(&[x, y], &loose)?[0]) };
    let mut roots = Vec::new();
    let xs: Vec<f64> = (0..=samples).map(|i| lo + (hi - lo) * i as f64 / samples as f64).collect();
    let mut prev = (xs[0], f(xs[0])?);
    if prev.1 == 0.0 {
        roots.push([prev.0, y]);
    }
    for &x in &xs[1..] {
        let cur = (x, f(x)?);
        if cur.1 == 0.0 {
            roots.push([x, y]);
        } else if prev.1 * cur.1 < 0.0 {
            let (mut a, mut b, mut fa) = (prev.0, cur.0, prev.1);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = f(m)?;
                if fm == 0.0 || (b - a) < 1e-15 {
                    a = m;
                    b = m;
                    break;
                }
                if fa * fm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            roots.push([0.5 * (a + b), y]);
        }
        prev = cur;
    }
    Ok(roots)
}

/// Follows the incoming attracting slow manifold through a box about a
/// transcritical or pitchfork point and labels which outgoing branch (or
/// fast fiber) it leaves along.
pub fn branch_selection_experiment(
    spec: &FastSlowMapSpec,
    case: PlanarCase,
    eps: f64,
    opts: &BranchOptions,
    tol: &Tolerances,
) -> Result<BranchOutcome> {
    require_planar(spec)?;
    if case == PlanarCase::Fold {
        return Err(Error::Precondition("branch selection applies to transcritical and pitchfork points".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps must be positive, got {eps}")));
    }
    let class = classify_planar_singularity(spec, tol)?;
    if class.case != case {
        return Err(Error::Precondition(format!("classifier found {}, expected {case}", class.case)));
    }
    let lambda = threshold_lambda(&class.coefficients)?;
    let lambda_crit = lambda_critical(case).expect("defined for transcritical and pitchfork");
    if (lambda - lambda_crit).abs() < opts.band {
        return Err(Error::Precondition(format!(
            "lambda = {lambda} lies within {} of the critical value {lambda_crit}",
            opts.band
        )));
    }
    let g0 = class.partials.g0;
    let base = spec.base_point();
    let [hx, hy] = opts.half_width;
    let region = BoxRegion::centered(base, &[hx, hy])?;
    let d_match = opts.match_factor * eps.sqrt();
    let downstream = ExitFace { var: 1, upper: g0 > 0.0 };

    let y_seed = base[1] - g0.signum() * opts.seed_fraction * hy;
    let mut seeds = Vec::new();
    for root in section_roots(spec, y_seed, base[0] - hx, base[0] + hx, opts.scan_points)? {
        if layer_multiplier(spec, &root, tol)?.abs() < 1.0 - tol.unit {
            seeds.push(root);
        }
    }
    if seeds.is_empty() {
        return Err(Error::Precondition(format!("no attracting branch crosses the seed section y = {y_seed}")));
    }

    let mut outcomes = Vec::new();
    let mut labels = Vec::new();
    for on_s in seeds {
        let rd = crate::fastslow::reduced_data(spec, &on_s, &unbounded_tol(tol))?;
        let seed: Vec<f64> = on_s.iter().zip(rd.reduced_field.iter()).map(|(z, v)| z + eps * v).collect();
        let orbit = iterate_map_orbit(spec, &seed, eps, &region, opts.max_steps)?;
        let face = orbit.exit_face.ok_or(Error::NoConvergence {
            iterations: opts.max_steps,
            residual: f64::NAN,
        })?;
        let exit_point = orbit.exit_point(&region).expect("exited");
        let (label, matched) = if face.var == 0 {
            (BranchLabel::FastEscape, None)
        } else if face == downstream {
            let near: Vec<[f64; 2]> = section_roots(spec, exit_point[1], base[0] - hx, base[0] + hx, opts.scan_points)?
                .into_iter()
                .filter(|r| (r[0] - exit_point[0]).abs() <= d_match)
                .collect();
            let branch = match near.as_slice() {
                [one] => *one,
                [] => {
                    return Err(Error::Ambiguous(format!(
                        "exit at x = {} is farther than {d_match:e} from every branch",
                        exit_point[0]
                    )))
                }
                _ => {
                    return Err(Error::Ambiguous(format!(
                        "exit at x = {} is within {d_match:e} of {} branches",
                        exit_point[0],
                        near.len()
                    )))
                }
            };
            (label_branch(spec, case, &branch, base, d_match, tol)?, Some(branch.to_vec()))
        } else {
            return Err(Error::Ambiguous(format!("orbit left through the upstream face {face}")));
        };
        labels.push(label);
        outcomes.push(SeedOutcome { seed, exit_face: face, exit_point, matched_branch: matched, steps: orbit.steps() });
    }
    let label = labels[0];
    if labels.iter().any(|l| *l != label) {
        let list: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
        return Err(Error::Ambiguous(format!("seeds disagree: {}", list.join(", "))));
    }
    Ok(BranchOutcome { case, lambda, lambda_critical: lambda_crit, label, d_match, seeds: outcomes })
}

fn label_branch(
    spec: &FastSlowMapSpec,
    case: PlanarCase,
    branch: &[f64; 2],
    base: &[f64],
    d_match: f64,
    tol: &Tolerances,
) -> Result<BranchLabel> {
    let attracting = layer_multiplier(spec, branch, tol)?.abs() < 1.0 - tol.unit;
    let offset = branch[0] - base[0];
    match case {
        PlanarCase::Transcritical if attracting => Ok(BranchLabel::ExchangeOfStability),
        PlanarCase::Transcritical => Err(Error::Ambiguous("orbit left along the repelling branch".into())),
        PlanarCase::Pitchfork if !attracting => Err(Error::Ambiguous("orbit left along a repelling branch".into())),
        PlanarCase::Pitchfork if offset.abs() <= d_match => Ok(BranchLabel::BothToCenter),
        PlanarCase::Pitchfork if offset > 0.0 => Ok(BranchLabel::BranchPlus),
        PlanarCase::Pitchfork => Ok(BranchLabel::BranchMinus),
        PlanarCase::Fold => unreachable!("rejected above"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapspec::parse_mapspec;

    fn spec(text: &str) -> FastSlowMapSpec {
        parse_mapspec(text).unwrap().spec
    }

    fn planar(f: &str, g1: f64, g2: f64) -> FastSlowMapSpec {
        spec(&format!(
            "dims 2 1\norder 4\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n{f}[G 1]\n0 0 0 : {g1}\n[G 2]\n0 0 0 : {g2}\n"
        ))
    }

    fn fold() -> FastSlowMapSpec {
        planar("2 0 : 1\n0 1 : -1\n", 0.0, -1.0)
    }

    fn superstable() -> FastSlowMapSpec {
        planar("1 0 : -1\n2 0 : 1\n", 0.0, 1.0)
    }

    fn transcritical(lam: f64) -> FastSlowMapSpec {
        planar("2 0 : 1\n0 2 : -1\n", lam, 1.0)
    }

    fn pitchfork(lam: f64, g0: f64) -> FastSlowMapSpec {
        planar("1 1 : 1\n3 0 : -1\n", lam, g0)
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn superstable_orbit_exits_after_four_steps() {
        let region = BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 0.35]).unwrap();
        let orbit = iterate_map_orbit(&superstable(), &[0.0, 0.0], 0.1, &region, 100).unwrap();
        assert!(orbit.exited);
        assert_eq!(orbit.steps(), 4);
        assert_eq!(orbit.exit_face, Some(ExitFace { var: 1, upper: true }));
        assert!((orbit.last()[1] - 0.4).abs() < 1e-15);
        assert_eq!(orbit.max_step_defect(&superstable(), 1), 0.0);
    }

    #[test]
    fn layer_fixed_point_is_constant() {
        let region = BoxRegion::unbounded(2);
        let orbit = iterate_map_orbit(&fold(), &[0.3, 0.09], 0.0, &region, 50).unwrap();
        assert!(!orbit.exited);
        assert!(orbit.points.iter().all(|p| p == &orbit.points[0]));
    }

    #[test]
    fn layer_orbit_escapes_monotonically() {
        let region = BoxRegion::centered(&[0.0, 0.0], &[10.0, 10.0]).unwrap();
        let orbit = iterate_map_orbit(&fold(), &[0.5, 0.0], 0.0, &region, 100).unwrap();
        assert!(orbit.exited);
        assert!(orbit.points.windows(2).all(|w| w[1][0] > w[0][0] && w[1][1] == 0.0));
    }

    #[test]
    fn orbit_rejects_bad_input() {
        let region = BoxRegion::centered(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(matches!(iterate_map_orbit(&fold(), &[2.0, 0.0], 0.1, &region, 5), Err(Error::Precondition(_))));
        assert!(matches!(iterate_map_orbit(&fold(), &[0.0, 0.0], -0.1, &region, 5), Err(Error::Precondition(_))));
        assert!(matches!(iterate_map_orbit(&fold(), &[0.0], 0.1, &region, 5), Err(Error::Structure(_))));
    }

    #[test]
    fn exit_face_prefers_largest_overshoot() {
        let region = BoxRegion::centered(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(region.violated_face(&[1.5, -1.2]), Some(ExitFace { var: 0, upper: true }));
        assert_eq!(region.violated_face(&[1.1, -1.2]), Some(ExitFace { var: 1, upper: false }));
        assert_eq!(region.violated_face(&[0.5, 0.5]), None);
    }

    #[test]
    fn time1_examples() {
        let z = integrate_time1(|x| vec![x[0] * x[0]], &[0.05]).unwrap();
        assert!((z[0] - 0.05 / 0.95).abs() < 1e-13);
        let z = integrate_time1(|_| vec![0.0, 0.0], &[0.3, -0.2]).unwrap();
        assert_eq!(z, vec![0.3, -0.2]);
        let lam = nalgebra::DMatrix::from_row_slice(2, 2, &[0.0, 1.5, 0.0, 0.0]);
        let v = JetVector::linear(&lam, 3);
        let z = integrate_time1_jet(&v, &[0.2, -0.4]).unwrap();
        assert!((z[0] - (0.2 - 0.6)).abs() < 1e-13 && (z[1] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn time1_reports_blow_up() {
        assert!(matches!(integrate_time1(|x| vec![x[0] * x[0]], &[2.0]), Err(Error::Integration(_))));
    }

    #[test]
    fn slow_manifold_at_zero_eps_lies_on_s() {
        let curve = track_slow_manifold(&fold(), 0.0, -0.5, &TrackOptions { max_steps: 50, ..Default::default() }, &tol()).unwrap();
        for p in curve.points() {
            assert!((p[1] - p[0] * p[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn slow_manifold_is_eps_close_to_s() {
        let curve = track_slow_manifold(&fold(), 1e-3, -0.5, &TrackOptions::default(), &tol()).unwrap();
        let band: Vec<&Vec<f64>> = curve.points().iter().filter(|p| (-0.4..=-0.1).contains(&p[0])).collect();
        assert!(band.len() > 50);
        let gap = band.iter().map(|p| (p[1] - p[0] * p[0]).abs()).fold(0.0, f64::max);
        assert!(gap < 5e-3, "{gap}");
        assert!(gap > 1e-5);
    }

    #[test]
    fn superstable_slow_manifold_is_the_axis() {
        let curve = track_slow_manifold(&superstable(), 1e-2, 0.0, &TrackOptions::default(), &tol()).unwrap();
        assert!(curve.points().iter().all(|p| p[0] == 0.0));
        assert!(curve.orbit.exited);
    }

    #[test]
    fn repelling_seed_is_refused() {
        let err = track_slow_manifold(&fold(), 1e-3, 0.5, &TrackOptions::default(), &tol()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
    }

    #[test]
    fn scaling_fit_recovers_power_law() {
        let eps = logspace(1e-4, 1e-2, 5);
        let obs: Vec<f64> = eps.iter().map(|e| -3.0 * e.powf(0.75)).collect();
        let fit = ScalingFit::fit(eps, obs).unwrap();
        assert!((fit.slope - 0.75).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logspace_endpoints() {
        let g = logspace(1e-4, 1e-2, 13);
        assert_eq!(g.len(), 13);
        assert!((g[0] - 1e-4).abs() < 1e-18 && (g[12] - 1e-2).abs() < 1e-16);
        assert!((g[6] - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn fold_exit_is_monotone_and_reproducible() {
        let grid = [1e-3, 2e-3, 4e-3];
        let a = fold_exit_experiment(&fold(), 0.1, &grid, &FoldExitOptions::default(), &tol()).unwrap();
        let b = fold_exit_experiment(&fold(), 0.1, &grid, &FoldExitOptions::default(), &tol()).unwrap();
        assert_eq!(a.rows, b.rows);
        let y: Vec<f64> = a.rows.iter().map(|r| *r.y_out.as_ref().unwrap()).collect();
        assert!(y.iter().all(|v| *v < 0.0));
        assert!(y[0].abs() < y[1].abs() && y[1].abs() < y[2].abs());
        for w in y.windows(2) {
            let ratio = w[1] / w[0];
            assert!(ratio > 1.3 && ratio < 1.8, "{ratio}");
        }
    }

    #[test]
    fn fold_exit_needs_a_fold() {
        let err = fold_exit_experiment(&transcritical(0.5), 0.1, &[1e-3], &FoldExitOptions::default(), &tol()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn transcritical_labels() {
        let opts = BranchOptions::default();
        let out = branch_selection_experiment(&transcritical(0.5), PlanarCase::Transcritical, 1e-3, &opts, &tol()).unwrap();
        assert_eq!(out.label, BranchLabel::ExchangeOfStability);
        let out = branch_selection_experiment(&transcritical(2.0), PlanarCase::Transcritical, 1e-3, &opts, &tol()).unwrap();
        assert_eq!(out.label, BranchLabel::FastEscape);
        assert!(out.fiber_distance(&transcritical(2.0)) < 5.0 * 1e-3f64.sqrt());
    }

    #[test]
    fn lambda_band_is_enforced() {
        let err = branch_selection_experiment(&transcritical(1.1), PlanarCase::Transcritical, 1e-3, &BranchOptions::default(), &tol())
            .unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("critical value")), "{err}");
    }

    #[test]
    fn pitchfork_labels() {
        let opts = BranchOptions::default();
        let run = |lam, g0| branch_selection_experiment(&pitchfork(lam, g0), PlanarCase::Pitchfork, 1e-3, &opts, &tol()).unwrap();
        assert_eq!(run(0.5, 1.0).label, BranchLabel::BranchPlus);
        assert_eq!(run(-0.5, 1.0).label, BranchLabel::BranchMinus);
        let both = run(0.5, -1.0);
        assert_eq!(both.label, BranchLabel::BothToCenter);
        assert_eq!(both.seeds.len(), 2);
    }
}
