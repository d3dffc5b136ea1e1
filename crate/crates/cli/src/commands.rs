use std::fmt;
use std::fs;

use fsmap::{
    branch_selection_experiment, center_manifold_restricted_map, check_regular_contact, classify_planar_singularity,
    classify_point, cm_normal_form_transform, embed_2d, embed_on_center_manifold, emit_mapspec, euler_spec,
    fold_exit_experiment, logspace, parse_mapspec, reduced_data, takens_embed_unipotent, verify_reduced_embedding,
    BranchOptions, FoldExitOptions, Jet, MapSpecFile, PlanarCase, Tolerances,
};

use crate::report::{num, write_output, ReportTable};
use crate::{Command, Common};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable files.
    Input(String),
    Lib(fsmap::Error),
    Internal(String),
}

impl CliError {
    pub fn io<E: fmt::Display>(e: E) -> Self {
        CliError::Internal(e.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Lib(e) if e.is_input_error() => 2,
            CliError::Lib(_) | CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Internal(m) => f.write_str(m),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<fsmap::Error> for CliError {
    fn from(e: fsmap::Error) -> Self {
        CliError::Lib(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

struct Loaded {
    file: MapSpecFile,
    name: String,
    tol: Tolerances,
}

fn load(common: &Common) -> Result<Loaded> {
    let text = fs::read_to_string(&common.spec)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", common.spec.display())))?;
    let file = parse_mapspec(&text)?;
    let name = file.name.clone().unwrap_or_else(|| {
        common.spec.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let mut tol = Tolerances::default();
    for item in &common.tol {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("--tol expects NAME=VALUE, got {item:?}")))?;
        let v: f64 = v.trim().parse().map_err(|_| CliError::Input(format!("--tol value {v:?} is not a number")))?;
        tol.set(k.trim(), v)?;
    }
    Ok(Loaded { file, name, tol })
}

fn parse_point(text: Option<&str>, default: &[f64]) -> Result<Vec<f64>> {
    let Some(text) = text else { return Ok(default.to_vec()) };
    let pt: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Input(format!("--point {text:?} is not a comma-separated list of numbers")))?;
    if pt.len() != default.len() {
        return Err(CliError::Input(format!("--point has {} entries, the spec has {}", pt.len(), default.len())));
    }
    Ok(pt)
}

/// `A:B:log:N`, `A:B:lin:N` or a single positive value.
pub fn parse_eps_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Input(format!("--eps {text:?}: expected A:B:log:N, A:B:lin:N or a number"));
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [single] => vec![single.trim().parse::<f64>().map_err(|_| bad())?],
        [a, b, kind, n] => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            match kind.trim() {
                "log" => {
                    if !(a > 0.0 && b > 0.0) {
                        return Err(CliError::Input("log-spaced ε grids need positive endpoints".into()));
                    }
                    logspace(a, b, n)
                }
                "lin" => match n {
                    0 => Vec::new(),
                    1 => vec![a],
                    _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
                },
                _ => return Err(bad()),
            }
        }
        _ => return Err(bad()),
    };
    if grid.is_empty() || grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(CliError::Input(format!("--eps {text:?} must give at least one positive value")));
    }
    Ok(grid)
}

fn order_or_spec(order: Option<u32>, loaded: &Loaded) -> u32 {
    order.unwrap_or_else(|| loaded.file.spec.order())
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Classify { common, point } => classify(&common, point.as_deref()),
        Command::Reduce { common, point } => reduce(&common, point.as_deref()),
        Command::Embed { common, point, order } => embed(&common, point.as_deref(), order),
        Command::VerifyReduced { common, point, order } => verify_reduced(&common, point.as_deref(), order),
        Command::FoldExit { common, rho, eps } => fold_exit(&common, rho, &eps),
        Command::BranchSelect { common, eps, case } => branch_select(&common, &eps, case.as_deref()),
        Command::Contact { common, point } => contact(&common, point.as_deref()),
        Command::CenterManifold { common, order } => center_manifold(&common, order),
        Command::Selftest => selftest(),
    }
}

fn classify(common: &Common, point: Option<&str>) -> Result<()> {
    let l = load(common)?;
    let spec = &l.file.spec;
    let z = parse_point(point, spec.base_point())?;
    let class = classify_point(spec, &z, &l.tol)?;
    println!("{class}");
    if let Some(out) = &common.out {
        let mults = fsmap::nontrivial_multipliers(spec, &z, &l.tol)?;
        let mut t = ReportTable::new("classify", &l.name, &l.tol, &["index", "re", "im", "modulus"]);
        t.notes.push(format!("class {class}"));
        for (i, m) in mults.values.iter().enumerate() {
            t.push(vec![(i + 1).to_string(), num(m.re), num(m.im), num(m.norm())]);
        }
        t.emit(Some(out))?;
    }
    Ok(())
}

fn reduce(common: &Common, point: Option<&str>) -> Result<()> {
    let l = load(common)?;
    let spec = &l.file.spec;
    let z = parse_point(point, spec.base_point())?;
    let rd = reduced_data(spec, &z, &l.tol)?;
    if !rd.valid {
        return Err(fsmap::Error::Precondition("Df N is singular at the point; the reduced field is undefined".into()).into());
    }
    let n = spec.n();
    let mut cols = vec!["component".to_string(), "reduced_field".to_string()];
    cols.extend((1..=n).map(|j| format!("pi_{j}")));
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = ReportTable::new("reduce", &l.name, &l.tol, &cols);
    for i in 0..n {
        let mut row = vec![(i + 1).to_string(), num(rd.reduced_field[i])];
        row.extend((0..n).map(|j| num(rd.projection[(i, j)])));
        t.push(row);
    }
    t.emit(common.out.as_deref())
}

fn embed(common: &Common, point: Option<&str>, order: Option<u32>) -> Result<()> {
    let l = load(common)?;
    let order = order_or_spec(order, &l);
    let spec = &l.file.spec;
    let z = parse_point(point, spec.base_point())?;
    let local = spec.shifted_to(&z)?;
    let res = takens_embed_unipotent(&local.extended_map_jet(), order)?;
    println!("residual={}", num(res.residual));
    println!("matched_order={}", res.matched_order);
    let euler = euler_spec(&res.v, &z)?;
    let file = MapSpecFile {
        spec: euler,
        name: Some(format!("{}-field", l.name)),
        description: Some("Euler map z + V(z, eps) of the embedded vector field".into()),
        case: None,
    };
    if let Some(out) = &common.out {
        write_output(Some(out), &emit_mapspec(&file))?;
    }
    Ok(())
}

fn verify_reduced(common: &Common, point: Option<&str>, order: Option<u32>) -> Result<()> {
    let l = load(common)?;
    let order = order_or_spec(order, &l);
    let spec = &l.file.spec;
    let z = parse_point(point, spec.base_point())?;
    let rep = verify_reduced_embedding(spec, &z, order, &l.tol)?;
    println!("linear_discrepancy={}", num(rep.linear_discrepancy));
    println!("eps2_difference={}", num(rep.eps2_difference));
    let mut t = ReportTable::new("verify-reduced", &l.name, &l.tol, &["degree", "discrepancy"]);
    for (d, v) in &rep.per_degree {
        t.push(vec![d.to_string(), num(*v)]);
    }
    for (i, (g, c)) in rep.eps2_generic.iter().zip(&rep.eps2_closed).enumerate() {
        t.notes.push(format!("eps2 component {} generic={} closed={}", i + 1, num(*g), num(*c)));
    }
    t.emit(common.out.as_deref())
}

fn fold_exit(common: &Common, rho: f64, eps: &str) -> Result<()> {
    let l = load(common)?;
    let grid = parse_eps_grid(eps)?;
    let rep = fold_exit_experiment(&l.file.spec, rho, &grid, &FoldExitOptions::default(), &l.tol)?;
    let mut t = ReportTable::new("fold-exit", &l.name, &l.tol, &["eps", "y_out", "steps", "status"]);
    t.notes.push(format!("rho={}", num(rho)));
    for row in &rep.rows {
        match &row.y_out {
            Ok(y) => t.push(vec![num(row.eps), num(*y), row.steps.to_string(), "ok".into()]),
            Err(e) => t.push(vec![num(row.eps), String::new(), row.steps.to_string(), e.to_string()]),
        }
    }
    let fit = &rep.fit;
    let line = format!(
        "slope={} intercept={} r_squared={} points={}",
        num(fit.slope),
        num(fit.intercept),
        num(fit.r_squared),
        fit.eps_values.len()
    );
    t.notes.push(line.clone());
    match &common.out {
        Some(out) => {
            t.emit(Some(out))?;
            println!("{line}");
        }
        None => t.emit(None)?,
    }
    Ok(())
}

fn branch_select(common: &Common, eps: &str, case: Option<&str>) -> Result<()> {
    let l = load(common)?;
    let spec = &l.file.spec;
    let grid = parse_eps_grid(eps)?;
    let case = match case {
        Some(c) => c.parse::<PlanarCase>()?,
        None => match l.file.case {
            Some(c) => c,
            None => classify_planar_singularity(spec, &l.tol)?.case,
        },
    };
    let opts = BranchOptions::default();
    let mut t = ReportTable::new(
        "branch-select",
        &l.name,
        &l.tol,
        &["eps", "label", "lambda", "lambda_critical", "exit_face", "exit_x", "exit_y", "fiber_distance", "seeds"],
    );
    for &e in &grid {
        let out = branch_selection_experiment(spec, case, e, &opts, &l.tol)?;
        let s0 = &out.seeds[0];
        println!("eps={} label={} lambda={}", num(e), out.label, num(out.lambda));
        t.push(vec![
            num(e),
            out.label.to_string(),
            num(out.lambda),
            num(out.lambda_critical),
            s0.exit_face.to_string(),
            num(s0.exit_point[0]),
            num(s0.exit_point[1]),
            num(out.fiber_distance(spec)),
            out.seeds.len().to_string(),
        ]);
    }
    if let Some(out) = &common.out {
        t.emit(Some(out))?;
    }
    Ok(())
}

fn contact(common: &Common, point: Option<&str>) -> Result<()> {
    let l = load(common)?;
    let spec = &l.file.spec;
    let z = parse_point(point, spec.base_point())?;
    let rep = check_regular_contact(spec, &z, &l.tol)?;
    println!("rank_dfn={}", rep.rank_dfn);
    println!("rank_df={}", rep.rank_df);
    println!("nondegeneracy={}", num(rep.nondegeneracy));
    println!("slow_regularity={}", num(rep.slow_regularity.norm()));
    println!("regular_contact={}", rep.is_contact);
    Ok(())
}

fn jet_rows(t: &mut ReportTable, object: &str, component: usize, j: &Jet) {
    for (idx, c) in j.terms() {
        let exps: Vec<String> = idx.exps().iter().map(u32::to_string).collect();
        t.push(vec![object.to_string(), component.to_string(), exps.join(" "), num(c)]);
    }
}

fn center_manifold(common: &Common, order: Option<u32>) -> Result<()> {
    let l = load(common)?;
    let order = order_or_spec(order, &l);
    let nf = cm_normal_form_transform(&l.file.spec, &l.tol)?;
    let cm = center_manifold_restricted_map(&nf, order, &l.tol)?;
    let emb = embed_on_center_manifold(&cm, order)?;
    println!("invariance_residual={}", num(cm.invariance_residual));
    println!("multiplier={}", num(cm.multiplier));
    println!("linear_discrepancy={}", num(emb.linear_discrepancy));
    println!("quadratic_discrepancy={}", num(emb.quadratic_discrepancy));
    println!("uu_generic={} uu_closed={}", num(emb.uu_generic), num(emb.uu_closed));
    if let Some(out) = &common.out {
        let mut t = ReportTable::new("center-manifold", &l.name, &l.tol, &["object", "component", "exponents", "coefficient"]);
        t.notes.push("variables x_1..x_k, u, eps".into());
        for (i, w) in cm.w.iter().enumerate() {
            jet_rows(&mut t, "W", i + 1, w);
        }
        for (i, c) in cm.restricted_n.iter().enumerate() {
            jet_rows(&mut t, "N", i + 1, c);
        }
        for (i, c) in cm.restricted_g.iter().enumerate() {
            jet_rows(&mut t, "G", i + 1, c);
        }
        for (i, c) in emb.embedding.v.iter().enumerate() {
            jet_rows(&mut t, "V", i + 1, c);
        }
        t.emit(Some(out))?;
    }
    Ok(())
}

const SELFTEST_FOLD: &str = "dims 2 1\norder 4\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n2 0 : 1\n0 1 : -1\n\
    [G 1]\n0 0 0 : 0\n[G 2]\n0 0 0 : -1\n";

fn check(name: &str, ok: bool, detail: String, failures: &mut usize) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        *failures += 1;
    }
}

fn selftest() -> Result<()> {
    let tol = Tolerances::default();
    let mut failures = 0;
    let fold = parse_mapspec(SELFTEST_FOLD)?.spec;

    let class = classify_point(&fold, &[0.0, 0.0], &tol)?;
    check("classify fold", class.to_string() == "FoldContact unipotent_index=1", class.to_string(), &mut failures);

    let e = embed_2d(&fold, &tol)?;
    check(
        "planar embedding",
        e.field_case.case == PlanarCase::Fold && e.factor_residual <= 1e-8,
        format!("field case {}, factor residual {:e}", e.field_case.case, e.factor_residual),
        &mut failures,
    );

    let v = &e.embedding.v;
    let z = [0.02, -0.01, 0.005];
    let flow = fsmap::integrate_time1_jet(v, &z)?;
    let map = fold.extended_map_jet().eval(&z);
    let err = flow.iter().zip(&map).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check("time-1 flow vs map", err < 1e-7, format!("difference {err:e}"), &mut failures);

    let round = parse_mapspec(&emit_mapspec(&MapSpecFile::new(fold.clone())))?.spec;
    check("spec round trip", round == fold, "parse(emit(spec)) = spec".into(), &mut failures);

    let rep = fold_exit_experiment(&fold, 0.1, &[1e-3, 2e-3], &FoldExitOptions::default(), &tol)?;
    let ys: Vec<f64> = rep.rows.iter().filter_map(|r| r.y_out.as_ref().ok().copied()).collect();
    check(
        "fold exit monotone",
        ys.len() == 2 && ys[0] < 0.0 && ys[1] < ys[0],
        format!("y_out {ys:?}"),
        &mut failures,
    );

    if failures > 0 {
        return Err(CliError::Internal(format!("{failures} self-test check(s) failed")));
    }
    Ok(())
}
