//! Line-oriented text format for fast-slow map specs.
//!
//! ```text
//! name fold
//! dims 2 1
//! order 4
//! base 0 0
//! [N 1 1]
//! 0 0 : 1
//! [f 1]
//! 2 0 : 1
//! 0 1 : -1
//! [G 1]
//! 0 0 0 : 0
//! [G 2]
//! 0 0 0 : -1
//! ```
//!
//! Indices in section headers are 1-based. Monomial lines list one exponent
//! per variable (`n` for `N` and `f`, `n + 1` for `G` with ε last). `#`
//! starts a comment. Missing `N` entries are zero; every `f` and `G`
//! component needs a section with at least one line.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fastslow::FastSlowMapSpec;
use crate::jet::{Jet, JetVector};
use crate::singularity::PlanarCase;

/// A parsed spec together with its optional metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct MapSpecFile {
    pub spec: FastSlowMapSpec,
    pub name: Option<String>,
    pub description: Option<String>,
    pub case: Option<PlanarCase>,
}

impl MapSpecFile {
    pub fn new(spec: FastSlowMapSpec) -> Self {
        MapSpecFile { spec, name: None, description: None, case: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    N(usize, usize),
    F(usize),
    G(usize),
}

impl Section {
    fn label(&self) -> String {
        match self {
            Section::N(i, j) => format!("N {} {}", i + 1, j + 1),
            Section::F(i) => format!("f {}", i + 1),
            Section::G(i) => format!("G {}", i + 1),
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| parse_err(line, format!("invalid number {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite number {tok:?}")));
    }
    Ok(v)
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse().map_err(|_| parse_err(line, format!("invalid integer {tok:?}")))
}

fn parse_index(tok: &str, bound: usize, what: &str, line: usize) -> Result<usize> {
    let i = parse_usize(tok, line)?;
    if i == 0 || i > bound {
        return Err(parse_err(line, format!("{what} index {i} out of range 1..={bound}")));
    }
    Ok(i - 1)
}

struct Header {
    n: usize,
    k: usize,
    order: u32,
    base: Vec<f64>,
}

/// Parses the text format and validates the result (shapes, orders and the
/// full-column-rank condition on `N` at the base point).
pub fn parse_mapspec(text: &str) -> Result<MapSpecFile> {
    let mut name = None;
    let mut description = None;
    let mut case = None;
    let mut dims: Option<(usize, usize)> = None;
    let mut order: Option<u32> = None;
    let mut base: Option<Vec<f64>> = None;
    let mut header: Option<Header> = None;
    let mut sections: BTreeMap<Section, (usize, BTreeMap<Vec<u32>, f64>)> = BTreeMap::new();
    let mut current: Option<Section> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line_no, "section header must end with ']'"))?;
            if header.is_none() {
                let (n, k) = dims.ok_or_else(|| parse_err(line_no, "missing 'dims' line before sections"))?;
                let r = order.ok_or_else(|| parse_err(line_no, "missing 'order' line before sections"))?;
                let b = base.take().ok_or_else(|| parse_err(line_no, "missing 'base' line before sections"))?;
                if b.len() != n {
                    return Err(parse_err(line_no, format!("base has {} entries, dims says {n}", b.len())));
                }
                if k >= n {
                    return Err(parse_err(line_no, format!("slow dimension {k} must be below {n}")));
                }
                header = Some(Header { n, k, order: r, base: b });
            }
            let h = header.as_ref().expect("header set above");
            let toks: Vec<&str> = inner.split_whitespace().collect();
            let m = h.n - h.k;
            let sec = match toks.as_slice() {
                ["N", i, j] => {
                    Section::N(parse_index(i, h.n, "row", line_no)?, parse_index(j, m, "column", line_no)?)
                }
                ["f", i] => Section::F(parse_index(i, m, "f", line_no)?),
                ["G", i] => Section::G(parse_index(i, h.n, "G", line_no)?),
                _ => return Err(parse_err(line_no, format!("unknown section [{inner}]"))),
            };
            if sections.contains_key(&sec) {
                return Err(parse_err(line_no, format!("duplicate section [{}]", sec.label())));
            }
            sections.insert(sec, (line_no, BTreeMap::new()));
            current = Some(sec);
            continue;
        }
        if let Some(sec) = current {
            let h = header.as_ref().expect("sections only after header");
            let (lhs, rhs) = line
                .split_once(':')
                .ok_or_else(|| parse_err(line_no, "monomial line needs 'exponents : coefficient'"))?;
            let vars = match sec {
                Section::G(_) => h.n + 1,
                _ => h.n,
            };
            let exps = lhs
                .split_whitespace()
                .map(|t| t.parse::<u32>().map_err(|_| parse_err(line_no, format!("invalid exponent {t:?}"))))
                .collect::<Result<Vec<u32>>>()?;
            if exps.len() != vars {
                return Err(parse_err(
                    line_no,
                    format!("expected {vars} exponents in [{}], got {}", sec.label(), exps.len()),
                ));
            }
            let degree: u32 = exps.iter().sum();
            if degree > h.order {
                return Err(parse_err(line_no, format!("monomial degree {degree} exceeds order {}", h.order)));
            }
            let coeff = parse_f64(rhs.trim(), line_no)?;
            let terms = &mut sections.get_mut(&sec).expect("current section exists").1;
            if terms.insert(exps, coeff).is_some() {
                return Err(parse_err(line_no, format!("duplicate term in [{}]", sec.label())));
            }
            continue;
        }
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let toks: Vec<&str> = rest.split_whitespace().collect();
        match key {
            "name" => name = Some(rest.to_string()),
            "description" => description = Some(rest.to_string()),
            "case" => case = Some(rest.parse::<PlanarCase>().map_err(|e| parse_err(line_no, e.to_string()))?),
            "dims" => {
                if toks.len() != 2 {
                    return Err(parse_err(line_no, "'dims' needs two integers n k"));
                }
                dims = Some((parse_usize(toks[0], line_no)?, parse_usize(toks[1], line_no)?));
            }
            "order" => {
                if toks.len() != 1 {
                    return Err(parse_err(line_no, "'order' needs one integer"));
                }
                let r = toks[0].parse::<u32>().map_err(|_| parse_err(line_no, format!("invalid order {:?}", toks[0])))?;
                order = Some(r);
            }
            "base" => {
                base = Some(toks.iter().map(|t| parse_f64(t, line_no)).collect::<Result<Vec<f64>>>()?);
            }
            _ => return Err(parse_err(line_no, format!("unknown keyword {key:?}"))),
        }
    }

    let last_line = text.lines().count().max(1);
    let h = header.ok_or_else(|| parse_err(last_line, "missing section f 1"))?;
    let m = h.n - h.k;
    let mut jet_of = |sec: Section, vars: usize, required: bool| -> Result<Jet> {
        match sections.remove(&sec) {
            Some((line, terms)) if terms.is_empty() => {
                if required {
                    Err(parse_err(line, format!("missing section {} (no terms)", sec.label())))
                } else {
                    Ok(Jet::zero(vars, h.order))
                }
            }
            Some((line, terms)) => Jet::from_terms(vars, h.order, terms).map_err(|e| parse_err(line, e.to_string())),
            None if required => Err(parse_err(last_line, format!("missing section {}", sec.label()))),
            None => Ok(Jet::zero(vars, h.order)),
        }
    };
    let mut n_mat = Vec::with_capacity(h.n);
    for i in 0..h.n {
        let mut row = Vec::with_capacity(m);
        for j in 0..m {
            row.push(jet_of(Section::N(i, j), h.n, false)?);
        }
        n_mat.push(row);
    }
    let f = (0..m).map(|i| jet_of(Section::F(i), h.n, true)).collect::<Result<Vec<_>>>()?;
    let g = (0..h.n).map(|i| jet_of(Section::G(i), h.n + 1, true)).collect::<Result<Vec<_>>>()?;
    let spec = FastSlowMapSpec::new(h.n, h.k, h.order, h.base, n_mat, f, g)?;
    Ok(MapSpecFile { spec, name, description, case })
}

fn write_jet(out: &mut String, j: &Jet, always: bool) {
    if j.is_zero() {
        if always {
            let zeros = vec!["0"; j.num_vars()].join(" ");
            let _ = writeln!(out, "{zeros} : 0");
        }
        return;
    }
    for (idx, c) in j.terms() {
        let exps: Vec<String> = idx.exps().iter().map(u32::to_string).collect();
        let _ = writeln!(out, "{} : {c:?}", exps.join(" "));
    }
}

/// Writes a spec in the text format. Coefficients use the shortest
/// representation that parses back to the same `f64`.
pub fn emit_mapspec(file: &MapSpecFile) -> String {
    let spec = &file.spec;
    let mut out = String::new();
    if let Some(name) = &file.name {
        let _ = writeln!(out, "name {name}");
    }
    if let Some(d) = &file.description {
        let _ = writeln!(out, "description {d}");
    }
    if let Some(c) = &file.case {
        let _ = writeln!(out, "case {c}");
    }
    let _ = writeln!(out, "dims {} {}", spec.n(), spec.k());
    let _ = writeln!(out, "order {}", spec.order());
    let base: Vec<String> = spec.base_point().iter().map(|x| format!("{x:?}")).collect();
    let _ = writeln!(out, "base {}", base.join(" "));
    for i in 0..spec.n() {
        for j in 0..spec.fast_dim() {
            let e = spec.n_entry(i, j);
            if !e.is_zero() {
                let _ = writeln!(out, "[N {} {}]", i + 1, j + 1);
                write_jet(&mut out, e, false);
            }
        }
    }
    for (i, fi) in spec.f_jets().iter().enumerate() {
        let _ = writeln!(out, "[f {}]", i + 1);
        write_jet(&mut out, fi, true);
    }
    for (i, gi) in spec.g_jets().iter().enumerate() {
        let _ = writeln!(out, "[G {}]", i + 1);
        write_jet(&mut out, gi, true);
    }
    out
}

/// Encodes a field `V(h, ε)` on `n + 1` variables (ε last, `V_ε = 0`) as
/// the spec of its Euler map `z ↦ z + V(z − base, ε)`: `dims n 0`, `N = I`,
/// `f = V(·, 0)` and `G = (V − V|_{ε=0}) / ε`.
pub fn euler_spec(v: &JetVector, base: &[f64]) -> Result<FastSlowMapSpec> {
    let nv = v.num_vars();
    if v.len() != nv || nv < 2 || base.len() != nv - 1 {
        return Err(Error::Structure(format!(
            "need a field in n + 1 variables with an n-point base, got {} components in {nv} variables and {} base entries",
            v.len(),
            base.len()
        )));
    }
    let n = nv - 1;
    if !v.get(n).is_zero() {
        return Err(Error::Structure("the ε component of the field must vanish".into()));
    }
    let order = v.order();
    let mut f = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for c in v.iter().take(n) {
        let (q, rem) = c.div_by_var(n);
        let terms = rem.terms().map(|(k, x)| (k.exps()[..n].to_vec(), x)).collect::<Vec<_>>();
        f.push(Jet::from_terms(n, order, terms)?);
        g.push(q.with_order(order).with_reliable_order(order));
    }
    let n_mat = (0..n)
        .map(|i| (0..n).map(|j| Jet::constant(n, order, if i == j { 1.0 } else { 0.0 })).collect())
        .collect();
    FastSlowMapSpec::new(n, 0, order, base.to_vec(), n_mat, f, g)
}
