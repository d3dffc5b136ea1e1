use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fsmap::parse_mapspec;
use tempfile::TempDir;

const FOLD: &str = "dims 2 1\norder 4\nbase 0 0\n[N 1 1]\n0 0 : 1\n[f 1]\n2 0 : 1\n0 1 : -1\n\
    [G 1]\n0 0 0 : 0\n[G 2]\n0 0 0 : -1\n";

const TRANSCRITICAL: &str = "dims 2 1\norder 4\nbase 0 0\ncase transcritical\n[N 1 1]\n0 0 : 1\n\
    [f 1]\n2 0 : 1\n0 2 : -1\n[G 1]\n0 0 0 : 0.5\n[G 2]\n0 0 0 : 1\n";

fn fsmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsmap")).args(args).output().expect("binary runs")
}

fn write_spec(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn classify_reports_fold_contact() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "fold.map", FOLD);
    let o = fsmap(&["classify", "--spec", s(&spec)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "FoldContact unipotent_index=1");
}

#[test]
fn embed_writes_a_parseable_euler_spec() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "fold.map", FOLD);
    let out = dir.path().join("V.map");
    let o = fsmap(&["embed", "--spec", s(&spec), "--order", "4", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let residual: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("residual="))
        .expect("residual line")
        .parse()
        .unwrap();
    assert!(residual <= 1e-9, "residual {residual}");
    assert!(text.contains("matched_order=4"));
    let file = parse_mapspec(&fs::read_to_string(&out).unwrap()).expect("embedded field parses");
    assert_eq!(file.spec.n(), 2);
}

#[test]
fn fold_exit_table_has_one_row_per_eps() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "fold.map", FOLD);
    let out = dir.path().join("exits.csv");
    let o = fsmap(&["fold-exit", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("slope="));
    let table = fs::read_to_string(&out).unwrap();
    assert!(table.starts_with("# tool fsmap"));
    let body: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "eps,y_out,steps,status");
    assert_eq!(body.len(), 14);
    assert!(body[1..].iter().all(|r| r.ends_with(",ok")));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "fold.map", FOLD);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = fsmap(&["fold-exit", "--spec", s(&spec), "--eps", "1e-3:1e-2:log:4", "--out", s(out)]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn branch_select_follows_the_exchange_of_stability() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "tc.map", TRANSCRITICAL);
    let o = fsmap(&["branch-select", "--spec", s(&spec)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("label=ExchangeOfStability"), "{}", stdout(&o));
}

#[test]
fn contact_holds_at_the_fold() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(&dir, "fold.map", FOLD);
    let o = fsmap(&["contact", "--spec", s(&spec)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("regular_contact=true"));
}

#[test]
fn selftest_passes() {
    let o = fsmap(&["selftest"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(!text.contains("FAIL"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let fold = write_spec(&dir, "fold.map", FOLD);
    let broken = write_spec(&dir, "broken.map", "dims 2\n[f 1]\nnonsense\n");
    let missing = dir.path().join("missing.map");
    let cases: Vec<Vec<&str>> = vec![
        vec!["classify", "--spec", s(&missing)],
        vec!["classify", "--spec", s(&broken)],
        vec!["classify", "--spec", s(&fold), "--point", "1,2,3"],
        vec!["classify", "--spec", s(&fold), "--tol", "bogus=1"],
        vec!["reduce", "--spec", s(&fold)],
        vec!["fold-exit", "--spec", s(&fold), "--eps", "0:1:log:3"],
        vec!["no-such-command"],
    ];
    for args in cases {
        let o = fsmap(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}
