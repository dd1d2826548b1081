use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name).to_str().unwrap().to_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varflex")).args(args).env_remove("VARFLEX_THREADS").output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    let out = run(args);
    out.status.code().unwrap_or_else(|| panic!("killed: {}", String::from_utf8_lossy(&out.stderr)))
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_owned()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> String {
        s(&self.dir.path().join(name))
    }

    fn write(&self, name: &str, text: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    fn error_model(&self) -> String {
        let out = self.path("em.json");
        assert_eq!(code(&["fit-errors", "--history", &fixture("solar_history.csv"), "--out", &out]), 0);
        out
    }

    fn sweep(&self, network: &str, profiles: &str, extra: &[&str]) -> i32 {
        let em = self.error_model();
        let (table, dispatch) = (self.path("table.csv"), self.path("dispatch.json"));
        let net = fixture(&format!("{network}.json"));
        let prof = fixture(profiles);
        let mut args = vec!["sweep", "--network", &net, "--profiles", &prof, "--error-model", &em];
        args.extend(["--out", &table, "--dispatch", &dispatch]);
        args.extend(extra);
        code(&args)
    }
}

#[test]
fn fit_errors_exit_codes() {
    let w = Work::new();
    let em = w.error_model();
    let text = std::fs::read_to_string(&em).unwrap();
    assert!(text.contains("\"bins\""));
    assert!(Path::new(&format!("{em}.manifest.json")).exists());

    let night = w.write(
        "night.csv",
        "timestamp,forecast_kw,actual_kw,capacity_kw\n2023-01-01T00:00,0,0,1000\n2023-01-01T01:00,0,0,1000\n",
    );
    assert_eq!(code(&["fit-errors", "--history", &night, "--out", &w.path("x.json")]), 3);

    let bad = w.write("bad.csv", "timestamp,forecast_kw,actual_kw,capacity_kw\n2023-01-01T00:00,abc,0,1000\n");
    assert_eq!(code(&["fit-errors", "--history", &bad, "--out", &w.path("x.json")]), 2);
    assert_eq!(code(&["fit-errors", "--history", &w.path("missing.csv"), "--out", &w.path("x.json")]), 2);
    assert_eq!(code(&["fit-errors", "--out", &w.path("x.json")]), 2);
}

#[test]
fn sweep_writes_72_rows() {
    let w = Work::new();
    assert_eq!(w.sweep("four_bus", "profiles.csv", &["--svg", &w.path("fig.svg")]), 0);
    let table = w.read("table.csv");
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "hour,probability,q_sub_max_kvar,q_sub_min_kvar,status,base_load_kvar");
    assert_eq!(lines.count(), 72);
    assert!(w.read("fig.svg").starts_with("<svg"));
    assert!(w.read("dispatch.json").contains("\"records\""));
}

#[test]
fn sweep_rejects_bad_levels_and_limits() {
    let w = Work::new();
    assert_eq!(w.sweep("four_bus", "profiles.csv", &["--levels", "0.5,1.0"]), 2);
    assert_eq!(w.sweep("four_bus", "profiles.csv", &["--levels", "0"]), 2);
    assert_eq!(w.sweep("four_bus", "profiles.csv", &["--v-lo", "1.1", "--v-hi", "1.0"]), 2);
    let broken = w.write("net.json", "{\"buses\": []}");
    let em = w.error_model();
    let prof = fixture("profiles.csv");
    let out = w.path("t.csv");
    assert_eq!(code(&["sweep", "--network", &broken, "--profiles", &prof, "--error-model", &em, "--out", &out]), 2);
}

#[test]
fn night_rows_are_identical_across_levels() {
    let w = Work::new();
    assert_eq!(w.sweep("four_bus", "profiles_night.csv", &[]), 0);
    let table = w.read("table.csv");
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    for hour in rows.chunks(3) {
        for r in &hour[1..] {
            assert_eq!(r[2..], hour[0][2..]);
        }
    }
}

fn validate(w: &Work, dispatch: &str, n: &str, extra: &[&str]) -> i32 {
    let em = w.path("em.json");
    let net = fixture("four_bus.json");
    let mut args = vec!["validate", "--dispatch", dispatch, "--network", &net, "--error-model", &em, "-n", n];
    args.extend(extra);
    code(&args)
}

#[test]
fn validate_exit_codes() {
    let w = Work::new();
    assert_eq!(w.sweep("four_bus", "profiles_night.csv", &[]), 0);
    let night = w.path("night_dispatch.json");
    std::fs::rename(w.path("dispatch.json"), &night).unwrap();
    assert_eq!(validate(&w, &night, "1000", &["--check-voltages", "--out", &w.path("r0.json")]), 0);

    assert_eq!(w.sweep("four_bus", "profiles.csv", &[]), 0);
    let dispatch = w.path("dispatch.json");
    assert_eq!(validate(&w, &dispatch, "10000", &["--probability", "0.976", "--out", &w.path("r1.json")]), 0);
    let reports: serde_json::Value = serde_json::from_str(&w.read("r1.json")).unwrap();
    assert!(reports.as_array().is_some_and(|a| !a.is_empty()));

    let mut doc: serde_json::Value = serde_json::from_str(&w.read("dispatch.json")).unwrap();
    for rec in doc["records"].as_array_mut().unwrap() {
        for der in rec["ders"].as_array_mut().unwrap() {
            for key in ["q_max_dispatch_kvar", "q_min_dispatch_kvar"] {
                let q = der[key].as_f64().unwrap();
                der[key] = serde_json::json!(2.0 * q);
            }
        }
    }
    let inflated = w.write("inflated.json", &doc.to_string());
    assert_eq!(
        validate(&w, &inflated, "1000", &["--probability", "0.976", "--hours", "12", "--out", &w.path("r2.json")]),
        5
    );

    assert_eq!(validate(&w, &dispatch, "1000", &["--alpha", "1.5"]), 2);
    assert_eq!(validate(&w, &dispatch, "10", &[]), 2);
    let garbage = w.write("garbage.json", "{");
    assert_eq!(validate(&w, &garbage, "1000", &[]), 2);
}

#[test]
fn pf_exit_codes() {
    let w = Work::new();
    let net = fixture("ieee13_like.json");
    let out = run(&["pf", "--network", &net]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.lines().count() > 10);

    let inj = w.write("inj.csv", "bus,phase,p_kw,q_kvar\n675,a,100,-20\n675,b,100,0\n");
    assert_eq!(code(&["pf", "--network", &net, "--injections", &inj, "--out", &w.path("v.csv")]), 0);
    assert!(w.read("v.csv").lines().count() > 10);

    assert_eq!(code(&["pf", "--network", &net, "--max-iter", "1", "--tol", "1e-14"]), 4);
    let unknown = w.write("unknown.csv", "bus,phase,p_kw,q_kvar\nnowhere,a,1,0\n");
    assert_eq!(code(&["pf", "--network", &net, "--injections", &unknown]), 2);
}

#[test]
fn plot_rerenders_the_table() {
    let w = Work::new();
    assert_eq!(w.sweep("four_bus", "profiles.csv", &["--svg", &w.path("a.svg")]), 0);
    assert_eq!(code(&["plot", "--table", &w.path("table.csv"), "--out", &w.path("b.svg")]), 0);
    assert_eq!(w.read("a.svg"), w.read("b.svg"));
    let junk = w.write("junk.csv", "not,a,table\n");
    assert_eq!(code(&["plot", "--table", &junk, "--out", &w.path("c.svg")]), 2);
}

#[test]
fn manifest_reruns_are_byte_identical() {
    let w = Work::new();
    assert_eq!(w.sweep("four_bus", "profiles.csv", &["--levels", "0.6,0.9"]), 0);
    let manifest = format!("{}.manifest.json", w.path("table.csv"));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "sweep");
    assert_eq!(m["params"]["levels"], serde_json::json!([0.6, 0.9]));
    assert!(!std::fs::read_to_string(&manifest).unwrap().contains("time"));

    let (t2, d2) = (w.path("t2.csv"), w.path("d2.json"));
    assert_eq!(code(&["sweep", "--config", &manifest, "--out", &t2, "--dispatch", &d2]), 0);
    assert_eq!(w.read("table.csv"), w.read("t2.csv"));
    assert_eq!(w.read("dispatch.json"), w.read("d2.json"));

    // A flag overrides the manifest.
    assert_eq!(code(&["sweep", "--config", &manifest, "--out", &t2, "--dispatch", &d2, "--levels", "0.5"]), 0);
    assert_eq!(w.read("t2.csv").lines().count(), 25);

    let fit_manifest = format!("{}.manifest.json", w.path("em.json"));
    assert_eq!(code(&["sweep", "--config", &fit_manifest, "--out", &t2]), 2);
}
