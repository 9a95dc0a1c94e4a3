use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cdm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdm")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cdm(dir, args);
    assert!(out.status.success(), "cdm {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    let out = cdm(dir, args);
    if !out.status.success() {
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(!err.trim().is_empty(), "no diagnostic for {args:?}");
    }
    out.status.code().unwrap()
}

fn nums(line: &str) -> Vec<f64> {
    line.split_whitespace().map(|t| t.parse().unwrap()).collect()
}

const STRUCTURE: &str = "integrator = 1\nchannel.u = k0 k1\nchannel.theta = k2 k3\nchannel.w = k4\nreference = dc:u\n";
const SPEED_TARGET: &str = "1211.08 13168.72 7901.235 2370.37 355.5556 26.6667 1\n";

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("lv.txt"), "# longitudinal hover\n0.9581 11.0203 41.4357 321.7496 31.6547 1\n").unwrap();
    fs::write(dir.path().join("structure.txt"), STRUCTURE).unwrap();
    fs::write(dir.path().join("speed.txt"), SPEED_TARGET).unwrap();
    dir
}

#[test]
fn square_of_hover_polynomial() {
    let dir = workspace();
    ok(dir.path(), &["square", "lv.txt", "--out", "sq.txt"]);
    let got = nums(&fs::read_to_string(dir.path().join("sq.txt")).unwrap());
    let want = [0.9179, 42.0507, -5313.9622, 100921.5997, 358.5208, 1.0];
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() / w.abs() < 1e-3, "{g} vs {w}");
    }
}

#[test]
fn target_then_square_gives_standard_squared_polynomial() {
    let dir = workspace();
    ok(
        dir.path(),
        &["target", "--order", "6", "--tau", "2", "--gamma", "2.5,2,2,2,2", "--a0", "1562.5", "--out", "t.txt"],
    );
    assert_eq!(ok(dir.path(), &["square", "t.txt"]), "2441406.25 1953125 625000 121875 5000 0 1\n");
    // default gammas are the standard form
    assert_eq!(
        ok(dir.path(), &["target", "--order", "6", "--tau", "2", "--a0", "1562.5"]),
        "1562.5 3125 2500 1000 200 20 1\n"
    );
}

#[test]
fn sqroot_inverts_square() {
    let dir = workspace();
    ok(dir.path(), &["square", "lv.txt", "--out", "sq.txt"]);
    // the hover plant is unstable, so the stable root differs from it but squares back
    ok(dir.path(), &["sqroot", "sq.txt", "--out", "root.txt"]);
    ok(dir.path(), &["square", "root.txt", "--out", "sq2.txt"]);
    let a = nums(&fs::read_to_string(dir.path().join("sq.txt")).unwrap());
    let b = nums(&fs::read_to_string(dir.path().join("sq2.txt")).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0));
    }
}

#[test]
fn indices_report() {
    let dir = workspace();
    let out = ok(dir.path(), &["indices", "speed.txt"]);
    assert!(out.starts_with("tau = 10.873534366\n"), "{out}");
    assert!(out.contains("gamma_star[1] = "));
    assert!(out.contains("sufficiently_stable = "));
    let csv = ok(dir.path(), &["indices", "speed.txt", "--format", "csv"]);
    assert!(csv.starts_with("index,gamma,gamma_star,tau_i\n1,"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn design_reproduces_speed_gains() {
    let dir = workspace();
    let out = ok(
        dir.path(),
        &[
            "design",
            "--plant",
            "corpus:longitudinal_speed",
            "--structure",
            "structure.txt",
            "--target",
            "speed.txt",
            "--show-system",
        ],
    );
    assert!(out.contains("# s^5: -41.8*k1 = -4.9833\n"), "{out}");
    let k1: f64 = out.lines().find_map(|l| l.strip_prefix("k1=")).unwrap().parse().unwrap();
    assert!((k1 - 0.11932152086877).abs() / 0.11932152086877 < 1e-3);
}

#[test]
fn hover_weights_and_design() {
    let dir = workspace();
    fs::write(dir.path().join("pp.txt"), "77073466.2926 34683059 6242950.7697 684773.6626 15802.4691 0 1\n").unwrap();
    let out = ok(dir.path(), &["lq-weights", "--target", "pp.txt", "--plant", "corpus:longitudinal_hover", "--design"]);
    assert!(out.contains("# warning: qu[0] is negative"));
    assert!(out.contains("r = 1\n"));
    let cl = nums(out.lines().find_map(|l| l.strip_prefix("closed_loop = ")).unwrap());
    let root = nums(&ok(dir.path(), &["sqroot", "pp.txt"]));
    for (a, b) in cl.iter().zip(&root) {
        assert!((a - b).abs() / b.abs() < 1e-6);
    }
}

#[test]
fn lqr_scalar_case() {
    let dir = workspace();
    fs::write(dir.path().join("sys.txt"), "1 1 1\n1\n1\n1\n0\n").unwrap();
    fs::write(dir.path().join("q.txt"), "3\n").unwrap();
    fs::write(dir.path().join("r.txt"), "1\n").unwrap();
    let out = ok(dir.path(), &["lqr", "--system", "sys.txt", "--q", "q.txt", "--r", "r.txt"]);
    assert!(out.starts_with("K\n3\nP\n3\npoles\n-2 0\n"), "{out}");
    assert!(out.contains("pp_from_h = 4 1\n"));
    // indefinite Q needs the explicit flag
    fs::write(dir.path().join("qn.txt"), "-0.5\n").unwrap();
    assert_eq!(code(dir.path(), &["lqr", "--system", "sys.txt", "--q", "qn.txt", "--r", "r.txt"]), 1);
    ok(dir.path(), &["lqr", "--system", "sys.txt", "--q", "qn.txt", "--r", "r.txt", "--indefinite"]);
}

#[test]
fn simulate_outputs() {
    let dir = workspace();
    ok(
        dir.path(),
        &[
            "design",
            "--plant",
            "corpus:longitudinal_speed",
            "--structure",
            "structure.txt",
            "--target",
            "speed.txt",
            "--out",
            "g.txt",
        ],
    );
    let loop_args = ["--plant", "corpus:longitudinal_speed", "--structure", "structure.txt", "--gains", "g.txt"];
    let mut args = vec!["simulate"];
    args.extend(loop_args);
    args.extend(["--step", "u=1", "--t-end", "2", "--dt", "0.01"]);
    let csv = ok(dir.path(), &args);
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("time,z4,z3,z2,z1,z0,c0,u,q,theta,w,delta_lon,r,d"), "{header}");
    assert_eq!(csv.lines().count(), 202);
    args.extend(["--format", "text"]);
    let text = ok(dir.path(), &args);
    assert!(text.starts_with("channel = u\nsteady_state_error = "));
    // a too-large step is a domain error
    let mut bad = vec!["simulate"];
    bad.extend(loop_args);
    bad.extend(["--step", "u=1", "--dt", "0.5"]);
    assert_eq!(code(dir.path(), &bad), 1);
    // state-space input with cost weights
    fs::write(dir.path().join("sys.txt"), "1 1 1\n-1\n1\n1\n0\n").unwrap();
    fs::write(dir.path().join("one.txt"), "1\n").unwrap();
    let text = ok(
        dir.path(),
        &[
            "simulate", "--system", "sys.txt", "--step", "y1=1", "--t-end", "5", "--cost-q", "one.txt", "--cost-r",
            "one.txt", "--format", "text", "--exact",
        ],
    );
    assert!(text.contains("cost_J = "));
}

#[test]
fn sweep_writes_report_directory() {
    let dir = workspace();
    ok(
        dir.path(),
        &[
            "design",
            "--plant",
            "corpus:longitudinal_speed",
            "--structure",
            "structure.txt",
            "--target",
            "speed.txt",
            "--out",
            "g.txt",
        ],
    );
    let base = [
        "sweep",
        "--plant",
        "corpus:longitudinal_speed",
        "--structure",
        "structure.txt",
        "--gains",
        "g.txt",
        "--perturb",
        "den[0]=0.3",
        "--perturb",
        "den[1]=0.3",
        "--perturb",
        "den[2]=0.3",
        "--samples",
        "12",
        "--seed",
        "5",
    ];
    let mut args = base.to_vec();
    args.extend(["--out", "sw"]);
    ok(dir.path(), &args);
    let report = fs::read_to_string(dir.path().join("sw/report.txt")).unwrap();
    assert!(report.starts_with("samples = 12\nstable = 12\n"), "{report}");
    let samples = fs::read_to_string(dir.path().join("sw/samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 13);
    // stdout variant matches the file
    assert_eq!(ok(dir.path(), &base), report);
    let mut bad = base.to_vec();
    bad.extend(["--perturb", "nope=0.1"]);
    assert_eq!(code(dir.path(), &bad), 2);
}

#[test]
fn diagram_and_corpus() {
    let dir = workspace();
    let csv = ok(dir.path(), &["diagram", "speed.txt", "lv.txt"]);
    assert!(csv.starts_with("label,index,coefficient,abs_coefficient,sign\nspeed,0,1211.08,1211.08,1\n"));
    assert_eq!(csv.lines().count(), 1 + 7 + 6);
    let text = ok(dir.path(), &["diagram", "speed.txt", "--format", "text"]);
    assert!(text.contains("tau"));
    assert_eq!(ok(dir.path(), &["corpus"]).lines().count(), 4);
    ok(dir.path(), &["corpus", "--all", "--out", "plants"]);
    let speed = fs::read_to_string(dir.path().join("plants/longitudinal_speed.plant")).unwrap();
    assert!(speed.contains("den = 0.9583 11.02 41.42 321.74 31.65 1\n"));
    // an exported plant loads back
    ok(
        dir.path(),
        &[
            "design",
            "--plant",
            "plants/longitudinal_speed.plant",
            "--structure",
            "structure.txt",
            "--target",
            "speed.txt",
        ],
    );
}

#[test]
fn exit_codes() {
    let dir = workspace();
    fs::write(dir.path().join("const.txt"), "5\n").unwrap();
    fs::write(dir.path().join("gap.txt"), "1 0 2 1\n").unwrap();
    fs::write(dir.path().join("unstable_sq.txt"), "-1 1\n").unwrap();
    fs::write(dir.path().join("junk.txt"), "1 two 3\n").unwrap();
    assert_eq!(code(dir.path(), &["indices", "const.txt"]), 2);
    assert_eq!(code(dir.path(), &["indices", "gap.txt"]), 1);
    assert_eq!(code(dir.path(), &["indices", "missing.txt"]), 2);
    assert_eq!(code(dir.path(), &["square", "junk.txt"]), 2);
    assert_eq!(code(dir.path(), &["sqroot", "unstable_sq.txt"]), 1);
    assert_eq!(code(dir.path(), &["target", "--order", "3", "--tau", "0"]), 1);
    assert_eq!(code(dir.path(), &["frobnicate"]), 2);
    assert_eq!(code(dir.path(), &["corpus", "nope"]), 2);
    assert_eq!(
        code(
            dir.path(),
            &[
                "design",
                "--plant",
                "corpus:longitudinal_speed",
                "--structure",
                "structure.txt",
                "--target",
                "speed.txt",
                "--powers",
                "5,5,4,3,2"
            ]
        ),
        1
    );
}

#[test]
fn every_subcommand_is_exercised() {
    let help = ok(Path::new("."), &["--help"]);
    let listed: BTreeSet<String> = help
        .lines()
        .skip_while(|l| !l.starts_with("Commands:"))
        .skip(1)
        .take_while(|l| l.starts_with("  "))
        .filter_map(|l| l.split_whitespace().next().map(str::to_string))
        .filter(|c| c != "help")
        .collect();
    let source = include_str!("cli.rs");
    let covered: BTreeSet<String> = listed.iter().filter(|c| source.contains(&format!("\"{c}\""))).cloned().collect();
    assert_eq!(listed.len(), 11, "{listed:?}");
    assert_eq!(covered, listed);
}
