//! End-to-end runs of the `brd` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use brd::manifest::{RunManifest, MANIFEST_FILE};

fn brd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

const SHORT: [&str; 5] = ["--iterations", "60", "--burn-in", "20", "--quiet"];

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(brd(&["--help"]).status.code(), Some(0));
    assert_eq!(brd(&["--version"]).status.code(), Some(0));
    assert_eq!(brd(&["fit", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(brd(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(brd(&["fit", "--mode", "z"]).status.code(), Some(1));
    assert_eq!(
        brd(&["fit", "--mode", "nope", "--input", "x", "-o", "y"]).status.code(),
        Some(1)
    );
}

#[test]
fn parse_error_names_line_and_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("z.tsv");
    fs::write(&input, "gene_id\tz\ng1\t0.5\ng2\tabc\ng3\t1.0\n").unwrap();
    let out = dir.path().join("out");
    let o = brd(&["fit", "--mode", "z", "--input", p(&input), "-o", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert!(!out.exists(), "output directory left behind");
}

#[test]
fn missing_input_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = brd(&[
        "fit",
        "--mode",
        "z",
        "--input",
        "/nonexistent/z.tsv",
        "-o",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("z.tsv");
    fs::write(&input, "g1\t0.5\ng2\t2.5\n").unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let mut args = vec!["fit", "--mode", "z", "--input", p(&input), "-o"];
    let target = blocker.join("sub");
    args.push(p(&target));
    args.extend(SHORT);
    assert_eq!(brd(&args).status.code(), Some(2));
}

#[test]
fn existing_output_files_survive_a_failed_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let input = dir.path().join("z.tsv");
    fs::write(&input, "g1\tnan\n").unwrap();
    let o = brd(&["fit", "--mode", "z", "--input", p(&input), "-o", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec![std::ffi::OsString::from("keep.txt")]);
}

#[test]
fn two_gene_toy_fit() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("z.tsv");
    fs::write(&input, "gene_id,z\nquiet,0.1\nloud,4.0\n").unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["fit", "--mode", "z", "--input", p(&input), "-o", p(&out)];
    args.extend(SHORT);
    let o = brd(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = data_rows(&out.join("summary.tsv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "quiet");
    let v: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));

    let manifest = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.command, "fit");
    assert!(manifest.outputs.contains(&"summary.tsv".to_string()));
}

#[test]
fn large_input_runs_in_a_few_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("z.tsv");
    let mut text = String::from("gene_id\tz\n");
    for i in 0..10_056 {
        let z = ((i * 7919) % 1000) as f64 / 250.0 - 2.0;
        text.push_str(&format!("g{i}\t{z}\n"));
    }
    fs::write(&input, text).unwrap();
    let out = dir.path().join("out");
    let o = brd(&[
        "fit",
        "--mode",
        "z",
        "--input",
        p(&input),
        "-o",
        p(&out),
        "--iterations",
        "6",
        "--burn-in",
        "2",
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(data_rows(&out.join("summary.tsv")).len(), 10_056);
}

#[test]
fn full_mode_with_separate_label_file() {
    let dir = tempfile::tempdir().unwrap();
    let expr = dir.path().join("expr.tsv");
    fs::write(
        &expr,
        "gene_id\ta\tb\tc\td\n\
         g1\t1.0\t1.2\t3.1\t3.3\n\
         g2\t0.4\t0.5\t0.45\t0.38\n\
         g3\t2.0\t2.2\t2.1\t1.9\n",
    )
    .unwrap();
    let labels = dir.path().join("labels.txt");
    fs::write(&labels, "0\n0\n1\n1\n").unwrap();
    let out = dir.path().join("out");
    let mut args = vec![
        "fit",
        "--mode",
        "full",
        "--input",
        p(&expr),
        "--labels",
        p(&labels),
        "-o",
        p(&out),
    ];
    args.extend(SHORT);
    let o = brd(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(data_rows(&out.join("summary.tsv")).len(), 3);
}

#[test]
fn same_seed_reproduces_summary() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("z.tsv");
    fs::write(&input, "a\t0.1\nb\t-0.3\nc\t2.9\nd\t3.4\ne\t0.7\n").unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let mut args = vec![
            "fit",
            "--mode",
            "bdp",
            "--input",
            p(&input),
            "-o",
            p(&out),
            "--seed",
            seed,
        ];
        args.extend(SHORT);
        assert_eq!(brd(&args).status.code(), Some(0));
        fs::read(out.join("summary.tsv")).unwrap()
    };
    assert_eq!(run("a", "5"), run("b", "5"));
}

#[test]
fn config_file_sets_values_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("z.tsv");
    fs::write(&input, "a\t0.1\nb\t2.0\n").unwrap();

    let good = dir.path().join("good.cfg");
    fs::write(&good, "# short chain\niterations = 40\nburn-in = 10\n").unwrap();
    let out = dir.path().join("out");
    let o = brd(&[
        "fit",
        "--mode",
        "z",
        "--input",
        p(&input),
        "-o",
        p(&out),
        "--config",
        p(&good),
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = RunManifest::read(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.invocation.settings().unwrap().chain.iterations, 40);

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "iterations = 40\nburn_in = 10\nbogus = 1\n").unwrap();
    let o = brd(&[
        "fit",
        "--mode",
        "z",
        "--input",
        p(&input),
        "-o",
        p(&dir.path().join("o2")),
        "--config",
        p(&bad),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
}

#[test]
fn null_density_requires_a_chain_dump() {
    let dir = tempfile::tempdir().unwrap();
    let o = brd(&["report", "--kind", "null-density", "-o", p(&dir.path().join("r"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dump"));
}

#[test]
fn simulate_then_evaluate_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let o = brd(&[
        "simulate",
        "sim2",
        "--replicates",
        "2",
        "--seed",
        "4",
        "-o",
        p(&sim),
        "--quiet",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["z_r0.tsv", "z_r1.tsv", "truth_r0.tsv", "truth_r1.tsv", MANIFEST_FILE] {
        assert!(sim.join(f).exists(), "{f} missing");
    }

    let eval = dir.path().join("eval");
    let mut args = vec![
        "evaluate",
        "sim1",
        "null",
        "--replicates",
        "2",
        "--methods",
        "brd",
        "-o",
        p(&eval),
    ];
    args.extend(SHORT);
    let o = brd(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(eval.join("report.tsv")).unwrap();
    assert!(report.contains("sim1") && report.contains("null"));

    let again = dir.path().join("again");
    let o = brd(&["replay", p(&eval.join(MANIFEST_FILE)), "-o", p(&again), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["report.tsv", "comparisons.tsv", "report.json"] {
        assert_eq!(
            fs::read(eval.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f} differs"
        );
    }
}
