use std::fs;
use std::path::Path;

use kanscale_cli::config::Source;
use kanscale_cli::{execute, parse_config, run, CliError, Command};

fn args(s: &str) -> Vec<String> {
    std::iter::once("kanscale").chain(s.split_whitespace()).map(String::from).collect()
}

fn summary_value(dir: &Path, key: &str) -> String {
    let text = fs::read_to_string(dir.join("summary.txt")).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no {key} in summary"))
        .to_string()
}

#[test]
fn sweep_defaults_are_filled() {
    let cfg = parse_config(&args("sweep --target F2 --N 961 --G 20 --arch 2,12,12,1 --seeds 3")).unwrap();
    assert_eq!(cfg.command, Command::Sweep);
    assert_eq!(cfg.text("target"), Some("F2"));
    assert_eq!(cfg.seeds("seeds").unwrap(), vec![0, 1, 2]);
    assert_eq!(cfg.int("epochs").unwrap(), 3000);
    assert_eq!(cfg.int("eps_count").unwrap(), 12);
    assert_eq!(cfg.real("lr").unwrap(), 1e-3);
    assert_eq!(cfg.source("G"), Some(Source::Flag));
    assert_eq!(cfg.source("epochs"), Some(Source::Default));
}

#[test]
fn flag_overrides_file_and_echo_records_both() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    fs::write(&file, "# test\nG = 16\nN = 100 # inline\n").unwrap();
    let a = args(&format!("diag --config {} --G 12", file.display()));
    let cfg = parse_config(&a).unwrap();
    assert_eq!(cfg.int("G").unwrap(), 12);
    assert_eq!(cfg.int("N").unwrap(), 100);
    assert_eq!(cfg.source("N"), Some(Source::File));
    let echo = cfg.echo();
    assert!(echo.contains("G = 12  # flag, file had 16"), "{echo}");
    assert!(echo.contains("N = 100  # file"), "{echo}");
}

#[test]
fn echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let a = args(&format!("diag --N 64 --G 8 --eps_count 20 --out {}", out.display()));
    execute(&parse_config(&a).unwrap()).unwrap();
    let out2 = dir.path().join("b");
    let echo = out.join("config.echo");
    let b = args(&format!("diag --config {} --out {}", echo.display(), out2.display()));
    execute(&parse_config(&b).unwrap()).unwrap();
    for f in ["report.csv", "summary.txt"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(out2.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn grid_of_one_is_a_usage_error() {
    let e = parse_config(&args("sweep --G 1")).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains('G'), "{e}");
    assert_eq!(run(&args("diag --G 1")), 2);
}

#[test]
fn bad_keys_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.cfg");
    fs::write(&file, "colour = red\n").unwrap();
    match parse_config(&args(&format!("diag --config {}", file.display()))) {
        Err(CliError::UnknownKey(k)) => assert_eq!(k, "colour"),
        other => panic!("{other:?}"),
    }
    match parse_config(&args("diag --N many")) {
        Err(e @ CliError::TypeMismatch { .. }) => {
            assert!(e.to_string().contains("`N`"));
            assert_eq!(e.exit_code(), 2);
        }
        other => panic!("{other:?}"),
    }
    match parse_config(&args("train --family gaussian")) {
        Err(CliError::MissingKey(k)) => assert_eq!(k, "eps"),
        other => panic!("{other:?}"),
    }
    assert_eq!(run(&args("sweep --bogus 1")), 2);
}

#[test]
fn diag_writes_hundred_rows_and_eps_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let a = args(&format!("diag --N 961 --G 20 --family gaussian --out {}", dir.path().display()));
    assert_eq!(run(&a), 0);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "eps,kappa,sigma_min,sigma_max,tol,num_rank");
    assert_eq!(lines.count(), 100);
    let eps: f64 = summary_value(dir.path(), "eps_kappa").parse().unwrap();
    assert!(eps > 1.0 / 19.0 && eps < 4.0 / 19.0, "{eps}");
}

#[test]
fn fitlaw_recovers_exact_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("pairs.in.csv");
    let mut text = String::from("N,G,eps\n");
    for n in [400, 900, 1600] {
        for g in [6, 8, 10, 12, 16, 20, 24] {
            text.push_str(&format!("{n},{g},{}\n", 2.5 / ((g - 1) as f64).powf(1.1)));
        }
    }
    fs::write(&input, text).unwrap();
    let out = dir.path().join("fit");
    let a = args(&format!("fitlaw --input {} --out {}", input.display(), out.display()));
    assert_eq!(run(&a), 0);
    let q: f64 = summary_value(&out, "q").parse().unwrap();
    let c: f64 = summary_value(&out, "C").parse().unwrap();
    assert!((q - 1.1).abs() <= 1e-6, "{q}");
    assert!((c - 2.5).abs() <= 1e-6, "{c}");
}

#[test]
fn unwritable_output_is_exit_four() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let a = args(&format!("diag --N 16 --G 5 --eps_count 3 --out {}", out.display()));
    assert_eq!(run(&a), 4);
}

#[test]
fn divergence_is_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let a = args(&format!(
        "train --N 16 --G 5 --arch 2,1 --eps 0.25 --epochs 50 --lr 1e300 --out {}",
        dir.path().display()
    ));
    assert_eq!(run(&a), 3);
}

#[test]
fn train_and_sweep_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t");
    let a = args(&format!(
        "train --N 64 --G 6 --arch 2,3,1 --eps 0.3 --epochs 20 --checkpoint_every 10 --workers 1 --out {}",
        t.display()
    ));
    assert_eq!(run(&a), 0);
    let trace = fs::read_to_string(t.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 21);
    assert!(fs::read_to_string(t.join("network.ckpt")).unwrap().starts_with("kanscale-checkpoint 1"));

    let s1 = dir.path().join("s1");
    let s2 = dir.path().join("s2");
    for (out, workers) in [(&s1, 1), (&s2, 2)] {
        let a = args(&format!(
            "sweep --N 64 --G 6 --arch 2,3,1 --eps 0.1,0.3 --seeds 2 --epochs 10 --proxy_epoch 5 --workers {workers} --out {}",
            out.display()
        ));
        assert_eq!(run(&a), 0);
    }
    for f in ["records.csv", "aggregates.csv", "summary.txt"] {
        assert_eq!(fs::read(s1.join(f)).unwrap(), fs::read(s2.join(f)).unwrap(), "{f}");
    }
    let records = fs::read_to_string(s1.join("records.csv")).unwrap();
    assert_eq!(records.lines().next().unwrap(), "eps,seed,train_mse_final,train_mse_proxy,val_rmse,diverged");
    assert_eq!(records.lines().count(), 5);
}

#[test]
fn other_families_and_commands_resolve() {
    for s in [
        "train --family chebyshev",
        "train --family gaussian-variable",
        "train --family matern --nu 3 --eps 0.1",
        "pinn --problem black-scholes --eps 0.1",
        "proxy --eps_high 0.2",
        "fitlaw",
    ] {
        parse_config(&args(s)).unwrap_or_else(|e| panic!("{s}: {e}"));
    }
    assert_eq!(parse_config(&args("train --family matern --nu 2 --eps 0.1")).unwrap_err().exit_code(), 2);
    assert_eq!(parse_config(&args("sweep --collapse_layer 5")).unwrap_err().exit_code(), 2);
}
