use std::fs::{self, File};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dapc::mm::{write_csr, write_vector};
use dapc::synth::synthetic_system;
use tempfile::TempDir;

fn dapc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dapc")).args(args).output().expect("spawn dapc")
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// The seeded 8x4 system: a 4x4 base plus four augmented rows.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let sys = synthetic_system(4, 8, 11).unwrap();
        write_csr(&sys.a, File::create(dir.path().join("a.mtx")).unwrap()).unwrap();
        write_vector(&sys.b, File::create(dir.path().join("b.mtx")).unwrap()).unwrap();
        write_vector(&sys.x, File::create(dir.path().join("x.mtx")).unwrap()).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn solve(&self, extra: &[&str]) -> Output {
        let (a, b, x, csv, out) =
            (self.arg("a.mtx"), self.arg("b.mtx"), self.arg("x.mtx"), self.arg("t.csv"), self.arg("o.mtx"));
        let mut args = vec![
            "solve",
            "--coefficient-matrix-path",
            &a,
            "--constant-terms-vector-path",
            &b,
            "--x-ref-path",
            &x,
            "--output-csv",
            &csv,
            "--output-x",
            &out,
        ];
        args.extend_from_slice(extra);
        dapc(&args)
    }
}

fn records(csv: &Path) -> Vec<String> {
    fs::read_to_string(csv).unwrap().lines().skip(1).map(str::to_owned).collect()
}

fn without_elapsed(csv: &Path) -> Vec<String> {
    records(csv).iter().map(|l| l.rsplit_once(',').unwrap().0.to_owned()).collect()
}

#[test]
fn solve_writes_full_trace() {
    let fx = Fixture::new();
    let out = fx.solve(&["--number-of-partitions", "2", "--epochs", "50", "--eta", "0.9", "--gamma", "0.9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = records(&fx.path("t.csv"));
    assert_eq!(recs.len(), 51);
    let last_mse: f64 = recs[50].split(',').nth(1).unwrap().parse().unwrap();
    assert!(last_mse <= 1e-10, "{last_mse}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("final mse") && stdout.contains("total wall time"), "{stdout}");
    let x = dapc::mm::read_matrix_market_file(fx.path("o.mtx")).unwrap().into_vector().unwrap();
    assert_eq!(x.len(), 4);
}

#[test]
fn zero_epochs_gives_one_record() {
    let fx = Fixture::new();
    let out = fx.solve(&["--epochs", "0"]);
    assert!(out.status.success());
    assert_eq!(records(&fx.path("t.csv")).len(), 1);
}

#[test]
fn infeasible_partitioning_is_reported() {
    let fx = Fixture::new();
    let out = fx.solve(&["--number-of-partitions", "3"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(m+n)/J >= n"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn usage_and_input_errors() {
    assert_eq!(dapc(&["solve"]).status.code(), Some(2));
    let fx = Fixture::new();
    assert_eq!(fx.solve(&["--eta", "1.5"]).status.code(), Some(2));
    fs::write(fx.path("a.mtx"), "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n").unwrap();
    assert_eq!(fx.solve(&[]).status.code(), Some(3));
}

#[test]
fn augment_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sys = synthetic_system(4, 5, 2).unwrap();
    let base = dapc::CsrMatrix::from_triplets(4, 4, sys.a.triplets().filter(|&(i, _, _)| i < 4).collect());
    let a = dir.path().join("a.mtx");
    let b = dir.path().join("b.mtx");
    write_csr(&base, File::create(&a).unwrap()).unwrap();
    write_vector(&sys.b[..4], File::create(&b).unwrap()).unwrap();
    let run = |tag: &str| {
        let (am, bm) = (dir.path().join(format!("A{tag}.mtx")), dir.path().join(format!("B{tag}.mtx")));
        let out = dapc(&[
            "augment",
            "--coefficient-matrix-path",
            a.to_str().unwrap(),
            "--constant-terms-vector-path",
            b.to_str().unwrap(),
            "--extra-rows",
            "4",
            "--seed",
            "9",
            "--output-matrix-path",
            am.to_str().unwrap(),
            "--output-vector-path",
            bm.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
        (fs::read(am).unwrap(), fs::read(bm).unwrap(), stdout)
    };
    let first = run("1");
    let second = run("2");
    assert_eq!(first, second);
    assert!(first.2.contains("shape: 8x4") && first.2.contains("seed: 9"), "{}", first.2);
}

#[test]
fn bench_reports_acceleration() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("run");
    let out = dapc(&[
        "bench",
        "--synthetic-n",
        "16",
        "--synthetic-rows",
        "64",
        "--epochs",
        "5",
        "--output-csv-prefix",
        prefix.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let row: Vec<&str> = stdout.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "64x16");
    let (c, d, acc): (f64, f64, f64) = (row[2].parse().unwrap(), row[3].parse().unwrap(), row[4].parse().unwrap());
    assert!((acc - c / d).abs() <= 1e-5 * acc);
    for mode in ["classical", "decomposed"] {
        assert_eq!(records(&dir.path().join(format!("run-{mode}.csv"))).len(), 6);
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn local_and_socket_backends_agree() {
    let fx = Fixture::new();
    let common = ["--number-of-partitions", "2", "--epochs", "30", "--seed", "3"];
    let out = fx.solve(&common);
    assert!(out.status.success());
    let local = without_elapsed(&fx.path("t.csv"));

    let endpoints: Vec<String> = (0..2).map(|_| format!("127.0.0.1:{}", free_port())).collect();
    let mut workers: Vec<_> = endpoints
        .iter()
        .map(|ep| Command::new(env!("CARGO_BIN_EXE_dapc")).args(["worker", "--listen", ep]).spawn().unwrap())
        .collect();
    let list = endpoints.join(",");
    let mut args = common.to_vec();
    args.extend_from_slice(&["--backend", "sockets", "--worker-nodes-ip-addresses", &list]);
    let out = fx.solve(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for w in &mut workers {
        assert!(w.wait().unwrap().success());
    }
    assert_eq!(without_elapsed(&fx.path("t.csv")), local);
}
