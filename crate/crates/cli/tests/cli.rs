use std::path::Path;
use std::process::{Command, Output};

fn llcg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llcg"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "[graph]\nper_block = 30\n[train]\nrounds = 3\nk = 2\nlocal_batch = 8\nserver_batch = 16\n";

#[test]
fn gen_counts_nodes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "gen",
        "--blocks",
        "4",
        "--per-block",
        "250",
        "--p-in",
        "0.05",
        "--p-out",
        "0.005",
        "--dim",
        "16",
        "--seed",
        "1",
    ];
    let mut a = args.to_vec();
    a.extend(["-o", "a.txt"]);
    let mut b = args.to_vec();
    b.extend(["-o", "b.txt"]);
    let out = llcg(&a, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("nodes 1000"));
    assert!(llcg(&b, dir.path()).status.success());
    let fa = std::fs::read(dir.path().join("a.txt")).unwrap();
    assert_eq!(fa, std::fs::read(dir.path().join("b.txt")).unwrap());
    let g = llcg::graph::parse_graph(&fa).unwrap();
    assert_eq!(g.num_nodes(), 1000);
}

#[test]
fn bad_probability_is_a_usage_error_naming_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = llcg(&["gen", "--p-in", "2.0", "-o", "g.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--p-in"));
}

#[test]
fn partition_outputs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(llcg(&["gen", "-o", "g.txt"], dir.path()).status.success());
    let one = llcg(&["partition", "g.txt", "--parts", "1", "-o", "one.txt"], dir.path());
    assert!(one.status.success());
    assert!(stderr(&one).contains("edge_cut 0 "));
    let ratio = |method: &str| -> f64 {
        let o = llcg(&["partition", "g.txt", "--method", method, "-o", "p.txt"], dir.path());
        assert!(o.status.success());
        let e = stderr(&o);
        let r = e.split("ratio ").nth(1).unwrap().split(')').next().unwrap();
        r.parse().unwrap()
    };
    assert!(ratio("greedy") < ratio("random"));
    assert_eq!(llcg(&["partition", "missing.txt"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.txt"), "LLCGGRAPH 1\nnot numbers\n").unwrap();
    let bad = llcg(&["partition", "bad.txt"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("line 2"));
}

#[test]
fn gradcheck_modes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(llcg(&["gradcheck", "-q"], dir.path()).status.success());
    let neg = llcg(&["gradcheck", "-q", "--step", "1e-1"], dir.path());
    assert_eq!(neg.status.code(), Some(1));
    assert!(stderr(&neg).contains("worst case"));
    let one = llcg(&["gradcheck", "--arch", "G,G", "--nodes", "30"], dir.path());
    assert!(one.status.success());
    let stdout = String::from_utf8_lossy(&one.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("arch")).count(), 1);
}

#[test]
fn train_writes_one_csv_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.ini"), SMALL).unwrap();
    let out = llcg(&["train", "c.ini", "-o", "run"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    for s in ["single", "psgd_pa", "ggs", "llcg"] {
        let csv = std::fs::read(dir.path().join(format!("run/{s}.csv"))).unwrap();
        assert_eq!(llcg::sim::parse_csv(&csv).unwrap().len(), 3);
    }
    assert!(dir.path().join("run/config.ini").is_file());
}

#[test]
fn seeds_reproduce_and_differ() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}strategies = llcg\n");
    std::fs::write(dir.path().join("c.ini"), cfg).unwrap();
    for (seed, out) in [("3", "a"), ("3", "b"), ("4", "c")] {
        assert!(llcg(&["train", "c.ini", "-q", "--seed", seed, "-o", out], dir.path())
            .status
            .success());
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("llcg.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn reduced_llcg_matches_psgd_pa_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.ini"), format!("{SMALL}strategies = psgd_pa\n")).unwrap();
    std::fs::write(
        dir.path().join("l.ini"),
        format!("{SMALL}strategies = llcg\nrho = 1\ncorrection_steps = 0\n"),
    )
    .unwrap();
    assert!(llcg(&["train", "p.ini", "-q", "-o", "p"], dir.path()).status.success());
    assert!(llcg(&["train", "l.ini", "-q", "-o", "l"], dir.path()).status.success());
    assert_eq!(
        std::fs::read(dir.path().join("p/psgd_pa.csv")).unwrap(),
        std::fs::read(dir.path().join("l/llcg.csv")).unwrap()
    );
}

#[test]
fn dumped_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.ini"), format!("{SMALL}strategies = llcg, ggs\n")).unwrap();
    assert!(llcg(&["train", "c.ini", "-q", "-o", "first"], dir.path())
        .status
        .success());
    assert!(llcg(&["train", "first/config.ini", "-q", "-o", "second"], dir.path())
        .status
        .success());
    for s in ["llcg", "ggs"] {
        assert_eq!(
            std::fs::read(dir.path().join(format!("first/{s}.csv"))).unwrap(),
            std::fs::read(dir.path().join(format!("second/{s}.csv"))).unwrap()
        );
    }
}

#[test]
fn config_errors_list_every_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.ini"),
        "[train]\nrounds = zero\nspeed = 3\n[graph]\np_intra = 7\n",
    )
    .unwrap();
    let out = llcg(&["train", "c.ini"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let e = stderr(&out);
    for key in ["train.rounds", "train.speed", "p_intra"] {
        assert!(e.contains(key), "{key} missing from: {e}");
    }
    std::fs::write(dir.path().join("f.ini"), "[graph]\nsource = file\npath = nowhere.txt\n").unwrap();
    let missing = llcg(&["train", "f.ini"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("nowhere.txt"));
}

#[test]
fn graph_and_assignment_files_feed_training() {
    let dir = tempfile::tempdir().unwrap();
    assert!(llcg(&["gen", "--per-block", "30", "-o", "g.txt"], dir.path())
        .status
        .success());
    assert!(llcg(
        &["partition", "g.txt", "--method", "greedy", "-o", "a.txt", "-q"],
        dir.path()
    )
    .status
    .success());
    let cfg = "[graph]\nsource = file\npath = g.txt\n[partition]\nmethod = file\npath = a.txt\n[train]\nstrategies = llcg\nrounds = 2\nk = 2\nlocal_batch = 8\nserver_batch = 16\n[metrics]\nkappa = every\nbias_samples = 3\nbias_batch = 4\n";
    std::fs::write(dir.path().join("c.ini"), cfg).unwrap();
    let out = llcg(&["train", "c.ini", "-q", "-o", "run"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let logs = llcg::sim::parse_csv(&std::fs::read(dir.path().join("run/llcg.csv")).unwrap()).unwrap();
    assert!(logs.iter().all(|l| l.kappa_a_sq.is_some() && l.kappa_x_sq.is_some()));
    let bias = std::fs::read_to_string(dir.path().join("run/sampling_bias.csv")).unwrap();
    assert_eq!(bias.lines().count(), 5);
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.ini"), SMALL).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_llcg"))
        .args(["train", "c.ini"])
        .current_dir(dir.path())
        .env("LLCG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_merges_logs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.ini"), SMALL).unwrap();
    assert!(llcg(&["train", "c.ini", "-q", "-o", "run"], dir.path())
        .status
        .success());
    let one = llcg(&["report", "run/llcg.csv"], dir.path());
    assert!(one.status.success());
    assert_eq!(one.stdout, std::fs::read(dir.path().join("run/llcg.csv")).unwrap());
    assert!(stderr(&one).contains("llcg"));

    let four = llcg(
        &[
            "report",
            "run/single.csv",
            "run/psgd_pa.csv",
            "run/ggs.csv",
            "run/llcg.csv",
            "-o",
            "merged.csv",
        ],
        dir.path(),
    );
    assert!(four.status.success());
    let merged = std::fs::read_to_string(dir.path().join("merged.csv")).unwrap();
    assert_eq!(merged.lines().next().unwrap().split(',').count(), 9);
    assert_eq!(merged.lines().count(), 4);
    assert!(String::from_utf8_lossy(&four.stdout).contains("psgd_pa"));

    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    assert_eq!(llcg(&["report", "empty.csv"], dir.path()).status.code(), Some(2));
}

#[test]
fn report_warns_on_mismatched_rounds() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.ini"), format!("{SMALL}strategies = llcg\n")).unwrap();
    std::fs::write(
        dir.path().join("b.ini"),
        "[graph]\nper_block = 30\n[train]\nstrategies = psgd_pa\nrounds = 2\nk = 2\nlocal_batch = 8\n",
    )
    .unwrap();
    assert!(llcg(&["train", "a.ini", "-q", "-o", "a"], dir.path()).status.success());
    assert!(llcg(&["train", "b.ini", "-q", "-o", "b"], dir.path()).status.success());
    let out = llcg(&["report", "a/llcg.csv", "b/psgd_pa.csv"], dir.path());
    assert!(out.status.success());
    assert!(stderr(&out).contains("warning"));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);
}
