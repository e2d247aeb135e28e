use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circumesh")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(out: &str, key: &str) -> f64 {
    out.split_whitespace()
        .find_map(|w| w.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .parse()
        .unwrap()
}

const TOY_CONFIG: &str = "\
# toy model
k = 16
grid = 0.02, pi/4, pi/4, 0.2
voxel = 0
point-widths = 8,8
conv_width = 8
head_widths = 16
beta = 2
pe_levels = 2
batch = 8
";

#[test]
fn oracle_recovers_icosphere() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["synth", "--shape", "icosphere", "--n", "2", "--out", "s.obj"]).status.success());
    let o = run(dir.path(), &["oracle", "--mesh", "s.obj", "--out", "r.ply", "--k", "12"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("recovered 320/320 faces (100.0%)"), "{}", stdout(&o));
    assert!(dir.path().join("r.ply").exists());
}

#[test]
fn eval_of_identical_meshes() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["synth", "--shape", "cube", "--out", "c.obj"]);
    let o = run(dir.path(), &["eval", "--gt", "c.obj", "--pred", "c.obj", "--samples", "5000"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(value(&out, "cd1_x1e2"), 0.0);
    assert_eq!(value(&out, "f1"), 1.0);
    assert_eq!(value(&out, "ef1"), 1.0);
    let json = out.lines().last().unwrap();
    assert!(json.starts_with('{') && json.contains("\"cd2_x1e5\":0.0"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["eval", "--gt", "missing.obj"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(dir.path(), &["eval", "--gt", "a.obj", "--pred", "b.obj"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.obj"), "v 0 0 0\nf 1 2 3\n").unwrap();
    assert_eq!(run(dir.path(), &["eval", "--gt", "bad.obj", "--pred", "bad.obj"]).status.code(), Some(2));
    std::fs::write(dir.path().join("cfg.txt"), "no_such_key = 3\n").unwrap();
    let o = run(dir.path(), &["--config", "cfg.txt", "synth", "--shape", "cube", "--out", "c.obj"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(dir.path(), &["synth", "--shape", "torus", "--out", "c.obj"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(dir.path(), &["oracle", "--mesh", "c.obj", "--out", "r.obj", "--grid", "0.1,0.2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    run(dir.path(), &["synth", "--shape", "icosphere", "--n", "1", "--out", "s.obj"]);
    std::fs::write(dir.path().join("cfg.txt"), "k = 100\n").unwrap();
    // 42 vertices: k = 100 from the config is rejected, the flag wins
    let o = run(dir.path(), &["--config", "cfg.txt", "oracle", "--mesh", "s.obj", "--out", "r.obj"]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(dir.path(), &["--config", "cfg.txt", "oracle", "--mesh", "s.obj", "--out", "r.obj", "--k", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn prepare_train_triangulate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir(d.join("meshes")).unwrap();
    std::fs::write(d.join("cfg.txt"), TOY_CONFIG).unwrap();
    run(d, &["synth", "--shape", "grid", "--n", "8", "--out", "meshes/g.obj"]);
    run(d, &["synth", "--shape", "grid", "--n", "8", "--out", "cloud.xyz"]);
    let o = run(d, &["--config", "cfg.txt", "prepare", "--mesh-dir", "meshes", "--out", "d.rec"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "samples"), 64.0);
    assert_eq!(value(&stdout(&o), "anchors"), 320.0);

    let train = |name: &str| {
        let o = run(
            d,
            &["--config", "cfg.txt", "train", "--data", "d.rec", "--out", name, "--iters", "6", "--log-every", "3"],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let logs: Vec<String> = stdout(&o)
            .lines()
            .filter(|l| l.starts_with("iter="))
            .map(|l| l.split(" secs=").next().unwrap().to_owned())
            .collect();
        assert_eq!(logs.len(), 2);
        logs
    };
    assert_eq!(train("a.ckpt"), train("b.ckpt"), "training is deterministic");
    assert_eq!(std::fs::read(d.join("a.ckpt")).unwrap(), std::fs::read(d.join("b.ckpt")).unwrap());

    let o = run(d, &["triangulate", "--cloud", "cloud.xyz", "--model", "a.ckpt", "--out", "t.obj", "--conf", "1.0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "final_faces"), 0.0);
    assert_eq!(value(&stdout(&o), "points"), 64.0);
    let o = run(d, &["triangulate", "--cloud", "cloud.xyz", "--model", "a.ckpt", "--out", "t.ply", "--no-postprocess"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("inference_secs="));
    assert_eq!(
        run(d, &["triangulate", "--cloud", "cloud.xyz", "--model", "d.rec", "--out", "x.obj"]).status.code(),
        Some(2)
    );
}
