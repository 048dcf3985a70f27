use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use airan_sim::records::parse_records;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn airan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airan")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("airan-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_variant(name: &str, from: &str, edit: impl Fn(String) -> String) -> PathBuf {
    let text = edit(std::fs::read_to_string(scenario(from)).unwrap());
    let path = scratch("variants").join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn short_uplift(name: &str, edit: impl Fn(String) -> String) -> PathBuf {
    write_variant(name, "uplift.scenario", |t| edit(t.replace("horizon_s = 60.0", "horizon_s = 2.0")))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn shipped_scenarios_validate() {
    for name in ["poc.scenario", "uplift.scenario", "base.scenario"] {
        let out = airan(&["validate", scenario(name).to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&airan(&[])), 1);
    assert_eq!(code(&airan(&["launch"])), 1);
    assert_eq!(code(&airan(&["run"])), 1);
    assert_eq!(code(&airan(&["validate", "/nonexistent/site.scenario"])), 1);
    assert_eq!(code(&airan(&["--help"])), 0);
}

#[test]
fn parse_and_schema_errors_exit_2() {
    let broken = short_uplift("broken.scenario", |t| t.replace("[sim]", "[sim"));
    assert_eq!(code(&airan(&["validate", broken.to_str().unwrap()])), 2);
    let unknown = short_uplift("unknown.scenario", |t| t.replace("cpu_cores = 64", "cpu_cores = 64\ngpu_color = 1"));
    let out = airan(&["validate", unknown.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gpu_color"));
}

#[test]
fn semantic_and_topology_errors_exit_3() {
    let over = short_uplift("over.scenario", |t| t.replace("level = 0.875", "level = 1.5"));
    assert_eq!(code(&airan(&["validate", over.to_str().unwrap()])), 3);
    let no_spine = short_uplift("nospine.scenario", |t| t.replace("compute_spines = 2", "compute_spines = 0"));
    let out = airan(&["validate", no_spine.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn runtime_errors_exit_4() {
    // A time split that shrinks a busy RAN slice cannot be applied.
    let conflict = short_uplift("conflict.scenario", |t| {
        let policy = t.find("[policy]").unwrap();
        let sim = t.find("[sim]").unwrap();
        format!(
            "{}[policy]\nkind = \"time_split\"\nschedule = [{{ start_s = 0.0, end_s = 0.5, ran_fraction = 1.0 }}, {{ start_s = 0.5, end_s = 2.0, ran_fraction = 0.2 }}]\n\n{}",
            &t[..policy],
            &t[sim..]
        )
    });
    let out = airan(&["run", conflict.to_str().unwrap()]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let base = write_variant("base-short.scenario", "base.scenario", |t| t.replace("horizon_s = 20.0", "horizon_s = 4.0"));
    let dir = scratch("seeded");
    let (a, b, c) = (dir.join("a.records"), dir.join("b.records"), dir.join("c.records"));
    for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let o = airan(&["run", base.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b, c) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), std::fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c, "the seed flag must override the file seed");
    parse_records(std::str::from_utf8(&a).unwrap()).unwrap();
}

#[test]
fn run_writes_records_to_stdout_and_summary_on_request() {
    let up = short_uplift("stdout.scenario", |t| t);
    let out = airan(&["run", up.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report = parse_records(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(report.gpus, ["server1/gpu1"]);

    let out = airan(&["run", up.to_str().unwrap(), "--summary"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["gpus"].as_array().unwrap().len(), 1);
    assert!(v["gpus"][0]["average_total"].as_f64().unwrap() > 0.9);
}

#[test]
fn margin_sweep_never_raises_ai_utilization() {
    let dir = scratch("sweep");
    let out = airan(&[
        "sweep",
        scenario("base.scenario").to_str().unwrap(),
        "--param",
        "policy.safety_margin=0.0,0.05,0.1",
        "--out-dir",
        dir.to_str().unwrap(),
        "--threads",
        "3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mut ai = Vec::new();
    for i in 0..3 {
        let text = std::fs::read_to_string(dir.join(format!("point-{i:03}.records"))).unwrap();
        let report = parse_records(&text).unwrap();
        let gpu = report.gpu_index("server1/gpu1").unwrap() as usize;
        ai.push(report.summaries().unwrap()[gpu].ai.mean);
    }
    assert!(ai.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{ai:?}");
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn poc_summary_fills_gpu1_and_frees_gpu2() {
    let out = airan(&["run", scenario("poc.scenario").to_str().unwrap(), "--summary"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["gpus"][0]["gpu_id"], "server1/gpu1");
    assert!(v["gpus"][0]["average_total"].as_f64().unwrap() >= 0.95);
    assert_eq!(v["gpus"][1]["average_total"], 0.0);
    assert_eq!(v["deadline_misses"], 0);
}
