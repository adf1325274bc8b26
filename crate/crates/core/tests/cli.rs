use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn artflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_artflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = artflow(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn make_suite(dir: &Path, count: usize, seed: u64) -> Vec<PathBuf> {
    let out = ok(&[
        "make-scenes",
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--samples",
        "400",
        "--out",
        s(dir),
    ]);
    out.lines().map(PathBuf::from).collect()
}

#[test]
fn make_scenes_alternates_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let files = make_suite(a.path(), 10, 3);
    make_suite(b.path(), 10, 3);
    assert_eq!(files.len(), 10);
    assert_eq!(files.iter().filter(|p| s(p).ends_with("_revolute.urdf")).count(), 5);
    assert_eq!(files.iter().filter(|p| s(p).ends_with("_prismatic.urdf")).count(), 5);
    for f in &files {
        let other = b.path().join(f.file_name().unwrap());
        assert_eq!(fs::read(f).unwrap(), fs::read(other).unwrap());
    }
}

#[test]
fn infer_recovers_scene_axis_from_exact_fields() {
    let dir = tempfile::tempdir().unwrap();
    let files = make_suite(dir.path(), 2, 9);
    for (file, kind) in files.iter().zip(["revolute", "prismatic"]) {
        let scene = artflow::scene::parse_scene(&fs::read_to_string(file).unwrap()).unwrap();
        let joint = scene.target_joint();
        let csv = dir.path().join("f.csv");
        ok(&["gen", "--scene", s(file), "--q", "0.1", "--out", s(&csv)]);
        let json: Value = serde_json::from_str(&ok(&["infer", "--fields", s(&csv), "--type", kind])).unwrap();
        assert_eq!(json["type"], kind);
        let omega: Vec<f64> = json["omega"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let omega = artflow::Vec3::new(omega[0], omega[1], omega[2]);
        assert!(artflow::geometry::angle_between(&omega, &joint.axis) <= 1e-9);
        let heuristic: Value =
            serde_json::from_str(&ok(&["infer", "--fields", s(&csv), "--type", "heuristic"])).unwrap();
        assert_eq!(heuristic["type"], kind);
    }
}

#[test]
fn gen_infer_plan_reproduces_first_rollout_plan() {
    let dir = tempfile::tempdir().unwrap();
    let files = make_suite(dir.path(), 2, 17);
    for (file, kind) in files.iter().zip(["revolute", "prismatic"]) {
        let fields = dir.path().join("fields.csv");
        let axis = dir.path().join("axis.json");
        let planned = dir.path().join("plan.csv");
        let from_rollout = dir.path().join("rollout_plan.csv");
        let occlusion = [
            "--base-dropout",
            "0.2",
            "--coupled-dropout",
            "0.3",
            "--occlusion-seed",
            "41",
        ];

        let mut gen = vec!["gen", "--scene", s(file), "--sample-seed", "5", "--out", s(&fields)];
        gen.extend(occlusion);
        ok(&gen);
        fs::write(&axis, ok(&["infer", "--fields", s(&fields), "--type", kind])).unwrap();

        let mut rollout = vec![
            "rollout",
            "--scene",
            s(file),
            "--sample-seed",
            "5",
            "--plan-out",
            s(&from_rollout),
        ];
        rollout.extend(occlusion);
        let result: Value = serde_json::from_str(&ok(&rollout)).unwrap();
        let contact = result["contact"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let goal = result["goal"].to_string();
        let goal_flag = if kind == "revolute" {
            "--goal-angle"
        } else {
            "--goal-distance"
        };
        ok(&[
            "plan",
            "--axis",
            s(&axis),
            "--contact",
            &contact,
            goal_flag,
            &goal,
            "--out",
            s(&planned),
        ]);

        assert_eq!(
            fs::read_to_string(&planned).unwrap(),
            fs::read_to_string(&from_rollout).unwrap(),
            "{kind}"
        );
    }
}

#[test]
fn rollout_is_deterministic_and_traces_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let files = make_suite(dir.path(), 1, 2);
    let trace = dir.path().join("trace.csv");
    let args = [
        "rollout",
        "--scene",
        s(&files[0]),
        "--preset",
        "reference",
        "--seed",
        "12",
        "--trace-out",
        s(&trace),
    ];
    let first = ok(&args);
    let first_trace = fs::read_to_string(&trace).unwrap();
    assert_eq!(first, ok(&args));
    assert_eq!(first_trace, fs::read_to_string(&trace).unwrap());

    let result: Value = serde_json::from_str(&first).unwrap();
    let qs: Vec<f64> = first_trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(
        first_trace.lines().next().unwrap(),
        "step,q,dq,contact_x,contact_y,contact_z"
    );
    let q_goal = result["q_goal"].as_f64().unwrap();
    let nd = (qs.last().unwrap() - q_goal).abs() / (q_goal - qs[0]).abs();
    assert!((nd - result["normalized_distance"].as_f64().unwrap()).abs() <= 1e-12);
}

#[test]
fn af_only_and_single_step_mpc_replan_alike() {
    let dir = tempfile::tempdir().unwrap();
    let files = make_suite(dir.path(), 2, 6);
    for file in &files {
        let af: Value = serde_json::from_str(&ok(&[
            "rollout",
            "--scene",
            s(file),
            "--policy",
            "af_only",
            "--H",
            "1",
            "--K",
            "1",
        ]))
        .unwrap();
        let mpc: Value = serde_json::from_str(&ok(&["rollout", "--scene", s(file), "--H", "1", "--K", "1"])).unwrap();
        for r in [&af, &mpc] {
            assert_eq!(r["replans"], r["steps"], "{}", file.display());
        }
        if af["type"] == "prismatic" {
            assert_eq!(af["replans"], mpc["replans"]);
        }
    }
}

#[test]
fn eval_horizon_sweep_on_exact_predictor() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    make_suite(&scenes, 4, 8);
    let metrics = dir.path().join("metrics.csv");
    let summary = ok(&[
        "eval",
        "--scenes",
        s(&scenes),
        "--H-sweep",
        "1,3,5,7,9,nompc",
        "--trials",
        "2",
        "--seed",
        "4",
        "--out",
        s(&metrics),
        "--emit-gnuplot",
    ]);
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in &rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[7], "1.0000", "{row}");
    }
    let text = fs::read_to_string(&metrics).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "scene,policy,H,use_gs,use_mask,noise_preset,trial,seed,norm_dist,success,steps,replans,dq_var,wall_ms"
    );
    assert_eq!(text.lines().count(), 1 + 4 * 6 * 2);
    assert!(dir.path().join("metrics.csv.gp").exists());
    assert!(dir.path().join("metrics.csv.summary.csv").exists());
}

#[test]
fn eval_ablations_add_variants() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    make_suite(&scenes, 2, 1);
    let metrics = dir.path().join("m.csv");
    let summary = ok(&[
        "eval",
        "--scenes",
        s(&scenes),
        "--policy",
        "flowbotpp,af_only",
        "--ablate-gs",
        "--ablate-mask",
        "--trials",
        "1",
        "--preset",
        "reference",
        "--out",
        s(&metrics),
    ]);
    assert_eq!(summary.lines().count(), 1 + 8);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let files = make_suite(dir.path(), 1, 0);
    let csv = dir.path().join("f.csv");
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec![], 1),
        (vec!["rollout", "--scene", s(&files[0]), "--H", "0"], 1),
        (vec!["rollout", "--scene", s(&files[0]), "--policy", "teleport"], 1),
        (
            vec!["eval", "--scenes", s(dir.path()), "--trials", "0", "--out", s(&csv)],
            1,
        ),
        (vec!["gen", "--scene", "/missing.urdf", "--out", s(&csv)], 3),
        (
            vec![
                "plan",
                "--axis",
                "/missing.json",
                "--contact",
                "0,0,0",
                "--goal-angle",
                "1",
            ],
            3,
        ),
        (
            vec!["gen", "--scene", s(&files[0]), "--base-dropout", "1", "--out", s(&csv)],
            0,
        ),
        (vec!["infer", "--fields", s(&csv)], 2),
    ];
    for (args, code) in cases {
        assert_eq!(artflow(&args).status.code(), Some(code), "{args:?}");
    }
}
