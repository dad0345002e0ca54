//! Acceptance criteria. Every criterion runs (sequentially, so runtime
//! budgets are not skewed by other criteria), prints one PASS/FAIL line and
//! the test fails at the end if any criterion failed.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hcce::codec::{decode_bits, HierarchicalCodec};
use hcce::correspondence::{build_correspondences, BuildOptions, Mode};
use hcce::experiments::{generate_scene, run_ablation, sample_rotation, ExperimentConfig, NoiseConfig};
use hcce::geometry::{avg_nn_distance, primitives, render_front_back, CameraIntrinsics, Pose, TriangleMesh};
use hcce::loss::{histogram_intensity, level_weights, LossConfig};
use hcce::metrics::adds_error;
use hcce::pnp::{ransac_pnp_traced, RansacConfig};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn codec() -> HierarchicalCodec {
    HierarchicalCodec::default()
}

fn criterion_1_round_trip() -> Outcome {
    let start = Instant::now();
    let c = codec();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs = (0..100_000).map(|_| rng.random::<f64>()).chain((0..=256).map(|k| k as f64 / 256.0));
    let mut violations = 0;
    let mut worst = 0.0f64;
    let mut count = 0;
    for x in xs {
        let err = (c.round_trip(x).unwrap() - x).abs();
        worst = worst.max(err);
        count += 1;
        if err > 2f64.powi(-8) {
            violations += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && elapsed < Duration::from_secs(1),
        format!("{count} values, {violations} violations, max error {worst:e}, {elapsed:.2?}"),
    )
}

fn criterion_2_equivalence() -> Outcome {
    let c = codec();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    let mut violations = 0;
    while checked < 100_000 {
        let x: f64 = rng.random();
        // distance to the nearest odd multiple of 2^-9
        let m = x * 512.0;
        let odd = 2.0 * ((m - 1.0) / 2.0).round() + 1.0;
        if ((m - odd) / 512.0).abs() <= 1e-12 {
            continue;
        }
        checked += 1;
        let hbce = c.hbce_encode(x).unwrap();
        let conv = c.hcce_to_binary(&c.hcce_encode(x).unwrap()).unwrap();
        if hbce != conv {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{checked} values, {violations} mismatches"))
}

fn criterion_3_continuity() -> Outcome {
    let c = codec();
    let n = 10_000;
    let grid: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let codes: Vec<Vec<f64>> = grid.iter().map(|&x| c.hcce_encode(x).unwrap().levels().to_vec()).collect();
    let mut ok = true;
    let mut ratios = Vec::new();
    for level in 0..8 {
        let bound = 2f64.powi(level as i32);
        let lip = (0..n)
            .map(|k| (codes[k + 1][level] - codes[k][level]).abs() / (grid[k + 1] - grid[k]))
            .fold(0.0, f64::max);
        ok &= lip <= bound * (1.0 + 1e-6);
        ratios.push(format!("{:.6}", lip / bound));
    }
    outcome(ok, format!("max slope / 2^(i-1) per level: [{}]", ratios.join(", ")))
}

fn criterion_4_loss_math() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_sum = 0.0f64;
    for _ in 0..10_000 {
        let len = rng.random_range(1..=24);
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(1e-6..1e3)).collect();
        let s: f64 = level_weights(&v).iter().sum();
        worst_sum = worst_sum.max((s - 1.0).abs());
    }
    let sigma = LossConfig::default().sigma;
    let ends = histogram_intensity(0.0, sigma) == 1.0 && histogram_intensity(0.5, sigma) == 1.0;
    let steps = 100_000;
    let (arg, max) = (0..=steps)
        .map(|k| k as f64 / steps as f64)
        .map(|r| (r, histogram_intensity(r, sigma)))
        .fold((f64::NAN, f64::NEG_INFINITY), |best, (r, h)| if h > best.1 { (r, h) } else { best });
    let peak_ok = arg == 0.25 && (max - (sigma / 4.0).exp()).abs() <= 1e-9;
    outcome(
        worst_sum <= 1e-9 && ends && peak_ok,
        format!("max |Σw−1| = {worst_sum:e}; h(0) = h(0.5) = 1: {ends}; argmax r = {arg}, max = {max}"),
    )
}

fn dist_sq(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = a - b;
    d.x * d.x + d.y * d.y + d.z * d.z
}

fn brute_avg_nn(pts: &[Vector3<f64>]) -> f64 {
    let mut sum = 0.0;
    for (i, p) in pts.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (j, q) in pts.iter().enumerate() {
            if i != j {
                best = best.min(dist_sq(p, q));
            }
        }
        sum += best.sqrt();
    }
    sum / pts.len() as f64
}

fn brute_adds(mesh: &TriangleMesh, gt: &Pose, pred: &Pose) -> f64 {
    let a: Vec<_> = mesh.vertices().iter().map(|v| gt.transform(v)).collect();
    let b: Vec<_> = mesh.vertices().iter().map(|v| pred.transform(v)).collect();
    let mut sum = 0.0;
    for p in &a {
        sum += b.iter().map(|q| dist_sq(p, q)).fold(f64::INFINITY, f64::min).sqrt();
    }
    sum / a.len() as f64
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let rotation = sample_rotation(rng).to_rotation_matrix().into_inner();
    let translation = Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(0.3..1.0));
    Pose { rotation, translation }
}

fn criterion_5_geometry_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut exact = 0;
    for _ in 0..50 {
        let n = rng.random_range(3..=500);
        let pts: Vec<Vector3<f64>> = (0..n)
            .map(|_| Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
            .collect();
        let a = avg_nn_distance(&pts).unwrap();
        let b = brute_avg_nn(&pts);
        let mesh = TriangleMesh::new(pts, vec![[0, 1, 2]]).unwrap();
        let (gt, pred) = (random_pose(&mut rng), random_pose(&mut rng));
        let c = adds_error(&mesh, &gt, &pred);
        let d = brute_adds(&mesh, &gt, &pred);
        for (x, y) in [(a, b), (c, d)] {
            if x == y {
                exact += 1;
            }
            worst = worst.max((x - y).abs() / y.abs());
        }
    }
    outcome(worst <= 1e-12, format!("{exact}/100 bit-identical, max relative difference {worst:e}"))
}

fn criterion_6_noiseless_recovery() -> Outcome {
    let start = Instant::now();
    let mut worst_rot = 0.0f64;
    let mut worst_trans = 0.0f64;
    let mut min_recall = 1.0f64;
    let mut failures = 0;
    let mut solved = 0;
    for (mesh, scenes) in [("cube", 34), ("icosphere", 33), ("l_bracket", 33)] {
        let mut cfg = ExperimentConfig::builtin(mesh);
        cfg.scenes = scenes;
        cfg.seed = 6;
        let report = run_ablation(&cfg).unwrap();
        for r in &report.results {
            match &r.errors {
                Some(e) => {
                    worst_rot = worst_rot.max(e.rot_geodesic);
                    worst_trans = worst_trans.max(e.trans_l2);
                    solved += 1;
                }
                None => failures += 1,
            }
        }
        for row in &report.rows {
            min_recall = min_recall.min(row.add_recall);
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && worst_rot < 1e-3 && worst_trans < 1e-4 && min_recall == 1.0 && elapsed < Duration::from_secs(60),
        format!(
            "{solved} solves, {failures} failures, max rot {worst_rot:e} rad, max trans {worst_trans:e} m, min recall {min_recall}, {elapsed:.2?}"
        ),
    )
}

fn criterion_7_ultra_dense_benefit() -> Outcome {
    let mut holds = 0;
    let mut lines = Vec::new();
    for mesh in ["cube", "icosphere", "l_bracket"] {
        let mut cfg = ExperimentConfig::builtin(mesh);
        cfg.scenes = 50;
        cfg.seed = 7;
        cfg.noise = NoiseConfig { coord_sigma: 0.02, outlier_rate: 0.1, outlier_scale: 0.5 };
        let report = run_ablation(&cfg).unwrap();
        let row = |m: Mode| report.rows.iter().find(|r| r.mode == m).unwrap();
        let (f, b, bf, bfu) = (row(Mode::F), row(Mode::B), row(Mode::Bf), row(Mode::Bfu));
        let ok = bfu.median_rot_rad <= f.median_rot_rad
            && bfu.median_rot_rad <= b.median_rot_rad
            && bfu.median_trans_m <= f.median_trans_m
            && bfu.median_trans_m <= b.median_trans_m
            && bfu.add_recall >= bf.add_recall - 0.01;
        holds += usize::from(ok);
        lines.push(format!(
            "{mesh}: {} (rot f/b/bfu {:.4}/{:.4}/{:.4} deg, trans {:.2}/{:.2}/{:.2} mm, recall bf/bfu {:.2}/{:.2})",
            if ok { "holds" } else { "violated" },
            f.median_rot_rad.to_degrees(),
            b.median_rot_rad.to_degrees(),
            bfu.median_rot_rad.to_degrees(),
            f.median_trans_m * 1e3,
            b.median_trans_m * 1e3,
            bfu.median_trans_m * 1e3,
            bf.add_recall,
            bfu.add_recall
        ));
    }
    outcome(holds >= 2, format!("{holds}/3 meshes; {}", lines.join("; ")))
}

fn criterion_8_constrained_sampling() -> Outcome {
    let mut iterations = 0;
    let mut duplicates = 0;
    let mut foreign = 0;
    for (k, mesh) in ["cube", "icosphere", "l_bracket", "cube", "l_bracket"].iter().enumerate() {
        let mut cfg = ExperimentConfig::builtin(mesh);
        cfg.seed = 8 + k as u64;
        let m = cfg.load_mesh().unwrap();
        let scene = generate_scene(&cfg, &m, k).unwrap();
        let set = build_correspondences(&scene.map, Mode::Bfu, &BuildOptions::default()).unwrap();
        let rc = RansacConfig { iterations: 2_000, seed: k as u64, refine: false, ..Default::default() };
        let (_, traces) = ransac_pnp_traced(&set, &cfg.camera, &rc).unwrap();
        for t in &traces {
            iterations += 1;
            let mut g = t.groups.clone();
            g.sort_unstable();
            g.dedup();
            if g.len() != t.groups.len() {
                duplicates += 1;
            }
            foreign += t.records.iter().zip(&t.groups).filter(|(&r, &g)| set.records()[r].group != g).count();
        }
    }
    outcome(
        iterations >= 10_000 && duplicates == 0 && foreign == 0,
        format!("{iterations} iterations on bfu sets, {duplicates} with duplicate groups"),
    )
}

fn criterion_9_ransac_defaults() -> Outcome {
    let d = RansacConfig::default();
    let minimal = r#"{"mesh_path": "builtin:cube",
        "camera": {"fx": 320, "fy": 320, "cx": 64, "cy": 64, "width": 128, "height": 128}}"#;
    let cfg = ExperimentConfig::from_json(minimal, std::path::Path::new("acceptance.json")).unwrap();
    let ok = d.iterations == 150 && d.threshold == 2.0 && cfg.ransac.iterations == 150 && cfg.ransac.threshold == 2.0;
    outcome(ok, format!("iterations = {}, threshold = {} px", cfg.ransac.iterations, cfg.ransac.threshold))
}

fn criterion_10_cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let mut cfg = ExperimentConfig::builtin("l_bracket");
    cfg.scenes = 6;
    cfg.seed = 10;
    cfg.noise = NoiseConfig { coord_sigma: 0.02, outlier_rate: 0.1, outlier_scale: 0.5 };
    std::fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let mut outputs = Vec::new();
    for (run, threads) in [(0, 1), (1, 1), (2, 8), (3, 8)] {
        let out = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_hcce"))
            .args(["ablate", config.to_str().unwrap(), "--threads", &threads.to_string(), "--out-dir"])
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, format!("run {run} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        outputs.push((
            std::fs::read(out.join("ablation.csv")).unwrap(),
            std::fs::read(out.join("ablation.json")).unwrap(),
        ));
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(identical, format!("4 runs (1, 1, 8, 8 threads), CSV {} bytes, JSON {} bytes", outputs[0].0.len(), outputs[0].1.len()))
}

fn criterion_11_renderer() -> Outcome {
    // odd viewport so the centre pixel's ray is the optical axis
    let k = CameraIntrinsics::new(100.0, 100.0, 32.5, 32.5, 65, 65).unwrap();
    let r = render_front_back(&primitives::cube(1.0), &Pose::from_translation(Vector3::new(0.0, 0.0, 2.0)), &k);
    let centre = 32 * 65 + 32;
    let (f, b) = (r.front_depth[centre], r.back_depth[centre]);
    let centre_ok = (f - 1.5).abs() <= 1e-6 && (b - 2.5).abs() <= 1e-6;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let meshes = [primitives::cube(0.1), primitives::icosphere(0.05, 2), primitives::l_bracket(0.1, 0.04, 0.05)];
    let cam = CameraIntrinsics::new(320.0, 320.0, 64.0, 64.0, 128, 128).unwrap();
    let (mut masked, mut ordered) = (0usize, 0usize);
    for s in 0..100 {
        let pose = Pose {
            rotation: sample_rotation(&mut rng).to_rotation_matrix().into_inner(),
            translation: Vector3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(0.45..0.65)),
        };
        let r = render_front_back(&meshes[s % 3], &pose, &cam);
        for i in r.map.masked_indices() {
            masked += 1;
            ordered += usize::from(r.front_depth[i] <= r.back_depth[i]);
        }
    }
    outcome(
        centre_ok && masked > 0 && ordered == masked,
        format!("centre depths {f} / {b}; front <= back at {ordered}/{masked} masked pixels over 100 scenes"),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("codec round trip", criterion_1_round_trip),
        ("codec equivalence", criterion_2_equivalence),
        ("code continuity", criterion_3_continuity),
        ("loss math", criterion_4_loss_math),
        ("geometry oracles", criterion_5_geometry_oracles),
        ("noiseless pose recovery", criterion_6_noiseless_recovery),
        ("ultra-dense benefit", criterion_7_ultra_dense_benefit),
        ("constrained sampling", criterion_8_constrained_sampling),
        ("RANSAC defaults", criterion_9_ransac_defaults),
        ("CLI determinism", criterion_10_cli_determinism),
        ("renderer sanity", criterion_11_renderer),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let line = format!(
            "acceptance {:>2} {:<24} {}  {}\n",
            i + 1,
            name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        // bypass the test harness capture so the summary always shows
        std::io::stdout().write_all(line.as_bytes()).unwrap();
        if !o.passed {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn midpoint_decoding_halves_the_worst_case() {
    let c = HierarchicalCodec::default().with_midpoint(true);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10_000 {
        let x: f64 = rng.random();
        assert!((c.round_trip(x).unwrap() - x).abs() <= 2f64.powi(-9) + 1e-15);
    }
    assert_eq!(decode_bits(&[1; 8], false), 1.0 - 2f64.powi(-8));
}
