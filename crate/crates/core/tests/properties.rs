use artflow::estimation::{aggregate_axis, gram_schmidt_correct};
use artflow::fields::gt_fields;
use artflow::geometry::{angle_between, point_to_line_distance, Vec3};
use artflow::predictors::{predict_noisy, NoiseModel, Predictor};
use artflow::rollout::{run_policy, PolicyKind, PolicyParams};
use artflow::scene::{
    generate_scene, parse_scene, pose_points, render_observation, serialize_scene, JointType, OcclusionModel,
    SampledScene,
};
use artflow::trajectory::{plan_revolute, rodrigues, TrajectoryParams};
use proptest::prelude::*;

fn unit_vector() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z)| (x * x + y * y + z * z).sqrt() > 1e-2)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

fn vector(scale: f64) -> impl Strategy<Value = Vec3> {
    (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_serialize_round_trip(index in 0usize..20, seed in any::<u64>()) {
        let g = generate_scene(index, seed, 100);
        let parsed = parse_scene(&g.text).unwrap();
        prop_assert_eq!(&parsed, &g.scene);
        prop_assert_eq!(parse_scene(&serialize_scene(&parsed)).unwrap(), parsed);
    }

    #[test]
    fn revolute_pose_is_isometry(seed in any::<u64>(), frac in 0.0f64..1.0) {
        let g = generate_scene(0, seed, 60);
        let s = SampledScene::new(g.scene, seed);
        let j = s.joint().clone();
        let q = j.lower + frac * j.range();
        let posed = pose_points(&s, q).unwrap();
        let closed = pose_points(&s, j.lower).unwrap();
        let target: Vec<usize> = (0..posed.points.len()).filter(|&i| posed.part[i] == s.target_index()).collect();
        for (a, &i) in target.iter().enumerate() {
            for &k in &target[a + 1..] {
                let before = (closed.points[i] - closed.points[k]).norm();
                let after = (posed.points[i] - posed.points[k]).norm();
                prop_assert!((before - after).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn gram_schmidt_is_idempotent(f in vector(2.0), r in vector(2.0)) {
        let once = gram_schmidt_correct(&f, &r).projection;
        let twice = gram_schmidt_correct(&f, &once).projection;
        prop_assert!((once - twice).norm() <= 1e-12);
    }

    #[test]
    fn rodrigues_is_in_so3_and_composes(axis in unit_vector(), a in -7.0f64..7.0, b in -7.0f64..7.0) {
        let ra = rodrigues(&axis, a).unwrap();
        let rb = rodrigues(&axis, b).unwrap();
        prop_assert!(ra.orthonormality_error() <= 1e-10);
        prop_assert!((ra.determinant() - 1.0).abs() <= 1e-10);
        prop_assert!((ra.apply(&axis) - axis).norm() <= 1e-10);
        let composed = ra * rb;
        let direct = rodrigues(&axis, a + b).unwrap();
        prop_assert!((composed.matrix() - direct.matrix()).amax() <= 1e-10);
    }

    #[test]
    fn direction_is_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let g = generate_scene(0, seed, 150);
        let s = SampledScene::new(g.scene, seed);
        let obs = render_observation(&s, s.joint().lower, &OcclusionModel::none()).unwrap();
        let fields = gt_fields(&obs, s.joint()).unwrap();
        let mut scaled = fields.clone();
        for r in &mut scaled.projection {
            *r *= scale;
        }
        for use_gs in [true, false] {
            let a = aggregate_axis(&obs, &fields, JointType::Revolute, use_gs, true).unwrap();
            let b = aggregate_axis(&obs, &scaled, JointType::Revolute, use_gs, true).unwrap();
            prop_assert!(angle_between(&a.direction, &b.direction) <= 1e-12);
        }
    }

    #[test]
    fn exact_fields_recover_every_generated_axis(index in 0usize..40, seed in any::<u64>(), frac in 0.0f64..1.0) {
        let g = generate_scene(index, seed, 150);
        let s = SampledScene::new(g.scene, seed);
        let j = s.joint().clone();
        let obs = render_observation(&s, j.lower + frac * j.range(), &OcclusionModel::none()).unwrap();
        let fields = gt_fields(&obs, &j).unwrap();
        let est = aggregate_axis(&obs, &fields, j.joint_type, true, true).unwrap();
        prop_assert!(angle_between(&est.direction, &j.axis) <= 1e-9);
        if j.joint_type == JointType::Revolute {
            prop_assert!(point_to_line_distance(&est.origin, &j.origin, &j.axis) <= 1e-9);
            for i in obs.masked_indices() {
                let sign = est.direction.cross(&(obs.points[i] - est.origin)).dot(&fields.flow[i]);
                prop_assert!(sign >= -1e-12);
            }
        }
    }

    #[test]
    fn revolute_plan_keeps_radius_and_opens(seed in any::<u64>(), frac in 0.0f64..0.9) {
        let g = generate_scene(0, seed, 150);
        let s = SampledScene::new(g.scene, seed);
        let j = s.joint().clone();
        let obs = render_observation(&s, j.lower + frac * j.range(), &OcclusionModel::none()).unwrap();
        let fields = gt_fields(&obs, &j).unwrap();
        let est = aggregate_axis(&obs, &fields, JointType::Revolute, true, true).unwrap();
        let i = obs.masked_indices().max_by(|&a, &b| fields.flow[a].norm().total_cmp(&fields.flow[b].norm())).unwrap();
        let p = obs.points[i];
        let plan = plan_revolute(&p, &est.direction, &est.origin, &TrajectoryParams::new(20, 1.0, 1.0).unwrap()).unwrap();
        let radius = point_to_line_distance(&p, &est.origin, &est.direction);
        for w in &plan.waypoints {
            prop_assert!((point_to_line_distance(w, &est.origin, &est.direction) - radius).abs() <= 1e-10);
        }
        prop_assert!((plan.waypoints[1] - plan.waypoints[0]).dot(&fields.flow[i]) > 0.0);
    }

    #[test]
    fn gs_corrects_origin_under_in_plane_bias(seed in any::<u64>(), bias in 1.0f64..30.0) {
        let g = generate_scene(0, seed, 300);
        let s = SampledScene::new(g.scene, seed);
        let j = s.joint().clone();
        let obs = render_observation(&s, j.lower, &OcclusionModel::none()).unwrap();
        let fields = predict_noisy(&s.scene, &obs, &NoiseModel::new(0.0, 0.0, bias, seed).unwrap()).unwrap();
        let with = aggregate_axis(&obs, &fields, JointType::Revolute, true, true).unwrap();
        let without = aggregate_axis(&obs, &fields, JointType::Revolute, false, true).unwrap();
        let err_with = point_to_line_distance(&with.origin, &j.origin, &j.axis);
        let err_without = point_to_line_distance(&without.origin, &j.origin, &j.axis);
        prop_assert!(err_with < err_without);
        prop_assert!(angle_between(&with.direction, &j.axis) <= 1e-9);
    }
}

fn door(seed: u64) -> SampledScene {
    SampledScene::new(generate_scene(0, seed, 400).scene, seed)
}

#[test]
fn rollouts_are_deterministic() {
    let s = door(8);
    let predictor = Predictor::Noisy(NoiseModel::new(0.3, 0.1, 5.0, 17).unwrap());
    let occ = OcclusionModel::new(0.1, 0.6, 4).unwrap();
    let params = PolicyParams {
        detach_tolerance: Some(0.03),
        ..PolicyParams::default()
    };
    let a = run_policy(&s, &predictor, &occ, &params).unwrap();
    let b = run_policy(&s, &predictor, &occ, &params).unwrap();
    assert_eq!(a, b);
}

#[test]
fn full_horizon_without_replanning_matches_no_mpc() {
    for seed in 0..6 {
        let s = door(seed);
        let predictor = Predictor::Noisy(NoiseModel::new(0.2, 0.05, 10.0, seed).unwrap());
        let occ = OcclusionModel::new(0.1, 0.6, seed).unwrap();
        let base = PolicyParams {
            horizon: 20,
            steps: 20,
            max_steps: 20,
            ..PolicyParams::default()
        };
        let open = run_policy(&s, &predictor, &occ, &base).unwrap();
        let closed_form = run_policy(
            &s,
            &predictor,
            &occ,
            &PolicyParams {
                policy: PolicyKind::NoMpc,
                ..base.clone()
            },
        )
        .unwrap();
        assert_eq!(open.q_trace, closed_form.q_trace);
        assert_eq!(open.step_increments, closed_form.step_increments);
        assert_eq!(open.replan_count, 1);
        assert_eq!(closed_form.replan_count, 1);
    }
}

#[test]
fn exact_rollouts_open_monotonically_and_keep_metric_identity() {
    for index in 0..10 {
        let s = SampledScene::new(generate_scene(index, 55, 300).scene, index as u64);
        let r = run_policy(&s, &Predictor::Exact, &OcclusionModel::none(), &PolicyParams::default()).unwrap();
        assert!(r.q_trace.windows(2).all(|w| w[1] >= w[0]), "scene {index}");
        let q_end = *r.q_trace.last().unwrap();
        let recomputed = (q_end - r.q_goal).abs() / (r.q_goal - r.q_init).abs();
        assert!((recomputed - r.normalized_distance).abs() <= 1e-12);
        assert!(r.normalized_distance <= 0.05);
    }
}

#[test]
fn af_only_replans_every_step_like_single_step_mpc() {
    let s = SampledScene::new(generate_scene(1, 12, 300).scene, 2);
    let single = PolicyParams {
        horizon: 1,
        steps: 1,
        ..PolicyParams::default()
    };
    let af = PolicyParams {
        policy: PolicyKind::AfOnly,
        steps: 1,
        ..PolicyParams::default()
    };
    let a = run_policy(&s, &Predictor::Exact, &OcclusionModel::none(), &single).unwrap();
    let b = run_policy(&s, &Predictor::Exact, &OcclusionModel::none(), &af).unwrap();
    assert_eq!(a.replan_count, b.replan_count);
    for r in [&a, &b] {
        assert_eq!(r.replan_count, r.steps_executed);
    }
}
