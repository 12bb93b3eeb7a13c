use shoal_core::autopilot::FcuMode;
use shoal_core::env_world::EnvironmentSpec;
use shoal_core::gcs_proxy::{Channel, TopicName};
use shoal_core::planner::PlannerKind;
use shoal_core::sim_server::{
    parse_command, ApiCommand, ApiReply, PlanCommand, PlanState, RobotConfig, ScenarioConfig, Simulation,
};
use shoal_core::wire::TransportKind;

fn open_water(robots: Vec<RobotConfig>) -> ScenarioConfig {
    let mut env = EnvironmentSpec::with_grid(1, 20, 20, 1.0, 10.0);
    env.fill_prob = 0.0;
    let mut cfg = ScenarioConfig::new("test", env, robots);
    cfg.seed = 9;
    cfg
}

fn pair() -> ScenarioConfig {
    open_water(vec![
        RobotConfig::new("alpha", [4.0, 4.0, -5.0, 0.0]),
        RobotConfig::new("beta", [14.0, 14.0, -5.0, 0.0]),
    ])
}

fn maneuver(sim: &mut Simulation) {
    sim.arm(0, true).unwrap();
    sim.teleop(0, [600, 200, -100, 0, 0, 300]).unwrap();
}

#[test]
fn identical_runs_are_bitwise_equal() {
    let run = || {
        let mut sim = Simulation::new(pair()).unwrap();
        maneuver(&mut sim);
        sim.run_for(10.0).unwrap();
        sim.robot_states()
    };
    let (a, b) = (run(), run());
    for (x, y) in a.iter().zip(&b) {
        let bits = |s: &shoal_core::hydro::VehicleState| {
            s.position.iter().chain(s.lin_vel.iter()).chain(s.orientation.coords.iter()).map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(bits(x), bits(y));
    }
}

#[test]
fn disarmed_robot_holds_still_while_other_maneuvers() {
    let mut sim = Simulation::new(pair()).unwrap();
    let before = *sim.robot_state(1).unwrap();
    maneuver(&mut sim);
    sim.run_for(10.0).unwrap();
    let after = sim.robot_state(1).unwrap();
    assert!((after.position - before.position).norm() < 1e-9);
    assert!((sim.robot_state(0).unwrap().position - sim.config().robots[0].start_position()).norm() > 1.0);
}

trait StartPos {
    fn start_position(&self) -> shoal_core::hydro::Vec3;
}

impl StartPos for RobotConfig {
    fn start_position(&self) -> shoal_core::hydro::Vec3 {
        shoal_core::hydro::Vec3::new(self.start[0], self.start[1], self.start[2])
    }
}

#[test]
fn four_robots_get_disjoint_ports_and_heartbeat_topics() {
    let robots = (0..4).map(|i| RobotConfig::new(format!("r{i}"), [2.0 + 4.0 * i as f64, 3.0, -5.0, 0.0])).collect();
    let mut sim = Simulation::new(open_water(robots)).unwrap();
    sim.run_for(1.5).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for i in 0..4 {
        for p in sim.ports(i).unwrap().ports() {
            assert!(seen.insert(p), "port {p} reused");
        }
        let hb = sim.proxy().bus().latest(&TopicName::new(i, Channel::Heartbeat)).expect("heartbeat");
        assert_eq!(hb.sys_id as usize, i + 1);
    }
    let bound = sim.transport().bound_ports();
    assert!(seen.iter().all(|p| bound.contains(p)));
}

#[test]
fn arm_shows_up_in_next_frame() {
    let mut sim = Simulation::new(pair()).unwrap();
    assert!(!sim.frame().robots[0].armed);
    let reply = sim.apply(&parse_command(r#"{"type":"arm","robot":0}"#).unwrap());
    assert!(matches!(reply, ApiReply::Ok { .. }));
    sim.step().unwrap();
    let f = sim.frame();
    assert!(f.robots[0].armed);
    assert_eq!(f.robots[0].mode, FcuMode::Manual);
    assert!(!f.robots[1].armed);
}

#[test]
fn forward_teleop_moves_plus_x() {
    let mut sim = Simulation::new(pair()).unwrap();
    sim.apply(&ApiCommand::Arm { robot: 0, armed: true });
    sim.apply(&ApiCommand::Teleop { robot: 0, axes: [800, 0, 0, 0, 0, 0] });
    let x0 = sim.frame().robots[0].true_pose[0];
    sim.run_for(2.0).unwrap();
    let f = sim.frame();
    assert!(f.robots[0].true_pose[0] > x0 + 0.3, "moved {}", f.robots[0].true_pose[0] - x0);
    assert!(f.robots[0].true_pose[1].abs() - 4.0 < 0.05);
}

#[test]
fn unknown_robot_and_bad_axes_are_error_payloads() {
    let mut sim = Simulation::new(pair()).unwrap();
    let r = sim.apply(&ApiCommand::Arm { robot: 7, armed: true });
    assert!(matches!(r, ApiReply::Error { ref kind, .. } if kind == "UnknownRobot"), "{r:?}");
    let r = sim.apply(&ApiCommand::Teleop { robot: 0, axes: [2000, 0, 0, 0, 0, 0] });
    assert!(matches!(r, ApiReply::Error { .. }));
}

fn guided(sim: &mut Simulation) {
    for i in 0..sim.robot_count() {
        sim.arm(i, true).unwrap();
        sim.set_mode(i, FcuMode::Guided).unwrap();
    }
    sim.run_for(0.5).unwrap();
}

#[test]
fn goal_inside_obstacle_is_goal_invalid() {
    let mut env = EnvironmentSpec::with_grid(1, 20, 20, 1.0, 10.0);
    env.fill_prob = 1.0;
    env.ca_iterations = 0;
    let mut cfg = ScenarioConfig::new("walled", env, vec![RobotConfig::new("solo", [4.5, 4.5, -5.0, 0.0])]);
    cfg.clear_starts = true;
    let mut sim = Simulation::new(cfg).unwrap();
    guided(&mut sim);
    let cmd = ApiCommand::Plan { goals: vec![[15.5, 15.5, -5.0, 0.0]], planner: PlannerKind::RrtConnect, time_budget: Some(1.0), seed: None };
    match sim.apply(&cmd) {
        ApiReply::Error { kind, .. } => assert_eq!(kind, "GoalInvalid"),
        other => panic!("expected GoalInvalid, got {other:?}"),
    }
}

#[test]
fn plan_requires_guided_mode() {
    let mut sim = Simulation::new(pair()).unwrap();
    let cmd = PlanCommand::new(vec![[6.0, 4.0, -5.0, 0.0], [14.0, 12.0, -5.0, 0.0]], PlannerKind::Prm);
    let err = sim.request_plan(&cmd).unwrap_err();
    assert_eq!(err.kind(), "NotGuided");
}

#[test]
fn k_steps_advance_exactly_k_ticks() {
    let mut sim = Simulation::new(pair()).unwrap();
    sim.run_for(1.0).unwrap();
    sim.apply(&ApiCommand::Pause);
    let t0 = sim.time();
    for _ in 0..50 {
        assert!(!sim.update().unwrap());
    }
    assert_eq!(sim.time(), t0);
    assert!(matches!(sim.apply(&ApiCommand::Step { count: 3 }), ApiReply::Ok { .. }));
    sim.apply(&ApiCommand::Step { count: 4 });
    let mut ran = 0;
    while sim.update().unwrap() {
        ran += 1;
    }
    assert_eq!(ran, 7);
    assert!((sim.time() - (t0 + 7.0 * sim.dt())).abs() < 1e-12);
    sim.apply(&ApiCommand::Resume);
    assert!(sim.update().unwrap());
}

#[test]
fn planned_motion_reaches_goal() {
    let mut sim = Simulation::new(pair()).unwrap();
    guided(&mut sim);
    let goals = vec![[8.0, 4.0, -5.0, 0.0], [14.0, 10.0, -4.0, 0.5]];
    let mut cmd = PlanCommand::new(goals.clone(), PlannerKind::RrtConnect);
    cmd.max_iterations = Some(20_000);
    let res = sim.request_plan(&cmd).unwrap();
    assert!(res.path.is_some());
    let duration = sim.executor().unwrap().duration();
    sim.run_for(duration + 5.0).unwrap();
    assert_eq!(sim.plan_status().state, PlanState::Completed);
    for (pose, goal) in sim.true_poses().iter().zip(&goals) {
        let d = ((pose[0] - goal[0]).powi(2) + (pose[1] - goal[1]).powi(2) + (pose[2] - goal[2]).powi(2)).sqrt();
        assert!(d < 0.3, "final error {d}");
    }
    assert_eq!(sim.metrics().collision_ticks, 0);
}

#[test]
fn stream_frames_are_json_and_monotone() {
    let mut sim = Simulation::new(pair()).unwrap();
    let mut last = -1.0;
    let mut frames = 0;
    for _ in 0..100 {
        sim.step().unwrap();
        if sim.stream_due() {
            let f = sim.frame();
            assert!(f.time > last);
            last = f.time;
            frames += 1;
            let text = ApiReply::Frame(f.clone()).to_json();
            let back: ApiReply = serde_json::from_str(&text).unwrap();
            assert_eq!(back, ApiReply::Frame(f));
        }
    }
    // 2 s at 20 Hz
    assert_eq!(frames, 40);
}

#[test]
fn udp_transport_runs_with_deadline() {
    let mut cfg = pair();
    cfg.transport = TransportKind::Udp;
    cfg.port_base = 20000 + (std::process::id() % 2000) as u16 * 10;
    cfg.gcs_port = cfg.port_base - 5;
    let mut sim = match Simulation::new(cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("skipping: {e}");
            return;
        }
    };
    maneuver(&mut sim);
    sim.run_for(1.0).unwrap();
    let m = sim.metrics();
    assert_eq!(m.ticks, 50);
    assert!(m.missed_actuator_frames < 10, "{m:?}");
    assert!(sim.robot_state(0).unwrap().position.x > 4.0);
}

#[test]
fn shipped_scenarios_load_and_run() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in ["two_robots.toml", "crossing.toml"] {
        let cfg = shoal_core::sim_server::load_scenario(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let mut sim = Simulation::new(cfg).unwrap();
        sim.run_for(1.0).unwrap();
        assert_eq!(sim.metrics().ticks, 50);
    }
}
