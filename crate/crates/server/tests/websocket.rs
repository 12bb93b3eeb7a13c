use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::Value;
use shoal_core::env_world::EnvironmentSpec;
use shoal_core::sim_server::{RobotConfig, ScenarioConfig, Simulation};
use shoal_server::{serve_on, RunOptions, SimRunner};
use tokio_tungstenite::tungstenite::Message;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

fn pair(fill: f64) -> Simulation {
    let mut env = EnvironmentSpec::with_grid(1, 20, 20, 1.0, 10.0);
    env.fill_prob = fill;
    env.ca_iterations = 0;
    let mut cfg = ScenarioConfig::new(
        "ws",
        env,
        vec![RobotConfig::new("alpha", [4.5, 4.5, -5.0, 0.0]), RobotConfig::new("beta", [14.5, 14.5, -5.0, 0.0])],
    );
    cfg.clear_starts = true;
    Simulation::new(cfg).unwrap()
}

async fn start(sim: Simulation) -> (SimRunner, Ws, tokio::sync::oneshot::Sender<()>) {
    let runner = SimRunner::spawn(sim, RunOptions { pace: Some(4.0), duration: None });
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(serve_on(listener, runner.client(), async {
        let _ = stop_rx.await;
    }));
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
    (runner, ws, stop_tx)
}

async fn next_json(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("message in time").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Sends `text` and returns the first non-frame message.
async fn call(ws: &mut Ws, text: &str) -> Value {
    ws.send(Message::Text(text.into())).await.unwrap();
    loop {
        let v = next_json(ws).await;
        if v["type"] != "frame" {
            return v;
        }
    }
}

async fn next_frame(ws: &mut Ws) -> Value {
    loop {
        let v = next_json(ws).await;
        if v["type"] == "frame" {
            return v;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn arm_then_teleop_moves_robot_forward() {
    let (runner, mut ws, stop) = start(pair(0.0)).await;
    let r = call(&mut ws, r#"{"type":"arm","robot":0}"#).await;
    assert_eq!(r["type"], "ok");
    let f = next_frame(&mut ws).await;
    assert_eq!(f["robots"][0]["armed"], true);
    assert_eq!(f["robots"][1]["armed"], false);
    let x0 = f["robots"][0]["true_pose"][0].as_f64().unwrap();
    assert_eq!(call(&mut ws, r#"{"type":"teleop","robot":0,"axes":[800,0,0,0,0,0]}"#).await["type"], "ok");
    let mut moved = 0.0;
    for _ in 0..60 {
        let f = next_frame(&mut ws).await;
        moved = f["robots"][0]["true_pose"][0].as_f64().unwrap() - x0;
        if moved > 0.3 {
            break;
        }
    }
    assert!(moved > 0.3, "moved {moved}");
    stop.send(()).unwrap();
    runner.join().unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_messages_are_answered_not_fatal() {
    let (runner, mut ws, stop) = start(pair(0.0)).await;
    for bad in ["nonsense", r#"{"type":"warp"}"#, r#"{"type":"arm","robot":9}"#] {
        let r = call(&mut ws, bad).await;
        assert_eq!(r["type"], "error", "{bad} gave {r}");
    }
    // Connection still serves frames and commands.
    next_frame(&mut ws).await;
    assert_eq!(call(&mut ws, r#"{"type":"get_world"}"#).await["type"], "world");
    stop.send(()).unwrap();
    runner.join().unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn goal_in_obstacle_is_goal_invalid() {
    let (runner, mut ws, stop) = start(pair(1.0)).await;
    for i in 0..2 {
        call(&mut ws, &format!(r#"{{"type":"arm","robot":{i}}}"#)).await;
        call(&mut ws, &format!(r#"{{"type":"set_mode","robot":{i},"mode":"GUIDED"}}"#)).await;
    }
    let r = call(&mut ws, r#"{"type":"plan","goals":[[10.5,10.5,-5,0],[16.5,16.5,-5,0]],"time_budget":1}"#).await;
    assert_eq!(r["type"], "error");
    assert_eq!(r["kind"], "GoalInvalid");
    stop.send(()).unwrap();
    runner.join().unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn paused_steps_advance_exact_ticks() {
    let (runner, mut ws, stop) = start(pair(0.0)).await;
    assert_eq!(call(&mut ws, r#"{"type":"pause"}"#).await["type"], "ok");
    let f = next_frame(&mut ws).await;
    let tick0 = f["tick"].as_u64().unwrap();
    assert_eq!(f["paused"], true);
    assert_eq!(call(&mut ws, r#"{"type":"step","count":5}"#).await["type"], "ok");
    let mut tick = tick0;
    for _ in 0..40 {
        tick = next_frame(&mut ws).await["tick"].as_u64().unwrap();
        if tick == tick0 + 5 {
            break;
        }
    }
    assert_eq!(tick, tick0 + 5);
    stop.send(()).unwrap();
    runner.join().unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn frames_arrive_near_stream_rate() {
    let (runner, mut ws, stop) = start(pair(0.0)).await;
    let first = next_frame(&mut ws).await["time"].as_f64().unwrap();
    let mut last = first;
    for _ in 0..20 {
        let t = next_frame(&mut ws).await["time"].as_f64().unwrap();
        assert!(t > last);
        last = t;
    }
    // 20 frames at 20 Hz span 1 s of sim time.
    assert!((last - first - 1.0).abs() < 0.1, "{}", last - first);
    stop.send(()).unwrap();
    runner.join().unwrap();
}

#[test]
fn unpaced_runner_stops_at_duration() {
    let runner = SimRunner::spawn(pair(0.0), RunOptions { pace: None, duration: Some(2.0) });
    while !runner.is_finished() {
        std::thread::sleep(Duration::from_millis(5));
    }
    let summary = runner.join().unwrap();
    assert!((summary.sim_time - 2.0).abs() < 1e-9);
    assert_eq!(summary.metrics.ticks, 100);
}

#[tokio::test(flavor = "multi_thread")]
async fn slow_subscribers_lose_old_frames_but_commands_all_land() {
    let runner = SimRunner::spawn(pair(0.0), RunOptions { pace: None, duration: None });
    let client = runner.client();
    let mut frames = client.subscribe();
    tokio::time::sleep(Duration::from_millis(300)).await;
    // Unpaced, far more than the buffer has been published by now.
    match frames.recv().await {
        Err(tokio::sync::broadcast::error::RecvError::Lagged(n)) => assert!(n > 0),
        other => panic!("expected lag, got {other:?}"),
    }
    assert!(frames.recv().await.is_ok());

    let burst = 3 * shoal_server::COMMAND_QUEUE;
    let replies = futures_util::future::join_all(
        (0..burst).map(|_| client.send(shoal_core::sim_server::ApiCommand::Arm { robot: 0, armed: true })),
    )
    .await;
    assert_eq!(replies.len(), burst);
    assert!(replies.iter().all(|r| matches!(r, shoal_core::sim_server::ApiReply::Ok { .. })));
    runner.join().unwrap();
}
