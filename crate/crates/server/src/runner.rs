//! The tick thread: sole owner of the [`Simulation`].
//!
//! Commands arrive on a bounded queue and are applied between ticks in
//! arrival order; senders wait when the queue is full, so nothing is dropped.
//! Frames leave on a broadcast channel whose receivers skip the oldest
//! entries when they fall behind.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use shoal_core::sim_server::{ApiCommand, ApiReply, SimError, SimMetrics, Simulation};
use tokio::sync::{broadcast, mpsc, oneshot};

/// Command queue depth per simulation.
pub const COMMAND_QUEUE: usize = 256;
/// Frames retained for slow subscribers.
pub const FRAME_BUFFER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Sim seconds per wall second; `None` runs unpaced.
    pub pace: Option<f64>,
    /// Stop once sim time reaches this.
    pub duration: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { pace: Some(1.0), duration: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub sim_time: f64,
    pub wall_time: f64,
    pub metrics: SimMetrics,
}

impl RunSummary {
    pub fn real_time_factor(&self) -> f64 {
        if self.wall_time > 0.0 {
            self.sim_time / self.wall_time
        } else {
            f64::INFINITY
        }
    }
}

type Request = (ApiCommand, oneshot::Sender<ApiReply>);

/// Cloneable client side of a running simulation.
#[derive(Clone)]
pub struct SimClient {
    commands: mpsc::Sender<Request>,
    frames: broadcast::Sender<Arc<str>>,
}

impl SimClient {
    /// Queues `cmd` and waits for the tick thread's reply.
    pub async fn send(&self, cmd: ApiCommand) -> ApiReply {
        let (tx, rx) = oneshot::channel();
        if self.commands.send((cmd, tx)).await.is_err() {
            return ApiReply::error("Stopped", "simulation is not running");
        }
        rx.await.unwrap_or_else(|_| ApiReply::error("Stopped", "simulation stopped before replying"))
    }

    /// Serialized `frame` replies, newest last.
    pub fn subscribe(&self) -> broadcast::Receiver<Arc<str>> {
        self.frames.subscribe()
    }
}

pub struct SimRunner {
    client: SimClient,
    stop: Arc<AtomicBool>,
    done: Arc<AtomicBool>,
    thread: JoinHandle<Result<RunSummary, SimError>>,
}

impl SimRunner {
    pub fn spawn(sim: Simulation, opts: RunOptions) -> Self {
        let (cmd_tx, cmd_rx) = mpsc::channel(COMMAND_QUEUE);
        let (frame_tx, _) = broadcast::channel(FRAME_BUFFER);
        let stop = Arc::new(AtomicBool::new(false));
        let done = Arc::new(AtomicBool::new(false));
        let thread = {
            let frames = frame_tx.clone();
            let (stop, done) = (stop.clone(), done.clone());
            std::thread::Builder::new()
                .name("sim-tick".into())
                .spawn(move || {
                    let out = tick_loop(sim, opts, cmd_rx, frames, &stop);
                    done.store(true, Ordering::Release);
                    out
                })
                .expect("spawn tick thread")
        };
        Self { client: SimClient { commands: cmd_tx, frames: frame_tx }, stop, done, thread }
    }

    pub fn client(&self) -> SimClient {
        self.client.clone()
    }

    pub fn is_finished(&self) -> bool {
        self.done.load(Ordering::Acquire)
    }

    /// Resolves once the tick loop has exited.
    pub fn finished(&self) -> impl std::future::Future<Output = ()> + Send + 'static {
        let done = self.done.clone();
        async move {
            while !done.load(Ordering::Acquire) {
                tokio::time::sleep(Duration::from_millis(20)).await;
            }
        }
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::Relaxed);
    }

    pub fn join(self) -> Result<RunSummary, SimError> {
        self.stop();
        self.thread.join().unwrap_or_else(|p| std::panic::resume_unwind(p))
    }
}

fn tick_loop(
    mut sim: Simulation,
    opts: RunOptions,
    mut commands: mpsc::Receiver<Request>,
    frames: broadcast::Sender<Arc<str>>,
    stop: &AtomicBool,
) -> Result<RunSummary, SimError> {
    let started = Instant::now();
    let frame_period = Duration::from_secs_f64(1.0 / sim.config().stream_rate);
    let mut anchor = (Instant::now(), sim.time());
    let mut last_frame = Instant::now();
    let publish = |sim: &mut Simulation, last: &mut Instant| {
        // An error only means nobody is subscribed.
        let _ = frames.send(ApiReply::Frame(sim.frame()).to_json().into());
        *last = Instant::now();
    };
    publish(&mut sim, &mut last_frame);
    loop {
        while let Ok((cmd, reply)) = commands.try_recv() {
            let _ = reply.send(sim.apply(&cmd));
        }
        if stop.load(Ordering::Relaxed) || opts.duration.is_some_and(|d| sim.time() >= d - 1e-9) {
            break;
        }
        if sim.update()? {
            if sim.stream_due() {
                publish(&mut sim, &mut last_frame);
            }
            if let Some(pace) = opts.pace {
                let due = anchor.0 + Duration::from_secs_f64((sim.time() - anchor.1).max(0.0) / pace);
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
            }
        } else {
            // Paused: keep clients fed and re-anchor pacing for the resume.
            if last_frame.elapsed() >= frame_period {
                publish(&mut sim, &mut last_frame);
            }
            std::thread::sleep(Duration::from_millis(2));
            anchor = (Instant::now(), sim.time());
        }
    }
    publish(&mut sim, &mut last_frame);
    Ok(RunSummary { sim_time: sim.time(), wall_time: started.elapsed().as_secs_f64(), metrics: sim.metrics() })
}
