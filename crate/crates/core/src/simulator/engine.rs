//! Discrete-event core: FIFO non-preemptive processors, one query in flight
//! per task, stages of a query strictly in sequence.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub proc_id: u32,
    pub service_ms: f64,
    /// Added to the service time of the first query only (switch cost).
    pub first_query_extra_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub task_id: u32,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub queries: u32,
    /// Delay between consecutive stages of a query; occupies no processor.
    pub hop_ms: f64,
    pub record_trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageRecord {
    pub task_id: u32,
    pub query: u32,
    pub stage: usize,
    pub proc_id: u32,
    pub ready: f64,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub task_id: u32,
    pub latencies_ms: Vec<f64>,
}

impl TaskOutcome {
    pub fn mean_latency_ms(&self) -> Option<f64> {
        (!self.latencies_ms.is_empty()).then(|| self.latencies_ms.iter().sum::<f64>() / self.latencies_ms.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub per_task: Vec<TaskOutcome>,
    pub makespan_ms: f64,
    pub trace: Vec<StageRecord>,
}

impl RunOutcome {
    pub fn completed(&self) -> usize {
        self.per_task.iter().map(|t| t.latencies_ms.len()).sum()
    }

    /// Completed queries per second of simulated time.
    pub fn throughput_qps(&self) -> f64 {
        if self.makespan_ms > 0.0 {
            self.completed() as f64 / self.makespan_ms * 1000.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Ready { job: usize, query: u32, stage: usize },
    Done { job: usize, query: u32, stage: usize, ready: f64, start: f64 },
}

#[derive(Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct Sim<'a> {
    jobs: &'a [Job],
    cfg: EngineConfig,
    heap: BinaryHeap<Event>,
    seq: u64,
    queues: Vec<VecDeque<(usize, u32, usize, f64)>>,
    busy: Vec<bool>,
    release: Vec<f64>,
    out: RunOutcome,
}

impl Sim<'_> {
    fn push(&mut self, time: f64, kind: Kind) {
        self.heap.push(Event { time, seq: self.seq, kind });
        self.seq += 1;
    }

    fn try_start(&mut self, proc: usize, now: f64) {
        if self.busy[proc] {
            return;
        }
        if let Some((job, query, stage, ready)) = self.queues[proc].pop_front() {
            let st = &self.jobs[job].stages[stage];
            let service = st.service_ms + if query == 0 { st.first_query_extra_ms } else { 0.0 };
            self.busy[proc] = true;
            self.push(now + service, Kind::Done { job, query, stage, ready, start: now });
        }
    }
}

/// Runs every job for `cfg.queries` queries. `arrival` lists job indices in
/// release order; all first queries are released at time 0 in that order.
pub fn simulate(jobs: &[Job], arrival: &[usize], cfg: EngineConfig) -> RunOutcome {
    let procs = jobs.iter().flat_map(|j| j.stages.iter().map(|s| s.proc_id as usize)).max().unwrap_or(0) + 1;
    let mut sim = Sim {
        jobs,
        cfg,
        heap: BinaryHeap::new(),
        seq: 0,
        queues: vec![VecDeque::new(); procs],
        busy: vec![false; procs],
        release: vec![0.0; jobs.len()],
        out: RunOutcome {
            per_task: jobs.iter().map(|j| TaskOutcome { task_id: j.task_id, latencies_ms: Vec::new() }).collect(),
            makespan_ms: 0.0,
            trace: Vec::new(),
        },
    };
    if cfg.queries > 0 {
        for &job in arrival {
            if !jobs[job].stages.is_empty() {
                sim.push(0.0, Kind::Ready { job, query: 0, stage: 0 });
            }
        }
    }

    while let Some(Event { time, kind, .. }) = sim.heap.pop() {
        match kind {
            Kind::Ready { job, query, stage } => {
                let proc = jobs[job].stages[stage].proc_id as usize;
                sim.queues[proc].push_back((job, query, stage, time));
                sim.try_start(proc, time);
            }
            Kind::Done { job, query, stage, ready, start } => {
                let proc = jobs[job].stages[stage].proc_id as usize;
                sim.busy[proc] = false;
                if sim.cfg.record_trace {
                    sim.out.trace.push(StageRecord {
                        task_id: jobs[job].task_id,
                        query,
                        stage,
                        proc_id: proc as u32,
                        ready,
                        start,
                        end: time,
                    });
                }
                if stage + 1 < jobs[job].stages.len() {
                    sim.push(time + sim.cfg.hop_ms, Kind::Ready { job, query, stage: stage + 1 });
                } else {
                    sim.out.per_task[job].latencies_ms.push(time - sim.release[job]);
                    sim.out.makespan_ms = sim.out.makespan_ms.max(time);
                    if query + 1 < sim.cfg.queries {
                        sim.release[job] = time;
                        sim.push(time, Kind::Ready { job, query: query + 1, stage: 0 });
                    }
                }
                sim.try_start(proc, time);
            }
        }
    }
    sim.out
}
