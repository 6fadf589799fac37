use std::thread;

use toolground_core::executor::{BatchRunner, ExecOutcome, Job};

/// Runs a batch on up to `lanes` scoped threads at a time. Outcomes come
/// back in job order, so results match [`toolground_core::executor::SerialRunner`].
#[derive(Debug, Clone, Copy)]
pub struct ThreadedRunner {
    pub lanes: usize,
}

impl ThreadedRunner {
    pub fn new(lanes: usize) -> Self {
        ThreadedRunner { lanes: lanes.max(1) }
    }
}

impl BatchRunner for ThreadedRunner {
    fn run_batch<'a>(&self, jobs: Vec<Job<'a>>) -> Vec<ExecOutcome> {
        let mut out = Vec::with_capacity(jobs.len());
        let mut jobs = jobs.into_iter().peekable();
        while jobs.peek().is_some() {
            let wave: Vec<Job<'a>> = jobs.by_ref().take(self.lanes.max(1)).collect();
            thread::scope(|s| {
                let handles: Vec<_> = wave.into_iter().map(|j| s.spawn(j)).collect();
                for h in handles {
                    out.push(h.join().unwrap_or_else(|p| std::panic::resume_unwind(p)));
                }
            });
        }
        out
    }
}
