/// What the training loop should do after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleAction {
    Continue,
    Stop,
}

/// Halves the learning rate after `lr_patience` epochs without
/// improvement and stops after `stop_patience`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plateau {
    lr: f64,
    lr_patience: usize,
    stop_patience: usize,
    min_improvement: f64,
    best: f64,
    since_improvement: usize,
    improved: bool,
}

impl Plateau {
    pub fn new(lr: f64, lr_patience: usize, stop_patience: usize, min_improvement: f64) -> Self {
        Self {
            lr,
            lr_patience,
            stop_patience,
            min_improvement,
            best: f64::INFINITY,
            since_improvement: 0,
            improved: false,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn last_improved(&self) -> bool {
        self.improved
    }

    pub fn observe(&mut self, loss: f64) -> ScheduleAction {
        self.improved = self.best == f64::INFINITY || loss <= self.best - self.min_improvement;
        if self.improved {
            self.best = loss;
            self.since_improvement = 0;
            return ScheduleAction::Continue;
        }
        self.since_improvement += 1;
        if self.since_improvement >= self.stop_patience {
            return ScheduleAction::Stop;
        }
        if self.since_improvement % self.lr_patience == 0 {
            self.lr *= 0.5;
        }
        ScheduleAction::Continue
    }
}
