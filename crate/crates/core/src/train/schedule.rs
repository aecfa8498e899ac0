//! Two-stage early-stopping schedule: after `patience` consecutive epochs
//! without a strictly lower validation loss, the learning rate drops by the
//! reduction factor and the best weights come back; after the final allowed
//! reduction plus another `patience` flat epochs, training stops.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleStep {
    /// New best validation loss; caller snapshots the weights.
    Improved,
    Wait,
    /// Patience ran out; caller reduces the learning rate and restores the
    /// best weights.
    ReduceLr,
    Stop,
}

#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    max_reductions: usize,
    best: Option<f64>,
    since_best: usize,
    reductions: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, max_reductions: usize) -> Self {
        Self {
            patience,
            max_reductions,
            best: None,
            since_best: 0,
            reductions: 0,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn reductions(&self) -> usize {
        self.reductions
    }

    /// Feeds one epoch's validation loss. Improvement means strictly lower
    /// than the best seen, by any margin.
    pub fn observe(&mut self, val_loss: f64) -> ScheduleStep {
        let improved = match self.best {
            None => true,
            Some(best) => val_loss < best,
        };
        if improved {
            self.best = Some(val_loss);
            self.since_best = 0;
            return ScheduleStep::Improved;
        }
        self.since_best += 1;
        if self.since_best < self.patience {
            return ScheduleStep::Wait;
        }
        if self.reductions < self.max_reductions {
            self.reductions += 1;
            self.since_best = 0;
            ScheduleStep::ReduceLr
        } else {
            ScheduleStep::Stop
        }
    }
}
