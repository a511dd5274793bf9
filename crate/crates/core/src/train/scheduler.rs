#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulerSettings {
    pub patience: usize,
    pub factor: f64,
    pub floor: f64,
    /// Smallest decrease of the monitored value that counts as improvement.
    pub min_delta: f64,
}

impl Default for SchedulerSettings {
    fn default() -> Self {
        SchedulerSettings {
            patience: 7,
            factor: 0.1f64.sqrt(),
            floor: 0.5e-5,
            min_delta: 1e-4,
        }
    }
}

/// Reduce-on-plateau learning rate for a monitored value where lower is better.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub settings: SchedulerSettings,
    pub lr: f64,
    pub best: Option<f64>,
    /// Epochs since the last improvement or reduction.
    pub stagnant: usize,
    pub history: Vec<f64>,
}

impl PlateauScheduler {
    pub fn new(lr: f64, settings: SchedulerSettings) -> Self {
        PlateauScheduler {
            settings,
            lr: lr.max(settings.floor),
            best: None,
            stagnant: 0,
            history: Vec::new(),
        }
    }

    /// Records one epoch's monitored value and returns the learning rate for the next epoch.
    pub fn step(&mut self, value: f64) -> f64 {
        self.history.push(value);
        let improved = match self.best {
            None => !value.is_nan(),
            Some(best) => value < best - self.settings.min_delta,
        };
        if improved {
            self.best = Some(value);
            self.stagnant = 0;
        } else {
            self.stagnant += 1;
            if self.stagnant >= self.settings.patience {
                self.lr = (self.lr * self.settings.factor).max(self.settings.floor);
                self.stagnant = 0;
            }
        }
        self.lr
    }
}
