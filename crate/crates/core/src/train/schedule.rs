/// Absolute tolerance below the best loss that counts as an improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-4;

/// What [`PlateauSchedule::observe`] decided for one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochDecision {
    pub improved: bool,
    pub halved: bool,
    pub stop: bool,
    /// Learning rate for the next epoch.
    pub lr: f64,
}

/// Learning-rate halving on plateaus plus early stopping.
///
/// An epoch improves when its loss is below `best - 1e-4`. Both counters
/// reset on improvement. The halving counter also resets after each halving;
/// the early-stop counter does not.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub best: f64,
    halve_patience: usize,
    stop_patience: usize,
    since_improvement: usize,
    since_halving: usize,
    halvings: u32,
}

impl PlateauSchedule {
    pub fn new(lr: f64, halve_patience: usize, stop_patience: usize) -> Self {
        Self {
            lr,
            best: f64::INFINITY,
            halve_patience,
            stop_patience,
            since_improvement: 0,
            since_halving: 0,
            halvings: 0,
        }
    }

    pub fn halvings(&self) -> u32 {
        self.halvings
    }

    pub fn observe(&mut self, loss: f64) -> EpochDecision {
        let improved = loss < self.best - IMPROVEMENT_TOL;
        let mut halved = false;
        if improved {
            self.best = loss;
            self.since_improvement = 0;
            self.since_halving = 0;
        } else {
            self.since_improvement += 1;
            self.since_halving += 1;
            if self.since_halving >= self.halve_patience {
                self.halvings += 1;
                self.lr /= 2.0;
                self.since_halving = 0;
                halved = true;
            }
        }
        EpochDecision {
            improved,
            halved,
            stop: self.since_improvement >= self.stop_patience,
            lr: self.lr,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flat_losses_halve_after_three() {
        let mut s = PlateauSchedule::new(1e-3, 3, 10);
        let lrs: Vec<f64> = [5.0, 5.0, 5.0, 5.0]
            .iter()
            .map(|&l| s.observe(l).lr)
            .collect();
        assert_eq!(lrs, vec![1e-3, 1e-3, 1e-3, 5e-4]);
    }

    #[test]
    fn ten_flat_epochs_stop() {
        let mut s = PlateauSchedule::new(1e-3, 3, 10);
        assert!(s.observe(1.0).improved);
        let mut stops = Vec::new();
        for _ in 0..10 {
            stops.push(s.observe(1.0).stop);
        }
        assert_eq!(stops.iter().filter(|&&x| x).count(), 1);
        assert!(stops[9]);
        assert_eq!(s.halvings(), 3);
        assert_eq!(s.best, 1.0);
    }

    #[test]
    fn tolerance_is_absolute() {
        let mut s = PlateauSchedule::new(1.0, 3, 10);
        s.observe(1.0);
        assert!(!s.observe(1.0 - 0.5e-4).improved);
        assert!(s.observe(1.0 - 2e-4).improved);
    }

    proptest! {
        #[test]
        fn lr_is_power_of_two_fraction(losses in proptest::collection::vec(-20.0f64..20.0, 1..60)) {
            let mut s = PlateauSchedule::new(1e-3, 3, 10);
            let mut prev = s.lr;
            for l in losses {
                let d = s.observe(l);
                prop_assert!(d.lr <= prev);
                prop_assert_eq!(d.lr, 1e-3 * 2f64.powi(-(s.halvings() as i32)));
                prev = d.lr;
            }
        }
    }
}
