use crate::error::{Error, Result};

/// Linear warm-up from 0 followed by cosine annealing, stepped per optimizer
/// update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub steps_per_epoch: usize,
}

impl CosineSchedule {
    pub fn total_steps(&self) -> usize {
        self.total_epochs * self.steps_per_epoch
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup_epochs * self.steps_per_epoch
    }

    /// `base · s / W` during warm-up; afterwards `base · (1 + cos(π p)) / 2`
    /// with `p = (s − W) / (T − 1 − W)`, so the last step reaches 0.
    pub fn lr_at(&self, step: usize) -> Result<f64> {
        let total = self.total_steps();
        if step >= total {
            return Err(Error::Precondition(format!(
                "step {step} outside schedule of {total} steps"
            )));
        }
        let warm = self.warmup_steps();
        if step < warm {
            return Ok(self.base_lr * step as f64 / warm as f64);
        }
        let span = total - 1 - warm;
        let progress = if span == 0 {
            0.0
        } else {
            (step - warm) as f64 / span as f64
        };
        let lr = self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        Ok(lr.max(0.0))
    }
}

pub fn lr_at(schedule: &CosineSchedule, global_step: usize) -> Result<f64> {
    schedule.lr_at(global_step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(steps_per_epoch: usize) -> CosineSchedule {
        CosineSchedule {
            base_lr: 0.001,
            warmup_epochs: 5,
            total_epochs: 50,
            steps_per_epoch,
        }
    }

    #[test]
    fn peak_midpoint_end() {
        let s = sched(1);
        assert_eq!(s.lr_at(0).unwrap(), 0.0);
        assert_eq!(s.lr_at(5).unwrap(), 0.001);
        // cosine phase spans steps 5..=49, midpoint 27
        assert!((s.lr_at(27).unwrap() - 0.0005).abs() < 1e-15);
        assert!(s.lr_at(49).unwrap() < 1e-6);
        assert!(s.lr_at(50).is_err());
    }

    #[test]
    fn monotone_after_warmup() {
        let s = sched(7);
        let lrs: Vec<f64> = (0..s.total_steps()).map(|i| s.lr_at(i).unwrap()).collect();
        for w in lrs[s.warmup_steps()..].windows(2) {
            assert!(w[1] <= w[0]);
        }
        for w in lrs[..=s.warmup_steps()].windows(2) {
            assert!(w[1] > w[0]);
        }
    }
}
