use serde::{Deserialize, Serialize};

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    pub fn new(num_params: usize, lr: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        let step = self.lr * bc2.sqrt() / bc1;
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= step * *m / (v.sqrt() + self.eps);
        }
    }
}

/// Early stopping plus learning-rate reduction on a validation-loss plateau.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlateauScheduler {
    /// Epochs without improvement before stopping.
    pub patience: usize,
    /// Epochs without improvement before multiplying the learning rate by `factor`.
    pub lr_patience: usize,
    pub factor: f32,
    pub min_lr: f32,
    /// Relative improvement required to reset the counters.
    pub min_delta: f64,
    best: f64,
    best_epoch: usize,
    since_lr_drop: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlateauAction {
    Improved,
    Continue,
    ReduceLr,
    Stop,
}

impl PlateauScheduler {
    pub fn new(patience: usize, lr_patience: usize, factor: f32) -> Self {
        Self {
            patience,
            lr_patience,
            factor,
            min_lr: 1e-6,
            min_delta: 1e-4,
            best: f64::INFINITY,
            best_epoch: 0,
            since_lr_drop: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> PlateauAction {
        if loss < self.best - self.min_delta * self.best.abs().min(1.0) || self.best.is_infinite() {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_lr_drop = 0;
            return PlateauAction::Improved;
        }
        self.since_lr_drop += 1;
        if epoch - self.best_epoch >= self.patience {
            PlateauAction::Stop
        } else if self.lr_patience > 0 && self.since_lr_drop >= self.lr_patience {
            self.since_lr_drop = 0;
            PlateauAction::ReduceLr
        } else {
            PlateauAction::Continue
        }
    }

    pub fn reduced(&self, lr: f32) -> f32 {
        (lr * self.factor).max(self.min_lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![3.0f32, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g: Vec<f32> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }

    #[test]
    fn flat_loss_stops_after_patience() {
        let mut s = PlateauScheduler::new(5, 0, 0.5);
        assert_eq!(s.observe(0, 1.0), PlateauAction::Improved);
        let mut stop_at = None;
        for epoch in 1..20 {
            if s.observe(epoch, 1.0) == PlateauAction::Stop {
                stop_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stop_at, Some(5));
    }

    #[test]
    fn lr_reduction() {
        let mut s = PlateauScheduler::new(10, 2, 0.5);
        s.observe(0, 1.0);
        assert_eq!(s.observe(1, 1.0), PlateauAction::Continue);
        assert_eq!(s.observe(2, 1.0), PlateauAction::ReduceLr);
        assert_eq!(s.reduced(0.01), 0.005);
    }
}
